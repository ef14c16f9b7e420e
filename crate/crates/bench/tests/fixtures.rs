use fetalaug::inpaint::InpaintParams;
use fetalaug_bench::{all_ops, bank, phantoms};

#[test]
fn fixtures_build() {
    let ps = phantoms(24, 2);
    assert_eq!(ps.len(), 2);
    let b = bank(&ps, &InpaintParams::default());
    assert_eq!((b.bodies.len(), b.uteri.len()), (2, 2));
    let cfg = all_ops();
    assert_eq!(cfg.spike.p, 1.0);
    assert!(cfg.validate().is_ok());
}
