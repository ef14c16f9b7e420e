//! Fixtures shared by the benchmarks.

use fetalaug::inpaint::{build_bank_entry, Bank, InpaintParams};
use fetalaug::phantom::{make_phantom, PhantomSample, PhantomSpec};
use fetalaug::rng::{substream, Domain};
use fetalaug::AugmentConfig;

pub const SEED: u64 = 7;

/// `n` seeded phantoms on a cubic grid of side `side`.
pub fn phantoms(side: usize, n: u64) -> Vec<PhantomSample> {
    let spec = PhantomSpec { dims: [side; 3], ..PhantomSpec::default() };
    (0..n)
        .map(|i| make_phantom(&spec, &mut substream(SEED, Domain::Phantom, i)).expect("phantom"))
        .collect()
}

pub fn bank(ps: &[PhantomSample], params: &InpaintParams) -> Bank {
    let mut bank = Bank::default();
    for (i, p) in ps.iter().enumerate() {
        let m = p.masks();
        let (u, b) = build_bank_entry(
            &p.sample.volume,
            &m.body,
            &m.fluid,
            &p.sample.keypoints,
            params,
            &mut substream(SEED, Domain::Bank, i as u64),
            &format!("p{i}"),
        )
        .expect("bank entry");
        bank.uteri.push(u);
        bank.bodies.push(b);
    }
    bank
}

/// Default ranges with every gate open.
pub fn all_ops() -> AugmentConfig {
    let mut cfg = AugmentConfig::default();
    cfg.set_all_probabilities(1.0);
    cfg
}
