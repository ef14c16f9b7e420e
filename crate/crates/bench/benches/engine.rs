use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use fetalaug::augment::{
    additive_noise, anisotropize, apply_pipeline, bias_field, gamma_adjust, kspace_spike,
    rotate_sample, scale_sample,
};
use fetalaug::heatmap::{extract, synthesize};
use fetalaug::inpaint::{sample_composite, InpaintParams};
use fetalaug::phantom::{make_phantom, PhantomSpec};
use fetalaug::rng::{substream, Domain};
use fetalaug_bench::{all_ops, bank, phantoms, SEED};
use rayon::prelude::*;

fn pipeline(c: &mut Criterion) {
    let ps = phantoms(64, 4);
    let cfg = all_ops();
    let mut g = c.benchmark_group("pipeline_64");
    g.throughput(Throughput::Elements(1));
    let mut i = 0u64;
    g.bench_function("all_ops", |b| {
        b.iter(|| {
            i += 1;
            let s = &ps[i as usize % ps.len()].sample;
            black_box(apply_pipeline(s, &cfg, &mut substream(SEED, Domain::Augment, i)).unwrap())
        })
    });
    // the throughput gate: a batch of samples spread over a 4-thread pool
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let batch = 16u64;
    g.throughput(Throughput::Elements(batch));
    g.sample_size(10);
    g.bench_function("batch16_4threads", |b| {
        b.iter(|| {
            pool.install(|| {
                (0..batch).into_par_iter().for_each(|i| {
                    let s = &ps[i as usize % ps.len()].sample;
                    black_box(apply_pipeline(s, &cfg, &mut substream(SEED, Domain::Augment, i)).unwrap());
                })
            })
        })
    });
    g.finish();
}

fn ops(c: &mut Criterion) {
    let s = phantoms(64, 1).remove(0).sample;
    let cfg = all_ops();
    let mut g = c.benchmark_group("ops_64");
    let rng = || substream(SEED, Domain::Augment, 0);
    g.bench_function("rotate", |b| b.iter(|| rotate_sample(&s, &mut rng(), cfg.rotation.angle_range_deg).unwrap()));
    g.bench_function("scale", |b| b.iter(|| scale_sample(&s, &mut rng(), cfg.scale.factor_range).unwrap()));
    g.bench_function("bias_field", |b| {
        b.iter(|| bias_field(&s, &mut rng(), cfg.bias_field.order, cfg.bias_field.coeff_range).unwrap())
    });
    g.bench_function("gamma", |b| b.iter(|| gamma_adjust(&s, &mut rng(), cfg.gamma.log_gamma_range).unwrap()));
    g.bench_function("spike", |b| {
        b.iter(|| kspace_spike(&s, &mut rng(), cfg.spike.count_range, cfg.spike.strength_range).unwrap())
    });
    g.bench_function("noise", |b| b.iter(|| additive_noise(&s, &mut rng(), cfg.noise.sigma_frac_range).unwrap()));
    g.bench_function("anisotropy", |b| b.iter(|| anisotropize(&s, &mut rng(), cfg.anisotropy.factor_range).unwrap()));
    g.finish();
}

fn heatmaps(c: &mut Criterion) {
    let s = phantoms(64, 1).remove(0).sample;
    let hm = synthesize(&s.keypoints, s.volume.dims(), 2.0).unwrap();
    let mut g = c.benchmark_group("heatmap_64");
    g.bench_function("synthesize_15", |b| b.iter(|| synthesize(black_box(&s.keypoints), [64; 3], 2.0).unwrap()));
    g.bench_function("extract_15", |b| b.iter(|| extract(black_box(&hm)).unwrap()));
    g.finish();
}

fn inpainting(c: &mut Criterion) {
    let params = InpaintParams::default();
    let ps = phantoms(64, 4);
    let bank = bank(&ps, &params);
    let mut g = c.benchmark_group("inpaint_64");
    let mut i = 0u64;
    g.bench_function("sample_composite", |b| {
        b.iter(|| {
            i += 1;
            black_box(sample_composite(&bank, &params, &mut substream(SEED, Domain::Composite, i)).unwrap())
        })
    });
    g.sample_size(10);
    g.bench_function("build_bank_entry", |b| {
        b.iter_batched(|| &ps[0], |p| black_box(fetalaug_bench::bank(std::slice::from_ref(p), &params)), BatchSize::SmallInput)
    });
    g.finish();
}

fn phantom(c: &mut Criterion) {
    let mut g = c.benchmark_group("phantom");
    g.sample_size(10);
    for side in [64usize, 96] {
        let spec = PhantomSpec { dims: [side; 3], ..PhantomSpec::default() };
        let mut i = 0u64;
        g.bench_function(format!("make_{side}"), |b| {
            b.iter(|| {
                i += 1;
                black_box(make_phantom(&spec, &mut substream(SEED, Domain::Phantom, i)).unwrap())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, pipeline, ops, heatmaps, inpainting, phantom);
criterion_main!(benches);
