use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use patchmc::fitting::fit_erlang;
use patchmc::mapgen::{gaussian_blur, skeletonize};
use patchmc::patches::{jenks_cluster, BinCounts};
use patchmc::pipeline::{self, PipelineParams};
use patchmc::synth::SynthSpec;
use patchmc::{presets, Erlang, Simulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simulator(c: &mut Criterion) {
    let p = presets::airlink_midday();
    let model = p.sim_model(p.sim_config(1)).unwrap();
    let mut sim = Simulator::new(&model);
    c.bench_function("simulator step (airlink)", |b| {
        b.iter(|| black_box(sim.step()))
    });
}

fn jenks(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let counts = BinCounts {
        counts: (0..50).map(|_| rng.random_range(100..5000)).collect(),
    };
    c.bench_function("jenks gamma=50 n=10", |b| {
        b.iter(|| jenks_cluster(black_box(&counts), 10).unwrap())
    });
}

fn erlang(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = Erlang::new(40, 0.08);
    let obs: Vec<f64> = (0..2000).map(|_| d.sample(&mut rng)).collect();
    c.bench_function("fit_erlang 2000 obs k=40", |b| {
        b.iter(|| fit_erlang(black_box(&obs)).unwrap())
    });
}

fn mapgen(c: &mut Criterion) {
    let (ts, _) = SynthSpec::eight_patch_loop(7).generate().unwrap();
    let p = PipelineParams::default();
    let heat = pipeline::heatmap(&ts, &p).unwrap();
    let blurred = gaussian_blur(&heat, p.sigma);
    let max = blurred.max();
    let mut g = c.benchmark_group("mapgen");
    g.sample_size(10);
    g.bench_function("blur 1024 cells", |b| {
        b.iter(|| gaussian_blur(black_box(&heat), p.sigma))
    });
    g.bench_function("skeletonize", |b| {
        b.iter(|| skeletonize(black_box(&blurred), p.tau * max, p.eta * max).unwrap())
    });
    g.finish();
}

criterion_group!(benches, simulator, jenks, erlang, mapgen);
criterion_main!(benches);
