//! Noise-synthesis benchmarks: weight precomputation vs per-path reuse.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mildsim_core::rosenblatt::{
    simulate_rosenblatt, synthesis_weights, synthesize_with_weights, BrownianGrid, HurstParameter,
};

fn bench_synthesis(c: &mut Criterion) {
    let h = HurstParameter::new(0.75).unwrap();
    let grid = BrownianGrid::sample(1, 128, 1, 1.0);

    c.bench_function("synthesize_128_cold", |b| {
        b.iter(|| simulate_rosenblatt(h, black_box(&grid), 0).unwrap())
    });

    let weights = synthesis_weights(h, &grid);
    c.bench_function("synthesize_128_shared_weights", |b| {
        b.iter(|| synthesize_with_weights(black_box(&weights), grid.increments(0)))
    });
}

criterion_group!(benches, bench_synthesis);
criterion_main!(benches);
