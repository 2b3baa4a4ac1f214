//! Evolution-operator benchmarks: transition-matrix table construction
//! and two-parameter lookups.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mildsim_core::evolution::{assemble_generator, GalerkinSpace, PropagatorPair};

fn bench_propagation(c: &mut Criterion) {
    let space = GalerkinSpace::new(4).unwrap();

    c.bench_function("propagator_table_n100", |b| {
        b.iter(|| {
            let gen = assemble_generator(&space, |t| 0.1 * t.sqrt());
            PropagatorPair::compute(black_box(&gen), 1.0, 100, 0.01)
        })
    });

    let gen = assemble_generator(&space, |t| 0.1 * t.sqrt());
    let pair = PropagatorPair::compute(&gen, 1.0, 100, 0.01);
    c.bench_function("two_parameter_lookup", |b| {
        b.iter(|| black_box(&pair).g(black_box(80), black_box(25)))
    });
}

criterion_group!(benches, bench_propagation);
criterion_main!(benches);
