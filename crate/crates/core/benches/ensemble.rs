use bornchain::engine::Ensemble;
use bornchain::{IntensityState, TransitionModel};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn ensembles(c: &mut Criterion) {
    let cases = [
        ("linear_6_14", TransitionModel::linear(), vec![6, 14]),
        ("uniform_3_7", TransitionModel::uniform(), vec![3, 7]),
        ("linear_4_4_4", TransitionModel::linear(), vec![4, 4, 4]),
    ];
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    for (name, model, a) in cases {
        let ensemble = Ensemble::new(IntensityState::new(a).unwrap(), model, 20_000, 42);
        group.bench_with_input(BenchmarkId::new("sequential", name), &ensemble, |b, e| {
            b.iter(|| e.run_sequential().unwrap())
        });
        group.bench_with_input(BenchmarkId::new("parallel", name), &ensemble, |b, e| {
            b.iter(|| e.run_parallel().unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ensembles);
criterion_main!(benches);
