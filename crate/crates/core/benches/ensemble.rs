use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spde_core::diffusion::DiffusionSpec;
use spde_core::experiments::{contraction, Setup};
use spde_core::grid::Grid;
use spde_core::noise::{NoiseSpec, StateProfile};
use spde_core::par::Execution;
use spde_core::stepper::SolverConfig;

fn setup(n: usize, paths: usize, execution: Execution) -> Setup {
    Setup::new(
        Grid::new(1.0, n).unwrap(),
        DiffusionSpec::porous_floor(1.0, 1.0, 3.0).unwrap(),
        NoiseSpec::multiplicative(n.min(64), 1.0, 1.0, StateProfile::Tanh, 1),
        SolverConfig::new(1e-3, 0.1).with_record_every(10),
        paths,
    )
    .with_execution(execution)
}

fn coupled_ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("coupled_ensemble");
    group.sample_size(10);
    for n in [64, 128] {
        for (label, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            let s = setup(n, 32, exec);
            group.bench_with_input(BenchmarkId::new(label, n), &s, |b, s| {
                b.iter(|| contraction::run_contraction(s, &contraction::CouplingParams::default()).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, coupled_ensemble);
criterion_main!(benches);
