use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stablelab::drift::{DriftField, DriftKind};
use stablelab::grid::UniformGrid;
use stablelab::parametrix::{duhamel_solve, SolverGrid};
use stablelab::sim::{euler_paths, EulerConfig, StableSampler};
use stablelab::stable_density::ExactKernel;
use stablelab::{BesovIndices, Exec, StableParams};
use std::hint::black_box;

const MODES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn params() -> StableParams {
    StableParams::new(1.5, 1).unwrap()
}

fn smooth_field() -> DriftField {
    DriftField::builtin(
        &params(),
        BesovIndices::bounded(-0.1),
        0.5,
        DriftKind::Smooth {
            amplitude: 1.0,
            frequency: 1.0,
        },
    )
}

fn euler(c: &mut Criterion) {
    let sampler = StableSampler::new(&params()).unwrap();
    let drift = smooth_field().mollify(4);
    let cfg = EulerConfig {
        x0: 0.0,
        start: 0.0,
        horizon: 0.5,
        steps: 32,
        paths: 50_000,
        seed: 1,
        keep_paths: false,
    };
    let mut g = c.benchmark_group("euler");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| euler_paths(&sampler, &drift, black_box(&cfg), exec).unwrap())
        });
    }
    g.finish();
}

fn solver(c: &mut Criterion) {
    let drift = smooth_field().mollify(4);
    let grid = SolverGrid {
        points: 1 << 12,
        steps: 60,
        grading: 6,
        outputs: 4,
        ..SolverGrid::default()
    };
    let mut g = c.benchmark_group("duhamel_solve");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| duhamel_solve(&params(), &drift, 0.0, 0.0, 0.5, black_box(&grid), exec).unwrap())
        });
    }
    g.finish();
}

fn kernel_grid(c: &mut Criterion) {
    let kernel = ExactKernel::new(&params()).unwrap();
    let grid = UniformGrid::centered(0.0, 20.0, 4001);
    let mut g = c.benchmark_group("kernel_grid");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| kernel.grid_1d(black_box(0.7), 0.0, &grid, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, euler, solver, kernel_grid);
criterion_main!(benches);
