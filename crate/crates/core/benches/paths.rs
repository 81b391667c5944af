use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fkpath::diffusion::TimeGrid;
use fkpath::feynmankac::{estimate_propagator_bridge, path_moments, BridgeSettings, EnsembleSettings};
use fkpath::lattice::dst_spec;
use fkpath::wiener::Modes;
use fkpath::{DiffusionSpec, Execution};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bridge_propagator(c: &mut Criterion) {
    let spec = DiffusionSpec::new(1).with_potential(|x| -0.5 * x[0] * x[0]);
    let mut group = c.benchmark_group("bridge_propagator");
    group.sample_size(10);
    for (name, exec) in MODES {
        let s = BridgeSettings { t: 1.0, n_paths: 20_000, modes: Modes::Finite(512), quad_steps: 64, seed: 7, exec };
        group.bench_with_input(BenchmarkId::from_parameter(name), &s, |b, s| {
            b.iter(|| black_box(estimate_propagator_bridge(&spec, &[0.0], &[0.0], s).unwrap().mean))
        });
    }
    group.finish();
}

fn dst_ensemble(c: &mut Criterion) {
    let spec = dst_spec(8, &[0.2]).unwrap();
    let x0 = vec![1.0; 8];
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let mut group = c.benchmark_group("dst_ensemble_moments");
    group.sample_size(10);
    for (name, exec) in MODES {
        let s = EnsembleSettings { grid, n_paths: 4_000, seed: 7, exec };
        group.bench_with_input(BenchmarkId::from_parameter(name), &s, |b, s| {
            b.iter(|| black_box(path_moments(&spec, &x0, s).unwrap().mean[[200, 0]]))
        });
    }
    group.finish();
}

criterion_group!(benches, bridge_propagator, dst_ensemble);
criterion_main!(benches);
