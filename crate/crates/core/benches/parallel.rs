//! Sequential against parallel execution on the two batch workloads:
//! static multistart and the cubic1d bifurcation sweep.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use turnpike::analysis::{sweep, SweepConfig};
use turnpike::exec::Execution;
use turnpike::ocp::{static_multistart, SearchBox};
use turnpike::registry;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn multistart(c: &mut Criterion) {
    let p = registry::exa();
    let region = SearchBox::cube(2, 3.0);
    let mut group = c.benchmark_group("static_multistart_exa_256");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| static_multistart(&p, &region, 256, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn bifurcation_sweep(c: &mut Criterion) {
    let p = registry::cubic1d();
    let extremals = static_multistart(&p, &SearchBox::cube(1, 3.0), 64, 1, Execution::Sequential).unwrap().extremals;
    let x0s: Vec<DVector<f64>> = (0..=20).map(|k| DVector::from_element(1, 1.1 + 0.005 * k as f64)).collect();
    let x1s = [DVector::from_element(1, 1.0)];
    let mut group = c.benchmark_group("sweep_cubic1d_21");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SweepConfig { exec, ..SweepConfig::new(2.0) };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep(&p, &x0s, &x1s, &extremals, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, multistart, bifurcation_sweep);
criterion_main!(benches);
