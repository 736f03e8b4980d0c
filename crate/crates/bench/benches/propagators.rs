//! Criterion benchmarks for the numerically heavy kernels: frame
//! transport, propagator integration, and the path-ordering phase.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use adiamag_core::dynamics::{self, Frame, SystemParams};
use adiamag_core::geometry::{self, FieldPath};
use adiamag_core::magtrans;
use adiamag_core::quadrature::linspace;

const TOL: f64 = 1e-10;

fn latitude() -> FieldPath {
    FieldPath::latitude(std::f64::consts::FRAC_PI_3, 1).unwrap()
}

fn params(t_total: f64) -> SystemParams {
    SystemParams::new(2.7, 1.0, 1.0, t_total).unwrap()
}

fn bench_transport_frame(c: &mut Criterion) {
    let path = latitude();
    let mut group = c.benchmark_group("transport_frame");
    for n in [101usize, 1001] {
        let grid = linspace(0.0, 1.0, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, grid| {
            b.iter(|| geometry::transport_frame(&path, grid, TOL).unwrap())
        });
    }
    group.finish();
}

fn bench_integrate_propagator(c: &mut Criterion) {
    let path = latitude();
    let mut group = c.benchmark_group("integrate_propagator");
    group.sample_size(20);
    for t in [100.0, 400.0] {
        let p = params(t);
        group.bench_with_input(BenchmarkId::new("lab", t as u64), &p, |b, p| {
            b.iter(|| dynamics::integrate_propagator(p, &path, Frame::Lab, TOL).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("rotating", t as u64), &p, |b, p| {
            b.iter(|| dynamics::integrate_propagator(p, &path, Frame::Rotating, TOL).unwrap())
        });
    }
    group.finish();
}

fn bench_phi_p(c: &mut Criterion) {
    let path = latitude();
    let k = params(100.0).flux();
    c.bench_function("phi_p", |b| {
        b.iter(|| magtrans::phi_p(&path, 1.0, &k, 1.0, TOL).unwrap())
    });
}

criterion_group!(benches, bench_transport_frame, bench_integrate_propagator, bench_phi_p);
criterion_main!(benches);
