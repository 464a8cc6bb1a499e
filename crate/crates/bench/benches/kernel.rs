//! Throughput of the hot paths: the slit-map kernel, arrival generation,
//! the event engine, and the quadrature oracles.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shl_core::conformal::{
    drift_closed_form, drift_integral, slit_derivative, slit_increment, QuadratureSpec, TailMode,
};
use shl_core::process::{evolve, sample_arrivals, DriftMode, TrackedPoint};
use shl_core::Complex;

fn bench_kernel(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs: Vec<(f64, Complex)> = (0..4096)
        .map(|_| {
            let x = (rng.gen::<f64>() - 0.5) * 2e3;
            let z = Complex::new((rng.gen::<f64>() - 0.5) * 2e3, rng.gen::<f64>() * 100.0);
            (x, z)
        })
        .collect();
    let mut group = c.benchmark_group("kernel");
    group.throughput(Throughput::Elements(inputs.len() as u64));
    group.bench_function("slit_increment", |b| {
        b.iter(|| {
            let mut acc = Complex::new(0.0, 0.0);
            for &(x, z) in &inputs {
                acc += slit_increment(black_box(x), black_box(z)).unwrap();
            }
            acc
        })
    });
    group.bench_function("slit_derivative", |b| {
        b.iter(|| {
            let mut acc = Complex::new(0.0, 0.0);
            for &(x, z) in &inputs {
                acc += slit_derivative(black_box(x), black_box(z)).unwrap();
            }
            acc
        })
    });
    group.bench_function("drift_closed_form", |b| {
        b.iter(|| {
            let mut acc = Complex::new(0.0, 0.0);
            for &(_, z) in &inputs {
                acc += drift_closed_form(black_box(z), -64.0, 64.0).unwrap();
            }
            acc
        })
    });
    group.finish();
}

fn bench_stream(c: &mut Criterion) {
    let mut group = c.benchmark_group("stream");
    for t in [4.0, 16.0] {
        let m = shl_core::process::auto_window(t);
        let area = 2.0 * m * t;
        group.throughput(Throughput::Elements(area as u64));
        group.bench_with_input(BenchmarkId::new("sample_arrivals", t as u64), &t, |b, &t| {
            let mut id = 0u64;
            b.iter(|| {
                id += 1;
                sample_arrivals(-m, m, t, 7, id).unwrap().arrivals.len()
            })
        });
    }
    group.finish();
}

fn bench_evolve(c: &mut Criterion) {
    let t = 8.0;
    let m = shl_core::process::auto_window(t);
    let stream = sample_arrivals(-m, m, t, 7, 0).unwrap();
    let mut group = c.benchmark_group("evolve");
    for n_points in [1usize, 32] {
        let points: Vec<TrackedPoint> =
            (0..n_points).map(|j| TrackedPoint::at(j as f64 * 0.25, 0.0)).collect();
        group.throughput(Throughput::Elements((stream.arrivals.len() * n_points) as u64));
        group.bench_with_input(
            BenchmarkId::new("asymptotic", n_points),
            &points,
            |b, points| {
                b.iter(|| evolve(&stream, points, DriftMode::Asymptotic, &[t]).unwrap())
            },
        );
    }
    let origin = [TrackedPoint::at(0.0, 0.0)];
    group.throughput(Throughput::Elements(stream.arrivals.len() as u64));
    group.bench_function("exact_compensator", |b| {
        b.iter(|| evolve(&stream, &origin, DriftMode::ExactQuadrature, &[t]).unwrap())
    });
    group.finish();
}

fn bench_quadrature(c: &mut Criterion) {
    let spec = QuadratureSpec { half_width: 1e6, rel_tol: 1e-9, tail_mode: TailMode::Series };
    c.bench_function("drift_integral_1e6", |b| {
        b.iter(|| drift_integral(black_box(Complex::new(0.0, 5.0)), &spec).unwrap())
    });
}

criterion_group!(benches, bench_kernel, bench_stream, bench_evolve, bench_quadrature);
criterion_main!(benches);
