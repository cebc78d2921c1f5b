use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use densekit::gsa::{run_morris, run_sobol, FnSurface, MorrisConfig, SobolConfig};

fn ishigami(x: &[f64]) -> f64 {
    x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin()
}

fn surface() -> FnSurface<fn(&[f64]) -> f64> {
    let pi = std::f64::consts::PI;
    FnSurface::new(vec![(-pi, pi); 3], ishigami as fn(&[f64]) -> f64)
}

fn sobol(c: &mut Criterion) {
    let s = surface();
    let cfg = SobolConfig { base_samples: 1024, bootstrap: 100, ..Default::default() };
    c.bench_function("sobol ishigami N=1024", |b| b.iter(|| run_sobol(black_box(&s), &cfg).unwrap()));
}

fn morris(c: &mut Criterion) {
    let s = surface();
    let cfg = MorrisConfig::default();
    c.bench_function("morris ishigami r=20", |b| b.iter(|| run_morris(black_box(&s), &cfg).unwrap()));
}

criterion_group!(benches, sobol, morris);
criterion_main!(benches);
