use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use tractoria::frenet::curvatures;
use tractoria::nullcurves::lorentz_null;
use tractoria::tractor::{default_order, projective_reparametrize, Analysis};
use tractoria::Jet;
use tractoria_bench::{generic, helix, null_curve};

fn jets(c: &mut Criterion) {
    let mut g = c.benchmark_group("jet");
    for k in [8usize, 16, 32] {
        let a = Jet::from_coeffs((0..=k).map(|i| 1.0 / (i as f64 + 1.0)).collect());
        let b = Jet::from_coeffs((0..=k).map(|i| (i as f64).sin()).collect());
        g.bench_with_input(BenchmarkId::new("mul", k), &k, |bn, _| bn.iter(|| black_box(&a) * black_box(&b)));
        g.bench_with_input(BenchmarkId::new("recip", k), &k, |bn, _| bn.iter(|| black_box(&a).recip()));
    }
    g.finish();
}

fn analysis(c: &mut Criterion) {
    let mut g = c.benchmark_group("analysis");
    let (ms, cs) = helix();
    g.bench_function("flat helix n=3", |b| b.iter(|| Analysis::new(&ms, &cs, 0.3, 9, Some(0)).unwrap()));
    for n in [3usize, 4] {
        let (ms, cs) = generic(n, 7);
        let k = default_order(n, ms.signature());
        g.bench_with_input(BenchmarkId::new("curved", n), &n, |b, _| {
            b.iter(|| Analysis::new(&ms, &cs, 0.1, k, Some(0)).unwrap())
        });
    }
    g.finish();
}

fn pipelines(c: &mut Criterion) {
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(20);
    let (ms, cs) = generic(4, 7);
    g.bench_function("frenet curved n=4", |b| b.iter(|| curvatures(&ms, &cs, 0.1, 10).unwrap()));
    let (ms, cs) = null_curve(4);
    g.bench_function("lorentz null n=4", |b| b.iter(|| lorentz_null(&ms, &cs, 0.1, 13).unwrap()));
    let (ms, cs) = helix();
    g.bench_function("projective parameter, 3 points", |b| {
        b.iter(|| projective_reparametrize(&ms, &cs, &[0.0, 0.4, 0.8], 9, Some(0)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, jets, analysis, pipelines);
criterion_main!(benches);
