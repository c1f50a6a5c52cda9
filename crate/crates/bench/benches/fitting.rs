use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use robustfit_bench::synthetic_model;
use robustfit_core::diagnostics::{influence_curves, GridSpec};
use robustfit_core::mixture::mixture_sf;
use robustfit_core::{fit, fit_mle, infer, CurveFamily, FitOptions, MixtureMethod, Objective, SigmaConvention};

fn fitting(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    for fam in [CurveFamily::LogLogistic4, CurveFamily::LogLogistic5] {
        let model = synthetic_model(60, fam);
        group.bench_with_input(BenchmarkId::new("tsallis-1.5", fam.name()), &model, |b, m| {
            b.iter(|| fit(black_box(m), Objective::tsallis(1.5).unwrap(), &FitOptions::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mle", fam.name()), &model, |b, m| {
            b.iter(|| fit_mle(black_box(m), &FitOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn post_fit(c: &mut Criterion) {
    let model = synthetic_model(60, CurveFamily::LogLogistic5);
    let f = fit(&model, Objective::tsallis(1.5).unwrap(), &FitOptions::default()).unwrap();
    c.bench_function("infer", |b| b.iter(|| infer(black_box(&model), &f, SigmaConvention::Variance, 0.95).unwrap()));
    c.bench_function("influence_curves", |b| {
        b.iter(|| influence_curves(black_box(&model), &f, 41.0, &GridSpec::default()).unwrap())
    });
    let weights = [1.3, 0.8, 0.4];
    c.bench_function("mixture_sf/simulation", |b| {
        b.iter(|| mixture_sf(black_box(&weights), 3.0, &MixtureMethod::default()))
    });
    c.bench_function("mixture_sf/imhof", |b| b.iter(|| mixture_sf(black_box(&weights), 3.0, &MixtureMethod::Imhof)));
}

criterion_group!(benches, fitting, post_fit);
criterion_main!(benches);
