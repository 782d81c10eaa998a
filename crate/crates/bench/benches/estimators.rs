use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ivsel_core::glm::{fit_cca, fit_ipw, SelectionSpec};
use ivsel_core::heckman::{heckman_mle, heckman_two_step};
use ivsel_core::mr::{tsls, MrColumns};
use ivsel_core::numkit::{bivariate_normal_cdf, inverse_mills};
use ivsel_core::sim::{bundled, calibrate_alpha_r, draw_regression, generate_mr, MrData};
use ivsel_core::ttw::{ttw_linear, TtwMode};
use ivsel_core::{Adjuster, Dataset, ModelKind, RngStream};

fn baseline(n: usize) -> Dataset {
    let mut cfg = bundled::load("table1_baseline").unwrap();
    cfg.n = n;
    draw_regression(&cfg, &mut RngStream::new(1, 0)).unwrap().observed
}

fn special(c: &mut Criterion) {
    let xs: Vec<f64> = (0..1000).map(|i| -10.0 + 0.02 * i as f64).collect();
    c.bench_function("inverse_mills/1000", |b| b.iter(|| xs.iter().map(|&x| inverse_mills(black_box(x))).sum::<f64>()));
    c.bench_function("bivariate_normal_cdf/1000", |b| {
        b.iter(|| xs.iter().map(|&x| bivariate_normal_cdf(black_box(x), 0.3, 0.6)).sum::<f64>())
    });
}

fn regression(c: &mut Criterion) {
    let spec = SelectionSpec::new("y", &["x"], &["z"]);
    let mut g = c.benchmark_group("regression");
    g.sample_size(20);
    for n in [1_000, 10_000] {
        let d = baseline(n);
        g.bench_with_input(BenchmarkId::new("cca", n), &d, |b, d| b.iter(|| fit_cca(d, &spec.regression(), ModelKind::Linear)));
        g.bench_with_input(BenchmarkId::new("ipw", n), &d, |b, d| {
            b.iter(|| fit_ipw(d, &spec.regression(), ModelKind::Linear, &["x".into()]))
        });
        g.bench_with_input(BenchmarkId::new("heckman_two_step", n), &d, |b, d| b.iter(|| heckman_two_step(d, &spec)));
        g.bench_with_input(BenchmarkId::new("heckman_mle", n), &d, |b, d| b.iter(|| heckman_mle(d, &spec)));
        g.bench_with_input(BenchmarkId::new("ttw_partial", n), &d, |b, d| b.iter(|| ttw_linear(d, &spec, TtwMode::Partial)));
        g.bench_with_input(BenchmarkId::new("ttw_full", n), &d, |b, d| b.iter(|| ttw_linear(d, &spec, TtwMode::Full)));
    }
    g.finish();
}

fn mendelian(c: &mut Criterion) {
    let mut cfg = bundled::load("table4_tsls_y_r").unwrap();
    cfg.n = 5_000;
    let d = match generate_mr(&cfg, &mut RngStream::new(1, 0)).unwrap() {
        MrData::OneSample(d) => d.observed,
        MrData::TwoSample { .. } => unreachable!(),
    };
    let cols = MrColumns {
        exposure: "x".into(),
        outcome: "y".into(),
        variants: (1..=10).map(|j| format!("g{j}")).collect(),
        instruments: vec!["z".into()],
    };
    let mut g = c.benchmark_group("mr");
    g.sample_size(10);
    g.bench_function("tsls_cca", |b| b.iter(|| tsls(&d, &cols, Adjuster::Cca, 0, &RngStream::new(2, 0))));
    g.bench_function("tsls_heckman_bootstrap_20", |b| {
        b.iter(|| tsls(&d, &cols, Adjuster::Heckman, 20, &RngStream::new(2, 0)))
    });
    g.finish();
}

fn calibration(c: &mut Criterion) {
    let cfg = bundled::load("table1_zy_effect").unwrap();
    let mut g = c.benchmark_group("calibration");
    g.sample_size(10);
    g.bench_function("calibrate_alpha_r", |b| b.iter(|| calibrate_alpha_r(&cfg, 0.5)));
    g.finish();
}

criterion_group!(benches, special, regression, mendelian, calibration);
criterion_main!(benches);
