use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fcwq_core::models::caviar::{fit_caviar_as, CaviarSettings};
use fcwq_core::models::garch::{fit_garch, GarchKind};
use fcwq_core::*;

fn sample(t: usize) -> Simulation {
    simulate(&Dgp::new(DgpKind::GjrT, t, 11), &[0.005, 0.015, 0.025]).unwrap()
}

fn scoring(c: &mut Criterion) {
    let sim = sample(1000);
    let alpha = QuantileLevel::new(0.025).unwrap();
    let (r, var, es) = (sim.series.returns(), &sim.var[2], &sim.es[2]);
    c.bench_function("al_joint_score_1000", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for t in 0..r.len() {
                acc += al_joint_score(r[t], RiskForecast::new(var[t], es[t]), alpha).unwrap();
            }
            black_box(acc)
        })
    });
}

fn model_fits(c: &mut Criterion) {
    let sim = sample(1000);
    let r = sim.series.returns();
    let opt = OptimizerSettings::default();
    let mut g = c.benchmark_group("model_fit_n1000");
    g.sample_size(10);
    g.bench_function("gjr_garch_t_cold", |b| b.iter(|| fit_garch(black_box(r), GarchKind::Gjr, &opt, None).unwrap()));
    let warm = fit_garch(r, GarchKind::Gjr, &opt, None).unwrap().params;
    g.bench_function("gjr_garch_t_warm", |b| {
        b.iter(|| fit_garch(black_box(r), GarchKind::Gjr, &opt, Some(&warm)).unwrap())
    });
    let alpha = QuantileLevel::new(0.025).unwrap();
    let settings = CaviarSettings::default();
    g.bench_function("caviar_as_cold", |b| {
        b.iter(|| fit_caviar_as(black_box(r), alpha, &settings, &opt, 3, None).unwrap())
    });
    g.finish();
}

fn estimation_steps(c: &mut Criterion) {
    let n = 1000;
    let sim = sample(n);
    let r = sim.series.returns();
    let opt = OptimizerSettings::default();
    let alpha = QuantileLevel::new(0.025).unwrap();
    // three noisy copies of the true quantile stand in for a universe
    let x: Vec<f64> = (0..n)
        .flat_map(|t| {
            let q = sim.var[2][t];
            [q * 0.9, q, q * 1.1 + 0.05 * ((t % 7) as f64 - 3.0)]
        })
        .collect();
    let combined: Vec<f64> = (0..n).flat_map(|t| [sim.var[0][t], sim.var[1][t], sim.var[2][t]]).collect();

    let mut g = c.benchmark_group("estimation_n1000");
    g.sample_size(10);
    g.bench_function("combination_weights_3_models", |b| {
        b.iter(|| estimate_combination_weights(black_box(&x), 3, r, alpha, &opt, 5, 1, None).unwrap())
    });
    g.bench_function("wq_params_m3", |b| {
        b.iter(|| estimate_wq_params(black_box(&combined), 3, r, alpha, &opt, 20, 5, None).unwrap())
    });
    g.finish();
}

criterion_group!(benches, scoring, model_fits, estimation_steps);
criterion_main!(benches);
