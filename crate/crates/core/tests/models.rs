use fcwq_core::evaluation::{aggregate_joint_loss, vrate};
use fcwq_core::models::caviar::{fit_caviar_as, CaviarSettings};
use fcwq_core::models::es_caviar::{fit_es_caviar, EsRelation};
use fcwq_core::models::garch::{fit_garch, GarchKind};
use fcwq_core::*;
use rayon::prelude::*;

fn gjr_params(p: &fcwq_core::models::garch::GarchParams) -> [f64; 5] {
    [p.omega, p.alpha1, p.gamma, p.beta, p.nu]
}

/// Each estimate lies within three cross-replication standard deviations of
/// the truth, and the mean bias is small relative to that spread.
#[test]
fn gjr_parameters_are_recovered() {
    let reps = 100;
    let truth = gjr_params(&Dgp::default_params(DgpKind::GjrT));
    let opt = OptimizerSettings::default();
    let est: Vec<[f64; 5]> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let sim = simulate(&Dgp::new(DgpKind::GjrT, 5000, 9000 + k as u64), &[0.025]).unwrap();
            gjr_params(&fit_garch(sim.series.returns(), GarchKind::Gjr, &opt, None).unwrap().params)
        })
        .collect();
    let names = ["omega", "alpha1", "gamma", "beta", "nu"];
    for (p, name) in names.iter().enumerate() {
        let x: Vec<f64> = est.iter().map(|e| e[p]).collect();
        let mean = x.iter().sum::<f64>() / reps as f64;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        let inside = x.iter().filter(|v| (*v - truth[p]).abs() <= 3.0 * sd).count();
        assert!(inside >= 95, "{name}: {inside}/{reps} within 3 sd (sd {sd:.4})");
        assert!((mean - truth[p]).abs() <= sd, "{name}: mean {mean:.4} vs truth {:.4}, sd {sd:.4}", truth[p]);
    }
}

#[test]
fn caviar_in_sample_violation_rate_is_near_alpha() {
    let alpha = QuantileLevel::new(0.025).unwrap();
    let opt = OptimizerSettings::default();
    for seed in [31, 32, 33] {
        let sim = simulate(&Dgp::new(DgpKind::GjrT, 1000, seed), &[0.025]).unwrap();
        let fit = fit_caviar_as(sim.series.returns(), alpha, &CaviarSettings::default(), &opt, seed, None).unwrap();
        let v = vrate(sim.series.returns(), &fit.q_path).unwrap();
        assert!((0.0125..=0.0375).contains(&v), "seed {seed}: in-sample VRate {v}");
    }
}

#[test]
fn es_caviar_beats_a_fixed_es_to_var_ratio() {
    let alpha = QuantileLevel::new(0.025).unwrap();
    let opt = OptimizerSettings::default();
    let settings = CaviarSettings { starts: 2000, ..CaviarSettings::default() };
    let reps = 50;
    let wins: usize = (0..reps)
        .into_par_iter()
        .map(|k| {
            let seed = 4000 + k as u64;
            let sim = simulate(&Dgp::new(DgpKind::GjrT, 1000, seed), &[0.025]).unwrap();
            let r = sim.series.returns();
            let cav = fit_caviar_as(r, alpha, &settings, &opt, seed, None).unwrap();
            let es = fit_es_caviar(r, alpha, EsRelation::Multiplicative, &cav, &opt, seed, None).unwrap();
            let naive: Vec<f64> = cav.q_path.iter().map(|q| 1.2 * q).collect();
            let fitted = aggregate_joint_loss(r, &es.q_path, &es.es_path, alpha).unwrap();
            let baseline = aggregate_joint_loss(r, &cav.q_path, &naive, alpha).unwrap();
            usize::from(fitted <= baseline)
        })
        .sum();
    assert!(wins * 10 >= reps * 6, "ES-CAViaR won {wins}/{reps}");
}

#[test]
fn universe_slice_shape_order_and_determinism() {
    let sim = simulate(&Dgp::new(DgpKind::GjrT, 600, 5), &[0.025]).unwrap();
    let grid = make_grid(QuantileLevel::new(0.025).unwrap(), 0.005, 3).unwrap();
    let settings = UniverseSettings { models: ModelKind::ALL.to_vec(), es_benchmarks: false, ..UniverseSettings::default() };
    let opt = OptimizerSettings::default();
    let fc = |state: &mut UniverseState| {
        forecast_universe(sim.series.returns(), grid.levels(), &settings, &opt, 1, state, true).unwrap()
    };
    let a = fc(&mut UniverseState::new());
    assert_eq!(a.models.len(), 8);
    for f in &a.models {
        assert_eq!(f.var.len(), 3);
        let paths = f.insample.as_ref().unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths.iter().all(|p| p.len() == 600));
        assert!(f.flag.is_none(), "{:?}: {:?}", f.model, f.flag);
    }
    for f in a.models.iter().filter(|f| matches!(f.model, ModelKind::GjrGarchT | ModelKind::EgarchT)) {
        assert!(f.var[0] <= f.var[1] && f.var[1] <= f.var[2], "{:?}: {:?}", f.model, f.var);
        let es = f.es.as_ref().unwrap();
        assert!(es.iter().zip(&f.var).all(|(e, v)| e < v));
    }
    let b = fc(&mut UniverseState::new());
    assert_eq!(a, b);
}
