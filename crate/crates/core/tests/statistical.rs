//! Large-sample and Monte Carlo checks against known truths.

use door_core::inference::{bootstrap_se, sequential_dichotomization, sequential_dichotomized};
use door_core::rng::stream_rng;
use door_core::simulation::{
    gen_covariates, gen_treatment, mc_true_door, run_replication_study, simulate_dataset,
    OutcomeLink, Scenario, SimConfig, COVARIATES,
};
use door_core::{analyze, fit_logistic, fit_proportional_odds, DoorDataset, Method, ModelSpec};
use rand::Rng;

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

#[test]
fn covariates_follow_their_law() {
    let n = 100_000;
    let x = gen_covariates(n, 0.5, &mut stream_rng(1, 0)).unwrap();
    let bound = 4.0 / (n as f64).sqrt();
    let m: Vec<f64> = (0..4).map(|j| mean(x.iter().map(|r| r[j]))).collect();
    assert!(m[0].abs() < bound && m[1].abs() < bound);
    assert!((m[2] - 0.5).abs() < 0.5 * bound && (m[3] - 0.5).abs() < 0.5 * bound);
    assert!(x.iter().all(|r| r[2] == 0.0 || r[2] == 1.0));

    let corr = |x: &[[f64; 4]]| {
        let a = mean(x.iter().map(|r| r[0]));
        let b = mean(x.iter().map(|r| r[1]));
        let cov = mean(x.iter().map(|r| (r[0] - a) * (r[1] - b)));
        let va = mean(x.iter().map(|r| (r[0] - a).powi(2)));
        let vb = mean(x.iter().map(|r| (r[1] - b).powi(2)));
        cov / (va * vb).sqrt()
    };
    assert!((corr(&x) - 0.5).abs() < 0.05);
    let indep = gen_covariates(n, 0.0, &mut stream_rng(2, 0)).unwrap();
    assert!(corr(&indep).abs() < 0.02);
    assert!(gen_covariates(10, 1.0, &mut stream_rng(2, 0)).is_err());
}

#[test]
fn treatment_prevalence() {
    let x = gen_covariates(1_000_000, 0.5, &mut stream_rng(3, 0)).unwrap();
    let cfg = SimConfig::default();
    let z = gen_treatment(&x, cfg.beta0, &cfg.beta, &mut stream_rng(3, 1));
    let prevalence = mean(z.iter().map(|&v| v as f64));
    assert!((prevalence - 0.40).abs() < 0.01, "prevalence {prevalence}");

    let x = &x[..100_000];
    let z = gen_treatment(x, -0.4, &[0.0; 4], &mut stream_rng(3, 2));
    let expected = 1.0 / (1.0 + 0.4f64.exp());
    assert!((mean(z.iter().map(|&v| v as f64)) - expected).abs() < 4.0 * 0.5 / (x.len() as f64).sqrt());
    let z = gen_treatment(x, -20.0, &cfg.beta, &mut stream_rng(3, 3));
    assert!(z.iter().all(|&v| v == 0));
}

#[test]
fn monte_carlo_truth_grid() {
    for (delta, target, tol) in [(0.0, 0.500, 0.002), (0.2, 0.527, 0.003), (0.4, 0.552, 0.003)] {
        let cfg = SimConfig {
            delta,
            ..SimConfig::default()
        };
        let d = mc_true_door(&cfg, 1_000_000).unwrap();
        assert!((d - target).abs() <= tol, "delta {delta}: {d}");
    }
    let d = mc_true_door(&SimConfig { delta: 0.0, ..SimConfig::default() }, 100_000).unwrap();
    assert!((d - 0.5).abs() < 1e-12);
}

#[test]
fn literal_increment_intercepts_miss_the_published_truth() {
    // Reading the intercepts as monotone increments of P(Y <= k) gives a
    // different (and much smaller) effect than the published 0.552.
    let cfg = SimConfig {
        delta: 0.4,
        link: OutcomeLink::MonotoneIncrements,
        ..SimConfig::default()
    };
    let d = mc_true_door(&cfg, 200_000).unwrap();
    assert!(d > 0.5 && (d - 0.552).abs() > 0.005, "{d}");
}

fn big_sample() -> DoorDataset {
    let cfg = SimConfig {
        n: 100_000,
        ..SimConfig::default()
    };
    simulate_dataset(&cfg, &mut stream_rng(99, 0)).unwrap()
}

#[test]
fn regression_engines_recover_the_generating_parameters() {
    let ds = big_sample();
    let spec = ModelSpec::shared(&COVARIATES);
    let cfg = SimConfig::default();

    let ps = fit_logistic(&ds, &spec).unwrap();
    let truth = [cfg.beta0, cfg.beta[0], cfg.beta[1], cfg.beta[2], cfg.beta[3]];
    for ((b, se), t) in ps.beta.iter().zip(&ps.std_errors).zip(truth) {
        assert!((b - t).abs() <= 3.0 * se, "logistic {b} vs {t} (se {se})");
    }

    // P(Y <= k) = expit(c_k + eta): coefficients are the negated upper-tail effects.
    let of = fit_proportional_odds(&ds, &spec).unwrap();
    let truth = [cfg.delta, cfg.gamma[0], cfg.gamma[1], cfg.gamma[2], cfg.gamma[3]];
    for (j, t) in truth.iter().enumerate() {
        let (b, se) = (-of.theta[3 + j], of.std_errors[3 + j]);
        assert!((b - t).abs() <= 3.0 * se, "{}: {b} vs {t} (se {se})", of.names[3 + j]);
    }
    for (c, t) in of.cumulative_intercepts.iter().zip([-1.0, -0.5, 0.5]) {
        assert!((c - t).abs() < 0.05, "intercept {c} vs {t}");
    }
}

#[test]
fn bootstrap_is_deterministic_and_matches_binomial_delta() {
    let mut rng = stream_rng(8, 0);
    let n = 400;
    let z: Vec<i64> = (0..n).map(|i| (i % 3 == 0) as i64).collect();
    let y: Vec<i64> = z
        .iter()
        .map(|&t| 1 + (rng.random::<f64>() < if t == 1 { 0.6 } else { 0.45 }) as i64)
        .collect();
    let ds = DoorDataset::new(2, &y, &z, vec![], vec![]).unwrap();
    let spec = ModelSpec::default();
    let a = bootstrap_se(&ds, &spec, Method::Crude, 400, 17).unwrap();
    let b = bootstrap_se(&ds, &spec, Method::Crude, 400, 17).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.failures, 0);
    assert!(a.percentile_ci.0 < a.mean && a.mean < a.percentile_ci.1);

    let analytic = analyze(&ds, &spec, Method::Crude).unwrap();
    assert!((a.se / analytic.se - 1.0).abs() < 0.2, "{} vs {}", a.se, analytic.se);
    assert!(bootstrap_se(&ds, &spec, Method::Crude, 50, 17).is_err());
}

#[test]
fn hajek_has_no_analytic_path_but_bootstraps() {
    let cfg = SimConfig { n: 300, ..SimConfig::default() };
    let ds = simulate_dataset(&cfg, &mut stream_rng(4, 0)).unwrap();
    let spec = ModelSpec::shared(&COVARIATES);
    assert!(analyze(&ds, &spec, Method::IptwHajek).is_err());
    let b = bootstrap_se(&ds, &spec, Method::IptwHajek, 100, 1).unwrap();
    assert!(b.se > 0.0 && b.se < 0.1);
}

#[test]
fn dichotomizing_a_binary_outcome_is_the_identity() {
    let cfg = SimConfig { n: 400, ..SimConfig::default() };
    let ds = simulate_dataset(&cfg, &mut stream_rng(5, 0)).unwrap();
    let binary = ds.dichotomize(3).unwrap();
    let spec = ModelSpec::shared(&COVARIATES);
    for method in Method::ANALYTIC {
        let direct = analyze(&binary, &spec, method).unwrap();
        let again = sequential_dichotomized(&binary, &spec, method, 2).unwrap();
        assert!((direct.d_hat - again.d_hat).abs() < 1e-14);
        assert!((direct.se - again.se).abs() < 1e-14);
    }
    assert!(ds.dichotomize(1).is_err());
    assert!(ds.dichotomize(5).is_err());
}

#[test]
fn dichotomized_null_effect_is_covered() {
    // Outcome independent of treatment and covariates at every cut.
    let reps = 500;
    let mut covered = [0usize; 3];
    for r in 0..reps {
        let mut rng = stream_rng(6, r);
        let n = 300;
        let x = gen_covariates(n, 0.5, &mut rng).unwrap();
        let z = gen_treatment(&x, -0.4, &[0.15, -0.3, 0.2, -0.25], &mut rng);
        let y: Vec<i64> = (0..n).map(|_| rng.random_range(1..=4)).collect();
        let z: Vec<i64> = z.into_iter().map(i64::from).collect();
        let names = COVARIATES.iter().map(|s| s.to_string()).collect();
        let ds = DoorDataset::new(4, &y, &z, names, x.into_iter().flatten().collect()).unwrap();
        let rows = sequential_dichotomization(&ds, &ModelSpec::shared(&COVARIATES), Method::DoublyRobust).unwrap();
        assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), [2, 3, 4]);
        for (slot, (_, e)) in covered.iter_mut().zip(&rows) {
            *slot += e.covers(0.5) as usize;
        }
    }
    for c in covered {
        let rate = c as f64 / reps as f64;
        assert!((0.92..=0.98).contains(&rate), "coverage {rate}");
    }
}

#[test]
fn small_study_reports_every_method() {
    let cfg = SimConfig {
        n: 200,
        replicates: 20,
        truth_draws: 100_000,
        scenario: Scenario::BothIncorrect,
        ..SimConfig::default()
    };
    let a = run_replication_study(&cfg).unwrap();
    assert_eq!(a, run_replication_study(&cfg).unwrap());
    assert_eq!(a.rows.len(), 4);
    for r in &a.rows {
        assert!((0.0..=1.0).contains(&r.coverage) && (0.0..=1.0).contains(&r.rejection));
        assert!((r.bias - (r.mean_estimate - a.truth)).abs() < 1e-15);
        assert!(r.empirical_se.is_some());
    }
    let one = run_replication_study(&SimConfig { replicates: 1, ..cfg }).unwrap();
    assert!(one.rows.iter().all(|r| r.empirical_se.is_none()));
}
