//! Monte Carlo simulation studies of the DOOR estimators.
//!
//! Data-generating process per subject:
//!
//! * `L ~ N_4(0, R)` with unit variances and equicorrelation `rho`;
//!   `X = (L1, L2, I(L3 > 0), I(L4 > 0))`.
//! * `Z ~ Bernoulli(expit(beta0 + beta'X))`.
//! * `Y in 1..=4` from a cumulative-logit model in `gamma'X + delta Z`
//!   (see [`OutcomeLink`]).
//!
//! A misspecified nuisance model keeps only `X1` and `X3`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::Matrix4;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{DoorDataset, ModelSpec};
use crate::error::{DoorError, Result};
use crate::estimators::{door_kernel, Method};
use crate::inference::NuisanceFits;
use crate::numeric::expit;
use crate::rng::{stream_rng, StreamRng, TRUTH_STREAM};

pub const COVARIATES: [&str; 4] = ["x1", "x2", "x3", "x4"];
pub const MISSPECIFIED: [&str; 2] = ["x1", "x3"];
pub const LEVELS: usize = 4;

/// Which nuisance models contain all four covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    BothCorrect,
    PsCorrect,
    PoCorrect,
    BothIncorrect,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::BothCorrect,
        Scenario::PsCorrect,
        Scenario::PoCorrect,
        Scenario::BothIncorrect,
    ];

    pub fn propensity_correct(self) -> bool {
        matches!(self, Scenario::BothCorrect | Scenario::PsCorrect)
    }

    pub fn outcome_correct(self) -> bool {
        matches!(self, Scenario::BothCorrect | Scenario::PoCorrect)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Scenario::BothCorrect => "both-correct",
            Scenario::PsCorrect => "ps-correct",
            Scenario::PoCorrect => "po-correct",
            Scenario::BothIncorrect => "both-incorrect",
        }
    }

    pub fn model_spec(self) -> ModelSpec {
        let pick = |correct: bool| -> &'static [&'static str] {
            if correct {
                &COVARIATES
            } else {
                &MISSPECIFIED
            }
        };
        ModelSpec::with_models(pick(self.propensity_correct()), pick(self.outcome_correct()))
    }

    /// Specification label of `method`'s nuisance models under this scenario.
    pub fn label(self, method: Method) -> &'static str {
        let word = |ok: bool| if ok { "Correct" } else { "Incorrect" };
        match method {
            Method::Crude => "",
            Method::Iptw | Method::IptwHajek => word(self.propensity_correct()),
            Method::GFormula => word(self.outcome_correct()),
            Method::DoublyRobust => match self {
                Scenario::BothCorrect => "Both Correct",
                Scenario::PsCorrect => "PS Correct",
                Scenario::PoCorrect => "PO Correct",
                Scenario::BothIncorrect => "Both Incorrect",
            },
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scenario {
    type Err = DoorError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.tag() == s)
            .ok_or_else(|| DoorError::InvalidConfig(alloc::format!("unknown scenario `{s}`")))
    }
}

/// How `alpha`, `gamma` and `delta` enter the outcome model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OutcomeLink {
    /// `logit P(Y > k) = alpha_k + gamma'X + delta Z`; requires decreasing `alpha`.
    #[default]
    UpperTail,
    /// `logit P(Y <= k) = c_k + gamma'X - delta Z` with monotone cumulative
    /// intercepts `c_1 = alpha_1`, `c_k = c_{k-1} + exp(alpha_k)`.
    MonotoneIncrements,
}

impl OutcomeLink {
    pub fn describe(self) -> &'static str {
        match self {
            OutcomeLink::UpperTail => "logit P(Y>k) = alpha_k + gamma'X + delta*Z",
            OutcomeLink::MonotoneIncrements => {
                "logit P(Y<=k) = alpha_1 + sum_{j=2..k} exp(alpha_j) + gamma'X - delta*Z"
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub replicates: usize,
    pub delta: f64,
    pub beta0: f64,
    pub beta: [f64; 4],
    pub alpha: [f64; 3],
    pub gamma: [f64; 4],
    pub rho: f64,
    pub scenario: Scenario,
    pub link: OutcomeLink,
    pub seed: u64,
    /// Covariate draws for the Monte Carlo truth.
    pub truth_draws: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 500,
            replicates: 2000,
            delta: 0.4,
            beta0: -0.4,
            beta: [0.15, -0.3, 0.2, -0.25],
            alpha: [1.0, 0.5, -0.5],
            gamma: [0.8, -0.4, 0.6, -0.3],
            rho: 0.5,
            scenario: Scenario::BothCorrect,
            link: OutcomeLink::UpperTail,
            seed: 20240601,
            truth_draws: 1_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 50 {
            return Err(DoorError::InvalidConfig(alloc::format!("n must be >= 50, got {}", self.n)));
        }
        if self.replicates == 0 {
            return Err(DoorError::InvalidConfig("replicates must be >= 1".to_string()));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(DoorError::InvalidConfig(alloc::format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if self.link == OutcomeLink::UpperTail && !self.alpha.windows(2).all(|w| w[0] > w[1]) {
            return Err(DoorError::InvalidConfig(
                "upper-tail intercepts must be strictly decreasing".to_string(),
            ));
        }
        covariate_factor(self.rho)?;
        Ok(())
    }

    /// Cell probabilities `P(Y = k | X = x, Z = z)`, `k = 1..4`.
    pub fn cell_probabilities(&self, x: &[f64; 4], z: f64) -> [f64; LEVELS] {
        let lin: f64 = self.gamma.iter().zip(x).map(|(g, v)| g * v).sum();
        let mut cum = [0.0; LEVELS + 1];
        cum[LEVELS] = 1.0;
        match self.link {
            OutcomeLink::UpperTail => {
                for (c, a) in cum[1..LEVELS].iter_mut().zip(&self.alpha) {
                    *c = 1.0 - expit(a + lin + self.delta * z);
                }
            }
            OutcomeLink::MonotoneIncrements => {
                let mut c = self.alpha[0];
                for (k, slot) in cum[1..LEVELS].iter_mut().enumerate() {
                    if k > 0 {
                        c += libm::exp(self.alpha[k]);
                    }
                    *slot = expit(c + lin - self.delta * z);
                }
            }
        }
        let mut cells = [0.0; LEVELS];
        for k in 0..LEVELS {
            cells[k] = cum[k + 1] - cum[k];
            assert!(cells[k] >= 0.0, "negative cell probability {cells:?}");
        }
        cells
    }
}

/// Lower Cholesky factor of the equicorrelation matrix.
fn covariate_factor(rho: f64) -> Result<Matrix4<f64>> {
    let r = Matrix4::from_fn(|i, j| if i == j { 1.0 } else { rho });
    r.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| DoorError::InvalidConfig(alloc::format!("rho = {rho} gives a singular correlation matrix")))
}

fn draw_covariates(factor: &Matrix4<f64>, rng: &mut StreamRng) -> [f64; 4] {
    let e = nalgebra::Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let l = factor * e;
    [l[0], l[1], (l[2] > 0.0) as u8 as f64, (l[3] > 0.0) as u8 as f64]
}

/// Correlated covariates: two continuous, two dichotomized at zero.
pub fn gen_covariates(n: usize, rho: f64, rng: &mut StreamRng) -> Result<Vec<[f64; 4]>> {
    let factor = covariate_factor(rho)?;
    Ok((0..n).map(|_| draw_covariates(&factor, rng)).collect())
}

pub fn gen_treatment(x: &[[f64; 4]], beta0: f64, beta: &[f64; 4], rng: &mut StreamRng) -> Vec<u8> {
    x.iter()
        .map(|row| {
            let eta = beta0 + beta.iter().zip(row).map(|(b, v)| b * v).sum::<f64>();
            (rng.random::<f64>() < expit(eta)) as u8
        })
        .collect()
}

pub fn gen_outcome(x: &[[f64; 4]], z: &[u8], config: &SimConfig, rng: &mut StreamRng) -> Vec<usize> {
    x.iter()
        .zip(z)
        .map(|(row, &t)| {
            let cells = config.cell_probabilities(row, t as f64);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, p) in cells.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k + 1;
                }
            }
            LEVELS
        })
        .collect()
}

/// One simulated dataset with covariate columns `x1..x4`.
pub fn simulate_dataset(config: &SimConfig, rng: &mut StreamRng) -> Result<DoorDataset> {
    let x = gen_covariates(config.n, config.rho, rng)?;
    let z = gen_treatment(&x, config.beta0, &config.beta, rng);
    let y = gen_outcome(&x, &z, config, rng);
    let y: Vec<i64> = y.into_iter().map(|v| v as i64).collect();
    let z: Vec<i64> = z.into_iter().map(|v| v as i64).collect();
    let names = COVARIATES.iter().map(|s| s.to_string()).collect();
    DoorDataset::new(LEVELS, &y, &z, names, x.into_iter().flatten().collect())
}

/// Counterfactual cell distributions `(P(Y^1 = .), P(Y^0 = .))` averaged over
/// `draws` covariate vectors, using exact per-draw cell probabilities.
pub fn mc_counterfactual_cells(config: &SimConfig, draws: usize) -> Result<([f64; LEVELS], [f64; LEVELS])> {
    let factor = covariate_factor(config.rho)?;
    let mut rng = stream_rng(config.seed, TRUTH_STREAM);
    let mut p1 = [0.0; LEVELS];
    let mut p0 = [0.0; LEVELS];
    for _ in 0..draws {
        let x = draw_covariates(&factor, &mut rng);
        let m1 = config.cell_probabilities(&x, 1.0);
        let m0 = config.cell_probabilities(&x, 0.0);
        for k in 0..LEVELS {
            p1[k] += m1[k];
            p0[k] += m0[k];
        }
    }
    for k in 0..LEVELS {
        p1[k] /= draws as f64;
        p0[k] /= draws as f64;
    }
    Ok((p1, p0))
}

pub const MIN_TRUTH_DRAWS: usize = 100_000;

/// Monte Carlo true DOOR probability.
pub fn mc_true_door(config: &SimConfig, draws: usize) -> Result<f64> {
    if draws < MIN_TRUTH_DRAWS {
        return Err(DoorError::InvalidConfig(alloc::format!(
            "truth needs at least {MIN_TRUTH_DRAWS} draws, got {draws}"
        )));
    }
    let (p1, p0) = mc_counterfactual_cells(config, draws)?;
    Ok(door_kernel(&p1, &p0))
}

/// Estimate of one method in one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateEstimate {
    pub method: Method,
    pub d_hat: f64,
    pub se: f64,
    pub ci95: (f64, f64),
}

/// Simulates replicate `index` (stream `(seed, index)`) and runs every analytic method.
pub fn run_replicate(config: &SimConfig, index: u64) -> Result<Vec<ReplicateEstimate>> {
    let mut rng = stream_rng(config.seed, index);
    let ds = simulate_dataset(config, &mut rng)?;
    let spec = config.scenario.model_spec();
    let fits = NuisanceFits::fit(&ds, &spec, &Method::ANALYTIC)?;
    Method::ANALYTIC
        .iter()
        .map(|&method| {
            let e = fits.estimate(&ds, method)?;
            Ok(ReplicateEstimate {
                method,
                d_hat: e.d_hat,
                se: e.se,
                ci95: e.ci95,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    /// Nuisance-model specification label under the study scenario.
    pub label: String,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Empirical standard deviation of the estimates; `None` with one replicate.
    pub empirical_se: Option<f64>,
    /// Average estimated standard error.
    pub mean_see: f64,
    pub coverage: f64,
    /// Fraction of replicates rejecting `D = 0.5` at the 5% level.
    pub rejection: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub n: usize,
    pub delta: f64,
    pub scenario: Scenario,
    pub link: OutcomeLink,
    pub seed: u64,
    pub truth: f64,
    pub replicates: usize,
    pub failures: usize,
    pub rows: Vec<MethodSummary>,
}

impl StudyReport {
    pub fn row(&self, method: Method) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Aggregates replicate results in index order; fails if more than 1% failed.
pub fn summarize_study(
    config: &SimConfig,
    truth: f64,
    results: &[Result<Vec<ReplicateEstimate>>],
) -> Result<StudyReport> {
    let total = results.len();
    let ok: Vec<&Vec<ReplicateEstimate>> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures = total - ok.len();
    if failures * 100 > total || ok.is_empty() {
        return Err(DoorError::TooManyFailures {
            failed: failures,
            total,
        });
    }
    let m = ok.len() as f64;
    let rows = Method::ANALYTIC
        .iter()
        .map(|&method| {
            let ests: Vec<&ReplicateEstimate> = ok
                .iter()
                .map(|r| r.iter().find(|e| e.method == method).expect("every method estimated"))
                .collect();
            let mean = ests.iter().map(|e| e.d_hat).sum::<f64>() / m;
            let empirical_se = (ests.len() > 1).then(|| {
                let ss: f64 = ests.iter().map(|e| (e.d_hat - mean) * (e.d_hat - mean)).sum();
                libm::sqrt(ss / (m - 1.0))
            });
            let frac = |pred: &dyn Fn(&ReplicateEstimate) -> bool| {
                ests.iter().filter(|e| pred(e)).count() as f64 / m
            };
            MethodSummary {
                method,
                label: config.scenario.label(method).to_string(),
                mean_estimate: mean,
                bias: mean - truth,
                empirical_se,
                mean_see: ests.iter().map(|e| e.se).sum::<f64>() / m,
                coverage: frac(&|e| e.ci95.0 <= truth && truth <= e.ci95.1),
                rejection: frac(&|e| e.ci95.0 > 0.5 || e.ci95.1 < 0.5),
            }
        })
        .collect();
    Ok(StudyReport {
        n: config.n,
        delta: config.delta,
        scenario: config.scenario,
        link: config.link,
        seed: config.seed,
        truth,
        replicates: total,
        failures,
        rows,
    })
}

/// Runs the full study sequentially, computing the truth with `config.truth_draws`.
pub fn run_replication_study(config: &SimConfig) -> Result<StudyReport> {
    config.validate()?;
    let truth = mc_true_door(config, config.truth_draws)?;
    let results: Vec<_> = (0..config.replicates as u64)
        .map(|i| run_replicate(config, i))
        .collect();
    summarize_study(config, truth, &results)
}

/// Rejection rates per method across a grid of treatment effects.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    pub n: usize,
    pub scenario: Scenario,
    pub deltas: Vec<f64>,
    pub truths: Vec<f64>,
    /// `(method, label, rejection rate per delta)`.
    pub rows: Vec<(Method, String, Vec<f64>)>,
}

/// Assembles per-delta study reports (same `n` and scenario) into a power table.
pub fn power_table(reports: &[StudyReport]) -> Result<PowerTable> {
    let first = reports
        .first()
        .ok_or_else(|| DoorError::InvalidConfig("empty delta grid".to_string()))?;
    let rows = first
        .rows
        .iter()
        .map(|r| {
            let rates = reports
                .iter()
                .map(|rep| rep.row(r.method).map_or(f64::NAN, |x| x.rejection))
                .collect();
            (r.method, r.label.clone(), rates)
        })
        .collect();
    Ok(PowerTable {
        n: first.n,
        scenario: first.scenario,
        deltas: reports.iter().map(|r| r.delta).collect(),
        truths: reports.iter().map(|r| r.truth).collect(),
        rows,
    })
}

/// The nine-point grid `0, 0.05, ..., 0.4`.
pub fn default_delta_grid() -> Vec<f64> {
    (0..=8).map(|i| i as f64 * 0.05).collect()
}

pub fn run_power_study(base: &SimConfig, deltas: &[f64]) -> Result<PowerTable> {
    let reports = deltas
        .iter()
        .map(|&delta| run_replication_study(&SimConfig { delta, ..base.clone() }))
        .collect::<Result<Vec<_>>>()?;
    power_table(&reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn cells_sum_to_one() {
        let cfg = SimConfig::default();
        for x in [[0.0, 0.0, 0.0, 0.0], [1.5, -2.0, 1.0, 0.0], [-3.0, 3.0, 1.0, 1.0]] {
            for z in [0.0, 1.0] {
                let c = cfg.cell_probabilities(&x, z);
                assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(c.iter().all(|&p| p > 0.0));
            }
        }
    }

    #[test]
    fn null_effect_cells_are_differenced_intercepts() {
        let cfg = SimConfig {
            gamma: [0.0; 4],
            delta: 0.0,
            ..SimConfig::default()
        };
        let upper = [1.0, expit(1.0), expit(0.5), expit(-0.5), 0.0];
        for x in [[0.3, -1.0, 1.0, 0.0], [2.0, 0.5, 0.0, 1.0]] {
            let c = cfg.cell_probabilities(&x, 1.0);
            for k in 0..LEVELS {
                assert!((c[k] - (upper[k] - upper[k + 1])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scenario_specs() {
        let s = Scenario::PsCorrect.model_spec();
        assert_eq!(s.propensity_covariates.len(), 4);
        assert_eq!(s.outcome_covariates, vec!["x1".to_string(), "x3".to_string()]);
        assert_eq!("po-correct".parse::<Scenario>().unwrap(), Scenario::PoCorrect);
        assert!("neither".parse::<Scenario>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { n: 10, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { rho: 1.0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { replicates: 0, ..SimConfig::default() }.validate().is_err());
    }

    #[test]
    fn truth_requires_enough_draws() {
        assert!(mc_true_door(&SimConfig::default(), 10).is_err());
    }
}
