use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::{check_rank, newton, score_and_information, standard_errors, LikelihoodModel};
use crate::dataset::{DoorDataset, ModelSpec};
use crate::error::{DoorError, Result};
use crate::numeric::{expit, log1pexp};

/// Linear predictors beyond this magnitude are treated as separation.
const SEPARATION_ETA: f64 = 30.0;

/// Bernoulli log-likelihood of a binary response on a design matrix.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    design: DMatrix<f64>,
    response: Vec<f64>,
}

impl LogisticModel {
    pub fn new(design: DMatrix<f64>, response: Vec<f64>) -> Self {
        assert_eq!(design.nrows(), response.len());
        Self { design, response }
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    fn linear_predictor(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.design * beta
    }
}

impl LikelihoodModel for LogisticModel {
    const NAME: &'static str = "propensity";

    fn n(&self) -> usize {
        self.response.len()
    }

    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn log_likelihood(&self, beta: &DVector<f64>) -> f64 {
        self.linear_predictor(beta)
            .iter()
            .zip(&self.response)
            .map(|(&eta, &z)| z * eta - log1pexp(eta))
            .sum()
    }

    fn scores(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.linear_predictor(beta);
        let mut s = self.design.clone();
        for (i, mut row) in s.row_iter_mut().enumerate() {
            row *= self.response[i] - expit(eta[i]);
        }
        s
    }

    fn information(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.linear_predictor(beta);
        let mut weighted = self.design.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            let p = expit(eta[i]);
            row *= p * (1.0 - p);
        }
        self.design.transpose() * weighted
    }
}

/// A fitted (or known) propensity score model.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    /// Coefficient names, `(intercept)` first.
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Design matrix used for the fit, intercept column first.
    pub design: DMatrix<f64>,
    /// Per-subject `P(Z = 1 | X)`, after clipping if requested.
    pub pi: Vec<f64>,
    /// Total observed information at `beta`.
    pub information: DMatrix<f64>,
    /// `n x dim` parameter influence vectors `U_{i,ps}`.
    pub influence: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub clip: f64,
    /// Number of subjects whose propensity was clamped.
    pub clipped: usize,
}

impl PropensityFit {
    /// Propensities treated as known constants: intercept-only design with
    /// zero parameter influence.
    pub fn known(pi: Vec<f64>) -> Result<Self> {
        for (index, &p) in pi.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(DoorError::PositivityViolation { index, propensity: p });
            }
        }
        let n = pi.len();
        Ok(Self {
            names: alloc::vec!["(intercept)".to_string()],
            beta: Vec::new(),
            std_errors: Vec::new(),
            design: DMatrix::from_element(n, 1, 1.0),
            pi,
            information: DMatrix::zeros(1, 1),
            influence: DMatrix::zeros(n, 1),
            converged: true,
            iterations: 0,
            clip: 0.0,
            clipped: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    /// Inverse-probability weight `w_i` for the given arm.
    pub fn weight(&self, i: usize, arm: u8) -> f64 {
        if arm == 1 {
            1.0 / self.pi[i]
        } else {
            1.0 / (1.0 - self.pi[i])
        }
    }

    /// Derivative of the arm-`arm` weight with respect to `beta`, scaled by
    /// `scale`, accumulated into `out`.
    ///
    /// `d(1/pi)/d beta = -x exp(-eta)` and `d(1/(1-pi))/d beta = x exp(eta)`.
    pub(crate) fn add_weight_gradient(&self, i: usize, arm: u8, scale: f64, out: &mut DVector<f64>) {
        let p = self.pi[i];
        let factor = if arm == 1 { -(1.0 - p) / p } else { p / (1.0 - p) };
        for j in 0..self.design.ncols() {
            out[j] += scale * factor * self.design[(i, j)];
        }
    }
}

/// Fits `logit P(Z = 1 | X) = beta_0 + beta' X` on the propensity covariates of `spec`.
pub fn fit_logistic(ds: &DoorDataset, spec: &ModelSpec) -> Result<PropensityFit> {
    spec.validate(ds)?;
    let design = ds.design_with_intercept(&spec.propensity_covariates)?;
    let mut names = alloc::vec!["(intercept)".to_string()];
    names.extend(spec.propensity_covariates.iter().cloned());
    check_rank(LogisticModel::NAME, &design, &names)?;

    let response: Vec<f64> = ds.treatments().iter().map(|&t| t as f64).collect();
    let model = LogisticModel::new(design, response);
    let fit = newton(&model, DVector::zeros(model.dim()))?;
    let eta = model.linear_predictor(&fit.theta);
    if eta.iter().any(|e| e.abs() > SEPARATION_ETA) {
        return Err(DoorError::NonConvergence {
            model: LogisticModel::NAME,
            iterations: fit.iterations,
        });
    }
    let si = score_and_information(&model, &fit.theta)?;
    let influence = si
        .influence()
        .ok_or(DoorError::SingularInformation { model: LogisticModel::NAME })?;

    let lo = spec.clip;
    let hi = 1.0 - spec.clip;
    let mut clipped = 0;
    let pi: Vec<f64> = eta
        .iter()
        .map(|&e| {
            let p = expit(e);
            if spec.clip > 0.0 && (p < lo || p > hi) {
                clipped += 1;
                p.clamp(lo, hi)
            } else {
                p
            }
        })
        .collect();
    for (index, &p) in pi.iter().enumerate() {
        if !(p > 0.0 && p < 1.0) {
            return Err(DoorError::PositivityViolation { index, propensity: p });
        }
    }

    Ok(PropensityFit {
        names,
        beta: fit.theta.iter().copied().collect(),
        std_errors: standard_errors(&si.information),
        design: model.design,
        pi,
        information: si.information,
        influence,
        converged: true,
        iterations: fit.iterations,
        clip: spec.clip,
        clipped,
    })
}

impl core::fmt::Display for PropensityFit {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let terms: Vec<String> = self
            .names
            .iter()
            .zip(&self.beta)
            .map(|(n, b)| format!("{n}={b:.4}"))
            .collect();
        write!(f, "logit P(Z=1|X): {}", terms.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn dataset(z: &[i64], x: &[f64]) -> DoorDataset {
        let y: Vec<i64> = z.iter().map(|_| 1).collect();
        DoorDataset::new(2, &y, z, vec!["x".into()], x.to_vec()).unwrap()
    }

    #[test]
    fn intercept_only_matches_closed_form() {
        let z = [1, 1, 0, 0, 0, 1, 0, 1, 0, 0];
        let x = [0.0; 10];
        let ds = dataset(&z, &x);
        let fit = fit_logistic(&ds, &ModelSpec::default()).unwrap();
        assert!((fit.beta[0] - libm::log(0.4 / 0.6)).abs() < 1e-10);
        assert!((fit.beta[0] + 0.4055).abs() < 1e-4);
        assert!(fit.pi.iter().all(|p| (p - 0.4).abs() < 1e-12));
    }

    #[test]
    fn intercept_only_information_is_n_pi_one_minus_pi() {
        let z: Vec<i64> = (0..100).map(|i| (i % 2) as i64).collect();
        let ds = dataset(&z, &[0.0; 100]);
        let fit = fit_logistic(&ds, &ModelSpec::default()).unwrap();
        assert!((fit.information[(0, 0)] - 25.0).abs() < 1e-10);
    }

    #[test]
    fn separated_data_fails() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 - 9.5).collect();
        let z: Vec<i64> = x.iter().map(|&v| (v > 0.0) as i64).collect();
        let ds = dataset(&z, &x);
        let err = fit_logistic(&ds, &ModelSpec::shared(&["x"])).unwrap_err();
        assert!(matches!(err, DoorError::NonConvergence { .. }), "{err:?}");
    }

    #[test]
    fn collinear_design_names_columns() {
        let z = [1, 0, 1, 0, 1, 0];
        let ds = DoorDataset::new(
            2,
            &[1; 6],
            &z,
            vec!["a".into(), "b".into()],
            vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 0.5, 1.0, 1.5, 3.0, 2.5, 5.0],
        )
        .unwrap();
        let err = fit_logistic(&ds, &ModelSpec::shared(&["a", "b"])).unwrap_err();
        assert_eq!(
            err,
            DoorError::RankDeficient {
                model: "propensity",
                columns: vec!["b".into()]
            }
        );
    }

    #[test]
    fn clipping_is_counted() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) / 4.0).collect();
        let z: Vec<i64> = (0..40).map(|i| ((i * 7 + 3) % 11 < (i / 4) as i64 as usize) as i64).collect();
        let ds = dataset(&z, &x);
        let spec = ModelSpec {
            clip: 0.2,
            ..ModelSpec::shared(&["x"])
        };
        let fit = fit_logistic(&ds, &spec).unwrap();
        assert!(fit.clipped > 0);
        assert!(fit.pi.iter().all(|&p| (0.2..=0.8).contains(&p)));
    }
}
