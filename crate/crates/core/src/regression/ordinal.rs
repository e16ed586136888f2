//! Pooled proportional-odds model with monotone intercepts.
//!
//! `P(Y <= k | x) = expit(c_k + x'b)` for `k = 1..K-1` where the cumulative
//! intercepts are `c_1 = a_1` and `c_k = c_{k-1} + exp(a_k)`. The raw
//! parameter vector is `theta = (a_1, ..., a_{K-1}, b)`; every iterate maps
//! to strictly increasing cumulative intercepts and therefore to valid cell
//! probabilities.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::{check_rank, newton, score_and_information, standard_errors, LikelihoodModel};
use crate::dataset::{DoorDataset, ModelSpec};
use crate::error::{DoorError, Result};
use crate::numeric::{expit, logit};

#[derive(Debug, Clone)]
pub struct OrdinalModel {
    levels: usize,
    /// `n x q` regressors (no intercept).
    design: DMatrix<f64>,
    /// Outcomes in `1..=levels`.
    outcome: Vec<usize>,
}

/// Cumulative probabilities `F_0..F_K` and their gradients for one linear predictor.
struct Cumulative {
    f: Vec<f64>,
    /// `grad[k]` is `dF_k / dtheta`; zero for `k = 0` and `k = K`.
    grad: Vec<DVector<f64>>,
}

impl OrdinalModel {
    pub fn new(levels: usize, design: DMatrix<f64>, outcome: Vec<usize>) -> Self {
        assert!(levels >= 2);
        assert_eq!(design.nrows(), outcome.len());
        Self {
            levels,
            design,
            outcome,
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    fn n_intercepts(&self) -> usize {
        self.levels - 1
    }

    /// Cumulative intercepts `c_1..c_{K-1}` implied by raw parameters.
    pub fn cumulative_intercepts(&self, theta: &DVector<f64>) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.n_intercepts());
        let mut acc = theta[0];
        c.push(acc);
        for j in 1..self.n_intercepts() {
            acc += libm::exp(theta[j]);
            c.push(acc);
        }
        c
    }

    /// Raw intercept parameters reproducing strictly increasing cumulative intercepts.
    pub fn raw_intercepts(cumulative: &[f64]) -> Vec<f64> {
        let mut a = vec![cumulative[0]];
        for w in cumulative.windows(2) {
            a.push(libm::log(w[1] - w[0]));
        }
        a
    }

    fn eta(&self, theta: &DVector<f64>, row: &[f64]) -> f64 {
        let off = self.n_intercepts();
        row.iter().enumerate().map(|(j, x)| x * theta[off + j]).sum()
    }

    fn cumulative(&self, theta: &DVector<f64>, row: &[f64], with_grad: bool) -> Cumulative {
        let k1 = self.n_intercepts();
        let d = k1 + row.len();
        let c = self.cumulative_intercepts(theta);
        let eta = self.eta(theta, row);
        let mut f = Vec::with_capacity(self.levels + 1);
        let mut grad = Vec::new();
        f.push(0.0);
        if with_grad {
            grad.push(DVector::zeros(d));
        }
        for k in 1..=k1 {
            let fk = expit(c[k - 1] + eta);
            f.push(fk);
            if with_grad {
                let dens = fk * (1.0 - fk);
                let mut g = DVector::zeros(d);
                g[0] = dens;
                for j in 1..k {
                    g[j] = dens * libm::exp(theta[j]);
                }
                for (j, x) in row.iter().enumerate() {
                    g[k1 + j] = dens * x;
                }
                grad.push(g);
            }
        }
        f.push(1.0);
        if with_grad {
            grad.push(DVector::zeros(d));
        }
        Cumulative { f, grad }
    }

    /// Cell probabilities `P(Y = k | x)`, `k = 1..K`, for one regressor row.
    pub fn cell_probabilities(&self, theta: &DVector<f64>, row: &[f64]) -> Vec<f64> {
        let cum = self.cumulative(theta, row, false);
        cum.f.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `K x dim` Jacobian of the cell probabilities for one regressor row.
    pub fn cell_jacobian(&self, theta: &DVector<f64>, row: &[f64]) -> DMatrix<f64> {
        let cum = self.cumulative(theta, row, true);
        let d = self.dim();
        DMatrix::from_fn(self.levels, d, |k, j| cum.grad[k + 1][j] - cum.grad[k][j])
    }

    fn row(&self, i: usize) -> Vec<f64> {
        self.design.row(i).iter().copied().collect()
    }
}

impl LikelihoodModel for OrdinalModel {
    const NAME: &'static str = "outcome";

    fn n(&self) -> usize {
        self.outcome.len()
    }

    fn dim(&self) -> usize {
        self.n_intercepts() + self.design.ncols()
    }

    fn log_likelihood(&self, theta: &DVector<f64>) -> f64 {
        (0..self.n())
            .map(|i| {
                let cum = self.cumulative(theta, &self.row(i), false);
                let y = self.outcome[i];
                libm::log(cum.f[y] - cum.f[y - 1])
            })
            .sum()
    }

    fn scores(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n(), self.dim());
        for i in 0..self.n() {
            let cum = self.cumulative(theta, &self.row(i), true);
            let y = self.outcome[i];
            let m = cum.f[y] - cum.f[y - 1];
            let g = (&cum.grad[y] - &cum.grad[y - 1]) / m;
            s.set_row(i, &g.transpose());
        }
        s
    }

    fn information(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let k1 = self.n_intercepts();
        let mut info = DMatrix::zeros(d, d);
        for i in 0..self.n() {
            let row = self.row(i);
            let cum = self.cumulative(theta, &row, true);
            let y = self.outcome[i];
            let m = cum.f[y] - cum.f[y - 1];
            let score = (&cum.grad[y] - &cum.grad[y - 1]) / m;
            // Hessian of m = F_y - F_{y-1}; F_0 and F_K are constants.
            let mut hess_m = DMatrix::zeros(d, d);
            for (k, sign) in [(y, 1.0), (y - 1, -1.0)] {
                if k == 0 || k == self.levels {
                    continue;
                }
                let fk = cum.f[k];
                let dens = fk * (1.0 - fk);
                // d(c_k + eta)/dtheta
                let mut u = DVector::zeros(d);
                u[0] = 1.0;
                for j in 1..k {
                    u[j] = libm::exp(theta[j]);
                }
                for (j, x) in row.iter().enumerate() {
                    u[k1 + j] = *x;
                }
                let curvature = dens * (1.0 - 2.0 * fk);
                hess_m += &u * u.transpose() * (sign * curvature);
                for j in 1..k {
                    hess_m[(j, j)] += sign * dens * libm::exp(theta[j]);
                }
            }
            let hess_l = hess_m / m - &score * score.transpose();
            info -= hess_l;
        }
        info
    }
}

/// A fitted pooled proportional-odds outcome model.
#[derive(Debug, Clone)]
pub struct OutcomeFit {
    /// Parameter names in `theta` order: `alpha1..alpha{K-1}`, then regressors.
    pub names: Vec<String>,
    /// Raw parameters `(a_1, ..., a_{K-1}, b)`.
    pub theta: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Cumulative intercepts implied by `theta`.
    pub cumulative_intercepts: Vec<f64>,
    /// Position of the treatment coefficient among the regressors, if present.
    pub treatment_column: Option<usize>,
    /// Counterfactual cell probabilities `m_{iak}`: `cells[a]` is `n x K`.
    pub cells: [DMatrix<f64>; 2],
    pub information: DMatrix<f64>,
    /// `n x dim` parameter influence vectors `U_{i,po}`.
    pub influence: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    model: OrdinalModel,
}

impl OutcomeFit {
    pub fn levels(&self) -> usize {
        self.model.levels
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Coefficient on the treatment indicator, if the model includes one.
    pub fn treatment_effect(&self) -> Option<f64> {
        self.treatment_column
            .map(|j| self.theta[self.model.n_intercepts() + j])
    }

    /// Cell probabilities `m_{iak}` for `k = 1..K`.
    pub fn cell(&self, i: usize, arm: u8) -> Vec<f64> {
        self.cells[arm as usize].row(i).iter().copied().collect()
    }

    fn counterfactual_row(&self, i: usize, arm: u8) -> Vec<f64> {
        let mut row = self.model.row(i);
        if let Some(j) = self.treatment_column {
            row[j] = arm as f64;
        }
        row
    }

    /// `K x dim` gradient `dm_{iak} / dtheta` of subject `i`'s arm-`arm` cells.
    pub fn cell_gradient(&self, i: usize, arm: u8) -> DMatrix<f64> {
        let theta = DVector::from_column_slice(&self.theta);
        self.model
            .cell_jacobian(&theta, &self.counterfactual_row(i, arm))
    }

    /// `n^{-1} sum_i c_i dm_{iak}/dtheta` as a `K x dim` matrix, with `c_i = 1`
    /// when `coef` is `None`.
    pub fn mean_cell_gradient(&self, arm: u8, coef: Option<&[f64]>) -> DMatrix<f64> {
        let n = self.cells[0].nrows();
        let theta = DVector::from_column_slice(&self.theta);
        let mut acc = DMatrix::zeros(self.levels(), self.dim());
        for i in 0..n {
            let c = coef.map_or(1.0, |c| c[i]);
            if c == 0.0 {
                continue;
            }
            let jac = self
                .model
                .cell_jacobian(&theta, &self.counterfactual_row(i, arm));
            acc += jac * c;
        }
        acc / n as f64
    }
}

/// Fits the pooled proportional-odds model on the outcome covariates of
/// `spec`, with the treatment indicator as the first regressor when
/// `spec.outcome_treatment` is set.
pub fn fit_proportional_odds(ds: &DoorDataset, spec: &ModelSpec) -> Result<OutcomeFit> {
    spec.validate(ds)?;
    let levels = ds.levels();
    let n = ds.n();
    let mut counts = vec![0usize; levels];
    for &y in ds.outcomes() {
        counts[y - 1] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(DoorError::EmptyLevel { level: k + 1 });
    }

    let covs = ds.design(&spec.outcome_covariates)?;
    let mut reg_names: Vec<String> = Vec::new();
    let design = if spec.outcome_treatment {
        reg_names.push("treatment".to_string());
        let mut d = DMatrix::zeros(n, covs.ncols() + 1);
        for i in 0..n {
            d[(i, 0)] = ds.treatment(i) as f64;
            for j in 0..covs.ncols() {
                d[(i, j + 1)] = covs[(i, j)];
            }
        }
        d
    } else {
        covs
    };
    reg_names.extend(spec.outcome_covariates.iter().cloned());

    let mut check_names = vec!["(intercept)".to_string()];
    check_names.extend(reg_names.iter().cloned());
    let with_intercept = design.clone().insert_column(0, 1.0);
    check_rank(OrdinalModel::NAME, &with_intercept, &check_names)?;

    let model = OrdinalModel::new(levels, design, ds.outcomes().to_vec());
    let mut start = DVector::zeros(model.dim());
    let mut cum = 0usize;
    let mut cumulative = Vec::with_capacity(levels - 1);
    for c in &counts[..levels - 1] {
        cum += c;
        cumulative.push(logit(cum as f64 / n as f64));
    }
    for (j, a) in OrdinalModel::raw_intercepts(&cumulative).into_iter().enumerate() {
        start[j] = a;
    }

    let fit = newton(&model, start)?;
    let si = score_and_information(&model, &fit.theta)?;
    let influence = si
        .influence()
        .ok_or(DoorError::SingularInformation { model: OrdinalModel::NAME })?;

    let treatment_column = spec.outcome_treatment.then_some(0);
    let mut cells = [DMatrix::zeros(n, levels), DMatrix::zeros(n, levels)];
    for i in 0..n {
        for arm in 0..2u8 {
            let mut row = model.row(i);
            if let Some(j) = treatment_column {
                row[j] = arm as f64;
            }
            let m = model.cell_probabilities(&fit.theta, &row);
            for (k, v) in m.into_iter().enumerate() {
                cells[arm as usize][(i, k)] = v;
            }
        }
    }

    let mut names: Vec<String> = (1..levels).map(|k| alloc::format!("alpha{k}")).collect();
    names.extend(reg_names);
    Ok(OutcomeFit {
        names,
        theta: fit.theta.iter().copied().collect(),
        std_errors: standard_errors(&si.information),
        cumulative_intercepts: model.cumulative_intercepts(&fit.theta),
        treatment_column,
        cells,
        information: si.information,
        influence,
        converged: true,
        iterations: fit.iterations,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_model_reproduces_margins() {
        let mut y = Vec::new();
        for (k, c) in [10, 20, 30, 40].iter().enumerate() {
            y.extend(core::iter::repeat_n((k + 1) as i64, *c));
        }
        let z: Vec<i64> = (0..100).map(|i| (i % 3 == 0) as i64).collect();
        let ds = DoorDataset::new(4, &y, &z, vec![], vec![]).unwrap();
        let spec = ModelSpec {
            outcome_treatment: false,
            ..ModelSpec::default()
        };
        let fit = fit_proportional_odds(&ds, &spec).unwrap();
        for i in 0..ds.n() {
            for arm in 0..2 {
                let m = fit.cell(i, arm);
                for (got, want) in m.iter().zip([0.1, 0.2, 0.3, 0.4]) {
                    assert!((got - want).abs() < 1e-10, "{m:?}");
                }
            }
        }
    }

    #[test]
    fn empty_level_is_rejected() {
        let ds = DoorDataset::new(3, &[1, 3, 1, 3], &[0, 1, 1, 0], vec![], vec![]).unwrap();
        assert_eq!(
            fit_proportional_odds(&ds, &ModelSpec::default()).unwrap_err(),
            DoorError::EmptyLevel { level: 2 }
        );
    }

    #[test]
    fn raw_intercepts_round_trip() {
        let model = OrdinalModel::new(4, DMatrix::zeros(1, 0), vec![1]);
        let c = [-1.0, -0.5, 0.5];
        let a = OrdinalModel::raw_intercepts(&c);
        let back = model.cumulative_intercepts(&DVector::from_vec(a));
        for (x, y) in back.iter().zip(c) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn cells_sum_to_one_and_gradients_cancel() {
        let model = OrdinalModel::new(5, DMatrix::zeros(1, 2), vec![1]);
        let theta = DVector::from_vec(vec![-0.3, 0.2, -1.0, 0.4, 0.7, -0.2]);
        let row = [1.5, -0.8];
        let m = model.cell_probabilities(&theta, &row);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(m.iter().all(|&p| p > 0.0 && p < 1.0));
        let jac = model.cell_jacobian(&theta, &row);
        for j in 0..jac.ncols() {
            assert!(jac.column(j).sum().abs() < 1e-14);
        }
    }
}
