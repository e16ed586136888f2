//! Influence-function inference for the DOOR probability.
//!
//! For every estimator the free cells `psi = (p11..p1,K-1, p01..p0,K-1)` are
//! asymptotically linear, `psi_hat - psi ~ n^{-1} sum_i Phi(O_i)`. The
//! per-subject vectors `Phi(O_i)` form the rows of an [`InfluenceMatrix`];
//! `Sigma_n = n^{-1} Phi' Phi` estimates their covariance and the delta
//! method through the Jacobian of `D` (with the last category of each arm
//! written as one minus the others) gives `Var(D_hat) = J' Sigma_n J / n`.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dataset::{DoorDataset, ModelSpec};
use crate::error::{DoorError, Result};
use crate::estimators::{
    crude_cells, door_kernel, dr_cells, gformula_cells, iptw_cells, CellProbEstimate, Method,
};
use crate::numeric::{normal_two_sided, sorted_quantile, Z_975};
use crate::regression::{fit_logistic, fit_proportional_odds, OutcomeFit, PropensityFit};
use crate::rng::stream_rng;

/// Per-subject influence vectors of the free cell probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    pub method: Method,
    /// `n x (2K-2)`; columns `phi_{i,1,1..K-1}` then `phi_{i,0,1..K-1}`.
    pub phi: DMatrix<f64>,
}

impl InfluenceMatrix {
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.phi.nrows() as f64;
        self.phi.column_iter().map(|c| c.sum() / n).collect()
    }
}

fn expect_method(cells: &CellProbEstimate, expected: Method) -> Result<()> {
    if cells.method == expected {
        Ok(())
    } else if cells.method == Method::IptwHajek {
        Err(DoorError::HajekAnalytic)
    } else {
        Err(DoorError::MethodMismatch {
            expected,
            found: cells.method,
        })
    }
}

#[inline]
fn arm_indicator(ds: &DoorDataset, i: usize, arm: u8) -> f64 {
    (ds.treatment(i) == arm) as u8 as f64
}

#[inline]
fn column(levels: usize, arm: u8, k: usize) -> usize {
    if arm == 1 {
        k
    } else {
        levels - 1 + k
    }
}

fn arm_cells(cells: &CellProbEstimate, arm: u8) -> &[f64] {
    if arm == 1 {
        &cells.p1
    } else {
        &cells.p0
    }
}

/// Influence of within-arm sample proportions:
/// `phi_{i1k} = Z_i (I(Y_i = k) - p1k) / (n1 / n)`.
pub fn crude_influence(ds: &DoorDataset, cells: &CellProbEstimate) -> Result<InfluenceMatrix> {
    expect_method(cells, Method::Crude)?;
    let levels = ds.levels();
    let n = ds.n();
    let (n0, n1) = ds.arm_sizes();
    if n0 == 0 || n1 == 0 {
        return Err(DoorError::SingleArm {
            present: (n1 > 0) as u8,
        });
    }
    let mut phi = DMatrix::zeros(n, 2 * levels - 2);
    for i in 0..n {
        let arm = ds.treatment(i);
        let share = if arm == 1 { n1 } else { n0 } as f64 / n as f64;
        let p = arm_cells(cells, arm);
        for k in 0..levels - 1 {
            let hit = (ds.outcome(i) == k + 1) as u8 as f64;
            phi[(i, column(levels, arm, k))] = (hit - p[k]) / share;
        }
    }
    Ok(InfluenceMatrix {
        method: Method::Crude,
        phi,
    })
}

/// `phi_{iak} = w_i A_i I(Y_i = k) + q_ak' U_{i,ps} - p_ak`, with
/// `A_i = Z_i` or `1 - Z_i` and `q_ak = n^{-1} sum_i w'_i A_i I(Y_i = k)`.
pub fn iptw_influence(
    ds: &DoorDataset,
    ps: &PropensityFit,
    cells: &CellProbEstimate,
) -> Result<InfluenceMatrix> {
    expect_method(cells, Method::Iptw)?;
    let levels = ds.levels();
    let n = ds.n();
    let d = ps.dim();
    let mut phi = DMatrix::zeros(n, 2 * levels - 2);
    for arm in [1u8, 0u8] {
        let p = arm_cells(cells, arm);
        let mut q = vec![DVector::<f64>::zeros(d); levels - 1];
        for i in 0..n {
            let y = ds.outcome(i) - 1;
            if arm_indicator(ds, i, arm) == 1.0 && y < levels - 1 {
                ps.add_weight_gradient(i, arm, 1.0 / n as f64, &mut q[y]);
            }
        }
        for i in 0..n {
            let a = arm_indicator(ds, i, arm);
            let w = ps.weight(i, arm);
            let u = ps.influence.row(i);
            for k in 0..levels - 1 {
                let hit = (ds.outcome(i) == k + 1) as u8 as f64;
                let correction = u.dot(&q[k].transpose());
                phi[(i, column(levels, arm, k))] = w * a * hit + correction - p[k];
            }
        }
    }
    Ok(InfluenceMatrix {
        method: Method::Iptw,
        phi,
    })
}

/// `phi_{iak} = m_{iak} + l_ak' U_{i,po} - p_ak` with `l_ak = n^{-1} sum_i m'_{iak}`.
pub fn gformula_influence(
    ds: &DoorDataset,
    of: &OutcomeFit,
    cells: &CellProbEstimate,
) -> Result<InfluenceMatrix> {
    expect_method(cells, Method::GFormula)?;
    let levels = ds.levels();
    let n = ds.n();
    let mut phi = DMatrix::zeros(n, 2 * levels - 2);
    for arm in [1u8, 0u8] {
        let p = arm_cells(cells, arm);
        let l = of.mean_cell_gradient(arm, None);
        let correction = &of.influence * l.transpose();
        for i in 0..n {
            for k in 0..levels - 1 {
                phi[(i, column(levels, arm, k))] =
                    of.cells[arm as usize][(i, k)] + correction[(i, k)] - p[k];
            }
        }
    }
    Ok(InfluenceMatrix {
        method: Method::GFormula,
        phi,
    })
}

/// Doubly robust influence (Z = 1 branch; the control branch substitutes
/// `1 - Z`, `m0` and the control weights):
///
/// ```text
/// phi_{i1k} = { w_i Z_i I(Y_i=k) - (w_i Z_i - 1) m_{i1k} - p_1k }
///           + U_{i,ps}' n^{-1} sum_j w'_j Z_j [I(Y_j=k) - m_{j1k}]
///           - U_{i,po}' n^{-1} sum_j m'_{j1k} [w_j Z_j - 1]
/// ```
///
/// The second-order cross term of the expansion is dropped.
pub fn dr_influence(
    ds: &DoorDataset,
    ps: &PropensityFit,
    of: &OutcomeFit,
    cells: &CellProbEstimate,
) -> Result<InfluenceMatrix> {
    expect_method(cells, Method::DoublyRobust)?;
    let levels = ds.levels();
    let n = ds.n();
    let d_ps = ps.dim();
    let mut phi = DMatrix::zeros(n, 2 * levels - 2);
    for arm in [1u8, 0u8] {
        let p = arm_cells(cells, arm);
        let m = &of.cells[arm as usize];

        let mut ps_slope = vec![DVector::<f64>::zeros(d_ps); levels - 1];
        let mut residual_weight = Vec::with_capacity(n);
        for i in 0..n {
            let a = arm_indicator(ds, i, arm);
            residual_weight.push(ps.weight(i, arm) * a - 1.0);
            if a == 0.0 {
                continue;
            }
            for (k, slope) in ps_slope.iter_mut().enumerate() {
                let hit = (ds.outcome(i) == k + 1) as u8 as f64;
                ps_slope_add(ps, i, arm, (hit - m[(i, k)]) / n as f64, slope);
            }
        }
        let po_slope = of.mean_cell_gradient(arm, Some(&residual_weight));
        let po_term = &of.influence * po_slope.transpose();

        for i in 0..n {
            let a = arm_indicator(ds, i, arm);
            let w = ps.weight(i, arm);
            let u_ps = ps.influence.row(i);
            for k in 0..levels - 1 {
                let hit = (ds.outcome(i) == k + 1) as u8 as f64;
                let term1 = w * a * hit - (w * a - 1.0) * m[(i, k)] - p[k];
                let term2 = u_ps.dot(&ps_slope[k].transpose());
                phi[(i, column(levels, arm, k))] = term1 + term2 - po_term[(i, k)];
            }
        }
    }
    Ok(InfluenceMatrix {
        method: Method::DoublyRobust,
        phi,
    })
}

#[inline]
fn ps_slope_add(ps: &PropensityFit, i: usize, arm: u8, scale: f64, out: &mut DVector<f64>) {
    if scale != 0.0 {
        ps.add_weight_gradient(i, arm, scale, out);
    }
}

/// `Sigma_n = n^{-1} Phi' Phi`.
pub fn covariance(phi: &InfluenceMatrix) -> DMatrix<f64> {
    let n = phi.phi.nrows() as f64;
    let s = phi.phi.transpose() * &phi.phi / n;
    (&s + s.transpose()) * 0.5
}

/// Gradient of `D` with respect to the free cells when category `reference`
/// (zero-based) of each arm is written as one minus the remaining cells.
///
/// Only the free entries of `p1` and `p0` are read. The result is ordered
/// like the free cells: arm 1 categories other than `reference`, then arm 0.
pub fn door_jacobian_with_reference(p1: &[f64], p0: &[f64], reference: usize) -> Result<Vec<f64>> {
    let k = p1.len();
    if p0.len() != k {
        return Err(DoorError::LengthMismatch {
            what: "control cell vector",
            expected: k,
            found: p0.len(),
        });
    }
    if reference >= k {
        return Err(DoorError::InvalidConfig(alloc::format!(
            "reference category {reference} out of range"
        )));
    }
    let complete = |p: &[f64]| -> Vec<f64> {
        let mut full = p.to_vec();
        let free: f64 = p
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != reference)
            .map(|(_, v)| v)
            .sum();
        full[reference] = 1.0 - free;
        full
    };
    let q1 = complete(p1);
    let q0 = complete(p0);
    // (A q0)_j = sum_{l<j} q0_l + q0_j / 2 ; (A' q1)_j = sum_{l>j} q1_l + q1_j / 2
    let mut below = 0.0;
    let mut g1 = Vec::with_capacity(k);
    for v in &q0 {
        g1.push(below + 0.5 * v);
        below += v;
    }
    let mut above = 0.0;
    let mut g0 = vec![0.0; k];
    for j in (0..k).rev() {
        g0[j] = above + 0.5 * q1[j];
        above += q1[j];
    }
    let mut jac = Vec::with_capacity(2 * k - 2);
    jac.extend((0..k).filter(|&j| j != reference).map(|j| g1[j] - g1[reference]));
    jac.extend((0..k).filter(|&j| j != reference).map(|j| g0[j] - g0[reference]));
    Ok(jac)
}

/// `J = dD / d(p11..p1,K-1, p01..p0,K-1)` with `p_aK = 1 - sum_{j<K} p_aj`.
pub fn door_jacobian(p1: &[f64], p0: &[f64]) -> Result<Vec<f64>> {
    door_jacobian_with_reference(p1, p0, p1.len().saturating_sub(1))
}

/// Point estimate and Wald inference for the DOOR probability.
#[derive(Debug, Clone, PartialEq)]
pub struct DoorEstimate {
    pub method: Method,
    pub n: usize,
    pub d_hat: f64,
    /// Covariance `Sigma_n` of the free cells, per observation.
    pub sigma: DMatrix<f64>,
    pub jacobian: Vec<f64>,
    pub se: f64,
    pub ci95: (f64, f64),
    /// Two-sided Wald p-value against `D = 0.5`.
    pub p_value: f64,
}

impl DoorEstimate {
    /// Wald interval clamped to `[0, 1]`.
    pub fn truncated_ci(&self) -> (f64, f64) {
        (self.ci95.0.max(0.0), self.ci95.1.min(1.0))
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci95.0 <= value && value <= self.ci95.1
    }

    /// Whether the 95% interval excludes the null value 0.5.
    pub fn rejects_null(&self) -> bool {
        !self.covers(0.5)
    }
}

pub fn door_inference(cells: &CellProbEstimate, phi: &InfluenceMatrix) -> Result<DoorEstimate> {
    if cells.method != phi.method {
        return Err(DoorError::MethodMismatch {
            expected: cells.method,
            found: phi.method,
        });
    }
    if cells.method == Method::IptwHajek {
        return Err(DoorError::HajekAnalytic);
    }
    let n = phi.phi.nrows();
    let d_hat = door_kernel(&cells.p1, &cells.p0);
    let sigma = covariance(phi);
    let jacobian = door_jacobian(&cells.p1, &cells.p0)?;
    let j = DVector::from_column_slice(&jacobian);
    let var = (j.transpose() * &sigma * &j)[(0, 0)] / n as f64;
    let se = libm::sqrt(var.max(0.0));
    let p_value = if se > 0.0 {
        normal_two_sided((d_hat - 0.5) / se)
    } else if (d_hat - 0.5).abs() <= 1e-12 {
        1.0
    } else {
        return Err(DoorError::DegenerateVariance);
    };
    Ok(DoorEstimate {
        method: cells.method,
        n,
        d_hat,
        sigma,
        jacobian,
        se,
        ci95: (d_hat - Z_975 * se, d_hat + Z_975 * se),
        p_value,
    })
}

/// Nuisance models fitted once and shared across methods.
#[derive(Debug, Clone, Default)]
pub struct NuisanceFits {
    pub propensity: Option<PropensityFit>,
    pub outcome: Option<OutcomeFit>,
}

impl NuisanceFits {
    /// Fits every model required by `methods`.
    pub fn fit(ds: &DoorDataset, spec: &ModelSpec, methods: &[Method]) -> Result<Self> {
        spec.validate(ds)?;
        let propensity = if methods.iter().any(|m| m.needs_propensity()) {
            Some(fit_logistic(ds, spec)?)
        } else {
            None
        };
        let outcome = if methods.iter().any(|m| m.needs_outcome()) {
            Some(fit_proportional_odds(ds, spec)?)
        } else {
            None
        };
        Ok(Self {
            propensity,
            outcome,
        })
    }

    fn ps(&self) -> Result<&PropensityFit> {
        self.propensity
            .as_ref()
            .ok_or_else(|| DoorError::InvalidConfig("propensity model was not fitted".into()))
    }

    fn po(&self) -> Result<&OutcomeFit> {
        self.outcome
            .as_ref()
            .ok_or_else(|| DoorError::InvalidConfig("outcome model was not fitted".into()))
    }

    pub fn cells(&self, ds: &DoorDataset, method: Method) -> Result<CellProbEstimate> {
        match method {
            Method::Crude => Ok(crude_cells(ds)),
            Method::Iptw => iptw_cells(ds, self.ps()?, false),
            Method::IptwHajek => iptw_cells(ds, self.ps()?, true),
            Method::GFormula => gformula_cells(ds, self.po()?),
            Method::DoublyRobust => dr_cells(ds, self.ps()?, self.po()?),
        }
    }

    pub fn influence(&self, ds: &DoorDataset, cells: &CellProbEstimate) -> Result<InfluenceMatrix> {
        match cells.method {
            Method::Crude => crude_influence(ds, cells),
            Method::Iptw => iptw_influence(ds, self.ps()?, cells),
            Method::IptwHajek => Err(DoorError::HajekAnalytic),
            Method::GFormula => gformula_influence(ds, self.po()?, cells),
            Method::DoublyRobust => dr_influence(ds, self.ps()?, self.po()?, cells),
        }
    }

    /// Cells, influence matrix and Wald inference for one method.
    pub fn estimate(&self, ds: &DoorDataset, method: Method) -> Result<DoorEstimate> {
        let cells = self.cells(ds, method)?;
        let phi = self.influence(ds, &cells)?;
        door_inference(&cells, &phi)
    }
}

/// End-to-end analytic analysis of one method: fit, estimate, infer.
pub fn analyze(ds: &DoorDataset, spec: &ModelSpec, method: Method) -> Result<DoorEstimate> {
    if method == Method::IptwHajek {
        return Err(DoorError::HajekAnalytic);
    }
    NuisanceFits::fit(ds, spec, &[method])?.estimate(ds, method)
}

/// Point estimate `D_hat` only, refitting every nuisance model.
pub fn point_estimate(ds: &DoorDataset, spec: &ModelSpec, method: Method) -> Result<f64> {
    let fits = NuisanceFits::fit(ds, spec, &[method])?;
    Ok(fits.cells(ds, method)?.door())
}

/// DOOR estimate for the binary outcome `I(Y >= cut)`, refitting the
/// outcome model on the collapsed outcome and reusing the propensity model.
pub fn sequential_dichotomized(
    ds: &DoorDataset,
    spec: &ModelSpec,
    method: Method,
    cut: usize,
) -> Result<DoorEstimate> {
    let collapsed = ds.dichotomize(cut)?;
    analyze(&collapsed, spec, method)
}

/// Estimates for every cut `2..=K`, in order.
pub fn sequential_dichotomization(
    ds: &DoorDataset,
    spec: &ModelSpec,
    method: Method,
) -> Result<Vec<(usize, DoorEstimate)>> {
    (2..=ds.levels())
        .map(|cut| sequential_dichotomized(ds, spec, method, cut).map(|e| (cut, e)))
        .collect()
}

/// Bootstrap distribution summary of `D_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub method: Method,
    pub replicates: usize,
    pub failures: usize,
    pub mean: f64,
    /// Empirical standard deviation of the successful replicates.
    pub se: f64,
    /// Percentile 2.5% / 97.5% interval.
    pub percentile_ci: (f64, f64),
}

pub const MIN_BOOTSTRAP: usize = 100;

/// One bootstrap replicate: resample rows with replacement from stream
/// `(seed, index)` and recompute the point estimate with full refits.
pub fn bootstrap_replicate(
    ds: &DoorDataset,
    spec: &ModelSpec,
    method: Method,
    seed: u64,
    index: u64,
) -> Result<f64> {
    let mut rng = stream_rng(seed, index);
    let n = ds.n();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let sample = ds.select_rows(&rows)?;
    point_estimate(&sample, spec, method)
}

/// Summarizes replicate outcomes, failing if more than 5% failed.
pub fn summarize_bootstrap(method: Method, outcomes: &[Result<f64>]) -> Result<BootstrapSummary> {
    let total = outcomes.len();
    let mut values: Vec<f64> = outcomes.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let failures = total - values.len();
    if failures * 20 > total || values.len() < 2 {
        return Err(DoorError::TooManyFailures {
            failed: failures,
            total,
        });
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    values.sort_by(f64::total_cmp);
    Ok(BootstrapSummary {
        method,
        replicates: total,
        failures,
        mean,
        se: libm::sqrt(var),
        percentile_ci: (sorted_quantile(&values, 0.025), sorted_quantile(&values, 0.975)),
    })
}

/// Nonparametric bootstrap of `D_hat` with `replicates` resamples.
pub fn bootstrap_se(
    ds: &DoorDataset,
    spec: &ModelSpec,
    method: Method,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    if replicates < MIN_BOOTSTRAP {
        return Err(DoorError::InvalidConfig(alloc::format!(
            "bootstrap needs at least {MIN_BOOTSTRAP} replicates, got {replicates}"
        )));
    }
    let outcomes: Vec<Result<f64>> = (0..replicates as u64)
        .map(|b| bootstrap_replicate(ds, spec, method, seed, b))
        .collect();
    summarize_bootstrap(method, &outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn jacobian_k2_is_constant() {
        for (a, b) in [(0.3, 0.8), (0.5, 0.5), (0.9, 0.1)] {
            let j = door_jacobian(&[a, 1.0 - a], &[b, 1.0 - b]).unwrap();
            assert!((j[0] + 0.5).abs() < 1e-15);
            assert!((j[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn jacobian_matches_displayed_first_and_last_entries() {
        let p1 = [0.1, 0.2, 0.3, 0.4];
        let p0 = [0.25; 4];
        let j = door_jacobian(&p1, &p0).unwrap();
        assert!((j[0] + 0.75).abs() < 1e-15);
        // dD/dp1,K-1 = -1/2 + (p01 + ... + p0,K-2) / 2
        assert!((j[2] - (-0.5 + 0.5 * (p0[0] + p0[1]))).abs() < 1e-15);
    }

    #[test]
    fn covariance_of_single_column() {
        let mut phi = DMatrix::zeros(4, 2);
        phi[(0, 1)] = 1.0;
        phi[(1, 1)] = -2.0;
        phi[(3, 1)] = 3.0;
        let s = covariance(&InfluenceMatrix {
            method: Method::Crude,
            phi,
        });
        assert_eq!(s[(0, 0)], 0.0);
        assert_eq!(s[(0, 1)], 0.0);
        assert!((s[(1, 1)] - 14.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn identical_arms_give_half_and_unit_p_value() {
        let ds = DoorDataset::new(3, &[1, 2, 3, 3, 1, 2, 3, 3], &[1, 1, 1, 1, 0, 0, 0, 0], vec![], vec![])
            .unwrap();
        let est = analyze(&ds, &ModelSpec::default(), Method::Crude).unwrap();
        assert!((est.d_hat - 0.5).abs() < 1e-15);
        assert!((est.p_value - 1.0).abs() < 1e-15);
        assert!(est.covers(est.d_hat));
    }

    #[test]
    fn hajek_is_refused_by_analytic_path() {
        let ds = DoorDataset::new(2, &[1, 2, 1, 2], &[1, 1, 0, 0], vec![], vec![]).unwrap();
        assert_eq!(
            analyze(&ds, &ModelSpec::default(), Method::IptwHajek).unwrap_err(),
            DoorError::HajekAnalytic
        );
        let ps = PropensityFit::known(vec![0.5; 4]).unwrap();
        let cells = iptw_cells(&ds, &ps, true).unwrap();
        assert_eq!(iptw_influence(&ds, &ps, &cells).unwrap_err(), DoorError::HajekAnalytic);
    }

    #[test]
    fn method_mismatch_is_reported() {
        let ds = DoorDataset::new(2, &[1, 2, 1, 2], &[1, 1, 0, 0], vec![], vec![]).unwrap();
        let cells = crude_cells(&ds);
        let ps = PropensityFit::known(vec![0.5; 4]).unwrap();
        assert_eq!(
            iptw_influence(&ds, &ps, &cells).unwrap_err(),
            DoorError::MethodMismatch {
                expected: Method::Iptw,
                found: Method::Crude
            }
        );
    }

    #[test]
    fn degenerate_variance() {
        let ds = DoorDataset::new(2, &[2, 2, 1, 1], &[1, 1, 0, 0], vec![], vec![]).unwrap();
        assert_eq!(
            analyze(&ds, &ModelSpec::default(), Method::Crude).unwrap_err(),
            DoorError::DegenerateVariance
        );
    }

    #[test]
    fn bootstrap_failure_threshold() {
        let ok: Vec<Result<f64>> = (0..95).map(|i| Ok(i as f64 / 100.0)).collect();
        let mut outcomes = ok.clone();
        outcomes.extend((0..5).map(|_| Err(DoorError::EmptyDataset)));
        let s = summarize_bootstrap(Method::Crude, &outcomes).unwrap();
        assert_eq!(s.failures, 5);
        outcomes.push(Err(DoorError::EmptyDataset));
        assert!(matches!(
            summarize_bootstrap(Method::Crude, &outcomes),
            Err(DoorError::TooManyFailures { failed: 6, total: 101 })
        ));
    }
}
