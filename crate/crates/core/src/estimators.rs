//! Counterfactual cell-probability estimators and the DOOR probability map.
//!
//! Each estimator produces `p1[k] = P(Y^1 = k)` and `p0[k] = P(Y^0 = k)` for
//! `k = 1..K`. The DOOR probability of a pair of cell vectors is
//! `D = p1' A p0`, where `A` has `0.5` on the diagonal, `1` below it and `0`
//! above it, i.e. `D = P(Y^1 > Y^0) + P(Y^1 = Y^0) / 2`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;

use crate::dataset::DoorDataset;
use crate::error::{DoorError, Result};
use crate::regression::{OutcomeFit, PropensityFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Crude,
    Iptw,
    IptwHajek,
    GFormula,
    DoublyRobust,
}

impl Method {
    pub const ANALYTIC: [Method; 4] = [
        Method::Crude,
        Method::Iptw,
        Method::GFormula,
        Method::DoublyRobust,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Crude => "crude",
            Method::Iptw => "iptw",
            Method::IptwHajek => "iptw-hajek",
            Method::GFormula => "gformula",
            Method::DoublyRobust => "dr",
        }
    }

    /// Display label in the style of published result tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Crude => "Crude",
            Method::Iptw => "IPTW",
            Method::IptwHajek => "IPTW (Hajek)",
            Method::GFormula => "G-Formula",
            Method::DoublyRobust => "Doubly Robust",
        }
    }

    pub fn needs_propensity(self) -> bool {
        matches!(self, Method::Iptw | Method::IptwHajek | Method::DoublyRobust)
    }

    pub fn needs_outcome(self) -> bool {
        matches!(self, Method::GFormula | Method::DoublyRobust)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = DoorError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crude" => Ok(Method::Crude),
            "iptw" => Ok(Method::Iptw),
            "iptw-hajek" | "hajek" => Ok(Method::IptwHajek),
            "gformula" | "g-formula" => Ok(Method::GFormula),
            "dr" => Ok(Method::DoublyRobust),
            other => Err(DoorError::InvalidConfig(alloc::format!("unknown method `{other}`"))),
        }
    }
}

/// Estimated counterfactual outcome distributions under one method.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProbEstimate {
    pub method: Method,
    pub p1: Vec<f64>,
    pub p0: Vec<f64>,
    /// Observed-arm inverse probability weights (IPTW and DR only).
    pub weights: Option<Vec<f64>>,
}

impl CellProbEstimate {
    pub fn levels(&self) -> usize {
        self.p1.len()
    }

    pub fn door(&self) -> f64 {
        door_kernel(&self.p1, &self.p0)
    }
}

/// The `K x K` pairwise scoring matrix `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMatrix(DMatrix<f64>);

impl ComparisonMatrix {
    pub fn new(levels: usize) -> Self {
        Self(DMatrix::from_fn(levels, levels, score))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.0[(k, l)]
    }
}

/// Score of a treated outcome at level `k` against a control outcome at level `l`.
#[inline]
fn score(k: usize, l: usize) -> f64 {
    match k.cmp(&l) {
        core::cmp::Ordering::Greater => 1.0,
        core::cmp::Ordering::Equal => 0.5,
        core::cmp::Ordering::Less => 0.0,
    }
}

/// `p1' A p0` computed with a running control-arm cumulative sum.
pub(crate) fn door_kernel(p1: &[f64], p0: &[f64]) -> f64 {
    let mut below = 0.0;
    let mut d = 0.0;
    for (a, b) in p1.iter().zip(p0) {
        d += a * (below + 0.5 * b);
        below += b;
    }
    d
}

/// DOOR probability `p1' A p0`. Inputs need not sum to one.
pub fn door_from_cells(p1: &[f64], p0: &[f64]) -> Result<f64> {
    if p1.len() != p0.len() {
        return Err(DoorError::LengthMismatch {
            what: "control cell vector",
            expected: p1.len(),
            found: p0.len(),
        });
    }
    Ok(door_kernel(p1, p0))
}

/// Within-arm empirical outcome proportions.
pub fn crude_cells(ds: &DoorDataset) -> CellProbEstimate {
    let k = ds.levels();
    let (n0, n1) = ds.arm_sizes();
    let mut p1 = vec![0.0; k];
    let mut p0 = vec![0.0; k];
    for i in 0..ds.n() {
        if ds.is_treated(i) {
            p1[ds.outcome(i) - 1] += 1.0;
        } else {
            p0[ds.outcome(i) - 1] += 1.0;
        }
    }
    p1.iter_mut().for_each(|p| *p /= n1 as f64);
    p0.iter_mut().for_each(|p| *p /= n0 as f64);
    CellProbEstimate {
        method: Method::Crude,
        p1,
        p0,
        weights: None,
    }
}

fn observed_weights(ds: &DoorDataset, ps: &PropensityFit) -> Result<Vec<f64>> {
    if ps.pi.len() != ds.n() {
        return Err(DoorError::LengthMismatch {
            what: "propensity scores",
            expected: ds.n(),
            found: ps.pi.len(),
        });
    }
    for (index, &p) in ps.pi.iter().enumerate() {
        if !(p > 0.0 && p < 1.0) {
            return Err(DoorError::PositivityViolation { index, propensity: p });
        }
    }
    Ok((0..ds.n()).map(|i| ps.weight(i, ds.treatment(i))).collect())
}

/// Inverse probability of treatment weighted cells.
///
/// Unnormalized: `p1[k] = n^{-1} sum Z I(Y = k) / pi`, and likewise for the
/// control arm with `1 - Z` and `1 - pi`. With `hajek` each vector is divided
/// by its own sum.
pub fn iptw_cells(ds: &DoorDataset, ps: &PropensityFit, hajek: bool) -> Result<CellProbEstimate> {
    let weights = observed_weights(ds, ps)?;
    let k = ds.levels();
    let n = ds.n() as f64;
    let mut p1 = vec![0.0; k];
    let mut p0 = vec![0.0; k];
    for (i, w) in weights.iter().enumerate() {
        let cell = ds.outcome(i) - 1;
        if ds.is_treated(i) {
            p1[cell] += w;
        } else {
            p0[cell] += w;
        }
    }
    let method = if hajek {
        for p in [&mut p1, &mut p0] {
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= total);
        }
        Method::IptwHajek
    } else {
        p1.iter_mut().for_each(|v| *v /= n);
        p0.iter_mut().for_each(|v| *v /= n);
        Method::Iptw
    };
    Ok(CellProbEstimate {
        method,
        p1,
        p0,
        weights: Some(weights),
    })
}

fn check_outcome_fit(ds: &DoorDataset, of: &OutcomeFit) -> Result<()> {
    if of.cells[0].nrows() != ds.n() {
        return Err(DoorError::LengthMismatch {
            what: "outcome model predictions",
            expected: ds.n(),
            found: of.cells[0].nrows(),
        });
    }
    if of.levels() != ds.levels() {
        return Err(DoorError::LengthMismatch {
            what: "outcome model levels",
            expected: ds.levels(),
            found: of.levels(),
        });
    }
    Ok(())
}

/// G-computation: average model-predicted counterfactual cells over all subjects.
pub fn gformula_cells(ds: &DoorDataset, of: &OutcomeFit) -> Result<CellProbEstimate> {
    check_outcome_fit(ds, of)?;
    let n = ds.n() as f64;
    let mean = |arm: usize| -> Vec<f64> {
        of.cells[arm]
            .column_iter()
            .map(|c| c.iter().sum::<f64>() / n)
            .collect()
    };
    Ok(CellProbEstimate {
        method: Method::GFormula,
        p1: mean(1),
        p0: mean(0),
        weights: None,
    })
}

/// Augmented IPW cells with unnormalized weights:
///
/// `p1[k] = n^{-1} sum { Z I(Y=k)/pi - (Z - pi)/pi m1[k] }`,
/// `p0[k] = n^{-1} sum { (1-Z) I(Y=k)/(1-pi) + (Z - pi)/(1-pi) m0[k] }`.
pub fn dr_cells(ds: &DoorDataset, ps: &PropensityFit, of: &OutcomeFit) -> Result<CellProbEstimate> {
    let weights = observed_weights(ds, ps)?;
    check_outcome_fit(ds, of)?;
    let k = ds.levels();
    let n = ds.n() as f64;
    let mut p1 = vec![0.0; k];
    let mut p0 = vec![0.0; k];
    for i in 0..ds.n() {
        let z = ds.treatment(i) as f64;
        let pi = ps.pi[i];
        let y = ds.outcome(i) - 1;
        let aug1 = (z - pi) / pi;
        let aug0 = (z - pi) / (1.0 - pi);
        for c in 0..k {
            let hit = (y == c) as u8 as f64;
            p1[c] += z * hit / pi - aug1 * of.cells[1][(i, c)];
            p0[c] += (1.0 - z) * hit / (1.0 - pi) + aug0 * of.cells[0][(i, c)];
        }
    }
    p1.iter_mut().for_each(|v| *v /= n);
    p0.iter_mut().for_each(|v| *v /= n);
    Ok(CellProbEstimate {
        method: Method::DoublyRobust,
        p1,
        p0,
        weights: Some(weights),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn enumerate_door(p1: &[f64], p0: &[f64]) -> f64 {
        let mut d = 0.0;
        for (k, a) in p1.iter().enumerate() {
            for (l, b) in p0.iter().enumerate() {
                d += a * b * score(k, l);
            }
        }
        d
    }

    #[test]
    fn door_examples() {
        let u = [0.25; 4];
        assert_eq!(door_from_cells(&u, &u).unwrap(), 0.5);
        assert_eq!(
            door_from_cells(&[0.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 0.0, 0.0]).unwrap(),
            1.0
        );
        let d = door_from_cells(&[0.2, 0.3, 0.5], &[0.5, 0.3, 0.2]).unwrap();
        assert!((d - 0.695).abs() < 1e-12);
        assert!((enumerate_door(&[0.2, 0.3, 0.5], &[0.5, 0.3, 0.2]) - 0.695).abs() < 1e-12);
    }

    #[test]
    fn door_rejects_length_mismatch() {
        assert!(matches!(
            door_from_cells(&[0.5, 0.5], &[1.0]),
            Err(DoorError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn comparison_matrix_is_complementary() {
        let a = ComparisonMatrix::new(6);
        for k in 0..6 {
            for l in 0..6 {
                assert_eq!(a.get(k, l) + a.get(l, k), 1.0);
            }
        }
        assert_eq!(a.get(2, 2), 0.5);
        assert_eq!(a.get(3, 1), 1.0);
        assert_eq!(a.get(1, 3), 0.0);
    }

    #[test]
    fn crude_counts() {
        let ds = DoorDataset::new(4, &[1, 2, 2, 4, 3, 3], &[1, 1, 1, 1, 0, 0], vec![], vec![]).unwrap();
        let c = crude_cells(&ds);
        assert_eq!(c.p1, vec![0.25, 0.5, 0.0, 0.25]);
        assert_eq!(c.p0, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn crude_identical_arms() {
        let ds = DoorDataset::new(3, &[1, 2, 3, 1, 2, 3], &[1, 1, 1, 0, 0, 0], vec![], vec![]).unwrap();
        let c = crude_cells(&ds);
        assert_eq!(c.p1, c.p0);
        assert!((c.door() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn iptw_with_constant_propensity_equals_crude() {
        let y = [1, 2, 2, 3, 1, 3, 3, 2];
        let z = [1, 1, 1, 0, 0, 0, 0, 0];
        let ds = DoorDataset::new(3, &y, &z, vec![], vec![]).unwrap();
        let ps = PropensityFit::known(vec![3.0 / 8.0; 8]).unwrap();
        let iptw = iptw_cells(&ds, &ps, false).unwrap();
        let crude = crude_cells(&ds);
        for (a, b) in iptw.p1.iter().chain(&iptw.p0).zip(crude.p1.iter().chain(&crude.p0)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hajek_sums_to_one() {
        let y = [1, 2, 2, 3, 1, 3, 3, 2];
        let z = [1, 1, 1, 0, 0, 0, 1, 0];
        let ds = DoorDataset::new(3, &y, &z, vec![], vec![]).unwrap();
        let ps = PropensityFit::known(vec![0.3, 0.5, 0.6, 0.2, 0.4, 0.5, 0.7, 0.45]).unwrap();
        let h = iptw_cells(&ds, &ps, true).unwrap();
        assert_eq!(h.method, Method::IptwHajek);
        assert!((h.p1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((h.p0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positivity_violation_names_subject() {
        let ds = DoorDataset::new(2, &[1, 2, 1], &[1, 0, 1], vec![], vec![]).unwrap();
        let mut ps = PropensityFit::known(vec![0.5; 3]).unwrap();
        ps.pi[2] = 1.0;
        assert_eq!(
            iptw_cells(&ds, &ps, false).unwrap_err(),
            DoorError::PositivityViolation {
                index: 2,
                propensity: 1.0
            }
        );
    }

    #[test]
    fn method_tags_round_trip() {
        for m in [
            Method::Crude,
            Method::Iptw,
            Method::IptwHajek,
            Method::GFormula,
            Method::DoublyRobust,
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("tmle".parse::<Method>().is_err());
    }
}
