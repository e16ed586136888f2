//! Two-arm ordinal-outcome datasets and nuisance model specifications.
//!
//! A [`DoorDataset`] holds `n` subjects, each with an ordinal outcome in
//! `1..=K` (larger is more desirable), a binary treatment indicator and a
//! vector of named real-valued covariates. It is validated on construction
//! and immutable afterwards.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::{DoorError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DoorDataset {
    levels: usize,
    outcome: Vec<usize>,
    treatment: Vec<u8>,
    covariate_names: Vec<String>,
    /// Row-major `n x p`.
    covariates: Vec<f64>,
}

impl DoorDataset {
    /// Builds a dataset from raw columns.
    ///
    /// `covariates` is row-major with one row of `covariate_names.len()`
    /// entries per subject. Outcomes and treatments are given as integers so
    /// that out-of-range values can be reported instead of truncated.
    pub fn new(
        levels: usize,
        outcome: &[i64],
        treatment: &[i64],
        covariate_names: Vec<String>,
        covariates: Vec<f64>,
    ) -> Result<Self> {
        if levels < 2 {
            return Err(DoorError::InvalidLevels(levels));
        }
        let n = outcome.len();
        if n == 0 {
            return Err(DoorError::EmptyDataset);
        }
        if treatment.len() != n {
            return Err(DoorError::LengthMismatch {
                what: "treatment",
                expected: n,
                found: treatment.len(),
            });
        }
        let p = covariate_names.len();
        if covariates.len() != n * p {
            return Err(DoorError::LengthMismatch {
                what: "covariates",
                expected: n * p,
                found: covariates.len(),
            });
        }
        let mut y = Vec::with_capacity(n);
        for (index, &value) in outcome.iter().enumerate() {
            if value < 1 || value as u64 > levels as u64 {
                return Err(DoorError::OutcomeOutOfRange { index, value, levels });
            }
            y.push(value as usize);
        }
        let mut z = Vec::with_capacity(n);
        for (index, &value) in treatment.iter().enumerate() {
            match value {
                0 | 1 => z.push(value as u8),
                _ => return Err(DoorError::InvalidTreatment { index, value }),
            }
        }
        if let Some(pos) = covariates.iter().position(|v| !v.is_finite()) {
            return Err(DoorError::NonFiniteCovariate {
                index: pos / p,
                column: covariate_names[pos % p].clone(),
            });
        }
        let treated = z.iter().filter(|&&t| t == 1).count();
        if treated == 0 || treated == n {
            return Err(DoorError::SingleArm { present: z[0] });
        }
        Ok(Self {
            levels,
            outcome: y,
            treatment: z,
            covariate_names,
            covariates,
        })
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// Number of declared outcome levels `K`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Outcome of subject `i`, in `1..=K`.
    pub fn outcome(&self, i: usize) -> usize {
        self.outcome[i]
    }

    pub fn outcomes(&self) -> &[usize] {
        &self.outcome
    }

    pub fn treatment(&self, i: usize) -> u8 {
        self.treatment[i]
    }

    pub fn treatments(&self) -> &[u8] {
        &self.treatment
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.treatment[i] == 1
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate(&self, i: usize, j: usize) -> f64 {
        self.covariates[i * self.covariate_names.len() + j]
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        let p = self.covariate_names.len();
        &self.covariates[i * p..(i + 1) * p]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    /// `(n0, n1)`: control and treated arm sizes.
    pub fn arm_sizes(&self) -> (usize, usize) {
        let n1 = self.treatment.iter().filter(|&&t| t == 1).count();
        (self.n() - n1, n1)
    }

    /// Dataset made of the given rows, in order; rows may repeat.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let p = self.covariate_names.len();
        let mut y = Vec::with_capacity(rows.len());
        let mut z = Vec::with_capacity(rows.len());
        let mut x = Vec::with_capacity(rows.len() * p);
        for &r in rows {
            y.push(self.outcome[r] as i64);
            z.push(self.treatment[r] as i64);
            x.extend_from_slice(self.covariate_row(r));
        }
        Self::new(self.levels, &y, &z, self.covariate_names.clone(), x)
    }

    /// Binary outcome `I(Y >= cut) + 1` as a two-level dataset.
    pub fn dichotomize(&self, cut: usize) -> Result<Self> {
        if cut < 2 || cut > self.levels {
            return Err(DoorError::InvalidCut {
                cut,
                levels: self.levels,
            });
        }
        let y: Vec<i64> = self
            .outcome
            .iter()
            .map(|&v| if v >= cut { 2 } else { 1 })
            .collect();
        if y.iter().all(|&v| v == y[0]) {
            return Err(DoorError::DegenerateOutcome { cut });
        }
        let z: Vec<i64> = self.treatment.iter().map(|&t| t as i64).collect();
        Self::new(2, &y, &z, self.covariate_names.clone(), self.covariates.clone())
    }

    /// Design matrix with a leading intercept column followed by the named covariates.
    pub fn design_with_intercept(&self, columns: &[String]) -> Result<DMatrix<f64>> {
        let idx = self.resolve(columns)?;
        Ok(DMatrix::from_fn(self.n(), idx.len() + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                self.covariate(i, idx[j - 1])
            }
        }))
    }

    /// Design matrix of the named covariates only (no intercept).
    pub fn design(&self, columns: &[String]) -> Result<DMatrix<f64>> {
        let idx = self.resolve(columns)?;
        Ok(DMatrix::from_fn(self.n(), idx.len(), |i, j| {
            self.covariate(i, idx[j])
        }))
    }

    fn resolve(&self, columns: &[String]) -> Result<Vec<usize>> {
        columns
            .iter()
            .map(|c| {
                self.column_index(c)
                    .ok_or_else(|| DoorError::UnknownCovariate(c.clone()))
            })
            .collect()
    }
}

/// Which covariates enter which nuisance model, plus estimation options.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Covariates of the logistic propensity model; an intercept is always added.
    pub propensity_covariates: Vec<String>,
    /// Covariates of the pooled proportional-odds outcome model.
    pub outcome_covariates: Vec<String>,
    /// Whether the treatment indicator enters the outcome model (normally true).
    pub outcome_treatment: bool,
    /// Normalize IPTW cell probabilities (bootstrap inference only).
    pub hajek: bool,
    /// Propensity clipping bound `eps`: scores are clamped into `[eps, 1 - eps]`.
    pub clip: f64,
    /// Bootstrap replicates; zero disables the bootstrap.
    pub bootstrap: usize,
}

impl ModelSpec {
    /// Same covariate list for both models, no clipping, no bootstrap.
    pub fn shared(covariates: &[&str]) -> Self {
        let names: Vec<String> = covariates.iter().map(|s| s.to_string()).collect();
        Self {
            propensity_covariates: names.clone(),
            outcome_covariates: names,
            ..Self::default()
        }
    }

    pub fn with_models(propensity: &[&str], outcome: &[&str]) -> Self {
        Self {
            propensity_covariates: propensity.iter().map(|s| s.to_string()).collect(),
            outcome_covariates: outcome.iter().map(|s| s.to_string()).collect(),
            ..Self::default()
        }
    }

    /// Checks the covariate names against `ds` and the option ranges.
    pub fn validate(&self, ds: &DoorDataset) -> Result<()> {
        if !(0.0..0.5).contains(&self.clip) {
            return Err(DoorError::InvalidClip(self.clip));
        }
        for name in self
            .propensity_covariates
            .iter()
            .chain(self.outcome_covariates.iter())
        {
            if ds.column_index(name).is_none() {
                return Err(DoorError::UnknownCovariate(name.clone()));
            }
        }
        Ok(())
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            propensity_covariates: Vec::new(),
            outcome_covariates: Vec::new(),
            outcome_treatment: true,
            hajek: false,
            clip: 0.0,
            bootstrap: 0,
        }
    }
}

/// Per-arm descriptive statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub size: usize,
    /// Count of each level `1..=K`, zero for empty levels.
    pub level_counts: Vec<usize>,
    pub covariate_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub control: ArmSummary,
    pub treated: ArmSummary,
}

pub fn summarize(ds: &DoorDataset) -> DatasetSummary {
    let p = ds.covariate_names().len();
    let mut arms = [
        ArmSummary {
            size: 0,
            level_counts: vec![0; ds.levels()],
            covariate_means: vec![0.0; p],
        },
        ArmSummary {
            size: 0,
            level_counts: vec![0; ds.levels()],
            covariate_means: vec![0.0; p],
        },
    ];
    for i in 0..ds.n() {
        let arm = &mut arms[ds.treatment(i) as usize];
        arm.size += 1;
        arm.level_counts[ds.outcome(i) - 1] += 1;
        for (m, x) in arm.covariate_means.iter_mut().zip(ds.covariate_row(i)) {
            *m += x;
        }
    }
    for arm in arms.iter_mut() {
        let size = arm.size as f64;
        arm.covariate_means.iter_mut().for_each(|m| *m /= size);
    }
    let [control, treated] = arms;
    DatasetSummary { control, treated }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn minimal_dataset() {
        let ds = DoorDataset::new(
            2,
            &[1, 2, 2, 1],
            &[0, 1, 1, 0],
            names(&["x"]),
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.levels(), 2);
        assert_eq!(ds.arm_sizes(), (2, 2));
    }

    #[test]
    fn rejects_out_of_range_outcome() {
        let err = DoorDataset::new(4, &[1, 5, 2], &[0, 1, 1], vec![], vec![]).unwrap_err();
        assert_eq!(
            err,
            DoorError::OutcomeOutOfRange {
                index: 1,
                value: 5,
                levels: 4
            }
        );
    }

    #[test]
    fn rejects_single_arm() {
        let err = DoorDataset::new(2, &[1, 2], &[1, 1], vec![], vec![]).unwrap_err();
        assert_eq!(err, DoorError::SingleArm { present: 1 });
    }

    #[test]
    fn rejects_non_finite_covariate() {
        let err = DoorDataset::new(
            2,
            &[1, 2],
            &[0, 1],
            names(&["a", "b"]),
            vec![0.0, 1.0, f64::NAN, 2.0],
        )
        .unwrap_err();
        assert_eq!(
            err,
            DoorError::NonFiniteCovariate {
                index: 1,
                column: "a".into()
            }
        );
    }

    #[test]
    fn summary_reports_empty_levels() {
        let ds = DoorDataset::new(
            4,
            &[1, 2, 2, 4, 1],
            &[1, 1, 1, 0, 0],
            names(&["x"]),
            vec![1.0, 2.0, 3.0, 10.0, 20.0],
        )
        .unwrap();
        let s = summarize(&ds);
        assert_eq!(s.treated.size, 3);
        assert_eq!(s.control.size, 2);
        assert_eq!(s.treated.level_counts, vec![1, 2, 0, 0]);
        assert_eq!(s.control.level_counts, vec![1, 0, 0, 1]);
        assert_eq!(s.treated.covariate_means, vec![2.0]);
        assert_eq!(s.control.covariate_means, vec![15.0]);
    }

    #[test]
    fn dichotomize_collapses_levels() {
        let ds = DoorDataset::new(3, &[1, 2, 3, 3], &[0, 1, 0, 1], vec![], vec![]).unwrap();
        let d = ds.dichotomize(3).unwrap();
        assert_eq!(d.outcomes(), &[1, 1, 2, 2]);
        assert_eq!(ds.dichotomize(1).unwrap_err(), DoorError::InvalidCut { cut: 1, levels: 3 });
        let flat = DoorDataset::new(3, &[1, 1, 2, 2], &[0, 1, 0, 1], vec![], vec![]).unwrap();
        assert_eq!(
            flat.dichotomize(3).unwrap_err(),
            DoorError::DegenerateOutcome { cut: 3 }
        );
    }

    #[test]
    fn spec_validation() {
        let ds = DoorDataset::new(2, &[1, 2], &[0, 1], names(&["x"]), vec![0.0, 1.0]).unwrap();
        assert!(ModelSpec::shared(&["x"]).validate(&ds).is_ok());
        assert_eq!(
            ModelSpec::shared(&["y"]).validate(&ds).unwrap_err(),
            DoorError::UnknownCovariate("y".into())
        );
        let spec = ModelSpec {
            clip: 0.5,
            ..ModelSpec::default()
        };
        assert_eq!(spec.validate(&ds).unwrap_err(), DoorError::InvalidClip(0.5));
    }
}
