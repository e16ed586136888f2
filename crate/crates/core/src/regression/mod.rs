//! Maximum-likelihood nuisance models.
//!
//! Both models are fit by Newton–Raphson with step halving on the
//! log-likelihood. A fit exposes per-subject parameter influence vectors
//! `U_i = (I/n)^{-1} s_i`, where `s_i` is subject `i`'s score and `I` the
//! total observed information at the estimate, so that
//! `sqrt(n)(theta_hat - theta) ~ n^{-1/2} sum_i U_i`.

mod logistic;
mod ordinal;

pub use logistic::{fit_logistic, LogisticModel, PropensityFit};
pub use ordinal::{fit_proportional_odds, OrdinalModel, OutcomeFit};

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{DoorError, Result};
use crate::numeric::{collinear_columns, damped_solve, max_abs, spd_inverse};

pub const MAX_ITERATIONS: usize = 100;
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const STEP_TOLERANCE: f64 = 1e-10;

/// A smooth log-likelihood over `n` independent subjects.
pub trait LikelihoodModel {
    /// Short model name used in error messages.
    const NAME: &'static str;

    fn n(&self) -> usize;

    fn dim(&self) -> usize;

    fn log_likelihood(&self, theta: &DVector<f64>) -> f64;

    /// Per-subject score vectors as the rows of an `n x dim` matrix.
    fn scores(&self, theta: &DVector<f64>) -> DMatrix<f64>;

    /// Total observed information `-sum_i d^2 l_i / d theta^2`.
    fn information(&self, theta: &DVector<f64>) -> DMatrix<f64>;

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let s = self.scores(theta);
        DVector::from_iterator(s.ncols(), s.column_iter().map(|c| c.sum()))
    }
}

/// Per-subject scores and the total information at a parameter vector.
#[derive(Debug, Clone)]
pub struct ScoreInformation {
    pub scores: DMatrix<f64>,
    pub information: DMatrix<f64>,
}

impl ScoreInformation {
    /// Parameter influence vectors `n I^{-1} s_i`, one per row.
    pub fn influence(&self) -> Option<DMatrix<f64>> {
        let n = self.scores.nrows() as f64;
        let inv = spd_inverse(&self.information)?;
        Some(&self.scores * inv * n)
    }
}

pub fn score_and_information<M: LikelihoodModel>(
    model: &M,
    theta: &DVector<f64>,
) -> Result<ScoreInformation> {
    if theta.len() != model.dim() {
        return Err(DoorError::LengthMismatch {
            what: "parameter vector",
            expected: model.dim(),
            found: theta.len(),
        });
    }
    let scores = model.scores(theta);
    let info = model.information(theta);
    let information = (&info + info.transpose()) * 0.5;
    if information.clone().cholesky().is_none() {
        return Err(DoorError::SingularInformation { model: M::NAME });
    }
    Ok(ScoreInformation {
        scores,
        information,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonFit {
    pub theta: DVector<f64>,
    pub iterations: usize,
}

/// Newton–Raphson with step halving.
///
/// Stops when the total score is below [`SCORE_TOLERANCE`] and the Newton
/// step it implies is small (a vanishing score with an O(1) step is the
/// signature of a likelihood without a finite maximizer), or when an
/// accepted step moves no parameter by more than [`STEP_TOLERANCE`].
pub(crate) fn newton<M: LikelihoodModel>(model: &M, start: DVector<f64>) -> Result<NewtonFit> {
    let mut theta = start;
    let mut ll = model.log_likelihood(&theta);
    if !ll.is_finite() {
        return Err(DoorError::NonConvergence {
            model: M::NAME,
            iterations: 0,
        });
    }
    for iteration in 1..=MAX_ITERATIONS {
        let grad = model.gradient(&theta);
        let info = model.information(&theta);
        let step = damped_solve(&info, &grad).ok_or(DoorError::SingularInformation { model: M::NAME })?;
        let step_size = max_abs(step.as_slice());
        if max_abs(grad.as_slice()) <= SCORE_TOLERANCE && step_size <= 1e-6 {
            return Ok(NewtonFit {
                theta,
                iterations: iteration,
            });
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate = &theta + &step * t;
            let cand_ll = model.log_likelihood(&candidate);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                accepted = Some((candidate, cand_ll));
                break;
            }
            t *= 0.5;
        }
        let Some((candidate, cand_ll)) = accepted else {
            return Err(DoorError::NonConvergence {
                model: M::NAME,
                iterations: iteration,
            });
        };
        let moved = t * step_size;
        theta = candidate;
        ll = cand_ll;
        if moved <= STEP_TOLERANCE {
            return Ok(NewtonFit {
                theta,
                iterations: iteration,
            });
        }
    }
    Err(DoorError::NonConvergence {
        model: M::NAME,
        iterations: MAX_ITERATIONS,
    })
}

/// Fails with the names of collinear columns if `design` lacks full column rank.
pub(crate) fn check_rank(model: &'static str, design: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let flagged = collinear_columns(design);
    if flagged.is_empty() {
        Ok(())
    } else {
        Err(DoorError::RankDeficient {
            model,
            columns: flagged.into_iter().map(|j| names[j].clone()).collect::<Vec<_>>(),
        })
    }
}

/// Standard errors `sqrt(diag(I^{-1}))` from a total information matrix.
pub(crate) fn standard_errors(information: &DMatrix<f64>) -> Vec<f64> {
    match spd_inverse(information) {
        Some(inv) => (0..inv.nrows()).map(|j| libm::sqrt(inv[(j, j)])).collect(),
        None => alloc::vec![f64::NAN; information.nrows()],
    }
}
