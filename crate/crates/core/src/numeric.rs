//! Small scalar and dense-matrix helpers shared by the fitting and inference code.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Two-sided 97.5% standard normal quantile used for Wald intervals.
pub const Z_975: f64 = 1.96;

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn log1pexp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        libm::exp(x)
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// Two-sided standard normal tail probability `P(|Z| >= |z|)`.
pub fn normal_two_sided(z: f64) -> f64 {
    libm::erfc(libm::fabs(z) / core::f64::consts::SQRT_2).min(1.0)
}

/// Linear-interpolation quantile (type 7) of an already sorted slice.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(libm::fabs(*x)))
}

/// Returns the indices of design columns that are (numerically) linear
/// combinations of the columns before them.
///
/// Runs an unpivoted Cholesky on the cross-product matrix and flags a column
/// when its residual variance falls below `1e-10` of its raw sum of squares.
pub fn collinear_columns(design: &DMatrix<f64>) -> Vec<usize> {
    let gram = design.transpose() * design;
    let d = gram.nrows();
    let mut l = DMatrix::<f64>::zeros(d, d);
    let mut flagged = Vec::new();
    for j in 0..d {
        let mut diag = gram[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if gram[(j, j)] <= 0.0 || diag <= 1e-10 * gram[(j, j)] {
            flagged.push(j);
            continue;
        }
        let ljj = libm::sqrt(diag);
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut s = gram[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    flagged
}

/// Inverse of a symmetric positive definite matrix, `None` if the Cholesky
/// factorization fails.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    let inv = chol.inverse();
    Some((&inv + inv.transpose()) * 0.5)
}

/// Solves `m x = b` for symmetric `m`, trying Cholesky first and adding an
/// increasing ridge when `m` is not positive definite.
pub fn damped_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(chol) = m.clone().cholesky() {
        return Some(chol.solve(b));
    }
    let scale = (0..m.nrows()).fold(0.0f64, |s, i| s.max(libm::fabs(m[(i, i)])));
    let mut ridge = 1e-8 * scale.max(1.0);
    for _ in 0..30 {
        let mut damped = m.clone();
        for i in 0..m.nrows() {
            damped[(i, i)] += ridge;
        }
        if let Some(chol) = damped.cholesky() {
            return Some(chol.solve(b));
        }
        ridge *= 10.0;
    }
    None
}
