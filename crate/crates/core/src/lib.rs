//! Covariate-adjusted estimation of the DOOR (desirability of outcome
//! ranking) probability `D = P(Y^1 > Y^0) + P(Y^1 = Y^0) / 2` for two-arm
//! studies with an ordinal outcome.
//!
//! Four estimators of the counterfactual outcome distributions are provided
//! ([`estimators`]): the crude within-arm proportions, inverse probability of
//! treatment weighting with a logistic propensity model, G-computation with a
//! pooled proportional-odds outcome model, and the doubly robust (augmented
//! IPW) combination of both. [`inference`] assembles per-subject influence
//! functions for each, estimates their covariance and maps it to a standard
//! error for `D` through the delta method. [`simulation`] reproduces Monte
//! Carlo studies of bias, coverage and power.
//!
//! The crate is `no_std` (with `alloc`); file formats, the command line and
//! parallel drivers live in the companion `door` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod inference;
mod numeric;
pub mod regression;
pub mod rng;
pub mod simulation;

pub use dataset::{summarize, DatasetSummary, DoorDataset, ModelSpec};
pub use error::{DoorError, Result};
pub use estimators::{
    crude_cells, door_from_cells, dr_cells, gformula_cells, iptw_cells, CellProbEstimate,
    ComparisonMatrix, Method,
};
pub use inference::{
    analyze, bootstrap_se, covariance, crude_influence, door_inference, door_jacobian,
    dr_influence, gformula_influence, iptw_influence, sequential_dichotomized, BootstrapSummary,
    DoorEstimate, InfluenceMatrix, NuisanceFits,
};
pub use numeric::{normal_two_sided, Z_975};
pub use regression::{
    fit_logistic, fit_proportional_odds, score_and_information, OutcomeFit, PropensityFit,
};
