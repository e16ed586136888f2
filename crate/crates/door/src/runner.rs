//! Parallel drivers for replicate studies and the bootstrap.
//!
//! Work item `i` always draws from stream `(seed, i)` and results are
//! collected in index order before aggregation, so the output is identical
//! for every thread count.

use door_core::inference::{bootstrap_replicate, summarize_bootstrap, BootstrapSummary, MIN_BOOTSTRAP};
use door_core::simulation::{
    mc_true_door, power_table, run_replicate, summarize_study, PowerTable, SimConfig, StudyReport,
};
use door_core::{DoorDataset, DoorError, Method, ModelSpec};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};

/// Runs `f` on a pool with `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Replication study with replicates spread over the current pool.
pub fn replication_study(config: &SimConfig) -> Result<StudyReport, DoorError> {
    config.validate()?;
    let truth = mc_true_door(config, config.truth_draws)?;
    study_with_truth(config, truth)
}

fn study_with_truth(config: &SimConfig, truth: f64) -> Result<StudyReport, DoorError> {
    let results: Vec<_> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|i| run_replicate(config, i))
        .collect();
    summarize_study(config, truth, &results)
}

/// Rejection rates over a grid of effects. Every grid point reuses the same
/// replicate streams, so differences across the grid are not MC noise in
/// the covariates.
pub fn power_study(base: &SimConfig, deltas: &[f64]) -> Result<PowerTable, DoorError> {
    let reports = deltas
        .iter()
        .map(|&delta| replication_study(&SimConfig { delta, ..base.clone() }))
        .collect::<Result<Vec<_>, _>>()?;
    power_table(&reports)
}

pub fn bootstrap(
    ds: &DoorDataset,
    spec: &ModelSpec,
    method: Method,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapSummary, DoorError> {
    if replicates < MIN_BOOTSTRAP {
        return Err(DoorError::InvalidConfig(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP} replicates, got {replicates}"
        )));
    }
    let outcomes: Vec<_> = (0..replicates as u64)
        .into_par_iter()
        .map(|b| bootstrap_replicate(ds, spec, method, seed, b))
        .collect();
    summarize_bootstrap(method, &outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use door_core::simulation::run_replication_study;

    #[test]
    fn parallel_study_matches_sequential() {
        let cfg = SimConfig {
            n: 150,
            replicates: 16,
            truth_draws: 100_000,
            ..SimConfig::default()
        };
        let seq = run_replication_study(&cfg).unwrap();
        for threads in [1, 3] {
            let par = with_threads(Some(threads), || replication_study(&cfg)).unwrap().unwrap();
            assert_eq!(seq, par);
        }
    }

    #[test]
    fn zero_threads_is_a_usage_error() {
        assert!(with_threads(Some(0), || ()).is_err());
    }
}
