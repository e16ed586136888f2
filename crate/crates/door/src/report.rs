//! Serializable reports and their table / CSV renderings.
//!
//! JSON carries full precision; tables print four decimals.

use std::fmt::Write as _;

use door_core::simulation::{PowerTable, StudyReport};
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Table,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: String,
    pub size: usize,
    /// Count of each outcome level `1..=K`.
    pub level_counts: Vec<usize>,
    pub covariate_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsReport {
    pub propensity_covariates: Vec<String>,
    pub outcome_covariates: Vec<String>,
    pub hajek: bool,
    pub clip: f64,
    pub bootstrap: usize,
    pub seed: u64,
    pub ci_truncated: bool,
    pub propensity: Option<CoefficientTable>,
    /// Raw parameters: first intercept, log increments, then regressors.
    pub outcome: Option<CoefficientTable>,
    pub outcome_cumulative_intercepts: Option<Vec<f64>>,
    pub clipped_propensities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replicates: usize,
    pub failures: usize,
    pub se: f64,
    pub percentile_lower: f64,
    pub percentile_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub method: String,
    pub label: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_value: f64,
    /// `influence-function` or `bootstrap`: the source of `se`.
    pub inference: String,
    pub bootstrap: Option<BootstrapReport>,
}

/// One sequential-dichotomization estimate, `Y >= cut` versus `Y < cut`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub method: String,
    pub cut: usize,
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub n: usize,
    pub levels: usize,
    pub covariates: Vec<String>,
    pub arms: Vec<ArmReport>,
    pub models: ModelsReport,
    pub estimates: Vec<EstimateRow>,
    pub forest: Vec<ForestRow>,
    pub warnings: Vec<String>,
}

fn ci(lo: f64, hi: f64) -> String {
    format!("({lo:.4}, {hi:.4})")
}

impl AnalysisReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let size = |arm: &str| self.arms.iter().find(|a| a.arm == arm).map_or(0, |a| a.size);
        let _ = writeln!(
            s,
            "DOOR probability: n = {} (treated {}, control {}), K = {}",
            self.n,
            size("treated"),
            size("control"),
            self.levels
        );
        let _ = writeln!(s, "{:<16}{:>10}{:>10}  {:<20}{:>10}  Inference", "Method", "Estimate", "SE", "95% CI", "p-value");
        for r in &self.estimates {
            let _ = writeln!(
                s,
                "{:<16}{:>10.4}{:>10.4}  {:<20}{:>10.4}  {}",
                r.label,
                r.estimate,
                r.se,
                ci(r.ci_lower, r.ci_upper),
                r.p_value,
                r.inference
            );
            if let Some(b) = &r.bootstrap {
                let _ = writeln!(
                    s,
                    "{:<16}{:>10}{:>10.4}  {:<20}  bootstrap B = {}, failed {}",
                    "",
                    "",
                    b.se,
                    ci(b.percentile_lower, b.percentile_upper),
                    b.replicates,
                    b.failures
                );
            }
        }
        if !self.forest.is_empty() {
            let _ = writeln!(s, "\nSequential dichotomization (Y >= cut)");
            let _ = writeln!(s, "{:<16}{:>6}{:>10}{:>10}  95% CI", "Method", "Cut", "Estimate", "SE");
            for r in &self.forest {
                let _ = writeln!(
                    s,
                    "{:<16}{:>6}{:>10.4}{:>10.4}  {}",
                    r.method,
                    r.cut,
                    r.estimate,
                    r.se,
                    ci(r.ci_lower, r.ci_upper)
                );
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    /// One line per estimate and forest row.
    pub fn to_csv(&self) -> CliResult<String> {
        #[derive(Serialize)]
        struct Line<'a> {
            schema_version: u32,
            kind: &'a str,
            method: &'a str,
            cut: Option<usize>,
            estimate: f64,
            se: f64,
            ci_lower: f64,
            ci_upper: f64,
            p_value: Option<f64>,
            inference: &'a str,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.estimates {
            w.serialize(Line {
                schema_version: SCHEMA_VERSION,
                kind: "estimate",
                method: &r.method,
                cut: None,
                estimate: r.estimate,
                se: r.se,
                ci_lower: r.ci_lower,
                ci_upper: r.ci_upper,
                p_value: Some(r.p_value),
                inference: &r.inference,
            })?;
        }
        for r in &self.forest {
            w.serialize(Line {
                schema_version: SCHEMA_VERSION,
                kind: "forest",
                method: &r.method,
                cut: Some(r.cut),
                estimate: r.estimate,
                se: r.se,
                ci_lower: r.ci_lower,
                ci_upper: r.ci_upper,
                p_value: None,
                inference: "influence-function",
            })?;
        }
        finish(w)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> CliResult<String> {
    let bytes = w.into_inner().map_err(|e| crate::error::CliError::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scenario: String,
    pub n: usize,
    pub delta: f64,
    pub truth: f64,
    pub method: String,
    pub model: String,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Empirical SD of the estimates; absent with a single replicate.
    pub empirical_se: Option<f64>,
    pub mean_see: f64,
    pub coverage: f64,
    pub rejection: f64,
    pub replicates: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub schema_version: u32,
    pub seed: u64,
    pub outcome_model: String,
    pub rows: Vec<StudyRow>,
}

impl StudyOutput {
    pub fn new(reports: &[StudyReport]) -> Self {
        let first = reports.first();
        let rows = reports
            .iter()
            .flat_map(|rep| {
                rep.rows.iter().map(move |r| StudyRow {
                    scenario: rep.scenario.tag().to_string(),
                    n: rep.n,
                    delta: rep.delta,
                    truth: rep.truth,
                    method: r.method.tag().to_string(),
                    model: r.label.clone(),
                    mean_estimate: r.mean_estimate,
                    bias: r.bias,
                    empirical_se: r.empirical_se,
                    mean_see: r.mean_see,
                    coverage: r.coverage,
                    rejection: r.rejection,
                    replicates: rep.replicates,
                    failures: rep.failures,
                })
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            seed: first.map_or(0, |r| r.seed),
            outcome_model: first.map_or(String::new(), |r| r.link.describe().to_string()),
            rows,
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let mut current = None;
        for r in &self.rows {
            let key = (r.scenario.clone(), r.n, r.delta.to_bits());
            if current.as_ref() != Some(&key) {
                let _ = writeln!(
                    s,
                    "{}scenario {}, N = {}, delta = {}, true D = {:.4}, replicates = {} ({} failed)",
                    if current.is_some() { "\n" } else { "" },
                    r.scenario,
                    r.n,
                    r.delta,
                    r.truth,
                    r.replicates,
                    r.failures
                );
                let _ = writeln!(
                    s,
                    "{:<10}{:<16}{:>9}{:>9}{:>9}{:>9}{:>11}",
                    "Method", "Model", "Bias", "SE", "SEE", "CP", "Rejection"
                );
                current = Some(key);
            }
            let se = r.empirical_se.map_or("NA".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:<10}{:<16}{:>9.4}{:>9}{:>9.4}{:>9.4}{:>11.4}",
                r.method, r.model, r.bias, se, r.mean_see, r.coverage, r.rejection
            );
        }
        s
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "schema_version", "seed", "scenario", "n", "delta", "truth", "method", "model",
            "mean_estimate", "bias", "empirical_se", "mean_see", "coverage", "rejection",
            "replicates", "failures",
        ])?;
        for r in &self.rows {
            w.write_record([
                SCHEMA_VERSION.to_string(),
                self.seed.to_string(),
                r.scenario.clone(),
                r.n.to_string(),
                r.delta.to_string(),
                r.truth.to_string(),
                r.method.clone(),
                r.model.clone(),
                r.mean_estimate.to_string(),
                r.bias.to_string(),
                r.empirical_se.map_or(String::new(), |v| v.to_string()),
                r.mean_see.to_string(),
                r.coverage.to_string(),
                r.rejection.to_string(),
                r.replicates.to_string(),
                r.failures.to_string(),
            ])?;
        }
        finish(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub method: String,
    pub model: String,
    pub rejection: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerOutput {
    pub schema_version: u32,
    pub seed: u64,
    pub n: usize,
    pub replicates: usize,
    pub scenario: String,
    pub deltas: Vec<f64>,
    pub truths: Vec<f64>,
    pub rows: Vec<PowerRow>,
}

impl PowerOutput {
    pub fn new(table: &PowerTable, seed: u64, replicates: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            n: table.n,
            replicates,
            scenario: table.scenario.tag().to_string(),
            deltas: table.deltas.clone(),
            truths: table.truths.clone(),
            rows: table
                .rows
                .iter()
                .map(|(m, label, rates)| PowerRow {
                    method: m.tag().to_string(),
                    model: label.clone(),
                    rejection: rates.clone(),
                })
                .collect(),
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "Rejection rate of H0: D = 0.5, scenario {}, N = {}, replicates = {}",
            self.scenario, self.n, self.replicates
        );
        let _ = write!(s, "{:<26}", "delta");
        for d in &self.deltas {
            let _ = write!(s, "{d:>8.2}");
        }
        let _ = write!(s, "\n{:<26}", "true D");
        for t in &self.truths {
            let _ = write!(s, "{t:>8.4}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:<26}", format!("{} {}", r.method, r.model).trim_end());
            for v in &r.rejection {
                let _ = write!(s, "{v:>8.4}");
            }
            s.push('\n');
        }
        s
    }

    /// Long format: one line per method and effect size.
    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "schema_version", "seed", "scenario", "n", "replicates", "delta", "truth", "method", "model",
            "rejection",
        ])?;
        for r in &self.rows {
            for ((d, t), v) in self.deltas.iter().zip(&self.truths).zip(&r.rejection) {
                w.write_record([
                    SCHEMA_VERSION.to_string(),
                    self.seed.to_string(),
                    self.scenario.clone(),
                    self.n.to_string(),
                    self.replicates.to_string(),
                    d.to_string(),
                    t.to_string(),
                    r.method.clone(),
                    r.model.clone(),
                    v.to_string(),
                ])?;
            }
        }
        finish(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthOutput {
    pub schema_version: u32,
    pub delta: f64,
    pub draws: usize,
    pub seed: u64,
    pub outcome_model: String,
    pub truth: f64,
    /// `P(Y^1 = k)` and `P(Y^0 = k)`.
    pub p1: Vec<f64>,
    pub p0: Vec<f64>,
}

impl TruthOutput {
    pub fn to_table(&self) -> String {
        let fmt = |p: &[f64]| p.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ");
        format!(
            "true DOOR probability at delta = {}: {:.4}\n  P(Y^1 = k): {}\n  P(Y^0 = k): {}\n  ({} covariate draws, seed {}; {})\n",
            self.delta,
            self.truth,
            fmt(&self.p1),
            fmt(&self.p0),
            self.draws,
            self.seed,
            self.outcome_model
        )
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["schema_version", "delta", "draws", "seed", "truth"])?;
        w.write_record([
            SCHEMA_VERSION.to_string(),
            self.delta.to_string(),
            self.draws.to_string(),
            self.seed.to_string(),
            self.truth.to_string(),
        ])?;
        finish(w)
    }
}
