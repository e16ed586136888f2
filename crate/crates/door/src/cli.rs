//! Command-line surface.
//!
//! Exit codes: 0 on success, 2 for invalid input or flags, 3 when a model
//! fit fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use door_core::inference::{sequential_dichotomization, NuisanceFits};
use door_core::rng::stream_rng;
use door_core::simulation::{
    default_delta_grid, mc_counterfactual_cells, simulate_dataset, OutcomeLink, Scenario, SimConfig,
    COVARIATES,
};
use door_core::{normal_two_sided, summarize, DoorDataset, DoorEstimate, Method, ModelSpec, Z_975};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{load_csv, save_csv, write_csv, ColumnMap};
use crate::report::{
    AnalysisReport, ArmReport, BootstrapReport, CoefficientTable, EstimateRow, ForestRow, Format,
    ModelsReport, PowerOutput, StudyOutput, TruthOutput, SCHEMA_VERSION,
};
use crate::runner;

#[derive(Debug, Parser)]
#[command(name = "door", version, about = "Covariate-adjusted DOOR probability estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the DOOR probability on a CSV dataset.
    Analyze(AnalyzeArgs),
    /// Monte Carlo replication study: bias, SE, SEE, coverage and rejection rate.
    Simulate(SimulateArgs),
    /// Rejection rates over a grid of treatment effects.
    Power(PowerArgs),
    /// Monte Carlo true DOOR probability of the simulation model.
    Truth(TruthArgs),
    /// Write one simulated dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Rendering on stdout.
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    /// Also write the machine-readable report here (CSV with `--format csv`, JSON otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub outcome: String,
    #[arg(long)]
    pub treatment: String,
    /// Number of outcome levels K; outcomes must lie in 1..=K, larger is better.
    #[arg(long)]
    pub levels: usize,
    /// Propensity model covariates (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub ps_covars: Vec<String>,
    /// Outcome model covariates (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub po_covars: Vec<String>,
    /// Any of crude, iptw, iptw-hajek, gformula, dr.
    #[arg(long, value_delimiter = ',', default_value = "dr")]
    pub methods: Vec<String>,
    /// Normalize the IPTW weights (Hajek); its standard error comes from the bootstrap.
    #[arg(long)]
    pub hajek: bool,
    /// Clamp propensities into [eps, 1 - eps].
    #[arg(long, default_value_t = 0.0)]
    pub clip: f64,
    /// Bootstrap replicates (0 disables; at least 100 otherwise).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Add estimates for every binary split Y >= c, c = 2..=K.
    #[arg(long)]
    pub dichotomize: bool,
    /// Drop rows with missing values instead of failing.
    #[arg(long)]
    pub complete_case: bool,
    /// Clamp reported confidence limits to [0, 1].
    #[arg(long)]
    pub truncate_ci: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Link {
    UpperTail,
    MonotoneIncrements,
}

impl From<Link> for OutcomeLink {
    fn from(l: Link) -> Self {
        match l {
            Link::UpperTail => OutcomeLink::UpperTail,
            Link::MonotoneIncrements => OutcomeLink::MonotoneIncrements,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Treatment effect on the cumulative log-odds scale.
    #[arg(long, default_value_t = 0.4)]
    pub delta: f64,
    #[arg(long, default_value_t = 20240601)]
    pub seed: u64,
    /// Covariate draws for the Monte Carlo truth.
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
    /// How the intercepts and effect enter the outcome model.
    #[arg(long, value_enum, default_value = "upper-tail")]
    pub link: Link,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    /// both-correct, ps-correct, po-correct, both-incorrect or all (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "both-correct")]
    pub scenario: Vec<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    #[arg(long, default_value = "both-correct")]
    pub scenario: String,
    /// Effect grid (comma separated); defaults to 0, 0.05, ..., 0.4.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = 20240601)]
    pub seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
    #[arg(long, value_enum, default_value = "upper-tail")]
    pub link: Link,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Destination CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Analyze(a) => cmd_analyze(&a).and_then(|r| {
            emit(&a.output, &r, || r.to_table(), || r.to_csv())
        }),
        Command::Simulate(a) => cmd_simulate(&a).and_then(|r| {
            emit(&a.output, &r, || r.to_table(), || r.to_csv())
        }),
        Command::Power(a) => cmd_power(&a).and_then(|r| emit(&a.output, &r, || r.to_table(), || r.to_csv())),
        Command::Truth(a) => cmd_truth(&a).and_then(|r| emit(&a.output, &r, || r.to_table(), || r.to_csv())),
        Command::Generate(a) => cmd_generate(&a),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn emit<R: Serialize>(
    out: &OutputArgs,
    report: &R,
    table: impl Fn() -> String,
    csv: impl Fn() -> CliResult<String>,
) -> CliResult<()> {
    let json = || -> CliResult<String> { Ok(serde_json::to_string_pretty(report)? + "\n") };
    let text = match out.format {
        Format::Json => json()?,
        Format::Csv => csv()?,
        Format::Table => table(),
    };
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    if let Some(path) = &out.out {
        let machine = if out.format == Format::Csv { csv()? } else { json()? };
        write_file(path, &machine)?;
    }
    Ok(())
}

fn parse_methods(names: &[String], hajek: bool) -> CliResult<Vec<Method>> {
    let mut methods: Vec<Method> = Vec::new();
    for name in names {
        let m: Method = name.trim().parse()?;
        let m = if hajek && m == Method::Iptw { Method::IptwHajek } else { m };
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(CliError::Usage("--methods is empty".into()));
    }
    if hajek && !methods.contains(&Method::IptwHajek) {
        return Err(CliError::Usage("--hajek requires iptw among --methods".into()));
    }
    Ok(methods)
}

fn estimate_row(
    label: &str,
    e: &DoorEstimate,
    boot: Option<BootstrapReport>,
    truncate: bool,
) -> EstimateRow {
    let (lo, hi) = if truncate { e.truncated_ci() } else { e.ci95 };
    EstimateRow {
        method: e.method.tag().to_string(),
        label: label.to_string(),
        estimate: e.d_hat,
        se: e.se,
        ci_lower: lo,
        ci_upper: hi,
        p_value: e.p_value,
        inference: "influence-function".into(),
        bootstrap: boot,
    }
}

fn bootstrap_report(
    ds: &DoorDataset,
    spec: &ModelSpec,
    method: Method,
    seed: u64,
) -> CliResult<(door_core::BootstrapSummary, BootstrapReport)> {
    let b = runner::bootstrap(ds, spec, method, spec.bootstrap, seed)?;
    let report = BootstrapReport {
        replicates: b.replicates,
        failures: b.failures,
        se: b.se,
        percentile_lower: b.percentile_ci.0,
        percentile_upper: b.percentile_ci.1,
    };
    Ok((b, report))
}

fn union(a: &[String], b: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in a.iter().chain(b) {
        if !out.contains(c) {
            out.push(c.clone());
        }
    }
    out
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> CliResult<AnalysisReport> {
    let methods = parse_methods(&a.methods, a.hajek)?;
    if methods.contains(&Method::IptwHajek) && a.bootstrap == 0 {
        return Err(CliError::Usage(
            "Hajek-normalized IPTW is only available with --bootstrap B".into(),
        ));
    }
    let ps_covars: Vec<String> = a.ps_covars.iter().filter(|s| !s.is_empty()).cloned().collect();
    let po_covars: Vec<String> = a.po_covars.iter().filter(|s| !s.is_empty()).cloned().collect();
    let map = ColumnMap {
        outcome: a.outcome.clone(),
        treatment: a.treatment.clone(),
        covariates: union(&ps_covars, &po_covars),
    };
    let loaded = load_csv(&a.data, &map, a.levels, a.complete_case)?;
    let ds = loaded.dataset;
    let mut warnings = Vec::new();
    if loaded.dropped > 0 {
        let msg = format!("complete-case analysis dropped {} rows with missing values", loaded.dropped);
        eprintln!("{msg}");
        warnings.push(msg);
    }
    let spec = ModelSpec {
        propensity_covariates: ps_covars,
        outcome_covariates: po_covars,
        outcome_treatment: true,
        hajek: a.hajek,
        clip: a.clip,
        bootstrap: a.bootstrap,
    };
    spec.validate(&ds)?;

    runner::with_threads(a.threads, || -> CliResult<AnalysisReport> {
        let fits = NuisanceFits::fit(&ds, &spec, &methods)?;
        let mut estimates = Vec::new();
        for &method in &methods {
            let label = method.label();
            if method == Method::IptwHajek {
                let d = fits.cells(&ds, method)?.door();
                let (b, boot) = bootstrap_report(&ds, &spec, method, a.seed)?;
                let z = (d - 0.5) / b.se;
                let (mut lo, mut hi) = (d - Z_975 * b.se, d + Z_975 * b.se);
                if a.truncate_ci {
                    lo = lo.max(0.0);
                    hi = hi.min(1.0);
                }
                if boot.failures > 0 {
                    warnings.push(format!("{method}: {} bootstrap resamples failed", boot.failures));
                }
                estimates.push(EstimateRow {
                    method: method.tag().into(),
                    label: label.into(),
                    estimate: d,
                    se: b.se,
                    ci_lower: lo,
                    ci_upper: hi,
                    p_value: normal_two_sided(z),
                    inference: "bootstrap".into(),
                    bootstrap: Some(boot),
                });
                continue;
            }
            let e = fits.estimate(&ds, method)?;
            let boot = if spec.bootstrap > 0 {
                let (_, boot) = bootstrap_report(&ds, &spec, method, a.seed)?;
                if boot.failures > 0 {
                    warnings.push(format!("{method}: {} bootstrap resamples failed", boot.failures));
                }
                Some(boot)
            } else {
                None
            };
            estimates.push(estimate_row(label, &e, boot, a.truncate_ci));
        }

        let mut forest = Vec::new();
        if a.dichotomize {
            for &method in methods.iter().filter(|&&m| m != Method::IptwHajek) {
                for (cut, e) in sequential_dichotomization(&ds, &spec, method)? {
                    let (lo, hi) = if a.truncate_ci { e.truncated_ci() } else { e.ci95 };
                    forest.push(ForestRow {
                        method: method.tag().into(),
                        cut,
                        estimate: e.d_hat,
                        se: e.se,
                        ci_lower: lo,
                        ci_upper: hi,
                    });
                }
            }
            if methods.contains(&Method::IptwHajek) {
                warnings.push("sequential dichotomization skips Hajek-normalized IPTW".into());
            }
        }

        let clipped = fits.propensity.as_ref().map_or(0, |p| p.clipped);
        if clipped > 0 {
            warnings.push(format!("{clipped} propensity scores clipped to [{}, {}]", a.clip, 1.0 - a.clip));
        }
        let summary = summarize(&ds);
        let arm = |name: &str, s: &door_core::dataset::ArmSummary| ArmReport {
            arm: name.into(),
            size: s.size,
            level_counts: s.level_counts.clone(),
            covariate_means: s.covariate_means.clone(),
        };
        let models = ModelsReport {
            propensity_covariates: spec.propensity_covariates.clone(),
            outcome_covariates: spec.outcome_covariates.clone(),
            hajek: spec.hajek,
            clip: spec.clip,
            bootstrap: spec.bootstrap,
            seed: a.seed,
            ci_truncated: a.truncate_ci,
            propensity: fits.propensity.as_ref().map(|p| CoefficientTable {
                names: p.names.clone(),
                estimates: p.beta.clone(),
                std_errors: p.std_errors.clone(),
                iterations: p.iterations,
            }),
            outcome: fits.outcome.as_ref().map(|o| CoefficientTable {
                names: o.names.clone(),
                estimates: o.theta.clone(),
                std_errors: o.std_errors.clone(),
                iterations: o.iterations,
            }),
            outcome_cumulative_intercepts: fits.outcome.as_ref().map(|o| o.cumulative_intercepts.clone()),
            clipped_propensities: clipped,
        };
        Ok(AnalysisReport {
            schema_version: SCHEMA_VERSION,
            n: ds.n(),
            levels: ds.levels(),
            covariates: ds.covariate_names().to_vec(),
            arms: vec![arm("treated", &summary.treated), arm("control", &summary.control)],
            models,
            estimates,
            forest,
            warnings,
        })
    })?
}

fn scenarios(names: &[String]) -> CliResult<Vec<Scenario>> {
    let mut out = Vec::new();
    for name in names {
        if name == "all" {
            out.extend(Scenario::ALL);
        } else {
            out.push(name.trim().parse()?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("--scenario is empty".into()));
    }
    Ok(out)
}

fn sim_config(n: usize, reps: usize, scenario: Scenario, m: &ModelArgs) -> SimConfig {
    SimConfig {
        n,
        replicates: reps,
        delta: m.delta,
        scenario,
        link: m.link.into(),
        seed: m.seed,
        truth_draws: m.draws,
        ..SimConfig::default()
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<StudyOutput> {
    let configs: Vec<SimConfig> = scenarios(&a.scenario)?
        .into_iter()
        .map(|s| sim_config(a.n, a.reps, s, &a.model))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let reports = runner::with_threads(a.threads, || {
        configs.iter().map(runner::replication_study).collect::<Result<Vec<_>, _>>()
    })??;
    Ok(StudyOutput::new(&reports))
}

pub fn cmd_power(a: &PowerArgs) -> CliResult<PowerOutput> {
    let scenario: Scenario = a.scenario.parse()?;
    let deltas = if a.deltas.is_empty() { default_delta_grid() } else { a.deltas.clone() };
    let model = ModelArgs {
        delta: 0.0,
        seed: a.seed,
        draws: a.draws,
        link: a.link,
    };
    let base = sim_config(a.n, a.reps, scenario, &model);
    base.validate()?;
    let table = runner::with_threads(a.threads, || runner::power_study(&base, &deltas))??;
    Ok(PowerOutput::new(&table, a.seed, a.reps))
}

pub fn cmd_truth(a: &TruthArgs) -> CliResult<TruthOutput> {
    let cfg = sim_config(50, 1, Scenario::BothCorrect, &a.model);
    cfg.validate()?;
    let truth = door_core::simulation::mc_true_door(&cfg, a.model.draws)?;
    let (p1, p0) = mc_counterfactual_cells(&cfg, a.model.draws)?;
    Ok(TruthOutput {
        schema_version: SCHEMA_VERSION,
        delta: cfg.delta,
        draws: a.model.draws,
        seed: cfg.seed,
        outcome_model: cfg.link.describe().to_string(),
        truth,
        p1: p1.to_vec(),
        p0: p0.to_vec(),
    })
}

pub fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    let cfg = sim_config(a.n, 1, Scenario::BothCorrect, &a.model);
    cfg.validate()?;
    let ds = simulate_dataset(&cfg, &mut stream_rng(cfg.seed, 0))?;
    debug_assert_eq!(ds.covariate_names().len(), COVARIATES.len());
    match &a.out {
        Some(path) => save_csv(&ds, "y", "z", path),
        None => write_csv(&ds, "y", "z", std::io::stdout().lock()),
    }
}
