//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ivsel_core::glm::{fit_cca, fit_ipw, fit_logistic, fit_ols, fit_poisson, RegressionSpec, SelectionSpec};
use ivsel_core::heckman::{heckman_binary_mle, heckman_mle, heckman_two_step};
use ivsel_core::mr::{ivw, selection_adjusted_summary_stats, tsls, wald_estimate, MrColumns};
use ivsel_core::sim::{bundled, draw_regression, generate_mr, resolve, run_study, sweep, MrData, ScenarioKind};
use ivsel_core::ttw::{ttw_linear, ttw_logistic, ttw_poisson, TtwMode};
use ivsel_core::{Adjuster, CausalEstimate, Dataset, Error, FitResult, ModelKind, RngStream, ScenarioConfig, SummaryStats};
use serde::Serialize;

use crate::io::{read_table_path, write_dataset};
use crate::manifest::{config_hash, manifest_path, timestamp, RunManifest, SCHEMA_VERSION};
use crate::plot::forest_plot;
use crate::report::{to_csv, to_json, to_markdown, Central, Study};

/// Failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input data: exit 2.
    Usage(String),
    /// Estimation or output failure: exit 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::MissingColumn { .. } | Error::InvalidData(_) | Error::Collinearity(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_manifest(m: &RunManifest, output: &Path) -> CliResult<PathBuf> {
    let path = manifest_path(output);
    m.write(&path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn hash<T: Serialize>(v: &T) -> CliResult<String> {
    config_hash(v).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn parse_adjuster(s: &str) -> std::result::Result<Adjuster, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Reads a config file, falling back to a bundled scenario of that name.
pub fn load_config(source: &str) -> CliResult<ScenarioConfig> {
    let path = Path::new(source);
    if path.exists() {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        return ScenarioConfig::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())));
    }
    if bundled::text(source).is_some() {
        return Ok(bundled::load(source)?);
    }
    Err(CliError::Usage(format!("`{source}` is neither a readable file nor a bundled scenario (see `ivsel scenarios`)")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Md,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Scenario config file or bundled scenario name.
    pub config: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for replications.
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Report medians instead of means.
    #[arg(long)]
    pub median: bool,
    /// Comma-separated methods; defaults to the config's list or every applicable method.
    #[arg(long, value_delimiter = ',', value_parser = parse_adjuster)]
    pub methods: Vec<Adjuster>,
    /// Overrides the config's replication count.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Overrides the config's sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Overrides the config's base seed.
    #[arg(long, env = "IVSEL_SEED")]
    pub seed: Option<u64>,
}

pub fn simulate(args: &SimulateArgs) -> CliResult<Vec<PathBuf>> {
    let started = timestamp();
    let mut cfg = load_config(&args.config)?;
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    cfg.validate()?;
    if args.parallelism == 0 {
        return Err(CliError::Usage("--parallelism must be at least 1".into()));
    }
    let parameter = cfg.sweep.as_ref().map(|s| s.parameter.clone());
    let studies: Vec<Study> = match &cfg.sweep {
        Some(sw) => sweep(&cfg, &sw.parameter, &sw.values, &args.methods, args.parallelism)?
            .into_iter()
            .zip(&sw.values)
            .map(|(report, &v)| Study { sweep_value: Some(v), report })
            .collect(),
        None => vec![Study { sweep_value: None, report: run_study(&cfg, &args.methods, args.parallelism)? }],
    };
    let central = if args.median { Central::Median } else { Central::Mean };
    let (text, ext) = match args.format {
        Format::Csv => (to_csv(&studies, parameter.as_deref(), central), "csv"),
        Format::Json => (to_json(&studies, parameter.as_deref()).map_err(|e| CliError::Runtime(e.to_string()))?, "json"),
        Format::Md => (to_markdown(&studies, parameter.as_deref(), central), "md"),
    };
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out.display())))?;
    let stem = if cfg.name.is_empty() { "report".to_string() } else { cfg.name.clone() };
    let out = args.out.join(format!("{stem}.{ext}"));
    write_file(&out, &text)?;
    let mut m = RunManifest::new("simulate", hash(&cfg)?, Some(cfg.base_seed), started);
    m.outputs.push(out.clone());
    let mpath = write_manifest(&m, &out)?;
    Ok(vec![out, mpath])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Linear,
    Logistic,
    Poisson,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Linear => ModelKind::Linear,
            Model::Logistic => ModelKind::Logistic,
            Model::Poisson => ModelKind::Poisson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TtwModeArg {
    Partial,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HeckmanEstimator {
    TwoStep,
    Mle,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// CSV with a header row; `NA` or empty cells are missing.
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Model::Linear)]
    pub model: Model,
    #[arg(long, default_value = "cca", value_parser = parse_adjuster)]
    pub adjuster: Adjuster,
    /// Columns that affect selection but not the outcome (required by heckman and ttw).
    #[arg(long = "selection-instrument", value_delimiter = ',')]
    pub selection_instrument: Vec<String>,
    #[arg(long)]
    pub outcome: String,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long = "ttw-mode", value_enum, default_value_t = TtwModeArg::Partial)]
    pub ttw_mode: TtwModeArg,
    /// Continuous-outcome Heckman estimator.
    #[arg(long, value_enum, default_value_t = HeckmanEstimator::TwoStep)]
    pub heckman: HeckmanEstimator,
    /// JSON output path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct FitOutput {
    pub schema_version: u32,
    pub method: ivsel_core::Method,
    pub adjuster: Adjuster,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub ci95: Vec<(f64, f64)>,
    pub converged: bool,
    pub n_used: usize,
    pub loglik: Option<f64>,
    pub warnings: Vec<String>,
}

impl FitOutput {
    fn new(fit: FitResult, adjuster: Adjuster) -> Self {
        let ci95 = fit.names.iter().map(|n| fit.ci95(n).expect("own coefficient")).collect();
        Self {
            schema_version: SCHEMA_VERSION,
            method: fit.method,
            adjuster,
            names: fit.names,
            estimates: fit.estimates,
            std_errors: fit.std_errors,
            ci95,
            converged: fit.converged,
            n_used: fit.n_used,
            loglik: fit.loglik,
            warnings: fit.warnings,
        }
    }
}

fn needs_instrument(a: Adjuster, instruments: &[String]) -> CliResult<()> {
    if matches!(a, Adjuster::Heckman | Adjuster::Ttw) && instruments.is_empty() {
        return Err(CliError::Usage(format!("adjuster `{}` requires --selection-instrument", a.as_str())));
    }
    Ok(())
}

fn run_fit(data: &Dataset, args: &FitArgs) -> CliResult<FitResult> {
    let covs: Vec<&str> = args.covariates.iter().map(String::as_str).collect();
    let inst: Vec<&str> = args.selection_instrument.iter().map(String::as_str).collect();
    let spec = RegressionSpec::new(args.outcome.clone(), &covs);
    let sel = SelectionSpec::new(args.outcome.clone(), &covs, &inst);
    let kind = ModelKind::from(args.model);
    let fit = match (args.adjuster, args.model) {
        (Adjuster::Cca, _) => fit_cca(data, &spec, kind),
        (Adjuster::Ipw, _) => {
            let w: Vec<String> = args.covariates.iter().chain(&args.selection_instrument).cloned().collect();
            fit_ipw(data, &spec, kind, &w)
        }
        (Adjuster::Oracle, _) if data.n_selected() < data.n() => {
            return Err(CliError::Usage("adjuster `oracle` needs fully observed data".into()))
        }
        (Adjuster::Oracle, Model::Linear) => fit_ols(data, &spec, None),
        (Adjuster::Oracle, Model::Logistic) => fit_logistic(data, &spec, None, None),
        (Adjuster::Oracle, Model::Poisson) => fit_poisson(data, &spec, None, None),
        (Adjuster::Heckman, Model::Linear) => match args.heckman {
            HeckmanEstimator::TwoStep => heckman_two_step(data, &sel),
            HeckmanEstimator::Mle => heckman_mle(data, &sel),
        },
        (Adjuster::Heckman, Model::Logistic) => heckman_binary_mle(data, &sel),
        (Adjuster::Heckman, Model::Poisson) => {
            return Err(CliError::Usage("adjuster `heckman` has no Poisson model".into()))
        }
        (Adjuster::Ttw, Model::Linear) => {
            let mode = match args.ttw_mode {
                TtwModeArg::Partial => TtwMode::Partial,
                TtwModeArg::Full => TtwMode::Full,
            };
            ttw_linear(data, &sel, mode)
        }
        (Adjuster::Ttw, Model::Logistic) => ttw_logistic(data, &sel),
        (Adjuster::Ttw, Model::Poisson) => ttw_poisson(data, &sel),
    };
    Ok(fit?)
}

pub fn fit(args: &FitArgs) -> CliResult<FitOutput> {
    needs_instrument(args.adjuster, &args.selection_instrument)?;
    let table = read_table_path(&args.data)?;
    let mut used = vec![args.outcome.clone()];
    used.extend(args.covariates.iter().cloned());
    used.extend(args.selection_instrument.iter().cloned());
    let data = table.dataset(&used)?;
    Ok(FitOutput::new(run_fit(&data, args)?, args.adjuster))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MrMode {
    Wald,
    Tsls,
    Ivw,
    Summary,
}

#[derive(Debug, Args, Serialize)]
pub struct MrArgs {
    #[arg(long, value_enum)]
    pub mode: MrMode,
    /// Individual-level CSV (wald, tsls, summary) or `variant,bx,sx,by,sy` CSV (ivw).
    pub input: PathBuf,
    /// Separate outcome sample for two-sample wald or summary.
    #[arg(long = "outcome-data")]
    pub outcome_data: Option<PathBuf>,
    #[arg(long, default_value = "x")]
    pub exposure: String,
    #[arg(long, default_value = "y")]
    pub outcome: String,
    /// Genetic variant columns.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    #[arg(long = "selection-instrument", value_delimiter = ',')]
    pub selection_instrument: Vec<String>,
    /// Comma-separated adjusters; one estimate each.
    #[arg(long, value_delimiter = ',', default_value = "cca", value_parser = parse_adjuster)]
    pub adjuster: Vec<Adjuster>,
    /// Bootstrap resamples for the 2SLS standard error under heckman or ttw.
    #[arg(long, default_value_t = 100)]
    pub bootstrap: usize,
    #[arg(long, env = "IVSEL_SEED", default_value_t = 1)]
    pub seed: u64,
    /// JSON output path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Forest plot path; defaults to the output path with an `.svg` extension when
    /// several estimates are produced.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Writes the adjusted per-variant statistics of summary mode (single adjuster only).
    #[arg(long = "stats-out")]
    pub stats_out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct MrOutput {
    pub schema_version: u32,
    pub mode: MrMode,
    pub labels: Vec<String>,
    pub estimates: Vec<CausalEstimate>,
}

fn mr_estimates(args: &MrArgs) -> CliResult<Vec<CausalEstimate>> {
    if args.mode == MrMode::Ivw {
        let f = fs::File::open(&args.input)
            .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", args.input.display())))?;
        return Ok(vec![ivw(&SummaryStats::read_csv(f)?)?]);
    }
    if args.variants.is_empty() {
        return Err(CliError::Usage("--variants is required for individual-level data".into()));
    }
    for &a in &args.adjuster {
        needs_instrument(a, &args.selection_instrument)?;
    }
    let cols = MrColumns {
        exposure: args.exposure.clone(),
        outcome: args.outcome.clone(),
        variants: args.variants.clone(),
        instruments: args.selection_instrument.clone(),
    };
    let shared: Vec<String> = args.variants.iter().chain(&args.selection_instrument).cloned().collect();
    let with = |first: &[&String]| -> Vec<String> { first.iter().map(|s| s.to_string()).chain(shared.clone()).collect() };
    let table = read_table_path(&args.input)?;
    let (dx, dy) = match &args.outcome_data {
        None => {
            let d = table.dataset(&with(&[&args.exposure, &args.outcome]))?;
            (d, None)
        }
        Some(p) => {
            if args.mode == MrMode::Tsls {
                return Err(CliError::Usage("tsls needs one-sample data; drop --outcome-data".into()));
            }
            let ty = read_table_path(p)?;
            (table.dataset(&with(&[&args.exposure]))?, Some(ty.dataset(&with(&[&args.outcome]))?))
        }
    };
    let dy_ref = dy.as_ref().unwrap_or(&dx);
    if args.stats_out.is_some() && (args.mode != MrMode::Summary || args.adjuster.len() != 1) {
        return Err(CliError::Usage("--stats-out needs --mode summary and a single adjuster".into()));
    }
    let mut out = Vec::new();
    for (i, &a) in args.adjuster.iter().enumerate() {
        let est = match args.mode {
            MrMode::Wald => {
                if args.variants.len() != 1 {
                    return Err(CliError::Usage("wald mode takes exactly one variant".into()));
                }
                wald_estimate(&dx, dy_ref, &cols, &args.variants[0], a)?
            }
            MrMode::Tsls => tsls(&dx, &cols, a, args.bootstrap, &RngStream::new(args.seed, i as u64))?,
            MrMode::Summary => {
                let stats = selection_adjusted_summary_stats(&dx, dy_ref, &cols, a)?;
                if let Some(p) = &args.stats_out {
                    let f = fs::File::create(p)
                        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display())))?;
                    stats.write_csv(f)?;
                }
                let mut e = ivw(&stats)?;
                e.adjuster = Some(a);
                e.converged &= stats.converged;
                e.warnings.extend(stats.warnings);
                e
            }
            MrMode::Ivw => unreachable!("handled above"),
        };
        out.push(est);
    }
    Ok(out)
}

pub fn mr(args: &MrArgs) -> CliResult<(MrOutput, Vec<PathBuf>)> {
    let started = timestamp();
    let estimates = mr_estimates(args)?;
    let labels: Vec<String> = estimates.iter().map(CausalEstimate::label).collect();
    let output = MrOutput { schema_version: SCHEMA_VERSION, mode: args.mode, labels, estimates };
    let mut written = Vec::new();
    let plot = args.plot.clone().or_else(|| {
        (output.estimates.len() > 1).then(|| args.out.as_ref().map(|o| o.with_extension("svg"))).flatten()
    });
    if let Some(p) = &plot {
        write_file(p, &forest_plot(&output.estimates, &output.labels)?)?;
        written.push(p.clone());
    }
    if let Some(o) = &args.out {
        let text = serde_json::to_string_pretty(&output).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_file(o, &(text + "\n"))?;
        written.insert(0, o.clone());
        if let Some(s) = &args.stats_out {
            written.push(s.clone());
        }
        let mut m = RunManifest::new("mr", hash(args)?, Some(args.seed), started);
        m.outputs = written.clone();
        written.push(write_manifest(&m, o)?);
    }
    Ok((output, written))
}

pub fn fit_with_manifest(args: &FitArgs) -> CliResult<(FitOutput, Vec<PathBuf>)> {
    let started = timestamp();
    let out = fit(args)?;
    let mut written = Vec::new();
    if let Some(o) = &args.out {
        let text = serde_json::to_string_pretty(&out).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_file(o, &(text + "\n"))?;
        let mut m = RunManifest::new("fit", hash(args)?, None, started);
        m.outputs.push(o.clone());
        written.push(o.clone());
        written.push(write_manifest(&m, o)?);
    }
    Ok((out, written))
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Scenario config file or bundled scenario name.
    pub config: String,
    /// Replication whose data to write; matches the data seen by `simulate`.
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, env = "IVSEL_SEED")]
    pub seed: Option<u64>,
    /// Write the data before missingness is applied.
    #[arg(long)]
    pub complete: bool,
    /// Output CSV. Two-sample designs write `<stem>_exposure.csv` and `<stem>_outcome.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn generate(args: &GenerateArgs) -> CliResult<Vec<PathBuf>> {
    let started = timestamp();
    let mut cfg = load_config(&args.config)?;
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    let cfg = resolve(&cfg)?;
    let mut stream = RngStream::new(cfg.base_seed, args.replication).substream(0);
    let pick = |d: &ivsel_core::sim::Draw| if args.complete { d.complete.clone() } else { d.observed.clone() };
    let files: Vec<(PathBuf, Dataset)> = if cfg.kind == ScenarioKind::Regression {
        vec![(args.out.clone(), pick(&draw_regression(&cfg, &mut stream)?))]
    } else {
        match generate_mr(&cfg, &mut stream)? {
            MrData::OneSample(d) => vec![(args.out.clone(), pick(&d))],
            MrData::TwoSample { exposure, outcome } => {
                let stem = args.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                vec![
                    (args.out.with_file_name(format!("{stem}_exposure.csv")), pick(&exposure)),
                    (args.out.with_file_name(format!("{stem}_outcome.csv")), pick(&outcome)),
                ]
            }
        }
    };
    let mut written = Vec::new();
    for (path, data) in &files {
        let f = fs::File::create(path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        write_dataset(data, std::io::BufWriter::new(f))?;
        written.push(path.clone());
    }
    let mut m = RunManifest::new("generate", hash(&cfg)?, Some(cfg.base_seed), started);
    m.outputs = written.clone();
    written.push(write_manifest(&m, &args.out)?);
    Ok(written)
}
