use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dashlab::attribution::{attribution_matrix, attribution_row, AttributionConfig, AttributionMatrix, EvalPlan, Method};
use dashlab::boost::{fit, Ensemble, TrainConfig};
use dashlab::dash::{run_dash, Aggregator};
use dashlab::experiments::{self, CalibrationLayout, FlipLayout, Protocol, SweepConfig};
use dashlab::report::DisclosureReport;
use dashlab::stability::{correlate_groups, screen, z_test, CorrelationGroups, PairDiagnostic, ScreenResult, Verdict};
use dashlab::synthdata::{load_csv, sample_dataset, save_csv, Dataset, DgpConfig, GroupSpec, TargetColumn};
use dashlab::{Error, Result};

const EXIT_USAGE: u8 = 2;
const EXIT_UNSTABLE: u8 = 3;
const EXIT_IO: u8 = 4;

/// Attribution stability diagnostics and DASH consensus for gradient-boosted trees.
///
/// Exit codes: 0 success, 2 usage error, 3 instability detected, 4 I/O error.
#[derive(Debug, Parser)]
#[command(name = "dashlab", version, args_override_self = true)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Flat key=value file; keys are long flag names. Flags given on the
    /// command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic dataset with equicorrelated feature groups.
    Generate(GenerateArgs),
    /// Fit one boosted ensemble and save it as JSON.
    Train(TrainArgs),
    /// Build an attribution matrix (one row per model seed).
    Attribute(AttributeArgs),
    /// Find correlated groups and screen their pairs on a single model.
    Diagnose(DiagnoseArgs),
    /// Train M models and report the consensus ranking with ties.
    Dash(DashArgs),
    /// Run a named experiment and write its result files.
    Experiment(ExperimentArgs),
    /// Print the instability disclosure for a dataset.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Group layout as COUNTxSIZE, e.g. 4x5.
    #[arg(long, value_parser = parse_groups)]
    groups: (usize, usize),
    /// Within-group correlation.
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent features appended after the groups.
    #[arg(long, default_value_t = 0)]
    extras: usize,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    /// Comma-separated coefficients, one per feature (default: 1 for group
    /// features, 0 for extras).
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(short, long)]
    input: PathBuf,
    /// Response column, by name or 0-based index.
    #[arg(long, default_value = "target")]
    target: String,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let target: TargetColumn = self.target.parse().expect("infallible");
        load_csv(&self.input, &target)
    }
}

#[derive(Debug, Clone, Args)]
struct BoostArgs {
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 0.8)]
    subsample: f64,
    #[arg(long, default_value_t = 1.0)]
    colsample: f64,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
}

impl BoostArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            rounds: self.rounds,
            max_depth: self.depth,
            learning_rate: self.eta,
            subsample: self.subsample,
            colsample: self.colsample,
            min_leaf: self.min_leaf,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct AttrArgs {
    /// shap, permutation or split_count.
    #[arg(long, default_value = "shap")]
    attribution: Method,
    /// Rows held out for global attribution (capped at half the data).
    #[arg(long, default_value_t = 200)]
    eval_size: usize,
    #[arg(long, default_value_t = 50)]
    background_size: usize,
    #[arg(long, default_value_t = 0)]
    eval_seed: u64,
    #[arg(long, default_value_t = 0)]
    background_seed: u64,
}

impl AttrArgs {
    fn config(&self) -> AttributionConfig {
        AttributionConfig {
            method: self.attribution,
            eval_size: self.eval_size,
            background_size: self.background_size,
            eval_slice_seed: self.eval_seed,
            background_seed: self.background_seed,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    boost: BoostArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct AttributeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    boost: BoostArgs,
    #[command(flatten)]
    attr: AttrArgs,
    /// Number of models (matrix rows).
    #[arg(short = 'M', long = "models", default_value_t = 1)]
    models: usize,
    /// Seed of the first model; model i uses seed-base + i.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// Attribute a saved model instead of training new ones.
    #[arg(long, conflicts_with = "models")]
    model: Option<PathBuf>,
    /// Matrix CSV; a JSON sidecar with seeds is written next to it.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    boost: BoostArgs,
    #[command(flatten)]
    attr: AttrArgs,
    /// |Pearson| above which two features join a correlated group.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Confirm flagged pairs with a Z-test over this many models.
    #[arg(long)]
    confirm: bool,
    #[arg(long, default_value_t = 5)]
    confirm_models: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DashArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    boost: BoostArgs,
    #[command(flatten)]
    attr: AttrArgs,
    #[arg(short = 'M', long = "models", default_value_t = 25)]
    models: usize,
    /// mean, median or trimmed:ALPHA.
    #[arg(long, default_value = "mean")]
    method: Aggregator,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// Also save the attribution matrix here.
    #[arg(long)]
    save_matrix: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    boost: BoostArgs,
    #[command(flatten)]
    attr: AttrArgs,
    /// Use a saved attribution matrix instead of training models.
    #[arg(long)]
    attributions: Option<PathBuf>,
    #[arg(short = 'M', long = "models", default_value_t = 25)]
    models: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// Emit the structured report as JSON instead of text.
    #[arg(long)]
    json: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentName {
    RatioSweep,
    FlipSweep,
    Convergence,
    ConditionalSweep,
    SnrCalibration,
    AxiomValidation,
    Benchmark,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    #[arg(long, default_value_t = 50)]
    seeds: usize,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long, default_value_t = 10_000)]
    data_seed_base: u64,
    /// Train every seed on one shared dataset instead of a fresh draw per seed.
    #[arg(long)]
    fixed_data: bool,
    #[command(flatten)]
    boost: BoostArgs,
    #[command(flatten)]
    attr: AttrArgs,
    /// Comma-separated correlations (defaults depend on the experiment).
    #[arg(long, value_delimiter = ',')]
    rhos: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    depths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.5,1")]
    delta_betas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,25")]
    ms: Vec<usize>,
    #[arg(long, default_value = "2x2", value_parser = parse_groups)]
    layout: (usize, usize),
    #[arg(long, default_value_t = 200)]
    resamples: usize,
    #[arg(long, default_value_t = 25)]
    m_dash: usize,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Output directory; files go to OUT/<experiment>/.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn parse_groups(s: &str) -> std::result::Result<(usize, usize), String> {
    let (l, m) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected COUNTxSIZE, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("'{v}': {e}"));
    Ok((parse(l)?, parse(m)?))
}

/// Reads `--config` from the raw arguments and splices the file's entries in
/// right after the subcommand name, so later command-line flags override them.
fn expand_config(raw: Vec<String>) -> std::result::Result<Vec<String>, String> {
    let mut path = None;
    for (i, a) in raw.iter().enumerate() {
        if a == "--config" {
            path = raw.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(raw) };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let mut injected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected key=value", n + 1))?;
        let (k, v) = (k.trim().replace('_', "-"), v.trim());
        match v {
            "true" => injected.push(format!("--{k}")),
            "false" => {}
            _ => injected.push(format!("--{k}={v}")),
        }
    }
    let commands = ["generate", "train", "attribute", "diagnose", "dash", "experiment", "report"];
    let pos = raw
        .iter()
        .position(|a| commands.contains(&a.as_str()))
        .map_or(raw.len(), |p| p + 1);
    let mut out = raw[..pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&raw[pos..]);
    Ok(out)
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = Cli::parse_from(args);
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Parameter(_) => EXIT_USAGE,
                _ => EXIT_IO,
            })
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Attribute(a) => cmd_attribute(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Dash(a) => cmd_dash(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn emit(output: Option<&Path>, body: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, body).map_err(|e| io_error(p, e)),
        None => std::io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| io_error(Path::new("<stdout>"), e)),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<u8> {
    let groups = GroupSpec::new(a.groups.0, a.groups.1, a.rho).with_extras(a.extras);
    let mut cfg = DgpConfig::symmetric(groups, a.n, a.seed);
    cfg.noise_sd = a.noise_sd;
    if let Some(b) = a.betas {
        cfg.betas = b;
    }
    save_csv(&sample_dataset(&cfg)?, &a.output)?;
    Ok(0)
}

fn cmd_train(a: TrainArgs) -> Result<u8> {
    let data = a.data.load()?;
    let e = fit(&data, &a.boost.config(a.seed))?;
    emit(Some(&a.output), &e.to_json()?)?;
    Ok(0)
}

fn cmd_attribute(a: AttributeArgs) -> Result<u8> {
    let data = a.data.load()?;
    let cfg = a.attr.config();
    let matrix = match &a.model {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            let e = Ensemble::from_json(&text)?;
            let plan = EvalPlan::split(&data, &cfg)?;
            let row = attribution_row(&e, &plan, cfg.method, e.seed)?;
            let values = ndarray::Array2::from_shape_vec((1, row.len()), row.values).expect("one row");
            let mut m = AttributionMatrix::new(values, data.names.clone(), cfg.method)?;
            m.seeds = vec![e.seed];
            m.eval_slice_seed = cfg.eval_slice_seed;
            m.background_seed = cfg.background_seed;
            m
        }
        None => attribution_matrix(&data, &a.boost.config(0), a.models, a.seed_base, &cfg)?,
    };
    matrix.save(&a.output)?;
    Ok(0)
}

#[derive(Serialize)]
struct ScreenedPair {
    feature_j: String,
    feature_k: String,
    #[serde(flatten)]
    screen: ScreenResult,
    /// Z-test over the confirmation models, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    confirm: Option<PairDiagnostic>,
    unstable: bool,
}

#[derive(Serialize)]
struct Diagnosis {
    groups: CorrelationGroups,
    names: Vec<String>,
    pairs: Vec<ScreenedPair>,
    flagged: Vec<(String, String)>,
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<u8> {
    let data = a.data.load()?;
    let groups = correlate_groups(data.features.view(), a.threshold);
    let within = groups.within_pairs();
    let train = a.boost.config(a.seed);
    let mut pairs = Vec::with_capacity(within.len());
    if !within.is_empty() {
        let model = fit(&data, &train)?;
        let confirm = if a.confirm {
            Some(attribution_matrix(&data, &train, a.confirm_models, a.seed, &a.attr.config())?)
        } else {
            None
        };
        for &(j, k) in &within {
            let s = screen(&model, (j, k), a.boost.eta)?;
            let z = confirm.as_ref().map(|m| z_test(m, j, k)).transpose()?;
            let unstable = s.flagged && z.as_ref().is_none_or(|d| d.verdict != Verdict::Stable);
            pairs.push(ScreenedPair {
                feature_j: data.names[j].clone(),
                feature_k: data.names[k].clone(),
                screen: s,
                confirm: z,
                unstable,
            });
        }
    }
    let flagged: Vec<(String, String)> = pairs
        .iter()
        .filter(|p| p.unstable)
        .map(|p| (p.feature_j.clone(), p.feature_k.clone()))
        .collect();
    let code = if flagged.is_empty() { 0 } else { EXIT_UNSTABLE };
    let body = match a.format {
        Format::Json => {
            let d = Diagnosis {
                groups,
                names: data.names.clone(),
                pairs,
                flagged,
            };
            serde_json::to_string_pretty(&d)? + "\n"
        }
        Format::Csv => diagnosis_csv(&pairs)?,
    };
    emit(a.output.as_deref(), &body)?;
    Ok(code)
}

fn diagnosis_csv(pairs: &[ScreenedPair]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["feature_j", "feature_k", "p_hat_j", "p_hat_k", "t_eff", "z_split", "flagged", "z", "unstable"])?;
    for p in pairs {
        let z = p.confirm.as_ref().map(|d| d.z.to_string()).unwrap_or_default();
        w.write_record([
            p.feature_j.clone(),
            p.feature_k.clone(),
            p.screen.p_hat_j.to_string(),
            p.screen.p_hat_k.to_string(),
            p.screen.t_eff.to_string(),
            p.screen.z_split.to_string(),
            p.screen.flagged.to_string(),
            z,
            p.unstable.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parameter(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cmd_dash(a: DashArgs) -> Result<u8> {
    let data = a.data.load()?;
    let groups = correlate_groups(data.features.view(), a.threshold);
    let (matrix, result) = run_dash(
        &data,
        &a.boost.config(0),
        a.models,
        a.seed_base,
        &a.attr.config(),
        &groups,
        a.method,
    )?;
    if let Some(p) = &a.save_matrix {
        matrix.save(p)?;
    }
    emit(a.output.as_deref(), &(result.to_json(&data.names)? + "\n"))?;
    Ok(0)
}

fn cmd_report(a: ReportArgs) -> Result<u8> {
    let data = a.data.load()?;
    let groups = correlate_groups(data.features.view(), a.threshold);
    let matrix = match &a.attributions {
        Some(p) => AttributionMatrix::load(p)?,
        None => attribution_matrix(&data, &a.boost.config(0), a.models, a.seed_base, &a.attr.config())?,
    };
    if matrix.n_features() != data.n_features() {
        return Err(Error::Parameter(format!(
            "attribution matrix has {} features but the data has {}",
            matrix.n_features(),
            data.n_features()
        )));
    }
    let report = DisclosureReport::build(&matrix, &groups)?;
    let body = if a.json {
        serde_json::to_string_pretty(&report)? + "\n"
    } else {
        report.render()
    };
    emit(a.output.as_deref(), &body)?;
    Ok(0)
}

fn cmd_experiment(a: ExperimentArgs) -> Result<u8> {
    let cfg = SweepConfig {
        n_samples: a.n,
        train: a.boost.config(0),
        attribution: a.attr.config(),
        seeds: a.seeds,
        seed_base: a.seed_base,
        data_seed_base: a.data_seed_base,
        protocol: if a.fixed_data {
            Protocol::FixedData
        } else {
            Protocol::PerSeedData
        },
    };
    let rhos = |default: &[f64]| a.rhos.clone().unwrap_or_else(|| default.to_vec());
    let layout = FlipLayout::with_groups(a.layout.0, a.layout.1);
    let out = match a.name {
        ExperimentName::RatioSweep => {
            experiments::run_ratio_sweep(&a.depths, &rhos(&[0.0, 0.3, 0.5, 0.7, 0.9, 0.95]), &cfg)?
        }
        ExperimentName::FlipSweep => experiments::run_flip_sweep(&rhos(&[0.0, 0.3, 0.5, 0.7, 0.9, 0.95]), &layout, &cfg)?,
        ExperimentName::Convergence => {
            let rho = rhos(&[0.9])[0];
            experiments::run_convergence(rho, &a.ms, &layout, a.resamples, &cfg)?
        }
        ExperimentName::ConditionalSweep => {
            experiments::run_conditional_sweep(&rhos(&[0.5, 0.7, 0.9, 0.95, 0.99]), &a.delta_betas, &cfg)?
        }
        ExperimentName::SnrCalibration => {
            let layout = CalibrationLayout {
                rhos: rhos(&CalibrationLayout::default().rhos),
                ..CalibrationLayout::default()
            };
            experiments::run_snr_calibration(&layout, &cfg)?
        }
        ExperimentName::AxiomValidation => {
            experiments::run_axiom_validation(rhos(&[0.9])[0], a.boost.rounds, &cfg)?
        }
        ExperimentName::Benchmark => {
            experiments::run_benchmark(&rhos(&[0.5, 0.7, 0.9]), a.m_dash, a.trials, a.resamples, &cfg)?
        }
    };
    let dir = out.write_to(&a.out)?;
    let mut summary = BTreeMap::new();
    summary.insert("directory", dir.display().to_string());
    for (k, v) in &out.fitted {
        summary.insert(k.as_str(), v.to_string());
    }
    for (k, v) in summary {
        println!("{k}: {v}");
    }
    for note in &out.notes {
        println!("note: {note}");
    }
    Ok(0)
}
