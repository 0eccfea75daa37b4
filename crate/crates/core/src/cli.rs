//! Command-line front end: `gen-data`, `train-mdn`, `eval-metrics`,
//! `bench` and `oracle-check`.
//!
//! Every parameter can come from `--config <json>` (a flat object, the same
//! shape as the `config.json` echo written to every output directory) and is
//! overridden by explicit flags.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::bench::{linspace, run_worldmodel_bench, separation_report, write_long_csv, WorldModelBenchConfig};
use crate::datasets::{
    gen_inverse_sine_with, gen_transitions_with, read_transitions_csv, transitions_to_dataset, write_transitions_csv,
    Dataset, DatasetKind, DatasetMeta, DatasetSidecar, LatentShiftEnv, TransitionSpec, DATASET_FORMAT_VERSION,
    DEFAULT_LATENT_DIM, DEFAULT_NOISE_STD, DEFAULT_TRAJECTORY_LEN,
};
use crate::gmm::{EntropyEstimator, Mixture, DEFAULT_MC_SAMPLES, QUADRATURE_POINTS};
use crate::mdn::{train, MdnConfig, MdnModel};
use crate::metrics::{all_metrics, write_metric_rows, MetricName, MetricRow};
use crate::oracle::{run_suite, OracleSuiteConfig};
use crate::plot::{separation_plots, LinePlot, Series};
use crate::seed::derive_seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

pub const THREADS_ENV: &str = "MIXMODE_THREADS";

const INJECTED_KL_FAULT: f64 = 1e-3;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(crate::Error),
    CheckFailed(String),
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "mixmode", version, about = "Multimodality metrics for Gaussian mixtures and mixture density networks")]
struct Cli {
    /// Base seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// JSON file with parameters; explicit flags win.
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset.
    #[command(after_help = GEN_DATA_HELP)]
    GenData(GenDataArgs),
    /// Train an MDN on a generated dataset.
    #[command(after_help = TRAIN_HELP)]
    TrainMdn(TrainArgs),
    /// Evaluate MCE, WAKLD, SEMD and JSD.
    #[command(after_help = EVAL_HELP)]
    EvalMetrics(EvalArgs),
    /// Run the unimodal vs multimodal separation benchmark.
    #[command(after_help = BENCH_HELP)]
    Bench(BenchArgs),
    /// Cross-check closed forms against numerical oracles.
    #[command(after_help = ORACLE_HELP)]
    OracleCheck(OracleArgs),
}

const GEN_DATA_HELP: &str = "\
Outputs:
  dataset.csv   inverse-sine: input_0,target_0
                latent-env:   state_0..state_{d-1},action,next_0..next_{d-1},label
  dataset.json  sidecar {format_version, kind, rows, meta}
  config.json   resolved parameters";

const TRAIN_HELP: &str = "\
Outputs:
  checkpoint.json  model checkpoint (format mixmode-mdn)
  history.csv      epoch,nll
  config.json      resolved parameters";

const EVAL_HELP: &str = "\
Input modes (exactly one):
  --mixtures FILE               JSON mixture or array of mixtures {weights, means, stds}
  --checkpoint FILE --grid LO:HI:N   evaluate a 1-D-input model along a grid
  --checkpoint FILE --data FILE      evaluate a model on a dataset
Outputs:
  metrics.csv   sample_id,k,label,mce,wakld,semd,jsd,jsd_n_samples,seed
                (jsd_n_samples is 0 when JSD came from quadrature; seed is the MC seed)
  curves.csv    grid mode only: x,mce,wakld,semd,jsd
  <metric>.svg  grid mode with --plot
  config.json   resolved parameters";

const BENCH_HELP: &str = "\
Outputs:
  bench.csv     k,repetition,label,metric,value (metric means per cell and label)
  summary.json  {result, report}
  report.txt    per-metric smallest separated k and per-k margins
  <metric>.svg  unimodal and multimodal means over k
  config.json   resolved parameters";

const ORACLE_HELP: &str = "\
Outputs:
  oracle_report.json  per-check tolerance, max error, violations, worst draw and seed
  config.json         resolved parameters
Exit code 3 when any check exceeds its tolerance.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Generator {
    InverseSine,
    LatentEnv,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(value_enum)]
    generator: Option<Generator>,
    /// Number of rows (default 3000 for inverse-sine, 10000 for latent-env).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    /// Input noise (inverse-sine, default 1) or observation noise (latent-env, default 0.05).
    #[arg(long)]
    noise_std: Option<f64>,
    /// Share of latent-env samples with the action masked [default: 0.5].
    #[arg(long)]
    mask_fraction: Option<f64>,
    /// Latent dimension [default: 8].
    #[arg(long)]
    d_latent: Option<usize>,
    /// Steps per rollout [default: 10].
    #[arg(long)]
    trajectory_len: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenDataParams {
    generator: Option<Generator>,
    n: Option<usize>,
    noise_std: Option<f64>,
    mask_fraction: f64,
    d_latent: usize,
    trajectory_len: usize,
}

impl Default for GenDataParams {
    fn default() -> Self {
        Self {
            generator: None,
            n: None,
            noise_std: None,
            mask_fraction: 0.5,
            d_latent: DEFAULT_LATENT_DIM,
            trajectory_len: DEFAULT_TRAJECTORY_LEN,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset CSV written by gen-data (its .json sidecar is read too).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Mixture components [default: 5].
    #[arg(long)]
    k: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    epochs: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Adam step size [default: 0.001].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// [default: 100]
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainParams {
    data: Option<PathBuf>,
    k: usize,
    epochs: usize,
    hidden: Vec<usize>,
    learning_rate: f64,
    batch_size: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        let d = MdnConfig::new(1, 1, 5);
        Self {
            data: None,
            k: d.n_components,
            epochs: d.epochs,
            hidden: d.hidden_widths,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint written by train-mdn.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// JSON mixture or array of mixtures.
    #[arg(long)]
    mixtures: Option<PathBuf>,
    /// Dataset CSV to evaluate the checkpoint on.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Input grid LO:HI:N for 1-D-input checkpoints.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridArg>,
    /// Monte Carlo samples for JSD when the output dimension exceeds 1.
    #[arg(long)]
    jsd_samples: Option<usize>,
    /// Write one SVG curve per metric (grid mode).
    #[arg(long)]
    plot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct GridArg {
    lo: f64,
    hi: f64,
    points: usize,
}

fn parse_grid(s: &str) -> std::result::Result<GridArg, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err("expected LO:HI:N".into());
    };
    let lo: f64 = lo.parse().map_err(|e| format!("bad LO: {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("bad HI: {e}"))?;
    let points: usize = n.parse().map_err(|e| format!("bad N: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || points == 0 {
        return Err("need finite LO < HI and N ≥ 1".into());
    }
    Ok(GridArg { lo, hi, points })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalParams {
    checkpoint: Option<PathBuf>,
    mixtures: Option<PathBuf>,
    data: Option<PathBuf>,
    grid: Option<GridArg>,
    jsd_samples: usize,
    plot: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            checkpoint: None,
            mixtures: None,
            data: None,
            grid: None,
            jsd_samples: DEFAULT_MC_SAMPLES,
            plot: false,
        }
    }
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Component counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Independent models per k [default: 3].
    #[arg(long)]
    repetitions: Option<usize>,
    /// Training transitions per model [default: 10000].
    #[arg(long)]
    train_samples: Option<usize>,
    /// Held-out transitions per label [default: 2000].
    #[arg(long)]
    eval_per_label: Option<usize>,
    /// [default: 200]
    #[arg(long)]
    epochs: Option<usize>,
    /// Monte Carlo samples per JSD estimate [default: 4096].
    #[arg(long)]
    jsd_samples: Option<usize>,
    /// Latent dimension [default: 8].
    #[arg(long)]
    d_latent: Option<usize>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Random parameter draws per check [default: 1000].
    #[arg(long)]
    draws: Option<usize>,
    /// Perturb every closed-form KL by 1e-3 to check that the suite notices.
    #[arg(long)]
    inject_fault: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OracleParams {
    draws: usize,
    inject_fault: bool,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            draws: OracleSuiteConfig::default().draws,
            inject_fault: false,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match configure_threads().and_then(|_| dispatch(cli)) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
        Err(CliError::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            EXIT_CHECK_FAILED
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Splits a config file into its seed and the command parameters.
fn load_config<P: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> CliResult<(Option<u64>, P)> {
    let Some(path) = path else {
        return Ok((None, P::default()));
    };
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("config {} is not JSON: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(usage("config must be a JSON object"));
    };
    if let Some(c) = map.remove("command") {
        if c.as_str() != Some(command) {
            return Err(usage(format!("config is for command {c}, not {command:?}")));
        }
    }
    let seed = match map.remove("seed") {
        None => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| usage("config seed must be a non-negative integer"))?),
    };
    let params = serde_json::from_value(Value::Object(map)).map_err(|e| usage(format!("bad config: {e}")))?;
    Ok((seed, params))
}

fn prepare_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| {
        CliError::Runtime(crate::Error::InvalidArgument(format!(
            "cannot create output directory {}: {e}",
            out.display()
        )))
    })
}

fn write_echo<P: Serialize>(out: &Path, command: &str, seed: u64, params: &P) -> CliResult<()> {
    let mut map = serde_json::Map::new();
    map.insert("command".into(), command.into());
    map.insert("seed".into(), seed.into());
    if let Value::Object(p) = serde_json::to_value(params)? {
        map.extend(p);
    }
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&Value::Object(map))? + "\n")?;
    Ok(())
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::GenData(a) => {
            let (seed, mut p): (_, GenDataParams) = load_config(cfg, "gen-data")?;
            if a.generator.is_some() {
                p.generator = a.generator;
            }
            if a.n.is_some() {
                p.n = a.n.map(|n| n as usize);
            }
            if a.noise_std.is_some() {
                p.noise_std = a.noise_std;
            }
            set(&mut p.mask_fraction, a.mask_fraction);
            set(&mut p.d_latent, a.d_latent);
            set(&mut p.trajectory_len, a.trajectory_len);
            gen_data(&cli.out, cli.seed.or(seed).unwrap_or(0), p)
        }
        Command::TrainMdn(a) => {
            let (seed, mut p): (_, TrainParams) = load_config(cfg, "train-mdn")?;
            if a.data.is_some() {
                p.data = a.data;
            }
            set(&mut p.k, a.k);
            set(&mut p.epochs, a.epochs);
            set(&mut p.hidden, a.hidden);
            set(&mut p.learning_rate, a.learning_rate);
            set(&mut p.batch_size, a.batch_size);
            train_mdn(&cli.out, cli.seed.or(seed).unwrap_or(0), p)
        }
        Command::EvalMetrics(a) => {
            let (seed, mut p): (_, EvalParams) = load_config(cfg, "eval-metrics")?;
            for (slot, v) in [(&mut p.checkpoint, a.checkpoint), (&mut p.mixtures, a.mixtures), (&mut p.data, a.data)] {
                if v.is_some() {
                    *slot = v;
                }
            }
            if a.grid.is_some() {
                p.grid = a.grid;
            }
            set(&mut p.jsd_samples, a.jsd_samples);
            p.plot |= a.plot;
            eval_metrics(&cli.out, cli.seed.or(seed).unwrap_or(0), p)
        }
        Command::Bench(a) => {
            let (seed, mut p): (_, BenchParams) = load_config(cfg, "bench")?;
            let c = &mut p.0;
            set(&mut c.k_grid, a.k);
            set(&mut c.repetitions, a.repetitions);
            set(&mut c.train_samples, a.train_samples);
            set(&mut c.eval_per_label, a.eval_per_label);
            set(&mut c.epochs, a.epochs);
            set(&mut c.jsd_samples, a.jsd_samples);
            set(&mut c.d_latent, a.d_latent);
            if let Some(s) = cli.seed.or(seed) {
                c.seed = s;
            }
            bench(&cli.out, p.0)
        }
        Command::OracleCheck(a) => {
            let (seed, mut p): (_, OracleParams) = load_config(cfg, "oracle-check")?;
            set(&mut p.draws, a.draws);
            p.inject_fault |= a.inject_fault;
            oracle_check(&cli.out, cli.seed.or(seed).unwrap_or(0), p)
        }
    }
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn gen_data(out: &Path, seed: u64, mut p: GenDataParams) -> CliResult<()> {
    let generator = p.generator.ok_or_else(|| usage("missing generator (inverse-sine or latent-env)"))?;
    let n = *p.n.get_or_insert(match generator {
        Generator::InverseSine => 3000,
        Generator::LatentEnv => 10_000,
    });
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let csv = out.join("dataset.csv");
    match generator {
        Generator::InverseSine => {
            let noise = *p.noise_std.get_or_insert(1.0);
            if !(noise.is_finite() && noise >= 0.0) {
                return Err(usage("--noise-std must be finite and non-negative"));
            }
            prepare_out(out)?;
            write_echo(out, "gen-data", seed, &p)?;
            let data = gen_inverse_sine_with(n, noise, seed);
            data.write_csv(&csv)?;
            DatasetSidecar {
                format_version: DATASET_FORMAT_VERSION,
                kind: DatasetKind::Regression,
                rows: data.len(),
                meta: data.meta.clone(),
            }
            .write(&sidecar_path(&csv))?;
        }
        Generator::LatentEnv => {
            let noise = *p.noise_std.get_or_insert(DEFAULT_NOISE_STD);
            if !(0.0..=1.0).contains(&p.mask_fraction) {
                return Err(usage("--mask-fraction must lie in [0, 1]"));
            }
            if p.trajectory_len == 0 {
                return Err(usage("--trajectory-len must be at least 1"));
            }
            let env = LatentShiftEnv::with_noise(p.d_latent, noise).map_err(|e| usage(e.to_string()))?;
            prepare_out(out)?;
            write_echo(out, "gen-data", seed, &p)?;
            let spec = TransitionSpec {
                n,
                mask_fraction: p.mask_fraction,
                trajectory_len: p.trajectory_len,
                first_id: 0,
            };
            let samples = gen_transitions_with(&env, &spec, seed)?;
            write_transitions_csv(&csv, &samples)?;
            let meta = DatasetMeta::new("latent-env", seed)
                .with("d_latent", p.d_latent)
                .with("observation_noise_std", noise)
                .with("mask_fraction", p.mask_fraction)
                .with("trajectory_len", p.trajectory_len);
            DatasetSidecar {
                format_version: DATASET_FORMAT_VERSION,
                kind: DatasetKind::Transitions,
                rows: samples.len(),
                meta,
            }
            .write(&sidecar_path(&csv))?;
        }
    }
    println!("wrote {n} rows to {}", csv.display());
    Ok(())
}

/// A loaded dataset plus per-row ids and labels.
struct LoadedData {
    data: Dataset,
    ids: Vec<u64>,
    labels: Vec<String>,
}

fn load_dataset(csv: &Path) -> CliResult<LoadedData> {
    if !csv.exists() {
        return Err(CliError::Runtime(crate::Error::InvalidArgument(format!(
            "dataset {} does not exist",
            csv.display()
        ))));
    }
    let side = sidecar_path(csv);
    let sidecar = if side.exists() {
        Some(DatasetSidecar::read(&side)?)
    } else {
        None
    };
    match sidecar {
        Some(s) if s.kind == DatasetKind::Transitions => {
            let samples = read_transitions_csv(csv)?;
            let data = transitions_to_dataset(&samples, s.meta)?;
            Ok(LoadedData {
                ids: samples.iter().map(|t| t.id).collect(),
                labels: samples.iter().map(|t| t.label.as_str().to_string()).collect(),
                data,
            })
        }
        s => {
            let meta = s.map(|s| s.meta).unwrap_or_else(|| DatasetMeta::new("external", 0));
            let data = Dataset::read_csv(csv, meta)?;
            let n = data.len();
            Ok(LoadedData {
                ids: (0..n as u64).collect(),
                labels: vec!["data".into(); n],
                data,
            })
        }
    }
}

fn train_mdn(out: &Path, seed: u64, p: TrainParams) -> CliResult<()> {
    let path = p.data.clone().ok_or_else(|| usage("--data is required"))?;
    if p.k == 0 || p.epochs == 0 || p.batch_size == 0 || p.hidden.is_empty() || p.hidden.contains(&0) {
        return Err(usage("k, epochs, batch size and hidden widths must be positive"));
    }
    if !(p.learning_rate.is_finite() && p.learning_rate > 0.0) {
        return Err(usage("learning rate must be positive"));
    }
    let loaded = load_dataset(&path)?;
    let config = MdnConfig {
        hidden_widths: p.hidden.clone(),
        seed,
        learning_rate: p.learning_rate,
        batch_size: p.batch_size,
        epochs: p.epochs,
        ..MdnConfig::new(loaded.data.input_dim(), loaded.data.target_dim(), p.k)
    };
    prepare_out(out)?;
    write_echo(out, "train-mdn", seed, &p)?;
    let (model, history) = train(&config, &loaded.data)?;
    model.save(&out.join("checkpoint.json"))?;
    let mut w = csv::Writer::from_path(out.join("history.csv"))?;
    w.write_record(["epoch", "nll"])?;
    for (i, nll) in history.epoch_nll.iter().enumerate() {
        w.write_record([(i + 1).to_string(), nll.to_string()])?;
    }
    w.flush()?;
    println!("trained k={} for {} epochs, final nll {:.6}", p.k, p.epochs, history.final_nll);
    Ok(())
}

fn estimator_for(dim: usize, jsd_samples: usize, seed: u64, idx: usize) -> EntropyEstimator {
    if dim == 1 {
        EntropyEstimator::Quadrature {
            points: QUADRATURE_POINTS,
        }
    } else {
        EntropyEstimator::MonteCarlo {
            samples: jsd_samples,
            seed: derive_seed(seed, &[idx as u64]),
        }
    }
}

fn score_all(mixtures: &[Mixture], jsd_samples: usize, seed: u64, ids: &[u64], labels: &[String]) -> CliResult<Vec<MetricRow>> {
    let rows = mixtures
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let est = estimator_for(m.dim(), jsd_samples, seed, i);
            let s = all_metrics(m, est)?;
            Ok(MetricRow::new(ids[i], m.k(), labels[i].clone(), &s, seed))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(rows)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MixtureFile {
    One(Mixture),
    Many(Vec<Mixture>),
}

fn eval_metrics(out: &Path, seed: u64, p: EvalParams) -> CliResult<()> {
    if p.jsd_samples == 0 {
        return Err(usage("--jsd-samples must be at least 1"));
    }
    let mut curves = None;
    let rows = match (&p.mixtures, &p.checkpoint, &p.grid, &p.data) {
        (Some(path), None, None, None) => {
            let text = fs::read_to_string(path)?;
            let mixtures = match serde_json::from_str::<MixtureFile>(&text)
                .map_err(|e| crate::Error::Format(format!("{}: not a mixture or list of mixtures: {e}", path.display())))?
            {
                MixtureFile::One(m) => vec![m],
                MixtureFile::Many(v) => v,
            };
            prepare_out(out)?;
            write_echo(out, "eval-metrics", seed, &p)?;
            let ids: Vec<u64> = (0..mixtures.len() as u64).collect();
            score_all(&mixtures, p.jsd_samples, seed, &ids, &vec!["mixture".into(); mixtures.len()])?
        }
        (None, Some(ck), Some(grid), None) => {
            let model = MdnModel::load(ck)?;
            if model.config().input_dim != 1 {
                return Err(usage("--grid needs a checkpoint with 1-D input"));
            }
            prepare_out(out)?;
            write_echo(out, "eval-metrics", seed, &p)?;
            let xs = linspace(grid.lo, grid.hi, grid.points);
            let inputs: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
            let mixtures = model.predict(&inputs)?;
            let ids: Vec<u64> = (0..xs.len() as u64).collect();
            let rows = score_all(&mixtures, p.jsd_samples, seed, &ids, &vec!["grid".into(); xs.len()])?;
            curves = Some(xs);
            rows
        }
        (None, Some(ck), None, Some(data)) => {
            let model = MdnModel::load(ck)?;
            let loaded = load_dataset(data)?;
            if loaded.data.input_dim() != model.config().input_dim {
                return Err(usage(format!(
                    "dataset input dimension {} does not match the checkpoint's {}",
                    loaded.data.input_dim(),
                    model.config().input_dim
                )));
            }
            prepare_out(out)?;
            write_echo(out, "eval-metrics", seed, &p)?;
            let mixtures = model.predict(&loaded.data.inputs)?;
            score_all(&mixtures, p.jsd_samples, seed, &loaded.ids, &loaded.labels)?
        }
        _ => {
            return Err(usage(
                "give exactly one of --mixtures, --checkpoint with --grid, or --checkpoint with --data",
            ))
        }
    };
    write_metric_rows(fs::File::create(out.join("metrics.csv"))?, &rows)?;
    if let Some(xs) = curves {
        let mut w = csv::Writer::from_path(out.join("curves.csv"))?;
        w.write_record(["x", "mce", "wakld", "semd", "jsd"])?;
        for (x, r) in xs.iter().zip(&rows) {
            w.write_record([x, &r.mce, &r.wakld, &r.semd, &r.jsd].map(|v| v.to_string()))?;
        }
        w.flush()?;
        if p.plot {
            for m in MetricName::ALL {
                let points = xs
                    .iter()
                    .zip(&rows)
                    .map(|(x, r)| {
                        let v = match m {
                            MetricName::Mce => r.mce,
                            MetricName::Wakld => r.wakld,
                            MetricName::Semd => r.semd,
                            MetricName::Jsd => r.jsd,
                        };
                        (*x, v)
                    })
                    .collect();
                LinePlot {
                    title: format!("{} along the input axis", m.as_str().to_uppercase()),
                    x_label: "x".into(),
                    y_label: m.as_str().to_uppercase(),
                    series: vec![Series::new(m.as_str(), points)],
                }
                .write(&out.join(format!("{}.svg", m.as_str())))?;
            }
        }
    }
    println!("scored {} mixtures into {}", rows.len(), out.join("metrics.csv").display());
    Ok(())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
struct BenchParams(WorldModelBenchConfig);

fn bench(out: &Path, cfg: WorldModelBenchConfig) -> CliResult<()> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    prepare_out(out)?;
    write_echo(out, "bench", cfg.seed, &cfg)?;
    let result = run_worldmodel_bench(&cfg)?;
    let report = separation_report(&result);
    write_long_csv(fs::File::create(out.join("bench.csv"))?, &result.long_rows())?;
    let summary = serde_json::json!({ "result": result, "report": report });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    fs::write(out.join("report.txt"), report.to_string())?;
    for (m, plot) in separation_plots(&result) {
        plot.write(&out.join(format!("{}.svg", m.as_str())))?;
    }
    print!("{report}");
    Ok(())
}

fn oracle_check(out: &Path, seed: u64, p: OracleParams) -> CliResult<()> {
    if p.draws == 0 {
        return Err(usage("--draws must be at least 1"));
    }
    prepare_out(out)?;
    write_echo(out, "oracle-check", seed, &p)?;
    let cfg = OracleSuiteConfig {
        draws: p.draws,
        seed,
        kl_fault: if p.inject_fault { INJECTED_KL_FAULT } else { 0.0 },
    };
    let report = run_suite(&cfg)?;
    fs::write(out.join("oracle_report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    for c in &report.checks {
        println!(
            "{} {}: max error {:.3e} (tolerance {:.0e}) over {} draws, worst draw {} seed {}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.max_error,
            c.tolerance,
            c.draws,
            c.worst_draw.0,
            c.worst_draw.1
        );
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
        Err(CliError::CheckFailed(failed.join(", ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("-1:2:5").unwrap(), GridArg { lo: -1.0, hi: 2.0, points: 5 });
        assert!(parse_grid("1:1:5").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn usage_errors_map_to_exit_1() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let out = out.to_str().unwrap();
        assert_eq!(run(["mixmode", "gen-data", "inverse-sine", "--n", "0", "--out", out]), EXIT_USAGE);
        assert_eq!(run(["mixmode", "no-such-command"]), EXIT_USAGE);
        assert_eq!(run(["mixmode", "eval-metrics", "--out", out]), EXIT_USAGE);
        assert_eq!(run(["mixmode", "--help"]), EXIT_OK);
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"seed": 9, "draws": 3, "inject_fault": false}"#).unwrap();
        let (seed, p): (_, OracleParams) = load_config(Some(&cfg), "oracle-check").unwrap();
        assert_eq!((seed, p.draws), (Some(9), 3));
        fs::write(&cfg, r#"{"command": "bench"}"#).unwrap();
        assert!(load_config::<OracleParams>(Some(&cfg), "oracle-check").is_err());
        fs::write(&cfg, r#"{"drawz": 3}"#).unwrap();
        assert!(load_config::<OracleParams>(Some(&cfg), "oracle-check").is_err());
    }
}
