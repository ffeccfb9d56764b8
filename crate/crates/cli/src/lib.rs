//! `mfdml` command-line driver.

pub mod config;
pub mod error;
pub mod grid;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mfdml::bench::{bench_loss_scaling, fit_loglog_slope, rows_to_csv, BenchRow, BenchSpec};
use mfdml::magnet::{exact_gibbs, solve_self_consistency, MAX_EXACT_SPINS};
use mfdml::train::{evaluate_checkpoint, history_to_jsonl, train, Checkpoint};
use mfdml::{DistanceKind, LossSpec};

use crate::config::{load_source, parse_data_arg, Splits};
pub use crate::config::{RunConfig, Split};
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "mfdml",
    version,
    about = "Mean-field deep metric learning experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write log.jsonl, best.ckpt and report.txt.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Time the losses over a range of batch sizes.
    Bench(BenchArgs),
    /// Grid search over numeric config fields.
    Sweep(SweepArgs),
    /// Mean-field versus exact magnetisation of the infinite-range Ising magnet.
    Magnet(MagnetArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Omit wall-clock times from the log.
    #[arg(long)]
    pub deterministic: bool,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Loss name; switches to that loss's default parameters unless it
    /// matches the configured loss.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub distance: Option<DistanceKind>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file (.csv or .bin), or a synthetic spec as inline JSON or a .json file.
    #[arg(long)]
    pub data: String,
    #[arg(long, default_value = "cosine")]
    pub distance: DistanceKind,
    /// Part of the class-disjoint split to score.
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "contrastive,cwms,mfcont,mfcwms"
    )]
    pub losses: Vec<String>,
    #[arg(
        long = "batch-sizes",
        value_delimiter = ',',
        default_value = "64,128,256,512,1024"
    )]
    pub batch_sizes: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "cosine")]
    pub distance: DistanceKind,
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// For example `beta=50:90:5,delta=[0.6,0.8]`.
    #[arg(long)]
    pub grid: String,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct MagnetArgs {
    #[arg(long, default_value_t = 12)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub j: f64,
    /// Reduced temperatures T/(J·N).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0,1.1,1.2,1.3,1.4,1.5,1.6,1.7,1.8,1.9,2.0"
    )]
    pub temps: Vec<f64>,
    /// Skip exact enumeration (required for N > 16).
    #[arg(long)]
    pub no_exact: bool,
    #[arg(long, default_value = "magnet.csv")]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Magnet(a) => cmd_magnet(a),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) {
    if let Some(seed) = o.seed {
        cfg.train.seed = seed;
    }
    if o.deterministic {
        cfg.train.deterministic = true;
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
}

pub struct RunOutput {
    pub log: String,
    pub checkpoint: Vec<u8>,
    pub report: String,
    pub map_at_r: f64,
}

/// Trains per `cfg` without touching the filesystem beyond reading data.
pub fn run_training(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let splits = Splits::new(load_source(&cfg.data)?)?;
    let eval_ds = splits.get(cfg.eval_split);
    let outcome = train(&cfg.train, &splits.train, eval_ds)?;
    let report = evaluate_checkpoint(&outcome.best, eval_ds, cfg.train.distance)?;
    Ok(RunOutput {
        log: history_to_jsonl(&outcome.history),
        checkpoint: outcome.best.to_bytes(),
        report: report.to_kv_text(),
        map_at_r: report.map_at_r,
    })
}

fn write_run(dir: &Path, out: &RunOutput) -> Result<(), CliError> {
    write_atomic(&dir.join("log.jsonl"), out.log.as_bytes())?;
    write_atomic(&dir.join("best.ckpt"), &out.checkpoint)?;
    write_atomic(&dir.join("report.txt"), out.report.as_bytes())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&a.config)?;
    apply_overrides(&mut cfg, &a.overrides);
    if let Some(name) = &a.loss {
        if name != cfg.train.loss.name() {
            cfg.train.loss =
                LossSpec::by_name(name).map_err(|e| CliError::Config(format!("--loss: {e}")))?;
        }
    }
    if let Some(d) = a.distance {
        cfg.train.distance = d;
    }
    cfg.validate()?;
    let out = run_training(&cfg)?;
    write_run(&cfg.output_dir, &out)?;
    print!("{}", out.report);
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let source = parse_data_arg(&a.data)?;
    let bytes = std::fs::read(&a.checkpoint)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.checkpoint.display())))?;
    let ckpt = Checkpoint::from_bytes(&bytes)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.checkpoint.display())))?;
    let full = load_source(&source)?;
    let report = if a.split == Split::All {
        evaluate_checkpoint(&ckpt, &full, a.distance)?
    } else {
        let splits = Splits::new(full)?;
        evaluate_checkpoint(&ckpt, splits.get(a.split), a.distance)?
    };
    print!("{}", report.to_kv_text());
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    if a.batch_sizes.len() < 3 {
        return Err(CliError::Config(format!(
            "--batch-sizes needs at least 3 sizes for a slope fit, got {}",
            a.batch_sizes.len()
        )));
    }
    let losses = a
        .losses
        .iter()
        .map(|n| LossSpec::by_name(n).map_err(|e| CliError::Config(format!("--losses: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = BenchSpec {
        losses,
        batch_sizes: a.batch_sizes,
        classes: a.classes,
        dim: a.dim,
        repeats: a.repeats,
        seed: a.seed,
        distance: a.distance,
    };
    spec.validate()?;
    let rows = bench_loss_scaling(&spec)?;
    write_atomic(&a.out, rows_to_csv(&rows).as_bytes())?;
    for loss in &spec.losses {
        let mine: Vec<BenchRow> = rows
            .iter()
            .filter(|r| r.loss == loss.name())
            .cloned()
            .collect();
        println!("slope {}={:.3}", loss.name(), fit_loglog_slope(&mine)?);
    }
    Ok(())
}

fn csv_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

fn cmd_sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut base = RunConfig::load(&a.config)?;
    apply_overrides(&mut base, &a.overrides);
    let axes = grid::parse_grid(&a.grid)?;
    let base_value = base.to_value();
    let paths = axes
        .iter()
        .map(|ax| grid::resolve_key(&base_value, &ax.key))
        .collect::<Result<Vec<_>, _>>()?;
    let points = grid::grid_points(&axes);
    // validate every point before training any of them
    let configs = points
        .iter()
        .enumerate()
        .map(|(i, point)| {
            let mut value = base_value.clone();
            for (path, &v) in paths.iter().zip(point) {
                grid::set_number(&mut value, path, v)?;
            }
            let mut cfg = RunConfig::from_value(value)
                .map_err(|e| CliError::Config(format!("grid point {i}: {e}")))?;
            cfg.output_dir = base.output_dir.join(format!("point_{i:03}"));
            Ok(cfg)
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut csv = axes
        .iter()
        .map(|ax| ax.key.as_str())
        .collect::<Vec<_>>()
        .join(",");
    csv.push_str(",map_at_r\n");
    for (point, cfg) in points.iter().zip(&configs) {
        let map_at_r = match run_training(cfg) {
            Ok(out) => {
                write_run(&cfg.output_dir, &out)?;
                out.map_at_r
            }
            Err(CliError::Numerical(msg)) => {
                log::warn!("{}: {msg}", cfg.output_dir.display());
                f64::NAN
            }
            Err(e) => return Err(e),
        };
        let row: Vec<String> = point
            .iter()
            .map(|v| v.to_string())
            .chain([csv_number(map_at_r)])
            .collect();
        println!("{}", row.join(","));
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    write_atomic(&base.output_dir.join("sweep.csv"), csv.as_bytes())
}

const MAGNET_TOL: f64 = 1e-10;
const MAGNET_MAX_ITER: usize = 50_000_000;

fn cmd_magnet(a: MagnetArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(CliError::Config("--n must be >= 1".into()));
    }
    if !a.no_exact && a.n > MAX_EXACT_SPINS {
        return Err(CliError::Config(format!(
            "exact enumeration supports N <= {MAX_EXACT_SPINS}; pass --no-exact for N = {}",
            a.n
        )));
    }
    if !(a.j > 0.0 && a.j.is_finite()) {
        return Err(CliError::Config("--j must be > 0".into()));
    }
    if a.temps.is_empty() || a.temps.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(CliError::Config("--temps must be positive numbers".into()));
    }
    let jn = a.j * a.n as f64;
    let mut csv = String::from("t_over_jn,m_mft,abs_m_exact\n");
    for &t in &a.temps {
        let sol = solve_self_consistency(a.j, a.n, t * jn, 1.0, MAGNET_TOL, MAGNET_MAX_ITER)?;
        let exact = if a.no_exact {
            String::new()
        } else {
            exact_gibbs(a.n, a.j, t * jn)?.mean_abs_spin.to_string()
        };
        csv.push_str(&format!("{t},{},{exact}\n", sol.field));
    }
    write_atomic(&a.out, csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}
