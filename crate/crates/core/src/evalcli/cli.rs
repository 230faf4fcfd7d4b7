//! Command-line surface of the `rlnd` binary.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use super::config::ExperimentConfig;
use super::experiment::{attack_sweep, evaluate, prepare_cell, run_experiment, write_rows, Cell, CellData, ResultRow};
use super::report::write_report;
use super::synthcheck::{manifold_learning, run_synth_check, CheckResult};
use crate::aae::{train_aae, AAEModel, Checkpoint};
use crate::datasets::{load_idx_dir, ImageDataset};
use crate::error::Error;
use crate::likelihood::LikelihoodModel;
use crate::robust::finetune_robust;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rlnd", version, about = "Robust likelihood novelty detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, Args)]
struct Common {
    /// Experiment config (TOML); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Directory with IDX image/label files.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    inlier_class: Option<u8>,
    /// Outlier percentage of the evaluation mix.
    #[arg(long)]
    pct: Option<u32>,
    #[arg(long)]
    lambda_r: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pretrain the autoencoder for one cell.
    Train {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to write.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the latent and residual densities and select the threshold.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Robust-prior fine-tuning of a calibrated checkpoint.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Synthesis radius; derived from the boundary distances when omitted.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Clean test-set metrics.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Test-set metrics under label-aware attacks of each radius.
    AttackSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        epsilon: Option<Vec<f64>>,
    },
    /// Oracle checks on synthetic manifolds.
    SynthCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also train an autoencoder on a synthetic manifold.
        #[arg(long)]
        with_training: bool,
        #[arg(long, default_value_t = 60)]
        training_epochs: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Aggregate a results CSV into summary.csv and plot.json.
    Report {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Full protocol over every configured cell.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `args` (program name first) and run; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Train { common, output } => {
            let cfg = load_config(&common)?;
            let cell = resolve_cell(&cfg, &common, None);
            let ds = load_dataset(&cfg)?;
            let data = prepare_cell(&ds, &cfg, cell)?;
            let model = AAEModel::new(&cfg.architecture, &mut cell.init_rng())?;
            let out = train_aae(model, &data.train, &cell.aae_config(&cfg))?;
            let path = output.unwrap_or_else(|| cell_dir(&cfg, cell).join("aae.json"));
            let meta = json!({ "method": "baseline", "stage": "train", "cell": cell, "history": out.history });
            Checkpoint::new(out.model, None, meta).save(&path)?;
            println!("{}", path.display());
        }
        Command::Calibrate { common, model, output } => {
            let ckpt = load_checkpoint(&model)?;
            let (cfg, cell, data) = cell_context(&common, &ckpt)?;
            let lm = super::experiment::calibrate(&ckpt.model, &data)?;
            let val = evaluate(&ckpt.model, &lm, &data.val)?;
            log::info!("validation: f1 {:.4} auroc {:.4}", val.f1, val.auroc);
            let path = output.unwrap_or_else(|| derived_path(&common, &cfg, cell, &model, "calibrated.json"));
            let mut meta = ckpt.meta.clone();
            meta["stage"] = json!("calibrate");
            meta["log_gamma"] = json!(lm.log_gamma);
            meta["validation"] = json!(val);
            Checkpoint::new(ckpt.model, Some(lm), meta).save(&path)?;
            println!("{}", path.display());
        }
        Command::Finetune { common, model, output, epsilon } => {
            let ckpt = load_checkpoint(&model)?;
            let lm = require_likelihood(&ckpt, &model)?;
            let (cfg, cell, data) = cell_context(&common, &ckpt)?;
            let mut rcfg = cell.robust_config(&cfg);
            if epsilon.is_some() {
                rcfg.epsilon = epsilon;
            }
            rcfg.validate()?;
            let out = finetune_robust(ckpt.model, lm, &data.train, &data.val, &cell.aae_config(&cfg), &rcfg)?;
            let path = output.unwrap_or_else(|| derived_path(&common, &cfg, cell, &model, "rlnd.json"));
            let meta = json!({
                "method": "rlnd",
                "stage": "finetune",
                "cell": cell,
                "epsilon": out.epsilon,
                "log_gamma": out.lm.log_gamma,
                "history": out.history,
            });
            Checkpoint::new(out.model, Some(out.lm), meta).save(&path)?;
            println!("{}", path.display());
        }
        Command::Eval { common, model } => {
            let ckpt = load_checkpoint(&model)?;
            let lm = require_likelihood(&ckpt, &model)?;
            let (cfg, cell, data) = cell_context(&common, &ckpt)?;
            let m = evaluate(&ckpt.model, &lm, &data.test)?;
            let rows = vec![ResultRow::new(method_of(&ckpt), cell, 0.0, m)];
            emit_rows(&out_dir(&cfg).join("eval.csv"), &rows)?;
        }
        Command::AttackSweep { common, model, epsilon } => {
            let ckpt = load_checkpoint(&model)?;
            let lm = require_likelihood(&ckpt, &model)?;
            let (cfg, cell, data) = cell_context(&common, &ckpt)?;
            let eps = epsilon.unwrap_or_else(|| super::experiment::sweep_epsilons(&cfg));
            if eps.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
                return Err(CliError::Usage("--epsilon values must be finite and >= 0".into()));
            }
            let sweep = attack_sweep(&ckpt.model, &lm, &data.test, &eps, &mut cell.attack_rng())?;
            let method = method_of(&ckpt);
            let rows: Vec<ResultRow> = sweep.into_iter().map(|(e, m)| ResultRow::new(method, cell, e, m)).collect();
            emit_rows(&out_dir(&cfg).join("attack_sweep.csv"), &rows)?;
        }
        Command::SynthCheck { seed, with_training, training_epochs, out_dir } => {
            let mut results = run_synth_check(seed)?;
            if with_training {
                results.push(manifold_learning(seed, training_epochs)?.1);
            }
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if let Some(dir) = out_dir {
                write_json(&dir.join("synth_check.json"), &results)?;
            }
            if !results.iter().all(|r: &CheckResult| r.passed) {
                return Ok(EXIT_RUNTIME);
            }
        }
        Command::Report { input, out_dir } => {
            let dir = out_dir.unwrap_or_else(|| PathBuf::from("results"));
            let input = input.unwrap_or_else(|| dir.join("results.csv"));
            require_file(&input, "results file")?;
            let rows = super::experiment::read_rows(&input)?;
            let summary = write_report(&rows, &dir)?;
            println!("{} summary rows written to {}", summary.len(), dir.display());
        }
        Command::Run { common } => {
            let cfg = load_config(&common)?;
            let ds = load_dataset(&cfg)?;
            let rows = run_experiment(&cfg, &ds);
            let dir = out_dir(&cfg);
            write_rows(&dir.join("results.csv"), &rows)?;
            let text = cfg.to_toml_string()?;
            fs::write(dir.join("config.toml"), text).map_err(|e| Error::io(dir.join("config.toml"), e))?;
            write_report(&rows, &dir)?;
            println!("{} rows written to {}", rows.len(), dir.join("results.csv").display());
            if rows.iter().any(|r| r.auroc.is_nan()) {
                return Ok(EXIT_RUNTIME);
            }
        }
    }
    Ok(EXIT_OK)
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            require_file(path, "config file")?;
            ExperimentConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if let Some(c) = common.inlier_class {
        cfg.inlier_classes = vec![c];
    }
    if let Some(p) = common.pct {
        cfg.outlier_percentages = vec![p];
    }
    if let Some(l) = common.lambda_r {
        cfg.robust.lambda_r = l;
    }
    if let Some(d) = &common.dataset {
        cfg.data.path = d.clone();
    }
    if let Some(o) = &common.out_dir {
        cfg.out_dir = o.clone();
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn load_dataset(cfg: &ExperimentConfig) -> CliResult<ImageDataset> {
    if !cfg.data.path.is_dir() {
        return Err(CliError::Usage(format!("dataset directory {} does not exist", cfg.data.path.display())));
    }
    Ok(load_idx_dir(&cfg.data.path, &cfg.data.name)?)
}

/// The cell from the checkpoint, with explicit flags taking precedence and
/// the config's first entries as fallback.
fn resolve_cell(cfg: &ExperimentConfig, common: &Common, stored: Option<Cell>) -> Cell {
    let base = stored.unwrap_or(Cell { class: cfg.inlier_classes[0], pct: cfg.outlier_percentages[0], seed: cfg.seeds[0] });
    Cell {
        class: common.inlier_class.unwrap_or(base.class),
        pct: common.pct.unwrap_or(base.pct),
        seed: common.seed.unwrap_or(base.seed),
    }
}

fn cell_context(common: &Common, ckpt: &Checkpoint) -> CliResult<(ExperimentConfig, Cell, CellData)> {
    let cfg = load_config(common)?;
    let stored = serde_json::from_value(ckpt.meta["cell"].clone()).ok();
    let cell = resolve_cell(&cfg, common, stored);
    let ds = load_dataset(&cfg)?;
    let data = prepare_cell(&ds, &cfg, cell)?;
    Ok((cfg, cell, data))
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    require_file(path, "model file")?;
    Ok(Checkpoint::load(path)?)
}

fn require_likelihood(ckpt: &Checkpoint, path: &Path) -> CliResult<LikelihoodModel> {
    match &ckpt.likelihood {
        Some(lm) if lm.log_gamma.is_some() => Ok(lm.clone()),
        _ => Err(CliError::Usage(format!("{} is not calibrated; run `rlnd calibrate` first", path.display()))),
    }
}

fn method_of(ckpt: &Checkpoint) -> &str {
    ckpt.meta["method"].as_str().unwrap_or("baseline")
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone()
}

fn cell_dir(cfg: &ExperimentConfig, cell: Cell) -> PathBuf {
    cfg.out_dir.join(cell.tag())
}

/// Next to the input checkpoint unless `--out-dir` is given.
fn derived_path(common: &Common, cfg: &ExperimentConfig, cell: Cell, input: &Path, name: &str) -> PathBuf {
    match (&common.out_dir, input.parent()) {
        (None, Some(dir)) => dir.join(name),
        _ => cell_dir(cfg, cell).join(name),
    }
}

/// Write `rows` to `path` and echo the same bytes to stdout.
fn emit_rows(path: &Path, rows: &[ResultRow]) -> CliResult<()> {
    write_rows(path, rows)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    print!("{text}");
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}
