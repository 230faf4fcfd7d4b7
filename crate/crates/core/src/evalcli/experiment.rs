//! The benchmark protocol: split, train, calibrate, fine-tune, evaluate.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{compute_metrics, Metrics};
use crate::aae::{train_aae, AAEModel, AAETrainConfig};
use crate::datasets::{make_fold_splits, make_splits, mix_outliers, EvalSet, ImageDataset, OutlierPool, SplitSpec};
use crate::error::{Error, Result};
use crate::likelihood::LikelihoodModel;
use crate::numcore::Tensor;
use crate::robust::{attack, finetune_robust, RobustConfig};

pub const CSV_HEADER: [&str; 9] = ["method", "class", "pct", "seed", "epsilon", "precision", "recall", "f1", "auroc"];

/// One result line; the field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub class: u8,
    pub pct: u32,
    pub seed: u64,
    pub epsilon: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auroc: f64,
}

impl ResultRow {
    pub fn new(method: &str, cell: Cell, epsilon: f64, m: Metrics) -> Self {
        ResultRow {
            method: method.into(),
            class: cell.class,
            pct: cell.pct,
            seed: cell.seed,
            epsilon,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            auroc: m.auroc,
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics { precision: self.precision, recall: self.recall, f1: self.f1, auroc: self.auroc }
    }
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(Error::Data(format!("{}: unexpected header {header:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

/// Seeds, or fold indices under cross validation.
fn cell_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    match &cfg.cross_validation {
        Some(cv) => (0..cv.folds as u64).collect(),
        None => cfg.seeds.clone(),
    }
}

/// One `(inlier class, outlier percentage, seed)` combination. Under cross
/// validation `seed` is the fold index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub class: u8,
    pub pct: u32,
    pub seed: u64,
}

impl Cell {
    pub fn all(cfg: &ExperimentConfig) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &class in &cfg.inlier_classes {
            for &pct in &cfg.outlier_percentages {
                for seed in cell_seeds(cfg) {
                    cells.push(Cell { class, pct, seed });
                }
            }
        }
        cells
    }

    pub fn tag(&self) -> String {
        format!("c{}_p{}_s{}", self.class, self.pct, self.seed)
    }

    /// Training configurations with the cell's seed mixed in.
    pub fn aae_config(&self, cfg: &ExperimentConfig) -> AAETrainConfig {
        AAETrainConfig { seed: cfg.aae.seed ^ self.seed.wrapping_mul(0x9e37_79b9), ..cfg.aae.clone() }
    }

    pub fn robust_config(&self, cfg: &ExperimentConfig) -> RobustConfig {
        RobustConfig { seed: cfg.robust.seed ^ self.seed.wrapping_mul(0x85eb_ca6b).wrapping_add(1), ..cfg.robust.clone() }
    }

    pub fn init_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(0x51_7cc1))
    }

    pub fn attack_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(0xa77a_c4))
    }
}

/// Training inliers, and validation/test sets with disjoint outliers.
#[derive(Debug, Clone)]
pub struct CellData {
    pub train: Tensor,
    pub val: EvalSet,
    pub test: EvalSet,
}

pub fn prepare_cell(ds: &ImageDataset, cfg: &ExperimentConfig, cell: Cell) -> Result<CellData> {
    let spec = SplitSpec { convention: cfg.outlier_convention, ..SplitSpec::new(cell.class, cell.pct, cell.seed) };
    let mut splits = match &cfg.cross_validation {
        Some(cv) => make_fold_splits(ds, &SplitSpec { seed: cv.seed, ..spec.clone() }, cv.folds, cell.seed as usize)?,
        None => make_splits(ds, &spec)?,
    };
    if let Some(cap) = cfg.max_train {
        splits.train.truncate(cap);
    }
    let mut pool = OutlierPool::new(ds, cell.class, cell.seed);
    let val = mix_outliers(&splits.val, ds, &spec, &mut pool)?;
    let test = mix_outliers(&splits.test, ds, &spec, &mut pool)?;
    Ok(CellData { train: ds.rows(&splits.train), val, test })
}

/// Pretrain the autoencoder, fit both densities and pick the threshold on
/// validation.
pub fn train_baseline(cfg: &ExperimentConfig, cell: Cell, data: &CellData) -> Result<(AAEModel, LikelihoodModel)> {
    let model = AAEModel::new(&cfg.architecture, &mut cell.init_rng())?;
    let model = train_aae(model, &data.train, &cell.aae_config(cfg))?.model;
    let lm = calibrate(&model, data)?;
    Ok((model, lm))
}

pub fn calibrate(model: &AAEModel, data: &CellData) -> Result<LikelihoodModel> {
    let mut lm = LikelihoodModel::fit(model, &data.train)?;
    let scores = lm.log_px(model, &data.val.x)?;
    lm.calibrate(&scores, &data.val.labels)?;
    Ok(lm)
}

pub fn evaluate(model: &AAEModel, lm: &LikelihoodModel, set: &EvalSet) -> Result<Metrics> {
    let scores = lm.log_px(model, &set.x)?;
    compute_metrics(&scores, &set.labels, lm.log_gamma()?)
}

/// Attack every sample by its true label at each radius and rescore with
/// the threshold held fixed.
pub fn attack_sweep(
    model: &AAEModel,
    lm: &LikelihoodModel,
    set: &EvalSet,
    epsilons: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, Metrics)>> {
    let lg = lm.log_gamma()?;
    epsilons
        .iter()
        .map(|&eps| {
            let x = attack(model, &set.x, &set.labels, eps, rng)?;
            let scores = lm.log_px(model, &x)?;
            Ok((eps, compute_metrics(&scores, &set.labels, lg)?))
        })
        .collect()
}

/// `0` followed by the configured radii, without duplicates.
pub fn sweep_epsilons(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut eps = vec![0.0];
    for &e in &cfg.attack_epsilons {
        if !eps.contains(&e) {
            eps.push(e);
        }
    }
    eps
}

/// Models and result rows for one cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub rows: Vec<ResultRow>,
    pub baseline: (AAEModel, LikelihoodModel),
    pub rlnd: (AAEModel, LikelihoodModel),
    pub epsilon: f64,
}

pub fn run_cell(cfg: &ExperimentConfig, ds: &ImageDataset, cell: Cell) -> Result<CellOutcome> {
    let data = prepare_cell(ds, cfg, cell)?;
    log::info!("cell {}: {} train, {} val, {} test", cell.tag(), data.train.rows(), data.val.len(), data.test.len());
    let (model, lm) = train_baseline(cfg, cell, &data)?;
    let eps = sweep_epsilons(cfg);
    let mut rows = Vec::new();
    for (e, m) in attack_sweep(&model, &lm, &data.test, &eps, &mut cell.attack_rng())? {
        rows.push(ResultRow::new("baseline", cell, e, m));
    }
    let out = finetune_robust(
        model.clone(),
        lm.clone(),
        &data.train,
        &data.val,
        &cell.aae_config(cfg),
        &cell.robust_config(cfg),
    )?;
    for (e, m) in attack_sweep(&out.model, &out.lm, &data.test, &eps, &mut cell.attack_rng())? {
        rows.push(ResultRow::new("rlnd", cell, e, m));
    }
    Ok(CellOutcome { rows, baseline: (model, lm), rlnd: (out.model, out.lm), epsilon: out.epsilon })
}

fn failed_rows(cfg: &ExperimentConfig, cell: Cell) -> Vec<ResultRow> {
    let nan = Metrics { precision: f64::NAN, recall: f64::NAN, f1: f64::NAN, auroc: f64::NAN };
    let eps = sweep_epsilons(cfg);
    ["baseline", "rlnd"].iter().flat_map(|m| eps.iter().map(move |&e| ResultRow::new(m, cell, e, nan))).collect()
}

/// Every cell of `cfg`. A failing cell is logged and reported with NaN
/// metrics; the run continues.
pub fn run_experiment(cfg: &ExperimentConfig, ds: &ImageDataset) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for cell in Cell::all(cfg) {
        match run_cell(cfg, ds, cell) {
            Ok(out) => rows.extend(out.rows),
            Err(e) => {
                log::error!("cell {} failed: {e}", cell.tag());
                rows.extend(failed_rows(cfg, cell));
            }
        }
    }
    rows
}
