//! Image datasets, the train/validation/test protocol, outlier mixing and
//! synthetic manifolds with known ground truth.

mod idx;
mod synthetic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub use idx::{load_idx_dir, parse_idx, read_idx, read_idx_dataset, IdxArray, IMAGE_MAGIC, LABEL_MAGIC};
pub use synthetic::{gen_synthetic, ManifoldKind, SyntheticManifoldSpec, SyntheticSet};

/// Images as rows of pixel intensities in `[0, 1]` with class labels.
#[derive(Debug, Clone)]
pub struct ImageDataset {
    pub images: Tensor,
    pub labels: Vec<u8>,
    pub source: String,
}

impl ImageDataset {
    pub fn new(images: Tensor, labels: Vec<u8>, source: &str) -> Result<Self> {
        if images.rows() == 0 {
            return Err(Error::Data("empty dataset".into()));
        }
        if images.rows() != labels.len() {
            return Err(Error::Data(format!("{} images but {} labels", images.rows(), labels.len())));
        }
        if let Some(v) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("pixel value {v} outside [0, 1]")));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::Data(format!("label {l} outside 0..=9")));
        }
        Ok(ImageDataset { images, labels, source: source.to_string() })
    }

    pub fn concat(parts: Vec<ImageDataset>) -> Result<Self> {
        let source = parts[0].source.clone();
        let dim = parts[0].dim();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.dim() != dim {
                return Err(Error::Data(format!("cannot concat {dim}- and {}-pixel images", p.dim())));
            }
            labels.extend(p.labels);
            data.extend(p.images.into_data());
        }
        ImageDataset::new(Tensor::from_rows(labels.len(), dim, data)?, labels, &source)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    pub fn class_indices(&self, class: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn rows(&self, idx: &[usize]) -> Tensor {
        self.images.select_rows(idx)
    }
}

/// How an outlier percentage is turned into a count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierConvention {
    /// Percentage of the final evaluation set (50% means equal counts).
    #[default]
    TotalSet,
    /// Percentage of the inlier count.
    InlierRelative,
}

pub const OUTLIER_PERCENTAGES: [u32; 5] = [10, 20, 30, 40, 50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub inlier_class: u8,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub outlier_pct: u32,
    pub seed: u64,
    #[serde(default)]
    pub convention: OutlierConvention,
}

impl SplitSpec {
    pub fn new(inlier_class: u8, outlier_pct: u32, seed: u64) -> Self {
        SplitSpec {
            inlier_class,
            train_frac: 0.6,
            val_frac: 0.2,
            test_frac: 0.2,
            outlier_pct,
            seed,
            convention: OutlierConvention::TotalSet,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.train_frac + self.val_frac + self.test_frac;
        if (total - 1.0).abs() > 1e-9 || [self.train_frac, self.val_frac, self.test_frac].iter().any(|f| *f <= 0.0) {
            return Err(Error::Config(format!("split ratios must be positive and sum to 1, got {total}")));
        }
        if !OUTLIER_PERCENTAGES.contains(&self.outlier_pct) {
            return Err(Error::Config(format!(
                "outlier percentage {} not in {OUTLIER_PERCENTAGES:?}",
                self.outlier_pct
            )));
        }
        Ok(())
    }

    /// Number of outliers to pair with `n_inliers`.
    pub fn outlier_count(&self, n_inliers: usize) -> usize {
        let p = f64::from(self.outlier_pct) / 100.0;
        let n = n_inliers as f64;
        match self.convention {
            OutlierConvention::TotalSet => (n * p / (1.0 - p)).round() as usize,
            OutlierConvention::InlierRelative => (n * p).round() as usize,
        }
    }
}

/// Disjoint index sets into the source dataset, all from the inlier class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffle the inlier class with the split seed and cut it by the ratios.
/// Train takes `floor`, validation `round`, test the remainder.
pub fn make_splits(ds: &ImageDataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let mut idx = ds.class_indices(spec.inlier_class);
    if idx.is_empty() {
        return Err(Error::Data(format!("class {} absent from {}", spec.inlier_class, ds.source)));
    }
    if idx.len() < 3 {
        return Err(Error::Data(format!("class {} has only {} samples", spec.inlier_class, idx.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let n = idx.len() as f64;
    let n_train = (n * spec.train_frac).floor() as usize;
    let n_val = (n * spec.val_frac).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= idx.len() {
        return Err(Error::Data(format!("{} samples are too few to split", idx.len())));
    }
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(Splits { train: idx, val, test })
}

/// Rotating `folds`-fold split: the inlier class is shuffled with the split
/// seed and cut into `folds` near-equal parts; part `fold` is the test set,
/// the next one (cyclically) validation, and the rest training.
pub fn make_fold_splits(ds: &ImageDataset, spec: &SplitSpec, folds: usize, fold: usize) -> Result<Splits> {
    if folds < 3 || fold >= folds {
        return Err(Error::Config(format!("fold {fold} of {folds} (need at least 3 folds)")));
    }
    let mut idx = ds.class_indices(spec.inlier_class);
    if idx.len() < folds {
        return Err(Error::Data(format!("class {} has only {} samples", spec.inlier_class, idx.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let bounds: Vec<usize> = (0..=folds).map(|k| k * idx.len() / folds).collect();
    let part = |k: usize| idx[bounds[k]..bounds[k + 1]].to_vec();
    let val_fold = (fold + 1) % folds;
    let train = (0..folds).filter(|&k| k != fold && k != val_fold).flat_map(part).collect();
    Ok(Splits { train, val: part(val_fold), test: part(fold) })
}

/// Shuffled indices of every non-inlier sample, consumed without
/// replacement so validation and test outliers never overlap.
#[derive(Debug, Clone)]
pub struct OutlierPool {
    idx: Vec<usize>,
    cursor: usize,
}

impl OutlierPool {
    pub fn new(ds: &ImageDataset, inlier_class: u8, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] != inlier_class).collect();
        // Offset so the pool shuffle is not the split shuffle.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        idx.shuffle(&mut rng);
        OutlierPool { idx, cursor: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.idx.len() - self.cursor
    }

    pub fn take(&mut self, k: usize) -> Result<Vec<usize>> {
        if k > self.remaining() {
            return Err(Error::Data(format!("outlier pool has {} samples, {k} requested", self.remaining())));
        }
        let out = self.idx[self.cursor..self.cursor + k].to_vec();
        self.cursor += k;
        Ok(out)
    }
}

/// Samples with inlier/outlier ground truth.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub x: Tensor,
    /// `true` for inliers.
    pub labels: Vec<bool>,
    /// Row indices into the source dataset.
    pub source_idx: Vec<usize>,
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn outlier_fraction(&self) -> f64 {
        self.labels.iter().filter(|l| !**l).count() as f64 / self.len() as f64
    }
}

/// Append outliers drawn from `pool` to the inlier rows `inliers`.
pub fn mix_outliers(
    inliers: &[usize],
    ds: &ImageDataset,
    spec: &SplitSpec,
    pool: &mut OutlierPool,
) -> Result<EvalSet> {
    if let Some(&bad) = inliers.iter().find(|&&i| ds.labels[i] != spec.inlier_class) {
        return Err(Error::Data(format!("row {bad} is not of inlier class {}", spec.inlier_class)));
    }
    let outliers = pool.take(spec.outlier_count(inliers.len()))?;
    if outliers.iter().any(|&i| ds.labels[i] == spec.inlier_class) {
        return Err(Error::Data("outlier pool contains inlier-class samples".into()));
    }
    let mut source_idx = inliers.to_vec();
    source_idx.extend_from_slice(&outliers);
    let mut labels = vec![true; inliers.len()];
    labels.extend(std::iter::repeat_n(false, outliers.len()));
    Ok(EvalSet { x: ds.rows(&source_idx), labels, source_idx })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_rotate_and_cover_the_class() {
        let ds = toy(50);
        let spec = SplitSpec::new(4, 50, 9);
        let mut tests = Vec::new();
        for fold in 0..5 {
            let s = make_fold_splits(&ds, &spec, 5, fold).unwrap();
            assert_eq!((s.train.len(), s.val.len(), s.test.len()), (30, 10, 10));
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), 50);
            assert_eq!(s.val, make_fold_splits(&ds, &spec, 5, (fold + 1) % 5).unwrap().test);
            tests.extend(s.test);
        }
        tests.sort_unstable();
        assert_eq!(tests, ds.class_indices(4));
        assert!(make_fold_splits(&ds, &spec, 5, 5).is_err());
    }

    fn toy(n_per_class: usize) -> ImageDataset {
        let n = n_per_class * 10;
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let images = Tensor::from_rows(n, 4, (0..n * 4).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        ImageDataset::new(images, labels, "toy").unwrap()
    }

    #[test]
    fn hundred_inliers_split_sixty_twenty_twenty() {
        let ds = toy(100);
        let s = make_splits(&ds, &SplitSpec::new(3, 50, 7)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60, 20, 20));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, ds.class_indices(3));
    }

    #[test]
    fn splits_are_seeded() {
        let ds = toy(50);
        let a = make_splits(&ds, &SplitSpec::new(1, 10, 5)).unwrap();
        let b = make_splits(&ds, &SplitSpec::new(1, 10, 5)).unwrap();
        let c = make_splits(&ds, &SplitSpec::new(1, 10, 6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_errors() {
        let ds = toy(1);
        assert!(make_splits(&ds, &SplitSpec::new(2, 10, 0)).is_err());
        let mut labels = vec![0u8; 10];
        labels[0] = 1;
        let ds = ImageDataset::new(Tensor::zeros(10, 2), labels, "t").unwrap();
        assert!(make_splits(&ds, &SplitSpec::new(5, 10, 0)).is_err());
        let mut bad = SplitSpec::new(0, 15, 0);
        assert!(make_splits(&ds, &bad).is_err());
        bad.outlier_pct = 10;
        bad.train_frac = 0.7;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn outlier_counts_follow_convention() {
        let spec = SplitSpec::new(0, 50, 0);
        assert_eq!(spec.outlier_count(100), 100);
        assert_eq!(SplitSpec::new(0, 10, 0).outlier_count(90), 10);
        let mut rel = SplitSpec::new(0, 10, 0);
        rel.convention = OutlierConvention::InlierRelative;
        assert_eq!(rel.outlier_count(90), 9);
    }

    #[test]
    fn mixing_is_seeded_and_never_uses_inlier_class() {
        let ds = toy(30);
        let spec = SplitSpec::new(4, 50, 11);
        let s = make_splits(&ds, &spec).unwrap();
        let mut pool = OutlierPool::new(&ds, 4, spec.seed);
        let val = mix_outliers(&s.val, &ds, &spec, &mut pool).unwrap();
        let test = mix_outliers(&s.test, &ds, &spec, &mut pool).unwrap();
        assert_eq!(val.len(), 2 * s.val.len());
        assert!((val.outlier_fraction() - 0.5).abs() < 1e-12);
        for (i, &src) in val.source_idx.iter().enumerate() {
            assert_eq!(ds.labels[src] == 4, val.labels[i]);
        }
        let val_out: Vec<_> = val.source_idx.iter().filter(|&&i| ds.labels[i] != 4).collect();
        assert!(test.source_idx.iter().all(|i| !val_out.contains(&i)));

        let mut pool2 = OutlierPool::new(&ds, 4, spec.seed);
        let again = mix_outliers(&s.val, &ds, &spec, &mut pool2).unwrap();
        assert_eq!(again.source_idx, val.source_idx);
    }

    #[test]
    fn pool_exhaustion_is_an_error() {
        let ds = toy(2);
        let spec = SplitSpec::new(0, 50, 0);
        let mut pool = OutlierPool::new(&ds, 0, 0);
        assert_eq!(pool.remaining(), 18);
        assert!(pool.take(19).is_err());
        assert!(mix_outliers(&[1], &ds, &spec, &mut pool).is_err());
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let images = Tensor::from_rows(1, 2, vec![0.5, 1.5]).unwrap();
        assert!(ImageDataset::new(images, vec![0], "t").is_err());
    }
}
