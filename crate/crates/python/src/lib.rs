//! Python bindings: scoring with trained checkpoints, the likelihood model,
//! metrics and data helpers.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use rlnd::aae::{AAEModel, Checkpoint};
use rlnd::datasets::{self, ManifoldKind, SyntheticManifoldSpec};
use rlnd::error::Error;
use rlnd::evalcli;
use rlnd::likelihood;
use rlnd::numcore::Tensor;
use rlnd::robust;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Idx { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Tensor::from_rows(n, d, rows.into_iter().flatten().collect()).map_err(py_err)
}

fn to_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

/// Precision, recall, F1 and AUROC with inliers as the positive class.
#[pyclass(name = "Metrics", get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMetrics {
    precision: f64,
    recall: f64,
    f1: f64,
    auroc: f64,
}

#[pymethods]
impl PyMetrics {
    fn __repr__(&self) -> String {
        format!(
            "Metrics(precision={:.4}, recall={:.4}, f1={:.4}, auroc={:.4})",
            self.precision, self.recall, self.f1, self.auroc
        )
    }
}

impl From<evalcli::Metrics> for PyMetrics {
    fn from(m: evalcli::Metrics) -> Self {
        PyMetrics { precision: m.precision, recall: m.recall, f1: m.f1, auroc: m.auroc }
    }
}

/// Fitted latent and residual-norm densities plus the threshold.
#[pyclass(name = "LikelihoodModel", skip_from_py_object)]
#[derive(Clone)]
struct PyLikelihoodModel {
    inner: likelihood::LikelihoodModel,
}

#[pymethods]
impl PyLikelihoodModel {
    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim
    }

    #[getter]
    fn log_gamma(&self) -> Option<f64> {
        self.inner.log_gamma
    }

    #[getter]
    fn r_cap(&self) -> f64 {
        self.inner.r_cap()
    }

    /// Log of the orthogonal factor at residual norm `r`.
    fn log_orthogonal(&self, r: f64) -> f64 {
        self.inner.log_orthogonal(r).0
    }

    /// Score from a latent code and a residual norm.
    fn score_parts(&self, z: Vec<f64>, r: f64) -> PyResult<f64> {
        if z.len() != self.inner.latent_dim {
            return Err(PyValueError::new_err(format!("expected {} latent values", self.inner.latent_dim)));
        }
        Ok(self.inner.score_parts(&z, r))
    }

    /// Boundary radius for latent code `z`: `(nu0, status)`.
    fn solve_nu0(&self, z: Vec<f64>) -> PyResult<(f64, String)> {
        let b = robust::solve_nu0(&self.inner, &z).map_err(py_err)?;
        Ok((b.nu0, format!("{:?}", b.status)))
    }

    /// Set the threshold to the F1-optimal value on labelled scores.
    fn calibrate(&mut self, scores: Vec<f64>, is_inlier: Vec<bool>) -> PyResult<f64> {
        self.inner.calibrate(&scores, &is_inlier).map_err(py_err)
    }
}

/// A trained autoencoder with its likelihood model, loaded from a checkpoint.
#[pyclass(name = "Detector")]
struct PyDetector {
    model: AAEModel,
    lm: likelihood::LikelihoodModel,
}

#[pymethods]
impl PyDetector {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = Checkpoint::load(&path).map_err(py_err)?;
        let lm = ckpt
            .likelihood
            .ok_or_else(|| PyValueError::new_err(format!("{} has no likelihood model", path.display())))?;
        Ok(PyDetector { model: ckpt.model, lm })
    }

    #[getter]
    fn likelihood(&self) -> PyLikelihoodModel {
        PyLikelihoodModel { inner: self.lm.clone() }
    }

    /// Log-likelihood score of each row.
    fn score(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.lm.log_px(&self.model, &to_tensor(x)?).map_err(py_err)
    }

    /// `True` where the score reaches the threshold.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<bool>> {
        let lg = self.lm.log_gamma().map_err(py_err)?;
        Ok(self.score(x)?.into_iter().map(|s| s >= lg).collect())
    }

    fn reconstruct(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.model.reconstruct(&to_tensor(x)?).map_err(py_err)?))
    }

    /// Metrics on labelled rows at the stored threshold.
    fn evaluate(&self, x: Vec<Vec<f64>>, is_inlier: Vec<bool>) -> PyResult<PyMetrics> {
        let scores = self.score(x)?;
        let lg = self.lm.log_gamma().map_err(py_err)?;
        Ok(evalcli::compute_metrics(&scores, &is_inlier, lg).map_err(py_err)?.into())
    }
}

#[pyfunction]
fn auroc(scores: Vec<f64>, is_inlier: Vec<bool>) -> PyResult<f64> {
    evalcli::auroc(&scores, &is_inlier).map_err(py_err)
}

#[pyfunction]
fn compute_metrics(scores: Vec<f64>, is_inlier: Vec<bool>, log_gamma: f64) -> PyResult<PyMetrics> {
    Ok(evalcli::compute_metrics(&scores, &is_inlier, log_gamma).map_err(py_err)?.into())
}

#[pyfunction]
fn select_gamma(scores: Vec<f64>, is_inlier: Vec<bool>) -> PyResult<f64> {
    likelihood::select_gamma(&scores, &is_inlier).map_err(py_err)
}

/// Samples near a random isometric manifold: `(x, z, residual_norms)`.
#[pyfunction]
#[pyo3(signature = (latent_dim, ambient_dim, noise, n_samples, seed=0, bent=false))]
fn gen_synthetic(
    latent_dim: usize,
    ambient_dim: usize,
    noise: f64,
    n_samples: usize,
    seed: u64,
    bent: bool,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    let mut spec = SyntheticManifoldSpec::linear(latent_dim, ambient_dim, noise);
    if bent {
        spec.kind = ManifoldKind::BentIsometry;
    }
    let set = datasets::gen_synthetic(&spec, n_samples, seed).map_err(py_err)?;
    Ok((to_rows(&set.x), to_rows(&set.z), set.residual_norms))
}

/// Images scaled to `[0, 1]` and labels from an IDX image/label pair.
#[pyfunction]
fn read_idx(images: PathBuf, labels: PathBuf) -> PyResult<(Vec<Vec<f64>>, Vec<u8>)> {
    let ds = datasets::read_idx_dataset(&images, &labels, "idx").map_err(py_err)?;
    Ok((to_rows(&ds.images), ds.labels))
}

#[pymodule]
fn rlnd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMetrics>()?;
    m.add_class::<PyLikelihoodModel>()?;
    m.add_class::<PyDetector>()?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(select_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(read_idx, m)?)?;
    Ok(())
}
