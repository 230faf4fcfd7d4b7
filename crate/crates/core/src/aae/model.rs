use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::LikelihoodModel;
use crate::numcore::{Activation, Dense, Mlp, Tensor};

/// Layer widths and activations for the four networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub ambient_dim: usize,
    pub latent_dim: usize,
    /// Hidden widths of the encoder, input side first. The decoder mirrors them.
    pub encoder_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    /// `sigmoid` for pixel data, `identity` for real-valued data.
    pub decoder_output: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            ambient_dim: 784,
            latent_dim: 16,
            encoder_hidden: vec![256, 128],
            discriminator_hidden: vec![128, 64],
            hidden_activation: Activation::Tanh,
            decoder_output: Activation::Sigmoid,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.latent_dim >= self.ambient_dim {
            return Err(Error::Config(format!(
                "latent_dim {} must be in [1, ambient_dim = {})",
                self.latent_dim, self.ambient_dim
            )));
        }
        if self.encoder_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Decoder `f`, encoder `g` and the two discriminators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AAEModel {
    pub f: Mlp,
    pub g: Mlp,
    pub dx: Mlp,
    pub dz: Mlp,
}

impl AAEModel {
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let (m, n) = (arch.ambient_dim, arch.latent_dim);
        let hid = arch.hidden_activation;
        let chain = |first: usize, hidden: &[usize], last: usize| {
            let mut w = vec![first];
            w.extend_from_slice(hidden);
            w.push(last);
            w
        };
        let mut dec_hidden = arch.encoder_hidden.clone();
        dec_hidden.reverse();
        let g = Mlp::new_random(&chain(m, &arch.encoder_hidden, n), hid, Activation::Identity, rng)?;
        let f = Mlp::new_random(&chain(n, &dec_hidden, m), hid, arch.decoder_output, rng)?;
        let dx = Mlp::new_random(&chain(m, &arch.discriminator_hidden, 1), hid, Activation::Sigmoid, rng)?;
        let dz = Mlp::new_random(&chain(n, &arch.discriminator_hidden, 1), hid, Activation::Sigmoid, rng)?;
        Self::from_parts(f, g, dx, dz)
    }

    /// Assemble a model, checking that the four networks fit together.
    pub fn from_parts(f: Mlp, g: Mlp, dx: Mlp, dz: Mlp) -> Result<Self> {
        let (m, n) = (g.input_dim(), g.output_dim());
        let ok = f.input_dim() == n
            && f.output_dim() == m
            && dx.input_dim() == m
            && dx.output_dim() == 1
            && dz.input_dim() == n
            && dz.output_dim() == 1
            && n < m;
        if !ok {
            return Err(Error::shape(
                "AAEModel",
                format!(
                    "f {}→{}, g {}→{}, D_x {}→{}, D_z {}→{}",
                    f.input_dim(),
                    f.output_dim(),
                    g.input_dim(),
                    g.output_dim(),
                    dx.input_dim(),
                    dx.output_dim(),
                    dz.input_dim(),
                    dz.output_dim()
                ),
            ));
        }
        Ok(AAEModel { f, g, dx, dz })
    }

    /// Exact linear autoencoder for the subspace spanned by the orthonormal
    /// columns of `basis` (`m × n`): `f(z) = Qz`, `g(x) = Qᵀx`. The
    /// discriminators are random.
    pub fn from_linear_basis<R: Rng + ?Sized>(basis: &Tensor, disc_hidden: &[usize], rng: &mut R) -> Result<Self> {
        let (m, n) = (basis.rows(), basis.cols());
        let linear = |w: Tensor| {
            let out = w.rows();
            Mlp::from_layers(vec![Dense { weight: w, bias: Tensor::zeros(1, out), activation: Activation::Identity }])
        };
        let chain = |first: usize| {
            let mut w = vec![first];
            w.extend_from_slice(disc_hidden);
            w.push(1);
            w
        };
        let dx = Mlp::new_random(&chain(m), Activation::Tanh, Activation::Sigmoid, rng)?;
        let dz = Mlp::new_random(&chain(n), Activation::Tanh, Activation::Sigmoid, rng)?;
        Self::from_parts(linear(basis.clone())?, linear(basis.transpose())?, dx, dz)
    }

    pub fn ambient_dim(&self) -> usize {
        self.g.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.g.output_dim()
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.g.forward(x)
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.f.forward(z)
    }

    /// `f(g(x))`.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.decode(&self.encode(x)?)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model state: JSON with shortest round-trip float formatting, so
/// a save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: AAEModel,
    #[serde(default)]
    pub likelihood: Option<LikelihoodModel>,
    /// Free-form provenance (config, seed, stage).
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(model: AAEModel, likelihood: Option<LikelihoodModel>, meta: serde_json::Value) -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, model, likelihood, meta }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: version {} not supported (expected {CHECKPOINT_VERSION})",
                path.display(),
                ck.version
            )));
        }
        let m = &ck.model;
        AAEModel::from_parts(m.f.clone(), m.g.clone(), m.dx.clone(), m.dz.clone())?;
        if let Some(lm) = &ck.likelihood {
            if lm.ambient_dim != m.ambient_dim() || lm.latent_dim != m.latent_dim() {
                return Err(Error::Checkpoint("likelihood dimensions disagree with the model".into()));
            }
        }
        Ok(ck)
    }
}
