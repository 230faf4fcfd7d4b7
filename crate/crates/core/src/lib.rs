//! Robust likelihood novelty detection.
//!
//! An isometric adversarial autoencoder learns a data manifold; the novelty
//! score factorizes into a latent density and a density of the distance to
//! the manifold. Robust fine-tuning synthesizes worst-case inliers and
//! outliers along the manifold normal in closed form and trains against a
//! likelihood-ratio prior.

pub mod aae;
pub mod datasets;
pub mod error;
pub mod evalcli;
pub mod likelihood;
pub mod numcore;
pub mod robust;

pub use error::{Error, Result};
