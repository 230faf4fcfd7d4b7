//! Tensors, reverse-mode differentiation, MLPs and Adam.

mod adam;
mod mlp;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use mlp::{Activation, Dense, Mlp, MlpVars, Trace};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
