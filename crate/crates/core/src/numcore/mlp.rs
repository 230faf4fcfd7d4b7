//! Dense MLPs with smooth activations and differentiable Jacobians.
//!
//! Layer `k` computes `h_k = act_k(h_{k-1} · W_kᵀ + b_k)` with `W_k` stored
//! `out × in`. Because every activation is twice differentiable, the
//! Jacobian `J = D_L W_L ··· D_1 W_1` (with `D_k = diag(act_k'(pre_k))`) can
//! be assembled from tape ops and differentiated again with respect to the
//! weights.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::tape::{sigmoid, softplus, Gradients, Tape, Var};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Softplus,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Softplus => softplus(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Softplus => sigmoid(x),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }

    fn on_tape<'t>(self, pre: Var<'t>) -> Var<'t> {
        match self {
            Activation::Tanh => pre.tanh(),
            Activation::Softplus => pre.softplus(),
            Activation::Sigmoid => pre.sigmoid(),
            Activation::Identity => pre,
        }
    }

    /// `act'(pre)` as a differentiable node; `None` when it is identically 1.
    fn derivative_on_tape<'t>(self, pre: Var<'t>) -> Option<Var<'t>> {
        match self {
            Activation::Tanh => {
                let t = pre.tanh();
                Some(t.square().neg().add_scalar(1.0))
            }
            Activation::Softplus => Some(pre.sigmoid()),
            Activation::Sigmoid => {
                let s = pre.sigmoid();
                Some(s.mul(&s.neg().add_scalar(1.0)))
            }
            Activation::Identity => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in`
    pub weight: Tensor,
    /// `1 × out`
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// An [`Mlp`]'s parameters registered on a tape.
#[derive(Debug, Clone)]
pub struct MlpVars<'t> {
    layers: Vec<(Var<'t>, Var<'t>, Activation)>,
}

/// Forward pass with the pre-activations kept, for Jacobian products.
#[derive(Debug, Clone)]
pub struct Trace<'t> {
    pub pre: Vec<Var<'t>>,
    pub out: Var<'t>,
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.rows() != 1 || l.bias.cols() != l.out_dim() {
                return Err(Error::shape("Mlp", format!("layer {i} bias {:?}", l.bias.shape())));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::shape(
                    "Mlp",
                    format!("layer {i} emits {} but layer {} takes {}", w[0].out_dim(), i + 1, w[1].in_dim()),
                ));
            }
        }
        Ok(Mlp { layers })
    }

    /// Glorot-uniform weights and zero biases. `widths` includes the input and
    /// output sizes; hidden layers use `hidden`, the last uses `output`.
    pub fn new_random<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer widths {widths:?}")));
        }
        let n_layers = widths.len() - 1;
        let layers = (0..n_layers)
            .map(|i| {
                let (fan_in, fan_out) = (widths[i], widths[i + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new(-limit, limit).expect("positive limit");
                let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
                Dense {
                    weight: Tensor::from_rows(fan_out, fan_in, data).unwrap(),
                    bias: Tensor::zeros(1, fan_out),
                    activation: if i + 1 == n_layers { output } else { hidden },
                }
            })
            .collect();
        Mlp::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn output_activation(&self) -> Activation {
        self.layers.last().unwrap().activation
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.numel() + l.bias.numel()).sum()
    }

    /// Parameters in registration order (`W_1, b_1, W_2, ...`).
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "forward",
                format!("input has {} columns, network expects {}", x.cols(), self.input_dim()),
            ));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite { op: "forward input" });
        }
        Ok(())
    }

    /// Batched forward pass off the tape.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            let mut next = Tensor::zeros(h.rows(), layer.out_dim());
            gemm(&h, false, &layer.weight, true, 0.0, &mut next);
            let act = layer.activation;
            for r in 0..next.rows() {
                for (v, b) in next.row_mut(r).iter_mut().zip(layer.bias.data()) {
                    *v = act.apply(*v + b);
                }
            }
            h = next;
        }
        if !h.is_finite() {
            return Err(Error::NonFinite { op: "forward" });
        }
        Ok(h)
    }

    /// Register parameters on `tape`. With `trainable == false` the weights
    /// enter as constants and receive no gradient.
    pub fn register<'t>(&self, tape: &'t Tape, trainable: bool) -> MlpVars<'t> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let (w, b) = if trainable {
                    (tape.param(l.weight.clone()), tape.param(l.bias.clone()))
                } else {
                    (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
                };
                (w, b, l.activation)
            })
            .collect();
        MlpVars { layers }
    }

    /// Off-tape Jacobian of a single sample, `out × in`.
    pub fn jacobian_value(&self, x: &[f64]) -> Result<Tensor> {
        let tape = Tape::new();
        let vars = self.register(&tape, false);
        let xv = tape.constant(Tensor::row_vector(x));
        self.check_input(&xv.value())?;
        let j = vars.jacobian(xv);
        tape.check()?;
        let out = j.value().clone();
        Ok(out)
    }
}

impl<'t> MlpVars<'t> {
    pub fn input_dim(&self) -> usize {
        self.layers[0].0.dims().1
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().0.dims().0
    }

    pub fn forward(&self, x: Var<'t>) -> Var<'t> {
        self.trace(x).out
    }

    pub fn trace(&self, x: Var<'t>) -> Trace<'t> {
        assert_eq!(x.dims().1, self.input_dim(), "MLP input width");
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for &(w, b, act) in &self.layers {
            let p = h.matmul_nt(&w).add_row(&b);
            pre.push(p);
            h = act.on_tape(p);
        }
        Trace { pre, out: h }
    }

    /// Jacobian of a single sample `x` (`1 × in`) as an `out × in` node.
    ///
    /// Built as `D_L W_L ··· D_1 W_1` in transposed form so each diagonal
    /// scaling is a row broadcast.
    pub fn jacobian(&self, x: Var<'t>) -> Var<'t> {
        assert_eq!(x.dims().0, 1, "jacobian takes a single sample");
        let tr = self.trace(x);
        let mut jt: Option<Var<'t>> = None;
        for (&(w, _, act), &pre) in self.layers.iter().zip(&tr.pre) {
            let wt = w.transpose();
            let next = match jt {
                None => wt,
                Some(j) => j.matmul(&wt),
            };
            jt = Some(match act.derivative_on_tape(pre) {
                Some(d) => next.mul_row(&d),
                None => next,
            });
        }
        jt.unwrap().transpose()
    }

    /// Row-wise `J(x_i) u_i` for a batch: forward-mode tangent propagation
    /// through the same layer products as [`MlpVars::jacobian`].
    pub fn jvp(&self, trace: &Trace<'t>, u: Var<'t>) -> Var<'t> {
        assert_eq!(u.dims(), (trace.pre[0].dims().0, self.input_dim()), "jvp tangent shape");
        let mut t = u;
        for (&(w, _, act), &pre) in self.layers.iter().zip(&trace.pre) {
            t = t.matmul_nt(&w);
            if let Some(d) = act.derivative_on_tape(pre) {
                t = t.mul(&d);
            }
        }
        t
    }

    /// Row-wise `u_iᵀ J(x_i)` for a batch, propagated from the output back
    /// to the input.
    pub fn vjp(&self, trace: &Trace<'t>, u: Var<'t>) -> Var<'t> {
        assert_eq!(u.dims(), (trace.pre[0].dims().0, self.output_dim()), "vjp cotangent shape");
        let mut c = u;
        for (&(w, _, act), &pre) in self.layers.iter().zip(&trace.pre).rev() {
            if let Some(d) = act.derivative_on_tape(pre) {
                c = c.mul(&d);
            }
            c = c.matmul(&w);
        }
        c
    }

    /// Gradients in the order of [`Mlp::params_mut`].
    pub fn grads(&self, g: &Gradients) -> Vec<Tensor> {
        self.layers.iter().flat_map(|&(w, b, _)| [g.get_or_zeros(w), g.get_or_zeros(b)]).collect()
    }
}
