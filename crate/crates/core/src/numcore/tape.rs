//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Every operation on a [`Var`] evaluates eagerly and appends a node holding
//! its value and enough context for the vector-Jacobian product. A tape lives
//! for one minibatch; [`Tape::backward`] walks it once in reverse.
//!
//! Elementwise nonlinearities cache their local derivative as a plain tensor,
//! so they are differentiable once. Quantities that must themselves be
//! differentiated (activation derivatives inside a Jacobian) are built by
//! composing tape ops, which keeps every order of derivative on the graph.
//!
//! Shape misuse inside a graph is a programming error and panics. A
//! non-finite value is recorded as a fault on the tape and surfaces as an
//! error from [`Tape::check`] or [`Tape::backward`].

use std::cell::{Cell, Ref, RefCell};

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    AddRow { a: usize, row: usize },
    MulRow { a: usize, row: usize },
    MulCol { a: usize, col: usize },
    Scale { a: usize, c: f64 },
    Shift { a: usize },
    Map { a: usize, deriv: Tensor },
    SumAll { a: usize },
    SumRows { a: usize },
    Transpose { a: usize },
    LogMeanExp { a: usize, weights: Tensor },
    RowNorm { a: usize },
    BceMean { a: usize, deriv: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Computation record for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    fault: Cell<Option<&'static str>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (r, c) = self.dims();
        write!(f, "Var(#{} {r}x{c})", self.id)
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient for `var`, zeros if nothing flowed into it.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = var.dims();
                Tensor::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives gradients.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    /// A leaf treated as data: no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    fn leaf(&self, value: Tensor, needs_grad: bool) -> Var<'_> {
        assert!(value.shape().len() == 2, "tape tensors are rank 2");
        self.push(value, Op::Leaf, needs_grad, "leaf")
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool, name: &'static str) -> Var<'_> {
        if self.fault.get().is_none() && !value.is_finite() {
            self.fault.set(Some(name));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, needs_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// Error if any recorded value was non-finite.
    pub fn check(&self) -> Result<()> {
        match self.fault.get() {
            Some(op) => Err(Error::NonFinite { op }),
            None => Ok(()),
        }
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::InvalidArgument("loss belongs to a different tape".into()));
        }
        self.check()?;
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::shape("backward", format!("loss must be scalar, got {:?}", root.value.shape())));
        }
        if !root.needs_grad {
            return Err(Error::InvalidArgument("loss does not depend on any parameter".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            backprop_node(&nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, delta: Tensor) {
    match &mut grads[id] {
        Some(g) => g.add_assign_scaled(&delta, 1.0),
        slot @ None => *slot = Some(delta),
    }
}

fn backprop_node(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let needs = |id: usize| nodes[id].needs_grad;
    let val = |id: usize| &nodes[id].value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b, ta, tb } => {
            let (av, bv) = (val(*a), val(*b));
            if needs(*a) {
                let mut da = Tensor::zeros(av.rows(), av.cols());
                if *ta {
                    // A' = op(B) · gᵀ
                    gemm(bv, *tb, g, true, 0.0, &mut da);
                } else {
                    gemm(g, false, bv, !*tb, 0.0, &mut da);
                }
                accumulate(grads, *a, da);
            }
            if needs(*b) {
                let mut db = Tensor::zeros(bv.rows(), bv.cols());
                if *tb {
                    gemm(g, true, av, *ta, 0.0, &mut db);
                } else {
                    gemm(av, !*ta, g, false, 0.0, &mut db);
                }
                accumulate(grads, *b, db);
            }
        }
        Op::Add { a, b } => {
            if needs(*a) {
                accumulate(grads, *a, g.clone());
            }
            if needs(*b) {
                accumulate(grads, *b, g.clone());
            }
        }
        Op::Sub { a, b } => {
            if needs(*a) {
                accumulate(grads, *a, g.clone());
            }
            if needs(*b) {
                accumulate(grads, *b, g.map(|v| -v));
            }
        }
        Op::Mul { a, b } => {
            if needs(*a) {
                accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y));
            }
            if needs(*b) {
                accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y));
            }
        }
        Op::AddRow { a, row } => {
            if needs(*a) {
                accumulate(grads, *a, g.clone());
            }
            if needs(*row) {
                accumulate(grads, *row, column_sums(g));
            }
        }
        Op::MulRow { a, row } => {
            let (av, rv) = (val(*a), val(*row));
            let cols = av.cols();
            if needs(*a) {
                let mut da = g.clone();
                for r in 0..da.rows() {
                    for (x, w) in da.row_mut(r).iter_mut().zip(rv.data()) {
                        *x *= w;
                    }
                }
                accumulate(grads, *a, da);
            }
            if needs(*row) {
                let mut dr = Tensor::zeros(1, cols);
                for r in 0..av.rows() {
                    for ((acc, x), gv) in dr.data_mut().iter_mut().zip(av.row(r)).zip(g.row(r)) {
                        *acc += x * gv;
                    }
                }
                accumulate(grads, *row, dr);
            }
        }
        Op::MulCol { a, col } => {
            let (av, cv) = (val(*a), val(*col));
            if needs(*a) {
                let mut da = g.clone();
                for r in 0..da.rows() {
                    let w = cv.data()[r];
                    da.row_mut(r).iter_mut().for_each(|x| *x *= w);
                }
                accumulate(grads, *a, da);
            }
            if needs(*col) {
                let dc: Vec<f64> = (0..av.rows())
                    .map(|r| av.row(r).iter().zip(g.row(r)).map(|(x, y)| x * y).sum())
                    .collect();
                accumulate(grads, *col, Tensor::col_vector(&dc));
            }
        }
        Op::Scale { a, c } => {
            if needs(*a) {
                accumulate(grads, *a, g.map(|v| v * c));
            }
        }
        Op::Shift { a } => {
            if needs(*a) {
                accumulate(grads, *a, g.clone());
            }
        }
        Op::Map { a, deriv } => {
            if needs(*a) {
                accumulate(grads, *a, g.zip_map(deriv, |x, d| x * d));
            }
        }
        Op::SumAll { a } => {
            if needs(*a) {
                let av = val(*a);
                accumulate(grads, *a, Tensor::full(av.rows(), av.cols(), g.item()));
            }
        }
        Op::SumRows { a } => {
            if needs(*a) {
                let av = val(*a);
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let gv = g.data()[r];
                    da.row_mut(r).iter_mut().for_each(|x| *x = gv);
                }
                accumulate(grads, *a, da);
            }
        }
        Op::Transpose { a } => {
            if needs(*a) {
                accumulate(grads, *a, g.transpose());
            }
        }
        Op::LogMeanExp { a, weights } => {
            if needs(*a) {
                accumulate(grads, *a, weights.map(|w| w * g.item()));
            }
        }
        Op::RowNorm { a } => {
            if needs(*a) {
                let av = val(*a);
                let norms = &node.value;
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let n = norms.data()[r];
                    if n > 0.0 {
                        let s = g.data()[r] / n;
                        for (d, x) in da.row_mut(r).iter_mut().zip(av.row(r)) {
                            *d = s * x;
                        }
                    }
                }
                accumulate(grads, *a, da);
            }
        }
        Op::BceMean { a, deriv } => {
            if needs(*a) {
                accumulate(grads, *a, deriv.map(|d| d * g.item()));
            }
        }
    }
}

fn column_sums(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, t.cols());
    for r in 0..t.rows() {
        for (acc, v) in out.data_mut().iter_mut().zip(t.row(r)) {
            *acc += v;
        }
    }
    out
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn dims(&self) -> (usize, usize) {
        let v = self.value();
        (v.rows(), v.cols())
    }

    /// Value of a `1×1` node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.needs(self.id)
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
    }

    fn binary_needs(&self, other: &Var<'t>) -> bool {
        self.requires_grad() || other.requires_grad()
    }

    /// `op(self) · op(other)`.
    pub fn matmul_t(&self, ta: bool, other: &Var<'t>, tb: bool) -> Var<'t> {
        self.same_tape(other);
        let out = {
            let (a, b) = (self.value(), other.value());
            a.matmul_t(ta, &b, tb).unwrap_or_else(|e| panic!("{e}"))
        };
        let needs = self.binary_needs(other);
        self.tape.push(out, Op::MatMul { a: self.id, b: other.id, ta, tb }, needs, "matmul")
    }

    pub fn matmul(&self, other: &Var<'t>) -> Var<'t> {
        self.matmul_t(false, other, false)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Var<'t>) -> Var<'t> {
        self.matmul_t(false, other, true)
    }

    fn elementwise(&self, other: &Var<'t>, f: impl Fn(f64, f64) -> f64, name: &'static str) -> Tensor {
        self.same_tape(other);
        let (a, b) = (self.value(), other.value());
        assert!(a.same_shape(&b), "{name}: shapes {:?} vs {:?}", a.shape(), b.shape());
        a.zip_map(&b, f)
    }

    pub fn add(&self, other: &Var<'t>) -> Var<'t> {
        let out = self.elementwise(other, |x, y| x + y, "add");
        self.tape.push(out, Op::Add { a: self.id, b: other.id }, self.binary_needs(other), "add")
    }

    pub fn sub(&self, other: &Var<'t>) -> Var<'t> {
        let out = self.elementwise(other, |x, y| x - y, "sub");
        self.tape.push(out, Op::Sub { a: self.id, b: other.id }, self.binary_needs(other), "sub")
    }

    pub fn mul(&self, other: &Var<'t>) -> Var<'t> {
        let out = self.elementwise(other, |x, y| x * y, "mul");
        self.tape.push(out, Op::Mul { a: self.id, b: other.id }, self.binary_needs(other), "mul")
    }

    /// Add a `1×cols` row to every row.
    pub fn add_row(&self, row: &Var<'t>) -> Var<'t> {
        self.same_tape(row);
        let out = {
            let (a, r) = (self.value(), row.value());
            assert!(r.rows() == 1 && r.cols() == a.cols(), "add_row: {:?} + {:?}", a.shape(), r.shape());
            let mut out = a.clone();
            for i in 0..out.rows() {
                for (x, b) in out.row_mut(i).iter_mut().zip(r.data()) {
                    *x += b;
                }
            }
            out
        };
        self.tape.push(out, Op::AddRow { a: self.id, row: row.id }, self.binary_needs(row), "add_row")
    }

    /// Multiply every row elementwise by a `1×cols` row.
    pub fn mul_row(&self, row: &Var<'t>) -> Var<'t> {
        self.same_tape(row);
        let out = {
            let (a, r) = (self.value(), row.value());
            assert!(r.rows() == 1 && r.cols() == a.cols(), "mul_row: {:?} * {:?}", a.shape(), r.shape());
            let mut out = a.clone();
            for i in 0..out.rows() {
                for (x, w) in out.row_mut(i).iter_mut().zip(r.data()) {
                    *x *= w;
                }
            }
            out
        };
        self.tape.push(out, Op::MulRow { a: self.id, row: row.id }, self.binary_needs(row), "mul_row")
    }

    /// Scale row `i` by entry `i` of a `rows×1` column.
    pub fn mul_col(&self, col: &Var<'t>) -> Var<'t> {
        self.same_tape(col);
        let out = {
            let (a, c) = (self.value(), col.value());
            assert!(c.cols() == 1 && c.rows() == a.rows(), "mul_col: {:?} * {:?}", a.shape(), c.shape());
            let mut out = a.clone();
            for i in 0..out.rows() {
                let w = c.data()[i];
                out.row_mut(i).iter_mut().for_each(|x| *x *= w);
            }
            out
        };
        self.tape.push(out, Op::MulCol { a: self.id, col: col.id }, self.binary_needs(col), "mul_col")
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        let out = self.value().map(|v| v * c);
        self.tape.push(out, Op::Scale { a: self.id, c }, self.requires_grad(), "scale")
    }

    pub fn neg(&self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        let out = self.value().map(|v| v + c);
        self.tape.push(out, Op::Shift { a: self.id }, self.requires_grad(), "add_scalar")
    }

    /// Elementwise `y = f(x)` where `f` returns `(y, dy/dx)`.
    pub fn map_with(&self, name: &'static str, f: impl Fn(f64) -> (f64, f64)) -> Var<'t> {
        self.map_cols_with(name, |_, x| f(x))
    }

    /// Like [`Var::map_with`] with the column index passed through, for
    /// per-feature functions.
    pub fn map_cols_with(&self, name: &'static str, f: impl Fn(usize, f64) -> (f64, f64)) -> Var<'t> {
        let (out, deriv) = {
            let a = self.value();
            let cols = a.cols();
            let mut out = Vec::with_capacity(a.numel());
            let mut deriv = Vec::with_capacity(a.numel());
            for (i, &x) in a.data().iter().enumerate() {
                let (y, d) = f(i % cols, x);
                out.push(y);
                deriv.push(d);
            }
            let shape = a.shape().to_vec();
            (Tensor::new(shape.clone(), out).unwrap(), Tensor::new(shape, deriv).unwrap())
        };
        self.tape.push(out, Op::Map { a: self.id, deriv }, self.requires_grad(), name)
    }

    pub fn tanh(&self) -> Var<'t> {
        self.map_with("tanh", |x| {
            let t = x.tanh();
            (t, 1.0 - t * t)
        })
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.map_with("sigmoid", |x| {
            let s = sigmoid(x);
            (s, s * (1.0 - s))
        })
    }

    pub fn softplus(&self) -> Var<'t> {
        self.map_with("softplus", |x| (softplus(x), sigmoid(x)))
    }

    pub fn ln(&self) -> Var<'t> {
        self.map_with("ln", |x| (x.ln(), 1.0 / x))
    }

    pub fn exp(&self) -> Var<'t> {
        self.map_with("exp", |x| {
            let e = x.exp();
            (e, e)
        })
    }

    pub fn sqrt(&self) -> Var<'t> {
        self.map_with("sqrt", |x| {
            let s = x.sqrt();
            (s, 0.5 / s)
        })
    }

    pub fn square(&self) -> Var<'t> {
        self.map_with("square", |x| (x * x, 2.0 * x))
    }

    /// `max(x, lo)`; zero gradient below the floor.
    pub fn clamp_min(&self, lo: f64) -> Var<'t> {
        self.map_with("clamp_min", |x| if x < lo { (lo, 0.0) } else { (x, 1.0) })
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Var<'t> {
        self.map_with("clamp", |x| {
            if x < lo {
                (lo, 0.0)
            } else if x > hi {
                (hi, 0.0)
            } else {
                (x, 1.0)
            }
        })
    }

    pub fn sum(&self) -> Var<'t> {
        let out = Tensor::scalar(self.value().sum());
        self.tape.push(out, Op::SumAll { a: self.id }, self.requires_grad(), "sum")
    }

    pub fn mean(&self) -> Var<'t> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Row sums as a `rows×1` column.
    pub fn sum_rows(&self) -> Var<'t> {
        let out = {
            let a = self.value();
            let sums: Vec<f64> = (0..a.rows()).map(|r| a.row(r).iter().sum()).collect();
            Tensor::col_vector(&sums)
        };
        self.tape.push(out, Op::SumRows { a: self.id }, self.requires_grad(), "sum_rows")
    }

    pub fn transpose(&self) -> Var<'t> {
        let out = self.value().transpose();
        self.tape.push(out, Op::Transpose { a: self.id }, self.requires_grad(), "transpose")
    }

    /// `log(mean(exp(x)))` over all entries, computed stably.
    pub fn log_mean_exp(&self) -> Var<'t> {
        let (out, weights) = {
            let a = self.value();
            let max = a.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps = a.map(|v| (v - max).exp());
            let total = exps.sum();
            let lme = max + (total / a.numel() as f64).ln();
            (Tensor::scalar(lme), exps.map(|e| e / total))
        };
        self.tape.push(out, Op::LogMeanExp { a: self.id, weights }, self.requires_grad(), "log_mean_exp")
    }

    /// Euclidean norm of each row as a `rows×1` column.
    pub fn row_norm(&self) -> Var<'t> {
        let out = {
            let a = self.value();
            let norms: Vec<f64> =
                (0..a.rows()).map(|r| a.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
            Tensor::col_vector(&norms)
        };
        self.tape.push(out, Op::RowNorm { a: self.id }, self.requires_grad(), "row_norm")
    }

    /// Mean Bernoulli cross-entropy of probabilities `self` against
    /// `target`. Probabilities are clamped to `[1e-12, 1-1e-12]`.
    pub fn bce_mean(&self, target: &Tensor) -> Var<'t> {
        const P_MIN: f64 = 1e-12;
        let (out, deriv) = {
            let p = self.value();
            assert!(p.same_shape(target), "bce_mean: {:?} vs {:?}", p.shape(), target.shape());
            let n = p.numel() as f64;
            let mut total = 0.0;
            let mut deriv = Vec::with_capacity(p.numel());
            for (&y, &t) in p.data().iter().zip(target.data()) {
                let yc = y.clamp(P_MIN, 1.0 - P_MIN);
                total -= t * yc.ln() + (1.0 - t) * (1.0 - yc).ln();
                let d = if y == yc { (yc - t) / (yc * (1.0 - yc)) } else { 0.0 };
                deriv.push(d / n);
            }
            (Tensor::scalar(total / n), Tensor::new(p.shape().to_vec(), deriv).unwrap())
        };
        self.tape.push(out, Op::BceMean { a: self.id, deriv }, self.requires_grad(), "bce_mean")
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}
