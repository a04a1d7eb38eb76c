//! Reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Tape`] records forward primitives into a linear arena and replays them
//! in reverse to accumulate gradients. Tensors live inside the tape; user code
//! holds copyable [`Var`] handles. The primitive set is exactly what an MLP
//! trained under mean-squared and log-mean-exp losses needs — no broadcasting
//! beyond the row-wise bias add, no views, no higher-order derivatives.
//!
//! A tape is confined to one thread and is rebuilt per training step.

use crate::error::{Error, Result};
use crate::linalg;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// Elementwise a + b, or row-broadcast when b is a length-n vector and a is [m, n].
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Matmul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Scale { a: Var, c: f64 },
    Sum { a: Var },
    Mean { a: Var },
    Tanh { a: Var },
    SquareNormRows { a: Var, rows: usize, cols: usize },
    Exp { a: Var },
    Log { a: Var },
    LogsumexpMean { a: Var },
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Records primitives in topological order; parents always precede children,
/// so one reverse sweep visits every node exactly once.
pub struct Tape {
    nodes: Vec<Node>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), checked: false }
    }

    /// Checked mode validates that every primitive's output is finite.
    pub fn checked() -> Self {
        Tape { nodes: Vec::new(), checked: true }
    }

    /// Registers a leaf tensor (parameter or constant input).
    pub fn leaf(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<Var> {
        if data.len() != numel(shape) {
            return Err(Error::ShapeMismatch {
                op: "leaf",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        self.push("leaf", Op::Leaf, shape.to_vec(), data)
    }

    /// Scalar leaf, shape `[]`.
    pub fn scalar(&mut self, value: f64) -> Result<Var> {
        self.leaf(vec![value], &[])
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a scalar (single-element) tensor.
    pub fn value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].data.len(), 1);
        self.nodes[v.0].data[0]
    }

    /// Gradient accumulated at `v`, if any reached it. Detached tensors
    /// yield `None`, which callers treat as zero.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Gradient at `v`, materialized as zeros when nothing flowed to it.
    pub fn grad_or_zeros(&self, v: Var) -> Vec<f64> {
        match &self.nodes[v.0].grad {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[v.0].data.len()],
        }
    }

    /// Clears every gradient accumulator.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, name: &'static str, op: Op, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        if self.checked && data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: format!("output of `{name}`") });
        }
        let id = self.nodes.len();
        self.nodes.push(Node { op, shape, data, grad: None });
        Ok(Var(id))
    }

    fn shapes_of(&self, a: Var, b: Var) -> (Vec<usize>, Vec<usize>) {
        (self.nodes[a.0].shape.clone(), self.nodes[b.0].shape.clone())
    }

    // ── Forward primitives ───────────────────────────────────────────

    /// Elementwise addition. Also accepts a [m, n] left operand with a
    /// length-n right operand (row-broadcast bias add).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = self.shapes_of(a, b);
        if sa == sb {
            let data: Vec<f64> = self.nodes[a.0]
                .data
                .iter()
                .zip(&self.nodes[b.0].data)
                .map(|(x, y)| x + y)
                .collect();
            return self.push("add", Op::Add { a, b }, sa, data);
        }
        if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            let (m, n) = (sa[0], sa[1]);
            let mut data = self.nodes[a.0].data.clone();
            linalg::add_bias_rows(&mut data, &self.nodes[b.0].data, m, n);
            return self.push("add", Op::Add { a, b }, sa, data);
        }
        Err(Error::ShapeMismatch { op: "add", lhs: sa, rhs: sb })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = self.shapes_of(a, b);
        if sa != sb {
            return Err(Error::ShapeMismatch { op: "sub", lhs: sa, rhs: sb });
        }
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        self.push("sub", Op::Sub { a, b }, sa, data)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = self.shapes_of(a, b);
        if sa != sb {
            return Err(Error::ShapeMismatch { op: "mul", lhs: sa, rhs: sb });
        }
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        self.push("mul", Op::Mul { a, b }, sa, data)
    }

    /// Matrix product of [m, k] and [k, n].
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = self.shapes_of(a, b);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut data = vec![0.0; m * n];
        linalg::matmul(&self.nodes[a.0].data, &self.nodes[b.0].data, &mut data, m, k, n);
        self.push("matmul", Op::Matmul { a, b, m, k, n }, vec![m, n], data)
    }

    /// Multiplication by a compile-time constant scalar.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|x| c * x).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push("scale", Op::Scale { a, c }, shape, data)
    }

    /// Sum of all elements; scalar output.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.nodes[a.0].data.iter().sum();
        self.push("sum", Op::Sum { a }, vec![], vec![s])
    }

    /// Arithmetic mean of all elements; scalar output.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let len = self.nodes[a.0].data.len();
        if len == 0 {
            return Err(Error::EmptyInput { op: "mean" });
        }
        let s: f64 = self.nodes[a.0].data.iter().sum();
        self.push("mean", Op::Mean { a }, vec![], vec![s / len as f64])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|x| x.tanh()).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push("tanh", Op::Tanh { a }, shape, data)
    }

    /// Row-wise squared Euclidean norm of a [rows, cols] matrix; output [rows].
    pub fn square_norm_rows(&mut self, a: Var) -> Result<Var> {
        let sa = self.nodes[a.0].shape.clone();
        if sa.len() != 2 {
            return Err(Error::ShapeMismatch { op: "square_norm_rows", lhs: sa, rhs: vec![] });
        }
        let (rows, cols) = (sa[0], sa[1]);
        let src = &self.nodes[a.0].data;
        let data: Vec<f64> = (0..rows)
            .map(|i| src[i * cols..(i + 1) * cols].iter().map(|x| x * x).sum())
            .collect();
        self.push(
            "square_norm_rows",
            Op::SquareNormRows { a, rows, cols },
            vec![rows],
            data,
        )
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|x| x.exp()).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push("exp", Op::Exp { a }, shape, data)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|x| x.ln()).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push("log", Op::Log { a }, shape, data)
    }

    /// Stabilized log of the mean of exponentials of a vector:
    /// `max(v) + log(mean(exp(v - max(v))))`. Scalar output.
    pub fn logsumexp_mean(&mut self, a: Var) -> Result<Var> {
        let sa = self.nodes[a.0].shape.clone();
        if sa.len() != 1 {
            return Err(Error::ShapeMismatch { op: "logsumexp_mean", lhs: sa, rhs: vec![] });
        }
        let v = &self.nodes[a.0].data;
        if v.is_empty() {
            return Err(Error::EmptyInput { op: "logsumexp_mean" });
        }
        let out = logsumexp_mean_value(v);
        self.push("logsumexp_mean", Op::LogsumexpMean { a }, vec![], vec![out])
    }

    // ── Backward pass ────────────────────────────────────────────────

    /// Accumulates dloss/dleaf into every reachable node's grad slot.
    /// Repeated calls keep accumulating until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::NotScalar { shape: self.nodes[loss.0].shape.clone() });
        }
        self.accumulate(loss, &[1.0]);
        for id in (0..=loss.0).rev() {
            let Some(upstream) = self.nodes[id].grad.clone() else { continue };
            let op = self.nodes[id].op.clone();
            self.backward_op(&op, id, &upstream);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: &[f64]) {
        let node = &mut self.nodes[v.0];
        match &mut node.grad {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contribution) {
                    *gi += ci;
                }
            }
            None => node.grad = Some(contribution.to_vec()),
        }
    }

    fn backward_op(&mut self, op: &Op, out: usize, d_out: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                self.accumulate(a, d_out);
                let sb = self.nodes[b.0].shape.clone();
                if self.nodes[a.0].shape == sb {
                    self.accumulate(b, d_out);
                } else {
                    // Row-broadcast: bias gradient is the column sum.
                    let n = sb[0];
                    let mut d_b = vec![0.0; n];
                    for row in d_out.chunks_exact(n) {
                        for (g, &d) in d_b.iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                    self.accumulate(b, &d_b);
                }
            }
            Op::Sub { a, b } => {
                self.accumulate(a, d_out);
                let neg: Vec<f64> = d_out.iter().map(|d| -d).collect();
                self.accumulate(b, &neg);
            }
            Op::Mul { a, b } => {
                let d_a: Vec<f64> =
                    d_out.iter().zip(&self.nodes[b.0].data).map(|(d, y)| d * y).collect();
                let d_b: Vec<f64> =
                    d_out.iter().zip(&self.nodes[a.0].data).map(|(d, x)| d * x).collect();
                self.accumulate(a, &d_a);
                self.accumulate(b, &d_b);
            }
            Op::Matmul { a, b, m, k, n } => {
                let mut d_a = vec![0.0; m * k];
                linalg::matmul_abt(d_out, &self.nodes[b.0].data, &mut d_a, m, n, k);
                self.accumulate(a, &d_a);
                let mut d_b = vec![0.0; k * n];
                linalg::matmul_atb(&self.nodes[a.0].data, d_out, &mut d_b, m, k, n);
                self.accumulate(b, &d_b);
            }
            Op::Scale { a, c } => {
                let d_a: Vec<f64> = d_out.iter().map(|d| c * d).collect();
                self.accumulate(a, &d_a);
            }
            Op::Sum { a } => {
                let len = self.nodes[a.0].data.len();
                self.accumulate(a, &vec![d_out[0]; len]);
            }
            Op::Mean { a } => {
                let len = self.nodes[a.0].data.len();
                self.accumulate(a, &vec![d_out[0] / len as f64; len]);
            }
            Op::Tanh { a } => {
                let d_a: Vec<f64> = d_out
                    .iter()
                    .zip(&self.nodes[out].data)
                    .map(|(d, y)| d * (1.0 - y * y))
                    .collect();
                self.accumulate(a, &d_a);
            }
            Op::SquareNormRows { a, rows, cols } => {
                let src = &self.nodes[a.0].data;
                let mut d_a = vec![0.0; rows * cols];
                for i in 0..rows {
                    let d = d_out[i];
                    for j in 0..cols {
                        d_a[i * cols + j] = d * 2.0 * src[i * cols + j];
                    }
                }
                self.accumulate(a, &d_a);
            }
            Op::Exp { a } => {
                let d_a: Vec<f64> =
                    d_out.iter().zip(&self.nodes[out].data).map(|(d, y)| d * y).collect();
                self.accumulate(a, &d_a);
            }
            Op::Log { a } => {
                let d_a: Vec<f64> =
                    d_out.iter().zip(&self.nodes[a.0].data).map(|(d, x)| d / x).collect();
                self.accumulate(a, &d_a);
            }
            Op::LogsumexpMean { a } => {
                // d/dv_i = softmax(v)_i; the mean's 1/B cancels in the ratio.
                let w = softmax(&self.nodes[a.0].data);
                let d_a: Vec<f64> = w.iter().map(|wi| d_out[0] * wi).collect();
                self.accumulate(a, &d_a);
            }
        }
    }
}

/// Max-subtracted `log((1/B) * sum(exp(v_b)))` over a nonempty slice.
pub fn logsumexp_mean_value(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = v.iter().map(|x| (x - m).exp()).sum();
    m + (s / v.len() as f64).ln()
}

/// Normalized exponential weights, max-subtracted.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}
