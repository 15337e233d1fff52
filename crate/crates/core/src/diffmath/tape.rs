//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! Every primitive applied to a [`Var`] evaluates its forward value
//! immediately and appends one record to the owning [`Tape`]. Calling
//! [`Tape::gradient`] replays the adjoint rules from the last record back to
//! the first, summing contributions in a fixed order so repeated replays are
//! bitwise identical.
//!
//! ```
//! use graphvrnn::diffmath::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(3.0));
//! let y = x.mul(x).unwrap();
//! let grads = tape.gradient(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().item(), 6.0);
//! ```

use std::cell::RefCell;
use std::sync::Arc;

use super::sparse::SparseMatrix;
use super::tensor::{matmat, matvec, Tensor};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softplus(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Sum(usize),
    Concat(Vec<usize>),
    Slice { src: usize, offset: usize },
    Reshape(usize),
    Sparse { matrix: Arc<SparseMatrix>, src: usize },
}

#[derive(Debug)]
struct Record {
    value: Tensor,
    op: Op,
}

/// Append-only record of primitive operations.
#[derive(Debug, Default)]
pub struct Tape {
    records: RefCell<Vec<Record>>,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.borrow().is_empty()
    }

    /// Records an input tensor whose adjoint will be reported by
    /// [`Tape::gradient`].
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut records = self.records.borrow_mut();
        records.push(Record { value, op });
        Var {
            tape: self,
            id: records.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Tensor {
        self.records.borrow()[id].value.clone()
    }

    /// Reverse sweep from a scalar output.
    pub fn gradient(&self, output: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(self, output.tape), "output recorded on another tape");
        let records = self.records.borrow();
        if !records[output.id].value.is_scalar() {
            return Err(Error::Input(format!(
                "gradient requires a scalar output, got shape {:?}",
                records[output.id].value.shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.id + 1];
        adj[output.id] = Some(vec![1.0]);

        for id in (0..=output.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let rec = &records[id];
            let y = rec.value.data();
            match &rec.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let av = &records[*a].value;
                    let bv = &records[*b].value;
                    let (m, k) = (av.shape()[0], av.shape()[1]);
                    if bv.shape().len() == 1 {
                        accumulate(&mut adj, *a, m * k, |ga| {
                            for i in 0..m {
                                let gi = g[i];
                                for (o, &bj) in ga[i * k..(i + 1) * k].iter_mut().zip(bv.data()) {
                                    *o += gi * bj;
                                }
                            }
                        });
                        accumulate(&mut adj, *b, k, |gb| {
                            let ad = av.data();
                            for i in 0..m {
                                let gi = g[i];
                                for (o, &aij) in gb.iter_mut().zip(&ad[i * k..(i + 1) * k]) {
                                    *o += gi * aij;
                                }
                            }
                        });
                    } else {
                        let n = bv.shape()[1];
                        // dA = G Bᵀ, dB = Aᵀ G
                        let bt = transpose(bv.data(), k, n);
                        let da = matmat(&g, m, n, &bt, k);
                        accumulate(&mut adj, *a, m * k, |ga| add_into(ga, &da));
                        let at = transpose(av.data(), m, k);
                        let db = matmat(&at, k, m, &g, n);
                        accumulate(&mut adj, *b, k * n, |gb| add_into(gb, &db));
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.len(), |ga| add_into(ga, &g));
                    accumulate(&mut adj, *b, g.len(), |gb| add_into(gb, &g));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, g.len(), |ga| add_into(ga, &g));
                    accumulate(&mut adj, *b, g.len(), |gb| {
                        gb.iter_mut().zip(&g).for_each(|(o, v)| *o -= v)
                    });
                }
                Op::Mul(a, b) => {
                    let av = records[*a].value.data();
                    let bv = records[*b].value.data();
                    accumulate(&mut adj, *a, g.len(), |ga| {
                        for i in 0..g.len() {
                            ga[i] += g[i] * bv[i];
                        }
                    });
                    accumulate(&mut adj, *b, g.len(), |gb| {
                        for i in 0..g.len() {
                            gb[i] += g[i] * av[i];
                        }
                    });
                }
                Op::Div(a, b) => {
                    let av = records[*a].value.data();
                    let bv = records[*b].value.data();
                    accumulate(&mut adj, *a, g.len(), |ga| {
                        for i in 0..g.len() {
                            ga[i] += g[i] / bv[i];
                        }
                    });
                    accumulate(&mut adj, *b, g.len(), |gb| {
                        for i in 0..g.len() {
                            gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                        }
                    });
                }
                Op::Scale(a, c) => {
                    accumulate(&mut adj, *a, g.len(), |ga| {
                        ga.iter_mut().zip(&g).for_each(|(o, v)| *o += c * v)
                    });
                }
                Op::Offset(a) | Op::Reshape(a) => {
                    accumulate(&mut adj, *a, g.len(), |ga| add_into(ga, &g));
                }
                Op::Tanh(a) => accumulate(&mut adj, *a, g.len(), |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }),
                Op::Sigmoid(a) => accumulate(&mut adj, *a, g.len(), |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }),
                Op::Softplus(a) => {
                    let x = records[*a].value.data();
                    accumulate(&mut adj, *a, g.len(), |ga| {
                        for i in 0..g.len() {
                            ga[i] += g[i] * sigmoid(x[i]);
                        }
                    })
                }
                Op::Exp(a) => accumulate(&mut adj, *a, g.len(), |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * y[i];
                    }
                }),
                Op::Log(a) => {
                    let x = records[*a].value.data();
                    accumulate(&mut adj, *a, g.len(), |ga| {
                        for i in 0..g.len() {
                            ga[i] += g[i] / x[i];
                        }
                    })
                }
                Op::Square(a) => {
                    let x = records[*a].value.data();
                    accumulate(&mut adj, *a, g.len(), |ga| {
                        for i in 0..g.len() {
                            ga[i] += 2.0 * x[i] * g[i];
                        }
                    })
                }
                Op::Sum(a) => {
                    let n = records[*a].value.len();
                    accumulate(&mut adj, *a, n, |ga| ga.iter_mut().for_each(|o| *o += g[0]));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = records[p].value.len();
                        accumulate(&mut adj, p, n, |gp| add_into(gp, &g[offset..offset + n]));
                        offset += n;
                    }
                }
                Op::Slice { src, offset } => {
                    let n = records[*src].value.len();
                    accumulate(&mut adj, *src, n, |gs| {
                        add_into(&mut gs[*offset..*offset + g.len()], &g)
                    });
                }
                Op::Sparse { matrix, src } => {
                    let width = g.len() / matrix.rows();
                    let gx = matrix.mul_dense_transposed(&g, width);
                    accumulate(&mut adj, *src, gx.len(), |gs| add_into(gs, &gx));
                }
            }
            adj[id] = Some(g);
        }

        let shapes = records[..=output.id]
            .iter()
            .map(|r| r.value.shape().to_vec())
            .collect();
        Ok(Gradients { adj, shapes })
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: usize, len: usize, f: impl FnOnce(&mut [f64])) {
    let slot = adj[id].get_or_insert_with(|| vec![0.0; len]);
    f(slot);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
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
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Adjoints of every record reached by a reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    adj: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Adjoint of `var`, or `None` when the output does not depend on it.
    pub fn get(&self, var: Var<'_>) -> Option<Tensor> {
        let g = self.adj.get(var.id)?.as_ref()?;
        Some(
            Tensor::new(self.shapes[var.id].clone(), g.clone())
                .unwrap_or_else(|_| Tensor::scalar(g[0])),
        )
    }

    /// Adjoint of `var` as a flat vector, zero-filled when unreached.
    pub fn get_or_zero(&self, var: Var<'_>) -> Vec<f64> {
        match self.adj.get(var.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => vec![0.0; var.len()],
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id)
    }

    pub fn item(&self) -> f64 {
        self.tape.records.borrow()[self.id].value.item()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.records.borrow()[self.id].value.shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.tape.records.borrow()[self.id].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same_tape(&self, other: &Var<'_>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars recorded on different tapes"
        );
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let v = self.value().map(f);
        self.tape.push(v, op)
    }

    fn binary(
        &self,
        other: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        self.same_tape(&other);
        let a = self.value();
        let b = other.value();
        if a.shape() != b.shape() {
            return Err(shape_err(name, a.shape(), b.shape()));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(a.shape().to_vec(), data).expect("shape preserved");
        Ok(self.tape.push(out, op))
    }

    /// Matrix product. `self` must be a matrix; `other` a matrix or vector.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let a = self.value();
        let b = other.value();
        let out = match (a.shape(), b.shape()) {
            (&[m, k], &[k2]) if k == k2 => Tensor::vector(matvec(a.data(), m, k, b.data())),
            (&[m, k], &[k2, n]) if k == k2 => {
                Tensor::new(vec![m, n], matmat(a.data(), m, k, b.data(), n))?
            }
            _ => return Err(shape_err("matmul", a.shape(), b.shape())),
        };
        Ok(self.tape.push(out, Op::MatMul(self.id, other.id)))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    /// Elementwise quotient.
    pub fn div(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "div", Op::Div(self.id, other.id), |a, b| a / b)
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |x| c * x)
    }

    /// Adds a constant to every element.
    pub fn offset(&self, c: f64) -> Var<'t> {
        self.unary(Op::Offset(self.id), |x| x + c)
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn softplus(&self) -> Var<'t> {
        self.unary(Op::Softplus(self.id), softplus)
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn ln(&self) -> Var<'t> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    pub fn square(&self) -> Var<'t> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    pub fn sum(&self) -> Var<'t> {
        let s = self.value().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    /// Concatenates the flattened values of `parts` into one vector.
    pub fn concat(parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of nothing");
        let tape = parts[0].tape;
        let mut data = Vec::new();
        for p in parts {
            parts[0].same_tape(p);
            data.extend_from_slice(tape.records.borrow()[p.id].value.data());
        }
        tape.push(
            Tensor::vector(data),
            Op::Concat(parts.iter().map(|p| p.id).collect()),
        )
    }

    /// Contiguous range `[offset, offset + len)` of the flattened value.
    pub fn slice(&self, offset: usize, len: usize) -> Result<Var<'t>> {
        let v = self.value();
        if len == 0 || offset + len > v.len() {
            return Err(shape_err("slice", v.shape(), &[offset, len]));
        }
        let out = Tensor::vector(v.data()[offset..offset + len].to_vec());
        Ok(self.tape.push(
            out,
            Op::Slice {
                src: self.id,
                offset,
            },
        ))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t>> {
        let out = self.value().reshape(shape)?;
        Ok(self.tape.push(out, Op::Reshape(self.id)))
    }

    /// Left-multiplies by a constant sparse matrix. `self` is `(rows, width)`
    /// or a vector of length `rows`.
    pub fn sparse_lmul(&self, matrix: &Arc<SparseMatrix>) -> Result<Var<'t>> {
        let v = self.value();
        let width = match v.shape() {
            &[r] if r == matrix.cols() => 1,
            &[r, w] if r == matrix.cols() => w,
            s => return Err(shape_err("sparse_lmul", &[matrix.rows(), matrix.cols()], s)),
        };
        let data = matrix.mul_dense(v.data(), width);
        let mut shape = v.shape().to_vec();
        shape[0] = matrix.rows();
        let out = Tensor::new(shape, data)?;
        Ok(self.tape.push(
            out,
            Op::Sparse {
                matrix: Arc::clone(matrix),
                src: self.id,
            },
        ))
    }
}
