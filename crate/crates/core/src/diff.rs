//! Reverse-mode differentiation over dense row-major `f64` matrices.
//!
//! A [`Tape`] records every operation in execution order. [`Tape::backward`]
//! walks the record in exact reverse order and accumulates analytic
//! gradients into every node that depends on a parameter. Broadcasting is
//! limited to adding a `1 x c` bias row.
//!
//! ```
//! use spatial3d_core::diff::{Tape, Tensor2};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor2::from_rows(&[&[1.0, -2.0]]).unwrap());
//! let y = tape.relu(x).unwrap();
//! let loss = tape.mean(y).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap().data(), &[0.5, 0.0]);
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::NeighborGroups;
use crate::math;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::invalid(format!(
                "{rows}x{cols} tensor needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor2 { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor2::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor2::new(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor2 { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Tensor2 {
        Tensor2::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Plain (untaped) matrix product.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "matmul shape mismatch {:?} x {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = Tensor2::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    fn add_assign(&mut self, other: &Tensor2) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Abs(Var),
    SoftmaxRows(Var),
    ConcatCols(Var, Var),
    GatherRows(Var, Vec<usize>),
    /// Argmax source row for every output element.
    MaxPoolGroups(Var, Vec<usize>),
    Mean(Var),
    L2NormRows(Var),
    Transpose(Var),
}

struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
}

/// Single-threaded operation record.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor2>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`Tape::backward`], if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor2> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Tensor2, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &str, value: Tensor2, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::numeric(name, "non-finite forward value"));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    fn same_shape(&self, name: &str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::invalid(format!(
                "{name}: shape mismatch {sa:?} vs {sb:?}"
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.record("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.record("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x - y).collect();
        let value = Tensor2::new(va.rows, va.cols, data)?;
        self.record("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
        let value = Tensor2::new(va.rows, va.cols, data)?;
        self.record("mul", value, Op::Mul(a, b), &[a, b])
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows != 1 || vr.cols != va.cols {
            return Err(Error::invalid(format!(
                "add_row: bias {:?} does not fit {:?}",
                vr.shape(),
                va.shape()
            )));
        }
        let value = Tensor2::from_fn(va.rows, va.cols, |r, c| va.get(r, c) + vr.data[c]);
        self.record("add_row", value, Op::AddRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v * s);
        self.record("scale", value, Op::Scale(a, s), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.record("relu", value, Op::Relu(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(math::abs);
        self.record("abs", value, Op::Abs(a), &[a])
    }

    /// Row-wise softmax with row-max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let mut value = va.clone();
        for r in 0..va.rows {
            let row = &mut value.data[r * va.cols..(r + 1) * va.cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = math::exp(*v - max);
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.record("softmax_rows", value, Op::SoftmaxRows(a), &[a])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows != vb.rows {
            return Err(Error::invalid(format!(
                "concat_cols: row mismatch {} vs {}",
                va.rows, vb.rows
            )));
        }
        let cols = va.cols + vb.cols;
        let value = Tensor2::from_fn(va.rows, cols, |r, c| {
            if c < va.cols {
                va.get(r, c)
            } else {
                vb.get(r, c - va.cols)
            }
        });
        self.record("concat_cols", value, Op::ConcatCols(a, b), &[a, b])
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= va.rows) {
            return Err(Error::invalid(format!(
                "gather_rows: index {bad} out of {} rows",
                va.rows
            )));
        }
        let value = Tensor2::from_fn(indices.len(), va.cols, |r, c| va.get(indices[r], c));
        self.record(
            "gather_rows",
            value,
            Op::GatherRows(a, indices.to_vec()),
            &[a],
        )
    }

    /// Per-group, per-column maximum over member rows. Ties go to the lowest row index.
    pub fn max_pool_groups(&mut self, a: Var, groups: &NeighborGroups) -> Result<Var> {
        let va = self.value(a);
        let cols = va.cols;
        let mut data = Vec::with_capacity(groups.len() * cols);
        let mut argmax = Vec::with_capacity(groups.len() * cols);
        for (g, members) in groups.groups().iter().enumerate() {
            if members.is_empty() {
                return Err(Error::invalid(format!(
                    "max_pool_groups: group {g} is empty"
                )));
            }
            if let Some(&bad) = members.iter().find(|&&i| i >= va.rows) {
                return Err(Error::invalid(format!(
                    "max_pool_groups: member {bad} out of {} rows",
                    va.rows
                )));
            }
            for c in 0..cols {
                let mut best = members[0];
                for &m in &members[1..] {
                    let (v, b) = (va.get(m, c), va.get(best, c));
                    if v > b || (v == b && m < best) {
                        best = m;
                    }
                }
                data.push(va.get(best, c));
                argmax.push(best);
            }
        }
        let value = Tensor2::new(groups.len(), cols, data)?;
        self.record("max_pool_groups", value, Op::MaxPoolGroups(a, argmax), &[a])
    }

    /// Mean over all elements, as a `1 x 1` tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.data.is_empty() {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let m = va.data.iter().sum::<f64>() / va.data.len() as f64;
        self.record("mean", Tensor2::filled(1, 1, m), Op::Mean(a), &[a])
    }

    /// Euclidean norm of each row, as an `r x 1` tensor.
    pub fn l2_norm_rows(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let data = (0..va.rows)
            .map(|r| math::sqrt(va.row(r).iter().map(|v| v * v).sum()))
            .collect();
        let value = Tensor2::new(va.rows, 1, data)?;
        self.record("l2_norm_rows", value, Op::L2NormRows(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.record("transpose", value, Op::Transpose(a), &[a])
    }

    /// Accumulates d`output`/d(node) into every node that depends on a parameter.
    ///
    /// `output` must be `1 x 1`. Gradients from a previous call are discarded.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got {:?}",
                self.value(output).shape()
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[output.0] = Some(Tensor2::filled(1, 1, 1.0));
        for i in (0..=output.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(upstream) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &upstream)?;
            self.grads[i] = Some(upstream);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor2) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&mut self, i: usize, up: &Tensor2) -> Result<()> {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(a) {
                    let g = up.matmul(&self.value(b).transpose())?;
                    self.accumulate(a, g);
                }
                if self.requires_grad(b) {
                    let g = self.value(a).transpose().matmul(up)?;
                    self.accumulate(b, g);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, up.clone());
                self.accumulate(b, up.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, up.clone());
                self.accumulate(b, up.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(a).clone(), self.value(b).clone());
                let ga = zip_map(up, &vb, |u, y| u * y);
                let gb = zip_map(up, &va, |u, x| u * x);
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::AddRow(a, row) => {
                self.accumulate(a, up.clone());
                let mut g = Tensor2::zeros(1, up.cols);
                for r in 0..up.rows {
                    for (acc, u) in g.data.iter_mut().zip(up.row(r)) {
                        *acc += u;
                    }
                }
                self.accumulate(row, g);
            }
            Op::Scale(a, s) => self.accumulate(a, up.map(|v| v * s)),
            Op::Relu(a) => {
                let g = zip_map(up, self.value(a), |u, x| if x > 0.0 { u } else { 0.0 });
                self.accumulate(a, g);
            }
            Op::Abs(a) => {
                let g = zip_map(up, self.value(a), |u, x| {
                    if x > 0.0 {
                        u
                    } else if x < 0.0 {
                        -u
                    } else {
                        0.0
                    }
                });
                self.accumulate(a, g);
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let mut g = Tensor2::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let dot: f64 = y.row(r).iter().zip(up.row(r)).map(|(p, u)| p * u).sum();
                    for c in 0..y.cols {
                        g.set(r, c, y.get(r, c) * (up.get(r, c) - dot));
                    }
                }
                self.accumulate(a, g);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(a).cols;
                let cb = self.value(b).cols;
                let ga = Tensor2::from_fn(up.rows, ca, |r, c| up.get(r, c));
                let gb = Tensor2::from_fn(up.rows, cb, |r, c| up.get(r, ca + c));
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::GatherRows(a, indices) => {
                let va = self.value(a);
                let mut g = Tensor2::zeros(va.rows, va.cols);
                for (r, &src) in indices.iter().enumerate() {
                    for c in 0..va.cols {
                        g.data[src * va.cols + c] += up.get(r, c);
                    }
                }
                self.accumulate(a, g);
            }
            Op::MaxPoolGroups(a, argmax) => {
                let va = self.value(a);
                let mut g = Tensor2::zeros(va.rows, va.cols);
                for (k, &src) in argmax.iter().enumerate() {
                    let c = k % va.cols;
                    g.data[src * va.cols + c] += up.data[k];
                }
                self.accumulate(a, g);
            }
            Op::Mean(a) => {
                let va = self.value(a);
                let s = up.data[0] / va.data.len() as f64;
                self.accumulate(a, Tensor2::filled(va.rows, va.cols, s));
            }
            Op::L2NormRows(a) => {
                let y = self.nodes[i].value.clone();
                let va = self.value(a);
                let g = Tensor2::from_fn(va.rows, va.cols, |r, c| {
                    let n = y.data[r];
                    if n > 0.0 {
                        up.data[r] * va.get(r, c) / n
                    } else {
                        0.0
                    }
                });
                self.accumulate(a, g);
            }
            Op::Transpose(a) => self.accumulate(a, up.transpose()),
        }
        Ok(())
    }
}

fn zip_map(a: &Tensor2, b: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Tensor2 {
    Tensor2 {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect(),
    }
}

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error per parameter, in input order.
    pub per_param: Vec<f64>,
    /// Coordinates per parameter left out of the error; see [`Probe::bracketed`].
    pub bracketed: Vec<usize>,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Magnitudes below this are compared absolutely rather than relatively.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

/// A check fails outright if more than this fraction of coordinates is bracketed.
pub const MAX_BRACKETED_FRACTION: f64 = 0.05;

/// Relative error `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = math::abs(analytic)
        .max(math::abs(numeric))
        .max(GRAD_CHECK_FLOOR);
    math::abs(analytic - numeric) / denom
}

/// Finite-difference verdict for one coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub numeric: f64,
    pub rel_error: f64,
    /// The central difference misses the tolerance, but the forward and backward
    /// slopes disagree by more than the tolerance and the analytic value lies
    /// between them. Happens when a relu, abs, max or discrete switch sits
    /// inside `[x - eps, x + eps]`.
    pub bracketed: bool,
}

/// Central difference of `f` along coordinate `k` of parameter `p`, restoring it afterwards.
#[allow(clippy::too_many_arguments)]
pub fn probe_coordinate<F>(
    work: &mut [Tensor2],
    p: usize,
    k: usize,
    eps: f64,
    tol: f64,
    f0: f64,
    analytic: f64,
    f: &mut F,
) -> Result<Probe>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let orig = work[p].data[k];
    work[p].data[k] = orig + eps;
    let plus = evaluate(work, f);
    work[p].data[k] = orig - eps;
    let minus = evaluate(work, f);
    work[p].data[k] = orig;
    let (plus, minus) = (plus?, minus?);
    let numeric = (plus - minus) / (2.0 * eps);
    let forward = (plus - f0) / eps;
    let backward = (f0 - minus) / eps;
    let lo = forward.min(backward);
    let hi = forward.max(backward);
    let slack = 0.01 * (hi - lo);
    let rel_error = relative_error(analytic, numeric);
    let bracketed = rel_error >= tol
        && relative_error(forward, backward) > tol
        && analytic >= lo - slack
        && analytic <= hi + slack;
    Ok(Probe {
        numeric,
        rel_error,
        bracketed,
    })
}

/// Checks the tape gradient of a scalar function against central finite differences.
///
/// `f` receives a fresh tape with `params` registered as parameters (in order)
/// and must return a `1 x 1` output. See [`Probe::bracketed`] for the
/// coordinates left out of the error.
pub fn grad_check<F>(params: &[Tensor2], eps: f64, tol: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid(format!(
            "grad_check eps must be > 0, got {eps}"
        )));
    }
    let analytic = analytic_gradients(params, &mut f)?;
    let f0 = evaluate(params, &mut f)?;
    let mut per_param = Vec::with_capacity(params.len());
    let mut bracketed = Vec::with_capacity(params.len());
    let mut work: Vec<Tensor2> = params.to_vec();
    for (p, grad) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut skipped = 0;
        for k in 0..params[p].data.len() {
            let probe = probe_coordinate(&mut work, p, k, eps, tol, f0, grad.data[k], &mut f)?;
            if probe.bracketed {
                skipped += 1;
            } else {
                worst = worst.max(probe.rel_error);
            }
        }
        per_param.push(worst);
        bracketed.push(skipped);
    }
    let max_rel_error = per_param.iter().copied().fold(0.0, f64::max);
    let total: usize = params.iter().map(|t| t.data.len()).sum();
    let passed = max_rel_error < tol && within_bracket_budget(bracketed.iter().sum(), total);
    Ok(GradCheckReport {
        per_param,
        bracketed,
        max_rel_error,
        tol,
        passed,
    })
}

pub fn within_bracket_budget(bracketed: usize, total: usize) -> bool {
    bracketed as f64 <= MAX_BRACKETED_FRACTION * total as f64
}

/// Runs `f` once on a fresh tape and returns the scalar value.
pub fn evaluate<F>(params: &[Tensor2], f: &mut F) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    scalar(&tape, out, "evaluate")
}

/// Runs `f` and returns d(output)/d(param) for every parameter.
pub fn analytic_gradients<F>(params: &[Tensor2], f: &mut F) -> Result<Vec<Tensor2>>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    scalar(&tape, out, "analytic_gradients")?;
    tape.backward(out)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(v, p)| {
            tape.grad(*v)
                .cloned()
                .unwrap_or_else(|| Tensor2::zeros(p.rows, p.cols))
        })
        .collect())
}

fn scalar(tape: &Tape, out: Var, op: &str) -> Result<f64> {
    let v = tape.value(out);
    if v.shape() != (1, 1) {
        return Err(Error::invalid(format!(
            "{op}: output must be 1x1, got {:?}",
            v.shape()
        )));
    }
    let x = v.data[0];
    if !x.is_finite() {
        return Err(Error::numeric(
            String::from(op),
            "non-finite function value",
        ));
    }
    Ok(x)
}
