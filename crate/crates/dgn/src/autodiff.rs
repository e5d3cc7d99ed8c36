//! Tape-based reverse-mode automatic differentiation over [`Tensor`].
//!
//! A [`Tape`] records every operation as a node; [`Tape::backward`] walks the
//! tape in reverse and accumulates vector-Jacobian products into parameter
//! gradients. The op set is exactly what the model and loss need, nothing
//! more.
//!
//! Two properties the rest of the crate leans on:
//! - every op checks its result for NaN/Inf and fails fast with
//!   [`Error::NonFinite`], so divergence is caught at the op that produced it;
//! - reductions over the node axis (`sum_axis`, `mean_axis`) sum their
//!   addends in a canonical order, which makes the model's forward pass
//!   bitwise invariant under node permutations.

use crate::error::{Error, Result};
use crate::tensor::{canonical_sum, Tensor};

/// Handle to a node on a [`Tape`]. Only valid for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    ScalarMul(NodeId, f64),
    Abs(NodeId),
    Relu(NodeId),
    SumAxis(NodeId, usize),
    MeanAxis(NodeId, usize),
    FrobeniusNorm(NodeId),
    Reshape(NodeId),
    Transpose12(NodeId),
    GatherRows(NodeId, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Division guard for the Frobenius norm gradient at tiny norms.
pub const FROBENIUS_GRAD_EPS: f64 = 1e-12;

pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, context: &str) -> Result<NodeId> {
        if let Some(idx) = value.first_non_finite() {
            return Err(Error::NonFinite {
                context: format!("{context} (element {idx})"),
            });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(id)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        self.push(value, Op::Constant, false, "constant")
    }

    /// Trainable leaf. Gradients from [`Tape::backward`] are returned in
    /// the order params were inserted.
    pub fn param(&mut self, value: Tensor) -> Result<NodeId> {
        let id = self.push(value, Op::Param, true, "param")?;
        self.params.push(id);
        Ok(id)
    }

    /// Matrix product. Accepts (m,k)x(k,n) or batched (b,m,k)x(b,k,n).
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let value = match (av.shape(), bv.shape()) {
            (&[m, k], &[k2, n]) => {
                if k != k2 {
                    return Err(Error::shape("matmul inner dims", &[m, k, k], &[m, k, k2]));
                }
                let mut out = vec![0.0; m * n];
                matmul2(av.values(), bv.values(), m, k, n, &mut out);
                Tensor::new(vec![m, n], out)?
            }
            (&[ba, m, k], &[bb, k2, n]) => {
                if ba != bb || k != k2 {
                    return Err(Error::shape(
                        "batched matmul",
                        &[ba, k, k],
                        &[bb, k, k2],
                    ));
                }
                let mut out = vec![0.0; ba * m * n];
                for t in 0..ba {
                    matmul2(
                        &av.values()[t * m * k..(t + 1) * m * k],
                        &bv.values()[t * k * n..(t + 1) * k * n],
                        m,
                        k,
                        n,
                        &mut out[t * m * n..(t + 1) * m * n],
                    );
                }
                Tensor::new(vec![ba, m, n], out)?
            }
            (sa, sb) => {
                return Err(Error::shape("matmul ranks", sa, sb));
            }
        };
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Matmul(a, b), ng, "matmul")
    }

    /// Elementwise sum. `b` may also be a broadcast operand whose shape is a
    /// suffix of `a`'s shape (e.g. a bias row added to every row of a matrix).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let value = if av.shape() == bv.shape() {
            let vals = av
                .values()
                .iter()
                .zip(bv.values())
                .map(|(&x, &y)| x + y)
                .collect();
            Tensor::new(av.shape().to_vec(), vals)?
        } else if av.shape().ends_with(bv.shape()) && bv.rank() < av.rank() {
            let tail = bv.len().max(1);
            let mut vals = av.values().to_vec();
            for chunk in vals.chunks_mut(tail) {
                for (x, &y) in chunk.iter_mut().zip(bv.values()) {
                    *x += y;
                }
            }
            Tensor::new(av.shape().to_vec(), vals)?
        } else {
            return Err(Error::shape("add", av.shape(), bv.shape()));
        };
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), ng, "add")
    }

    /// Elementwise difference; shapes must match exactly.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(Error::shape("sub", av.shape(), bv.shape()));
        }
        let vals = av
            .values()
            .iter()
            .zip(bv.values())
            .map(|(&x, &y)| x - y)
            .collect();
        let value = Tensor::new(av.shape().to_vec(), vals)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), ng, "sub")
    }

    pub fn scalar_mul(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        if !c.is_finite() {
            return Err(Error::NonFinite {
                context: "scalar_mul coefficient".into(),
            });
        }
        let value = self.nodes[a.0].value.map(|v| v * c);
        let ng = self.needs(a);
        self.push(value, Op::ScalarMul(a, c), ng, "scalar_mul")
    }

    /// Elementwise |x|. The subgradient at 0 is taken as 0.
    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.nodes[a.0].value.map(f64::abs);
        let ng = self.needs(a);
        self.push(value, Op::Abs(a), ng, "abs")
    }

    /// Elementwise max(x, 0). The derivative at 0 is taken as 0.
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.nodes[a.0].value.map(|v| if v > 0.0 { v } else { 0.0 });
        let ng = self.needs(a);
        self.push(value, Op::Relu(a), ng, "relu")
    }

    pub fn sum_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let value = reduce_axis(&self.nodes[a.0].value, axis, false)?;
        let ng = self.needs(a);
        self.push(value, Op::SumAxis(a, axis), ng, "sum_axis")
    }

    pub fn mean_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let value = reduce_axis(&self.nodes[a.0].value, axis, true)?;
        let ng = self.needs(a);
        self.push(value, Op::MeanAxis(a, axis), ng, "mean_axis")
    }

    /// Scalar sqrt of the sum of squares over all elements.
    pub fn frobenius_norm(&mut self, a: NodeId) -> Result<NodeId> {
        let sq: f64 = self.nodes[a.0].value.values().iter().map(|&v| v * v).sum();
        let value = Tensor::scalar(sq.sqrt());
        let ng = self.needs(a);
        self.push(value, Op::FrobeniusNorm(a), ng, "frobenius_norm")
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        if shape.iter().product::<usize>() != av.len() {
            return Err(Error::shape("reshape", av.shape(), &shape));
        }
        let value = Tensor::new(shape, av.values().to_vec())?;
        let ng = self.needs(a);
        self.push(value, Op::Reshape(a), ng, "reshape")
    }

    /// Swaps the first two axes of a rank-3 tensor.
    pub fn transpose12(&mut self, a: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let &[d0, d1, d2] = av.shape() else {
            return Err(Error::shape("transpose12 wants rank 3", &[3], &[av.rank()]));
        };
        let vals = av.values();
        let mut out = vec![0.0; vals.len()];
        for x in 0..d0 {
            for y in 0..d1 {
                let src = (x * d1 + y) * d2;
                let dst = (y * d0 + x) * d2;
                out[dst..dst + d2].copy_from_slice(&vals[src..src + d2]);
            }
        }
        let value = Tensor::new(vec![d1, d0, d2], out)?;
        let ng = self.needs(a);
        self.push(value, Op::Transpose12(a), ng, "transpose12")
    }

    /// Stacks `indices.len()` rows of a rank-2 tensor, duplicates allowed.
    /// Backward scatter-adds into the source rows.
    pub fn gather_rows(&mut self, a: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let &[rows, cols] = av.shape() else {
            return Err(Error::shape("gather_rows wants rank 2", &[2], &[av.rank()]));
        };
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::InvalidConfig(format!(
                "gather_rows index {bad} out of range for {rows} rows"
            )));
        }
        let mut out = Vec::with_capacity(indices.len() * cols);
        for &i in &indices {
            out.extend_from_slice(&av.values()[i * cols..(i + 1) * cols]);
        }
        let value = Tensor::new(vec![indices.len(), cols], out)?;
        let ng = self.needs(a);
        self.push(value, Op::GatherRows(a, indices), ng, "gather_rows")
    }

    /// Reverse pass from a scalar node. Returns one gradient per parameter,
    /// in insertion order; parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<Tensor>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape(
                "backward target must be scalar",
                &[1],
                self.nodes[loss.0].value.shape(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let seed_shape = self.nodes[loss.0].value.shape().to_vec();
        grads[loss.0] = Some(Tensor::ones(seed_shape));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            if matches!(self.nodes[id].op, Op::Param) {
                continue; // leaf: keep its accumulated gradient
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.apply_vjp(id, &g, &mut grads)?;
        }

        let mut out = Vec::with_capacity(self.params.len());
        for &pid in &self.params {
            let shape = self.nodes[pid.0].value.shape().to_vec();
            let g = grads[pid.0].take().unwrap_or_else(|| Tensor::zeros(shape));
            if let Some(idx) = g.first_non_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of parameter {} (element {idx})", pid.0),
                });
            }
            out.push(g);
        }
        Ok(out)
    }

    fn apply_vjp(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &self.nodes[id].op {
            Op::Constant | Op::Param => {}
            Op::Matmul(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                match (av.shape(), bv.shape()) {
                    (&[m, k], &[_, n]) => {
                        if self.needs(*a) {
                            let da = slot(grads, a.0, av.shape());
                            matmul_nt(g.values(), bv.values(), m, n, k, da);
                        }
                        if self.needs(*b) {
                            let db = slot(grads, b.0, bv.shape());
                            matmul_tn(av.values(), g.values(), k, m, n, db);
                        }
                    }
                    (&[bt, m, k], &[_, _, n]) => {
                        for t in 0..bt {
                            let gs = &g.values()[t * m * n..(t + 1) * m * n];
                            if self.needs(*a) {
                                let da = slot(grads, a.0, av.shape());
                                matmul_nt(
                                    gs,
                                    &bv.values()[t * k * n..(t + 1) * k * n],
                                    m,
                                    n,
                                    k,
                                    &mut da[t * m * k..(t + 1) * m * k],
                                );
                            }
                            if self.needs(*b) {
                                let db = slot(grads, b.0, bv.shape());
                                matmul_tn(
                                    &av.values()[t * m * k..(t + 1) * m * k],
                                    gs,
                                    k,
                                    m,
                                    n,
                                    &mut db[t * k * n..(t + 1) * k * n],
                                );
                            }
                        }
                    }
                    _ => unreachable!("matmul forward validated shapes"),
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    let da = slot(grads, a.0, self.nodes[a.0].value.shape());
                    for (x, &y) in da.iter_mut().zip(g.values()) {
                        *x += y;
                    }
                }
                if self.needs(*b) {
                    let bshape = self.nodes[b.0].value.shape().to_vec();
                    let db = slot(grads, b.0, &bshape);
                    let tail = db.len().max(1);
                    for chunk in g.values().chunks(tail) {
                        for (x, &y) in db.iter_mut().zip(chunk) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    let da = slot(grads, a.0, self.nodes[a.0].value.shape());
                    for (x, &y) in da.iter_mut().zip(g.values()) {
                        *x += y;
                    }
                }
                if self.needs(*b) {
                    let db = slot(grads, b.0, self.nodes[b.0].value.shape());
                    for (x, &y) in db.iter_mut().zip(g.values()) {
                        *x -= y;
                    }
                }
            }
            Op::ScalarMul(a, c) => {
                if self.needs(*a) {
                    let da = slot(grads, a.0, self.nodes[a.0].value.shape());
                    for (x, &y) in da.iter_mut().zip(g.values()) {
                        *x += c * y;
                    }
                }
            }
            Op::Abs(a) => {
                if self.needs(*a) {
                    let src = self.nodes[a.0].value.values().to_vec();
                    let da = slot(grads, a.0, self.nodes[a.0].value.shape());
                    for ((x, &y), &v) in da.iter_mut().zip(g.values()).zip(&src) {
                        *x += y * if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let src = self.nodes[a.0].value.values().to_vec();
                    let da = slot(grads, a.0, self.nodes[a.0].value.shape());
                    for ((x, &y), &v) in da.iter_mut().zip(g.values()).zip(&src) {
                        if v > 0.0 {
                            *x += y;
                        }
                    }
                }
            }
            Op::SumAxis(a, axis) | Op::MeanAxis(a, axis) => {
                if self.needs(*a) {
                    let shape = self.nodes[a.0].value.shape().to_vec();
                    let (outer, alen, inner) = axis_split(&shape, *axis);
                    let scale = if matches!(self.nodes[id].op, Op::MeanAxis(..)) {
                        1.0 / alen as f64
                    } else {
                        1.0
                    };
                    let da = slot(grads, a.0, &shape);
                    for o in 0..outer {
                        for t in 0..alen {
                            let base = (o * alen + t) * inner;
                            let gbase = o * inner;
                            for i in 0..inner {
                                da[base + i] += scale * g.values()[gbase + i];
                            }
                        }
                    }
                }
            }
            Op::FrobeniusNorm(a) => {
                if self.needs(*a) {
                    let norm = self.nodes[id].value.values()[0];
                    let denom = norm.max(FROBENIUS_GRAD_EPS);
                    let gs = g.values()[0];
                    let src = self.nodes[a.0].value.values().to_vec();
                    let da = slot(grads, a.0, self.nodes[a.0].value.shape());
                    for (x, &v) in da.iter_mut().zip(&src) {
                        *x += gs * v / denom;
                    }
                }
            }
            Op::Reshape(a) => {
                if self.needs(*a) {
                    let da = slot(grads, a.0, self.nodes[a.0].value.shape());
                    for (x, &y) in da.iter_mut().zip(g.values()) {
                        *x += y;
                    }
                }
            }
            Op::Transpose12(a) => {
                if self.needs(*a) {
                    let shape = self.nodes[a.0].value.shape().to_vec();
                    let (d0, d1, d2) = (shape[0], shape[1], shape[2]);
                    let da = slot(grads, a.0, &shape);
                    for y in 0..d1 {
                        for x in 0..d0 {
                            let src = (y * d0 + x) * d2;
                            let dst = (x * d1 + y) * d2;
                            for z in 0..d2 {
                                da[dst + z] += g.values()[src + z];
                            }
                        }
                    }
                }
            }
            Op::GatherRows(a, indices) => {
                if self.needs(*a) {
                    let shape = self.nodes[a.0].value.shape().to_vec();
                    let cols = shape[1];
                    let da = slot(grads, a.0, &shape);
                    for (r, &i) in indices.iter().enumerate() {
                        let src = r * cols;
                        let dst = i * cols;
                        for c in 0..cols {
                            da[dst + c] += g.values()[src + c];
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Gets the gradient buffer for a node, creating zeros on first touch.
fn slot<'g>(grads: &'g mut [Option<Tensor>], id: usize, shape: &[usize]) -> &'g mut [f64] {
    grads[id]
        .get_or_insert_with(|| Tensor::zeros(shape.to_vec()))
        .values_mut()
}

/// out += a (m,k) * b (k,n), row-major.
fn matmul2(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// out += g (m,n) * b^T where b is (k,n); out is (m,k).
fn matmul_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for (p, o) in orow.iter_mut().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (&gv, &bv) in grow.iter().zip(brow) {
                acc += gv * bv;
            }
            *o += acc;
        }
    }
}

/// out += a^T * g where a is (m,k), g is (m,n); out is (k,n).
fn matmul_tn(a: &[f64], g: &[f64], k: usize, m: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Sum (or mean) along one axis, addends combined in canonical order so the
/// result is independent of how the input was ordered along that axis.
fn reduce_axis(t: &Tensor, axis: usize, mean: bool) -> Result<Tensor> {
    if axis >= t.rank() {
        return Err(Error::InvalidConfig(format!(
            "axis {axis} out of range for rank {}",
            t.rank()
        )));
    }
    let (outer, alen, inner) = axis_split(t.shape(), axis);
    if alen == 0 {
        return Err(Error::EmptyInput("reduction over empty axis".into()));
    }
    let mut out_shape: Vec<usize> = t.shape().to_vec();
    out_shape.remove(axis);
    let mut out = vec![0.0; outer * inner];
    let mut buf = vec![0.0; alen];
    let vals = t.values();
    for o in 0..outer {
        for i in 0..inner {
            for (a, b) in buf.iter_mut().enumerate() {
                *b = vals[(o * alen + a) * inner + i];
            }
            let s = canonical_sum(&mut buf);
            out[o * inner + i] = if mean { s / alen as f64 } else { s };
        }
    }
    Tensor::new(out_shape, out)
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    /// Largest relative error over all checked entries (0 if none checked).
    pub max_rel_error: f64,
    /// Entries compared against the analytic gradient.
    pub checked: usize,
    /// Entries skipped because the one-sided slopes disagree (the loss is
    /// locally kinked there, e.g. |x| or a norm at exactly zero).
    pub excluded: usize,
}

/// One-sided slopes counting as kinked when they differ by more than this,
/// relative to their magnitude.
const KINK_SLOPE_TOL: f64 = 1e-3;

/// Floor of the relative-error denominator.
const FD_REL_FLOOR: f64 = 1e-8;

/// Compares analytic gradients against central finite differences.
///
/// `build` must construct the same scalar loss on any fresh tape given the
/// parameter nodes; it is re-run for every perturbed evaluation. Entries
/// where the loss is locally non-smooth are detected by comparing forward
/// and backward one-sided slopes, and excluded from the comparison.
pub fn finite_difference_check<F>(build: F, params: &[Tensor], h: f64) -> Result<FdReport>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidConfig(format!("step size must be > 0, got {h}")));
    }

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let mut ids = Vec::with_capacity(ps.len());
        for p in ps {
            ids.push(tape.param(p.clone())?);
        }
        let loss = build(&mut tape, &ids)?;
        tape.value(loss).item()
    };

    let mut tape = Tape::new();
    let mut ids = Vec::with_capacity(params.len());
    for p in params {
        ids.push(tape.param(p.clone())?);
    }
    let loss = build(&mut tape, &ids)?;
    let base = tape.value(loss).item()?;
    let grads = tape.backward(loss)?;

    let mut report = FdReport {
        max_rel_error: 0.0,
        checked: 0,
        excluded: 0,
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for e in 0..p.len() {
            let orig = p.values()[e];
            work[pi].values_mut()[e] = orig + h;
            let f_plus = eval(&work)?;
            work[pi].values_mut()[e] = orig - h;
            let f_minus = eval(&work)?;
            work[pi].values_mut()[e] = orig;

            let d_plus = (f_plus - base) / h;
            let d_minus = (base - f_minus) / h;
            let scale = d_plus.abs().max(d_minus.abs()).max(1.0);
            if (d_plus - d_minus).abs() > KINK_SLOPE_TOL * scale {
                report.excluded += 1;
                continue;
            }

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let analytic = grads[pi].values()[e];
            let denom = analytic.abs().max(numeric.abs()).max(FD_REL_FLOOR);
            let rel = (analytic - numeric).abs() / denom;
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        let vals = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        Tensor::new(shape, vals).unwrap()
    }

    #[test]
    fn matmul_matches_hand_result() {
        let mut tape = Tape::new();
        let a = tape
            .constant(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        let b = tape
            .constant(Tensor::new(vec![3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap())
            .unwrap();
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).values(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn batched_matmul_runs_per_batch() {
        let mut tape = Tape::new();
        let a = tape
            .constant(
                Tensor::new(vec![2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            )
            .unwrap();
        let b = tape
            .constant(
                Tensor::new(vec![2, 2, 1], vec![5.0, 6.0, 7.0, 8.0]).unwrap(),
            )
            .unwrap();
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 1, 1]);
        assert_eq!(tape.value(c).values(), &[17.0, 53.0]);
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3])).unwrap();
        let b = tape.constant(Tensor::zeros(vec![2, 2])).unwrap();
        assert!(matches!(
            tape.matmul(a, b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn add_broadcasts_suffix_shapes() {
        let mut tape = Tape::new();
        let a = tape
            .constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let b = tape
            .constant(Tensor::new(vec![2], vec![10.0, 20.0]).unwrap())
            .unwrap();
        let c = tape.add(a, b).unwrap();
        assert_eq!(tape.value(c).values(), &[11.0, 22.0, 13.0, 24.0]);

        let d = tape.constant(Tensor::zeros(vec![3])).unwrap();
        assert!(tape.add(a, d).is_err());
    }

    #[test]
    fn non_finite_results_are_rejected() {
        let mut tape = Tape::new();
        let a = tape
            .constant(Tensor::new(vec![1], vec![1e308]).unwrap())
            .unwrap();
        let b = tape
            .constant(Tensor::new(vec![1], vec![1e308]).unwrap())
            .unwrap();
        assert!(matches!(tape.add(a, b), Err(Error::NonFinite { .. })));
        assert!(tape.constant(Tensor::new(vec![1], vec![f64::NAN]).unwrap()).is_err());
    }

    #[test]
    fn backward_requires_scalar_target() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::zeros(vec![2, 2])).unwrap();
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn disconnected_param_gets_zero_gradient() {
        let mut tape = Tape::new();
        let used = tape.param(Tensor::ones(vec![2])).unwrap();
        let unused = tape.param(Tensor::ones(vec![3])).unwrap();
        let loss = tape.frobenius_norm(used).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.len(), 2);
        assert!(grads[1].values().iter().all(|&v| v == 0.0));
        assert_eq!(tape.value(unused).len(), 3);
    }

    #[test]
    fn gather_rows_backward_scatter_adds_duplicates() {
        let mut tape = Tape::new();
        let a = tape
            .param(Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        let g = tape.gather_rows(a, vec![1, 1, 0]).unwrap();
        let s0 = tape.sum_axis(g, 0).unwrap();
        let s = tape.sum_axis(s0, 0).unwrap();
        let grads = tape.backward(s).unwrap();
        // Row 1 gathered twice, row 0 once, row 2 never.
        assert_eq!(grads[0].values(), &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn reductions_are_order_canonical() {
        // Same multiset along axis 0 in two different orders must reduce to
        // bitwise identical results.
        let rows = [
            vec![1e16, 0.1],
            vec![1.0, -7.25],
            vec![-1e16, 3.0],
            vec![0.5, 0.125],
        ];
        let perm = [2usize, 0, 3, 1];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let permuted: Vec<f64> = perm.iter().flat_map(|&i| rows[i].clone()).collect();
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![4, 2], flat).unwrap()).unwrap();
        let b = tape
            .constant(Tensor::new(vec![4, 2], permuted).unwrap())
            .unwrap();
        let sa = tape.sum_axis(a, 0).unwrap();
        let sb = tape.sum_axis(b, 0).unwrap();
        let ma = tape.mean_axis(a, 0).unwrap();
        let mb = tape.mean_axis(b, 0).unwrap();
        for (x, y) in tape.value(sa).values().iter().zip(tape.value(sb).values()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in tape.value(ma).values().iter().zip(tape.value(mb).values()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn repeated_tapes_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = rand_tensor(&mut rng, vec![3, 4]);
        let b = rand_tensor(&mut rng, vec![4, 2]);
        let run = |a: &Tensor, b: &Tensor| {
            let mut tape = Tape::new();
            let pa = tape.param(a.clone()).unwrap();
            let pb = tape.param(b.clone()).unwrap();
            let m = tape.matmul(pa, pb).unwrap();
            let r = tape.relu(m).unwrap();
            let l = tape.frobenius_norm(r).unwrap();
            let v = tape.value(l).item().unwrap();
            (v, tape.backward(l).unwrap())
        };
        let (v1, g1) = run(&a, &b);
        let (v2, g2) = run(&a, &b);
        assert_eq!(v1.to_bits(), v2.to_bits());
        for (x, y) in g1.iter().zip(&g2) {
            for (p, q) in x.values().iter().zip(y.values()) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = rand_tensor(&mut rng, vec![3, 3]);
        let grad_of = |scale: Option<f64>| {
            let mut tape = Tape::new();
            let p = tape.param(a.clone()).unwrap();
            let n = tape.frobenius_norm(p).unwrap();
            let l = match scale {
                Some(c) => tape.scalar_mul(n, c).unwrap(),
                None => n,
            };
            tape.backward(l).unwrap().remove(0)
        };
        let g = grad_of(None);
        let g3 = grad_of(Some(3.5));
        for (x, y) in g.values().iter().zip(g3.values()) {
            assert!((3.5 * x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn fd_check_passes_on_smooth_composite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = rand_tensor(&mut rng, vec![4, 3]);
        let x = rand_tensor(&mut rng, vec![3, 2]);
        let report = finite_difference_check(
            |tape, ids| {
                let m = tape.matmul(ids[0], ids[1])?;
                let r = tape.relu(m)?;
                let s = tape.mean_axis(r, 1)?;
                let b = tape.reshape(s, vec![2, 2])?;
                let t = tape.sub(b, ids[2])?;
                tape.frobenius_norm(t)
            },
            &[w, x, rand_tensor(&mut rng, vec![2, 2])],
            1e-5,
        )
        .unwrap();
        assert!(report.checked > 0);
        assert!(
            report.max_rel_error < 1e-6,
            "max rel error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn fd_check_excludes_abs_kink_at_zero() {
        // One entry sits exactly on a kink of |x|; it must be excluded, the
        // smooth entries must check out.
        let p = Tensor::new(vec![3], vec![0.0, 0.7, -1.2]).unwrap();
        let report = finite_difference_check(
            |tape, ids| {
                let a = tape.abs(ids[0])?;
                let s = tape.sum_axis(a, 0)?;
                Ok(s)
            },
            &[p],
            1e-5,
        )
        .unwrap();
        assert_eq!(report.excluded, 1);
        assert_eq!(report.checked, 2);
        assert!(report.max_rel_error < 1e-8);
    }

    #[test]
    fn fd_check_excludes_norm_at_zero() {
        let p = Tensor::zeros(vec![2, 2]);
        let report = finite_difference_check(
            |tape, ids| tape.frobenius_norm(ids[0]),
            &[p],
            1e-5,
        )
        .unwrap();
        assert_eq!(report.checked, 0);
        assert_eq!(report.excluded, 4);
    }

    #[test]
    fn fd_check_covers_every_op() {
        // A single composite touching matmul (both forms), add (plain and
        // broadcast), sub, scalar_mul, abs away from kinks, relu, sums,
        // means, transpose, reshape, gather and the norm.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let w = rand_tensor(&mut rng, vec![2, 6]);
        let theta = rand_tensor(&mut rng, vec![3, 2, 2]);
        let bias = rand_tensor(&mut rng, vec![2]);
        let report = finite_difference_check(
            |tape, ids| {
                let theta = tape.reshape(ids[1], vec![3, 2, 2])?;
                let rows = tape.gather_rows(ids[0], vec![0, 1, 0])?; // (3, 6)
                let rows = tape.reshape(rows, vec![3, 2, 3])?;
                let rows = tape.transpose12(rows)?; // (2, 3, 3)
                let rows = tape.reshape(rows, vec![3, 2, 3])?;
                let rows = tape.mean_axis(rows, 2)?; // (3, 2)
                let rows = tape.reshape(rows, vec![3, 2, 1])?;
                let msgs = tape.matmul(theta, rows)?; // (3, 2, 1)
                let msgs = tape.reshape(msgs, vec![3, 2])?;
                let biased = tape.add(msgs, ids[2])?; // broadcast (2)
                let act = tape.relu(biased)?;
                let shifted = tape.sub(act, msgs)?;
                let scaled = tape.scalar_mul(shifted, 0.75)?;
                let mag = tape.abs(scaled)?;
                let s = tape.sum_axis(mag, 0)?;
                let s2 = tape.sum_axis(s, 0)?;
                let n = tape.frobenius_norm(mag)?;
                let both = tape.add(n, s2)?;
                Ok(both)
            },
            &[w, theta, bias],
            1e-5,
        )
        .unwrap();
        assert!(report.checked > 0);
        assert!(
            report.max_rel_error < 1e-5,
            "max rel error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn fd_check_rejects_bad_step() {
        let p = Tensor::ones(vec![1]);
        assert!(finite_difference_check(
            |tape, ids| tape.frobenius_norm(ids[0]),
            &[p],
            0.0
        )
        .is_err());
    }
}
