//! Define-by-run reverse-mode differentiation over [`DenseMatrix`] values.
//!
//! Every forward pass records onto a fresh [`Tape`]. Operands always precede
//! the node that consumes them, so the backward sweep is a single reverse
//! scan. Parameters enter as gradient-tracking leaves and constants as
//! non-tracking leaves; subgraphs that touch no tracked leaf are skipped.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{dot, DenseMatrix, SparseMatrix};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRow(Var, Var),
    MulScalarVar(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Exp(Var),
    Softplus(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    RowSum(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Arc<[usize]>),
    SpMM(Arc<SparseMatrix>, Var),
    SegmentSoftmax(Var, Arc<[usize]>, usize),
    EdgeAggregate {
        alpha: Var,
        values: Var,
        dst: Arc<[usize]>,
        src: Arc<[usize]>,
    },
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; exact zeros when `var`
    /// does not influence the loss.
    pub fn get(&self, var: Var) -> DenseMatrix {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, var: Var) -> DenseMatrix {
        match self.grads[var.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[var.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }
}

fn check_finite(m: &DenseMatrix, op: &'static str) -> Result<()> {
    if m.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

fn same_shape(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &DenseMatrix {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.nodes[var.0].value.shape()
    }

    fn tracked(&self, var: Var) -> bool {
        self.nodes[var.0].tracked
    }

    fn push(&mut self, value: DenseMatrix, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, name: &'static str, value: DenseMatrix, op: Op, tracked: bool) -> Result<Var> {
        check_finite(&value, name)?;
        Ok(self.push(value, op, tracked))
    }

    /// Gradient-tracking leaf (a learnable parameter).
    pub fn param(&mut self, value: &DenseMatrix) -> Result<Var> {
        self.push_checked("param", value.clone(), Op::Leaf, true)
    }

    /// Non-tracking leaf (inputs, masks, targets).
    pub fn constant(&mut self, value: DenseMatrix) -> Result<Var> {
        self.push_checked("constant", value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let t = self.tracked(a) || self.tracked(b);
        self.push_checked("matmul", v, Op::MatMul(a, b), t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let t = self.tracked(a) || self.tracked(b);
        self.push_checked("add", v, Op::Add(a, b), t)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let t = self.tracked(a) || self.tracked(b);
        self.push_checked("sub", v, Op::Sub(a, b), t)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let t = self.tracked(a) || self.tracked(b);
        self.push_checked("mul", v, Op::Mul(a, b), t)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x * factor);
        let t = self.tracked(a);
        self.push_checked("scale", v, Op::Scale(a, factor), t)
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x + offset);
        let t = self.tracked(a);
        self.push_checked("add_scalar", v, Op::AddScalar(a), t)
    }

    /// Broadcasts the `1 × d` row `b` over every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if bm.rows() != 1 || bm.cols() != am.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + broadcast {:?}", am.shape(), bm.shape()),
            ));
        }
        let mut v = am.clone();
        for r in 0..v.rows() {
            for (o, &x) in v.row_mut(r).iter_mut().zip(bm.data()) {
                *o += x;
            }
        }
        let t = self.tracked(a) || self.tracked(b);
        self.push_checked("add_row", v, Op::AddRow(a, b), t)
    }

    /// `a` scaled by the `1 × 1` value `s`.
    pub fn mul_scalar_var(&mut self, a: Var, s: Var) -> Result<Var> {
        if !self.value(s).is_scalar() {
            return Err(Error::shape("mul_scalar_var", "scale operand must be 1x1"));
        }
        let k = self.value(s).data()[0];
        let v = self.value(a).map(|x| x * k);
        let t = self.tracked(a) || self.tracked(s);
        self.push_checked("mul_scalar_var", v, Op::MulScalarVar(a, s), t)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.max(0.0));
        let t = self.tracked(a);
        self.push_checked("relu", v, Op::Relu(a), t)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let t = self.tracked(a);
        self.push_checked("leaky_relu", v, Op::LeakyRelu(a, slope), t)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(sigmoid);
        let t = self.tracked(a);
        self.push_checked("sigmoid", v, Op::Sigmoid(a), t)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::exp);
        let t = self.tracked(a);
        self.push_checked("exp", v, Op::Exp(a), t)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(softplus);
        let t = self.tracked(a);
        self.push_checked("softplus", v, Op::Softplus(a), t)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = softmax_rows(self.value(a));
        let t = self.tracked(a);
        self.push_checked("softmax_rows", v, Op::SoftmaxRows(a), t)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut v = x.clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
            for z in row.iter_mut() {
                *z -= lse;
            }
        }
        let t = self.tracked(a);
        self.push_checked("log_softmax_rows", v, Op::LogSoftmaxRows(a), t)
    }

    /// Sum of all entries as a `1 × 1` value.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = DenseMatrix::scalar(self.value(a).sum());
        let t = self.tracked(a);
        self.push_checked("sum", v, Op::Sum(a), t)
    }

    /// Per-row sums as an `n × 1` column.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let sums: Vec<f64> = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
        let t = self.tracked(a);
        self.push_checked("row_sum", DenseMatrix::column(&sums), Op::RowSum(a), t)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no operands"));
        };
        let rows = self.value(first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::shape("concat_cols", "operands differ in row count"));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut v = DenseMatrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                v.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let t = parts.iter().any(|&p| self.tracked(p));
        self.push_checked("concat_cols", v, Op::ConcatCols(parts.to_vec()), t)
    }

    /// Columns `start .. start + len` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("{start}..{} of {} columns", start + len, x.cols()),
            ));
        }
        let mut v = DenseMatrix::zeros(x.rows(), len);
        for r in 0..x.rows() {
            v.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        let t = self.tracked(a);
        self.push_checked("slice_cols", v, Op::SliceCols(a, start), t)
    }

    pub fn gather_rows(&mut self, a: Var, indices: Arc<[usize]>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::shape(
                "gather_rows",
                format!("row {bad} of {}", x.rows()),
            ));
        }
        let v = x.select_rows(&indices);
        let t = self.tracked(a);
        self.push_checked("gather_rows", v, Op::GatherRows(a, indices), t)
    }

    /// Fixed sparse operator applied on the left: `op · a`.
    pub fn spmm(&mut self, op: Arc<SparseMatrix>, a: Var) -> Result<Var> {
        let x = self.value(a);
        if op.cols() != x.rows() {
            return Err(Error::shape(
                "spmm",
                format!("{}x{} by {}x{}", op.rows(), op.cols(), x.rows(), x.cols()),
            ));
        }
        let v = op.mul_dense(x);
        let t = self.tracked(a);
        self.push_checked("spmm", v, Op::SpMM(op, a), t)
    }

    /// Softmax over the entries of an `E × 1` column grouped by `segment`.
    pub fn segment_softmax(&mut self, a: Var, segment: Arc<[usize]>, n_segments: usize) -> Result<Var> {
        let x = self.value(a);
        if x.cols() != 1 || x.rows() != segment.len() {
            return Err(Error::shape(
                "segment_softmax",
                format!("{:?} scores for {} segment ids", x.shape(), segment.len()),
            ));
        }
        if segment.iter().any(|&s| s >= n_segments) {
            return Err(Error::shape("segment_softmax", "segment id out of range"));
        }
        let mut max = vec![f64::NEG_INFINITY; n_segments];
        for (e, &s) in segment.iter().enumerate() {
            max[s] = max[s].max(x.data()[e]);
        }
        let mut denom = vec![0.0; n_segments];
        let mut out: Vec<f64> = segment
            .iter()
            .enumerate()
            .map(|(e, &s)| {
                let z = (x.data()[e] - max[s]).exp();
                denom[s] += z;
                z
            })
            .collect();
        for (e, &s) in segment.iter().enumerate() {
            out[e] /= denom[s];
        }
        let t = self.tracked(a);
        self.push_checked(
            "segment_softmax",
            DenseMatrix::column(&out),
            Op::SegmentSoftmax(a, segment, n_segments),
            t,
        )
    }

    /// `out[dst[e]] += alpha[e] · values[src[e]]` over all edges `e`.
    pub fn edge_aggregate(
        &mut self,
        alpha: Var,
        values: Var,
        dst: Arc<[usize]>,
        src: Arc<[usize]>,
        n_dst: usize,
    ) -> Result<Var> {
        let (al, vals) = (self.value(alpha), self.value(values));
        if al.cols() != 1 || al.rows() != dst.len() || dst.len() != src.len() {
            return Err(Error::shape(
                "edge_aggregate",
                format!("{:?} weights for {} edges", al.shape(), dst.len()),
            ));
        }
        if src.iter().any(|&s| s >= vals.rows()) || dst.iter().any(|&d| d >= n_dst) {
            return Err(Error::shape("edge_aggregate", "edge endpoint out of range"));
        }
        let mut v = DenseMatrix::zeros(n_dst, vals.cols());
        for e in 0..dst.len() {
            let w = al.data()[e];
            let (d, s) = (dst[e], src[e]);
            let src_row = vals.row(s);
            for (o, &x) in v.row_mut(d).iter_mut().zip(src_row) {
                *o += w * x;
            }
        }
        let t = self.tracked(alpha) || self.tracked(values);
        self.push_checked(
            "edge_aggregate",
            v,
            Op::EdgeAggregate {
                alpha,
                values,
                dst,
                src,
            },
            t,
        )
    }

    /// Inverted dropout: in training mode zeroes each entry with probability
    /// `rate` and scales survivors by `1 / (1 - rate)`; identity otherwise.
    pub fn dropout(&mut self, a: Var, rate: f64, rng: &mut impl Rng, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let (r, c) = self.shape(a);
        let keep = 1.0 / (1.0 - rate);
        let data = (0..r * c)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mask = self.constant(DenseMatrix::from_vec(r, c, data)?)?;
        self.mul(a, mask)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                lv.shape()
            )));
        }
        check_finite(lv, "loss")?;
        let n = self.nodes.len();
        let mut grads: Vec<Option<DenseMatrix>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<DenseMatrix>], var: Var, g: DenseMatrix) {
        if !self.tracked(var) {
            return;
        }
        match &mut grads[var.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) -> Result<()> {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.tracked(*a) {
                    let da = g.matmul_transpose_b(self.value(*b))?;
                    self.accumulate(grads, *a, da);
                }
                if self.tracked(*b) {
                    let db = self.value(*a).transpose_a_matmul(g)?;
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.tracked(*a) {
                    self.accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.tracked(*b) {
                    self.accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, k) => self.accumulate(grads, *a, g.map(|x| x * k)),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.tracked(*b) {
                    let mut db = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &x) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::MulScalarVar(a, s) => {
                let k = self.value(*s).data()[0];
                if self.tracked(*a) {
                    self.accumulate(grads, *a, g.map(|x| x * k));
                }
                if self.tracked(*s) {
                    let ds = dot(g.data(), self.value(*a).data());
                    self.accumulate(grads, *s, DenseMatrix::scalar(ds));
                }
            }
            Op::Relu(a) => {
                let d = g.zip_map(self.value(*a), |gx, x| if x > 0.0 { gx } else { 0.0 });
                self.accumulate(grads, *a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let d = g.zip_map(self.value(*a), |gx, x| if x > 0.0 { gx } else { slope * gx });
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(out, |gx, y| gx * y * (1.0 - y));
                self.accumulate(grads, *a, d);
            }
            Op::Exp(a) => self.accumulate(grads, *a, g.zip_map(out, |gx, y| gx * y)),
            Op::Softplus(a) => {
                let d = g.zip_map(self.value(*a), |gx, x| gx * sigmoid(x));
                self.accumulate(grads, *a, d);
            }
            Op::SoftmaxRows(a) => {
                let mut d = DenseMatrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let s = dot(y, gr);
                    for ((o, &yi), &gi) in d.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *o = yi * (gi - s);
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::LogSoftmaxRows(a) => {
                let mut d = DenseMatrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let s: f64 = gr.iter().sum();
                    for ((o, &ly), &gi) in d.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *o = gi - ly.exp() * s;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                self.accumulate(grads, *a, DenseMatrix::filled(r, c, g.data()[0]));
            }
            Op::RowSum(a) => {
                let (r, c) = self.shape(*a);
                let mut d = DenseMatrix::zeros(r, c);
                for i in 0..r {
                    let gi = g.data()[i];
                    d.row_mut(i).iter_mut().for_each(|v| *v = gi);
                }
                self.accumulate(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.tracked(p) {
                        let mut d = DenseMatrix::zeros(r, c);
                        for i in 0..r {
                            d.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                        }
                        self.accumulate(grads, p, d);
                    }
                    off += c;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.shape(*a);
                let mut d = DenseMatrix::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *a, d);
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = self.shape(*a);
                let mut d = DenseMatrix::zeros(r, c);
                for (k, &i) in idx.iter().enumerate() {
                    for (o, &x) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::SpMM(op, a) => self.accumulate(grads, *a, op.transpose_mul_dense(g)),
            Op::SegmentSoftmax(a, segment, n_segments) => {
                let y = out.data();
                let mut weighted = vec![0.0; *n_segments];
                for (e, &s) in segment.iter().enumerate() {
                    weighted[s] += y[e] * g.data()[e];
                }
                let d: Vec<f64> = segment
                    .iter()
                    .enumerate()
                    .map(|(e, &s)| y[e] * (g.data()[e] - weighted[s]))
                    .collect();
                self.accumulate(grads, *a, DenseMatrix::column(&d));
            }
            Op::EdgeAggregate {
                alpha,
                values,
                dst,
                src,
            } => {
                let (al, vals) = (self.value(*alpha), self.value(*values));
                if self.tracked(*alpha) {
                    let d: Vec<f64> = (0..dst.len())
                        .map(|e| dot(g.row(dst[e]), vals.row(src[e])))
                        .collect();
                    self.accumulate(grads, *alpha, DenseMatrix::column(&d));
                }
                if self.tracked(*values) {
                    let mut d = DenseMatrix::zeros(vals.rows(), vals.cols());
                    for e in 0..dst.len() {
                        let w = al.data()[e];
                        for (o, &x) in d.row_mut(src[e]).iter_mut().zip(g.row(dst[e])) {
                            *o += w * x;
                        }
                    }
                    self.accumulate(grads, *values, d);
                }
            }
        }
        Ok(())
    }
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(x: &DenseMatrix) -> DenseMatrix {
    let mut v = x.clone();
    for r in 0..v.rows() {
        let row = v.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for z in row.iter_mut() {
            *z = (*z - max).exp();
            total += *z;
        }
        for z in row.iter_mut() {
            *z /= total;
        }
    }
    v
}

/// Scalar logistic function, stable for large `|x|`.
pub fn logistic(x: f64) -> f64 {
    sigmoid(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{finite_difference_check, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn activations_on_known_values() {
        let mut t = Tape::new();
        let x = t.constant(DenseMatrix::from_rows(&[[-1.0, 0.0, 2.0]])).unwrap();
        let r = t.relu(x).unwrap();
        assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = t.constant(DenseMatrix::from_rows(&[[0.0, 0.0]])).unwrap();
        let s = t.softmax_rows(z).unwrap();
        assert_eq!(t.value(s).data(), &[0.5, 0.5]);
        let zero = t.constant(DenseMatrix::scalar(0.0)).unwrap();
        let sg = t.sigmoid(zero).unwrap();
        assert_eq!(t.value(sg).data(), &[0.5]);
        let l = t.leaky_relu(x, 0.2).unwrap();
        assert_eq!(t.value(l).data(), &[-0.2, 0.0, 2.0]);
    }

    #[test]
    fn linear_map_gradient_is_outer_product() {
        let mut t = Tape::new();
        let w = t
            .param(&DenseMatrix::from_rows(&[[0.3, -0.2, 0.5], [1.0, 2.0, -1.0]]))
            .unwrap();
        let x = t.constant(DenseMatrix::column(&[1.0, 2.0, 3.0])).unwrap();
        let y = t.matmul(w, x).unwrap();
        let loss = t.sum(y).unwrap();
        let g = t.backward(loss).unwrap().get(w);
        assert_eq!(g, DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]));
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut t = Tape::new();
        let used = t.param(&DenseMatrix::from_rows(&[[1.0, 2.0]])).unwrap();
        let unused = t.param(&DenseMatrix::from_rows(&[[3.0, 4.0]])).unwrap();
        let loss = t.sum(used).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(unused), DenseMatrix::zeros(1, 2));
        assert_eq!(g.get(used), DenseMatrix::filled(1, 2, 1.0));
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut t = Tape::new();
        let w = t.param(&DenseMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(t.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut t = Tape::new();
        let bad = DenseMatrix::from_rows(&[[f64::NAN]]);
        assert!(matches!(t.param(&bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(6, 5, 4.0, &mut rng);
        let y = softmax_rows(&x);
        for r in 0..y.rows() {
            let s: f64 = y.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(y.row(r).iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    /// Every primitive, composed into one scalar, against central differences.
    #[test]
    fn primitive_gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(4, 3, 1.0, &mut rng);
            let b = random_matrix(3, 5, 1.0, &mut rng);
            let bias = random_matrix(1, 5, 1.0, &mut rng);
            let sparse = Arc::new(SparseMatrix::from_row_lists(
                4,
                vec![
                    vec![(0, 0.5), (2, 1.5)],
                    vec![(1, -1.0)],
                    vec![(3, 0.25), (0, 0.75)],
                ],
            ));
            let dst: Arc<[usize]> = vec![0, 0, 1, 2, 2, 2].into();
            let src: Arc<[usize]> = vec![0, 1, 1, 2, 3, 0].into();
            let gather: Arc<[usize]> = vec![2, 0, 2].into();
            let report = finite_difference_check(&[a, b, bias], |t, vars| {
                let (a, b, bias) = (vars[0], vars[1], vars[2]);
                let ab = t.matmul(a, b)?;
                let h = t.add_row(ab, bias)?;
                let h1 = t.leaky_relu(h, 0.2)?;
                let h2 = t.sigmoid(h)?;
                let h3 = t.softplus(h)?;
                let h4 = t.mul(h1, h2)?;
                let h5 = t.sub(h4, h3)?;
                let p = t.spmm(sparse.clone(), h5)?;
                let sm = t.softmax_rows(p)?;
                let lsm = t.log_softmax_rows(p)?;
                let q = t.add(sm, lsm)?;
                let score = t.row_sum(h5)?;
                let edge_scores = t.gather_rows(score, src.clone())?;
                let alpha = t.segment_softmax(edge_scores, dst.clone(), 3)?;
                let agg = t.edge_aggregate(alpha, h2, dst.clone(), src.clone(), 3)?;
                let cat = t.concat_cols(&[q, agg])?;
                let sl = t.slice_cols(cat, 2, 6)?;
                let gr = t.gather_rows(sl, gather.clone())?;
                let e = t.scale(gr, 0.3)?;
                let e = t.exp(e)?;
                let k = t.slice_cols(bias, 0, 1)?;
                let e = t.mul_scalar_var(e, k)?;
                let e = t.add_scalar(e, 1.0)?;
                let rl = t.relu(e)?;
                t.sum(rl)
            });
            assert!(report.max_rel_err < 1e-4, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn dropout_modes_and_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = Tape::new();
        let x = t.constant(DenseMatrix::filled(100, 100, 2.0)).unwrap();
        assert_eq!(t.dropout(x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(t.dropout(x, 0.5, &mut rng, false).unwrap(), x);
        assert!(t.dropout(x, 1.0, &mut rng, true).is_err());
        assert!(t.dropout(x, -0.1, &mut rng, true).is_err());

        let d = t.dropout(x, 0.5, &mut rng, true).unwrap();
        let out = t.value(d);
        let survivors = out.data().iter().filter(|&&v| v != 0.0).count();
        let frac = survivors as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "surviving fraction {frac}");
        let mean = out.sum() / 10_000.0;
        assert!((mean - 2.0).abs() / 2.0 < 0.05, "mean {mean}");
    }

    #[test]
    fn replay_is_bitwise_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let a = random_matrix(5, 5, 1.0, &mut rng);
            let mut t = Tape::new();
            let v = t.param(&a).unwrap();
            let m = t.matmul(v, v).unwrap();
            let s = t.softmax_rows(m).unwrap();
            t.value(s).clone()
        };
        assert_eq!(run().data(), run().data());
    }
}
