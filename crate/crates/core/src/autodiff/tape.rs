//! Reverse-mode tape over dense matrices.
//!
//! Every primitive evaluates eagerly and records enough of its inputs to
//! produce vector-Jacobian products in [`Tape::backward`]. Values are 2-D
//! (`rows × cols`) except scalar losses, which carry shape `[]`.

use std::collections::BTreeMap;

use super::tensor::{Gradient, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Cross-entropy targets: hard class indices or one probability row per sample.
#[derive(Clone, Debug)]
pub enum Targets {
    Indices(Vec<usize>),
    Probs(Tensor),
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Transpose(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    CrossEntropy { logits: Var, targets: Targets, weights: Option<Vec<f64>>, probs: Vec<f64> },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Parameters of a [`ParamSet`] bound onto a tape as leaves.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

fn row_softmax(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn row_masked_softmax(row: &[f64], mask: &[bool], out: &mut [f64]) {
    let max = row
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let mut sum = 0.0;
    for ((o, &v), &m) in out.iter_mut().zip(row).zip(mask) {
        *o = if m { (v - max).exp() } else { 0.0 };
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
    c
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a value no gradient is taken against.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Copies `v` as a constant: the stop-gradient.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    /// Binds every tensor of `params` as a differentiable leaf.
    pub fn bind(&mut self, params: &ParamSet) -> Bound {
        let mut vars = BTreeMap::new();
        for (name, t) in params.iter() {
            let v = self.push(t.clone(), Op::Leaf);
            self.params.push((name.to_string(), v));
            vars.insert(name.to_string(), v);
        }
        Bound { vars }
    }

    fn dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v)
            .dims2()
            .map_err(|_| Error::shape(op, format!("expected a matrix, got {:?}", self.value(v).shape())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a, "matmul")?;
        let (k2, n) = self.dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("{}x{} @ {}x{}", m, k, k2, n)));
        }
        let c = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::new(vec![m, n], c)?, Op::MatMul(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let shape = self.value(a).shape().to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(Tensor::new(shape, data)?, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let shape = self.value(a).shape().to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul(a, b)))
    }

    /// Adds the length-`cols` vector `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (rows, cols) = self.dims(a, "add_row")?;
        if self.value(b).numel() != cols {
            return Err(Error::shape(
                "add_row",
                format!("bias of {} values for {} columns", self.value(b).numel(), cols),
            ));
        }
        let bias = self.value(b).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for r in 0..rows {
            for (x, bv) in data[r * cols..(r + 1) * cols].iter_mut().zip(&bias) {
                *x += bv;
            }
        }
        Ok(self.push(Tensor::new(vec![rows, cols], data)?, Op::AddRow(a, b)))
    }

    /// `x · w + b` for `x: n×in`, `w: in×out`, `b: out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row(xw, b),
            None => Ok(xw),
        }
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut t = self.value(a).clone();
        t.data_mut().iter_mut().for_each(|v| *v *= s);
        self.push(t, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut t = self.value(a).clone();
        t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(t, Op::Relu(a))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a, "transpose")?;
        let data = transpose_raw(self.value(a).data(), r, c);
        Ok(self.push(Tensor::new(vec![c, r], data)?, Op::Transpose(a)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(a, "slice_cols")?;
        if start + len > c {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {}..{} of {}", start, start + len, c),
            ));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        Ok(self.push(Tensor::new(vec![r, len], data)?, Op::SliceCols { x: a, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols", "no inputs"));
        }
        let (r, _) = self.dims(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.dims(p, "concat_cols")?;
            if pr != r {
                return Err(Error::shape("concat_cols", format!("{} rows vs {}", pr, r)));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(Tensor::new(vec![r, total], data)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_rows", "no inputs"));
        }
        let (_, c) = self.dims(parts[0], "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (pr, pc) = self.dims(p, "concat_rows")?;
            if pc != c {
                return Err(Error::shape("concat_rows", format!("{} columns vs {}", pc, c)));
            }
            rows += pr;
            data.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Tensor::new(vec![rows, c], data)?, Op::ConcatRows(parts.to_vec())))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a, "softmax")?;
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            row_softmax(&src[i * c..(i + 1) * c], &mut out[i * c..(i + 1) * c]);
        }
        Ok(self.push(Tensor::new(vec![r, c], out)?, Op::Softmax(a)))
    }

    /// Row-wise softmax restricted to columns where `mask` is true; other
    /// columns receive exactly zero weight.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let (r, c) = self.dims(a, "masked_softmax")?;
        if mask.len() != c {
            return Err(Error::shape(
                "masked_softmax",
                format!("mask of {} for {} columns", mask.len(), c),
            ));
        }
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            row_masked_softmax(&src[i * c..(i + 1) * c], mask, &mut out[i * c..(i + 1) * c]);
        }
        // The softmax VJP only needs the output, so masking needs no extra state.
        Ok(self.push(Tensor::new(vec![r, c], out)?, Op::Softmax(a)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a, "log_softmax")?;
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            for (o, v) in out[i * c..(i + 1) * c].iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        Ok(self.push(Tensor::new(vec![r, c], out)?, Op::LogSoftmax(a)))
    }

    /// Normalizes each row to zero mean and unit variance, then applies
    /// the per-column affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.dims(x, "layer_norm")?;
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(Error::shape("layer_norm", format!("affine parameters must have {} entries", c)));
        }
        let src = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = g[j] * h + b[j];
            }
        }
        Ok(self.push(
            Tensor::new(vec![r, c], out)?,
            Op::LayerNorm { x, gamma, beta, xhat, inv_std },
        ))
    }

    /// Mean cross-entropy of row-wise `softmax(logits)` against `targets`.
    ///
    /// With `weights`, the mean is `Σ wᵢ·ceᵢ / Σ wᵢ`; an all-zero weight
    /// vector yields a zero loss with zero gradient.
    pub fn cross_entropy(&mut self, logits: Var, targets: Targets, weights: Option<Vec<f64>>) -> Result<Var> {
        let (r, c) = self.dims(logits, "cross_entropy")?;
        if c < 2 {
            return Err(Error::shape("cross_entropy", "need at least two classes"));
        }
        match &targets {
            Targets::Indices(ix) => {
                if ix.len() != r {
                    return Err(Error::shape("cross_entropy", format!("{} targets for {} rows", ix.len(), r)));
                }
                if let Some(&bad) = ix.iter().find(|&&t| t >= c) {
                    return Err(Error::TargetOutOfRange { target: bad, classes: c });
                }
            }
            Targets::Probs(p) => {
                if p.dims2()? != (r, c) {
                    return Err(Error::shape(
                        "cross_entropy",
                        format!("probability targets {:?} for logits {}x{}", p.shape(), r, c),
                    ));
                }
            }
        }
        if let Some(w) = &weights {
            if w.len() != r {
                return Err(Error::shape("cross_entropy", format!("{} weights for {} rows", w.len(), r)));
            }
        }
        let src = self.value(logits).data();
        let mut probs = vec![0.0; r * c];
        let mut total = 0.0;
        let mut wsum = 0.0;
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            row_softmax(row, &mut probs[i * c..(i + 1) * c]);
            let w = weights.as_ref().map_or(1.0, |w| w[i]);
            if w == 0.0 {
                continue;
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            let ce = match &targets {
                Targets::Indices(ix) => lse - row[ix[i]],
                Targets::Probs(p) => p.row(i).iter().zip(row).map(|(q, z)| q * (lse - z)).sum(),
            };
            total += w * ce;
            wsum += w;
        }
        let loss = if wsum > 0.0 { total / wsum } else { 0.0 };
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, targets, weights, probs }))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Adjoints of every node with respect to the scalar `loss`.
    fn adjoints(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        fn acc(adj: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
            match &mut adj[v.0] {
                Some(a) => a.iter_mut().zip(g).for_each(|(x, y)| *x += y),
                slot => *slot = Some(g.to_vec()),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(up) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    adj[idx] = Some(up);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims2()?;
                    let (_, n) = self.value(*b).dims2()?;
                    let bt = transpose_raw(self.value(*b).data(), k, n);
                    let da = matmul_raw(&up, &bt, m, n, k);
                    let at = transpose_raw(self.value(*a).data(), m, k);
                    let db = matmul_raw(&at, &up, k, m, n);
                    acc(&mut adj, *a, &da);
                    acc(&mut adj, *b, &db);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, &up);
                    acc(&mut adj, *b, &up);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = up.iter().zip(self.value(*b).data()).map(|(u, y)| u * y).collect();
                    let db: Vec<f64> = up.iter().zip(self.value(*a).data()).map(|(u, x)| u * x).collect();
                    acc(&mut adj, *a, &da);
                    acc(&mut adj, *b, &db);
                }
                Op::AddRow(a, b) => {
                    let cols = self.value(*b).numel();
                    let mut db = vec![0.0; cols];
                    for chunk in up.chunks(cols) {
                        db.iter_mut().zip(chunk).for_each(|(d, u)| *d += u);
                    }
                    acc(&mut adj, *a, &up);
                    acc(&mut adj, *b, &db);
                }
                Op::Scale(a, s) => {
                    let da: Vec<f64> = up.iter().map(|u| u * s).collect();
                    acc(&mut adj, *a, &da);
                }
                Op::Relu(a) => {
                    let da: Vec<f64> = up
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(u, &x)| if x > 0.0 { *u } else { 0.0 })
                        .collect();
                    acc(&mut adj, *a, &da);
                }
                Op::Transpose(a) => {
                    let (r, c) = self.value(*a).dims2()?;
                    let da = transpose_raw(&up, c, r);
                    acc(&mut adj, *a, &da);
                }
                Op::SliceCols { x, start } => {
                    let (r, c) = self.value(*x).dims2()?;
                    let len = node.value.dims2()?.1;
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        dx[i * c + start..i * c + start + len].copy_from_slice(&up[i * len..(i + 1) * len]);
                    }
                    acc(&mut adj, *x, &dx);
                }
                Op::ConcatCols(parts) => {
                    let (r, total) = node.value.dims2()?;
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).dims2()?.1;
                        let mut dp = Vec::with_capacity(r * w);
                        for i in 0..r {
                            dp.extend_from_slice(&up[i * total + offset..i * total + offset + w]);
                        }
                        acc(&mut adj, p, &dp);
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).numel();
                        acc(&mut adj, p, &up[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Softmax(a) => {
                    let (r, c) = node.value.dims2()?;
                    let y = node.value.data();
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        let yr = &y[i * c..(i + 1) * c];
                        let ur = &up[i * c..(i + 1) * c];
                        let dotp: f64 = yr.iter().zip(ur).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            da[i * c + j] = yr[j] * (ur[j] - dotp);
                        }
                    }
                    acc(&mut adj, *a, &da);
                }
                Op::LogSoftmax(a) => {
                    let (r, c) = node.value.dims2()?;
                    let y = node.value.data();
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        let ur = &up[i * c..(i + 1) * c];
                        let s: f64 = ur.iter().sum();
                        for j in 0..c {
                            da[i * c + j] = ur[j] - y[i * c + j].exp() * s;
                        }
                    }
                    acc(&mut adj, *a, &da);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let (r, c) = node.value.dims2()?;
                    let g = self.value(*gamma).data();
                    let mut dx = vec![0.0; r * c];
                    let mut dg = vec![0.0; c];
                    let mut db = vec![0.0; c];
                    for i in 0..r {
                        let ur = &up[i * c..(i + 1) * c];
                        let hr = &xhat[i * c..(i + 1) * c];
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..c {
                            dg[j] += ur[j] * hr[j];
                            db[j] += ur[j];
                            let dh = ur[j] * g[j];
                            sum_dh += dh;
                            sum_dh_h += dh * hr[j];
                        }
                        let n = c as f64;
                        for j in 0..c {
                            let dh = ur[j] * g[j];
                            dx[i * c + j] = inv_std[i] / n * (n * dh - sum_dh - hr[j] * sum_dh_h);
                        }
                    }
                    acc(&mut adj, *x, &dx);
                    acc(&mut adj, *gamma, &dg);
                    acc(&mut adj, *beta, &db);
                }
                Op::CrossEntropy { logits, targets, weights, probs } => {
                    let (r, c) = self.value(*logits).dims2()?;
                    let wsum: f64 = weights.as_ref().map_or(r as f64, |w| w.iter().sum());
                    let mut dz = vec![0.0; r * c];
                    if wsum > 0.0 {
                        for i in 0..r {
                            let w = weights.as_ref().map_or(1.0, |w| w[i]);
                            if w == 0.0 {
                                continue;
                            }
                            let coef = up[0] * w / wsum;
                            let mass = match targets {
                                Targets::Indices(_) => 1.0,
                                Targets::Probs(p) => p.row(i).iter().sum(),
                            };
                            for j in 0..c {
                                let t = match targets {
                                    Targets::Indices(ix) => (ix[i] == j) as u8 as f64,
                                    Targets::Probs(p) => p.data()[i * c + j],
                                };
                                dz[i * c + j] = coef * (mass * probs[i * c + j] - t);
                            }
                        }
                    }
                    acc(&mut adj, *logits, &dz);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).numel();
                    acc(&mut adj, *a, &vec![up[0]; n]);
                }
            }
        }
        Ok(adj)
    }

    /// Gradient of the scalar `loss` with respect to every bound parameter.
    ///
    /// Parameters bound but unused by the loss receive zeros. A parameter
    /// bound more than once collects the sum over its leaves.
    pub fn backward(&self, loss: Var) -> Result<Gradient> {
        let adj = self.adjoints(loss)?;
        let mut grad = Gradient::default();
        for (name, v) in &self.params {
            let shape = self.value(*v).shape().to_vec();
            let contrib = adj
                .get(v.0)
                .and_then(|a| a.clone())
                .unwrap_or_else(|| vec![0.0; self.value(*v).numel()]);
            let t = Tensor::new(shape, contrib)?;
            match grad.get(name) {
                Ok(existing) => {
                    let mut sum = existing.clone();
                    sum.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b);
                    grad.insert(name.clone(), sum);
                }
                Err(_) => grad.insert(name.clone(), t),
            }
        }
        Ok(grad)
    }

    /// Adjoint of an arbitrary recorded value (zeros when it does not reach `loss`).
    pub fn grad_of(&self, loss: Var, v: Var) -> Result<Tensor> {
        let adj = self.adjoints(loss)?;
        let shape = self.value(v).shape().to_vec();
        let data = adj
            .get(v.0)
            .and_then(|a| a.clone())
            .unwrap_or_else(|| vec![0.0; self.value(v).numel()]);
        Tensor::new(shape, data)
    }
}
