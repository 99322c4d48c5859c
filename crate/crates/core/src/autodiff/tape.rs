use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use super::matrix::{accumulate_outer, matmul, matmul_transposed};
use super::params::{Gradients, ParamId, ParamStore};
use super::{Activation, Matrix, Scalar};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    Variable,
    Linear {
        x: usize,
        w: ParamId,
        rows: Option<Range<usize>>,
        b: Option<ParamId>,
    },
    Act {
        x: usize,
        act: Activation,
    },
    LayerNorm {
        x: usize,
        gain: ParamId,
        offset: ParamId,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Gather {
        x: usize,
        index: Arc<[u32]>,
    },
    SegmentSum {
        x: usize,
        index: Arc<[u32]>,
    },
    Concat {
        parts: Vec<usize>,
    },
    Add {
        a: usize,
        b: usize,
    },
    AffineCols {
        x: usize,
        scale: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Record of a forward computation, replayed in reverse by [`Tape::backward`].
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes[id].needs_grad
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, value: Matrix<T>) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// Input whose gradient is kept and returned by [`Tape::backward`].
    pub fn variable(&mut self, value: Matrix<T>) -> NodeId {
        self.push(value, Op::Variable, true)
    }

    /// `x · W + b`.
    pub fn linear(
        &mut self,
        params: &ParamStore<T>,
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
    ) -> Result<NodeId> {
        self.linear_impl(params, x, w, None, b)
    }

    /// `x · W[rows, :] + b`: the product with a horizontal slice of `W`.
    pub fn linear_rows(
        &mut self,
        params: &ParamStore<T>,
        x: NodeId,
        w: ParamId,
        rows: Range<usize>,
        b: Option<ParamId>,
    ) -> Result<NodeId> {
        self.linear_impl(params, x, w, Some(rows), b)
    }

    fn linear_impl(
        &mut self,
        params: &ParamStore<T>,
        x: NodeId,
        w: ParamId,
        rows: Option<Range<usize>>,
        b: Option<ParamId>,
    ) -> Result<NodeId> {
        let wm = params.get(w);
        let (wr, n) = wm.shape();
        let range = rows.clone().unwrap_or(0..wr);
        if range.end > wr || range.start > range.end {
            return Err(shape_err(format!(
                "row slice {range:?} of {} with {wr} rows",
                params.name(w)
            )));
        }
        let xv = &self.nodes[x.0].value;
        let k = range.len();
        if xv.cols() != k {
            return Err(shape_err(format!(
                "linear {}: input width {} but weight block has {k} rows",
                params.name(w),
                xv.cols()
            )));
        }
        let mut out = matmul(xv, &wm.as_slice()[range.start * n..range.end * n], n);
        if let Some(b) = b {
            let bv = params.get(b);
            if bv.as_slice().len() != n {
                return Err(shape_err(format!(
                    "bias {} has {} entries, expected {n}",
                    params.name(b),
                    bv.as_slice().len()
                )));
            }
            for r in 0..out.rows() {
                for (o, &bb) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                    *o += bb;
                }
            }
        }
        Ok(self.push(
            out,
            Op::Linear {
                x: x.0,
                w,
                rows,
                b,
            },
            true,
        ))
    }

    pub fn activation(&mut self, x: NodeId, act: Activation) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let mut out = xv.clone();
        for v in out.as_mut_slice() {
            *v = act.apply(*v);
        }
        let needs = self.needs(x.0);
        self.push(out, Op::Act { x: x.0, act }, needs)
    }

    /// Row-wise layer normalization with learned gain and offset.
    pub fn layer_norm(
        &mut self,
        params: &ParamStore<T>,
        x: NodeId,
        gain: ParamId,
        offset: ParamId,
    ) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        let (m, d) = xv.shape();
        let g = params.get(gain).as_slice();
        let o = params.get(offset).as_slice();
        if g.len() != d || o.len() != d {
            return Err(shape_err(format!(
                "layer norm {} expects width {}, got {d}",
                params.name(gain),
                g.len()
            )));
        }
        let inv_d = T::one() / T::of(d as f64);
        let eps = T::of(LN_EPS);
        let mut out = Matrix::zeros(m, d);
        let mut means = Vec::with_capacity(m);
        let mut rstds = Vec::with_capacity(m);
        for r in 0..m {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let rstd = T::one() / (var + eps).sqrt();
            for (c, y) in out.row_mut(r).iter_mut().enumerate() {
                *y = (row[c] - mean) * rstd * g[c] + o[c];
            }
            means.push(mean);
            rstds.push(rstd);
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x: x.0,
                gain,
                offset,
                mean: means,
                rstd: rstds,
            },
            true,
        ))
    }

    /// `out[i] = x[index[i]]`.
    pub fn gather(&mut self, x: NodeId, index: Arc<[u32]>) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        if let Some(&bad) = index.iter().find(|&&i| i as usize >= xv.rows()) {
            return Err(shape_err(format!(
                "gather index {bad} out of range for {} rows",
                xv.rows()
            )));
        }
        let out = xv.select_rows(&index);
        let needs = self.needs(x.0);
        Ok(self.push(out, Op::Gather { x: x.0, index }, needs))
    }

    /// `out[r] = Σ_{i: index[i] = r} x[i]` over `n_out` rows.
    pub fn segment_sum(&mut self, x: NodeId, index: Arc<[u32]>, n_out: usize) -> Result<NodeId> {
        let out = segment_sum(&self.nodes[x.0].value, &index, n_out)?;
        let needs = self.needs(x.0);
        Ok(self.push(out, Op::SegmentSum { x: x.0, index }, needs))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat of nothing".into()))?;
        let m = self.nodes[first.0].value.rows();
        if let Some(p) = parts.iter().find(|p| self.nodes[p.0].value.rows() != m) {
            return Err(shape_err(format!(
                "concat row mismatch: {} vs {m}",
                self.nodes[p.0].value.rows()
            )));
        }
        let width: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut data = Vec::with_capacity(m * width);
        for r in 0..m {
            for p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(r));
            }
        }
        let out = Matrix::from_vec(m, width, data)?;
        let needs = parts.iter().any(|p| self.needs(p.0));
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.iter().map(|p| p.0).collect(),
            },
            needs,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(shape_err(format!(
                "add {:?} + {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(out, Op::Add { a: a.0, b: b.0 }, needs))
    }

    /// `out[r, c] = x[r, c] * scale[c] + shift[c]`.
    pub fn affine_cols(&mut self, x: NodeId, scale: &[T], shift: &[T]) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        let d = xv.cols();
        if scale.len() != d || shift.len() != d {
            return Err(shape_err(format!(
                "column affine of width {} on {d} columns",
                scale.len()
            )));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for ((v, &s), &t) in out.row_mut(r).iter_mut().zip(scale).zip(shift) {
                *v = *v * s + t;
            }
        }
        let needs = self.needs(x.0);
        Ok(self.push(
            out,
            Op::AffineCols {
                x: x.0,
                scale: scale.to_vec(),
            },
            needs,
        ))
    }

    /// Reverse pass from one or more seeded outputs.
    ///
    /// Each seed is `(node, ∂loss/∂node)`. Returns gradients for every
    /// parameter in `params` (zero where untouched) and for every
    /// [`Tape::variable`] reached.
    pub fn backward(
        &self,
        params: &ParamStore<T>,
        seeds: &[(NodeId, Matrix<T>)],
    ) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::Config(
                "backward called on an empty tape; run the forward pass first".into(),
            ));
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (id, g) in seeds {
            let node = self
                .nodes
                .get(id.0)
                .ok_or_else(|| shape_err(format!("seed node {} not on tape", id.0)))?;
            if node.value.shape() != g.shape() {
                return Err(shape_err(format!(
                    "seed gradient {:?} for node of shape {:?}",
                    g.shape(),
                    node.value.shape()
                )));
            }
            accumulate(&mut grads, id.0, g.clone());
        }
        let mut pgrads = params.zeros_like();
        let mut var_grads = HashMap::new();

        for i in (0..self.nodes.len()).rev() {
            let Some(dy) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Variable => {
                    var_grads.insert(i, dy);
                }
                Op::Linear { x, w, rows, b } => {
                    let wm = params.get(*w);
                    let (wr, n) = wm.shape();
                    let range = rows.clone().unwrap_or(0..wr);
                    let xv = &self.nodes[*x].value;
                    accumulate_outer(
                        xv,
                        &dy,
                        &mut pgrads[w.0].as_mut_slice()[range.start * n..range.end * n],
                    );
                    if let Some(b) = b {
                        let db = pgrads[b.0].as_mut_slice();
                        for r in 0..dy.rows() {
                            for (acc, &v) in db.iter_mut().zip(dy.row(r)) {
                                *acc += v;
                            }
                        }
                    }
                    if self.needs(*x) {
                        let dx = matmul_transposed(
                            &dy,
                            &wm.as_slice()[range.start * n..range.end * n],
                            range.len(),
                        );
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Act { x, act } => {
                    if self.needs(*x) {
                        let xv = &self.nodes[*x].value;
                        let mut dx = dy;
                        for (d, &xx) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                            *d *= act.derivative(xx);
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    offset,
                    mean,
                    rstd,
                } => {
                    let xv = &self.nodes[*x].value;
                    let (m, d) = xv.shape();
                    let g = params.get(*gain).as_slice();
                    let inv_d = T::one() / T::of(d as f64);
                    let mut dx = Matrix::zeros(m, d);
                    let mut dgain = vec![T::zero(); d];
                    let mut doff = vec![T::zero(); d];
                    let mut xhat = vec![T::zero(); d];
                    let mut dxhat = vec![T::zero(); d];
                    for r in 0..m {
                        let row = xv.row(r);
                        let dyr = dy.row(r);
                        let mut s1 = T::zero();
                        let mut s2 = T::zero();
                        for c in 0..d {
                            xhat[c] = (row[c] - mean[r]) * rstd[r];
                            dgain[c] += dyr[c] * xhat[c];
                            doff[c] += dyr[c];
                            dxhat[c] = dyr[c] * g[c];
                            s1 += dxhat[c];
                            s2 += dxhat[c] * xhat[c];
                        }
                        let (s1, s2) = (s1 * inv_d, s2 * inv_d);
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = rstd[r] * (dxhat[c] - s1 - xhat[c] * s2);
                        }
                    }
                    for (a, v) in pgrads[gain.0].as_mut_slice().iter_mut().zip(dgain) {
                        *a += v;
                    }
                    for (a, v) in pgrads[offset.0].as_mut_slice().iter_mut().zip(doff) {
                        *a += v;
                    }
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Gather { x, index } => {
                    if self.needs(*x) {
                        let n = self.nodes[*x].value.rows();
                        accumulate(&mut grads, *x, segment_sum(&dy, index, n)?);
                    }
                }
                Op::SegmentSum { x, index } => {
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, dy.select_rows(index));
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.nodes[p].value.cols();
                        if self.needs(p) {
                            let mut dp = Matrix::zeros(dy.rows(), w);
                            for r in 0..dy.rows() {
                                dp.row_mut(r)
                                    .copy_from_slice(&dy.row(r)[offset..offset + w]);
                            }
                            accumulate(&mut grads, p, dp);
                        }
                        offset += w;
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    match (self.needs(a), self.needs(b)) {
                        (true, true) => {
                            accumulate(&mut grads, a, dy.clone());
                            accumulate(&mut grads, b, dy);
                        }
                        (true, false) => accumulate(&mut grads, a, dy),
                        (false, true) => accumulate(&mut grads, b, dy),
                        (false, false) => {}
                    }
                }
                Op::AffineCols { x, scale } => {
                    if self.needs(*x) {
                        let mut dx = dy;
                        for r in 0..dx.rows() {
                            for (v, &s) in dx.row_mut(r).iter_mut().zip(scale) {
                                *v *= s;
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
            }
        }
        Ok(Gradients {
            params: pgrads,
            nodes: var_grads,
        })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Matrix<T>>], i: usize, g: Matrix<T>) {
    match &mut grads[i] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Sums the rows of `values` into `n_out` buckets given by `index`.
///
/// Buckets that receive no rows are zero.
pub fn segment_sum<T: Scalar>(values: &Matrix<T>, index: &[u32], n_out: usize) -> Result<Matrix<T>> {
    if index.len() != values.rows() {
        return Err(shape_err(format!(
            "segment sum: {} indices for {} rows",
            index.len(),
            values.rows()
        )));
    }
    let d = values.cols();
    let mut out = Matrix::zeros(n_out, d);
    for (i, &r) in index.iter().enumerate() {
        let r = r as usize;
        if r >= n_out {
            return Err(shape_err(format!(
                "segment index {r} out of range for {n_out} segments"
            )));
        }
        let src = values.row(i);
        for (o, &v) in out.row_mut(r).iter_mut().zip(src) {
            *o += v;
        }
    }
    Ok(out)
}
