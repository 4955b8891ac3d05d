//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in creation order, so a node's parents always have a
//! smaller index and the graph is acyclic by construction. `backward` walks
//! the tape from the loss down to index zero.

use crate::autodiff::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};

/// Lower and upper clamp applied to probabilities before taking logs.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    BatchMatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    MulBias(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    GhostBatchNorm {
        x: NodeId,
        chunk: usize,
        xhat: Vec<f64>,
        // one entry per (chunk, column)
        inv_std: Vec<f64>,
    },
    Bce {
        pred: NodeId,
        target: Vec<f64>,
    },
    Sum(NodeId),
    Mean(NodeId),
    Reshape(NodeId),
    Permute(NodeId, Vec<usize>),
    MeanTokens(NodeId),
    FeatureEmbed {
        x: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::BatchMatMul(..) => "batch_matmul",
            Op::Add(..) => "add",
            Op::AddBias(..) => "add_bias",
            Op::MulBias(..) => "mul_bias",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softmax(_) => "softmax_rows",
            Op::LayerNorm { .. } => "layer_norm",
            Op::GhostBatchNorm { .. } => "ghost_batch_norm",
            Op::Bce { .. } => "binary_cross_entropy",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Reshape(_) => "reshape",
            Op::Permute(..) => "permute",
            Op::MeanTokens(_) => "mean_tokens",
            Op::FeatureEmbed { .. } => "feature_embed",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf | Op::Param(_) => vec![],
            Op::MatMul(a, b)
            | Op::BatchMatMul(a, b)
            | Op::Add(a, b)
            | Op::AddBias(a, b)
            | Op::MulBias(a, b)
            | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Softmax(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Reshape(a)
            | Op::Permute(a, _)
            | Op::MeanTokens(a) => vec![*a],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::GhostBatchNorm { x, .. } => vec![*x],
            Op::Bce { pred, .. } => vec![*pred],
            Op::FeatureEmbed { x, weight, bias } => vec![*x, *weight, *bias],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

/// Per-chunk column statistics produced by [`Graph::ghost_batch_norm`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkStats {
    pub rows: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let grad = Tensor::zeros(value.shape());
        self.nodes.push(Node { value, grad, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].grad
    }

    pub fn op_tag(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.tag()
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad.fill(0.0);
        }
    }

    /// Gradients of every parameter leaf, in node order.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.nodes.iter().filter_map(|n| match n.op {
            Op::Param(id) => Some((id, &n.grad)),
            _ => None,
        })
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Trainable leaf holding a copy of the parameter's current value.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b)))
    }

    /// Batched product of `[B, m, k]` and `[B, k, n]`.
    pub fn batch_matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::dim("batch_matmul", sa, sb));
        }
        let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; batch * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for t in 0..batch {
            gemm_acc(
                &da[t * m * k..(t + 1) * m * k],
                &db[t * k * n..(t + 1) * k * n],
                &mut out[t * m * n..(t + 1) * m * n],
                m,
                k,
                n,
            );
        }
        Ok(self.push(Tensor::new(vec![batch, m, n], out)?, Op::BatchMatMul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim("add", va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim("mul", va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    fn check_bias(&self, op: &'static str, x: NodeId, b: NodeId) -> Result<()> {
        let (vx, vb) = (self.value(x), self.value(b));
        if vb.rank() != 1 || vx.rank() == 0 || vx.cols() != vb.len() {
            return Err(Error::dim(op, vx.shape(), vb.shape()));
        }
        Ok(())
    }

    /// `x + b` with `b` broadcast along the last axis of `x`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_bias("add_bias", x, b)?;
        let (vx, vb) = (self.value(x), self.value(b));
        let n = vb.len();
        let data = vx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + vb.data()[i % n])
            .collect();
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        Ok(self.push(value, Op::AddBias(x, b)))
    }

    /// `x * g` with `g` broadcast along the last axis of `x`.
    pub fn mul_bias(&mut self, x: NodeId, g: NodeId) -> Result<NodeId> {
        self.check_bias("mul_bias", x, g)?;
        let (vx, vg) = (self.value(x), self.value(g));
        let n = vg.len();
        let data = vx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * vg.data()[i % n])
            .collect();
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        Ok(self.push(value, Op::MulBias(x, g)))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| v * c);
        self.push(value, Op::Scale(x, c))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| if v < 0.0 { 0.0 } else { v });
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    /// Softmax over the last axis, with max subtraction.
    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let cols = vx.cols();
        let mut out = vx.data().to_vec();
        for row in out.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let value = Tensor::new(vx.shape().to_vec(), out).expect("shape preserved");
        self.push(value, Op::Softmax(x))
    }

    /// Normalizes each row over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    ) -> Result<NodeId> {
        if eps <= 0.0 {
            return Err(Error::Usage("layer_norm eps must be positive".into()));
        }
        self.check_bias("layer_norm", x, gain)?;
        self.check_bias("layer_norm", x, bias)?;
        let vx = self.value(x);
        let (rows, cols) = (vx.rows(), vx.cols());
        let mut xhat = vec![0.0; vx.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = vx.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let s = 1.0 / (var + eps).sqrt();
            inv_std[r] = s;
            for c in 0..cols {
                xhat[r * cols + c] = (row[c] - mean) * s;
            }
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let out = xhat
            .iter()
            .enumerate()
            .map(|(i, v)| v * g[i % cols] + b[i % cols])
            .collect();
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Column-wise batch normalization of a `[m, n]` matrix computed
    /// separately over consecutive chunks of `chunk` rows (the last chunk may
    /// be shorter). Returns the normalized node (no affine transform) and the
    /// per-chunk batch statistics.
    pub fn ghost_batch_norm(
        &mut self,
        x: NodeId,
        chunk: usize,
        eps: f64,
    ) -> Result<(NodeId, Vec<ChunkStats>)> {
        let vx = self.value(x);
        if vx.rank() != 2 || chunk == 0 || eps <= 0.0 {
            return Err(Error::Usage(format!(
                "ghost_batch_norm needs a matrix, chunk >= 1 and eps > 0 (shape {:?}, chunk {chunk})",
                vx.shape()
            )));
        }
        let (rows, cols) = (vx.rows(), vx.cols());
        let data = vx.data();
        let mut xhat = vec![0.0; data.len()];
        let mut inv_std = Vec::new();
        let mut stats = Vec::new();
        let mut start = 0;
        while start < rows {
            let end = (start + chunk).min(rows);
            let count = (end - start) as f64;
            let mut mean = vec![0.0; cols];
            let mut var = vec![0.0; cols];
            for c in 0..cols {
                let m = (start..end).map(|r| data[r * cols + c]).sum::<f64>() / count;
                let v = (start..end)
                    .map(|r| (data[r * cols + c] - m).powi(2))
                    .sum::<f64>()
                    / count;
                let s = 1.0 / (v + eps).sqrt();
                for r in start..end {
                    xhat[r * cols + c] = (data[r * cols + c] - m) * s;
                }
                mean[c] = m;
                var[c] = v;
                inv_std.push(s);
            }
            stats.push(ChunkStats {
                rows: end - start,
                mean,
                var,
            });
            start = end;
        }
        let value = Tensor::new(vx.shape().to_vec(), xhat.clone())?;
        let id = self.push(
            value,
            Op::GhostBatchNorm {
                x,
                chunk,
                xhat,
                inv_std,
            },
        );
        Ok((id, stats))
    }

    /// Summed binary cross-entropy `-sum(y ln p + (1 - y) ln(1 - p))`, with
    /// `p` clamped to `[1e-7, 1 - 1e-7]`.
    pub fn binary_cross_entropy(&mut self, pred: NodeId, target: &[f64]) -> Result<NodeId> {
        let vp = self.value(pred);
        if vp.len() != target.len() {
            return Err(Error::dim(
                "binary_cross_entropy",
                vp.shape(),
                &[target.len()],
            ));
        }
        let loss: f64 = vp
            .data()
            .iter()
            .zip(target)
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                pred,
                target: target.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(x);
        if shape.iter().product::<usize>() != v.len() {
            return Err(Error::dim("reshape", v.shape(), shape));
        }
        let value = v.reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: NodeId, axes: &[usize]) -> Result<NodeId> {
        let v = self.value(x);
        let mut seen = vec![false; v.rank()];
        if axes.len() != v.rank()
            || axes
                .iter()
                .any(|&a| a >= v.rank() || std::mem::replace(&mut seen[a], true))
        {
            return Err(Error::dim("permute", v.shape(), axes));
        }
        let (data, shape) = permute_data(v.data(), v.shape(), axes);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Permute(x, axes.to_vec())))
    }

    /// Mean over axis 1 of a `[n, t, d]` tensor, giving `[n, d]`.
    pub fn mean_tokens(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        if v.rank() != 3 || v.shape()[1] == 0 {
            return Err(Error::dim("mean_tokens", v.shape(), &[]));
        }
        let (n, t, d) = (v.shape()[0], v.shape()[1], v.shape()[2]);
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            for k in 0..t {
                let src = &v.data()[(i * t + k) * d..(i * t + k + 1) * d];
                for (o, s) in out[i * d..(i + 1) * d].iter_mut().zip(src) {
                    *o += s;
                }
            }
        }
        out.iter_mut().for_each(|o| *o /= t as f64);
        let value = Tensor::new(vec![n, d], out)?;
        Ok(self.push(value, Op::MeanTokens(x)))
    }

    /// Per-feature affine token embedding: `[n, t]` with `[t, d]` weights and
    /// biases gives `[n, t, d]`, `out[i, j, :] = x[i, j] * w[j, :] + b[j, :]`.
    pub fn feature_embed(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (vx, vw, vb) = (self.value(x), self.value(weight), self.value(bias));
        if vx.rank() != 2
            || vw.rank() != 2
            || vw.shape() != vb.shape()
            || vw.shape()[0] != vx.shape()[1]
        {
            return Err(Error::dim("feature_embed", vx.shape(), vw.shape()));
        }
        let (n, t, d) = (vx.shape()[0], vx.shape()[1], vw.shape()[1]);
        let mut out = vec![0.0; n * t * d];
        for i in 0..n {
            for j in 0..t {
                let xv = vx.data()[i * t + j];
                let base = (i * t + j) * d;
                for k in 0..d {
                    out[base + k] = xv * vw.data()[j * d + k] + vb.data()[j * d + k];
                }
            }
        }
        let value = Tensor::new(vec![n, t, d], out)?;
        Ok(self.push(value, Op::FeatureEmbed { x, weight, bias }))
    }

    /// Inverted dropout: zeroes each entry with probability `p` and scales
    /// survivors by `1 / (1 - p)`. Identity when `p == 0`.
    pub fn dropout(&mut self, x: NodeId, p: f64, rng: &mut Rng) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Usage(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let shape = self.value(x).shape().to_vec();
        let n: usize = shape.iter().product();
        let mask = (0..n)
            .map(|_| if rng::unit_f64(rng) < p { 0.0 } else { keep })
            .collect();
        let mask = self.constant(Tensor::new(shape, mask)?);
        self.mul(x, mask)
    }

    /// Populates `grad` on every ancestor of `loss`. Gradients accumulate
    /// across calls until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            self.nodes[i].grad.add_assign(&g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let val = |id: NodeId| &self.nodes[id.0].value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                let mut ga = vec![0.0; m * k];
                gemm_nt_acc(g.data(), vb.data(), &mut ga, m, k, n);
                let mut gb = vec![0.0; k * n];
                gemm_tn_acc(va.data(), g.data(), &mut gb, m, k, n);
                accumulate(adj, *a, va.shape(), ga);
                accumulate(adj, *b, vb.shape(), gb);
            }
            Op::BatchMatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (batch, m, k, n) = (va.shape()[0], va.shape()[1], va.shape()[2], vb.shape()[2]);
                let mut ga = vec![0.0; batch * m * k];
                let mut gb = vec![0.0; batch * k * n];
                for t in 0..batch {
                    let gs = &g.data()[t * m * n..(t + 1) * m * n];
                    gemm_nt_acc(
                        gs,
                        &vb.data()[t * k * n..(t + 1) * k * n],
                        &mut ga[t * m * k..(t + 1) * m * k],
                        m,
                        k,
                        n,
                    );
                    gemm_tn_acc(
                        &va.data()[t * m * k..(t + 1) * m * k],
                        gs,
                        &mut gb[t * k * n..(t + 1) * k * n],
                        m,
                        k,
                        n,
                    );
                }
                accumulate(adj, *a, va.shape(), ga);
                accumulate(adj, *b, vb.shape(), gb);
            }
            Op::Add(a, b) => {
                accumulate(adj, *a, g.shape(), g.data().to_vec());
                accumulate(adj, *b, g.shape(), g.data().to_vec());
            }
            Op::AddBias(x, b) => {
                let n = val(*b).len();
                accumulate(adj, *x, g.shape(), g.data().to_vec());
                accumulate(adj, *b, &[n], column_sums(g.data(), n));
            }
            Op::MulBias(x, gain) => {
                let (vx, vg) = (val(*x), val(*gain));
                let n = vg.len();
                let gx = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * vg.data()[i % n])
                    .collect();
                let prod: Vec<f64> = g.data().iter().zip(vx.data()).map(|(a, b)| a * b).collect();
                accumulate(adj, *x, vx.shape(), gx);
                accumulate(adj, *gain, &[n], column_sums(&prod, n));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let ga = g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                let gb = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                accumulate(adj, *a, va.shape(), ga);
                accumulate(adj, *b, vb.shape(), gb);
            }
            Op::Scale(a, c) => {
                accumulate(adj, *a, g.shape(), g.data().iter().map(|v| v * c).collect());
            }
            Op::Relu(a) => {
                let ga = g
                    .data()
                    .iter()
                    .zip(val(*a).data())
                    .map(|(gv, x)| if *x > 0.0 { *gv } else { 0.0 })
                    .collect();
                accumulate(adj, *a, g.shape(), ga);
            }
            Op::Sigmoid(a) => {
                let ga = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * y * (1.0 - y))
                    .collect();
                accumulate(adj, *a, g.shape(), ga);
            }
            Op::Softmax(a) => {
                let cols = out.cols();
                let mut ga = vec![0.0; out.len()];
                for ((gr, yr), dst) in g
                    .data()
                    .chunks(cols)
                    .zip(out.data().chunks(cols))
                    .zip(ga.chunks_mut(cols))
                {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        dst[c] = yr[c] * (gr[c] - dot);
                    }
                }
                accumulate(adj, *a, g.shape(), ga);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let cols = out.cols();
                let gn = val(*gain).data();
                let mut gx = vec![0.0; out.len()];
                let mut ggain = vec![0.0; cols];
                let mut gbias = vec![0.0; cols];
                for r in 0..out.rows() {
                    let gr = &g.data()[r * cols..(r + 1) * cols];
                    let xr = &xhat[r * cols..(r + 1) * cols];
                    let dxhat: Vec<f64> = gr.iter().zip(gn).map(|(a, b)| a * b).collect();
                    let m1 = dxhat.iter().sum::<f64>() / cols as f64;
                    let m2 = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                    for c in 0..cols {
                        gx[r * cols + c] = inv_std[r] * (dxhat[c] - m1 - xr[c] * m2);
                        ggain[c] += gr[c] * xr[c];
                        gbias[c] += gr[c];
                    }
                }
                accumulate(adj, *x, out.shape(), gx);
                accumulate(adj, *gain, &[cols], ggain);
                accumulate(adj, *bias, &[cols], gbias);
            }
            Op::GhostBatchNorm {
                x,
                chunk,
                xhat,
                inv_std,
            } => {
                let (rows, cols) = (out.rows(), out.cols());
                let gd = g.data();
                let mut gx = vec![0.0; out.len()];
                let mut start = 0;
                let mut ci = 0;
                while start < rows {
                    let end = (start + chunk).min(rows);
                    let count = (end - start) as f64;
                    for c in 0..cols {
                        let s = inv_std[ci * cols + c];
                        let m1 = (start..end).map(|r| gd[r * cols + c]).sum::<f64>() / count;
                        let m2 = (start..end)
                            .map(|r| gd[r * cols + c] * xhat[r * cols + c])
                            .sum::<f64>()
                            / count;
                        for r in start..end {
                            let idx = r * cols + c;
                            gx[idx] = s * (gd[idx] - m1 - xhat[idx] * m2);
                        }
                    }
                    start = end;
                    ci += 1;
                }
                accumulate(adj, *x, out.shape(), gx);
            }
            Op::Bce { pred, target } => {
                let vp = val(*pred);
                let scale = g.item();
                let gp = vp
                    .data()
                    .iter()
                    .zip(target)
                    .map(|(&p, &y)| {
                        if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
                            0.0
                        } else {
                            scale * (p - y) / (p * (1.0 - p))
                        }
                    })
                    .collect();
                accumulate(adj, *pred, vp.shape(), gp);
            }
            Op::Sum(a) => {
                let va = val(*a);
                accumulate(adj, *a, va.shape(), vec![g.item(); va.len()]);
            }
            Op::Mean(a) => {
                let va = val(*a);
                accumulate(
                    adj,
                    *a,
                    va.shape(),
                    vec![g.item() / va.len() as f64; va.len()],
                );
            }
            Op::Reshape(a) => {
                accumulate(adj, *a, val(*a).shape(), g.data().to_vec());
            }
            Op::Permute(a, axes) => {
                let mut inverse = vec![0; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inverse[ax] = i;
                }
                let (data, _) = permute_data(g.data(), g.shape(), &inverse);
                accumulate(adj, *a, val(*a).shape(), data);
            }
            Op::MeanTokens(a) => {
                let va = val(*a);
                let (n, t, d) = (va.shape()[0], va.shape()[1], va.shape()[2]);
                let mut ga = vec![0.0; va.len()];
                for i in 0..n {
                    for k in 0..t {
                        for c in 0..d {
                            ga[(i * t + k) * d + c] = g.data()[i * d + c] / t as f64;
                        }
                    }
                }
                accumulate(adj, *a, va.shape(), ga);
            }
            Op::FeatureEmbed { x, weight, bias } => {
                let (vx, vw) = (val(*x), val(*weight));
                let (n, t, d) = (vx.shape()[0], vx.shape()[1], vw.shape()[1]);
                let mut gx = vec![0.0; n * t];
                let mut gw = vec![0.0; t * d];
                let mut gb = vec![0.0; t * d];
                for i in 0..n {
                    for j in 0..t {
                        let xv = vx.data()[i * t + j];
                        let base = (i * t + j) * d;
                        for k in 0..d {
                            let gv = g.data()[base + k];
                            gx[i * t + j] += gv * vw.data()[j * d + k];
                            gw[j * d + k] += gv * xv;
                            gb[j * d + k] += gv;
                        }
                    }
                }
                accumulate(adj, *x, vx.shape(), gx);
                accumulate(adj, *weight, vw.shape(), gw);
                accumulate(adj, *bias, vw.shape(), gb);
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, shape: &[usize], data: Vec<f64>) {
    match &mut adj[id.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(&data) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), data).expect("gradient shape matches value"));
        }
    }
}

fn column_sums(data: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for row in data.chunks(n) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

fn permute_data(data: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let rank = shape.len();
    let mut in_strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut index = vec![0usize; rank];
    for _ in 0..data.len() {
        let src: usize = index.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.push(data[src]);
        for ax in (0..rank).rev() {
            index[ax] += 1;
            if index[ax] < out_shape[ax] {
                break;
            }
            index[ax] = 0;
        }
    }
    (out, out_shape)
}

/// Logistic function, kept strictly inside `(0, 1)` even where `f64`
/// rounding would otherwise saturate.
pub fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
