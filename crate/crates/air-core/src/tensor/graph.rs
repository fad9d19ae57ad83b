//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records one forward computation as an append-only list of
//! nodes; node inputs always point backward, so the insertion order is a
//! topological order and a single reverse sweep computes all gradients.
//! Gradient accumulation is additive over fan-out. Every op validates its
//! output for finiteness: NaN/Inf is an error state, not a value.

use super::{invert_perm, permute_raw, Tensor};
use crate::error::TensorError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

/// Forward-pass mode. Dropout is active only in `Train`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine {
        x: usize,
        w: usize,
        b: Option<usize>,
        m: usize,
        k: usize,
        j: usize,
    },
    Bmm {
        a: usize,
        b: usize,
        trans_b: bool,
        groups: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    LayerNorm {
        x: usize,
        gamma: Option<usize>,
        beta: Option<usize>,
        eps: f64,
    },
    Gelu {
        x: usize,
        /// tanh(u(x)) cached from the forward pass for the backward rule.
        tanh: Vec<f64>,
    },
    Relu {
        x: usize,
    },
    Dropout {
        x: usize,
        mask: Vec<f64>,
    },
    Add {
        a: usize,
        b: usize,
    },
    Scale {
        x: usize,
        c: f64,
    },
    Permute {
        x: usize,
        perm: Vec<usize>,
    },
    Reshape {
        x: usize,
    },
    ReduceMean {
        x: usize,
        axis: usize,
    },
    ReduceMax {
        x: usize,
        argmax: Vec<usize>,
    },
    SoftmaxLast {
        x: usize,
    },
    SoftmaxXent {
        logits: usize,
        labels: Vec<usize>,
    },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// One recorded forward computation plus its gradients after `backward`.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert an input tensor. Gradients are accumulated for it only when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> VarId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        VarId(id)
    }

    /// Insert a non-trainable input.
    pub fn constant(&mut self, value: Tensor) -> VarId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: VarId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Gradient of the last `backward` target with respect to `id`, if any
    /// was accumulated.
    pub fn grad(&self, id: VarId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<VarId, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad: false,
            op,
        });
        Ok(VarId(id))
    }

    // ── Forward ops ──────────────────────────────────────────────────

    /// `out[..., j] = Σ_k x[..., k]·w[k, j] (+ b[j])`: a fully connected
    /// map over the last axis, all leading axes batched with shared weights.
    pub fn affine(&mut self, x: VarId, w: VarId, b: Option<VarId>) -> Result<VarId, TensorError> {
        let xs = self.nodes[x.0].value.shape().to_vec();
        let ws = self.nodes[w.0].value.shape().to_vec();
        if ws.len() != 2 || *xs.last().unwrap() != ws[0] {
            return Err(TensorError::ShapeMismatch {
                op: "affine",
                lhs: xs,
                rhs: ws,
            });
        }
        let (k, j) = (ws[0], ws[1]);
        if let Some(bid) = b {
            let bs = self.nodes[bid.0].value.shape();
            if bs != [j] {
                return Err(TensorError::ShapeMismatch {
                    op: "affine",
                    lhs: ws,
                    rhs: bs.to_vec(),
                });
            }
        }
        let m = self.nodes[x.0].value.numel() / k;
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = j;

        let xd = self.nodes[x.0].value.data();
        let wd = self.nodes[w.0].value.data();
        let bd = b.map(|bid| self.nodes[bid.0].value.data());
        let data = affine_fwd(xd, wd, bd, m, k, j);
        self.push(
            Tensor::new(out_shape, data)?,
            Op::Affine {
                x: x.0,
                w: w.0,
                b: b.map(|v| v.0),
                m,
                k,
                j,
            },
            "affine",
        )
    }

    /// Grouped matrix multiply `a[g]·b[g]` with `a: [G,M,K]` and
    /// `b: [G,K,N]`, or `a[g]·b[g]ᵀ` with `b: [G,N,K]` when `trans_b`.
    pub fn bmm(&mut self, a: VarId, b: VarId, trans_b: bool) -> Result<VarId, TensorError> {
        let ash = self.nodes[a.0].value.shape().to_vec();
        let bsh = self.nodes[b.0].value.shape().to_vec();
        let bad = |ash: Vec<usize>, bsh: Vec<usize>| TensorError::ShapeMismatch {
            op: "bmm",
            lhs: ash,
            rhs: bsh,
        };
        if ash.len() != 3 || bsh.len() != 3 || ash[0] != bsh[0] {
            return Err(bad(ash, bsh));
        }
        let (groups, m, k) = (ash[0], ash[1], ash[2]);
        let n = if trans_b { bsh[1] } else { bsh[2] };
        let k_b = if trans_b { bsh[2] } else { bsh[1] };
        if k_b != k {
            return Err(bad(ash, bsh));
        }
        let ad = self.nodes[a.0].value.data();
        let bd = self.nodes[b.0].value.data();
        let mut data = vec![0.0; groups * m * n];
        for g in 0..groups {
            let ag = &ad[g * m * k..(g + 1) * m * k];
            let bg = &bd[g * k * n..(g + 1) * k * n];
            let og = &mut data[g * m * n..(g + 1) * m * n];
            if trans_b {
                for (ar, or) in ag.chunks_exact(k).zip(og.chunks_exact_mut(n)) {
                    for (ov, br) in or.iter_mut().zip(bg.chunks_exact(k)) {
                        *ov = dot(ar, br);
                    }
                }
            } else {
                for (ar, or) in ag.chunks_exact(k).zip(og.chunks_exact_mut(n)) {
                    for (av, br) in ar.iter().zip(bg.chunks_exact(n)) {
                        axpy(*av, br, or);
                    }
                }
            }
        }
        self.push(
            Tensor::new(vec![groups, m, n], data)?,
            Op::Bmm {
                a: a.0,
                b: b.0,
                trans_b,
                groups,
                m,
                k,
                n,
            },
            "bmm",
        )
    }

    /// Normalize over the last axis to zero mean and unit variance, then
    /// optionally scale-shift with per-channel `gamma`/`beta`.
    pub fn layer_norm(
        &mut self,
        x: VarId,
        gamma: Option<VarId>,
        beta: Option<VarId>,
        eps: f64,
    ) -> Result<VarId, TensorError> {
        if eps <= 0.0 {
            return Err(TensorError::InvalidParam {
                op: "layer_norm",
                msg: format!("eps must be positive, got {eps}"),
            });
        }
        let xs = self.nodes[x.0].value.shape().to_vec();
        let d = *xs.last().unwrap();
        for opt in [gamma, beta] {
            if let Some(p) = opt {
                let ps = self.nodes[p.0].value.shape();
                if ps != [d] {
                    return Err(TensorError::ShapeMismatch {
                        op: "layer_norm",
                        lhs: xs,
                        rhs: ps.to_vec(),
                    });
                }
            }
        }
        let xd = self.nodes[x.0].value.data();
        let gd = gamma.map(|g| self.nodes[g.0].value.data());
        let bd = beta.map(|b| self.nodes[b.0].value.data());
        let mut data = vec![0.0; xd.len()];
        for (xr, or) in xd.chunks_exact(d).zip(data.chunks_exact_mut(d)) {
            let mean = xr.iter().sum::<f64>() / d as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for (i, (o, v)) in or.iter_mut().zip(xr).enumerate() {
                let mut y = (v - mean) * inv_std;
                if let Some(g) = gd {
                    y *= g[i];
                }
                if let Some(b) = bd {
                    y += b[i];
                }
                *o = y;
            }
        }
        self.push(
            Tensor::new(xs, data)?,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.map(|v| v.0),
                beta: beta.map(|v| v.0),
                eps,
            },
            "layer_norm",
        )
    }

    /// Elementwise GeLU via the tanh approximation
    /// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`; the backward rule is
    /// the exact derivative of this approximation.
    pub fn gelu(&mut self, x: VarId) -> Result<VarId, TensorError> {
        let xv = &self.nodes[x.0].value;
        let n = xv.numel();
        let mut data = Vec::with_capacity(n);
        let mut tanh = Vec::with_capacity(n);
        for &v in xv.data() {
            let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
            tanh.push(t);
            data.push(0.5 * v * (1.0 + t));
        }
        self.push(
            Tensor::new(xv.shape().to_vec(), data)?,
            Op::Gelu { x: x.0, tanh },
            "gelu",
        )
    }

    pub fn relu(&mut self, x: VarId) -> Result<VarId, TensorError> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| v.max(0.0)).collect();
        self.push(
            Tensor::new(xv.shape().to_vec(), data)?,
            Op::Relu { x: x.0 },
            "relu",
        )
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`; eval mode is
    /// the identity (the input id is returned unchanged). The mask is kept
    /// for the backward pass.
    pub fn dropout(
        &mut self,
        x: VarId,
        p: f64,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<VarId, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidParam {
                op: "dropout",
                msg: format!("rate must lie in [0, 1), got {p}"),
            });
        }
        if mode == Mode::Eval {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let xv = &self.nodes[x.0].value;
        let mask: Vec<f64> = (0..xv.numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.push(
            Tensor::new(xv.shape().to_vec(), data)?,
            Op::Dropout { x: x.0, mask },
            "dropout",
        )
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        let ash = self.nodes[a.0].value.shape();
        let bsh = self.nodes[b.0].value.shape();
        if ash != bsh {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: ash.to_vec(),
                rhs: bsh.to_vec(),
            });
        }
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x + y)
            .collect();
        self.push(
            Tensor::new(ash.to_vec(), data)?,
            Op::Add { a: a.0, b: b.0 },
            "add",
        )
    }

    pub fn scale(&mut self, x: VarId, c: f64) -> Result<VarId, TensorError> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| v * c).collect();
        self.push(
            Tensor::new(xv.shape().to_vec(), data)?,
            Op::Scale { x: x.0, c },
            "scale",
        )
    }

    /// Axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: VarId, perm: &[usize]) -> Result<VarId, TensorError> {
        let xv = &self.nodes[x.0].value;
        let rank = xv.rank();
        let mut seen = vec![false; rank];
        let valid = perm.len() == rank
            && perm.iter().all(|&p| {
                if p >= rank || seen[p] {
                    false
                } else {
                    seen[p] = true;
                    true
                }
            });
        if !valid {
            return Err(TensorError::InvalidParam {
                op: "permute",
                msg: format!("{perm:?} is not a permutation of 0..{rank}"),
            });
        }
        let (data, shape) = permute_raw(xv.data(), xv.shape(), perm);
        self.push(
            Tensor::new(shape, data)?,
            Op::Permute {
                x: x.0,
                perm: perm.to_vec(),
            },
            "permute",
        )
    }

    pub fn reshape(&mut self, x: VarId, shape: &[usize]) -> Result<VarId, TensorError> {
        let xv = &self.nodes[x.0].value;
        let numel: usize = shape.iter().product();
        if numel != xv.numel() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: xv.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = xv.data().to_vec();
        self.push(
            Tensor::new(shape.to_vec(), data)?,
            Op::Reshape { x: x.0 },
            "reshape",
        )
    }

    /// Mean over `axis`; the axis is dropped from the shape (a rank-1 input
    /// reduces to shape `[1]`).
    pub fn reduce_mean(&mut self, x: VarId, axis: usize) -> Result<VarId, TensorError> {
        let (outer, al, inner, out_shape) = self.reduce_geometry(x, axis)?;
        let xd = self.nodes[x.0].value.data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..al {
                let row = &xd[(o * al + a) * inner..(o * al + a + 1) * inner];
                let dst = &mut data[o * inner..(o + 1) * inner];
                for (d, v) in dst.iter_mut().zip(row) {
                    *d += v;
                }
            }
        }
        let scale = 1.0 / al as f64;
        for v in &mut data {
            *v *= scale;
        }
        self.push(
            Tensor::new(out_shape, data)?,
            Op::ReduceMean { x: x.0, axis },
            "reduce_mean",
        )
    }

    /// Max over `axis`; ties resolve to the lowest index, and the backward
    /// pass routes the gradient to that argmax element only.
    pub fn reduce_max(&mut self, x: VarId, axis: usize) -> Result<VarId, TensorError> {
        let (outer, al, inner, out_shape) = self.reduce_geometry(x, axis)?;
        let xd = self.nodes[x.0].value.data();
        let mut data = vec![f64::NEG_INFINITY; outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for a in 0..al {
                for i in 0..inner {
                    let src = (o * al + a) * inner + i;
                    let dst = o * inner + i;
                    if xd[src] > data[dst] {
                        data[dst] = xd[src];
                        argmax[dst] = src;
                    }
                }
            }
        }
        self.push(
            Tensor::new(out_shape, data)?,
            Op::ReduceMax { x: x.0, argmax },
            "reduce_max",
        )
    }

    fn reduce_geometry(
        &self,
        x: VarId,
        axis: usize,
    ) -> Result<(usize, usize, usize, Vec<usize>), TensorError> {
        let shape = self.nodes[x.0].value.shape();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis {
                op: "reduce",
                axis,
                rank: shape.len(),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape: Vec<usize> = shape.to_vec();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        Ok((outer, shape[axis], inner, out_shape))
    }

    /// Row-wise softmax over the last axis, stabilized by max subtraction.
    pub fn softmax_last(&mut self, x: VarId) -> Result<VarId, TensorError> {
        let xv = &self.nodes[x.0].value;
        let d = *xv.shape().last().unwrap();
        let mut data = vec![0.0; xv.numel()];
        for (xr, or) in xv.data().chunks_exact(d).zip(data.chunks_exact_mut(d)) {
            let max = xr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (o, v) in or.iter_mut().zip(xr) {
                *o = (v - max).exp();
                sum += *o;
            }
            let inv = 1.0 / sum;
            for o in or.iter_mut() {
                *o *= inv;
            }
        }
        self.push(
            Tensor::new(xv.shape().to_vec(), data)?,
            Op::SoftmaxLast { x: x.0 },
            "softmax",
        )
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `logits: [B, C]`. Stabilized by max subtraction; the gradient is the
    /// exact `(softmax - one_hot) / B`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: VarId,
        labels: &[usize],
    ) -> Result<VarId, TensorError> {
        let lv = &self.nodes[logits.0].value;
        let shape = lv.shape().to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: shape,
                rhs: vec![labels.len()],
            });
        }
        let (b, c) = (shape[0], shape[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(TensorError::LabelOutOfRange {
                op: "softmax_cross_entropy",
                label: bad,
                classes: c,
            });
        }
        let mut total = 0.0;
        for (row, &label) in lv.data().chunks_exact(c).zip(labels) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total += lse - row[label];
        }
        self.push(
            Tensor::scalar(total / b as f64),
            Op::SoftmaxXent {
                logits: logits.0,
                labels: labels.to_vec(),
            },
            "softmax_cross_entropy",
        )
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum_all(&mut self, x: VarId) -> Result<VarId, TensorError> {
        let numel = self.nodes[x.0].value.numel();
        let flat = self.reshape(x, &[numel])?;
        let mean = self.reduce_mean(flat, 0)?;
        self.scale(mean, numel as f64)
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `loss` node. Each node is visited exactly
    /// once; fan-out gradients accumulate additively.
    pub fn backward(&mut self, loss: VarId) -> Result<(), TensorError> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(TensorError::InvalidParam {
                op: "backward",
                msg: format!(
                    "target must be scalar, got shape {:?}",
                    self.nodes[loss.0].value.shape()
                ),
            });
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &mut tail[0];
            let Some(g) = node.grad.take() else { continue };

            match &node.op {
                Op::Leaf => {}

                Op::Affine { x, w, b, m, k, j } => {
                    let (m, k, j) = (*m, *k, *j);
                    let xd = head[*x].value.data();
                    let wd = head[*w].value.data();
                    let dx = affine_bwd_x(&g, wd, m, k, j);
                    let dw = affine_bwd_w(xd, &g, m, k, j);
                    accumulate(&mut head[*x], dx);
                    accumulate(&mut head[*w], dw);
                    if let Some(bi) = b {
                        let mut db = vec![0.0; j];
                        for gr in g.chunks_exact(j) {
                            for (d, v) in db.iter_mut().zip(gr) {
                                *d += v;
                            }
                        }
                        accumulate(&mut head[*bi], db);
                    }
                }

                Op::Bmm {
                    a,
                    b,
                    trans_b,
                    groups,
                    m,
                    k,
                    n,
                } => {
                    let (groups, m, k, n) = (*groups, *m, *k, *n);
                    let ad = head[*a].value.data();
                    let bd = head[*b].value.data();
                    let mut da = vec![0.0; groups * m * k];
                    let mut db = vec![0.0; bd.len()];
                    for gi in 0..groups {
                        let ag = &ad[gi * m * k..(gi + 1) * m * k];
                        let bg = &bd[gi * bd.len() / groups..(gi + 1) * bd.len() / groups];
                        let gg = &g[gi * m * n..(gi + 1) * m * n];
                        let dag = &mut da[gi * m * k..(gi + 1) * m * k];
                        let dbg = {
                            let per = db.len() / groups;
                            &mut db[gi * per..(gi + 1) * per]
                        };
                        if *trans_b {
                            // out = a·bᵀ with b: [n, k]
                            for (gr, dar) in gg.chunks_exact(n).zip(dag.chunks_exact_mut(k)) {
                                for (gv, br) in gr.iter().zip(bg.chunks_exact(k)) {
                                    axpy(*gv, br, dar);
                                }
                            }
                            for (gr, ar) in gg.chunks_exact(n).zip(ag.chunks_exact(k)) {
                                for (gv, dbr) in gr.iter().zip(dbg.chunks_exact_mut(k)) {
                                    axpy(*gv, ar, dbr);
                                }
                            }
                        } else {
                            // out = a·b with b: [k, n]
                            for (gr, dar) in gg.chunks_exact(n).zip(dag.chunks_exact_mut(k)) {
                                for (dav, br) in dar.iter_mut().zip(bg.chunks_exact(n)) {
                                    *dav = dot(gr, br);
                                }
                            }
                            for (ar, gr) in ag.chunks_exact(k).zip(gg.chunks_exact(n)) {
                                for (av, dbr) in ar.iter().zip(dbg.chunks_exact_mut(n)) {
                                    axpy(*av, gr, dbr);
                                }
                            }
                        }
                    }
                    accumulate(&mut head[*a], da);
                    accumulate(&mut head[*b], db);
                }

                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    eps,
                } => {
                    let xd = head[*x].value.data();
                    let d = *head[*x].value.shape().last().unwrap();
                    let gd = gamma.map(|gi| head[gi].value.data().to_vec());
                    let mut dx = vec![0.0; xd.len()];
                    let mut dgamma = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    let df = d as f64;
                    for ((xr, gr), dxr) in xd
                        .chunks_exact(d)
                        .zip(g.chunks_exact(d))
                        .zip(dx.chunks_exact_mut(d))
                    {
                        let mean = xr.iter().sum::<f64>() / df;
                        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / df;
                        let inv_std = 1.0 / (var + eps).sqrt();
                        let mut dxhat_sum = 0.0;
                        let mut dxhat_xhat_sum = 0.0;
                        for i in 0..d {
                            let xhat = (xr[i] - mean) * inv_std;
                            let dxhat = match &gd {
                                Some(gm) => gr[i] * gm[i],
                                None => gr[i],
                            };
                            dgamma[i] += gr[i] * xhat;
                            dbeta[i] += gr[i];
                            dxhat_sum += dxhat;
                            dxhat_xhat_sum += dxhat * xhat;
                        }
                        for i in 0..d {
                            let xhat = (xr[i] - mean) * inv_std;
                            let dxhat = match &gd {
                                Some(gm) => gr[i] * gm[i],
                                None => gr[i],
                            };
                            dxr[i] = inv_std / df * (df * dxhat - dxhat_sum - xhat * dxhat_xhat_sum);
                        }
                    }
                    accumulate(&mut head[*x], dx);
                    if let Some(gi) = gamma {
                        accumulate(&mut head[*gi], dgamma);
                    }
                    if let Some(bi) = beta {
                        accumulate(&mut head[*bi], dbeta);
                    }
                }

                Op::Gelu { x, tanh } => {
                    let xd = head[*x].value.data();
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(xd.iter().zip(tanh))
                        .map(|(gv, (&v, &t))| {
                            let sech2 = 1.0 - t * t;
                            gv * (0.5 * (1.0 + t)
                                + 0.5 * v * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * v * v))
                        })
                        .collect();
                    accumulate(&mut head[*x], dx);
                }

                Op::Relu { x } => {
                    let xd = head[*x].value.data();
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(xd)
                        .map(|(gv, &v)| if v > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut head[*x], dx);
                }

                Op::Dropout { x, mask } => {
                    let dx: Vec<f64> = g.iter().zip(mask).map(|(gv, m)| gv * m).collect();
                    accumulate(&mut head[*x], dx);
                }

                Op::Add { a, b } => {
                    accumulate(&mut head[*a], g.clone());
                    accumulate(&mut head[*b], g.clone());
                }

                Op::Scale { x, c } => {
                    let dx: Vec<f64> = g.iter().map(|gv| gv * c).collect();
                    accumulate(&mut head[*x], dx);
                }

                Op::Permute { x, perm } => {
                    let inv = invert_perm(perm);
                    let (dx, _) = permute_raw(&g, node.value.shape(), &inv);
                    accumulate(&mut head[*x], dx);
                }

                Op::Reshape { x } => {
                    accumulate(&mut head[*x], g.clone());
                }

                Op::ReduceMean { x, axis } => {
                    let shape = head[*x].value.shape();
                    let al = shape[*axis];
                    let inner: usize = shape[*axis + 1..].iter().product();
                    let outer: usize = shape[..*axis].iter().product();
                    let scale = 1.0 / al as f64;
                    let mut dx = vec![0.0; head[*x].value.numel()];
                    for o in 0..outer {
                        let gr = &g[o * inner..(o + 1) * inner];
                        for a in 0..al {
                            let dst = &mut dx[(o * al + a) * inner..(o * al + a + 1) * inner];
                            for (d, v) in dst.iter_mut().zip(gr) {
                                *d = v * scale;
                            }
                        }
                    }
                    accumulate(&mut head[*x], dx);
                }

                Op::ReduceMax { x, argmax } => {
                    let mut dx = vec![0.0; head[*x].value.numel()];
                    for (gv, &src) in g.iter().zip(argmax) {
                        dx[src] += gv;
                    }
                    accumulate(&mut head[*x], dx);
                }

                Op::SoftmaxLast { x } => {
                    let sd = node.value.data();
                    let d = *node.value.shape().last().unwrap();
                    let mut dx = vec![0.0; sd.len()];
                    for ((sr, gr), dxr) in sd
                        .chunks_exact(d)
                        .zip(g.chunks_exact(d))
                        .zip(dx.chunks_exact_mut(d))
                    {
                        let dotsg = dot(sr, gr);
                        for i in 0..d {
                            dxr[i] = sr[i] * (gr[i] - dotsg);
                        }
                    }
                    accumulate(&mut head[*x], dx);
                }

                Op::SoftmaxXent { logits, labels } => {
                    let ld = head[*logits].value.data();
                    let c = head[*logits].value.shape()[1];
                    let b = labels.len();
                    let gs = g[0] / b as f64;
                    let mut dl = vec![0.0; ld.len()];
                    for ((row, dlr), &label) in
                        ld.chunks_exact(c).zip(dl.chunks_exact_mut(c)).zip(labels)
                    {
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let mut sum = 0.0;
                        for (d, v) in dlr.iter_mut().zip(row) {
                            *d = (v - max).exp();
                            sum += *d;
                        }
                        let inv = 1.0 / sum;
                        for d in dlr.iter_mut() {
                            *d *= inv * gs;
                        }
                        dlr[label] -= gs;
                    }
                    accumulate(&mut head[*logits], dl);
                }
            }

            node.grad = Some(g);
        }
        Ok(())
    }
}

/// Add `src` into the node's gradient buffer, allocating on first touch.
/// Leaves that do not require gradients are skipped.
fn accumulate(node: &mut Node, src: Vec<f64>) {
    if matches!(node.op, Op::Leaf) && !node.requires_grad {
        return;
    }
    debug_assert_eq!(node.value.numel(), src.len());
    match &mut node.grad {
        Some(buf) => {
            for (d, s) in buf.iter_mut().zip(&src) {
                *d += s;
            }
        }
        None => node.grad = Some(src),
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n8 = a.len() / 8 * 8;
    let mut acc = [0.0f64; 8];
    for (ca, cb) in a[..n8].chunks_exact(8).zip(b[..n8].chunks_exact(8)) {
        for k in 0..8 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in a[n8..].iter().zip(&b[n8..]) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

fn affine_fwd(x: &[f64], w: &[f64], b: Option<&[f64]>, m: usize, k: usize, j: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * j];
    for (xr, or) in x.chunks_exact(k).zip(out.chunks_exact_mut(j)) {
        if let Some(bias) = b {
            or.copy_from_slice(bias);
        }
        for (xv, wr) in xr.iter().zip(w.chunks_exact(j)) {
            axpy(*xv, wr, or);
        }
    }
    out
}

/// dL/dx of affine: `dx[m,k] = Σ_j g[m,j]·w[k,j]`.
fn affine_bwd_x(g: &[f64], w: &[f64], m: usize, k: usize, j: usize) -> Vec<f64> {
    let mut dx = vec![0.0; m * k];
    for (gr, dxr) in g.chunks_exact(j).zip(dx.chunks_exact_mut(k)) {
        for (dxv, wr) in dxr.iter_mut().zip(w.chunks_exact(j)) {
            *dxv = dot(gr, wr);
        }
    }
    dx
}

/// dL/dw of affine: `dw[k,j] = Σ_m x[m,k]·g[m,j]`.
fn affine_bwd_w(x: &[f64], g: &[f64], _m: usize, k: usize, j: usize) -> Vec<f64> {
    let mut dw = vec![0.0; k * j];
    for (xr, gr) in x.chunks_exact(k).zip(g.chunks_exact(j)) {
        for (xv, dwr) in xr.iter().zip(dw.chunks_exact_mut(j)) {
            axpy(*xv, gr, dwr);
        }
    }
    dw
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;
