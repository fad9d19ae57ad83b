//! Transformer encoder relation block: pre-norm multi-head self-attention
//! over tokens plus a pre-norm D→D→D GeLU feed-forward, both residual. No
//! positional encoding, for parity with the other relation methods. All six
//! weight matrices are bias-free `D×D` maps and the norms carry no affine
//! parameters, so one block holds exactly `6·D²` weights.

use super::{ensure_batched, from_tokens, to_tokens, FwdCtx, MixAxis, LN_EPS};
use crate::error::ModelError;
use crate::tensor::{Graph, Tensor, VarId};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct AttnBlock {
    pub axis: MixAxis,
    pub d: usize,
    pub heads: usize,
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub ffn_w1: Tensor,
    pub ffn_w2: Tensor,
}

impl AttnBlock {
    pub fn new(axis: MixAxis, d: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        debug_assert!(axis != MixAxis::Channel);
        debug_assert!(heads > 0 && d % heads == 0);
        Self {
            axis,
            d,
            heads,
            w_q: Tensor::xavier(d, d, rng),
            w_k: Tensor::xavier(d, d, rng),
            w_v: Tensor::xavier(d, d, rng),
            w_o: Tensor::xavier(d, d, rng),
            ffn_w1: Tensor::xavier(d, d, rng),
            ffn_w2: Tensor::xavier(d, d, rng),
        }
    }

    /// Zero the value/output/second-FFN maps, making the block an exact
    /// identity.
    pub fn zero_residual(&mut self) {
        self.w_v = Tensor::zeros(&[self.d, self.d]);
        self.w_o = Tensor::zeros(&[self.d, self.d]);
        self.ffn_w2 = Tensor::zeros(&[self.d, self.d]);
    }

    pub fn forward(&self, ctx: &mut FwdCtx, prefix: &str, x: VarId) -> Result<VarId, ModelError> {
        let x = ensure_batched(&mut ctx.graph, x)?;
        let w_q = ctx.param(format!("{prefix}.w_q"), &self.w_q);
        let w_k = ctx.param(format!("{prefix}.w_k"), &self.w_k);
        let w_v = ctx.param(format!("{prefix}.w_v"), &self.w_v);
        let w_o = ctx.param(format!("{prefix}.w_o"), &self.w_o);
        let ffn_w1 = ctx.param(format!("{prefix}.ffn_w1"), &self.ffn_w1);
        let ffn_w2 = ctx.param(format!("{prefix}.ffn_w2"), &self.ffn_w2);

        let (xs, view) = to_tokens(&mut ctx.graph, x, self.axis)?;
        let g = &mut ctx.graph;
        let sh = g.shape(xs).to_vec();
        let (groups, m, d) = (sh[0], sh[1], sh[2]);
        let dh = d / self.heads;

        let normed = g.layer_norm(xs, None, None, LN_EPS)?;
        let q = g.affine(normed, w_q, None)?;
        let k = g.affine(normed, w_k, None)?;
        let v = g.affine(normed, w_v, None)?;

        let qh = split_heads(g, q, groups, m, self.heads, dh)?;
        let kh = split_heads(g, k, groups, m, self.heads, dh)?;
        let vh = split_heads(g, v, groups, m, self.heads, dh)?;

        let scores = g.bmm(qh, kh, true)?;
        let scaled = g.scale(scores, 1.0 / (dh as f64).sqrt())?;
        let attn = g.softmax_last(scaled)?;
        let mixed = g.bmm(attn, vh, false)?;
        let merged = merge_heads(g, mixed, groups, m, self.heads, dh)?;

        let o = g.affine(merged, w_o, None)?;
        let x1 = g.add(xs, o)?;

        let x1n = g.layer_norm(x1, None, None, LN_EPS)?;
        let f = g.affine(x1n, ffn_w1, None)?;
        let f = g.gelu(f)?;
        let f = g.affine(f, ffn_w2, None)?;
        let out = g.add(x1, f)?;
        from_tokens(g, out, view)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}.w_q"), &self.w_q);
        f(&format!("{prefix}.w_k"), &self.w_k);
        f(&format!("{prefix}.w_v"), &self.w_v);
        f(&format!("{prefix}.w_o"), &self.w_o);
        f(&format!("{prefix}.ffn_w1"), &self.ffn_w1);
        f(&format!("{prefix}.ffn_w2"), &self.ffn_w2);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}.w_q"), &mut self.w_q);
        f(&format!("{prefix}.w_k"), &mut self.w_k);
        f(&format!("{prefix}.w_v"), &mut self.w_v);
        f(&format!("{prefix}.w_o"), &mut self.w_o);
        f(&format!("{prefix}.ffn_w1"), &mut self.ffn_w1);
        f(&format!("{prefix}.ffn_w2"), &mut self.ffn_w2);
    }
}

/// `[G, M, D]` → `[G·h, M, Dh]`.
fn split_heads(
    g: &mut Graph,
    x: VarId,
    groups: usize,
    m: usize,
    heads: usize,
    dh: usize,
) -> Result<VarId, ModelError> {
    let r = g.reshape(x, &[groups, m, heads, dh])?;
    let p = g.permute(r, &[0, 2, 1, 3])?;
    Ok(g.reshape(p, &[groups * heads, m, dh])?)
}

/// Inverse of [`split_heads`].
fn merge_heads(
    g: &mut Graph,
    x: VarId,
    groups: usize,
    m: usize,
    heads: usize,
    dh: usize,
) -> Result<VarId, ModelError> {
    let r = g.reshape(x, &[groups, heads, m, dh])?;
    let p = g.permute(r, &[0, 2, 1, 3])?;
    Ok(g.reshape(p, &[groups, m, heads * dh])?)
}
