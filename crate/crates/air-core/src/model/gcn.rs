//! Graph-convolution relation block. A learned adjacency is built from the
//! tokens themselves — `A = row_softmax((X·Wa)(X·Wb)ᵀ / √D)` — and applied
//! as `out = X + ReLU(A·X·Wg)`. Tokens are actors per frame or frames per
//! actor; with no positional input the block is token-permutation
//! equivariant, the structural contrast with the MLP mixers.

use super::{ensure_batched, from_tokens, to_tokens, FwdCtx, MixAxis};
use crate::error::ModelError;
use crate::tensor::{Tensor, VarId};
use rand_chacha::ChaCha8Rng;

/// Three bias-free `D×D` maps: two similarity embeddings and one graph
/// transform.
#[derive(Debug, Clone)]
pub struct GcnBlock {
    pub axis: MixAxis,
    pub d: usize,
    pub w_a: Tensor,
    pub w_b: Tensor,
    pub w_g: Tensor,
}

impl GcnBlock {
    pub fn new(axis: MixAxis, d: usize, rng: &mut ChaCha8Rng) -> Self {
        debug_assert!(axis != MixAxis::Channel);
        Self {
            axis,
            d,
            w_a: Tensor::xavier(d, d, rng),
            w_b: Tensor::xavier(d, d, rng),
            w_g: Tensor::xavier(d, d, rng),
        }
    }

    /// Zero the graph transform, making the block an exact identity.
    pub fn zero_residual(&mut self) {
        self.w_g = Tensor::zeros(&[self.d, self.d]);
    }

    pub fn forward(&self, ctx: &mut FwdCtx, prefix: &str, x: VarId) -> Result<VarId, ModelError> {
        let x = ensure_batched(&mut ctx.graph, x)?;
        let w_a = ctx.param(format!("{prefix}.w_a"), &self.w_a);
        let w_b = ctx.param(format!("{prefix}.w_b"), &self.w_b);
        let w_g = ctx.param(format!("{prefix}.w_g"), &self.w_g);

        let (xs, view) = to_tokens(&mut ctx.graph, x, self.axis)?;
        let g = &mut ctx.graph;
        let q = g.affine(xs, w_a, None)?;
        let k = g.affine(xs, w_b, None)?;
        let scores = g.bmm(q, k, true)?;
        let scaled = g.scale(scores, 1.0 / (self.d as f64).sqrt())?;
        let adj = g.softmax_last(scaled)?;
        let h = g.affine(xs, w_g, None)?;
        let mixed = g.bmm(adj, h, false)?;
        let act = g.relu(mixed)?;
        let out = g.add(xs, act)?;
        from_tokens(g, out, view)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}.w_a"), &self.w_a);
        f(&format!("{prefix}.w_b"), &self.w_b);
        f(&format!("{prefix}.w_g"), &self.w_g);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}.w_a"), &mut self.w_a);
        f(&format!("{prefix}.w_b"), &mut self.w_b);
        f(&format!("{prefix}.w_g"), &mut self.w_g);
    }
}
