//! The shared MLP mixing block. One block normalizes over channels, then
//! runs FC → GeLU → Dropout → FC → Dropout along a single mixing axis
//! (actors, frames, or channels) with every other axis batched, and closes
//! with a residual sum. Hidden width equals the mixing-axis length.

use super::{ensure_batched, FwdCtx, MixAxis, LN_EPS};
use crate::error::{ModelError, TensorError};
use crate::tensor::{Tensor, VarId};
use rand_chacha::ChaCha8Rng;

/// Parameters of one mixing block: per-channel LayerNorm scale/shift plus a
/// two-layer perceptron of width `A` over the mixing axis.
#[derive(Debug, Clone)]
pub struct MlpBlock {
    pub axis: MixAxis,
    /// Mixing-axis length `A` (hidden width equals it).
    pub a_len: usize,
    /// Channel count the LayerNorm is sized for.
    pub d: usize,
    pub ln_gamma: Tensor,
    pub ln_beta: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub dropout_p: f64,
}

impl MlpBlock {
    pub fn new(axis: MixAxis, a_len: usize, d: usize, dropout_p: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            axis,
            a_len,
            d,
            ln_gamma: Tensor::ones(&[d]),
            ln_beta: Tensor::zeros(&[d]),
            w1: Tensor::xavier(a_len, a_len, rng),
            b1: Tensor::zeros(&[a_len]),
            w2: Tensor::xavier(a_len, a_len, rng),
            b2: Tensor::zeros(&[a_len]),
            dropout_p,
        }
    }

    /// Zero the second FC layer, making the block an exact identity.
    pub fn zero_residual(&mut self) {
        self.w2 = Tensor::zeros(&[self.a_len, self.a_len]);
        self.b2 = Tensor::zeros(&[self.a_len]);
    }

    /// `out = x + Drop(FC₂(Drop(GeLU(FC₁(LN(x))))))`, mixing along
    /// `self.axis`. Accepts `[T,N,D]` or `[B,T,N,D]`; shape-preserving.
    pub fn forward(&self, ctx: &mut FwdCtx, prefix: &str, x: VarId) -> Result<VarId, ModelError> {
        let x = ensure_batched(&mut ctx.graph, x)?;
        let sh = ctx.graph.shape(x).to_vec();
        let dim = self.axis.dim();
        if sh[dim] != self.a_len {
            return Err(TensorError::ShapeMismatch {
                op: "mlp_block",
                lhs: sh,
                rhs: vec![self.a_len],
            }
            .into());
        }
        if sh[3] != self.d {
            return Err(TensorError::ShapeMismatch {
                op: "mlp_block",
                lhs: sh,
                rhs: vec![self.d],
            }
            .into());
        }

        let gamma = ctx.param(format!("{prefix}.ln_gamma"), &self.ln_gamma);
        let beta = ctx.param(format!("{prefix}.ln_beta"), &self.ln_beta);
        let w1 = ctx.param(format!("{prefix}.w1"), &self.w1);
        let b1 = ctx.param(format!("{prefix}.b1"), &self.b1);
        let w2 = ctx.param(format!("{prefix}.w2"), &self.w2);
        let b2 = ctx.param(format!("{prefix}.b2"), &self.b2);

        let g = &mut ctx.graph;
        let normed = g.layer_norm(x, Some(gamma), Some(beta), LN_EPS)?;

        // Move the mixing axis to the end so the FC pair applies along it;
        // channel mixing is already last.
        let perm: Option<(&[usize; 4], &[usize; 4])> = match self.axis {
            MixAxis::Channel => None,
            MixAxis::Actor => Some((&[0, 1, 3, 2], &[0, 1, 3, 2])),
            MixAxis::Time => Some((&[0, 2, 3, 1], &[0, 3, 1, 2])),
        };

        let h = match perm {
            Some((fwd, _)) => g.permute(normed, fwd.as_slice())?,
            None => normed,
        };
        let h = g.affine(h, w1, Some(b1))?;
        let h = g.gelu(h)?;
        let h = g.dropout(h, self.dropout_p, ctx.mode, ctx.rng)?;
        let g = &mut ctx.graph;
        let h = g.affine(h, w2, Some(b2))?;
        let h = g.dropout(h, self.dropout_p, ctx.mode, ctx.rng)?;
        let g = &mut ctx.graph;
        let h = match perm {
            Some((_, back)) => g.permute(h, back.as_slice())?,
            None => h,
        };
        Ok(g.add(x, h)?)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}.ln_gamma"), &self.ln_gamma);
        f(&format!("{prefix}.ln_beta"), &self.ln_beta);
        f(&format!("{prefix}.w1"), &self.w1);
        f(&format!("{prefix}.b1"), &self.b1);
        f(&format!("{prefix}.w2"), &self.w2);
        f(&format!("{prefix}.b2"), &self.b2);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}.ln_gamma"), &mut self.ln_gamma);
        f(&format!("{prefix}.ln_beta"), &mut self.ln_beta);
        f(&format!("{prefix}.w1"), &mut self.w1);
        f(&format!("{prefix}.b1"), &mut self.b1);
        f(&format!("{prefix}.w2"), &mut self.w2);
        f(&format!("{prefix}.b2"), &mut self.b2);
    }
}
