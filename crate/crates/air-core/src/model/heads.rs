//! Pooling and classification heads. The time axis is mean-pooled into
//! per-actor representations for individual action logits; the actor axis
//! is then max-pooled into the group representation, which keeps the group
//! feature independent of actor count and exportable for visualization.

use super::{ensure_batched, FwdCtx};
use crate::error::ModelError;
use crate::tensor::{Tensor, VarId};
use rand_chacha::ChaCha8Rng;

/// Group and individual classifier heads of one path.
#[derive(Debug, Clone)]
pub struct PathHeads {
    pub group_w: Tensor,
    pub group_b: Tensor,
    pub indiv_w: Tensor,
    pub indiv_b: Tensor,
}

impl PathHeads {
    pub fn new(d: usize, c_group: usize, c_action: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            group_w: Tensor::xavier(d, c_group, rng),
            group_b: Tensor::zeros(&[c_group]),
            indiv_w: Tensor::xavier(d, c_action, rng),
            indiv_b: Tensor::zeros(&[c_action]),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}.group_w"), &self.group_w);
        f(&format!("{prefix}.group_b"), &self.group_b);
        f(&format!("{prefix}.indiv_w"), &self.indiv_w);
        f(&format!("{prefix}.indiv_b"), &self.indiv_b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}.group_w"), &mut self.group_w);
        f(&format!("{prefix}.group_b"), &mut self.group_b);
        f(&format!("{prefix}.indiv_w"), &mut self.indiv_w);
        f(&format!("{prefix}.indiv_b"), &mut self.indiv_b);
    }
}

/// Scene-feature classifier for the optional third fusion term.
#[derive(Debug, Clone)]
pub struct SceneHead {
    pub w: Tensor,
    pub b: Tensor,
}

impl SceneHead {
    pub fn new(d_scene: usize, c_group: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Tensor::xavier(d_scene, c_group, rng),
            b: Tensor::zeros(&[c_group]),
        }
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("scene.w", &self.w);
        f("scene.b", &self.b);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("scene.w", &mut self.w);
        f("scene.b", &mut self.b);
    }
}

/// Logits and pooled group embedding of one path.
#[derive(Debug, Clone, Copy)]
pub struct PoolOutputs {
    /// `[B, C_group]`
    pub group_logits: VarId,
    /// `[B, N, C_action]`
    pub indiv_logits: VarId,
    /// `[B, D]` pooled group representation.
    pub group_embedding: VarId,
}

/// Pool a relation tensor and apply one path's heads: mean over frames for
/// the per-actor representations, max over actors for the group one.
pub fn pool_and_classify(
    ctx: &mut FwdCtx,
    prefix: &str,
    x: VarId,
    heads: &PathHeads,
) -> Result<PoolOutputs, ModelError> {
    let x = ensure_batched(&mut ctx.graph, x)?;
    let gw = ctx.param(format!("{prefix}.group_w"), &heads.group_w);
    let gb = ctx.param(format!("{prefix}.group_b"), &heads.group_b);
    let iw = ctx.param(format!("{prefix}.indiv_w"), &heads.indiv_w);
    let ib = ctx.param(format!("{prefix}.indiv_b"), &heads.indiv_b);

    let g = &mut ctx.graph;
    let per_actor = g.reduce_mean(x, 1)?; // [B, N, D]
    let indiv_logits = g.affine(per_actor, iw, Some(ib))?;
    let group_embedding = g.reduce_max(per_actor, 1)?; // [B, D]
    let group_logits = g.affine(group_embedding, gw, Some(gb))?;
    Ok(PoolOutputs {
        group_logits,
        indiv_logits,
        group_embedding,
    })
}
