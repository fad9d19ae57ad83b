//! The permutation-equivariance ledger: which axis reorderings commute
//! with which relation blocks. Token-mixing MLPs are order-sensitive along
//! their mixing axis; GCN and attention blocks (no positional input) are
//! token-permutation equivariant — the structural contrast between the
//! families.

mod common;

use air_core::model::{AttnBlock, GcnBlock, MixAxis, MlpBlock};
use air_core::Tensor;
use common::*;

const FRAME_AXIS: usize = 0;
const ACTOR_AXIS: usize = 1;

/// max |f(πx) − πf(x)| over a fixed generic permutation.
fn equivariance_gap<F>(x: &Tensor, axis: usize, perm: &[usize], forward: F) -> f64
where
    F: Fn(&Tensor) -> Tensor,
{
    let lhs = forward(&x.permute_index(axis, perm).unwrap());
    let rhs = forward(x).permute_index(axis, perm).unwrap();
    lhs.max_abs_diff(&rhs)
}

#[test]
fn refiner_is_equivariant_to_frame_and_actor_permutations() {
    let mut r = rng(1);
    let block = MlpBlock::new(MixAxis::Channel, 6, 6, 0.3, &mut r);
    let x = Tensor::uniform(&[4, 5, 6], 1.0, &mut r);
    let fwd = |x: &Tensor| eval_forward(x, |ctx, xi| block.forward(ctx, "b", xi));

    let frame_perm = [3, 1, 0, 2];
    let actor_perm = [4, 0, 3, 1, 2];
    assert!(equivariance_gap(&x, FRAME_AXIS, &frame_perm, fwd) <= 1e-12);
    assert!(equivariance_gap(&x, ACTOR_AXIS, &actor_perm, fwd) <= 1e-12);
}

#[test]
fn actor_mixer_is_frame_equivariant_but_actor_sensitive() {
    let mut r = rng(2);
    let block = MlpBlock::new(MixAxis::Actor, 5, 6, 0.3, &mut r);
    let x = Tensor::uniform(&[4, 5, 6], 1.0, &mut r);
    let fwd = |x: &Tensor| eval_forward(x, |ctx, xi| block.forward(ctx, "b", xi));

    assert!(equivariance_gap(&x, FRAME_AXIS, &[3, 1, 0, 2], fwd) <= 1e-12);
    // Counterexample for generic weights: actor order matters.
    assert!(equivariance_gap(&x, ACTOR_AXIS, &[4, 0, 3, 1, 2], fwd) > 1e-6);
}

#[test]
fn time_mixer_is_actor_equivariant_but_frame_sensitive() {
    let mut r = rng(3);
    let block = MlpBlock::new(MixAxis::Time, 4, 6, 0.3, &mut r);
    let x = Tensor::uniform(&[4, 5, 6], 1.0, &mut r);
    let fwd = |x: &Tensor| eval_forward(x, |ctx, xi| block.forward(ctx, "b", xi));

    assert!(equivariance_gap(&x, ACTOR_AXIS, &[4, 0, 3, 1, 2], fwd) <= 1e-12);
    assert!(equivariance_gap(&x, FRAME_AXIS, &[3, 1, 0, 2], fwd) > 1e-6);
}

#[test]
fn gcn_blocks_are_token_permutation_equivariant() {
    let mut r = rng(4);
    let x = Tensor::uniform(&[4, 5, 6], 1.0, &mut r);

    let spatial = GcnBlock::new(MixAxis::Actor, 6, &mut r);
    let fwd = |x: &Tensor| eval_forward(x, |ctx, xi| spatial.forward(ctx, "g", xi));
    assert!(equivariance_gap(&x, ACTOR_AXIS, &[4, 0, 3, 1, 2], fwd) <= 1e-9);

    let temporal = GcnBlock::new(MixAxis::Time, 6, &mut r);
    let fwd = |x: &Tensor| eval_forward(x, |ctx, xi| temporal.forward(ctx, "g", xi));
    assert!(equivariance_gap(&x, FRAME_AXIS, &[3, 1, 0, 2], fwd) <= 1e-9);
}

#[test]
fn attention_blocks_are_token_permutation_equivariant() {
    let mut r = rng(5);
    let x = Tensor::uniform(&[4, 5, 6], 1.0, &mut r);

    let spatial = AttnBlock::new(MixAxis::Actor, 6, 2, &mut r);
    let fwd = |x: &Tensor| eval_forward(x, |ctx, xi| spatial.forward(ctx, "a", xi));
    assert!(equivariance_gap(&x, ACTOR_AXIS, &[4, 0, 3, 1, 2], fwd) <= 1e-9);

    let temporal = AttnBlock::new(MixAxis::Time, 6, 2, &mut r);
    let fwd = |x: &Tensor| eval_forward(x, |ctx, xi| temporal.forward(ctx, "a", xi));
    assert!(equivariance_gap(&x, FRAME_AXIS, &[3, 1, 0, 2], fwd) <= 1e-9);
}
