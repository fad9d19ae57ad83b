//! Behavioral tests of the MLP relation architecture: block identities,
//! hand-evaluated small cases, axis semantics, path composition, pooling,
//! and late fusion.

mod common;

use air_core::model::{
    build_unified_model, pool_and_classify, FwdCtx, Method, MixAxis, MlpBlock, MlpVariant,
    ModelConfig, PathHeads, PathMode, Stage, LN_EPS,
};
use air_core::{Mode, ModelError, Tensor};
use common::*;

fn mlp_s(n: usize, d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> MlpBlock {
    MlpBlock::new(MixAxis::Actor, n, d, 0.3, rng)
}

fn mlp_t(t: usize, d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> MlpBlock {
    MlpBlock::new(MixAxis::Time, t, d, 0.3, rng)
}

fn mlp_r(d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> MlpBlock {
    MlpBlock::new(MixAxis::Channel, d, d, 0.3, rng)
}

// ── mlp_block ────────────────────────────────────────────────────────

#[test]
fn zeroed_second_layer_is_exact_identity() {
    let mut r = rng(1);
    let x = Tensor::uniform(&[3, 4, 5], 2.0, &mut r);
    for mut block in [mlp_t(3, 5, &mut r), mlp_s(4, 5, &mut r), mlp_r(5, &mut r)] {
        block.zero_residual();
        let y = eval_forward(&x, |ctx, xi| block.forward(ctx, "b", xi));
        assert_eq!(y.data(), x.data(), "axis {:?}", block.axis);
    }
}

#[test]
fn scalar_block_matches_hand_evaluation() {
    // T=N=D=1: LayerNorm over the single channel collapses to beta, so the
    // whole chain is x + (w2·gelu(w1·beta + b1) + b2).
    let mut r = rng(2);
    let mut block = mlp_s(1, 1, &mut r);
    block.ln_gamma = Tensor::scalar(1.0);
    block.ln_beta = Tensor::scalar(0.4);
    block.w1 = tensor(&[1, 1], &[2.0]);
    block.b1 = tensor(&[1], &[0.1]);
    block.w2 = tensor(&[1, 1], &[3.0]);
    block.b2 = tensor(&[1], &[0.05]);

    let c = -0.7;
    let x = tensor(&[1, 1, 1], &[c]);
    let y = eval_forward(&x, |ctx, xi| block.forward(ctx, "b", xi));

    let expect = c + (3.0 * gelu_scalar(2.0 * 0.4 + 0.1) + 0.05);
    assert!((y.data()[0] - expect).abs() < 1e-12, "{} vs {expect}", y.data()[0]);
}

#[test]
fn block_rejects_axis_length_mismatch() {
    let mut r = rng(3);
    let block = mlp_s(4, 5, &mut r); // sized for N=4
    let x = Tensor::zeros(&[2, 3, 5]); // N=3
    let mut rr = rng(0);
    let mut ctx = FwdCtx::new(Mode::Eval, &mut rr);
    let xi = ctx.graph.leaf(x, false);
    assert!(block.forward(&mut ctx, "b", xi).is_err());
}

// ── mlp_s ────────────────────────────────────────────────────────────

#[test]
fn mlp_s_commutes_with_frame_permutation() {
    let mut r = rng(4);
    let block = mlp_s(3, 4, &mut r);
    let x = Tensor::uniform(&[5, 3, 4], 1.0, &mut r);
    let perm = [4usize, 2, 0, 3, 1];

    let y_then_perm = eval_forward(&x, |ctx, xi| block.forward(ctx, "b", xi))
        .permute_index(0, &perm)
        .unwrap();
    let perm_then_y = eval_forward(&x.permute_index(0, &perm).unwrap(), |ctx, xi| {
        block.forward(ctx, "b", xi)
    });
    assert_eq!(y_then_perm.data(), perm_then_y.data());
}

#[test]
fn mlp_s_two_actor_hand_evaluation() {
    // T=1, N=2, D=1. LayerNorm over the single channel yields beta for both
    // actors; the actor-axis FC pair then adds a constant per actor.
    let mut r = rng(5);
    let mut block = mlp_s(2, 1, &mut r);
    block.ln_beta = Tensor::scalar(0.25);
    block.w1 = tensor(&[2, 2], &[0.5, -1.0, 2.0, 0.3]);
    block.b1 = tensor(&[2], &[0.1, -0.2]);
    block.w2 = tensor(&[2, 2], &[1.5, 0.4, -0.6, 1.1]);
    block.b2 = tensor(&[2], &[0.02, 0.03]);

    let (x0, x1) = (0.9, -1.4);
    let x = tensor(&[1, 2, 1], &[x0, x1]);
    let y = eval_forward(&x, |ctx, xi| block.forward(ctx, "b", xi));

    let b = 0.25;
    let h = [
        gelu_scalar(b * 0.5 + b * 2.0 + 0.1),
        gelu_scalar(b * -1.0 + b * 0.3 - 0.2),
    ];
    let out = [
        x0 + (h[0] * 1.5 + h[1] * -0.6 + 0.02),
        x1 + (h[0] * 0.4 + h[1] * 1.1 + 0.03),
    ];
    assert!((y.data()[0] - out[0]).abs() < 1e-12);
    assert!((y.data()[1] - out[1]).abs() < 1e-12);
}

#[test]
fn mlp_s_is_actor_order_sensitive() {
    // Generic weights: some actor permutation must NOT commute.
    let mut r = rng(6);
    let block = mlp_s(3, 2, &mut r);
    let x = Tensor::uniform(&[2, 3, 2], 1.0, &mut r);
    let perm = [1usize, 2, 0];

    let y_then_perm = eval_forward(&x, |ctx, xi| block.forward(ctx, "b", xi))
        .permute_index(1, &perm)
        .unwrap();
    let perm_then_y = eval_forward(&x.permute_index(1, &perm).unwrap(), |ctx, xi| {
        block.forward(ctx, "b", xi)
    });
    assert!(
        y_then_perm.max_abs_diff(&perm_then_y) > 1e-6,
        "actor permutation unexpectedly commuted"
    );
}

// ── mlp_t ────────────────────────────────────────────────────────────

#[test]
fn mlp_t_commutes_with_actor_permutation() {
    let mut r = rng(7);
    let block = mlp_t(4, 3, &mut r);
    let x = Tensor::uniform(&[4, 5, 3], 1.0, &mut r);
    let perm = [3usize, 0, 4, 1, 2];

    let y_then_perm = eval_forward(&x, |ctx, xi| block.forward(ctx, "b", xi))
        .permute_index(1, &perm)
        .unwrap();
    let perm_then_y = eval_forward(&x.permute_index(1, &perm).unwrap(), |ctx, xi| {
        block.forward(ctx, "b", xi)
    });
    assert_eq!(y_then_perm.data(), perm_then_y.data());
}

#[test]
fn mlp_t_two_frame_hand_evaluation() {
    // T=2, N=1, D=1: same structure as the two-actor case, mixing frames.
    let mut r = rng(8);
    let mut block = mlp_t(2, 1, &mut r);
    block.ln_beta = Tensor::scalar(-0.3);
    block.w1 = tensor(&[2, 2], &[1.2, 0.7, -0.4, 0.9]);
    block.b1 = tensor(&[2], &[0.0, 0.5]);
    block.w2 = tensor(&[2, 2], &[0.8, -1.3, 0.2, 0.6]);
    block.b2 = tensor(&[2], &[-0.1, 0.04]);

    let (x0, x1) = (2.0, 0.5);
    let x = tensor(&[2, 1, 1], &[x0, x1]);
    let y = eval_forward(&x, |ctx, xi| block.forward(ctx, "b", xi));

    let b = -0.3;
    let h = [
        gelu_scalar(b * 1.2 + b * -0.4),
        gelu_scalar(b * 0.7 + b * 0.9 + 0.5),
    ];
    let out = [
        x0 + (h[0] * 0.8 + h[1] * 0.2 - 0.1),
        x1 + (h[0] * -1.3 + h[1] * 0.6 + 0.04),
    ];
    assert!((y.data()[0] - out[0]).abs() < 1e-12);
    assert!((y.data()[1] - out[1]).abs() < 1e-12);
}

#[test]
fn mlp_t_is_not_time_reversal_equivariant() {
    let mut r = rng(9);
    let block = mlp_t(4, 2, &mut r);
    let x = Tensor::uniform(&[4, 2, 2], 1.0, &mut r);
    let reverse = [3usize, 2, 1, 0];

    let y_then_rev = eval_forward(&x, |ctx, xi| block.forward(ctx, "b", xi))
        .permute_index(0, &reverse)
        .unwrap();
    let rev_then_y = eval_forward(&x.permute_index(0, &reverse).unwrap(), |ctx, xi| {
        block.forward(ctx, "b", xi)
    });
    assert!(y_then_rev.max_abs_diff(&rev_then_y) > 1e-6);
}

// ── mlp_r ────────────────────────────────────────────────────────────

#[test]
fn mlp_r_commutes_with_frame_and_actor_permutations() {
    let mut r = rng(10);
    let block = mlp_r(3, &mut r);
    let x = Tensor::uniform(&[3, 4, 3], 1.0, &mut r);
    let frame_perm = [2usize, 0, 1];
    let actor_perm = [1usize, 3, 0, 2];

    let y = eval_forward(&x, |ctx, xi| block.forward(ctx, "b", xi));
    let y_perm = y
        .permute_index(0, &frame_perm)
        .unwrap()
        .permute_index(1, &actor_perm)
        .unwrap();
    let x_perm = x
        .permute_index(0, &frame_perm)
        .unwrap()
        .permute_index(1, &actor_perm)
        .unwrap();
    let perm_y = eval_forward(&x_perm, |ctx, xi| block.forward(ctx, "b", xi));
    assert_eq!(y_perm.data(), perm_y.data());
}

#[test]
fn mlp_r_two_channel_hand_evaluation() {
    // One position, D=2: real LayerNorm then the two-channel FC chain.
    let mut r = rng(11);
    let mut block = mlp_r(2, &mut r);
    block.ln_gamma = tensor(&[2], &[1.1, 0.9]);
    block.ln_beta = tensor(&[2], &[0.05, -0.05]);
    block.w1 = tensor(&[2, 2], &[0.6, -0.8, 1.4, 0.2]);
    block.b1 = tensor(&[2], &[0.3, -0.1]);
    block.w2 = tensor(&[2, 2], &[-0.5, 0.7, 0.9, 1.2]);
    block.b2 = tensor(&[2], &[0.0, 0.25]);

    let (a, b) = (1.7, -0.6);
    let x = tensor(&[1, 1, 2], &[a, b]);
    let y = eval_forward(&x, |ctx, xi| block.forward(ctx, "b", xi));

    let mean = (a + b) / 2.0;
    let var = ((a - mean).powi(2) + (b - mean).powi(2)) / 2.0;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    let xh = [
        (a - mean) * inv * 1.1 + 0.05,
        (b - mean) * inv * 0.9 - 0.05,
    ];
    let h = [
        gelu_scalar(xh[0] * 0.6 + xh[1] * 1.4 + 0.3),
        gelu_scalar(xh[0] * -0.8 + xh[1] * 0.2 - 0.1),
    ];
    let out = [
        a + (h[0] * -0.5 + h[1] * 0.9),
        b + (h[0] * 0.7 + h[1] * 1.2 + 0.25),
    ];
    assert!((y.data()[0] - out[0]).abs() < 1e-12);
    assert!((y.data()[1] - out[1]).abs() < 1e-12);
}

// ── srm / trm composition ────────────────────────────────────────────

#[test]
fn stage_equals_mixer_then_refiner_bitwise() {
    let mut r = rng(12);
    let s = mlp_s(3, 4, &mut r);
    let rr = mlp_r(4, &mut r);
    let stage = Stage::Mlp {
        mixer: s.clone(),
        refiner: Some(rr.clone()),
    };
    let x = Tensor::uniform(&[2, 3, 4], 1.0, &mut r);

    let composed = eval_forward(&x, |ctx, xi| stage.forward(ctx, "srm", xi));
    let manual = eval_forward(&x, |ctx, xi| {
        let h = s.forward(ctx, "a", xi)?;
        rr.forward(ctx, "b", h)
    });
    assert_eq!(composed.data(), manual.data());
}

#[test]
fn zeroed_stage_stack_is_identity() {
    let mut r = rng(13);
    let mut s = mlp_s(3, 4, &mut r);
    let mut rr = mlp_r(4, &mut r);
    s.zero_residual();
    rr.zero_residual();
    let stage = Stage::Mlp {
        mixer: s,
        refiner: Some(rr),
    };
    let x = Tensor::uniform(&[2, 3, 4], 1.0, &mut r);
    let y = eval_forward(&x, |ctx, xi| stage.forward(ctx, "srm", xi));
    assert_eq!(y.data(), x.data());
}

#[test]
fn two_blocks_equal_manual_double_application() {
    let mut r = rng(14);
    let cfg = ModelConfig {
        blocks: 2,
        seed: 99,
        c_group: 3,
        c_action: 4,
        ..ModelConfig::new(Method::Mlp, 2, 3, 4)
    };
    let model = build_unified_model(&cfg).unwrap();
    let path = model.st.as_ref().unwrap();
    let x = Tensor::uniform(&[2, 3, 4], 1.0, &mut r);

    let trunk = eval_forward(&x, |ctx, xi| path.forward_trunk(ctx, xi));
    let manual = eval_forward(&x, |ctx, xi| {
        let xb = ctx.graph.reshape(xi, &[1, 2, 3, 4])?;
        let h0 = path.spatial[0].forward(ctx, "s0", xb)?;
        let h1 = path.spatial[1].forward(ctx, "s1", h0)?;
        let mid = ctx.graph.add(xb, h1)?;
        let o0 = path.temporal[0].forward(ctx, "t0", mid)?;
        path.temporal[1].forward(ctx, "t1", o0)
    });
    assert_eq!(trunk.data(), manual.data());
}

// ── path_forward ─────────────────────────────────────────────────────

#[test]
fn zero_init_paths_double_the_input() {
    let mut r = rng(15);
    let cfg = ModelConfig {
        c_group: 3,
        c_action: 4,
        seed: 7,
        ..ModelConfig::new(Method::Mlp, 3, 4, 5)
    };
    let mut model = build_unified_model(&cfg).unwrap();
    model.zero_residual_trunk();
    let x = Tensor::uniform(&[3, 4, 5], 1.0, &mut r);
    let doubled: Vec<f64> = x.data().iter().map(|v| 2.0 * v).collect();

    for path in [model.st.as_ref().unwrap(), model.ts.as_ref().unwrap()] {
        let y = eval_forward(&x, |ctx, xi| path.forward_trunk(ctx, xi));
        assert_eq!(y.data(), doubled.as_slice(), "{:?}", path.order);
    }
}

#[test]
fn st_and_ts_differ_for_generic_weights() {
    let mut r = rng(16);
    let cfg = ModelConfig {
        c_group: 3,
        c_action: 4,
        seed: 21,
        ..ModelConfig::new(Method::Mlp, 3, 4, 5)
    };
    let model = build_unified_model(&cfg).unwrap();
    let x = Tensor::uniform(&[3, 4, 5], 1.0, &mut r);
    let st = eval_forward(&x, |ctx, xi| {
        model.st.as_ref().unwrap().forward_trunk(ctx, xi)
    });
    let ts = eval_forward(&x, |ctx, xi| {
        model.ts.as_ref().unwrap().forward_trunk(ctx, xi)
    });
    assert!(st.max_abs_diff(&ts) > 1e-6);
}

// ── pool_and_classify ────────────────────────────────────────────────

#[test]
fn single_actor_group_embedding_is_temporal_mean() {
    let mut r = rng(17);
    let heads = PathHeads::new(3, 4, 5, &mut r);
    let x = Tensor::uniform(&[4, 1, 3], 1.0, &mut r);

    let mut rr = rng(0);
    let mut ctx = FwdCtx::new(Mode::Eval, &mut rr);
    let xi = ctx.graph.leaf(x.clone(), false);
    let out = pool_and_classify(&mut ctx, "h", xi, &heads).unwrap();
    let emb = ctx.graph.value(out.group_embedding);

    let mut expect = vec![0.0; 3];
    for t in 0..4 {
        for d in 0..3 {
            expect[d] += x.at(&[t, 0, d]) / 4.0;
        }
    }
    for (a, b) in emb.data().iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn constant_features_hit_the_head_directly() {
    let mut r = rng(18);
    let heads = PathHeads::new(3, 4, 5, &mut r);
    let c = 0.37;
    let x = Tensor::filled(&[2, 3, 3], c);

    let mut rr = rng(0);
    let mut ctx = FwdCtx::new(Mode::Eval, &mut rr);
    let xi = ctx.graph.leaf(x, false);
    let out = pool_and_classify(&mut ctx, "h", xi, &heads).unwrap();
    let logits = ctx.graph.value(out.group_logits);

    for j in 0..4 {
        let expect: f64 = (0..3).map(|k| c * heads.group_w.at(&[k, j])).sum::<f64>()
            + heads.group_b.at(&[j]);
        assert!((logits.data()[j] - expect).abs() < 1e-12);
    }
}

#[test]
fn two_actor_pooling_matches_brute_force() {
    let mut r = rng(19);
    let heads = PathHeads::new(3, 2, 4, &mut r);
    let x = Tensor::uniform(&[2, 2, 3], 1.0, &mut r);

    let mut rr = rng(0);
    let mut ctx = FwdCtx::new(Mode::Eval, &mut rr);
    let xi = ctx.graph.leaf(x.clone(), false);
    let out = pool_and_classify(&mut ctx, "h", xi, &heads).unwrap();

    // Brute-force oracle: explicit loops over the definition.
    let mut per_actor = [[0.0f64; 3]; 2];
    for n in 0..2 {
        for d in 0..3 {
            per_actor[n][d] = (x.at(&[0, n, d]) + x.at(&[1, n, d])) / 2.0;
        }
    }
    let mut emb = [0.0f64; 3];
    for d in 0..3 {
        emb[d] = per_actor[0][d].max(per_actor[1][d]);
    }
    let mut glog = [0.0f64; 2];
    for j in 0..2 {
        glog[j] = (0..3).map(|k| emb[k] * heads.group_w.at(&[k, j])).sum::<f64>()
            + heads.group_b.at(&[j]);
    }
    let mut ilog = [[0.0f64; 4]; 2];
    for n in 0..2 {
        for j in 0..4 {
            ilog[n][j] = (0..3)
                .map(|k| per_actor[n][k] * heads.indiv_w.at(&[k, j]))
                .sum::<f64>()
                + heads.indiv_b.at(&[j]);
        }
    }

    let got_emb = ctx.graph.value(out.group_embedding);
    let got_g = ctx.graph.value(out.group_logits);
    let got_i = ctx.graph.value(out.indiv_logits);
    for d in 0..3 {
        assert!((got_emb.data()[d] - emb[d]).abs() < 1e-12);
    }
    for j in 0..2 {
        assert!((got_g.data()[j] - glog[j]).abs() < 1e-12);
    }
    for n in 0..2 {
        for j in 0..4 {
            assert!((got_i.data()[n * 4 + j] - ilog[n][j]).abs() < 1e-12);
        }
    }
}

// ── dual_forward / fusion ────────────────────────────────────────────

#[test]
fn identical_paths_fuse_to_either_path() {
    let cfg = ModelConfig {
        c_group: 4,
        c_action: 3,
        seed: 31,
        ..ModelConfig::new(Method::Mlp, 2, 3, 4)
    };
    let mut model = build_unified_model(&cfg).unwrap();
    model.ts = model.st.clone(); // copied weights AND composition order

    let mut r = rng(20);
    let x = Tensor::uniform(&[2, 3, 4], 1.0, &mut r);
    let mut rr = rng(0);
    let mut ctx = FwdCtx::new(Mode::Eval, &mut rr);
    let xi = ctx.graph.leaf(x, false);
    let out = model.forward(&mut ctx, xi, None).unwrap();

    let fused = ctx.graph.value(out.fused_group);
    let st = ctx.graph.value(out.group_st.unwrap());
    assert_eq!(fused.data(), st.data());
}

#[test]
fn fusion_without_scene_is_the_two_path_mean() {
    let cfg = ModelConfig {
        c_group: 4,
        c_action: 3,
        seed: 32,
        ..ModelConfig::new(Method::Mlp, 2, 3, 4)
    };
    let model = build_unified_model(&cfg).unwrap();
    let mut r = rng(21);
    let x = Tensor::uniform(&[2, 3, 4], 1.0, &mut r);
    let mut rr = rng(0);
    let mut ctx = FwdCtx::new(Mode::Eval, &mut rr);
    let xi = ctx.graph.leaf(x, false);
    let out = model.forward(&mut ctx, xi, None).unwrap();

    let st = ctx.graph.value(out.group_st.unwrap()).data().to_vec();
    let ts = ctx.graph.value(out.group_ts.unwrap()).data().to_vec();
    let fused = ctx.graph.value(out.fused_group).data();
    for ((a, b), f) in st.iter().zip(&ts).zip(fused) {
        assert!((0.5 * (a + b) - f).abs() < 1e-15);
    }
}

#[test]
fn fused_argmax_is_shift_invariant() {
    let cfg = ModelConfig {
        c_group: 5,
        c_action: 3,
        seed: 33,
        ..ModelConfig::new(Method::Mlp, 2, 3, 4)
    };
    let argmax_for = |model: &air_core::model::Model, x: &Tensor| -> usize {
        let mut rr = rng(0);
        let mut ctx = FwdCtx::new(Mode::Eval, &mut rr);
        let xi = ctx.graph.leaf(x.clone(), false);
        let out = model.forward(&mut ctx, xi, None).unwrap();
        let fused = ctx.graph.value(out.fused_group).data().to_vec();
        fused
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
    };

    let mut model = build_unified_model(&cfg).unwrap();
    let mut r = rng(22);
    let x = Tensor::uniform(&[2, 3, 4], 1.0, &mut r);
    let before = argmax_for(&model, &x);

    // Shift every class logit of both paths by the same constant.
    for path in [model.st.as_mut().unwrap(), model.ts.as_mut().unwrap()] {
        for v in path.heads.group_b.data_mut() {
            *v += 11.25;
        }
    }
    let after = argmax_for(&model, &x);
    assert_eq!(before, after);
}

#[test]
fn scene_without_head_is_rejected() {
    let cfg = ModelConfig {
        c_group: 4,
        c_action: 3,
        seed: 34,
        ..ModelConfig::new(Method::Mlp, 2, 3, 4)
    };
    let model = build_unified_model(&cfg).unwrap();
    let mut rr = rng(0);
    let mut ctx = FwdCtx::new(Mode::Eval, &mut rr);
    let xi = ctx.graph.leaf(Tensor::zeros(&[2, 3, 4]), false);
    let si = ctx.graph.leaf(Tensor::zeros(&[6]), false);
    assert!(matches!(
        model.forward(&mut ctx, xi, Some(si)),
        Err(ModelError::SceneHeadMissing)
    ));
}

#[test]
fn scene_head_with_three_way_fusion() {
    let cfg = ModelConfig {
        c_group: 4,
        c_action: 3,
        scene_dim: Some(6),
        seed: 35,
        ..ModelConfig::new(Method::Mlp, 2, 3, 4)
    };
    let model = build_unified_model(&cfg).unwrap();
    let mut r = rng(23);
    let x = Tensor::uniform(&[2, 3, 4], 1.0, &mut r);
    let s = Tensor::uniform(&[6], 1.0, &mut r);
    let mut rr = rng(0);
    let mut ctx = FwdCtx::new(Mode::Eval, &mut rr);
    let xi = ctx.graph.leaf(x, false);
    let si = ctx.graph.leaf(s, false);
    let out = model.forward(&mut ctx, xi, Some(si)).unwrap();

    let st = ctx.graph.value(out.group_st.unwrap()).data().to_vec();
    let ts = ctx.graph.value(out.group_ts.unwrap()).data().to_vec();
    let sc = ctx.graph.value(out.group_scene.unwrap()).data().to_vec();
    let fused = ctx.graph.value(out.fused_group).data();
    for i in 0..4 {
        assert!(((st[i] + ts[i] + sc[i]) / 3.0 - fused[i]).abs() < 1e-15);
    }

    // Missing scene input on a scene-headed model is also an error.
    let mut rr = rng(0);
    let mut ctx = FwdCtx::new(Mode::Eval, &mut rr);
    let xi = ctx.graph.leaf(Tensor::zeros(&[2, 3, 4]), false);
    assert!(matches!(
        model.forward(&mut ctx, xi, None),
        Err(ModelError::SceneInputMissing)
    ));
}

// ── variants & config validation ─────────────────────────────────────

#[test]
fn refiner_only_trunk_never_mixes_across_positions() {
    // Changing one actor's features must not affect any other position's
    // trunk output in the channel-only variant.
    let cfg = ModelConfig {
        variant: MlpVariant::RefinerOnly,
        c_group: 3,
        c_action: 3,
        seed: 36,
        ..ModelConfig::new(Method::Mlp, 2, 3, 4)
    };
    let model = build_unified_model(&cfg).unwrap();
    let path = model.st.as_ref().unwrap();

    let mut r = rng(24);
    let x = Tensor::uniform(&[2, 3, 4], 1.0, &mut r);
    let mut x2 = x.clone();
    // Perturb actor 1 at frame 0 only.
    for d in 0..4 {
        let idx = x2.flat_index(&[0, 1, d]);
        x2.data_mut()[idx] += 5.0;
    }
    let y1 = eval_forward(&x, |ctx, xi| path.forward_trunk(ctx, xi));
    let y2 = eval_forward(&x2, |ctx, xi| path.forward_trunk(ctx, xi));
    for t in 0..2 {
        for n in 0..3 {
            for d in 0..4 {
                let same = (y1.at(&[t, n, d]) - y2.at(&[t, n, d])).abs() < 1e-12;
                if t == 0 && n == 1 {
                    continue; // the perturbed position itself may change
                }
                assert!(same, "position ({t},{n},{d}) leaked across positions");
            }
        }
    }
}

#[test]
fn variant_flags_require_mlp_method() {
    let cfg = ModelConfig {
        variant: MlpVariant::NoRefiner,
        ..ModelConfig::new(Method::Gcn, 2, 3, 4)
    };
    assert!(build_unified_model(&cfg).is_err());
}

#[test]
fn head_divisibility_is_enforced() {
    let cfg = ModelConfig {
        attn_heads: 3,
        ..ModelConfig::new(Method::Transformer, 2, 3, 4)
    };
    assert!(build_unified_model(&cfg).is_err());
}

#[test]
fn forward_binds_exactly_the_visited_params() {
    let cfg = ModelConfig {
        scene_dim: Some(5),
        c_group: 3,
        c_action: 4,
        seed: 37,
        ..ModelConfig::new(Method::Mlp, 2, 3, 4)
    };
    let model = build_unified_model(&cfg).unwrap();
    let mut visited = std::collections::BTreeSet::new();
    model.visit_params(&mut |name, _| {
        visited.insert(name.to_string());
    });

    let mut rr = rng(0);
    let mut ctx = FwdCtx::new(Mode::Train, &mut rr);
    let xi = ctx.graph.leaf(Tensor::zeros(&[2, 3, 4]), false);
    let si = ctx.graph.leaf(Tensor::zeros(&[5]), false);
    model.forward(&mut ctx, xi, Some(si)).unwrap();
    let bound: std::collections::BTreeSet<String> =
        ctx.binds().iter().map(|(n, _)| n.clone()).collect();
    assert_eq!(visited, bound);
    assert_eq!(
        ctx.binds().len(),
        bound.len(),
        "a parameter was bound twice"
    );
}
