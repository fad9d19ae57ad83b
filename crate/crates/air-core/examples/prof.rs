//! quick op-level timing probe
use air_core::model::{build_unified_model, FwdCtx, Method, ModelConfig};
use air_core::train::{batch_features, joint_loss};
use air_core::data::{generate, GenSpec};
use air_core::{Mode, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let spec = GenSpec { episodes: 32, amplitude: 2.5, seed: 1, ..GenSpec::default() };
    let ds = generate(&spec).unwrap();
    let mc = ModelConfig { dropout: 0.1, seed: 1, ..ModelConfig::new(Method::Mlp, 9, 12, 64) };
    let model = build_unified_model(&mc).unwrap();
    let x = batch_features(&ds.episodes);
    let y_g: Vec<usize> = ds.episodes.iter().map(|e| e.group).collect();
    let y_i: Vec<usize> = ds.episodes.iter().flat_map(|e| e.actions.iter().copied()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // forward only (train mode)
    let reps = 20;
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut ctx = FwdCtx::new(Mode::Train, &mut rng);
        let xi = ctx.graph.leaf(x.clone(), false);
        let out = model.forward(&mut ctx, xi, None).unwrap();
        let loss = joint_loss(&mut ctx.graph, &out, &y_g, &y_i, 1.0).unwrap();
        std::hint::black_box(ctx.graph.value(loss).data());
    }
    let fwd = t0.elapsed().as_secs_f64() / reps as f64;
    // forward + backward
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut ctx = FwdCtx::new(Mode::Train, &mut rng);
        let xi = ctx.graph.leaf(x.clone(), false);
        let out = model.forward(&mut ctx, xi, None).unwrap();
        let loss = joint_loss(&mut ctx.graph, &out, &y_g, &y_i, 1.0).unwrap();
        ctx.graph.backward(loss).unwrap();
        std::hint::black_box(ctx.graph.grad(xi));
    }
    let full = t0.elapsed().as_secs_f64() / reps as f64;
    // eval forward
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut ctx = FwdCtx::new(Mode::Eval, &mut rng);
        let xi = ctx.graph.leaf(x.clone(), false);
        let out = model.forward(&mut ctx, xi, None).unwrap();
        std::hint::black_box(ctx.graph.value(out.fused_group).data());
    }
    let eval = t0.elapsed().as_secs_f64() / reps as f64;
    println!("fwd(train) {:.1} ms   fwd+bwd {:.1} ms   fwd(eval) {:.1} ms per batch of 32", fwd*1e3, full*1e3, eval*1e3);
    println!("matmul work: fwd 264 MFLOP, fwd+bwd 792 MFLOP -> {:.2} GFLOP/s fwd, {:.2} GFLOP/s full", 0.264/fwd, 0.792/full);
}
