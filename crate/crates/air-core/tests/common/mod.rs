//! Shared helpers for the integration test suites.
#![allow(dead_code)]

use air_core::model::FwdCtx;
use air_core::{Mode, ModelError, Tensor, VarId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tensor(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// Drop a leading batch dimension of 1.
pub fn squeeze_batch(t: Tensor) -> Tensor {
    let sh = t.shape().to_vec();
    if sh.len() == 4 && sh[0] == 1 {
        Tensor::new(sh[1..].to_vec(), t.into_data()).unwrap()
    } else {
        t
    }
}

/// Run a forward closure in eval mode on a single unbatched input and
/// return the (squeezed) output value.
pub fn eval_forward<F>(x: &Tensor, f: F) -> Tensor
where
    F: FnOnce(&mut FwdCtx, VarId) -> Result<VarId, ModelError>,
{
    let mut r = rng(0);
    let mut ctx = FwdCtx::new(Mode::Eval, &mut r);
    let xi = ctx.graph.leaf(x.clone(), false);
    let y = f(&mut ctx, xi).expect("forward failed");
    squeeze_batch(ctx.graph.value(y).clone())
}

pub fn assert_close(a: &Tensor, b: &Tensor, tol: f64, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}: shape mismatch");
    let diff = a.max_abs_diff(b);
    assert!(diff <= tol, "{what}: max abs diff {diff} > {tol}");
}

/// GeLU tanh approximation, written out independently for hand evaluations.
pub fn gelu_scalar(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}
