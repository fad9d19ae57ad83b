//! Named finite-difference verification suites covering every graph op and
//! every composed relation module (mixing blocks, stages, full dual path
//! with the joint loss, GCN and attention blocks). The numeric side of each
//! check only evaluates forward passes, so it is independent of the
//! backward rules under test.

use crate::error::{ModelError, TensorError};
use crate::model::{
    AttnBlock, FwdCtx, GcnBlock, Method, MixAxis, MlpBlock, Model, ModelConfig, Stage,
    build_unified_model,
};
use crate::tensor::gradcheck::{grad_check, DifferentiableMap, GradCheckReport, GraphMap};
use crate::tensor::{Mode, Tensor, VarId};
use crate::train::joint_loss;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// What to verify; parsed from the CLI's module selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckSelector {
    All,
    Ops,
    MlpS,
    MlpT,
    MlpR,
    Gcn,
    Attn,
    Full,
}

impl std::str::FromStr for CheckSelector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(Self::All),
            "ops" => Ok(Self::Ops),
            "mlp_s" => Ok(Self::MlpS),
            "mlp_t" => Ok(Self::MlpT),
            "mlp_r" => Ok(Self::MlpR),
            "gcn" => Ok(Self::Gcn),
            "attn" => Ok(Self::Attn),
            "full" => Ok(Self::Full),
            other => Err(format!(
                "unknown gradcheck module `{other}` (all|ops|mlp_s|mlp_t|mlp_r|gcn|attn|full)"
            )),
        }
    }
}

/// Threshold every check in the suite is held to.
pub const SUITE_THRESHOLD: f64 = 1e-4;

/// Central-difference step used by the suite. Chosen near the small end of
/// the stable range: LayerNorm over very short axes has strong curvature
/// near tied inputs, and the truncation error scales with the square of
/// the step.
pub const SUITE_STEP: f64 = 2e-6;

/// Any module with named parameters and a scalar-valued forward can be
/// gradient-checked generically.
trait CheckModule: Clone {
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));
    /// Build a scalar node from the input; parameters must be bound through
    /// the context so their gradients are addressable by name.
    fn forward_scalar(&self, ctx: &mut FwdCtx, x: VarId) -> Result<VarId, ModelError>;
}

/// Adapter turning a [`CheckModule`] into a [`DifferentiableMap`] whose
/// inputs are `[x, param0, param1, ...]` in parameter-visit order.
struct ModuleMap<M: CheckModule> {
    template: M,
    param_names: Vec<String>,
}

impl<M: CheckModule> ModuleMap<M> {
    fn new(mut template: M) -> Self {
        let mut param_names = Vec::new();
        template.visit_params_mut(&mut |name, _| param_names.push(name.to_string()));
        Self {
            template,
            param_names,
        }
    }

    /// All check inputs: the data tensor followed by the template's current
    /// parameter values.
    fn inputs(&self, x: &Tensor) -> Vec<Tensor> {
        let mut m = self.template.clone();
        let mut out = vec![x.clone()];
        m.visit_params_mut(&mut |_, t| out.push(t.clone()));
        out
    }

    fn run(&self, inputs: &[Tensor], want_grad: bool) -> Result<(f64, Vec<Vec<f64>>), TensorError> {
        let mut m = self.template.clone();
        let mut idx = 1;
        m.visit_params_mut(&mut |_, t| {
            *t = inputs[idx].clone();
            idx += 1;
        });
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut ctx = FwdCtx::new(Mode::Eval, &mut rng);
        let x = ctx.graph.leaf(inputs[0].clone(), true);
        let out = m.forward_scalar(&mut ctx, x).map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => TensorError::InvalidParam {
                op: "module_check",
                msg: other.to_string(),
            },
        })?;
        let val = ctx.graph.value(out).data()[0];
        let mut grads = Vec::new();
        if want_grad {
            ctx.graph.backward(out)?;
            grads.push(
                ctx.graph
                    .grad(x)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; inputs[0].numel()]),
            );
            let binds: HashMap<&str, VarId> = ctx
                .binds()
                .iter()
                .map(|(n, id)| (n.as_str(), *id))
                .collect();
            for (name, input) in self.param_names.iter().zip(&inputs[1..]) {
                let grad = binds
                    .get(name.as_str())
                    .and_then(|id| ctx.graph.grad(*id))
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; input.numel()]);
                grads.push(grad);
            }
        }
        Ok((val, grads))
    }
}

impl<M: CheckModule> DifferentiableMap for ModuleMap<M> {
    fn value(&self, inputs: &[Tensor]) -> Result<f64, TensorError> {
        Ok(self.run(inputs, false)?.0)
    }

    fn grad(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>, TensorError> {
        Ok(self.run(inputs, true)?.1)
    }
}

macro_rules! impl_check_module {
    ($ty:ty, $prefix:literal) => {
        impl CheckModule for $ty {
            fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
                self.visit_mut($prefix, f);
            }
            fn forward_scalar(&self, ctx: &mut FwdCtx, x: VarId) -> Result<VarId, ModelError> {
                let y = self.forward(ctx, $prefix, x)?;
                Ok(ctx.graph.sum_all(y)?)
            }
        }
    };
}

impl_check_module!(MlpBlock, "m");
impl_check_module!(GcnBlock, "g");
impl_check_module!(AttnBlock, "a");
impl_check_module!(Stage, "s");

/// Full model plus the joint loss, the end-to-end check target.
#[derive(Clone)]
struct ModelLoss {
    model: Model,
    y_group: Vec<usize>,
    y_indiv: Vec<usize>,
    lambda: f64,
}

impl CheckModule for ModelLoss {
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.model.visit_params_mut(f);
    }

    fn forward_scalar(&self, ctx: &mut FwdCtx, x: VarId) -> Result<VarId, ModelError> {
        let out = self.model.forward(ctx, x, None)?;
        joint_loss(&mut ctx.graph, &out, &self.y_group, &self.y_indiv, self.lambda).map_err(|e| {
            match e {
                crate::error::TrainError::Tensor(t) => ModelError::Tensor(t),
                other => ModelError::InvalidConfig(other.to_string()),
            }
        })
    }
}

fn check_module<M: CheckModule>(
    name: &str,
    module: M,
    x: &Tensor,
    reports: &mut Vec<GradCheckReport>,
) -> Result<(), TensorError> {
    let map = ModuleMap::new(module);
    let inputs = map.inputs(x);
    let mut named: Vec<(&str, Tensor)> = vec![("x", inputs[0].clone())];
    for (n, t) in map.param_names.iter().zip(&inputs[1..]) {
        named.push((n.as_str(), t.clone()));
    }
    reports.push(grad_check(name, &map, &named, SUITE_STEP)?);
    Ok(())
}

fn op_checks(
    t: usize,
    n: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
    reports: &mut Vec<GradCheckReport>,
) -> Result<(), TensorError> {
    let tag = |op: &str| format!("{op}[{t}x{n}x{d}]");

    // affine: f = Σ affine(x, w, b)
    let map = GraphMap::new(|g, ids| {
        let y = g.affine(ids[0], ids[1], Some(ids[2]))?;
        g.sum_all(y)
    });
    let x = Tensor::uniform(&[t, n], 1.0, rng);
    let w = Tensor::uniform(&[n, d], 1.0, rng);
    let b = Tensor::uniform(&[d], 1.0, rng);
    reports.push(grad_check(
        &tag("affine"),
        &map,
        &[("x", x), ("w", w), ("b", b)],
        SUITE_STEP,
    )?);

    // layer_norm over the last axis with affine parameters.
    let map = GraphMap::new(|g, ids| {
        let y = g.layer_norm(ids[0], Some(ids[1]), Some(ids[2]), 1e-5)?;
        g.sum_all(y)
    });
    let x = Tensor::uniform(&[t * n, d], 1.0, rng);
    let gamma = Tensor::uniform(&[d], 1.0, rng);
    let beta = Tensor::uniform(&[d], 1.0, rng);
    reports.push(grad_check(
        &tag("layer_norm"),
        &map,
        &[("x", x), ("gamma", gamma), ("beta", beta)],
        SUITE_STEP,
    )?);

    // gelu, relu, softmax: elementwise / row maps under a weighted sum so
    // the incoming gradient is non-uniform.
    let weights = Tensor::uniform(&[t, n, d], 1.0, rng);
    let map = GraphMap::new(move |g, ids| {
        let y = g.gelu(ids[0])?;
        let w = g.constant(weights.clone());
        let yf = g.reshape(y, &[1, 1, t * n * d])?;
        let wf = g.reshape(w, &[1, t * n * d, 1])?;
        let prod = g.bmm(yf, wf, false)?;
        g.sum_all(prod)
    });
    let x = Tensor::uniform(&[t, n, d], 1.5, rng);
    reports.push(grad_check(&tag("gelu"), &map, &[("x", x)], SUITE_STEP)?);

    let map = GraphMap::new(|g, ids| {
        let y = g.relu(ids[0])?;
        g.sum_all(y)
    });
    let x = Tensor::uniform(&[t, n, d], 1.0, rng);
    reports.push(grad_check(&tag("relu"), &map, &[("x", x)], SUITE_STEP)?);

    let map = GraphMap::new(move |g, ids| {
        let s = g.softmax_last(ids[0])?;
        let sr = g.reshape(s, &[t, 1, n])?;
        let sq = g.bmm(sr, ids[1], false)?;
        g.sum_all(sq)
    });
    let x = Tensor::uniform(&[t, n], 2.0, rng);
    let v = Tensor::uniform(&[t, n, 2], 1.0, rng);
    reports.push(grad_check(&tag("softmax"), &map, &[("x", x), ("v", v)], SUITE_STEP)?);

    // dropout in train mode with a per-evaluation reseeded mask.
    let map = GraphMap::new(|g, ids| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(42);
        let y = g.dropout(ids[0], 0.3, Mode::Train, &mut mask_rng)?;
        g.sum_all(y)
    });
    let x = Tensor::uniform(&[t, n, d], 1.0, rng);
    reports.push(grad_check(&tag("dropout"), &map, &[("x", x)], SUITE_STEP)?);

    // reductions
    let map = GraphMap::new(|g, ids| {
        let m = g.reduce_mean(ids[0], 1)?;
        let mx = g.reduce_max(m, 0)?;
        g.sum_all(mx)
    });
    let x = Tensor::uniform(&[t, n, d], 1.0, rng);
    reports.push(grad_check(&tag("reduce"), &map, &[("x", x)], SUITE_STEP)?);

    // batched matmul, both orientations.
    let map = GraphMap::new(|g, ids| {
        let y = g.bmm(ids[0], ids[1], false)?;
        let z = g.bmm(y, ids[2], true)?;
        g.sum_all(z)
    });
    let a = Tensor::uniform(&[2, t, n], 1.0, rng);
    let b = Tensor::uniform(&[2, n, d], 1.0, rng);
    let c = Tensor::uniform(&[2, n, d], 1.0, rng);
    reports.push(grad_check(
        &tag("bmm"),
        &map,
        &[("a", a), ("b", b), ("c", c)],
        SUITE_STEP,
    )?);

    // shape plumbing: permute + reshape + add + scale composed.
    let map = GraphMap::new(move |g, ids| {
        let p = g.permute(ids[0], &[2, 0, 1])?;
        let r = g.reshape(p, &[d, t * n])?;
        let s = g.scale(r, 1.5)?;
        let q = g.add(s, s)?;
        g.sum_all(q)
    });
    let x = Tensor::uniform(&[t, n, d], 1.0, rng);
    reports.push(grad_check(&tag("shape_ops"), &map, &[("x", x)], SUITE_STEP)?);

    // softmax cross-entropy over logits.
    let labels: Vec<usize> = (0..t).map(|i| i % n).collect();
    let map = GraphMap::new(move |g, ids| g.softmax_cross_entropy(ids[0], &labels));
    let x = Tensor::uniform(&[t, n], 2.0, rng);
    reports.push(grad_check(&tag("cross_entropy"), &map, &[("x", x)], SUITE_STEP)?);

    Ok(())
}

/// Run the selected checks at every `(T, N, D)` in `dims`, returning one
/// report per check. Inputs are seeded; identical calls give identical
/// reports.
pub fn run_suite(
    selector: CheckSelector,
    dims: &[(usize, usize, usize)],
    seed: u64,
) -> Result<Vec<GradCheckReport>, ModelError> {
    let mut reports = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use CheckSelector::*;

    for &(t, n, d) in dims {
        let tag = |m: &str| format!("{m}[{t}x{n}x{d}]");
        let x = Tensor::uniform(&[t, n, d], 1.0, &mut rng);

        if matches!(selector, All | Ops) {
            op_checks(t, n, d, &mut rng, &mut reports)?;
        }
        if matches!(selector, All | MlpS) {
            let block = MlpBlock::new(MixAxis::Actor, n, d, 0.3, &mut rng);
            check_module(&tag("mlp_s"), block, &x, &mut reports)?;
        }
        if matches!(selector, All | MlpT) {
            let block = MlpBlock::new(MixAxis::Time, t, d, 0.3, &mut rng);
            check_module(&tag("mlp_t"), block, &x, &mut reports)?;
        }
        if matches!(selector, All | MlpR) {
            let block = MlpBlock::new(MixAxis::Channel, d, d, 0.3, &mut rng);
            check_module(&tag("mlp_r"), block, &x, &mut reports)?;
        }
        if matches!(selector, All) {
            let srm = Stage::Mlp {
                mixer: MlpBlock::new(MixAxis::Actor, n, d, 0.3, &mut rng),
                refiner: Some(MlpBlock::new(MixAxis::Channel, d, d, 0.3, &mut rng)),
            };
            check_module(&tag("srm"), srm, &x, &mut reports)?;
            let trm = Stage::Mlp {
                mixer: MlpBlock::new(MixAxis::Time, t, d, 0.3, &mut rng),
                refiner: Some(MlpBlock::new(MixAxis::Channel, d, d, 0.3, &mut rng)),
            };
            check_module(&tag("trm"), trm, &x, &mut reports)?;
        }
        if matches!(selector, All | Gcn) {
            check_module(
                &tag("gcn_spatial"),
                GcnBlock::new(MixAxis::Actor, d, &mut rng),
                &x,
                &mut reports,
            )?;
            check_module(
                &tag("gcn_temporal"),
                GcnBlock::new(MixAxis::Time, d, &mut rng),
                &x,
                &mut reports,
            )?;
        }
        if matches!(selector, All | Attn) {
            check_module(
                &tag("attn_spatial"),
                AttnBlock::new(MixAxis::Actor, d, 1, &mut rng),
                &x,
                &mut reports,
            )?;
            check_module(
                &tag("attn_temporal"),
                AttnBlock::new(MixAxis::Time, d, 1, &mut rng),
                &x,
                &mut reports,
            )?;
        }
        if matches!(selector, All | Full) {
            let config = ModelConfig {
                c_group: 3,
                c_action: 4,
                seed: seed ^ 0xF0F0,
                ..ModelConfig::new(Method::Mlp, t, n, d)
            };
            let model = build_unified_model(&config)?;
            let target = ModelLoss {
                model,
                y_group: vec![1],
                y_indiv: (0..n).map(|i| i % 4).collect(),
                lambda: 0.7,
            };
            check_module(&tag("dual_path_loss"), target, &x, &mut reports)?;
        }
    }
    Ok(reports)
}

/// Worst relative error across a set of reports.
pub fn worst_error(reports: &[GradCheckReport]) -> f64 {
    reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_parsing() {
        assert_eq!("mlp_r".parse::<CheckSelector>().unwrap(), CheckSelector::MlpR);
        assert!("bogus".parse::<CheckSelector>().is_err());
    }

    #[test]
    fn small_suite_passes() {
        let reports = run_suite(CheckSelector::All, &[(2, 3, 4)], 11).unwrap();
        assert!(!reports.is_empty());
        for r in &reports {
            assert!(
                r.passed(SUITE_THRESHOLD),
                "{}: max rel error {}",
                r.name,
                r.max_rel_error
            );
        }
    }

    #[test]
    fn injected_sign_error_is_caught_and_named() {
        // A harness that cannot fail a wrong gradient is no harness: flip
        // the sign of one backward result and expect a loud failure.
        struct Flipped;
        impl DifferentiableMap for Flipped {
            fn value(&self, inputs: &[Tensor]) -> Result<f64, TensorError> {
                Ok(inputs[0].data().iter().map(|v| v * v).sum())
            }
            fn grad(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>, TensorError> {
                // sign error: -2x instead of 2x
                Ok(vec![inputs[0].data().iter().map(|v| -2.0 * v).collect()])
            }
        }
        let x = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let report = grad_check("flipped_square", &Flipped, &[("x", x)], SUITE_STEP).unwrap();
        assert!(!report.passed(SUITE_THRESHOLD));
        assert_eq!(report.name, "flipped_square");
        assert_eq!(report.worst.as_ref().unwrap().input, "x");
    }
}
