//! The dual-path scaffold shared by all relation methods. Each path runs a
//! stack of spatial-axis stages and a stack of temporal-axis stages in its
//! own order, with an explicit residual around the first stack:
//!
//! ```text
//! ST(x) = temporal_stages(x + spatial_stages(x))
//! TS(x) = spatial_stages(x + temporal_stages(x))
//! ```
//!
//! Paths share no weights. Group predictions of the available branches
//! (paths, plus the optional scene head) fuse by arithmetic mean of their
//! logit vectors.

use super::{
    ensure_batched, pool_and_classify, AttnBlock, FwdCtx, GcnBlock, Method, MixAxis, MlpBlock,
    MlpVariant, ModelConfig, PathHeads, PathMode, SceneHead,
};
use crate::error::ModelError;
use crate::tensor::{Tensor, VarId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One relation stage: the method-specific block body.
#[derive(Debug, Clone)]
pub enum Stage {
    /// Token mixer plus optional channel-mixing refiner in series.
    Mlp {
        mixer: MlpBlock,
        refiner: Option<MlpBlock>,
    },
    Gcn(GcnBlock),
    Attn(AttnBlock),
}

impl Stage {
    pub fn forward(&self, ctx: &mut FwdCtx, prefix: &str, x: VarId) -> Result<VarId, ModelError> {
        match self {
            Stage::Mlp { mixer, refiner } => {
                let h = mixer.forward(ctx, &format!("{prefix}.mix"), x)?;
                match refiner {
                    Some(r) => r.forward(ctx, &format!("{prefix}.refine"), h),
                    None => Ok(h),
                }
            }
            Stage::Gcn(b) => b.forward(ctx, prefix, x),
            Stage::Attn(b) => b.forward(ctx, prefix, x),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        match self {
            Stage::Mlp { mixer, refiner } => {
                mixer.visit(&format!("{prefix}.mix"), f);
                if let Some(r) = refiner {
                    r.visit(&format!("{prefix}.refine"), f);
                }
            }
            Stage::Gcn(b) => b.visit(prefix, f),
            Stage::Attn(b) => b.visit(prefix, f),
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        match self {
            Stage::Mlp { mixer, refiner } => {
                mixer.visit_mut(&format!("{prefix}.mix"), f);
                if let Some(r) = refiner {
                    r.visit_mut(&format!("{prefix}.refine"), f);
                }
            }
            Stage::Gcn(b) => b.visit_mut(prefix, f),
            Stage::Attn(b) => b.visit_mut(prefix, f),
        }
    }

    fn zero_residual(&mut self) {
        match self {
            Stage::Mlp { mixer, refiner } => {
                mixer.zero_residual();
                if let Some(r) = refiner {
                    r.zero_residual();
                }
            }
            Stage::Gcn(b) => b.zero_residual(),
            Stage::Attn(b) => b.zero_residual(),
        }
    }
}

/// Spatial-first (`St`) or temporal-first (`Ts`) stage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathOrder {
    St,
    Ts,
}

impl PathOrder {
    pub fn as_str(&self) -> &'static str {
        match self {
            PathOrder::St => "st",
            PathOrder::Ts => "ts",
        }
    }
}

/// One relation path: its stage stacks, order, and classifier heads.
#[derive(Debug, Clone)]
pub struct Path {
    pub order: PathOrder,
    pub spatial: Vec<Stage>,
    pub temporal: Vec<Stage>,
    pub heads: PathHeads,
}

impl Path {
    /// Run the trunk only (no pooling/heads); shape-preserving.
    pub fn forward_trunk(&self, ctx: &mut FwdCtx, x: VarId) -> Result<VarId, ModelError> {
        let x = ensure_batched(&mut ctx.graph, x)?;
        let me = self.order.as_str();
        let (first, second, first_name, second_name) = match self.order {
            PathOrder::St => (&self.spatial, &self.temporal, "spatial", "temporal"),
            PathOrder::Ts => (&self.temporal, &self.spatial, "temporal", "spatial"),
        };
        let mut h = x;
        for (i, s) in first.iter().enumerate() {
            h = s.forward(ctx, &format!("{me}.{first_name}{i}"), h)?;
        }
        let mid = ctx.graph.add(x, h)?;
        let mut out = mid;
        for (i, s) in second.iter().enumerate() {
            out = s.forward(ctx, &format!("{me}.{second_name}{i}"), out)?;
        }
        Ok(out)
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        let me = self.order.as_str();
        for (i, s) in self.spatial.iter().enumerate() {
            s.visit(&format!("{me}.spatial{i}"), f);
        }
        for (i, s) in self.temporal.iter().enumerate() {
            s.visit(&format!("{me}.temporal{i}"), f);
        }
        self.heads.visit(&format!("{me}.head"), f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        let me = self.order.as_str();
        for (i, s) in self.spatial.iter_mut().enumerate() {
            s.visit_mut(&format!("{me}.spatial{i}"), f);
        }
        for (i, s) in self.temporal.iter_mut().enumerate() {
            s.visit_mut(&format!("{me}.temporal{i}"), f);
        }
        self.heads.visit_mut(&format!("{me}.head"), f);
    }
}

/// Node handles of one forward pass: per-branch logits, the fused group
/// prediction, and the exportable group embeddings.
#[derive(Debug, Clone, Copy)]
pub struct ModelOutput {
    pub group_st: Option<VarId>,
    pub group_ts: Option<VarId>,
    pub group_scene: Option<VarId>,
    /// Arithmetic mean of the available group logit vectors, `[B, C_group]`.
    pub fused_group: VarId,
    pub indiv_st: Option<VarId>,
    pub indiv_ts: Option<VarId>,
    pub embedding_st: Option<VarId>,
    pub embedding_ts: Option<VarId>,
}

impl ModelOutput {
    /// Individual logits of the available paths, ST first.
    pub fn indiv_logits(&self) -> Vec<VarId> {
        [self.indiv_st, self.indiv_ts].into_iter().flatten().collect()
    }
}

/// A complete relation model: up to two paths plus the optional scene head.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub st: Option<Path>,
    pub ts: Option<Path>,
    pub scene: Option<SceneHead>,
}

/// Instantiate the configured method inside the shared dual-path scaffold.
/// Seeding is deterministic: the same config yields bit-identical weights.
pub fn build_unified_model(config: &ModelConfig) -> Result<Model, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut build_path = |order: PathOrder| -> Path {
        let spatial = (0..config.blocks)
            .map(|_| build_stage(config, MixAxis::Actor, &mut rng))
            .collect();
        let temporal = (0..config.blocks)
            .map(|_| build_stage(config, MixAxis::Time, &mut rng))
            .collect();
        let heads = PathHeads::new(config.d, config.c_group, config.c_action, &mut rng);
        Path {
            order,
            spatial,
            temporal,
            heads,
        }
    };

    let (st, ts) = match config.path_mode {
        PathMode::Dual => (Some(build_path(PathOrder::St)), Some(build_path(PathOrder::Ts))),
        PathMode::SingleSt => (Some(build_path(PathOrder::St)), None),
        PathMode::SingleTs => (None, Some(build_path(PathOrder::Ts))),
    };
    let scene = config
        .scene_dim
        .map(|ds| SceneHead::new(ds, config.c_group, &mut rng));

    Ok(Model {
        config: config.clone(),
        st,
        ts,
        scene,
    })
}

fn build_stage(config: &ModelConfig, token_axis: MixAxis, rng: &mut ChaCha8Rng) -> Stage {
    let (t, n, d, p) = (config.t, config.n, config.d, config.dropout);
    let token_len = match token_axis {
        MixAxis::Actor => n,
        MixAxis::Time => t,
        MixAxis::Channel => unreachable!(),
    };
    match config.method {
        Method::Mlp => match config.variant {
            MlpVariant::Full => Stage::Mlp {
                mixer: MlpBlock::new(token_axis, token_len, d, p, rng),
                refiner: Some(MlpBlock::new(MixAxis::Channel, d, d, p, rng)),
            },
            MlpVariant::NoRefiner => Stage::Mlp {
                mixer: MlpBlock::new(token_axis, token_len, d, p, rng),
                refiner: None,
            },
            MlpVariant::RefinerOnly => Stage::Mlp {
                mixer: MlpBlock::new(MixAxis::Channel, d, d, p, rng),
                refiner: None,
            },
        },
        Method::Gcn => Stage::Gcn(GcnBlock::new(token_axis, d, rng)),
        Method::Transformer => Stage::Attn(AttnBlock::new(token_axis, d, config.attn_heads, rng)),
    }
}

impl Model {
    /// Full forward pass: trunks, pooling, heads, and late fusion.
    ///
    /// `x` is `[T,N,D]` or `[B,T,N,D]`; `scene`, when the model carries a
    /// scene head, must be `[D_scene]` or `[B, D_scene]`.
    pub fn forward(
        &self,
        ctx: &mut FwdCtx,
        x: VarId,
        scene: Option<VarId>,
    ) -> Result<ModelOutput, ModelError> {
        let x = ensure_batched(&mut ctx.graph, x)?;
        let sh = ctx.graph.shape(x).to_vec();
        let cfg = &self.config;
        if sh[1] != cfg.t || sh[2] != cfg.n || sh[3] != cfg.d {
            return Err(ModelError::InvalidConfig(format!(
                "input shape {:?} does not match configured dims T={} N={} D={}",
                sh, cfg.t, cfg.n, cfg.d
            )));
        }
        if scene.is_some() && self.scene.is_none() {
            return Err(ModelError::SceneHeadMissing);
        }
        if scene.is_none() && self.scene.is_some() {
            return Err(ModelError::SceneInputMissing);
        }

        let run_path = |path: &Path, ctx: &mut FwdCtx| -> Result<_, ModelError> {
            let trunk = path.forward_trunk(ctx, x)?;
            pool_and_classify(
                ctx,
                &format!("{}.head", path.order.as_str()),
                trunk,
                &path.heads,
            )
        };

        let st_out = self.st.as_ref().map(|p| run_path(p, ctx)).transpose()?;
        let ts_out = self.ts.as_ref().map(|p| run_path(p, ctx)).transpose()?;

        let group_scene = match (&self.scene, scene) {
            (Some(head), Some(s)) => {
                let s = ensure_scene_batched(ctx, s, sh[0])?;
                let w = ctx.param("scene.w".into(), &head.w);
                let b = ctx.param("scene.b".into(), &head.b);
                Some(ctx.graph.affine(s, w, Some(b))?)
            }
            _ => None,
        };

        let branches: Vec<VarId> = [
            st_out.map(|o| o.group_logits),
            ts_out.map(|o| o.group_logits),
            group_scene,
        ]
        .into_iter()
        .flatten()
        .collect();
        let g = &mut ctx.graph;
        let mut acc = branches[0];
        for &b in &branches[1..] {
            acc = g.add(acc, b)?;
        }
        let fused_group = g.scale(acc, 1.0 / branches.len() as f64)?;

        Ok(ModelOutput {
            group_st: st_out.map(|o| o.group_logits),
            group_ts: ts_out.map(|o| o.group_logits),
            group_scene,
            fused_group,
            indiv_st: st_out.map(|o| o.indiv_logits),
            indiv_ts: ts_out.map(|o| o.indiv_logits),
            embedding_st: st_out.map(|o| o.group_embedding),
            embedding_ts: ts_out.map(|o| o.group_embedding),
        })
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        if let Some(p) = &self.st {
            p.visit(f);
        }
        if let Some(p) = &self.ts {
            p.visit(f);
        }
        if let Some(s) = &self.scene {
            s.visit(f);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        if let Some(p) = &mut self.st {
            p.visit_mut(f);
        }
        if let Some(p) = &mut self.ts {
            p.visit_mut(f);
        }
        if let Some(s) = &mut self.scene {
            s.visit_mut(f);
        }
    }

    /// Total parameter count including heads.
    pub fn param_count(&self) -> u64 {
        let mut total = 0u64;
        self.visit_params(&mut |_, t| total += t.numel() as u64);
        total
    }

    /// Parameter count of the relation trunk only (heads and scene branch
    /// excluded), the quantity the cost accountant reports.
    pub fn trunk_param_count(&self) -> u64 {
        let mut total = 0u64;
        self.visit_params(&mut |name, t| {
            if !name.contains(".head.") && !name.starts_with("scene.") {
                total += t.numel() as u64;
            }
        });
        total
    }

    /// Zero every stage's residual-producing layer so that each path trunk
    /// computes exactly `x ↦ 2x`.
    pub fn zero_residual_trunk(&mut self) {
        for path in [&mut self.st, &mut self.ts].into_iter().flatten() {
            for s in path.spatial.iter_mut().chain(path.temporal.iter_mut()) {
                s.zero_residual();
            }
        }
    }
}

fn ensure_scene_batched(ctx: &mut FwdCtx, s: VarId, b: usize) -> Result<VarId, ModelError> {
    let sh = ctx.graph.shape(s).to_vec();
    match sh.len() {
        2 => Ok(s),
        1 => Ok(ctx.graph.reshape(s, &[1, sh[0]])?),
        _ => Err(ModelError::InvalidConfig(format!(
            "scene features must be [D_scene] or [B, D_scene], got {sh:?}"
        ))),
    }
    .and_then(|id| {
        let got = ctx.graph.shape(id)[0];
        if got != b {
            return Err(ModelError::InvalidConfig(format!(
                "scene batch {got} does not match feature batch {b}"
            )));
        }
        Ok(id)
    })
}
