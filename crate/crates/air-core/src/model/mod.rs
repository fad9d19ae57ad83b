//! Relation models over actor feature tensors `[T × N × D]` (optionally
//! batched as `[B × T × N × D]`): the MLP token/channel-mixing blocks, GCN
//! and Transformer baseline blocks, and the dual-path scaffold with pooling
//! and classifier heads shared by all three methods.

mod attn;
mod checkpoint;
mod gcn;
mod heads;
mod mlp;
mod network;

pub use attn::AttnBlock;
pub use checkpoint::{load_model, save_model, CHECKPOINT_VERSION};
pub use gcn::GcnBlock;
pub use heads::{pool_and_classify, PathHeads, PoolOutputs, SceneHead};
pub use mlp::MlpBlock;
pub use network::{build_unified_model, Model, ModelOutput, Path, Stage};

use crate::error::ModelError;
use crate::tensor::{Graph, Mode, Tensor, VarId};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// LayerNorm epsilon used by every block in the crate.
pub const LN_EPS: f64 = 1e-5;

/// Relation-learning method mounted in the dual-path scaffold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mlp,
    Gcn,
    Transformer,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mlp => "mlp",
            Method::Gcn => "gcn",
            Method::Transformer => "transformer",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mlp" => Ok(Method::Mlp),
            "gcn" => Ok(Method::Gcn),
            "transformer" => Ok(Method::Transformer),
            other => Err(format!("unknown method `{other}` (mlp|gcn|transformer)")),
        }
    }
}

/// Which relation paths the model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathMode {
    #[serde(rename = "dual")]
    Dual,
    #[serde(rename = "st")]
    SingleSt,
    #[serde(rename = "ts")]
    SingleTs,
}

impl PathMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PathMode::Dual => "dual",
            PathMode::SingleSt => "st",
            PathMode::SingleTs => "ts",
        }
    }
}

impl std::str::FromStr for PathMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dual" => Ok(PathMode::Dual),
            "st" => Ok(PathMode::SingleSt),
            "ts" => Ok(PathMode::SingleTs),
            other => Err(format!("unknown path mode `{other}` (dual|st|ts)")),
        }
    }
}

/// Ablation variants of the MLP method's stage bodies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MlpVariant {
    /// Token mixer followed by a channel-mixing refiner in every stage.
    #[serde(rename = "full")]
    Full,
    /// Token mixers only (the refiner removed).
    #[serde(rename = "no-refiner")]
    NoRefiner,
    /// Channel-mixing blocks only: no cross-actor or cross-time mixing in
    /// the trunk. Used as the relation-blind control on the synthetic
    /// benchmark.
    #[serde(rename = "refiner-only")]
    RefinerOnly,
}

impl MlpVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            MlpVariant::Full => "full",
            MlpVariant::NoRefiner => "no-refiner",
            MlpVariant::RefinerOnly => "refiner-only",
        }
    }
}

/// Axis along which a block mixes information. `[B, T, N, D]` layout:
/// `Time` is dim 1, `Actor` dim 2, `Channel` dim 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixAxis {
    Time,
    Actor,
    Channel,
}

impl MixAxis {
    pub(crate) fn dim(&self) -> usize {
        match self {
            MixAxis::Time => 1,
            MixAxis::Actor => 2,
            MixAxis::Channel => 3,
        }
    }
}

/// Full architectural description of a model; together with its `seed` it
/// pins every parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub method: Method,
    pub t: usize,
    pub n: usize,
    pub d: usize,
    /// Stacked relation stages per path half (the block-count sweep axis).
    pub blocks: usize,
    pub dropout: f64,
    pub path_mode: PathMode,
    pub variant: MlpVariant,
    pub c_group: usize,
    pub c_action: usize,
    /// Scene-feature width; `Some` mounts a scene classification head.
    pub scene_dim: Option<usize>,
    pub attn_heads: usize,
    /// Weight of the individual-action loss term.
    pub lambda: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Baseline config for the given method and dims; dual-path, one block,
    /// group/action class counts matching the synthetic benchmark defaults.
    pub fn new(method: Method, t: usize, n: usize, d: usize) -> Self {
        Self {
            method,
            t,
            n,
            d,
            blocks: 1,
            dropout: 0.3,
            path_mode: PathMode::Dual,
            variant: MlpVariant::Full,
            c_group: 8,
            c_action: 9,
            scene_dim: None,
            attn_heads: 8,
            lambda: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.t == 0 || self.n == 0 || self.d == 0 {
            return bad(format!("dims must be positive, got T={} N={} D={}", self.t, self.n, self.d));
        }
        if self.blocks == 0 {
            return bad("block count must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.c_group < 2 {
            return bad(format!("need at least 2 group classes, got {}", self.c_group));
        }
        if self.c_action == 0 {
            return bad("need at least 1 action class".into());
        }
        if self.lambda < 0.0 {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.method != Method::Mlp && self.variant != MlpVariant::Full {
            return bad(format!(
                "variant `{}` applies only to the mlp method",
                self.variant.as_str()
            ));
        }
        if self.method == Method::Transformer {
            if self.attn_heads == 0 {
                return bad("attention needs at least 1 head".into());
            }
            if self.d % self.attn_heads != 0 {
                return bad(format!(
                    "feature dim {} not divisible by {} attention heads",
                    self.d, self.attn_heads
                ));
            }
        }
        if self.scene_dim == Some(0) {
            return bad("scene_dim must be positive when set".into());
        }
        Ok(())
    }
}

/// State threaded through one forward pass: the graph under construction,
/// train/eval mode, the dropout RNG, and the name→node binding of every
/// parameter inserted so far (consumed afterwards by the optimizer and by
/// gradient readout).
pub struct FwdCtx<'r> {
    pub graph: Graph,
    pub mode: Mode,
    pub rng: &'r mut ChaCha8Rng,
    binds: Vec<(String, VarId)>,
}

impl<'r> FwdCtx<'r> {
    pub fn new(mode: Mode, rng: &'r mut ChaCha8Rng) -> Self {
        Self {
            graph: Graph::new(),
            mode,
            rng,
            binds: Vec::new(),
        }
    }

    /// Insert a trainable parameter and record its binding.
    pub fn param(&mut self, name: String, value: &Tensor) -> VarId {
        let id = self.graph.leaf(value.clone(), true);
        self.binds.push((name, id));
        id
    }

    pub fn binds(&self) -> &[(String, VarId)] {
        &self.binds
    }

    /// Gradient of each bound parameter after a backward pass.
    pub fn param_grads(&self) -> Vec<(&str, Option<&[f64]>)> {
        self.binds
            .iter()
            .map(|(name, id)| (name.as_str(), self.graph.grad(*id)))
            .collect()
    }
}

/// Normalize `[T,N,D]` input to `[1,T,N,D]`; rank-4 passes through.
pub(crate) fn ensure_batched(g: &mut Graph, x: VarId) -> Result<VarId, ModelError> {
    let sh = g.shape(x).to_vec();
    match sh.len() {
        4 => Ok(x),
        3 => Ok(g.reshape(x, &[1, sh[0], sh[1], sh[2]])?),
        _ => Err(ModelError::InvalidConfig(format!(
            "expected a [T,N,D] or [B,T,N,D] tensor, got shape {sh:?}"
        ))),
    }
}

/// Geometry of a token view: `[B,T,N,D]` flattened to token groups
/// `[G, M, D]` where tokens run along the chosen axis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TokenView {
    b: usize,
    t: usize,
    n: usize,
    d: usize,
    axis: MixAxis,
}

/// View `[B,T,N,D]` as `[G, tokens, D]`: actors per frame (`Actor`) or
/// frames per actor (`Time`).
pub(crate) fn to_tokens(
    g: &mut Graph,
    x: VarId,
    axis: MixAxis,
) -> Result<(VarId, TokenView), ModelError> {
    let sh = g.shape(x).to_vec();
    debug_assert_eq!(sh.len(), 4);
    let (b, t, n, d) = (sh[0], sh[1], sh[2], sh[3]);
    let view = TokenView { b, t, n, d, axis };
    let xs = match axis {
        MixAxis::Actor => g.reshape(x, &[b * t, n, d])?,
        MixAxis::Time => {
            let p = g.permute(x, &[0, 2, 1, 3])?;
            g.reshape(p, &[b * n, t, d])?
        }
        MixAxis::Channel => {
            return Err(ModelError::InvalidConfig(
                "token blocks mix over actors or frames, not channels".into(),
            ))
        }
    };
    Ok((xs, view))
}

/// Undo [`to_tokens`].
pub(crate) fn from_tokens(g: &mut Graph, x: VarId, view: TokenView) -> Result<VarId, ModelError> {
    let TokenView { b, t, n, d, axis } = view;
    Ok(match axis {
        MixAxis::Actor => g.reshape(x, &[b, t, n, d])?,
        MixAxis::Time => {
            let r = g.reshape(x, &[b, n, t, d])?;
            g.permute(r, &[0, 2, 1, 3])?
        }
        MixAxis::Channel => unreachable!(),
    })
}
