//! Analytic parameter and MAC accounting for the relation trunks, plus
//! forward-latency measurement and the method-comparison table.
//!
//! Counting conventions (also emitted in every report's assumptions list):
//! one MAC is one fused multiply-add; only weight-matrix multiplies are
//! counted (LayerNorm, GeLU, softmax, and bias adds excluded); classifier
//! heads and the scene branch are out of scope; GCN adjacency
//! construction/application is excluded while attention score products
//! (QKᵀ, AV) are included.

use crate::error::ModelError;
use crate::model::{FwdCtx, Method, MlpVariant, Model, ModelConfig, PathMode};
use crate::tensor::{Mode, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// One relation component: its name matches the model's parameter-name
/// prefix so analytic rows can be checked against live buffers exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub name: String,
    pub params: u64,
    pub macs: u64,
}

/// Per-component costs of one configuration at given evaluation dims.
#[derive(Debug, Clone)]
pub struct CostReport {
    pub method: Method,
    pub blocks: usize,
    /// Evaluation dims `(T, N, D)` the MAC counts refer to.
    pub dims: (usize, usize, usize),
    pub rows: Vec<CostRow>,
    pub assumptions: Vec<String>,
}

impl CostReport {
    pub fn total_params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }
}

/// FC parameter count of one mixing block over an axis of length `a`:
/// two `a×a` layers plus their biases.
pub fn fc_param_count(a: u64) -> u64 {
    2 * (a * a + a)
}

/// Full parameter count of one MLP mixing block: the FC pair plus the
/// per-channel LayerNorm scale and shift.
pub fn mlp_block_param_count(a: u64, d: u64) -> u64 {
    fc_param_count(a) + 2 * d
}

fn light_validate(config: &ModelConfig, t: usize, n: usize, d: usize) -> Result<(), ModelError> {
    if t == 0 || n == 0 || d == 0 {
        return Err(ModelError::InvalidConfig(format!(
            "dims must be positive, got T={t} N={n} D={d}"
        )));
    }
    if config.method != Method::Mlp && config.variant != MlpVariant::Full {
        return Err(ModelError::InvalidConfig(
            "variant flags apply only to the mlp method".into(),
        ));
    }
    Ok(())
}

/// Closed-form parameter and MAC counts of the relation trunk at
/// evaluation dims `(t, n, d)`. Unlike model construction, `blocks = 0`
/// is legal here and yields an empty (all-zero) report.
pub fn count_costs(
    config: &ModelConfig,
    t: usize,
    n: usize,
    d: usize,
) -> Result<CostReport, ModelError> {
    light_validate(config, t, n, d)?;
    let (tu, nu, du) = (t as u64, n as u64, d as u64);
    let tokens = tu * nu;

    let paths: &[&str] = match config.path_mode {
        PathMode::Dual => &["st", "ts"],
        PathMode::SingleSt => &["st"],
        PathMode::SingleTs => &["ts"],
    };

    let mut rows = Vec::new();
    for path in paths {
        for i in 0..config.blocks {
            for (slot, axis_len, slot_macs) in [
                ("spatial", nu, 2 * nu * nu * (tu * du)),
                ("temporal", tu, 2 * tu * tu * (nu * du)),
            ] {
                match config.method {
                    Method::Mlp => {
                        let (mix_len, mix_macs) = match config.variant {
                            MlpVariant::RefinerOnly => (du, 2 * du * du * tokens),
                            _ => (axis_len, slot_macs),
                        };
                        rows.push(CostRow {
                            name: format!("{path}.{slot}{i}.mix"),
                            params: mlp_block_param_count(mix_len, du),
                            macs: mix_macs,
                        });
                        if config.variant == MlpVariant::Full {
                            rows.push(CostRow {
                                name: format!("{path}.{slot}{i}.refine"),
                                params: mlp_block_param_count(du, du),
                                macs: 2 * du * du * tokens,
                            });
                        }
                    }
                    Method::Gcn => {
                        rows.push(CostRow {
                            name: format!("{path}.{slot}{i}"),
                            params: 3 * du * du,
                            macs: 3 * du * du * tokens,
                        });
                    }
                    Method::Transformer => {
                        // Weight transforms plus the QKᵀ/AV score products
                        // over this slot's token groups.
                        let score_macs = match slot {
                            "spatial" => 2 * tu * nu * nu * du,
                            _ => 2 * nu * tu * tu * du,
                        };
                        rows.push(CostRow {
                            name: format!("{path}.{slot}{i}"),
                            params: 6 * du * du,
                            macs: 6 * du * du * tokens + score_macs,
                        });
                    }
                }
            }
        }
    }

    let mut assumptions = vec![
        "one MAC = one fused multiply-add (the FLOP unit of every count)".to_string(),
        format!("evaluation dims T={t}, N={n}, D={d}; tokens = T*N positions"),
        format!("actor count N={n} is an assumed fixed roster size, not a measured quantity"),
        "LayerNorm, GeLU, softmax, and bias additions excluded from MACs".to_string(),
        "classifier heads and the scene branch excluded (relation trunk only)".to_string(),
    ];
    match config.method {
        Method::Gcn => assumptions.push(
            "GCN adjacency construction and application MACs excluded".to_string(),
        ),
        Method::Transformer => assumptions.push(
            "attention score MACs (QK^T, AV) included; their published counting convention is approximate"
                .to_string(),
        ),
        Method::Mlp => {}
    }

    Ok(CostReport {
        method: config.method,
        blocks: config.blocks,
        dims: (t, n, d),
        rows,
        assumptions,
    })
}

/// Parameter-count report at the config's own dims.
pub fn count_params(config: &ModelConfig) -> Result<CostReport, ModelError> {
    count_costs(config, config.t, config.n, config.d)
}

/// MAC-count report at explicit evaluation dims.
pub fn count_macs(
    config: &ModelConfig,
    t: usize,
    n: usize,
    d: usize,
) -> Result<CostReport, ModelError> {
    count_costs(config, t, n, d)
}

/// One line of the method-comparison table.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub method: Method,
    pub blocks: usize,
    pub params: u64,
    pub macs: u64,
    pub latency_us: Option<f64>,
}

/// Analytic comparison of methods across block counts at fixed dims.
/// Latency stays empty; [`measure_forward_latency`] fills it in.
pub fn emit_comparison(
    methods: &[Method],
    block_counts: &[usize],
    t: usize,
    n: usize,
    d: usize,
) -> Result<Vec<ComparisonRow>, ModelError> {
    if methods.is_empty() {
        return Err(ModelError::InvalidConfig(
            "comparison needs at least one method".into(),
        ));
    }
    let mut rows = Vec::new();
    for &method in methods {
        for &blocks in block_counts {
            let config = ModelConfig {
                blocks,
                ..ModelConfig::new(method, t, n, d)
            };
            let report = count_costs(&config, t, n, d)?;
            rows.push(ComparisonRow {
                method,
                blocks,
                params: report.total_params(),
                macs: report.total_macs(),
                latency_us: None,
            });
        }
    }
    Ok(rows)
}

/// CSV rendering: exact integer params/MACs, latency in microseconds when
/// measured.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("method,blocks,params,macs,latency_us\n");
    for r in rows {
        let latency = r
            .latency_us
            .map(|v| format!("{v:.3}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{latency}\n",
            r.method.as_str(),
            r.blocks,
            r.params,
            r.macs
        ));
    }
    out
}

/// Human-readable rendering of the same table.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut out = format!(
        "{:<12} {:>6} {:>12} {:>14} {:>12}\n",
        "method", "blocks", "params", "macs", "latency_us"
    );
    for r in rows {
        let latency = r
            .latency_us
            .map(|v| format!("{v:.1}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<12} {:>6} {:>12} {:>14} {:>12}\n",
            r.method.as_str(),
            r.blocks,
            r.params,
            r.macs,
            latency
        ));
    }
    out
}

/// Median eval-mode forward latency in microseconds over `iters` timed
/// runs after `warmup` untimed ones, on a single seeded episode.
pub fn measure_forward_latency(
    model: &Model,
    iters: usize,
    warmup: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    let cfg = &model.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::uniform(&[cfg.t, cfg.n, cfg.d], 1.0, &mut rng);
    let scene = cfg.scene_dim.map(|ds| Tensor::uniform(&[ds], 1.0, &mut rng));

    let mut run = || -> Result<f64, ModelError> {
        let mut drop_rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = FwdCtx::new(Mode::Eval, &mut drop_rng);
        let xi = ctx.graph.leaf(x.clone(), false);
        let si = scene.as_ref().map(|s| ctx.graph.leaf(s.clone(), false));
        let start = Instant::now();
        let out = model.forward(&mut ctx, xi, si)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e6;
        std::hint::black_box(ctx.graph.value(out.fused_group).data());
        Ok(elapsed)
    };

    for _ in 0..warmup {
        run()?;
    }
    let mut samples = Vec::with_capacity(iters.max(1));
    for _ in 0..iters.max(1) {
        samples.push(run()?);
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(samples[samples.len() / 2])
}
