//! Training and evaluation: the joint group/individual loss, the epoch
//! loop with warmup + cosine learning rates and AdamW, metric computation,
//! and group-embedding export.

mod adamw;
mod metrics;
mod schedule;

pub use adamw::AdamW;
pub use metrics::MetricReport;
pub use schedule::{lr_at, LrSchedule};

use crate::data::Episode;
use crate::error::{ModelError, TrainError};
use crate::model::{FwdCtx, Model, ModelConfig, ModelOutput, build_unified_model};
use crate::tensor::{Graph, Mode, Tensor, VarId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashMap;

/// Optimization hyperparameters and protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            warmup_epochs: 30,
            base_lr: 0.0002,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("need at least 1 epoch".into());
        }
        if self.warmup_epochs > self.epochs {
            return bad(format!(
                "warmup ({}) exceeds total epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if self.base_lr <= 0.0 {
            return bad(format!("base learning rate must be positive, got {}", self.base_lr));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base_lr: self.base_lr,
            warmup_epochs: self.warmup_epochs,
            total_epochs: self.epochs,
        }
    }
}

/// Per-epoch record of the training history.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub test_mca: f64,
    pub test_mpca: f64,
    pub st_mca: Option<f64>,
    pub ts_mca: Option<f64>,
    pub indiv_mca: f64,
}

/// Outcome of a training run: final and best-by-MCA weights, the optimizer,
/// and the full metric history.
pub struct TrainState {
    pub model: Model,
    pub best: Model,
    pub best_epoch: usize,
    pub best_mca: f64,
    pub best_report: MetricReport,
    pub history: Vec<EpochStats>,
    pub optimizer: AdamW,
}

/// Joint classification loss: cross-entropy of the fused group logits plus
/// `lambda` times the cross-entropy of the mean individual logits.
/// `y_indiv` is row-major `[B·N]`. With `lambda = 0` the individual term is
/// scaled to exactly zero, so its gradients vanish identically.
pub fn joint_loss(
    g: &mut Graph,
    out: &ModelOutput,
    y_group: &[usize],
    y_indiv: &[usize],
    lambda: f64,
) -> Result<VarId, TrainError> {
    let group_ce = g.softmax_cross_entropy(out.fused_group, y_group)?;
    let indiv = out.indiv_logits();
    debug_assert!(!indiv.is_empty());
    let mut acc = indiv[0];
    for &v in &indiv[1..] {
        acc = g.add(acc, v)?;
    }
    let mean = g.scale(acc, 1.0 / indiv.len() as f64)?;
    let sh = g.shape(mean).to_vec(); // [B, N, C_a]
    let flat = g.reshape(mean, &[sh[0] * sh[1], sh[2]])?;
    let indiv_ce = g.softmax_cross_entropy(flat, y_indiv)?;
    let weighted = g.scale(indiv_ce, lambda)?;
    Ok(g.add(group_ce, weighted)?)
}

/// Stack episode features into a `[B,T,N,D]` batch tensor.
pub fn batch_features(episodes: &[Episode]) -> Tensor {
    let sh = episodes[0].features.shape();
    let (t, n, d) = (sh[0], sh[1], sh[2]);
    let mut data = Vec::with_capacity(episodes.len() * t * n * d);
    for e in episodes {
        data.extend_from_slice(e.features.data());
    }
    Tensor::new(vec![episodes.len(), t, n, d], data).expect("episode shapes must agree")
}

fn batch_scene(episodes: &[Episode]) -> Result<Tensor, TrainError> {
    let ds = episodes[0]
        .scene
        .as_ref()
        .ok_or_else(|| TrainError::InvalidConfig("dataset carries no scene features".into()))?
        .len();
    let mut data = Vec::with_capacity(episodes.len() * ds);
    for e in episodes {
        let s = e
            .scene
            .as_ref()
            .ok_or_else(|| TrainError::InvalidConfig("episode without scene features".into()))?;
        data.extend_from_slice(s);
    }
    Ok(Tensor::new(vec![episodes.len(), ds], data).expect("scene widths must agree"))
}

fn batch_labels(episodes: &[Episode]) -> (Vec<usize>, Vec<usize>) {
    let groups = episodes.iter().map(|e| e.group).collect();
    let actions = episodes
        .iter()
        .flat_map(|e| e.actions.iter().copied())
        .collect();
    (groups, actions)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// One eval-mode forward over a batch of episodes.
fn forward_batch<'a>(
    model: &Model,
    episodes: &[Episode],
    mode: Mode,
    rng: &'a mut ChaCha8Rng,
) -> Result<(FwdCtx<'a>, ModelOutput), TrainError> {
    let mut ctx = FwdCtx::new(mode, rng);
    let x = ctx.graph.leaf(batch_features(episodes), false);
    let scene = if model.scene.is_some() {
        Some(ctx.graph.leaf(batch_scene(episodes)?, false))
    } else {
        None
    };
    let out = model.forward(&mut ctx, x, scene)?;
    Ok((ctx, out))
}

/// Evaluate fused and per-path predictions; deterministic in eval mode.
pub fn evaluate(
    model: &Model,
    episodes: &[Episode],
    batch_size: usize,
) -> Result<MetricReport, TrainError> {
    if episodes.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let classes = model.config.c_group;
    let mut report = MetricReport::new(classes);
    if model.st.is_some() {
        report.st_correct = Some(0);
    }
    if model.ts.is_some() {
        report.ts_correct = Some(0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0); // unused in eval mode

    for chunk in episodes.chunks(batch_size.max(1)) {
        let (ctx, out) = forward_batch(model, chunk, Mode::Eval, &mut rng)?;
        let fused = ctx.graph.value(out.fused_group);
        let st = out.group_st.map(|id| ctx.graph.value(id));
        let ts = out.group_ts.map(|id| ctx.graph.value(id));

        for (b, e) in chunk.iter().enumerate() {
            let pred = argmax(&fused.data()[b * classes..(b + 1) * classes]);
            report.confusion[e.group][pred] += 1;
            report.total += 1;
            if pred == e.group {
                report.correct += 1;
            }
            if let (Some(t), Some(c)) = (st, report.st_correct.as_mut()) {
                if argmax(&t.data()[b * classes..(b + 1) * classes]) == e.group {
                    *c += 1;
                }
            }
            if let (Some(t), Some(c)) = (ts, report.ts_correct.as_mut()) {
                if argmax(&t.data()[b * classes..(b + 1) * classes]) == e.group {
                    *c += 1;
                }
            }
        }

        // Individual actions from the mean of the available path logits.
        let indiv_ids = out.indiv_logits();
        let ca = model.config.c_action;
        let n = model.config.n;
        let mut mean = vec![0.0; chunk.len() * n * ca];
        for id in &indiv_ids {
            for (acc, v) in mean.iter_mut().zip(ctx.graph.value(*id).data()) {
                *acc += v / indiv_ids.len() as f64;
            }
        }
        for (b, e) in chunk.iter().enumerate() {
            for (a, &label) in e.actions.iter().enumerate() {
                let row = &mean[(b * n + a) * ca..(b * n + a + 1) * ca];
                report.indiv_total += 1;
                if argmax(row) == label {
                    report.indiv_correct += 1;
                }
            }
        }
    }
    Ok(report)
}

/// Train to completion: seeded shuffling, AdamW with the warmup/cosine
/// schedule, per-epoch evaluation, best-by-MCA checkpointing. Aborts with
/// the epoch index if the loss turns non-finite.
pub fn fit(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    train_episodes: &[Episode],
    eval_episodes: &[Episode],
) -> Result<TrainState, TrainError> {
    train_config.validate()?;
    if train_episodes.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let eval_set = if eval_episodes.is_empty() {
        train_episodes
    } else {
        eval_episodes
    };

    let mut model = build_unified_model(model_config)?;
    let mut optimizer = AdamW::new(
        train_config.beta1,
        train_config.beta2,
        train_config.eps,
        train_config.weight_decay,
    );
    let schedule = train_config.schedule();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(train_config.seed.wrapping_add(0x5348_5546));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(train_config.seed.wrapping_add(0x44_524f50));

    let mut history = Vec::with_capacity(train_config.epochs);
    let mut best: Option<(usize, f64, Model, MetricReport)> = None;
    let mut order: Vec<usize> = (0..train_episodes.len()).collect();

    for epoch in 0..train_config.epochs {
        let lr = lr_at(epoch, &schedule)?;
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut batch: Vec<Episode> = Vec::with_capacity(train_config.batch_size);
        for (bi, chunk) in order.chunks(train_config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_episodes[i].clone()));
            let loss = train_step(&mut model, &mut optimizer, &batch, lr, &mut dropout_rng)
                .map_err(|e| match e {
                    TrainError::Tensor(crate::error::TensorError::NonFinite { .. }) => {
                        TrainError::Diverged { epoch }
                    }
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            loss_sum += loss;
            batches = bi + 1;
        }

        let report =
            evaluate(&model, eval_set, train_config.batch_size).map_err(|e| match e {
                TrainError::Tensor(crate::error::TensorError::NonFinite { .. })
                | TrainError::Model(ModelError::Tensor(
                    crate::error::TensorError::NonFinite { .. },
                )) => TrainError::Diverged { epoch },
                other => other,
            })?;
        let mca = report.mca();
        history.push(EpochStats {
            epoch,
            lr,
            train_loss: loss_sum / batches as f64,
            test_mca: mca,
            test_mpca: report.mpca(),
            st_mca: report.st_mca(),
            ts_mca: report.ts_mca(),
            indiv_mca: report.indiv_mca(),
        });
        let better = best.as_ref().map_or(true, |(_, m, _, _)| mca > *m);
        if better {
            best = Some((epoch, mca, model.clone(), report));
        }
    }

    let (best_epoch, best_mca, best_model, best_report) = best.expect("at least one epoch ran");
    Ok(TrainState {
        model,
        best: best_model,
        best_epoch,
        best_mca,
        best_report,
        history,
        optimizer,
    })
}

fn train_step(
    model: &mut Model,
    optimizer: &mut AdamW,
    batch: &[Episode],
    lr: f64,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<f64, TrainError> {
    let (y_group, y_indiv) = batch_labels(batch);
    let (mut ctx, out) = forward_batch(model, batch, Mode::Train, dropout_rng)?;
    let loss = joint_loss(&mut ctx.graph, &out, &y_group, &y_indiv, model.config.lambda)?;
    let loss_val = ctx.graph.value(loss).data()[0];
    ctx.graph.backward(loss)?;

    let mut grads: HashMap<String, Vec<f64>> = HashMap::with_capacity(ctx.binds().len());
    for (name, grad) in ctx.param_grads() {
        if let Some(g) = grad {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TrainError::NonFiniteGradient { name: name.into() });
            }
            grads.insert(name.to_string(), g.to_vec());
        }
    }
    drop(ctx);

    optimizer.begin_step();
    let mut err: Option<TrainError> = None;
    model.visit_params_mut(&mut |name, t| {
        if err.is_some() {
            return;
        }
        if let Err(e) = optimizer.update(name, t, grads.get(name).map(|v| v.as_slice()), lr) {
            err = Some(e);
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(loss_val),
    }
}

/// Which path's group embedding to export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingPath {
    St,
    Ts,
}

/// One row per episode: the pooled group embedding plus the group label.
pub fn export_embeddings(
    model: &Model,
    episodes: &[Episode],
    which: EmbeddingPath,
    batch_size: usize,
) -> Result<Vec<(Vec<f64>, usize)>, TrainError> {
    if episodes.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let present = match which {
        EmbeddingPath::St => model.st.is_some(),
        EmbeddingPath::Ts => model.ts.is_some(),
    };
    if !present {
        return Err(TrainError::Model(ModelError::InvalidConfig(format!(
            "model has no {} path to export embeddings from",
            match which {
                EmbeddingPath::St => "st",
                EmbeddingPath::Ts => "ts",
            }
        ))));
    }
    let d = model.config.d;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut rows = Vec::with_capacity(episodes.len());
    for chunk in episodes.chunks(batch_size.max(1)) {
        let (ctx, out) = forward_batch(model, chunk, Mode::Eval, &mut rng)?;
        let emb_id = match which {
            EmbeddingPath::St => out.embedding_st,
            EmbeddingPath::Ts => out.embedding_ts,
        }
        .expect("path presence checked above");
        let emb = ctx.graph.value(emb_id);
        for (b, e) in chunk.iter().enumerate() {
            rows.push((emb.data()[b * d..(b + 1) * d].to_vec(), e.group));
        }
    }
    Ok(rows)
}
