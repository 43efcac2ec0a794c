//! The training loop: chronological batches, one Adam step per batch.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::adam::{adam_step, AdamConfig, OptimizerState};
use crate::engine::{batch_objective, LossSelection, ObjectiveConfig};
use crate::error::{Error, Result};
use crate::global::GlobalState;
use crate::graph::{make_batches, HistoryIndex, TemporalGraph};
use crate::objective::{LossBreakdown, NegativeSampler};
use crate::params::ModelParams;

/// When `z_g` returns to the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlobalReset {
    /// Each epoch replays the stream from its first interaction, so the
    /// global state restarts empty alongside the neighbor sequences.
    #[default]
    Epoch,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dim: usize,
    pub batch_size: usize,
    /// Negatives per positive pair (Q).
    pub negatives: usize,
    /// Neighbor sequence length (S).
    pub seq_len: usize,
    pub layers: usize,
    pub lr: f64,
    pub epochs: usize,
    pub train_frac: f64,
    pub seed: u64,
    /// Exponent on degree for negative sampling.
    pub neg_power: f64,
    /// Relative change of the epoch-mean total loss below which training stops.
    pub early_stop_tol: f64,
    pub global_reset: GlobalReset,
    pub objective: ObjectiveConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            batch_size: 128,
            negatives: 1,
            seq_len: 10,
            layers: 2,
            lr: 0.001,
            epochs: 50,
            train_frac: 0.8,
            seed: 0,
            neg_power: 0.75,
            early_stop_tol: 1e-4,
            global_reset: GlobalReset::Epoch,
            objective: ObjectiveConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dim", self.dim),
            ("batch_size", self.batch_size),
            ("negatives", self.negatives),
            ("seq_len", self.seq_len),
            ("layers", self.layers),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction {} must lie in (0, 1)",
                self.train_frac
            )));
        }
        if !self.neg_power.is_finite() || self.early_stop_tol < 0.0 {
            return Err(Error::InvalidArgument(
                "bad negative power or early-stop tolerance".into(),
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean: LossBreakdown,
    pub batches: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    /// State at the end of the last epoch.
    pub global: GlobalState,
    pub trace: Vec<LossRecord>,
    pub epochs: Vec<EpochSummary>,
    pub stopped_early: bool,
}

/// Everything needed to resume training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub global: GlobalState,
}

pub fn init_state(cfg: &RunConfig, g: &TemporalGraph) -> Result<TrainState> {
    let params = ModelParams::init(
        g.num_nodes,
        g.features.clone(),
        cfg.dim,
        cfg.layers,
        cfg.objective.learn_etas,
        cfg.seed,
    )?;
    let optimizer = OptimizerState::new(&params, cfg.adam());
    Ok(TrainState {
        global: GlobalState::new(cfg.dim),
        params,
        optimizer,
    })
}

pub fn train(cfg: &RunConfig, g: &TemporalGraph) -> Result<TrainOutput> {
    train_from(cfg, g, None, &mut |_| {})
}

/// Runs training on `g` (the training stream), starting from `resume` when
/// given. `progress` is called after every epoch.
pub fn train_from(
    cfg: &RunConfig,
    g: &TemporalGraph,
    resume: Option<TrainState>,
    progress: &mut dyn FnMut(&EpochSummary),
) -> Result<TrainOutput> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(Error::Empty("training stream has no interactions".into()));
    }
    let TrainState {
        mut params,
        mut optimizer,
        mut global,
    } = match resume {
        Some(s) => s,
        None => init_state(cfg, g)?,
    };
    if params.dim != cfg.dim || params.num_nodes < g.num_nodes || params.layers() != cfg.layers {
        return Err(Error::InvalidArgument(
            "resumed parameters do not match the run configuration".into(),
        ));
    }
    let history = HistoryIndex::build(g, cfg.seq_len);
    let batches = make_batches(g, cfg.batch_size)?;
    let mut sampler = NegativeSampler::new(
        &g.degrees(),
        cfg.neg_power,
        cfg.seed ^ 0x6e65_6761_7469_7665,
    )?;
    let mut trace = Vec::new();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut prev_mean: Option<f64> = None;

    for epoch in 0..cfg.epochs {
        let started = std::time::Instant::now();
        if cfg.global_reset == GlobalReset::Epoch {
            global = GlobalState::new(cfg.dim);
        }
        let mut sum = LossBreakdown::default();
        for batch in &batches {
            let negatives = batch
                .pairs
                .iter()
                .map(|p| sampler.sample_negatives(p.src, p.dst, cfg.negatives))
                .collect::<Result<Vec<_>>>()?;
            let res = batch_objective(
                &params,
                &history,
                batch,
                &negatives,
                &global,
                &cfg.objective,
                LossSelection::Total,
                true,
            )?;
            let loss = res.loss;
            if ![loss.task, loss.align, loss.global, loss.total]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(non_finite(epoch, batch, &negatives, &loss, &global));
            }
            let mut grads = res.grads.expect("gradients were requested");
            if !cfg.objective.learn_etas {
                grads.eta = [0.0, 0.0];
            }
            adam_step(&mut params, &grads, &mut optimizer).map_err(|e| Error::NonFiniteLoss {
                epoch,
                batch: batch.index,
                dump: format!("optimizer step failed: {e}"),
            })?;
            global = res.global_after;
            trace.push(LossRecord {
                epoch,
                batch: batch.index,
                loss,
            });
            sum.task += loss.task;
            sum.align += loss.align;
            sum.global += loss.global;
            sum.total += loss.total;
            sum.eta1 = loss.eta1;
            sum.eta2 = loss.eta2;
        }
        let n = batches.len() as f64;
        let mean = LossBreakdown {
            task: sum.task / n,
            align: sum.align / n,
            global: sum.global / n,
            total: sum.total / n,
            ..sum
        };
        let summary = EpochSummary {
            epoch,
            mean,
            batches: batches.len(),
            seconds: started.elapsed().as_secs_f64(),
        };
        progress(&summary);
        epochs.push(summary);
        if let Some(prev) = prev_mean {
            let rel = (mean.total - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rel < cfg.early_stop_tol {
                stopped_early = true;
                break;
            }
        }
        prev_mean = Some(mean.total);
    }

    Ok(TrainOutput {
        params,
        optimizer,
        global,
        trace,
        epochs,
        stopped_early,
    })
}

fn non_finite(
    epoch: usize,
    batch: &crate::graph::Batch,
    negatives: &[Vec<usize>],
    loss: &LossBreakdown,
    global: &GlobalState,
) -> Error {
    let dump = serde_json::json!({
        "start_event": batch.start_event,
        "pairs": batch.pairs.iter().map(|p| (p.src, p.dst, p.time)).collect::<Vec<_>>(),
        "negatives": negatives,
        "loss": loss,
        "z_g_norm": global.z_g.iter().map(|v| v * v).sum::<f64>().sqrt(),
    });
    Error::NonFiniteLoss {
        epoch,
        batch: batch.index,
        dump: dump.to_string(),
    }
}

pub fn write_loss_csv<W: Write>(mut w: W, trace: &[LossRecord]) -> Result<()> {
    writeln!(w, "epoch,batch,task,align,global,total")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.epoch, r.batch, r.loss.task, r.loss.align, r.loss.global, r.loss.total
        )?;
    }
    Ok(())
}

/// Per-epoch mean total loss, smoothed with a trailing window.
pub fn smoothed_epoch_totals(epochs: &[EpochSummary], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..epochs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let s = &epochs[lo..=i];
            s.iter().map(|e| e.mean.total).sum::<f64>() / s.len() as f64
        })
        .collect()
}
