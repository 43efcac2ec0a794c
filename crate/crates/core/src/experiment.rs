//! End-to-end runs: split, train, evaluate; ablations and parameter sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{batch_objective, AblationMode, LossSelection, ObjectiveConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate_link_prediction, EvalConfig, EvalReport};
use crate::global::GlobalState;
use crate::gradcheck::{finite_difference_check, GradCheckConfig, GradReport};
use crate::graph::{chronological_split, TemporalGraph};
use crate::graph::{make_batches, HistoryIndex};
use crate::objective::NegativeSampler;
use crate::params::ModelParams;
use crate::train::{train_from, EpochSummary, RunConfig, TrainOutput};

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub training: TrainOutput,
}

/// Chronological split, training on the head, evaluation on the tail.
pub fn run_pipeline(
    cfg: &RunConfig,
    eval: &EvalConfig,
    g: &TemporalGraph,
    progress: &mut dyn FnMut(&EpochSummary),
) -> Result<RunOutcome> {
    cfg.validate()?;
    let (train_g, test) = chronological_split(g, cfg.train_frac)?;
    let training = train_from(cfg, &train_g, None, progress)?;
    let report = evaluate_link_prediction(
        &training.params,
        &training.global,
        &train_g,
        &test,
        cfg.seq_len,
        cfg.objective.mode,
        cfg.objective.activation,
        eval,
        cfg.seed,
    )?;
    Ok(RunOutcome { report, training })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub acc_mean: f64,
    pub acc_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub runs: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

impl MetricSummary {
    pub fn from_reports(reports: &[EvalReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::Empty("no reports to summarize".into()));
        }
        let (acc_mean, acc_std) = mean_std(&reports.iter().map(|r| r.accuracy).collect::<Vec<_>>());
        let (f1_mean, f1_std) = mean_std(&reports.iter().map(|r| r.f1).collect::<Vec<_>>());
        Ok(Self {
            acc_mean,
            acc_std,
            f1_mean,
            f1_std,
            runs: reports.len(),
        })
    }
}

/// Repeats the pipeline over `seeds`.
pub fn run_seeds(
    cfg: &RunConfig,
    eval: &EvalConfig,
    g: &TemporalGraph,
    seeds: &[u64],
) -> Result<(MetricSummary, Vec<RunOutcome>)> {
    let outcomes = seeds
        .iter()
        .map(|&seed| run_pipeline(&RunConfig { seed, ..*cfg }, eval, g, &mut |_| {}))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<EvalReport> = outcomes.iter().map(|o| o.report).collect();
    Ok((MetricSummary::from_reports(&reports)?, outcomes))
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub summary: MetricSummary,
    pub reports: Vec<EvalReport>,
    /// Per seed, the mean total loss of every epoch.
    pub epoch_losses: Vec<Vec<f64>>,
}

/// All five arms with the same seeds and split.
pub fn run_ablation(
    base: &RunConfig,
    eval: &EvalConfig,
    g: &TemporalGraph,
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    AblationMode::ALL
        .iter()
        .map(|&mode| {
            let mut cfg = *base;
            cfg.objective.mode = mode;
            let (summary, outcomes) = run_seeds(&cfg, eval, g, seeds)?;
            Ok(AblationRow {
                mode,
                summary,
                reports: outcomes.iter().map(|o| o.report).collect(),
                epoch_losses: outcomes
                    .iter()
                    .map(|o| o.training.epochs.iter().map(|e| e.mean.total).collect())
                    .collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Neighbor sequence length.
    S,
    /// Negatives per positive.
    Q,
}

impl SweepParam {
    pub fn default_values(self) -> Vec<usize> {
        match self {
            SweepParam::S => vec![5, 10, 15, 20, 25],
            SweepParam::Q => vec![1, 2, 3, 4, 5],
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(SweepParam::S),
            "Q" | "q" => Ok(SweepParam::Q),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sweep parameter {s:?} (use S or Q)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: usize,
    pub summary: MetricSummary,
}

pub fn sweep(
    base: &RunConfig,
    eval: &EvalConfig,
    g: &TemporalGraph,
    param: SweepParam,
    values: &[usize],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&value| {
            let mut cfg = *base;
            match param {
                SweepParam::S => cfg.seq_len = value,
                SweepParam::Q => cfg.negatives = value,
            }
            let (summary, _) = run_seeds(&cfg, eval, g, seeds)?;
            Ok(SweepRow { value, summary })
        })
        .collect()
}

pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!("{:<12} {:>16} {:>16}\n", "mode", "ACC", "F1");
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:>7.2} ± {:<6.2} {:>7.2} ± {:<6.2}\n",
            r.mode.label(),
            100.0 * r.summary.acc_mean,
            100.0 * r.summary.acc_std,
            100.0 * r.summary.f1_mean,
            100.0 * r.summary.f1_std
        ));
    }
    s
}

pub fn format_sweep_table(param: SweepParam, rows: &[SweepRow]) -> String {
    let name = match param {
        SweepParam::S => "S",
        SweepParam::Q => "Q",
    };
    let mut s = format!("{:<6} {:>16} {:>16}\n", name, "ACC", "F1");
    for r in rows {
        s.push_str(&format!(
            "{:<6} {:>7.2} ± {:<6.2} {:>7.2} ± {:<6.2}\n",
            r.value,
            100.0 * r.summary.acc_mean,
            100.0 * r.summary.acc_std,
            100.0 * r.summary.f1_mean,
            100.0 * r.summary.f1_std
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSetup {
    pub dim: usize,
    pub seq_len: usize,
    pub layers: usize,
    pub batches: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub seed: u64,
    pub objective: ObjectiveConfig,
}

impl Default for GradCheckSetup {
    fn default() -> Self {
        Self {
            dim: 8,
            seq_len: 4,
            layers: 2,
            batches: 3,
            batch_size: 4,
            negatives: 1,
            seed: 0,
            objective: ObjectiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckResult {
    pub term: &'static str,
    pub batch: usize,
    pub report: GradReport,
}

/// Finite-difference check of every loss term on frozen batches drawn from
/// the late part of `g` (so that neighbor histories are populated), with a
/// non-zero starting `z_g`.
pub fn gradient_check(
    setup: &GradCheckSetup,
    g: &TemporalGraph,
    check: GradCheckConfig,
) -> Result<Vec<GradCheckResult>> {
    let history = HistoryIndex::build(g, setup.seq_len);
    let all = make_batches(g, setup.batch_size)?;
    let full: Vec<_> = all
        .into_iter()
        .filter(|b| b.len() == setup.batch_size)
        .collect();
    if full.len() < setup.batches {
        return Err(Error::InvalidArgument(
            "graph too small for the requested batches".into(),
        ));
    }
    let batches = &full[full.len() - setup.batches..];
    let mut sampler = NegativeSampler::new(&g.degrees(), 0.75, setup.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed ^ 0x67c);
    let mut params = ModelParams::init(
        g.num_nodes,
        g.features.clone(),
        setup.dim,
        setup.layers,
        setup.objective.learn_etas,
        setup.seed,
    )?;
    // move away from the symmetric initial values
    for v in params
        .theta_l
        .iter_mut()
        .chain(params.b_alpha.iter_mut())
        .chain(params.b_beta.iter_mut())
    {
        *v += rng.gen_range(-0.3..0.3);
    }
    params.delta_t = rng.gen_range(0.5..2.0);
    params.theta_d = rng.gen_range(0.05..0.3);
    let z_g = GlobalState {
        z_g: (0..setup.dim).map(|_| rng.gen_range(-0.2..0.2)).collect(),
    };
    let mut out = Vec::new();
    for (bi, batch) in batches.iter().enumerate() {
        let negatives = batch
            .pairs
            .iter()
            .map(|p| sampler.sample_negatives(p.src, p.dst, setup.negatives))
            .collect::<Result<Vec<_>>>()?;
        for (term, sel) in [
            ("task", LossSelection::Task),
            ("align", LossSelection::Align),
            ("global", LossSelection::Global),
            ("total", LossSelection::Total),
        ] {
            let res = batch_objective(
                &params,
                &history,
                batch,
                &negatives,
                &z_g,
                &setup.objective,
                sel,
                true,
            )?;
            let grads = res.grads.expect("gradients were requested");
            let mut failed = None;
            let report = finite_difference_check(
                |p: &ModelParams| match batch_objective(
                    p,
                    &history,
                    batch,
                    &negatives,
                    &z_g,
                    &setup.objective,
                    sel,
                    false,
                ) {
                    Ok(r) => r.loss.total,
                    Err(e) => {
                        failed = Some(e);
                        f64::NAN
                    }
                },
                &params,
                &grads,
                check,
            );
            if let Some(e) = failed {
                return Err(e);
            }
            out.push(GradCheckResult {
                term,
                batch: bi,
                report,
            });
        }
    }
    Ok(out)
}
