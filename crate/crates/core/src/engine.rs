//! Batch objective with hand-written reverse pass.
//!
//! Per pair, in stream order: GNN representations of both endpoints and the
//! negatives, global update by the two endpoints, node enhancement, FiLM,
//! structural intensities, temporal intensity, losses. `z_g` at batch start
//! is a constant; updates made inside the batch are differentiated through
//! unless the batch freezes the global state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global::{film_backward, film_modulation, FilmOutput, GlobalState};
use crate::graph::{Batch, HistoryIndex, NodeId};
use crate::linalg::{axpy, dot, sigmoid};
use crate::objective::{
    alignment_grad, alignment_loss, global_first_grad, global_loss, task_neg_grad, task_pos_grad,
    task_terms, GlobalLossForm, LossBreakdown, NegForm, Reduction,
};
use crate::params::ModelParams;
use crate::structural::{local_intensity, Activation, RepGraph};
use crate::temporal::{temporal_backward, temporal_forward, IntensityVector, TemporalTrace};

/// The five module combinations compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Hawkes,
    Gnn,
    GnnGlobal,
    GnnHawkes,
    #[default]
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 5] = [
        AblationMode::Hawkes,
        AblationMode::Gnn,
        AblationMode::GnnGlobal,
        AblationMode::GnnHawkes,
        AblationMode::Full,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationMode::Hawkes => "hawkes",
            AblationMode::Gnn => "gnn",
            AblationMode::GnnGlobal => "gnn_global",
            AblationMode::GnnHawkes => "gnn_hawkes",
            AblationMode::Full => "full",
        }
    }

    pub fn uses_gnn(self) -> bool {
        self != AblationMode::Hawkes
    }

    /// Global representation, node enhancement, FiLM and the global loss.
    pub fn uses_global(self) -> bool {
        matches!(self, AblationMode::GnnGlobal | AblationMode::Full)
    }

    pub fn uses_alignment(self) -> bool {
        matches!(self, AblationMode::GnnHawkes | AblationMode::Full)
    }

    fn needs_temporal(self) -> bool {
        matches!(
            self,
            AblationMode::Hawkes | AblationMode::GnnHawkes | AblationMode::Full
        )
    }
}

impl std::str::FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ablation mode {s:?}")))
    }
}

/// Restricts the differentiated objective to one term (gradient checks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossSelection {
    #[default]
    Total,
    Task,
    Align,
    Global,
}

impl LossSelection {
    fn scales(self) -> [f64; 3] {
        match self {
            LossSelection::Total => [1.0, 1.0, 1.0],
            LossSelection::Task => [1.0, 0.0, 0.0],
            LossSelection::Align => [0.0, 1.0, 0.0],
            LossSelection::Global => [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub mode: AblationMode,
    pub activation: Activation,
    pub neg_form: NegForm,
    pub reduction: Reduction,
    pub global_form: GlobalLossForm,
    pub learn_etas: bool,
    /// Every pair reads `z_g` as of batch start; updates land after the batch.
    pub freeze_global: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            mode: AblationMode::Full,
            activation: Activation::Sigmoid,
            neg_form: NegForm::Literal,
            reduction: Reduction::Sum,
            global_form: GlobalLossForm::Intent,
            learn_etas: false,
            freeze_global: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    /// Mean over the pairs of the batch.
    pub loss: LossBreakdown,
    pub grads: Option<ModelParams>,
    pub global_after: GlobalState,
}

/// Pipeline stage markers, recorded in order when tracing is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Gnn,
    GlobalUpdate,
    Enhance,
    Film,
    Structural,
    Temporal,
    Loss,
}

struct PairRecord {
    negs: Vec<NodeId>,
    /// Rep-graph ids of x, y and the negatives.
    rep_ids: Vec<usize>,
    /// Raw GNN outputs of x, y, negatives.
    raw: Vec<Vec<f64>>,
    /// Enhanced representations of x, y, negatives.
    enh: Vec<Vec<f64>>,
    dyns: Vec<usize>,
    z_g_used: Option<Vec<f64>>,
    /// FiLM outputs for (x,y) then (x,k) per negative.
    film: Vec<FilmOutput>,
    lam_s: Vec<IntensityVector>,
    lam_t: Vec<(IntensityVector, TemporalTrace)>,
    align: f64,
}

fn ones(d: usize) -> Vec<f64> {
    vec![1.0; d]
}

/// Evaluates the mean objective of one batch and optionally its gradient.
/// `negatives[j]` are the frozen negatives of pair `j`.
pub fn batch_objective(
    params: &ModelParams,
    history: &HistoryIndex,
    batch: &Batch,
    negatives: &[Vec<NodeId>],
    global_start: &GlobalState,
    cfg: &ObjectiveConfig,
    selection: LossSelection,
    with_grad: bool,
) -> Result<BatchResult> {
    batch_objective_traced(
        params,
        history,
        batch,
        negatives,
        global_start,
        cfg,
        selection,
        with_grad,
        None,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn batch_objective_traced(
    params: &ModelParams,
    history: &HistoryIndex,
    batch: &Batch,
    negatives: &[Vec<NodeId>],
    global_start: &GlobalState,
    cfg: &ObjectiveConfig,
    selection: LossSelection,
    with_grad: bool,
    mut trace: Option<&mut Vec<Stage>>,
) -> Result<BatchResult> {
    if negatives.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len(),
            got: negatives.len(),
        });
    }
    if batch.is_empty() {
        return Err(Error::Empty("batch has no pairs".into()));
    }
    let mut mark = |s: Stage| {
        if let Some(t) = trace.as_deref_mut() {
            t.push(s);
        }
    };
    let d = params.dim;
    let layers = params.layers();
    let mode = cfg.mode;
    let theta_d = params.theta_d;
    let mut graph = RepGraph::new(history, cfg.activation);
    let mut z_g = global_start.z_g.clone();
    let mut deferred = GlobalState::new(d);
    let mut records = Vec::with_capacity(batch.len());
    let (mut sum_task, mut sum_align, mut sum_global) = (0.0, 0.0, 0.0);

    for (j, pair) in batch.pairs.iter().enumerate() {
        let event = batch.start_event + j;
        let (x, y, t) = (pair.src, pair.dst, pair.time);
        let negs = negatives[j].clone();
        if negs.is_empty() {
            return Err(Error::InvalidArgument(format!("pair {j} has no negatives")));
        }
        let nodes: Vec<NodeId> = [x, y].into_iter().chain(negs.iter().copied()).collect();
        let mut rec = PairRecord {
            negs,
            rep_ids: Vec::new(),
            raw: Vec::new(),
            enh: Vec::new(),
            dyns: Vec::new(),
            z_g_used: None,
            film: Vec::new(),
            lam_s: Vec::new(),
            lam_t: Vec::new(),
            align: 0.0,
        };

        if mode.uses_gnn() {
            mark(Stage::Gnn);
            for &n in &nodes {
                let id = graph.get(params, n, event, t, layers)?;
                rec.rep_ids.push(id);
                rec.raw.push(graph.value(id).to_vec());
            }
            if mode.uses_global() {
                rec.dyns = nodes.iter().map(|&n| batch.dynamics_of(n).max(1)).collect();
                mark(Stage::GlobalUpdate);
                let target = if cfg.freeze_global {
                    &mut deferred.z_g
                } else {
                    &mut z_g
                };
                axpy(theta_d * rec.dyns[0] as f64, &rec.raw[0], target);
                axpy(theta_d * rec.dyns[1] as f64, &rec.raw[1], target);
                let used = if cfg.freeze_global {
                    global_start.z_g.clone()
                } else {
                    z_g.clone()
                };
                mark(Stage::Enhance);
                rec.enh = rec
                    .raw
                    .iter()
                    .zip(&rec.dyns)
                    .map(|(z, &dy)| {
                        let mut e = z.clone();
                        axpy(theta_d / dy as f64, &used, &mut e);
                        e
                    })
                    .collect();
                rec.z_g_used = Some(used);
                mark(Stage::Film);
                for k in 1..nodes.len() {
                    rec.film
                        .push(film_modulation(&rec.enh[0], &rec.enh[k], params)?);
                }
            } else {
                rec.enh = rec.raw.clone();
            }
            mark(Stage::Structural);
            for k in 1..nodes.len() {
                let omega = if mode.uses_global() {
                    rec.film[k - 1].omega_g.clone()
                } else {
                    ones(d)
                };
                rec.lam_s
                    .push(local_intensity(&rec.enh[0], &rec.enh[k], &omega)?);
            }
        }

        if mode.needs_temporal() {
            mark(Stage::Temporal);
            let partners: &[NodeId] = if mode == AblationMode::Hawkes {
                &nodes[1..]
            } else {
                &nodes[1..2]
            };
            let nx = history.sequence_before(x, event);
            for &k in partners {
                let nk = history.sequence_before(k, event);
                rec.lam_t
                    .push(temporal_forward(x, k, t, nx, nk, params.delta_t, |n| {
                        params.embed(n)
                    })?);
            }
        }

        mark(Stage::Loss);
        let lam_task = if mode == AblationMode::Hawkes {
            rec.lam_t.iter().map(|(l, _)| l).collect::<Vec<_>>()
        } else {
            rec.lam_s.iter().collect()
        };
        let pos = cfg.reduction.reduce(lam_task[0]);
        let neg_s: Vec<f64> = lam_task[1..]
            .iter()
            .map(|l| cfg.reduction.reduce(l))
            .collect();
        sum_task += task_terms(pos, &neg_s, cfg.neg_form);
        if mode.uses_alignment() {
            rec.align = alignment_loss(&rec.lam_t[0].0, &rec.lam_s[0])?;
            sum_align += rec.align;
        }
        if mode.uses_global() {
            sum_global += global_loss(
                &rec.enh[0],
                &rec.enh[1],
                rec.z_g_used.as_ref().expect("global mode records z_g"),
                &rec.film[0].alpha,
                &rec.film[0].beta,
                cfg.global_form,
            )?;
        }
        records.push(rec);
    }

    let b = batch.len() as f64;
    let etas = params.effective_etas(cfg.learn_etas);
    let [s_task, s_align, s_global] = selection.scales();
    let task = sum_task / b;
    let align = sum_align / b;
    let global = sum_global / b;
    let loss = LossBreakdown {
        task,
        align,
        global,
        total: s_task * task + s_align * etas[0] * align + s_global * etas[1] * global,
        eta1: etas[0],
        eta2: etas[1],
    };

    let global_after = if cfg.freeze_global {
        let mut g = global_start.z_g.clone();
        axpy(1.0, &deferred.z_g, &mut g);
        GlobalState { z_g: g }
    } else {
        GlobalState { z_g }
    };

    let grads = if with_grad {
        let w = [s_task / b, s_align * etas[0] / b, s_global * etas[1] / b];
        Some(backward(
            params,
            &mut graph,
            &records,
            cfg,
            w,
            [s_align * align, s_global * global],
        )?)
    } else {
        None
    };

    Ok(BatchResult {
        loss,
        grads,
        global_after,
    })
}

fn backward(
    params: &ModelParams,
    graph: &mut RepGraph<'_>,
    records: &[PairRecord],
    cfg: &ObjectiveConfig,
    w: [f64; 3],
    weighted_terms: [f64; 2],
) -> Result<ModelParams> {
    let d = params.dim;
    let mode = cfg.mode;
    let theta_d = params.theta_d;
    let mut grads = params.zeros_like();
    let emb = |grads: &mut ModelParams, n: NodeId, g: &[f64]| {
        params.accumulate_embedding_grad(grads, n, g)
    };
    let cw = cfg.reduction.coordinate_weight(d);
    let mut g_zg_run = vec![0.0; d];

    for rec in records.iter().rev() {
        let partners = rec.negs.len() + 1;
        // adjoints of the task intensities (structural or temporal)
        let lam_task: Vec<&IntensityVector> = if mode == AblationMode::Hawkes {
            rec.lam_t.iter().map(|(l, _)| l).collect()
        } else {
            rec.lam_s.iter().collect()
        };
        let mut g_task: Vec<f64> = Vec::with_capacity(partners);
        g_task.push(w[0] * task_pos_grad(cfg.reduction.reduce(lam_task[0])) * cw);
        for l in &lam_task[1..] {
            g_task.push(w[0] * task_neg_grad(cfg.reduction.reduce(l), cfg.neg_form) * cw);
        }

        let mut g_lam_s: Vec<Vec<f64>> =
            vec![vec![0.0; d]; if mode.uses_gnn() { partners } else { 0 }];
        let mut g_lam_t: Vec<Vec<f64>> = vec![vec![0.0; d]; rec.lam_t.len()];
        if mode == AblationMode::Hawkes {
            for (k, g) in g_task.iter().enumerate() {
                g_lam_t[k].fill(*g);
            }
        } else {
            for (k, g) in g_task.iter().enumerate() {
                g_lam_s[k].fill(*g);
            }
        }
        if mode.uses_alignment() && w[1] != 0.0 {
            let ga = alignment_grad(&rec.lam_t[0].0.vec, &rec.lam_s[0].vec);
            axpy(w[1], &ga, &mut g_lam_t[0]);
            axpy(-w[1], &ga, &mut g_lam_s[0]);
        }

        for (k, (_, tr)) in rec.lam_t.iter().enumerate() {
            if g_lam_t[k].iter().all(|&g| g == 0.0) {
                continue;
            }
            let gd = temporal_backward(tr, &g_lam_t[k], |n, g| emb(&mut grads, n, g));
            grads.delta_t += gd;
        }

        if !mode.uses_gnn() {
            continue;
        }

        // structural intensities: λ = −(e_x − e_k)²⊙ω
        let mut g_enh: Vec<Vec<f64>> = vec![vec![0.0; d]; partners + 1];
        let mut g_omega: Vec<Vec<f64>> = vec![vec![0.0; d]; partners];
        for k in 1..=partners {
            let gl = &g_lam_s[k - 1];
            let omega = if mode.uses_global() {
                rec.film[k - 1].omega_g.as_slice()
            } else {
                &[]
            };
            for j in 0..d {
                let diff = rec.enh[0][j] - rec.enh[k][j];
                let om = if omega.is_empty() { 1.0 } else { omega[j] };
                let gd = -2.0 * diff * om * gl[j];
                g_enh[0][j] += gd;
                g_enh[k][j] -= gd;
                g_omega[k - 1][j] = -diff * diff * gl[j];
            }
        }

        if mode.uses_global() {
            let z_g = rec.z_g_used.as_ref().expect("global mode records z_g");
            let mut g_zg = vec![0.0; d];
            let mut g_alpha: Vec<Vec<f64>> = vec![vec![0.0; d]; partners];
            let mut g_beta: Vec<Vec<f64>> = vec![vec![0.0; d]; partners];
            for k in 0..partners {
                let film = &rec.film[k];
                for j in 0..d {
                    let go = g_omega[k][j];
                    g_alpha[k][j] = go * params.theta_l[j];
                    g_beta[k][j] = go;
                    grads.theta_l[j] += go * (film.alpha[j] + 1.0);
                }
            }
            if w[2] != 0.0 {
                let s = -crate::linalg::sq_dist(&rec.enh[0], z_g)
                    - crate::linalg::sq_dist(&rec.enh[1], z_g);
                let gs = w[2] * global_first_grad(s, cfg.global_form);
                for j in 0..d {
                    let dx = rec.enh[0][j] - z_g[j];
                    let dy = rec.enh[1][j] - z_g[j];
                    g_enh[0][j] -= 2.0 * gs * dx;
                    g_enh[1][j] -= 2.0 * gs * dy;
                    g_zg[j] += 2.0 * gs * (dx + dy);
                }
                axpy(2.0 * w[2], &rec.film[0].alpha, &mut g_alpha[0]);
                axpy(2.0 * w[2], &rec.film[0].beta, &mut g_beta[0]);
            }
            for k in 0..partners {
                let (gx, gk) = film_backward(
                    &rec.enh[0],
                    &rec.enh[k + 1],
                    &rec.film[k],
                    &g_alpha[k],
                    &g_beta[k],
                    params,
                    &mut grads,
                );
                axpy(1.0, &gx, &mut g_enh[0]);
                axpy(1.0, &gk, &mut g_enh[k + 1]);
            }
            // enhancement e = z + (θ_d/dyn)·z_g
            let mut g_raw = g_enh.clone();
            for (k, ge) in g_enh.iter().enumerate() {
                let dy = rec.dyns[k] as f64;
                grads.theta_d += dot(ge, z_g) / dy;
                axpy(theta_d / dy, ge, &mut g_zg);
            }
            if !cfg.freeze_global {
                axpy(1.0, &g_zg, &mut g_zg_run);
                // z_g += θ_d·dyn·z for the two endpoints
                for k in 0..2 {
                    let dy = rec.dyns[k] as f64;
                    axpy(theta_d * dy, &g_zg_run, &mut g_raw[k]);
                    grads.theta_d += dy * dot(&rec.raw[k], &g_zg_run);
                }
            }
            for (k, g) in g_raw.iter().enumerate() {
                graph.add_adjoint(rec.rep_ids[k], g);
            }
        } else {
            for (k, g) in g_enh.iter().enumerate() {
                graph.add_adjoint(rec.rep_ids[k], g);
            }
        }
    }

    graph.backward(params, &mut grads);

    if cfg.learn_etas {
        // total = … + softplus(ρ1)·L_A + softplus(ρ2)·L_G
        grads.eta[0] += weighted_terms[0] * sigmoid(params.eta[0]);
        grads.eta[1] += weighted_terms[1] * sigmoid(params.eta[1]);
    } else {
        // exact, but fixed weights are never stepped
        grads.eta[0] += weighted_terms[0];
        grads.eta[1] += weighted_terms[1];
    }
    Ok(grads)
}
