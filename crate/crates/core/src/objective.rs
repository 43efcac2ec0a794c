//! Negative sampling and the loss stack: task, alignment, global and the
//! weighted total.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::linalg::{log_sigmoid, sigmoid, sq_dist, sq_norm};
use crate::temporal::IntensityVector;

/// How an intensity vector is reduced to the scalar the task loss consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

impl Reduction {
    pub fn reduce(self, v: &IntensityVector) -> f64 {
        match self {
            Reduction::Sum => v.scalar,
            Reduction::Mean => v.scalar / v.dim().max(1) as f64,
        }
    }

    /// d(reduced)/d(vec[j]); identical for every coordinate.
    pub fn coordinate_weight(self, dim: usize) -> f64 {
        match self {
            Reduction::Sum => 1.0,
            Reduction::Mean => 1.0 / dim.max(1) as f64,
        }
    }
}

/// Negative term of the task loss: `σ(1 − λ)` as written, or `σ(−λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegForm {
    #[default]
    Literal,
    Conventional,
}

/// Sign of the first global-loss term. `Intent` minimizes
/// `−log σ(−‖z_x − z_g‖² − ‖z_y − z_g‖²)`, pulling nodes toward `z_g`;
/// `Literal` uses `+log σ(·)`, which is unbounded below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlobalLossForm {
    #[default]
    Intent,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task: f64,
    pub align: f64,
    pub global: f64,
    pub total: f64,
    pub eta1: f64,
    pub eta2: f64,
}

/// `L = L_task + η1·L_A + η2·L_G`
pub fn total_loss(
    task: f64,
    align: f64,
    global: f64,
    eta1: f64,
    eta2: f64,
) -> Result<LossBreakdown> {
    if !(eta1 >= 0.0 && eta2 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "loss weights must be non-negative, got ({eta1}, {eta2})"
        )));
    }
    Ok(LossBreakdown {
        task,
        align,
        global,
        total: task + eta1 * align + eta2 * global,
        eta1,
        eta2,
    })
}

fn neg_arg(s: f64, form: NegForm) -> f64 {
    match form {
        NegForm::Literal => 1.0 - s,
        NegForm::Conventional => -s,
    }
}

/// `−log σ(λ⁺) − Σ_k log σ(1 − λ⁻_k)` on reduced scalars.
pub fn task_loss(
    pos: &IntensityVector,
    negs: &[IntensityVector],
    form: NegForm,
    reduction: Reduction,
) -> Result<f64> {
    if negs.is_empty() {
        return Err(Error::InvalidArgument(
            "task loss needs at least one negative".into(),
        ));
    }
    let mut loss = -log_sigmoid(reduction.reduce(pos));
    for n in negs {
        loss -= log_sigmoid(neg_arg(reduction.reduce(n), form));
    }
    Ok(loss)
}

/// d/ds of `−log σ(s)` for the positive scalar.
pub(crate) fn task_pos_grad(s: f64) -> f64 {
    sigmoid(s) - 1.0
}

/// d/ds of the negative term for one negative scalar.
pub(crate) fn task_neg_grad(s: f64, form: NegForm) -> f64 {
    match form {
        NegForm::Literal => 1.0 - sigmoid(1.0 - s),
        NegForm::Conventional => sigmoid(s),
    }
}

pub(crate) fn task_terms(pos: f64, negs: &[f64], form: NegForm) -> f64 {
    -log_sigmoid(pos)
        - negs
            .iter()
            .map(|&s| log_sigmoid(neg_arg(s, form)))
            .sum::<f64>()
}

pub fn smooth_l1(e: f64) -> f64 {
    let a = e.abs();
    if a < 1.0 {
        0.5 * e * e
    } else {
        a - 0.5
    }
}

pub fn smooth_l1_grad(e: f64) -> f64 {
    if e.abs() < 1.0 {
        e
    } else {
        e.signum()
    }
}

/// Mean smooth-L1 (threshold 1) between two intensity vectors.
pub fn alignment_loss(lambda_t: &IntensityVector, lambda_s: &IntensityVector) -> Result<f64> {
    if lambda_t.dim() != lambda_s.dim() {
        return Err(Error::DimensionMismatch {
            expected: lambda_t.dim(),
            got: lambda_s.dim(),
        });
    }
    let d = lambda_t.dim().max(1) as f64;
    Ok(lambda_t
        .vec
        .iter()
        .zip(&lambda_s.vec)
        .map(|(a, b)| smooth_l1(a - b))
        .sum::<f64>()
        / d)
}

/// Adjoint of the alignment loss with respect to `λ^T` (negate for `λ^S`).
pub(crate) fn alignment_grad(lambda_t: &[f64], lambda_s: &[f64]) -> Vec<f64> {
    let d = lambda_t.len().max(1) as f64;
    lambda_t
        .iter()
        .zip(lambda_s)
        .map(|(a, b)| smooth_l1_grad(a - b) / d)
        .collect()
}

pub fn global_loss(
    z_x: &[f64],
    z_y: &[f64],
    z_g: &[f64],
    alpha: &[f64],
    beta: &[f64],
    form: GlobalLossForm,
) -> Result<f64> {
    for v in [z_y, z_g] {
        if v.len() != z_x.len() {
            return Err(Error::DimensionMismatch {
                expected: z_x.len(),
                got: v.len(),
            });
        }
    }
    let s = -sq_dist(z_x, z_g) - sq_dist(z_y, z_g);
    let first = match form {
        GlobalLossForm::Intent => -log_sigmoid(s),
        GlobalLossForm::Literal => log_sigmoid(s),
    };
    Ok(first + sq_norm(alpha) + sq_norm(beta))
}

/// d/ds of the first global-loss term, `s = −‖z_x − z_g‖² − ‖z_y − z_g‖²`.
pub(crate) fn global_first_grad(s: f64, form: GlobalLossForm) -> f64 {
    match form {
        GlobalLossForm::Intent => sigmoid(s) - 1.0,
        GlobalLossForm::Literal => 1.0 - sigmoid(s),
    }
}

/// Draws negatives with probability proportional to `degree^power`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    dist: WeightedIndex<f64>,
    probabilities: Vec<f64>,
    rng: ChaCha8Rng,
    max_retries: usize,
}

impl NegativeSampler {
    pub fn new(degrees: &[usize], power: f64, seed: u64) -> Result<Self> {
        let weights: Vec<f64> = degrees
            .iter()
            .map(|&d| if d == 0 { 0.0 } else { (d as f64).powf(power) })
            .collect();
        if weights.iter().filter(|&&w| w > 0.0).count() < 2 {
            return Err(Error::InvalidArgument(
                "negative sampling needs at least two nodes with interactions".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        let probabilities = weights.iter().map(|w| w / total).collect();
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("sampler weights: {e}")))?;
        Ok(Self {
            dist,
            probabilities,
            rng: ChaCha8Rng::seed_from_u64(seed),
            max_retries: 16,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// One raw draw, no rejection.
    pub fn draw(&mut self) -> NodeId {
        self.dist.sample(&mut self.rng)
    }

    /// `q` draws for anchor `x`, rejecting `x` itself and the positive
    /// partner; after `max_retries` rejections the last draw is kept.
    pub fn sample_negatives(
        &mut self,
        x: NodeId,
        partner: NodeId,
        q: usize,
    ) -> Result<Vec<NodeId>> {
        if q == 0 {
            return Err(Error::InvalidArgument(
                "negative count must be at least 1".into(),
            ));
        }
        Ok((0..q)
            .map(|_| {
                let mut k = self.draw();
                for _ in 0..self.max_retries {
                    if k != x && k != partner {
                        break;
                    }
                    k = self.draw();
                }
                k
            })
            .collect())
    }
}
