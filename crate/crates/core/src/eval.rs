//! Link-prediction evaluation: logistic regression over pair features, ACC
//! and F1 on a balanced test set.

use std::collections::HashSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::AblationMode;
use crate::error::{Error, Result};
use crate::global::GlobalState;
use crate::graph::{HistoryIndex, Interaction, NodeId, TemporalGraph};
use crate::linalg::{axpy, Matrix};
use crate::params::ModelParams;
use crate::structural::{Activation, RepGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairFeature {
    #[default]
    Product,
    AbsDiff,
    Concat,
}

impl PairFeature {
    pub fn dim(self, d: usize) -> usize {
        match self {
            PairFeature::Concat => 2 * d,
            _ => d,
        }
    }

    pub fn apply(self, a: &[f64], b: &[f64]) -> Vec<f64> {
        match self {
            PairFeature::Product => a.iter().zip(b).map(|(x, y)| x * y).collect(),
            PairFeature::AbsDiff => a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect(),
            PairFeature::Concat => a.iter().chain(b).copied().collect(),
        }
    }
}

impl std::str::FromStr for PairFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(PairFeature::Product),
            "abs_diff" => Ok(PairFeature::AbsDiff),
            "concat" => Ok(PairFeature::Concat),
            _ => Err(Error::InvalidArgument(format!(
                "unknown pair feature {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub f1: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub seed: u64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub pair_feature: PairFeature,
    /// L2 penalty on the classifier weights (not the bias).
    pub ridge: f64,
    pub max_iter: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pair_feature: PairFeature::Product,
            ridge: 1.0,
            max_iter: 50,
        }
    }
}

/// Binary logistic regression fitted by Newton's method on standardized
/// inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl LogisticRegression {
    pub fn fit(x: &[Vec<f64>], y: &[bool], ridge: f64, max_iter: usize) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        let n = x.len();
        let pos = y.iter().filter(|&&v| v).count();
        if pos == 0 || pos == n {
            return Err(Error::InvalidArgument(
                "classifier training set has a single class".into(),
            ));
        }
        let p = x[0].len();
        if x.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidArgument("ragged feature rows".into()));
        }
        let mut mean = vec![0.0; p];
        for r in x {
            axpy(1.0 / n as f64, r, &mut mean);
        }
        let mut scale = vec![0.0; p];
        for r in x {
            for j in 0..p {
                scale[j] += (r[j] - mean[j]).powi(2) / n as f64;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
        }
        // column 0 is the intercept
        let design = DMatrix::from_fn(n, p + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                (x[i][j - 1] - mean[j - 1]) / scale[j - 1]
            }
        });
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier features".into()));
        }
        let target = DVector::from_iterator(n, y.iter().map(|&v| if v { 1.0 } else { 0.0 }));
        let mut penalty = DVector::from_element(p + 1, ridge);
        penalty[0] = 0.0;
        let mut w = DVector::zeros(p + 1);
        for _ in 0..max_iter.max(1) {
            let prob = (&design * &w).map(crate::linalg::sigmoid);
            let grad = design.tr_mul(&(&prob - &target)) + penalty.component_mul(&w);
            let curv = prob.map(|q| (q * (1.0 - q)).max(1e-12));
            let mut weighted = design.clone();
            for (mut row, c) in weighted.row_iter_mut().zip(curv.iter()) {
                row *= *c;
            }
            let mut hess = design.tr_mul(&weighted);
            for j in 0..=p {
                hess[(j, j)] += penalty[j] + 1e-10;
            }
            let step = hess
                .cholesky()
                .ok_or_else(|| Error::NonFinite("classifier Hessian".into()))?
                .solve(&grad);
            w -= &step;
            if step.amax() < 1e-10 {
                break;
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier weights".into()));
        }
        Ok(Self {
            bias: w[0],
            weights: w.iter().skip(1).copied().collect(),
            mean,
            scale,
        })
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut s = self.bias;
        for j in 0..self.weights.len() {
            s += self.weights[j] * (x[j] - self.mean[j]) / self.scale[j];
        }
        crate::linalg::sigmoid(s)
    }
}

/// Accuracy and F1 of the positive class at threshold 0.5.
pub fn accuracy_f1(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= 0.5, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let n = (tp + fp + tn + fneg).max(1) as f64;
    let denom = 2 * tp + fp + fneg;
    let f1 = if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    ((tp + tn) as f64 / n, f1)
}

fn pair_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

/// `count` uniform pairs of distinct active nodes that are not in `forbidden`.
fn sample_non_edges(
    rng: &mut ChaCha8Rng,
    nodes: &[NodeId],
    forbidden: &HashSet<(NodeId, NodeId)>,
    count: usize,
) -> Result<Vec<(NodeId, NodeId)>> {
    if nodes.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two active nodes".into(),
        ));
    }
    let mut out = Vec::with_capacity(count);
    let budget = 1000 * count.max(1);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > budget {
            return Err(Error::InvalidArgument(
                "could not find enough never-interacting node pairs".into(),
            ));
        }
        let a = nodes[rng.gen_range(0..nodes.len())];
        let b = nodes[rng.gen_range(0..nodes.len())];
        if a != b && !forbidden.contains(&pair_key(a, b)) {
            out.push((a, b));
        }
    }
    Ok(out)
}

/// Fits the classifier on training interactions plus as many sampled
/// training non-edges, then scores each test interaction against one sampled
/// pair that never interacted in train or test.
pub fn evaluate_embeddings(
    z: &Matrix,
    train: &[Interaction],
    test: &[Interaction],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<EvalReport> {
    let started = Instant::now();
    if test.is_empty() {
        return Err(Error::Empty("test set has no interactions".into()));
    }
    if train.is_empty() {
        return Err(Error::Empty("training set has no interactions".into()));
    }
    for it in train.iter().chain(test) {
        if it.src.max(it.dst) >= z.rows {
            return Err(Error::UnknownNode {
                node: it.src.max(it.dst),
                num_nodes: z.rows,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // the classifier's negatives only see nodes active in train
    let mut seen = vec![false; z.rows];
    let mut mark = |its: &[Interaction]| {
        for it in its {
            seen[it.src] = true;
            seen[it.dst] = true;
        }
        (0..z.rows).filter(|&i| seen[i]).collect::<Vec<NodeId>>()
    };
    let train_active = mark(train);
    let active = mark(test);
    let train_pairs: HashSet<_> = train.iter().map(|i| pair_key(i.src, i.dst)).collect();
    let mut all_pairs = train_pairs.clone();
    all_pairs.extend(test.iter().map(|i| pair_key(i.src, i.dst)));

    let feat = |a: NodeId, b: NodeId| cfg.pair_feature.apply(z.row(a), z.row(b));
    let train_negs = sample_non_edges(&mut rng, &train_active, &train_pairs, train.len())?;
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(2 * train.len());
    let mut ys = Vec::with_capacity(2 * train.len());
    for it in train {
        xs.push(feat(it.src, it.dst));
        ys.push(true);
    }
    for &(a, b) in &train_negs {
        xs.push(feat(a, b));
        ys.push(false);
    }
    let clf = LogisticRegression::fit(&xs, &ys, cfg.ridge, cfg.max_iter)?;

    let test_negs = sample_non_edges(&mut rng, &active, &all_pairs, test.len())?;
    let mut scores = Vec::with_capacity(2 * test.len());
    let mut labels = Vec::with_capacity(2 * test.len());
    for it in test {
        scores.push(clf.predict_proba(&feat(it.src, it.dst)));
        labels.push(true);
    }
    for &(a, b) in &test_negs {
        scores.push(clf.predict_proba(&feat(a, b)));
        labels.push(false);
    }
    let (accuracy, f1) = accuracy_f1(&scores, &labels);
    Ok(EvalReport {
        accuracy,
        f1,
        n_pos: test.len(),
        n_neg: test_negs.len(),
        seed,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Node representations at the end of the training stream: GNN output over
/// each node's full training-time neighbor sequence, enhanced by `z_g` (with
/// unit dynamics) when the mode has a global module. The Hawkes-only mode
/// has no GNN, so its base embeddings are used.
pub fn final_representations(
    params: &ModelParams,
    global: &GlobalState,
    train_g: &TemporalGraph,
    seq_len: usize,
    mode: AblationMode,
    activation: Activation,
) -> Result<Matrix> {
    let n = params.num_nodes;
    let d = params.dim;
    let mut out = Matrix::zeros(n, d);
    if !mode.uses_gnn() {
        for i in 0..n {
            out.row_mut(i).copy_from_slice(&params.base_embedding(i)?);
        }
        return Ok(out);
    }
    let last = train_g
        .interactions
        .last()
        .ok_or_else(|| Error::Empty("training stream has no interactions".into()))?;
    let history = HistoryIndex::build(train_g, seq_len);
    let cutoff = train_g.len();
    // bounded memo: rebuilt every chunk of nodes
    for chunk in (0..n).collect::<Vec<_>>().chunks(256) {
        let mut graph = RepGraph::new(&history, activation);
        for &i in chunk {
            let id = graph.get(params, i, cutoff, last.time, params.layers())?;
            let row = out.row_mut(i);
            row.copy_from_slice(graph.value(id));
            if mode.uses_global() {
                axpy(params.theta_d, &global.z_g, row);
            }
        }
    }
    Ok(out)
}

pub fn evaluate_link_prediction(
    params: &ModelParams,
    global: &GlobalState,
    train_g: &TemporalGraph,
    test: &[Interaction],
    seq_len: usize,
    mode: AblationMode,
    activation: Activation,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<EvalReport> {
    let started = Instant::now();
    let z = final_representations(params, global, train_g, seq_len, mode, activation)?;
    let mut report = evaluate_embeddings(&z, &train_g.interactions, test, cfg, seed)?;
    report.wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}

/// I.i.d. standard normal embeddings, the null model.
pub fn random_embeddings(num_nodes: usize, dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix {
        rows: num_nodes,
        cols: dim,
        data: (0..num_nodes * dim)
            .map(|_| rng.sample(StandardNormal))
            .collect(),
    }
}
