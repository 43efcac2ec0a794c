//! Time-weighted multi-layer GNN representations and the local structural
//! intensity.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HistoryIndex, NeighborEntry, NodeId};
use crate::linalg::{axpy, sigmoid, Matrix};
use crate::params::ModelParams;
use crate::temporal::IntensityVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the output value.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// `w_i = (t_c − t_i) / Σ (t_c − t_i')`, uniform when every interval is zero.
/// Older neighbors get larger weights.
pub fn interval_weights(seq: &[NeighborEntry], t_c: f64) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return Err(Error::InvalidArgument(
            "interval weights need at least one valid neighbor".into(),
        ));
    }
    if let Some(e) = seq.iter().find(|e| e.time > t_c) {
        return Err(Error::FutureNeighbor {
            neighbor_time: e.time,
            current: t_c,
        });
    }
    let total: f64 = seq.iter().map(|e| t_c - e.time).sum();
    if total > 0.0 {
        Ok(seq.iter().map(|e| (t_c - e.time) / total).collect())
    } else {
        Ok(vec![1.0 / seq.len() as f64; seq.len()])
    }
}

/// `act(z_self·W_S + Σ_i w_i·(z_i·W_N))`
pub fn gnn_layer(
    z_self_prev: &[f64],
    neighbor_prevs: &[Vec<f64>],
    weights: &[f64],
    w_self: &Matrix,
    w_neigh: &Matrix,
    activation: Activation,
) -> Result<Vec<f64>> {
    if neighbor_prevs.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: neighbor_prevs.len(),
            got: weights.len(),
        });
    }
    if z_self_prev.len() != w_self.rows {
        return Err(Error::DimensionMismatch {
            expected: w_self.rows,
            got: z_self_prev.len(),
        });
    }
    let mut pre = w_self.vec_mul(z_self_prev);
    if !neighbor_prevs.is_empty() {
        let mut agg = vec![0.0; w_neigh.rows];
        for (z, &w) in neighbor_prevs.iter().zip(weights) {
            if z.len() != w_neigh.rows {
                return Err(Error::DimensionMismatch {
                    expected: w_neigh.rows,
                    got: z.len(),
                });
            }
            axpy(w, z, &mut agg);
        }
        w_neigh.vec_mul_acc(&agg, &mut pre);
    }
    Ok(pre.into_iter().map(|v| activation.apply(v)).collect())
}

/// Representation of `x` at depth `depth`, using its sequence before event
/// `cutoff` and current time `t`. Each neighbor is evaluated one level down
/// at its own interaction time. Plain recursion, no caching.
pub fn node_representation(
    params: &ModelParams,
    history: &HistoryIndex,
    x: NodeId,
    cutoff: usize,
    t: f64,
    depth: usize,
    activation: Activation,
) -> Result<Vec<f64>> {
    if depth > params.layers() {
        return Err(Error::InvalidArgument(format!(
            "depth {depth} exceeds layer count {}",
            params.layers()
        )));
    }
    if depth == 0 {
        return params.base_embedding(x);
    }
    let z_self = node_representation(params, history, x, cutoff, t, depth - 1, activation)?;
    let seq = history.sequence_before(x, cutoff);
    let (neigh, weights) = if seq.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let w = interval_weights(seq, t)?;
        let z = seq
            .iter()
            .map(|e| {
                node_representation(
                    params,
                    history,
                    e.neighbor,
                    e.event,
                    e.time,
                    depth - 1,
                    activation,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        (z, w)
    };
    gnn_layer(
        &z_self,
        &neigh,
        &weights,
        &params.w_self[depth - 1],
        &params.w_neigh[depth - 1],
        activation,
    )
}

/// `vec[j] = −(z_x[j] − z_y[j])²·ω_g[j]`
pub fn local_intensity(z_x: &[f64], z_y: &[f64], omega_g: &[f64]) -> Result<IntensityVector> {
    if z_x.len() != z_y.len() || z_x.len() != omega_g.len() {
        return Err(Error::DimensionMismatch {
            expected: z_x.len(),
            got: if z_y.len() != z_x.len() {
                z_y.len()
            } else {
                omega_g.len()
            },
        });
    }
    Ok(IntensityVector::from_vec(
        z_x.iter()
            .zip(z_y)
            .zip(omega_g)
            .map(|((a, b), w)| -(a - b) * (a - b) * w)
            .collect(),
    ))
}

#[derive(Debug, Clone)]
struct RepNode {
    node: NodeId,
    depth: usize,
    value: Vec<f64>,
    self_child: usize,
    children: Vec<(usize, f64)>,
    agg: Vec<f64>,
    adjoint: Vec<f64>,
}

/// Memoized representation DAG for one batch. Entries are keyed by
/// `(node, cutoff, time, depth)`; children are always created before their
/// parents, so a reverse sweep is a valid backward order.
#[derive(Debug)]
pub(crate) struct RepGraph<'a> {
    history: &'a HistoryIndex,
    activation: Activation,
    nodes: Vec<RepNode>,
    index: HashMap<(NodeId, usize, u64, usize), usize>,
}

impl<'a> RepGraph<'a> {
    pub fn new(history: &'a HistoryIndex, activation: Activation) -> Self {
        Self {
            history,
            activation,
            nodes: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn value(&self, id: usize) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn add_adjoint(&mut self, id: usize, g: &[f64]) {
        axpy(1.0, g, &mut self.nodes[id].adjoint);
    }

    pub fn get(
        &mut self,
        params: &ModelParams,
        x: NodeId,
        cutoff: usize,
        t: f64,
        depth: usize,
    ) -> Result<usize> {
        let key = if depth == 0 {
            (x, 0, 0, 0)
        } else {
            (x, cutoff, t.to_bits(), depth)
        };
        if let Some(&id) = self.index.get(&key) {
            return Ok(id);
        }
        let d = params.dim;
        let node = if depth == 0 {
            RepNode {
                node: x,
                depth: 0,
                value: params.base_embedding(x)?,
                self_child: usize::MAX,
                children: Vec::new(),
                agg: Vec::new(),
                adjoint: vec![0.0; d],
            }
        } else {
            let self_child = self.get(params, x, cutoff, t, depth - 1)?;
            let history = self.history;
            let seq = history.sequence_before(x, cutoff);
            let mut children = Vec::with_capacity(seq.len());
            let mut agg = vec![0.0; d];
            if !seq.is_empty() {
                let weights = interval_weights(seq, t)?;
                for (e, w) in seq.iter().zip(weights) {
                    let c = self.get(params, e.neighbor, e.event, e.time, depth - 1)?;
                    axpy(w, &self.nodes[c].value, &mut agg);
                    children.push((c, w));
                }
            }
            let mut pre = params.w_self[depth - 1].vec_mul(&self.nodes[self_child].value);
            if !children.is_empty() {
                params.w_neigh[depth - 1].vec_mul_acc(&agg, &mut pre);
            }
            let act = self.activation;
            RepNode {
                node: x,
                depth,
                value: pre.into_iter().map(|v| act.apply(v)).collect(),
                self_child,
                children,
                agg,
                adjoint: vec![0.0; d],
            }
        };
        let id = self.nodes.len();
        self.nodes.push(node);
        self.index.insert(key, id);
        Ok(id)
    }

    /// Propagates accumulated adjoints down to the weights and the base
    /// embeddings.
    pub fn backward(&mut self, params: &ModelParams, grads: &mut ModelParams) {
        let act = self.activation;
        for id in (0..self.nodes.len()).rev() {
            if self.nodes[id].adjoint.iter().all(|&g| g == 0.0) {
                continue;
            }
            let n = &self.nodes[id];
            if n.depth == 0 {
                params.accumulate_embedding_grad(grads, n.node, &n.adjoint);
                continue;
            }
            let layer = n.depth - 1;
            let g_pre: Vec<f64> = n
                .adjoint
                .iter()
                .zip(&n.value)
                .map(|(g, y)| g * act.grad_from_output(*y))
                .collect();
            let self_child = n.self_child;
            let children = n.children.clone();
            let agg = n.agg.clone();

            grads.w_self[layer].outer_acc(1.0, &self.nodes[self_child].value, &g_pre);
            let mut g_self = vec![0.0; params.dim];
            params.w_self[layer].mul_vec_acc(&g_pre, &mut g_self);
            self.add_adjoint(self_child, &g_self);

            if !children.is_empty() {
                grads.w_neigh[layer].outer_acc(1.0, &agg, &g_pre);
                let mut g_agg = vec![0.0; params.dim];
                params.w_neigh[layer].mul_vec_acc(&g_pre, &mut g_agg);
                for (c, w) in children {
                    axpy(w, &g_agg, &mut self.nodes[c].adjoint);
                }
            }
        }
    }
}
