//! Hawkes-process temporal intensity between two nodes.
//!
//! The intensity is a d-vector. Its scalar form (the sum of entries) is what
//! the similarity softmax and the task loss consume, while the vector form
//! feeds the alignment loss.

use crate::error::{Error, Result};
use crate::graph::{HistoryIndex, NeighborEntry, NeighborSequence, NodeId};
use crate::params::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVector {
    pub vec: Vec<f64>,
    pub scalar: f64,
}

impl IntensityVector {
    pub fn from_vec(vec: Vec<f64>) -> Self {
        let scalar = vec.iter().sum();
        Self { vec, scalar }
    }

    pub fn dim(&self) -> usize {
        self.vec.len()
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        })
    }
}

/// `vec[j] = −(z_x[j] − z_y[j])²`, `scalar = −‖z_x − z_y‖²`.
pub fn base_intensity(z_x: &[f64], z_y: &[f64]) -> Result<IntensityVector> {
    check_dims(z_x, z_y)?;
    Ok(IntensityVector::from_vec(base_vec(z_x, z_y)))
}

fn base_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| -(x - y) * (x - y)).collect()
}

pub fn time_decay(t_c: f64, t_i: f64, delta_t: f64) -> Result<f64> {
    if t_c < t_i {
        return Err(Error::FutureNeighbor {
            neighbor_time: t_i,
            current: t_c,
        });
    }
    Ok((-delta_t * (t_c - t_i)).exp())
}

/// Max-shifted softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax over `−‖z_i − z_owner‖²` for each valid neighbor `i`.
pub fn neighbor_similarity_weights(
    z_owner: &[f64],
    neighbor_embeddings: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if neighbor_embeddings.is_empty() {
        return Err(Error::InvalidArgument(
            "similarity weights need at least one valid neighbor".into(),
        ));
    }
    let logits = neighbor_embeddings
        .iter()
        .map(|z| {
            check_dims(z_owner, z)?;
            Ok(-crate::linalg::sq_dist(z, z_owner))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(softmax(&logits))
}

/// Intermediate values of one Hawkes sum `Σ_{i∈N_owner} s_(i,owner)·f(t−t_i)·μ(i,target)`.
#[derive(Debug, Clone)]
pub(crate) struct SideTrace {
    pub neighbors: Vec<NodeId>,
    pub z: Vec<Vec<f64>>,
    pub intervals: Vec<f64>,
    pub sim: Vec<f64>,
    pub decay: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct TemporalTrace {
    pub x: NodeId,
    pub y: NodeId,
    pub zx: Vec<f64>,
    pub zy: Vec<f64>,
    pub sides: [SideTrace; 2],
}

fn side_forward(
    z_owner: &[f64],
    z_target: &[f64],
    seq: &[NeighborEntry],
    t: f64,
    delta_t: f64,
    embed: &mut impl FnMut(NodeId) -> Vec<f64>,
    out: &mut [f64],
) -> Result<SideTrace> {
    let mut trace = SideTrace {
        neighbors: Vec::with_capacity(seq.len()),
        z: Vec::with_capacity(seq.len()),
        intervals: Vec::with_capacity(seq.len()),
        sim: Vec::new(),
        decay: Vec::with_capacity(seq.len()),
    };
    if seq.is_empty() {
        return Ok(trace);
    }
    for e in seq {
        trace.decay.push(time_decay(t, e.time, delta_t)?);
        trace.intervals.push(t - e.time);
        trace.neighbors.push(e.neighbor);
        trace.z.push(embed(e.neighbor));
    }
    trace.sim = neighbor_similarity_weights(z_owner, &trace.z)?;
    for (k, zi) in trace.z.iter().enumerate() {
        let a = trace.sim[k] * trace.decay[k];
        for ((o, p), q) in out.iter_mut().zip(zi).zip(z_target) {
            *o -= a * (p - q) * (p - q);
        }
    }
    Ok(trace)
}

/// Forward pass of the temporal intensity given the two valid neighbor
/// sequences and an embedding lookup.
pub(crate) fn temporal_forward(
    x: NodeId,
    y: NodeId,
    t: f64,
    nx: &[NeighborEntry],
    ny: &[NeighborEntry],
    delta_t: f64,
    mut embed: impl FnMut(NodeId) -> Vec<f64>,
) -> Result<(IntensityVector, TemporalTrace)> {
    let zx = embed(x);
    let zy = embed(y);
    check_dims(&zx, &zy)?;
    let mut vec = base_vec(&zx, &zy);
    let side_x = side_forward(&zx, &zy, nx, t, delta_t, &mut embed, &mut vec)?;
    let side_y = side_forward(&zy, &zx, ny, t, delta_t, &mut embed, &mut vec)?;
    Ok((
        IntensityVector::from_vec(vec),
        TemporalTrace {
            x,
            y,
            zx,
            zy,
            sides: [side_x, side_y],
        },
    ))
}

/// Backward pass: `g` is the adjoint of the intensity vector. Embedding
/// adjoints are reported through `emb_grad`; the `δ_t` adjoint is returned.
pub(crate) fn temporal_backward(
    trace: &TemporalTrace,
    g: &[f64],
    mut emb_grad: impl FnMut(NodeId, &[f64]),
) -> f64 {
    let d = g.len();
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    for j in 0..d {
        let diff = trace.zx[j] - trace.zy[j];
        gx[j] -= 2.0 * diff * g[j];
        gy[j] += 2.0 * diff * g[j];
    }
    let mut g_delta = 0.0;
    for (side_idx, side) in trace.sides.iter().enumerate() {
        if side.neighbors.is_empty() {
            continue;
        }
        let (z_owner, z_target) = if side_idx == 0 {
            (&trace.zx, &trace.zy)
        } else {
            (&trace.zy, &trace.zx)
        };
        let n = side.neighbors.len();
        let mut g_sim = vec![0.0; n];
        let mut g_target = vec![0.0; d];
        for k in 0..n {
            let zi = &side.z[k];
            let a = side.sim[k] * side.decay[k];
            let mut gzi = vec![0.0; d];
            let mut g_a = 0.0;
            for j in 0..d {
                let diff = zi[j] - z_target[j];
                g_a -= g[j] * diff * diff;
                gzi[j] -= 2.0 * a * diff * g[j];
                g_target[j] += 2.0 * a * diff * g[j];
            }
            g_sim[k] = g_a * side.decay[k];
            let g_decay = g_a * side.sim[k];
            g_delta -= g_decay * side.decay[k] * side.intervals[k];
            emb_grad(side.neighbors[k], &gzi);
        }
        // softmax over logits m_k = −‖z_k − z_owner‖²
        let weighted: f64 = side.sim.iter().zip(&g_sim).map(|(s, gs)| s * gs).sum();
        let mut g_owner = vec![0.0; d];
        for k in 0..n {
            let g_logit = side.sim[k] * (g_sim[k] - weighted);
            if g_logit == 0.0 {
                continue;
            }
            let zi = &side.z[k];
            let mut gzi = vec![0.0; d];
            for j in 0..d {
                let diff = zi[j] - z_owner[j];
                gzi[j] = -2.0 * g_logit * diff;
                g_owner[j] += 2.0 * g_logit * diff;
            }
            emb_grad(side.neighbors[k], &gzi);
        }
        if side_idx == 0 {
            crate::linalg::axpy(1.0, &g_owner, &mut gx);
            crate::linalg::axpy(1.0, &g_target, &mut gy);
        } else {
            crate::linalg::axpy(1.0, &g_owner, &mut gy);
            crate::linalg::axpy(1.0, &g_target, &mut gx);
        }
    }
    emb_grad(trace.x, &gx);
    emb_grad(trace.y, &gy);
    g_delta
}

/// Temporal intensity `λ^T_(x,y)(t)` from the two nodes' current valid
/// neighbor sequences.
pub fn temporal_intensity(
    params: &ModelParams,
    x: NodeId,
    y: NodeId,
    t: f64,
    nx: &NeighborSequence,
    ny: &NeighborSequence,
) -> Result<IntensityVector> {
    for node in [x, y] {
        if node >= params.num_nodes {
            return Err(Error::UnknownNode {
                node,
                num_nodes: params.num_nodes,
            });
        }
    }
    let (lam, _) = temporal_forward(x, y, t, nx.entries(), ny.entries(), params.delta_t, |n| {
        params.embed(n)
    })?;
    Ok(lam)
}

/// Temporal intensity with sequences taken from `history` before event `cutoff`.
pub fn temporal_intensity_at(
    params: &ModelParams,
    history: &HistoryIndex,
    x: NodeId,
    y: NodeId,
    t: f64,
    cutoff: usize,
) -> Result<IntensityVector> {
    let nx = history.neighbors_at(x, cutoff)?;
    let ny = history.neighbors_at(y, cutoff)?;
    temporal_intensity(params, x, y, t, &nx, &ny)
}
