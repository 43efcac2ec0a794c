//! Loop-based reference implementations and random instance generators
//! shared by the integration tests and the acceptance harness.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod checks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use s2t_core::graph::{Interaction, NodeId};
use s2t_core::params::ModelParams;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small random temporal graph with parameters drawn away from their
/// initial values.
pub struct Instance {
    pub num_nodes: usize,
    pub stream: Vec<Interaction>,
    pub params: ModelParams,
    pub seq_len: usize,
}

pub fn random_instance(seed: u64, max_dim: usize, max_seq: usize, layers: usize) -> Instance {
    let mut r = rng(seed);
    let num_nodes = r.gen_range(3..9);
    let n_events = r.gen_range(4..30);
    let mut t = 0.0;
    let mut stream = Vec::with_capacity(n_events);
    for _ in 0..n_events {
        // repeated timestamps are allowed
        if r.gen_bool(0.7) {
            t += r.gen_range(0.0..0.2);
        }
        let src = r.gen_range(0..num_nodes);
        let mut dst = r.gen_range(0..num_nodes);
        if dst == src {
            dst = (dst + 1) % num_nodes;
        }
        stream.push(Interaction { src, dst, time: t });
    }
    let dim = r.gen_range(1..=max_dim);
    let seq_len = r.gen_range(1..=max_seq);
    let mut params = ModelParams::init(num_nodes, None, dim, layers, false, seed).unwrap();
    for v in params.w0.data.iter_mut() {
        *v = r.gen_range(-1.5..1.5);
    }
    params.delta_t = r.gen_range(0.0..3.0);
    Instance {
        num_nodes,
        stream,
        params,
        seq_len,
    }
}

/// `(neighbor, time, event)` of the latest `s` interactions of `node` among
/// events `0..cutoff`, oldest first.
pub fn oracle_history(
    stream: &[Interaction],
    node: NodeId,
    cutoff: usize,
    s: usize,
) -> Vec<(NodeId, f64, usize)> {
    let mut all = Vec::new();
    for (e, it) in stream.iter().enumerate().take(cutoff) {
        if it.src == node {
            all.push((it.dst, it.time, e));
        } else if it.dst == node {
            all.push((it.src, it.time, e));
        }
    }
    let start = all.len().saturating_sub(s);
    all[start..].to_vec()
}

pub fn oracle_embedding(p: &ModelParams, node: NodeId) -> Vec<f64> {
    let d = p.dim;
    match &p.features {
        Some(f) => {
            let mut out = vec![0.0; d];
            for k in 0..f.cols {
                for j in 0..d {
                    out[j] += f.data[node * f.cols + k] * p.w0.data[k * d + j];
                }
            }
            out
        }
        None => p.w0.data[node * d..(node + 1) * d].to_vec(),
    }
}

fn mu_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for j in 0..a.len() {
        out[j] = -(a[j] - b[j]) * (a[j] - b[j]);
    }
    out
}

fn total(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s
}

/// `λ^T_(x,y)(t)` as a vector, written from the defining sums.
pub fn oracle_temporal(
    p: &ModelParams,
    x: NodeId,
    y: NodeId,
    t: f64,
    hist_x: &[(NodeId, f64, usize)],
    hist_y: &[(NodeId, f64, usize)],
) -> Vec<f64> {
    let ex = oracle_embedding(p, x);
    let ey = oracle_embedding(p, y);
    let mut lam = mu_vec(&ex, &ey);
    for (owner, target, hist) in [(&ex, &ey, hist_x), (&ey, &ex, hist_y)] {
        if hist.is_empty() {
            continue;
        }
        // softmax of μ(i, owner) over the owner's neighbors
        let scores: Vec<f64> = hist
            .iter()
            .map(|&(i, _, _)| total(&mu_vec(&oracle_embedding(p, i), owner)))
            .collect();
        let mut m = f64::NEG_INFINITY;
        for &s in &scores {
            if s > m {
                m = s;
            }
        }
        let mut z = 0.0;
        for &s in &scores {
            z += (s - m).exp();
        }
        for (k, &(i, ti, _)) in hist.iter().enumerate() {
            let sim = (scores[k] - m).exp() / z;
            let alpha = sim * (-p.delta_t * (t - ti)).exp();
            let mu = mu_vec(&oracle_embedding(p, i), target);
            for j in 0..lam.len() {
                lam[j] += alpha * mu[j];
            }
        }
    }
    lam
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `z^depth` of `x` using its history before `cutoff` at time `t`, with each
/// neighbor term multiplied through `W_N` separately.
pub fn oracle_representation(
    p: &ModelParams,
    stream: &[Interaction],
    s: usize,
    x: NodeId,
    cutoff: usize,
    t: f64,
    depth: usize,
) -> Vec<f64> {
    if depth == 0 {
        return oracle_embedding(p, x);
    }
    let d = p.dim;
    let ws = &p.w_self[depth - 1].data;
    let wn = &p.w_neigh[depth - 1].data;
    let prev = oracle_representation(p, stream, s, x, cutoff, t, depth - 1);
    let mut pre = vec![0.0; d];
    for k in 0..d {
        for j in 0..d {
            pre[j] += prev[k] * ws[k * d + j];
        }
    }
    let hist = oracle_history(stream, x, cutoff, s);
    if !hist.is_empty() {
        let mut denom = 0.0;
        for &(_, ti, _) in &hist {
            denom += t - ti;
        }
        for &(i, ti, e) in &hist {
            let w = if denom > 0.0 {
                (t - ti) / denom
            } else {
                1.0 / hist.len() as f64
            };
            let zi = oracle_representation(p, stream, s, i, e, ti, depth - 1);
            for k in 0..d {
                for j in 0..d {
                    pre[j] += w * zi[k] * wn[k * d + j];
                }
            }
        }
    }
    pre.into_iter().map(sigmoid).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
