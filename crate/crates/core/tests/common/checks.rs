//! Invariant checks. Each returns `Err(reason)` on violation so that both
//! the property tests and the acceptance harness can drive them.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use s2t_core::engine::{batch_objective_traced, LossSelection, ObjectiveConfig, Stage};
use s2t_core::eval::{evaluate_embeddings, random_embeddings, EvalConfig};
use s2t_core::global::GlobalState;
use s2t_core::graph::{make_batches, HistoryIndex, NeighborEntry, NeighborSequence, SequenceStore};
use s2t_core::linalg::{log_sigmoid, sigmoid};
use s2t_core::objective::{alignment_loss, smooth_l1, smooth_l1_grad, NegativeSampler};
use s2t_core::structural::{gnn_layer, interval_weights, Activation};
use s2t_core::synthetic::{generate, SyntheticConfig};
use s2t_core::temporal::{neighbor_similarity_weights, temporal_intensity, IntensityVector};

use super::{max_abs_diff, random_instance, rng};

type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn softmax_sums_to_one(owner: &[f64], neighbors: &[Vec<f64>]) -> Check {
    let w = neighbor_similarity_weights(owner, neighbors).map_err(|e| e.to_string())?;
    let s: f64 = w.iter().sum();
    ensure(
        (s - 1.0).abs() <= 1e-9 && w.iter().all(|&v| v >= 0.0),
        || format!("similarity weights sum to {s}"),
    )
}

pub fn interval_weights_sum_to_one(times: &[f64], t: f64) -> Check {
    let seq: Vec<NeighborEntry> = times
        .iter()
        .enumerate()
        .map(|(i, &time)| NeighborEntry {
            neighbor: i,
            time,
            event: i,
        })
        .collect();
    let w = interval_weights(&seq, t).map_err(|e| e.to_string())?;
    let s: f64 = w.iter().sum();
    ensure(
        (s - 1.0).abs() <= 1e-9 && w.iter().all(|&v| v >= 0.0),
        || format!("interval weights sum to {s}"),
    )
}

pub fn sigmoid_range(x: f64) -> Check {
    let s = sigmoid(x);
    let ls = log_sigmoid(x);
    ensure(
        (0.0..=1.0).contains(&s) && ls <= 0.0 && ls.is_finite(),
        || format!("sigmoid({x}) = {s}, log sigmoid = {ls}"),
    )?;
    if x.abs() < 30.0 {
        ensure(s > 0.0 && s < 1.0, || {
            format!("sigmoid({x}) = {s} not strictly inside (0,1)")
        })?;
    }
    Ok(())
}

pub fn alignment_of_identical_is_zero(v: &[f64]) -> Check {
    let iv = IntensityVector::from_vec(v.to_vec());
    let l = alignment_loss(&iv, &iv).map_err(|e| e.to_string())?;
    ensure(l == 0.0, || format!("alignment_loss(v, v) = {l}"))
}

pub fn smooth_l1_continuity() -> Check {
    for side in [1.0, -1.0] {
        for h in [1e-4, 1e-6, 1e-8] {
            let lo = side * (1.0 - h);
            let hi = side * (1.0 + h);
            let jump = (smooth_l1(lo) - smooth_l1(hi)).abs();
            let djump = (smooth_l1_grad(lo) - smooth_l1_grad(hi)).abs();
            ensure(jump <= 2.0 * h + 1e-15 && djump <= 2.0 * h + 1e-15, || {
                format!("smooth-L1 not C1 at {side}: value jump {jump:e}, slope jump {djump:e}")
            })?;
        }
    }
    Ok(())
}

/// Masked slots hold garbage; the intensity must match the compact sequence.
pub fn mask_neutrality(seed: u64) -> Check {
    let inst = random_instance(seed, 6, 4, 1);
    let mut r = rng(seed ^ 0x55);
    let h = HistoryIndex::from_interactions(inst.num_nodes, &inst.stream, inst.seq_len);
    let cutoff = inst.stream.len();
    let t = inst.stream[cutoff - 1].time;
    let x = r.gen_range(0..inst.num_nodes);
    let y = r.gen_range(0..inst.num_nodes);
    let pad = |seq: &[NeighborEntry], r: &mut rand_chacha::ChaCha8Rng| -> NeighborSequence {
        let mut slots: Vec<(NeighborEntry, bool)> = seq.iter().map(|&e| (e, true)).collect();
        for _ in 0..r.gen_range(1..4) {
            let junk = NeighborEntry {
                neighbor: r.gen_range(0..inst.num_nodes),
                time: t + r.gen_range(1.0..5.0),
                event: usize::MAX,
            };
            let at = r.gen_range(0..=slots.len());
            slots.insert(at, (junk, false));
        }
        NeighborSequence::from_padded(&slots)
    };
    let sx = h.sequence_before(x, cutoff);
    let sy = h.sequence_before(y, cutoff);
    let compact = temporal_intensity(
        &inst.params,
        x,
        y,
        t,
        &NeighborSequence::from_entries(inst.seq_len, sx),
        &NeighborSequence::from_entries(inst.seq_len, sy),
    )
    .map_err(|e| e.to_string())?;
    let padded = temporal_intensity(&inst.params, x, y, t, &pad(sx, &mut r), &pad(sy, &mut r))
        .map_err(|e| e.to_string())?;
    ensure(compact == padded, || {
        "masked slots changed the temporal intensity".into()
    })
}

/// Reordering neighbors leaves set-based aggregates unchanged.
pub fn permutation_stability(seed: u64) -> Check {
    let inst = random_instance(seed, 6, 4, 1);
    let mut r = rng(seed ^ 0x77);
    let h = HistoryIndex::from_interactions(inst.num_nodes, &inst.stream, inst.seq_len);
    let cutoff = inst.stream.len();
    let t = inst.stream[cutoff - 1].time + 0.1;
    let x = r.gen_range(0..inst.num_nodes);
    let y = r.gen_range(0..inst.num_nodes);
    let sx = h.sequence_before(x, cutoff).to_vec();
    let sy = h.sequence_before(y, cutoff).to_vec();
    let mut px = sx.clone();
    let mut py = sy.clone();
    px.shuffle(&mut r);
    py.shuffle(&mut r);
    let cap = inst.seq_len;
    let a = temporal_intensity(
        &inst.params,
        x,
        y,
        t,
        &NeighborSequence::from_entries(cap, &sx),
        &NeighborSequence::from_entries(cap, &sy),
    )
    .map_err(|e| e.to_string())?;
    let b = temporal_intensity(
        &inst.params,
        x,
        y,
        t,
        &NeighborSequence::from_entries(cap, &px),
        &NeighborSequence::from_entries(cap, &py),
    )
    .map_err(|e| e.to_string())?;
    ensure(max_abs_diff(&a.vec, &b.vec) < 1e-12, || {
        "temporal intensity depends on neighbor order".into()
    })?;

    let d = inst.params.dim;
    let k = r.gen_range(1..5);
    let z: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
    let neigh: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    let w: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..1.0)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut r);
    let pn: Vec<Vec<f64>> = order.iter().map(|&i| neigh[i].clone()).collect();
    let pw: Vec<f64> = order.iter().map(|&i| w[i]).collect();
    let ws = &inst.params.w_self[0];
    let wn = &inst.params.w_neigh[0];
    let g1 = gnn_layer(&z, &neigh, &w, ws, wn, Activation::Sigmoid).map_err(|e| e.to_string())?;
    let g2 = gnn_layer(&z, &pn, &pw, ws, wn, Activation::Sigmoid).map_err(|e| e.to_string())?;
    ensure(max_abs_diff(&g1, &g2) < 1e-12, || {
        "GNN layer depends on neighbor order".into()
    })
}

/// Incremental replay and the indexed history agree at every prefix, and
/// no sequence ever contains an event at or after its cutoff.
pub fn replay_matches_index(seed: u64) -> Check {
    let inst = random_instance(seed, 2, 5, 1);
    let h = HistoryIndex::from_interactions(inst.num_nodes, &inst.stream, inst.seq_len);
    let mut store = SequenceStore::new(inst.num_nodes, inst.seq_len);
    for (e, it) in inst.stream.iter().enumerate() {
        for n in 0..inst.num_nodes {
            let replayed = store.neighbors_at(n).map_err(|e| e.to_string())?;
            let indexed = h.sequence_before(n, e);
            ensure(replayed.entries() == indexed, || {
                format!("node {n} differs before event {e}")
            })?;
            ensure(
                indexed.iter().all(|x| x.event < e && x.time <= it.time),
                || format!("node {n} sees the future before event {e}"),
            )?;
            ensure(indexed.len() <= inst.seq_len, || {
                "sequence exceeds capacity".into()
            })?;
        }
        store.apply(it).map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Pearson χ² goodness of fit of the degree^0.75 sampler.
pub fn sampler_chi_square(seed: u64, draws: usize) -> Check {
    let degrees = [1usize, 2, 3, 5, 8, 13, 0, 21, 34, 4];
    let mut s = NegativeSampler::new(&degrees, 0.75, seed).map_err(|e| e.to_string())?;
    let p = s.probabilities().to_vec();
    let mut counts = vec![0usize; degrees.len()];
    for _ in 0..draws {
        counts[s.draw()] += 1;
    }
    ensure(counts[6] == 0, || "zero-degree node was drawn".into())?;
    let mut stat = 0.0;
    let mut cells = 0;
    for (c, &pi) in counts.iter().zip(&p) {
        if pi > 0.0 {
            let e = pi * draws as f64;
            stat += (*c as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    let chi = ChiSquared::new((cells - 1) as f64).map_err(|e| e.to_string())?;
    let p_value = 1.0 - chi.cdf(stat);
    ensure(p_value > 0.01, || {
        format!("χ² = {stat:.2}, p = {p_value:.4}")
    })
}

pub fn balanced_eval(seed: u64) -> Check {
    let g = generate(&SyntheticConfig {
        num_nodes: 80,
        num_edges: 500,
        seed,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let (train, test) = s2t_core::graph::chronological_split(&g, 0.8).map_err(|e| e.to_string())?;
    let z = random_embeddings(g.num_nodes, 8, seed);
    let rep = evaluate_embeddings(&z, &train.interactions, &test, &EvalConfig::default(), seed)
        .map_err(|e| e.to_string())?;
    ensure(rep.n_pos == rep.n_neg && rep.n_pos == test.len(), || {
        format!(
            "unbalanced evaluation: {} positive vs {} negative",
            rep.n_pos, rep.n_neg
        )
    })?;
    ensure(
        (0.0..=1.0).contains(&rep.accuracy) && (0.0..=1.0).contains(&rep.f1),
        || "metric out of range".into(),
    )
}

/// GNN, global update, enhancement, FiLM, structural, temporal, loss: in
/// that order for every pair of a full-mode batch.
pub fn pipeline_order(seed: u64) -> Check {
    let g = generate(&SyntheticConfig {
        num_nodes: 30,
        num_edges: 120,
        seed,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let h = HistoryIndex::build(&g, 4);
    let batch = make_batches(&g, 8).map_err(|e| e.to_string())?.remove(5);
    let params = s2t_core::params::ModelParams::init(g.num_nodes, None, 4, 2, false, seed)
        .map_err(|e| e.to_string())?;
    let negs: Vec<Vec<usize>> = batch
        .pairs
        .iter()
        .map(|p| vec![(p.src + 1) % g.num_nodes])
        .collect();
    let mut trace = Vec::new();
    batch_objective_traced(
        &params,
        &h,
        &batch,
        &negs,
        &GlobalState::new(4),
        &ObjectiveConfig::default(),
        LossSelection::Total,
        false,
        Some(&mut trace),
    )
    .map_err(|e| e.to_string())?;
    let per_pair = [
        Stage::Gnn,
        Stage::GlobalUpdate,
        Stage::Enhance,
        Stage::Film,
        Stage::Structural,
        Stage::Temporal,
        Stage::Loss,
    ];
    let want: Vec<Stage> = (0..batch.len()).flat_map(|_| per_pair).collect();
    ensure(trace == want, || format!("stage order {trace:?}"))
}
