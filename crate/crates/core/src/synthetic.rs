//! Synthetic long-tail temporal graphs for tests and scaling runs.
//!
//! Node activity follows a Zipf law, so most nodes have few interactions
//! and a handful are hubs. Nodes belong to communities and often repeat
//! earlier partners, which gives link prediction something to learn.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{NodeId, ParseOptions, TemporalGraph};

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub num_nodes: usize,
    pub num_edges: usize,
    /// Zipf exponent of node activity.
    pub zipf: f64,
    pub communities: usize,
    /// Probability of re-contacting a past partner.
    pub repeat: f64,
    /// Probability that a fresh partner comes from the same community.
    pub within: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_nodes: 500,
            num_edges: 5000,
            zipf: 1.1,
            communities: 8,
            repeat: 0.5,
            within: 0.85,
            seed: 0,
        }
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<TemporalGraph> {
    if cfg.num_nodes < 2 || cfg.num_edges == 0 || cfg.communities == 0 {
        return Err(Error::InvalidArgument(
            "synthetic graph needs at least 2 nodes, 1 edge and 1 community".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.num_nodes;
    let activity: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-cfg.zipf)).collect();
    // shuffle ids so that activity does not track the node index
    let mut ids: Vec<NodeId> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut rng);
    let community: Vec<usize> = (0..n).map(|i| ids[i] % cfg.communities).collect();

    let pick = WeightedIndex::new(&activity).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut members: Vec<Vec<NodeId>> = vec![Vec::new(); cfg.communities];
    let mut member_w: Vec<Vec<f64>> = vec![Vec::new(); cfg.communities];
    for i in 0..n {
        members[community[i]].push(i);
        member_w[community[i]].push(activity[i]);
    }
    let per_comm: Vec<Option<WeightedIndex<f64>>> = member_w
        .iter()
        .map(|w| WeightedIndex::new(w).ok())
        .collect();

    let mut partners: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut raw = Vec::with_capacity(cfg.num_edges);
    let mut t = 0.0f64;
    while raw.len() < cfg.num_edges {
        let src = pick.sample(&mut rng);
        let dst = if !partners[src].is_empty() && rng.gen::<f64>() < cfg.repeat {
            partners[src][rng.gen_range(0..partners[src].len())]
        } else if rng.gen::<f64>() < cfg.within {
            let c = community[src];
            match &per_comm[c] {
                Some(dist) if members[c].len() > 1 => members[c][dist.sample(&mut rng)],
                _ => pick.sample(&mut rng),
            }
        } else {
            pick.sample(&mut rng)
        };
        if dst == src {
            continue;
        }
        t += -(1.0 - rng.gen::<f64>()).ln();
        partners[src].push(dst);
        partners[dst].push(src);
        let (a, b) = if rng.gen::<bool>() {
            (src, dst)
        } else {
            (dst, src)
        };
        raw.push((a, b, t.round()));
    }
    let mut g = TemporalGraph::from_raw(raw, ParseOptions::default())?;
    g.num_nodes = g.num_nodes.max(n);
    Ok(g)
}
