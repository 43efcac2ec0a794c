//! Temporal edge lists, chronological batching and historical neighbor
//! sequences.

use std::collections::BTreeMap;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub type NodeId = usize;

/// One timestamped interaction between two nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub src: NodeId,
    pub dst: NodeId,
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct TemporalGraph {
    pub num_nodes: usize,
    /// Sorted non-decreasing by time, ties in file order.
    pub interactions: Vec<Interaction>,
    pub raw_time_range: (f64, f64),
    pub features: Option<std::sync::Arc<Matrix>>,
    pub self_loops: usize,
}

/// Options for [`parse_edge_list`].
#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub normalize_time: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            normalize_time: true,
        }
    }
}

/// Parses `src dst timestamp` lines. Blank lines and `#` comments are skipped.
pub fn parse_edge_list<R: BufRead>(reader: R, opts: ParseOptions) -> Result<TemporalGraph> {
    let mut raw: Vec<(NodeId, NodeId, f64)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "expected 3 fields `src dst timestamp`, found {}",
                    fields.len()
                ),
            });
        }
        let node = |s: &str| {
            s.parse::<NodeId>().map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("bad node id {s:?}: {e}"),
            })
        };
        let src = node(fields[0])?;
        let dst = node(fields[1])?;
        let time: f64 = fields[2].parse().map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("bad timestamp {:?}: {e}", fields[2]),
        })?;
        if !time.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("non-finite timestamp {:?}", fields[2]),
            });
        }
        raw.push((src, dst, time));
    }
    TemporalGraph::from_raw(raw, opts)
}

pub fn parse_edge_list_str(text: &str, opts: ParseOptions) -> Result<TemporalGraph> {
    parse_edge_list(text.as_bytes(), opts)
}

impl TemporalGraph {
    /// Builds a graph from raw `(src, dst, time)` triples, sorting stably by
    /// time and optionally min-max normalizing timestamps to `[0, 1]`.
    pub fn from_raw(mut raw: Vec<(NodeId, NodeId, f64)>, opts: ParseOptions) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Empty("edge list contains no interactions".into()));
        }
        if let Some(bad) = raw.iter().find(|r| !r.2.is_finite()) {
            return Err(Error::NonFinite(format!(
                "timestamp of ({}, {})",
                bad.0, bad.1
            )));
        }
        raw.sort_by(|a, b| a.2.total_cmp(&b.2));
        let min = raw[0].2;
        let max = raw[raw.len() - 1].2;
        let range = max - min;
        let num_nodes = 1 + raw.iter().map(|r| r.0.max(r.1)).max().unwrap_or(0);
        let self_loops = raw.iter().filter(|r| r.0 == r.1).count();
        let interactions = raw
            .into_iter()
            .map(|(src, dst, t)| {
                let time = if !opts.normalize_time {
                    t
                } else if range > 0.0 {
                    (t - min) / range
                } else {
                    0.0
                };
                Interaction { src, dst, time }
            })
            .collect();
        Ok(Self {
            num_nodes,
            interactions,
            raw_time_range: (min, max),
            features: None,
            self_loops,
        })
    }

    pub fn with_features(mut self, features: Matrix) -> Result<Self> {
        if features.rows != self.num_nodes {
            return Err(Error::DimensionMismatch {
                expected: self.num_nodes,
                got: features.rows,
            });
        }
        self.features = Some(std::sync::Arc::new(features));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn check_node(&self, node: NodeId) -> Result<()> {
        if node < self.num_nodes {
            Ok(())
        } else {
            Err(Error::UnknownNode {
                node,
                num_nodes: self.num_nodes,
            })
        }
    }

    /// Number of interactions each node takes part in (a self-loop counts once).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_nodes];
        for it in &self.interactions {
            deg[it.src] += 1;
            if it.dst != it.src {
                deg[it.dst] += 1;
            }
        }
        deg
    }

    /// Nodes that appear in at least one interaction.
    pub fn active_nodes(&self) -> usize {
        self.degrees().iter().filter(|&&d| d > 0).count()
    }

    pub fn degree_profile(&self) -> DegreeProfile {
        DegreeProfile::from_degrees(&self.degrees())
    }
}

/// Node counts by activity level: long-tail (degree 1-20), medium (21-100)
/// and high-active (above 100).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct DegreeProfile {
    pub active: usize,
    pub long_tail: usize,
    pub medium: usize,
    pub high: usize,
}

impl DegreeProfile {
    pub fn from_degrees(degrees: &[usize]) -> Self {
        let mut p = Self {
            active: 0,
            long_tail: 0,
            medium: 0,
            high: 0,
        };
        for &d in degrees.iter().filter(|&&d| d > 0) {
            p.active += 1;
            match d {
                1..=20 => p.long_tail += 1,
                21..=100 => p.medium += 1,
                _ => p.high += 1,
            }
        }
        p
    }

    pub fn long_tail_fraction(&self) -> f64 {
        if self.active == 0 {
            0.0
        } else {
            self.long_tail as f64 / self.active as f64
        }
    }
}

/// Reads optional node features, one line per node: `node f1 f2 ... fF`.
/// Nodes without a line get the zero vector.
pub fn parse_features<R: BufRead>(reader: R, num_nodes: usize) -> Result<Matrix> {
    let mut rows: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    let mut dim = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let node: NodeId =
            fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: "missing or bad node id".into(),
                })?;
        if node >= num_nodes {
            return Err(Error::UnknownNode { node, num_nodes });
        }
        let values: Vec<f64> = fields
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        msg: format!("bad feature value {s:?}"),
                    })
            })
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected {d} features, found {}", values.len()),
                })
            }
            _ => {}
        }
        rows.insert(node, values);
    }
    let dim = dim.ok_or_else(|| Error::Empty("feature file has no rows".into()))?;
    let mut m = Matrix::zeros(num_nodes, dim);
    for (node, values) in rows {
        m.row_mut(node).copy_from_slice(&values);
    }
    Ok(m)
}

/// Splits off the first `⌊fraction·|E|⌋` interactions as the training graph.
pub fn chronological_split(
    g: &TemporalGraph,
    train_fraction: f64,
) -> Result<(TemporalGraph, Vec<Interaction>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let cut = (train_fraction * g.interactions.len() as f64).floor() as usize;
    let train = TemporalGraph {
        num_nodes: g.num_nodes,
        interactions: g.interactions[..cut].to_vec(),
        raw_time_range: g.raw_time_range,
        features: g.features.clone(),
        self_loops: g.interactions[..cut]
            .iter()
            .filter(|i| i.src == i.dst)
            .count(),
    };
    Ok((train, g.interactions[cut..].to_vec()))
}

/// A recorded interaction as seen from one endpoint. `event` is the position
/// of the interaction in the chronological stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborEntry {
    pub neighbor: NodeId,
    pub time: f64,
    pub event: usize,
}

/// The latest `capacity` interactions of one node, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSequence {
    capacity: usize,
    entries: Vec<NeighborEntry>,
}

impl NeighborSequence {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::with_capacity(capacity),
        }
    }

    /// Rebuilds a sequence from a fixed-size slot array; slots whose mask is
    /// false are dropped whatever they hold.
    pub fn from_padded(slots: &[(NeighborEntry, bool)]) -> Self {
        Self {
            capacity: slots.len(),
            entries: slots.iter().filter(|s| s.1).map(|s| s.0).collect(),
        }
    }

    pub fn from_entries(capacity: usize, entries: &[NeighborEntry]) -> Self {
        let skip = entries.len().saturating_sub(capacity);
        Self {
            capacity,
            entries: entries[skip..].to_vec(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn valid_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[NeighborEntry] {
        &self.entries
    }

    pub fn last_time(&self) -> Option<f64> {
        self.entries.last().map(|e| e.time)
    }

    /// Appends an interaction, evicting the oldest entry when full.
    pub fn record_interaction(&mut self, neighbor: NodeId, time: f64, event: usize) -> Result<()> {
        if let Some(last) = self.last_time() {
            if time < last {
                return Err(Error::OutOfOrder { time, last });
            }
        }
        if self.capacity == 0 {
            return Ok(());
        }
        if self.entries.len() == self.capacity {
            self.entries.remove(0);
        }
        self.entries.push(NeighborEntry {
            neighbor,
            time,
            event,
        });
        Ok(())
    }
}

/// Incrementally maintained neighbor sequences, updated as interactions are
/// replayed in order.
#[derive(Debug, Clone)]
pub struct SequenceStore {
    seqs: Vec<NeighborSequence>,
    applied: usize,
}

impl SequenceStore {
    pub fn new(num_nodes: usize, capacity: usize) -> Self {
        Self {
            seqs: vec![NeighborSequence::new(capacity); num_nodes],
            applied: 0,
        }
    }

    pub fn applied(&self) -> usize {
        self.applied
    }

    /// Records the next interaction of the stream on both endpoints.
    pub fn apply(&mut self, it: &Interaction) -> Result<()> {
        let n = self.seqs.len();
        for node in [it.src, it.dst] {
            if node >= n {
                return Err(Error::UnknownNode { node, num_nodes: n });
            }
        }
        let event = self.applied;
        self.seqs[it.src].record_interaction(it.dst, it.time, event)?;
        if it.dst != it.src {
            self.seqs[it.dst].record_interaction(it.src, it.time, event)?;
        }
        self.applied += 1;
        Ok(())
    }

    pub fn neighbors_at(&self, node: NodeId) -> Result<&NeighborSequence> {
        self.seqs.get(node).ok_or(Error::UnknownNode {
            node,
            num_nodes: self.seqs.len(),
        })
    }
}

/// Full per-node interaction history of a stream, answering "the latest S
/// neighbors of `node` before event `cutoff`" for any cutoff. Equivalent to
/// replaying the first `cutoff` interactions into a [`SequenceStore`].
#[derive(Debug, Clone)]
pub struct HistoryIndex {
    capacity: usize,
    per_node: Vec<Vec<NeighborEntry>>,
    times: Vec<f64>,
}

impl HistoryIndex {
    pub fn build(g: &TemporalGraph, capacity: usize) -> Self {
        Self::from_interactions(g.num_nodes, &g.interactions, capacity)
    }

    pub fn from_interactions(num_nodes: usize, stream: &[Interaction], capacity: usize) -> Self {
        let mut per_node = vec![Vec::new(); num_nodes];
        for (event, it) in stream.iter().enumerate() {
            per_node[it.src].push(NeighborEntry {
                neighbor: it.dst,
                time: it.time,
                event,
            });
            if it.dst != it.src {
                per_node[it.dst].push(NeighborEntry {
                    neighbor: it.src,
                    time: it.time,
                    event,
                });
            }
        }
        Self {
            capacity,
            per_node,
            times: stream.iter().map(|i| i.time).collect(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_nodes(&self) -> usize {
        self.per_node.len()
    }

    pub fn num_events(&self) -> usize {
        self.times.len()
    }

    /// Timestamp of an event; for `cutoff == num_events` the last time.
    pub fn time_of(&self, event: usize) -> f64 {
        self.times
            .get(event)
            .or(self.times.last())
            .copied()
            .unwrap_or(0.0)
    }

    /// Valid entries of `node`'s sequence after the first `cutoff` events.
    pub fn sequence_before(&self, node: NodeId, cutoff: usize) -> &[NeighborEntry] {
        let all = &self.per_node[node];
        let end = all.partition_point(|e| e.event < cutoff);
        &all[end.saturating_sub(self.capacity)..end]
    }

    pub fn neighbors_at(&self, node: NodeId, cutoff: usize) -> Result<NeighborSequence> {
        if node >= self.per_node.len() {
            return Err(Error::UnknownNode {
                node,
                num_nodes: self.per_node.len(),
            });
        }
        Ok(NeighborSequence::from_entries(
            self.capacity,
            self.sequence_before(node, cutoff),
        ))
    }
}

/// A chronological chunk of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub index: usize,
    /// Stream position of `pairs[0]`.
    pub start_event: usize,
    pub pairs: Vec<Interaction>,
    /// Interactions involving each node inside this batch.
    pub dynamics: BTreeMap<NodeId, usize>,
}

impl Batch {
    pub fn new(index: usize, start_event: usize, pairs: Vec<Interaction>) -> Self {
        let mut dynamics = BTreeMap::new();
        for p in &pairs {
            *dynamics.entry(p.src).or_insert(0) += 1;
            if p.dst != p.src {
                *dynamics.entry(p.dst).or_insert(0) += 1;
            }
        }
        Self {
            index,
            start_event,
            pairs,
            dynamics,
        }
    }

    pub fn dynamics_of(&self, node: NodeId) -> usize {
        self.dynamics.get(&node).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn make_batches(g: &TemporalGraph, batch_size: usize) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    Ok(g.interactions
        .chunks(batch_size)
        .enumerate()
        .map(|(i, chunk)| Batch::new(i, i * batch_size, chunk.to_vec()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(neighbor: NodeId, time: f64) -> NeighborEntry {
        NeighborEntry {
            neighbor,
            time,
            event: 0,
        }
    }

    #[test]
    fn parses_and_normalizes() {
        let g = parse_edge_list_str("0 1 5\n1 2 10", ParseOptions::default()).unwrap();
        assert_eq!(g.num_nodes, 3);
        assert_eq!(g.len(), 2);
        let times: Vec<f64> = g.interactions.iter().map(|i| i.time).collect();
        assert_eq!(times, vec![0.0, 1.0]);
        assert_eq!(g.raw_time_range, (5.0, 10.0));
    }

    #[test]
    fn zero_time_range_maps_to_zero() {
        let g = parse_edge_list_str("0 1 7\n0 1 7", ParseOptions::default()).unwrap();
        assert!(g.interactions.iter().all(|i| i.time == 0.0));
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn ties_keep_file_order_and_comments_are_skipped() {
        let text = "# header\n3 4 2\n\n0 1 1\n5 6 2\n1 2 2\n";
        let g = parse_edge_list_str(
            text,
            ParseOptions {
                normalize_time: false,
            },
        )
        .unwrap();
        let order: Vec<(usize, usize)> = g.interactions.iter().map(|i| (i.src, i.dst)).collect();
        assert_eq!(order, vec![(0, 1), (3, 4), (5, 6), (1, 2)]);
        assert_eq!(g.interactions[0].time, 1.0);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = parse_edge_list_str("0 1 1\n0 x 2\n", ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_edge_list_str("0 1 1\n0 1\n", ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_edge_list_str("0 1 inf\n", ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_edge_list_str("0 1 NaN\n", ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(matches!(
            parse_edge_list_str("# nothing\n\n", ParseOptions::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn self_loops_are_counted() {
        let g = parse_edge_list_str("1 1 0\n0 1 1\n", ParseOptions::default()).unwrap();
        assert_eq!(g.self_loops, 1);
        assert_eq!(g.degrees(), vec![1, 2]);
    }

    #[test]
    fn split_counts() {
        let raw: Vec<_> = (0..10).map(|i| (0, 1, i as f64)).collect();
        let g = TemporalGraph::from_raw(raw, ParseOptions::default()).unwrap();
        let (train, test) = chronological_split(&g, 0.8).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
        let max_train = train
            .interactions
            .iter()
            .map(|i| i.time)
            .fold(f64::MIN, f64::max);
        let min_test = test.iter().map(|i| i.time).fold(f64::MAX, f64::min);
        assert!(max_train <= min_test);
        assert!(chronological_split(&g, 1.0).is_err());
        assert!(chronological_split(&g, 0.0).is_err());
        assert!(chronological_split(&g, f64::NAN).is_err());
    }

    #[test]
    fn split_floor_on_collegemsg_size() {
        // ⌊0.8 · 59835⌋ = ⌊47868.0⌋
        let n = 59_835usize;
        let expected_train = (n * 8) / 10;
        assert_eq!(expected_train, 47_868);
        let raw: Vec<_> = (0..n).map(|i| (0, 1, i as f64)).collect();
        let g = TemporalGraph::from_raw(raw, ParseOptions::default()).unwrap();
        let (train, test) = chronological_split(&g, 0.8).unwrap();
        assert_eq!(train.len(), 47_868);
        assert_eq!(test.len(), 11_967);
        let batches = make_batches(&train, 128).unwrap();
        assert_eq!(batches.len(), 47_868 / 128 + 1);
        assert_eq!(batches.iter().filter(|b| b.len() == 128).count(), 373);
        assert_eq!(batches.last().unwrap().len(), 47_868 - 373 * 128);
    }

    #[test]
    fn record_interaction_fifo() {
        let mut s = NeighborSequence::new(3);
        s.record_interaction(7, 0.3, 0).unwrap();
        assert_eq!(s.valid_count(), 1);
        assert_eq!((s.entries()[0].neighbor, s.entries()[0].time), (7, 0.3));

        let mut s = NeighborSequence::new(3);
        for (n, t) in [(1, 0.1), (2, 0.2), (3, 0.3), (9, 0.4)] {
            s.record_interaction(n, t, 0).unwrap();
        }
        let times: Vec<f64> = s.entries().iter().map(|e| e.time).collect();
        assert_eq!(times, vec![0.2, 0.3, 0.4]);

        let mut s = NeighborSequence::new(3);
        s.record_interaction(1, 0.3, 0).unwrap();
        assert!(matches!(
            s.record_interaction(2, 0.1, 1),
            Err(Error::OutOfOrder { .. })
        ));
    }

    #[test]
    fn batches_and_dynamics() {
        let raw: Vec<_> = (0..5).map(|i| (0, 1, i as f64)).collect();
        let g = TemporalGraph::from_raw(raw, ParseOptions::default()).unwrap();
        let sizes: Vec<usize> = make_batches(&g, 2)
            .unwrap()
            .iter()
            .map(Batch::len)
            .collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        assert!(make_batches(&g, 0).is_err());

        let b = Batch::new(
            0,
            0,
            vec![
                Interaction {
                    src: 0,
                    dst: 1,
                    time: 0.0,
                },
                Interaction {
                    src: 0,
                    dst: 2,
                    time: 0.0,
                },
            ],
        );
        assert_eq!(b.dynamics_of(0), 2);
        assert_eq!(b.dynamics_of(1), 1);
        assert_eq!(b.dynamics_of(2), 1);
        assert_eq!(b.dynamics_of(3), 0);
    }

    #[test]
    fn store_neighbors_capacity() {
        let mut raw = vec![(0, 1, 0.0), (0, 2, 1.0)];
        for i in 0..15 {
            raw.push((3, 4 + i, 2.0 + i as f64));
        }
        let g = TemporalGraph::from_raw(raw, ParseOptions::default()).unwrap();
        let mut store = SequenceStore::new(g.num_nodes, 10);
        for it in &g.interactions {
            store.apply(it).unwrap();
        }
        assert_eq!(store.neighbors_at(2).unwrap().valid_count(), 1);
        assert_eq!(store.neighbors_at(0).unwrap().valid_count(), 2);
        let s3 = store.neighbors_at(3).unwrap();
        assert_eq!(s3.valid_count(), 10);
        let ns: Vec<usize> = s3.entries().iter().map(|e| e.neighbor).collect();
        assert_eq!(ns, (9..19).collect::<Vec<_>>());
        assert!(store.neighbors_at(g.num_nodes).is_err());
    }

    #[test]
    fn padded_sequences_drop_masked_slots() {
        let s = NeighborSequence::from_padded(&[
            (entry(1, 0.1), true),
            (entry(99, 5.0), false),
            (entry(2, 0.2), true),
        ]);
        assert_eq!(s.valid_count(), 2);
        assert_eq!(s.capacity(), 3);
    }

    #[test]
    fn features_file() {
        let m = parse_features("0 1 0\n2 0.5 0.5\n".as_bytes(), 3).unwrap();
        assert_eq!(m.row(1), &[0.0, 0.0]);
        assert_eq!(m.row(2), &[0.5, 0.5]);
        assert!(parse_features("0 1\n1 1 2\n".as_bytes(), 3).is_err());
        assert!(parse_features("7 1\n".as_bytes(), 3).is_err());
    }

    #[test]
    fn degree_profile_buckets() {
        let p = DegreeProfile::from_degrees(&[0, 1, 20, 21, 100, 101]);
        assert_eq!((p.active, p.long_tail, p.medium, p.high), (5, 2, 2, 1));
    }
}
