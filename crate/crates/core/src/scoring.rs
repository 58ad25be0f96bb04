//! Node activity scores between two snapshots and reference-node selection.
//!
//! Scores are stability similarities in `[0, 1]`: a node whose neighborhood
//! or temporal role did not change scores 1.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeSet, Snapshot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    EdgeJaccard,
    TemporalBetweenness,
}

impl ScoreMethod {
    pub fn short_name(self) -> &'static str {
        match self {
            ScoreMethod::EdgeJaccard => "ej",
            ScoreMethod::TemporalBetweenness => "tb",
        }
    }
}

/// Per-node scores over a common-node set.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    pub method: ScoreMethod,
    scores: BTreeMap<NodeId, f64>,
}

impl ScoreMap {
    pub fn new(method: ScoreMethod, scores: BTreeMap<NodeId, f64>) -> Result<Self> {
        if let Some((v, s)) = scores
            .iter()
            .find(|(_, s)| !s.is_finite() || **s < 0.0 || **s > 1.0)
        {
            return Err(Error::Contract(format!(
                "score {s} of node {v} is outside [0, 1]"
            )));
        }
        Ok(ScoreMap { method, scores })
    }

    pub fn get(&self, node: NodeId) -> Option<f64> {
        self.scores.get(&node).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.scores.iter().map(|(&v, &s)| (v, s))
    }

    pub fn nodes(&self) -> NodeSet {
        self.scores.keys().copied().collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node_id,score")?;
        for (v, s) in self.iter() {
            writeln!(out, "{v},{s}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, method: ScoreMethod) -> Result<Self> {
        let mut scores = BTreeMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                line: i + 1,
                message: "expected node_id,score".into(),
            };
            let (v, s) = line.split_once(',').ok_or_else(bad)?;
            let v: NodeId = v.trim().parse().map_err(|_| bad())?;
            let s: f64 = s.trim().parse().map_err(|_| bad())?;
            scores.insert(v, s);
        }
        ScoreMap::new(method, scores)
    }
}

/// Top-`p` fraction of common nodes by score.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSet {
    pub nodes: NodeSet,
    pub p: f64,
}

fn check_common(prev: &Snapshot, cur: &Snapshot, common: &NodeSet) -> Result<()> {
    for &v in common {
        if !prev.contains(v) || !cur.contains(v) {
            return Err(Error::Contract(format!(
                "node {v} is not present in both snapshots"
            )));
        }
    }
    Ok(())
}

/// Neighbors regardless of edge direction.
fn incident_neighbors(snap: &Snapshot) -> HashMap<NodeId, NodeSet> {
    let mut out: HashMap<NodeId, NodeSet> = HashMap::new();
    for e in snap.edges() {
        out.entry(e.src).or_default().insert(e.dst);
        out.entry(e.dst).or_default().insert(e.src);
    }
    out
}

/// Jaccard similarity of each common node's neighbor sets in the two snapshots.
pub fn edge_jaccard_scores(prev: &Snapshot, cur: &Snapshot, common: &NodeSet) -> Result<ScoreMap> {
    check_common(prev, cur, common)?;
    let empty = NodeSet::new();
    let n_prev = incident_neighbors(prev);
    let n_cur = incident_neighbors(cur);
    let scores = common
        .iter()
        .map(|&v| {
            let a = n_prev.get(&v).unwrap_or(&empty);
            let b = n_cur.get(&v).unwrap_or(&empty);
            let inter = a.intersection(b).count();
            let union = a.len() + b.len() - inter;
            let s = if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            };
            (v, s)
        })
        .collect();
    ScoreMap::new(ScoreMethod::EdgeJaccard, scores)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct BetweennessOptions {
    /// Snapshots with more nodes than this use sampled sources.
    pub node_budget: usize,
    pub pivots: usize,
    pub seed: u64,
}

impl Default for BetweennessOptions {
    fn default() -> Self {
        BetweennessOptions {
            node_budget: 20_000,
            pivots: 256,
            seed: 0,
        }
    }
}

/// Time-expanded view of a snapshot: a state is `(node, arrival time)`.
struct TemporalIndex {
    n: usize,
    /// Per local node: outgoing `(target, timestamp)` sorted by timestamp, deduplicated.
    out: Vec<Vec<(usize, i64)>>,
    /// Per local node: distinct arrival timestamps, sorted.
    arrivals: Vec<Vec<i64>>,
    state_offset: Vec<usize>,
    num_states: usize,
}

impl TemporalIndex {
    fn new(snap: &Snapshot, local: &HashMap<NodeId, usize>) -> Self {
        let n = local.len();
        let mut out: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
        for e in snap.edges() {
            let (u, v) = (local[&e.src], local[&e.dst]);
            out[u].push((v, e.timestamp));
            if !snap.is_directed() && u != v {
                out[v].push((u, e.timestamp));
            }
        }
        let mut arrivals: Vec<Vec<i64>> = vec![Vec::new(); n];
        for list in out.iter_mut() {
            list.sort_by_key(|&(v, t)| (t, v));
            list.dedup();
            for &(v, t) in list.iter() {
                arrivals[v].push(t);
            }
        }
        let mut state_offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for a in arrivals.iter_mut() {
            a.sort_unstable();
            a.dedup();
            state_offset.push(total);
            total += a.len();
        }
        state_offset.push(total);
        TemporalIndex {
            n,
            out,
            arrivals,
            state_offset,
            num_states: total,
        }
    }

    fn state(&self, node: usize, t: i64) -> usize {
        let pos = self.arrivals[node]
            .binary_search(&t)
            .expect("every edge target has an arrival state");
        self.state_offset[node] + pos
    }

    fn node_of(&self, state: usize) -> usize {
        self.state_offset.partition_point(|&o| o <= state) - 1
    }

    fn time_of(&self, state: usize) -> i64 {
        let node = self.node_of(state);
        self.arrivals[node][state - self.state_offset[node]]
    }

    /// Outgoing edges usable after arriving at `node` at time `t`.
    fn departures(&self, node: usize, t: Option<i64>) -> &[(usize, i64)] {
        let list = &self.out[node];
        match t {
            None => list,
            Some(t) => &list[list.partition_point(|&(_, tt)| tt < t)..],
        }
    }

    /// Adds the dependency of every node on paths from `source` into `acc`.
    fn accumulate_source(&self, source: usize, acc: &mut [f64]) {
        // slot `num_states` is the source root with no arrival time
        let root = self.num_states;
        let total = self.num_states + 1;
        let mut dist = vec![usize::MAX; total];
        let mut sigma = vec![0.0f64; total];
        let mut order = Vec::new();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); total];
        let mut node_dist = vec![usize::MAX; self.n];

        dist[root] = 0;
        sigma[root] = 1.0;
        node_dist[source] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(x) = queue.pop_front() {
            order.push(x);
            let (node, t) = if x == root {
                (source, None)
            } else {
                let node = self.node_of(x);
                (node, Some(self.time_of(x)))
            };
            for &(w, tw) in self.departures(node, t) {
                let y = self.state(w, tw);
                if dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    queue.push_back(y);
                    if node_dist[w] == usize::MAX {
                        node_dist[w] = dist[y];
                    }
                }
                if dist[y] == dist[x] + 1 {
                    sigma[y] += sigma[x];
                    children[x].push(y);
                }
            }
        }

        // number of shortest time-respecting paths source -> w
        let mut paths_to = vec![0.0f64; self.n];
        for &x in &order {
            if x == root {
                continue;
            }
            let w = self.node_of(x);
            if dist[x] == node_dist[w] {
                paths_to[w] += sigma[x];
            }
        }

        let mut g = vec![0.0f64; total];
        for &x in order.iter().rev() {
            let through: f64 = children[x].iter().map(|&y| g[y]).sum();
            if x == root {
                continue;
            }
            let w = self.node_of(x);
            let terminal = if w != source && dist[x] == node_dist[w] {
                1.0 / paths_to[w]
            } else {
                0.0
            };
            g[x] = terminal + through;
            if w != source {
                acc[w] += sigma[x] * through;
            }
        }
    }
}

/// Temporal betweenness of every snapshot node.
///
/// Paths are time-respecting (non-decreasing timestamps along the path) and
/// shortest by hop count. Each ordered pair `(s, t)` spreads one unit of
/// credit evenly over its shortest paths; the total credit of an intermediate
/// node is divided by `(n - 1)(n - 2)`.
pub fn temporal_betweenness(snap: &Snapshot) -> BTreeMap<NodeId, f64> {
    temporal_betweenness_with(snap, &BetweennessOptions::default())
}

pub fn temporal_betweenness_with(
    snap: &Snapshot,
    options: &BetweennessOptions,
) -> BTreeMap<NodeId, f64> {
    let ids: Vec<NodeId> = snap.nodes().iter().copied().collect();
    let n = ids.len();
    if n < 3 {
        return ids.into_iter().map(|v| (v, 0.0)).collect();
    }
    let local: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let index = TemporalIndex::new(snap, &local);

    let (sources, scale): (Vec<usize>, f64) = if n > options.node_budget {
        let k = options.pivots.clamp(1, n);
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut picked = sample(&mut rng, n, k).into_vec();
        picked.sort_unstable();
        (picked, n as f64 / k as f64)
    } else {
        ((0..n).collect(), 1.0)
    };

    // fixed chunking keeps the floating-point reduction order independent of
    // the thread count
    const CHUNK: usize = 32;
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            for &s in chunk {
                index.accumulate_source(s, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }

    let norm = ((n - 1) * (n - 2)) as f64;
    ids.into_iter()
        .zip(total)
        .map(|(v, b)| (v, (b * scale / norm).clamp(0.0, 1.0)))
        .collect()
}

/// Rescales values to `[0, 1]`; constant maps become all zeros.
fn min_max(values: &BTreeMap<NodeId, f64>) -> BTreeMap<NodeId, f64> {
    let lo = values.values().copied().fold(f64::INFINITY, f64::min);
    let hi = values.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|(&v, &x)| {
            let y = if range > 0.0 { (x - lo) / range } else { 0.0 };
            (v, y)
        })
        .collect()
}

/// Stability score `1 - |TB_cur(v) - TB_prev(v)|` from min-max normalized
/// betweenness of each snapshot.
pub fn temporal_betweenness_scores(
    prev: &Snapshot,
    cur: &Snapshot,
    common: &NodeSet,
) -> Result<ScoreMap> {
    temporal_betweenness_scores_with(prev, cur, common, &BetweennessOptions::default())
}

pub fn temporal_betweenness_scores_with(
    prev: &Snapshot,
    cur: &Snapshot,
    common: &NodeSet,
    options: &BetweennessOptions,
) -> Result<ScoreMap> {
    check_common(prev, cur, common)?;
    let tb_prev = min_max(&temporal_betweenness_with(prev, options));
    let tb_cur = min_max(&temporal_betweenness_with(cur, options));
    let scores = common
        .iter()
        .map(|&v| (v, betweenness_stability(tb_prev[&v], tb_cur[&v])))
        .collect();
    ScoreMap::new(ScoreMethod::TemporalBetweenness, scores)
}

/// Similarity of two normalized betweenness values.
pub fn betweenness_stability(prev: f64, cur: f64) -> f64 {
    (1.0 - (cur - prev).abs()).clamp(0.0, 1.0)
}

/// Scores `cur` against `prev` with the chosen method.
pub fn score_nodes(
    method: ScoreMethod,
    prev: &Snapshot,
    cur: &Snapshot,
    common: &NodeSet,
    options: &BetweennessOptions,
) -> Result<ScoreMap> {
    match method {
        ScoreMethod::EdgeJaccard => edge_jaccard_scores(prev, cur, common),
        ScoreMethod::TemporalBetweenness => {
            temporal_betweenness_scores_with(prev, cur, common, options)
        }
    }
}

/// Number of nodes kept by a top-`p` selection over `n` candidates.
pub fn reference_count(p: f64, n: usize) -> usize {
    // the small slack absorbs binary representation error, e.g. 0.7 * 10
    ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

/// Selects the `ceil(p * n)` best-scored nodes; ties go to the lower id.
pub fn select_top_percent(scores: &ScoreMap, p: f64) -> Result<ReferenceSet> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("p must lie in (0, 1], got {p}")));
    }
    if scores.is_empty() {
        return Err(Error::Contract("cannot select from an empty score map".into()));
    }
    let k = reference_count(p, scores.len());
    let mut ranked: Vec<(NodeId, f64)> = scores.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ReferenceSet {
        nodes: ranked.into_iter().take(k).map(|(v, _)| v).collect(),
        p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TemporalEdge;
    use proptest::prelude::*;

    fn temporal(edges: &[(NodeId, NodeId, i64)], directed: bool) -> Snapshot {
        let edges = edges
            .iter()
            .map(|&(src, dst, timestamp)| TemporalEdge {
                src,
                dst,
                timestamp,
                weight: 1.0,
            })
            .collect();
        Snapshot::new(0, (0, i64::MAX), edges, directed)
    }

    /// Brute force: enumerate every simple time-respecting path, keep the
    /// minimum-hop ones per ordered pair and count intermediate visits.
    fn brute_force_tb(snap: &Snapshot) -> BTreeMap<NodeId, f64> {
        let ids: Vec<NodeId> = snap.nodes().iter().copied().collect();
        let n = ids.len();
        let mut moves: HashMap<NodeId, Vec<(NodeId, i64)>> = HashMap::new();
        for e in snap.edges() {
            moves.entry(e.src).or_default().push((e.dst, e.timestamp));
            if !snap.is_directed() && e.src != e.dst {
                moves.entry(e.dst).or_default().push((e.src, e.timestamp));
            }
        }
        for m in moves.values_mut() {
            m.sort();
            m.dedup();
        }
        // all simple paths as node sequences (one entry per distinct edge choice)
        let mut paths: Vec<Vec<NodeId>> = Vec::new();
        fn dfs(
            path: &mut Vec<NodeId>,
            last_t: Option<i64>,
            moves: &HashMap<NodeId, Vec<(NodeId, i64)>>,
            out: &mut Vec<Vec<NodeId>>,
        ) {
            let here = *path.last().unwrap();
            if path.len() > 1 {
                out.push(path.clone());
            }
            for &(w, t) in moves.get(&here).map_or(&[][..], |v| v.as_slice()) {
                if last_t.is_some_and(|lt| t < lt) || path.contains(&w) {
                    continue;
                }
                path.push(w);
                dfs(path, Some(t), moves, out);
                path.pop();
            }
        }
        for &s in &ids {
            dfs(&mut vec![s], None, &moves, &mut paths);
        }
        let mut best: HashMap<(NodeId, NodeId), usize> = HashMap::new();
        for p in &paths {
            let key = (p[0], *p.last().unwrap());
            let e = best.entry(key).or_insert(usize::MAX);
            *e = (*e).min(p.len());
        }
        let mut credit: BTreeMap<NodeId, f64> = ids.iter().map(|&v| (v, 0.0)).collect();
        for (&(s, t), &len) in &best {
            let shortest: Vec<&Vec<NodeId>> = paths
                .iter()
                .filter(|p| p[0] == s && *p.last().unwrap() == t && p.len() == len)
                .collect();
            for p in &shortest {
                for v in &p[1..p.len() - 1] {
                    *credit.get_mut(v).unwrap() += 1.0 / shortest.len() as f64;
                }
            }
        }
        if n < 3 {
            return credit.into_keys().map(|v| (v, 0.0)).collect();
        }
        let norm = ((n - 1) * (n - 2)) as f64;
        credit.into_iter().map(|(v, c)| (v, c / norm)).collect()
    }

    /// Static betweenness over ordered pairs via BFS path counting.
    fn static_betweenness(snap: &Snapshot) -> BTreeMap<NodeId, f64> {
        let ids: Vec<NodeId> = snap.nodes().iter().copied().collect();
        let n = ids.len();
        let bfs = |s: NodeId| {
            let mut dist: HashMap<NodeId, usize> = HashMap::from([(s, 0)]);
            let mut count: HashMap<NodeId, f64> = HashMap::from([(s, 1.0)]);
            let mut frontier = vec![s];
            while !frontier.is_empty() {
                let mut next = Vec::new();
                for &u in &frontier {
                    for nb in snap.neighbors(u) {
                        let w = nb.node;
                        if !dist.contains_key(&w) {
                            dist.insert(w, dist[&u] + 1);
                            next.push(w);
                        }
                    }
                }
                next.sort();
                next.dedup();
                for &w in &next {
                    let c: f64 = ids
                        .iter()
                        .filter(|&&u| dist.get(&u) == Some(&(dist[&w] - 1)) && snap.neighbor_set(u).contains(&w))
                        .map(|u| count[u])
                        .sum();
                    count.insert(w, c);
                }
                frontier = next;
            }
            (dist, count)
        };
        let all: HashMap<NodeId, _> = ids.iter().map(|&s| (s, bfs(s))).collect();
        let mut out = BTreeMap::new();
        for &v in &ids {
            let mut b = 0.0;
            for &s in &ids {
                for &t in &ids {
                    if s == t || s == v || t == v {
                        continue;
                    }
                    let (ds, cs) = &all[&s];
                    let (dv, cv) = &all[&v];
                    if let (Some(&dst), Some(&dsv), Some(&dvt)) = (ds.get(&t), ds.get(&v), dv.get(&t)) {
                        if dsv + dvt == dst {
                            b += cs[&v] * cv[&t] / cs[&t];
                        }
                    }
                }
            }
            out.insert(v, if n < 3 { 0.0 } else { b / ((n - 1) * (n - 2)) as f64 });
        }
        out
    }

    fn assert_maps_close(a: &BTreeMap<NodeId, f64>, b: &BTreeMap<NodeId, f64>) {
        assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
        for (k, x) in a {
            assert!((x - b[k]).abs() < 1e-12, "node {k}: {x} vs {}", b[k]);
        }
    }

    #[test]
    fn jaccard_examples() {
        // node 0 with neighbor sets {1,2} -> {1,2}, {3,4}, {2,5}
        let prev = Snapshot::from_pairs(0, &[(0, 1), (0, 2)], false);
        let same = Snapshot::from_pairs(1, &[(0, 1), (0, 2)], false);
        let disjoint = Snapshot::from_pairs(1, &[(0, 3), (0, 4)], false);
        let overlap = Snapshot::from_pairs(1, &[(0, 2), (0, 5)], false);
        let common = NodeSet::from([0]);
        assert_eq!(edge_jaccard_scores(&prev, &same, &common).unwrap().get(0), Some(1.0));
        assert_eq!(edge_jaccard_scores(&prev, &disjoint, &common).unwrap().get(0), Some(0.0));
        let s = edge_jaccard_scores(&prev, &overlap, &common).unwrap().get(0).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn jaccard_rejects_foreign_nodes() {
        let a = Snapshot::from_pairs(0, &[(0, 1)], false);
        let b = Snapshot::from_pairs(1, &[(1, 2)], false);
        assert!(matches!(
            edge_jaccard_scores(&a, &b, &NodeSet::from([0])),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn tb_temporal_path() {
        let snap = temporal(&[(0, 1, 1), (1, 2, 2)], false);
        let tb = temporal_betweenness(&snap);
        assert_eq!(tb[&1], 0.5);
        assert_eq!(tb[&0], 0.0);
        assert_eq!(tb[&2], 0.0);
        assert_maps_close(&tb, &brute_force_tb(&snap));
    }

    #[test]
    fn tb_reversed_times_block_the_path() {
        let snap = temporal(&[(0, 1, 1), (1, 2, 0)], true);
        let tb = temporal_betweenness(&snap);
        assert_eq!(tb[&1], 0.0);
        assert_maps_close(&tb, &brute_force_tb(&snap));
    }

    #[test]
    fn tb_small_snapshots_are_zero() {
        let snap = temporal(&[(0, 1, 1)], false);
        assert!(temporal_betweenness(&snap).values().all(|&x| x == 0.0));
    }

    #[test]
    fn tb_triangle_is_symmetric() {
        let snap = temporal(&[(0, 1, 3), (1, 2, 3), (2, 0, 3)], false);
        let tb = temporal_betweenness(&snap);
        assert!(tb.values().all(|&x| x == tb[&0]));
    }

    #[test]
    fn tb_counts_parallel_timestamps_as_distinct_paths() {
        // 0-1 at t=1 and t=2, 1-2 at t=3, plus a 0-3-2 route at t=4 for a tie
        let snap = temporal(&[(0, 1, 1), (0, 1, 2), (1, 2, 3), (0, 3, 4), (3, 2, 4)], true);
        let tb = temporal_betweenness(&snap);
        assert_maps_close(&tb, &brute_force_tb(&snap));
        // pair (0,2): three shortest paths, two via 1 and one via 3
        let norm = 6.0;
        assert!((tb[&1] - (2.0 / 3.0) / norm).abs() < 1e-12);
        assert!((tb[&3] - (1.0 / 3.0) / norm).abs() < 1e-12);
    }

    #[test]
    fn tb_pivot_sampling_with_all_sources_is_exact() {
        let snap = temporal(&[(0, 1, 1), (1, 2, 2), (2, 3, 3), (3, 0, 4)], false);
        let opts = BetweennessOptions {
            node_budget: 2,
            pivots: 100,
            seed: 9,
        };
        assert_maps_close(&temporal_betweenness_with(&snap, &opts), &temporal_betweenness(&snap));
    }

    #[test]
    fn tb_score_arithmetic() {
        assert_eq!(betweenness_stability(0.3, 0.3), 1.0);
        assert_eq!(betweenness_stability(1.0, 0.0), 0.0);
        assert!((betweenness_stability(0.4, 0.7) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn tb_scores_identical_snapshots() {
        let a = temporal(&[(0, 1, 1), (1, 2, 2), (2, 3, 3)], false);
        let s = temporal_betweenness_scores(&a, &a, a.nodes()).unwrap();
        assert!(s.iter().all(|(_, x)| x == 1.0));
        assert_eq!(s.method, ScoreMethod::TemporalBetweenness);
    }

    #[test]
    fn selection_examples() {
        let distinct: BTreeMap<NodeId, f64> = (0..10).map(|i| (i, i as f64 / 10.0)).collect();
        let sm = ScoreMap::new(ScoreMethod::EdgeJaccard, distinct).unwrap();
        assert_eq!(select_top_percent(&sm, 0.2).unwrap().nodes, NodeSet::from([8, 9]));
        assert_eq!(select_top_percent(&sm, 1.0).unwrap().nodes, sm.nodes());
        assert_eq!(select_top_percent(&sm, 0.7).unwrap().nodes.len(), 7);
        assert!(select_top_percent(&sm, 0.0).is_err());
        assert!(select_top_percent(&sm, 1.5).is_err());

        let tied = ScoreMap::new(
            ScoreMethod::EdgeJaccard,
            BTreeMap::from([(1, 0.9), (2, 0.5), (3, 0.5), (4, 0.1)]),
        )
        .unwrap();
        assert_eq!(select_top_percent(&tied, 0.5).unwrap().nodes, NodeSet::from([1, 2]));
    }

    #[test]
    fn score_csv_round_trip() {
        let sm = ScoreMap::new(ScoreMethod::EdgeJaccard, BTreeMap::from([(3, 0.25), (8, 1.0)])).unwrap();
        let mut buf = Vec::new();
        sm.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"node_id,score\n"));
        assert_eq!(ScoreMap::read_csv(buf.as_slice(), ScoreMethod::EdgeJaccard).unwrap(), sm);
        assert!(ScoreMap::new(ScoreMethod::EdgeJaccard, BTreeMap::from([(0, f64::NAN)])).is_err());
    }

    fn random_temporal_graph() -> impl Strategy<Value = (Vec<(NodeId, NodeId, i64)>, bool)> {
        (
            proptest::collection::vec((0usize..7, 0usize..7, 0i64..4), 1..14),
            any::<bool>(),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn tb_matches_path_enumeration((edges, directed) in random_temporal_graph()) {
            let snap = temporal(&edges, directed);
            let fast = temporal_betweenness(&snap);
            let slow = brute_force_tb(&snap);
            for (k, x) in &fast {
                prop_assert!((x - slow[k]).abs() < 1e-12, "node {}: {} vs {}", k, x, slow[k]);
            }
        }

        #[test]
        fn tb_equal_times_match_static_betweenness(
            pairs in proptest::collection::vec((0usize..8, 0usize..8), 1..16),
            directed in any::<bool>(),
        ) {
            let edges: Vec<_> = pairs.iter().map(|&(u, v)| (u, v, 5)).collect();
            let snap = temporal(&edges, directed);
            let tb = temporal_betweenness(&snap);
            let st = static_betweenness(&snap);
            for (k, x) in &tb {
                prop_assert!((x - st[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn scores_stay_in_unit_interval(
            a in proptest::collection::vec((0usize..8, 0usize..8, 0i64..5), 1..20),
            b in proptest::collection::vec((0usize..8, 0usize..8, 0i64..5), 1..20),
            p in 0.01f64..=1.0,
        ) {
            let prev = temporal(&a, false);
            let cur = temporal(&b, false);
            let common = crate::graph::common_nodes(&prev, &cur);
            prop_assume!(!common.is_empty());
            for method in [ScoreMethod::EdgeJaccard, ScoreMethod::TemporalBetweenness] {
                let sm = score_nodes(method, &prev, &cur, &common, &BetweennessOptions::default()).unwrap();
                prop_assert_eq!(sm.nodes(), common.clone());
                prop_assert!(sm.iter().all(|(_, s)| (0.0..=1.0).contains(&s)));
                let r = select_top_percent(&sm, p).unwrap();
                prop_assert_eq!(r.nodes.len(), reference_count(p, common.len()));
                prop_assert!(r.nodes.is_subset(&common));
            }
            let self_sim = edge_jaccard_scores(&prev, &prev, prev.nodes()).unwrap();
            prop_assert!(self_sim.iter().all(|(_, s)| s == 1.0));
        }
    }
}
