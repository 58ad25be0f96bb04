//! Second-order biased random walks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::TrainConfig;
use crate::graph::{NodeId, Snapshot};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct WalkSet {
    pub walks: Vec<Vec<NodeId>>,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
}

/// Snapshot adjacency over dense local indices.
pub(crate) struct WalkGraph {
    pub ids: Vec<NodeId>,
    adj: Vec<Vec<(usize, f64)>>,
    /// Sorted distinct neighbors, for the "is x adjacent to prev" test.
    sorted: Vec<Vec<usize>>,
}

impl WalkGraph {
    pub fn new(snap: &Snapshot) -> Self {
        let ids: Vec<NodeId> = snap.nodes().iter().copied().collect();
        let local = |v: NodeId| ids.binary_search(&v).expect("neighbor is a snapshot node");
        let adj: Vec<Vec<(usize, f64)>> = ids
            .iter()
            .map(|&v| {
                snap.neighbors(v)
                    .iter()
                    .map(|n| (local(n.node), n.weight))
                    .collect()
            })
            .collect();
        let sorted = adj
            .iter()
            .map(|list| {
                let mut s: Vec<usize> = list.iter().map(|&(x, _)| x).collect();
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        WalkGraph { ids, adj, sorted }
    }

    fn is_adjacent(&self, from: usize, to: usize) -> bool {
        self.sorted[from].binary_search(&to).is_ok()
    }

    /// One walk in local indices.
    pub fn walk(
        &self,
        start: usize,
        length: usize,
        p: f64,
        q: f64,
        use_weights: bool,
        rng: &mut impl Rng,
    ) -> Vec<usize> {
        let mut walk = Vec::with_capacity(length);
        if length == 0 {
            return walk;
        }
        walk.push(start);
        let mut weights = Vec::new();
        while walk.len() < length {
            let cur = walk[walk.len() - 1];
            let prev = (walk.len() >= 2).then(|| walk[walk.len() - 2]);
            let nbrs = &self.adj[cur];
            if nbrs.is_empty() {
                break;
            }
            weights.clear();
            let mut total = 0.0;
            for &(x, w) in nbrs {
                let base = if use_weights { w } else { 1.0 };
                let bias = match prev {
                    None => 1.0,
                    Some(t) if x == t => 1.0 / p,
                    Some(t) if self.is_adjacent(t, x) => 1.0,
                    Some(_) => 1.0 / q,
                };
                total += base * bias;
                weights.push(total);
            }
            if !(total > 0.0) {
                break;
            }
            let r = rng.random::<f64>() * total;
            let k = weights.partition_point(|&c| c <= r).min(nbrs.len() - 1);
            walk.push(nbrs[k].0);
        }
        walk
    }
}

/// `walks_per_node` rounds, each starting one walk from every node in
/// ascending id order. Every walk draws from its own seeded stream, so the
/// result does not depend on the thread count.
pub fn generate_walks(snap: &Snapshot, cfg: &TrainConfig) -> WalkSet {
    let graph = WalkGraph::new(snap);
    let walks = generate_local(&graph, cfg)
        .into_iter()
        .map(|w| w.into_iter().map(|i| graph.ids[i]).collect())
        .collect();
    WalkSet {
        walks,
        walk_length: cfg.walk_length,
        walks_per_node: cfg.walks_per_node,
        p: cfg.p,
        q: cfg.q,
        seed: cfg.seed,
    }
}

pub(crate) fn generate_local(graph: &WalkGraph, cfg: &TrainConfig) -> Vec<Vec<usize>> {
    let n = graph.ids.len();
    (0..cfg.walks_per_node * n)
        .into_par_iter()
        .map(|k| {
            let (round, start) = (k / n, k % n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(
                cfg.seed,
                &[0x57a1, round as u64, start as u64],
            ));
            graph.walk(start, cfg.walk_length, cfg.p, cfg.q, cfg.use_weights, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TemporalEdge;
    use proptest::prelude::*;

    fn cfg(walk_length: usize, walks_per_node: usize) -> TrainConfig {
        TrainConfig {
            walk_length,
            walks_per_node,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn unit_length_walks_are_start_nodes() {
        let snap = Snapshot::from_pairs(0, &[(0, 1), (1, 2)], false);
        let ws = generate_walks(&snap, &cfg(1, 2));
        assert_eq!(ws.walks, vec![vec![0], vec![1], vec![2], vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn directed_dead_end_truncates() {
        let snap = Snapshot::from_pairs(0, &[(0, 1)], true);
        let ws = generate_walks(&snap, &cfg(5, 1));
        assert_eq!(ws.walks[0], vec![0, 1]);
        assert_eq!(ws.walks[1], vec![1]);
    }

    #[test]
    fn first_step_from_middle_of_path_is_uniform() {
        let snap = Snapshot::from_pairs(0, &[(0, 1), (1, 2)], false);
        let graph = WalkGraph::new(&snap);
        let samples = 20_000;
        let mut to_first = 0usize;
        for i in 0..samples {
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let w = graph.walk(1, 2, 1.0, 1.0, false, &mut rng);
            if w[1] == 0 {
                to_first += 1;
            }
        }
        let mean = samples as f64 * 0.5;
        let sigma = (samples as f64 * 0.25).sqrt();
        assert!((to_first as f64 - mean).abs() < 3.0 * sigma, "{to_first} of {samples}");
    }

    #[test]
    fn return_parameter_biases_backtracking() {
        // star around 1: from 0 -> 1, then return to 0 with weight 1/p vs 1/q for 2, 3
        let snap = Snapshot::from_pairs(0, &[(0, 1), (1, 2), (1, 3)], false);
        let graph = WalkGraph::new(&snap);
        let mut back = 0;
        let n = 20_000;
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let w = graph.walk(0, 3, 0.25, 1.0, false, &mut rng);
            if w[2] == 0 {
                back += 1;
            }
        }
        // weights 4 : 1 : 1 -> 2/3 return
        let frac = back as f64 / n as f64;
        assert!((frac - 2.0 / 3.0).abs() < 0.02, "{frac}");
    }

    #[test]
    fn weights_scale_transitions() {
        let edges = vec![
            TemporalEdge { src: 0, dst: 1, timestamp: 0, weight: 3.0 },
            TemporalEdge { src: 0, dst: 2, timestamp: 0, weight: 1.0 },
        ];
        let snap = Snapshot::new(0, (0, 1), edges, true);
        let graph = WalkGraph::new(&snap);
        let n = 20_000;
        let ones = (0..n)
            .filter(|&i| graph.walk(0, 2, 1.0, 1.0, true, &mut ChaCha8Rng::seed_from_u64(i))[1] == 1)
            .count();
        assert!((ones as f64 / n as f64 - 0.75).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn walks_follow_edges(
            pairs in proptest::collection::vec((0usize..12, 0usize..12), 1..30),
            directed in any::<bool>(),
            seed in any::<u64>(),
            p in 0.25f64..4.0,
            q in 0.25f64..4.0,
        ) {
            let snap = Snapshot::from_pairs(0, &pairs, directed);
            let c = TrainConfig { walk_length: 12, walks_per_node: 2, p, q, seed, ..TrainConfig::default() };
            let ws = generate_walks(&snap, &c);
            prop_assert_eq!(ws.walks.len(), 2 * snap.num_nodes());
            for w in &ws.walks {
                prop_assert!(!w.is_empty() && w.len() <= 12);
                for pair in w.windows(2) {
                    prop_assert!(snap.has_edge(pair[0], pair[1]));
                }
                if !directed {
                    prop_assert_eq!(w.len(), 12);
                }
            }
            prop_assert_eq!(&generate_walks(&snap, &c), &ws);
        }
    }
}
