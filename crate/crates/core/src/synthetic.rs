//! Seeded two-community dynamic graphs for tests and demos.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{NodeId, Snapshot};
use crate::seed;

/// A stochastic block model with two equal communities. Each later snapshot
/// first moves a fraction of nodes to the other community, then keeps every
/// node pair's previous state with probability `persistence` and resamples it
/// from the block probabilities otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommunityGraphConfig {
    pub nodes: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Fraction of nodes switching community between consecutive snapshots.
    pub churn: f64,
    pub persistence: f64,
    pub snapshots: usize,
    pub seed: u64,
}

impl Default for CommunityGraphConfig {
    fn default() -> Self {
        CommunityGraphConfig {
            nodes: 400,
            p_in: 0.05,
            p_out: 0.005,
            churn: 0.05,
            persistence: 0.0,
            snapshots: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommunityGraph {
    /// `membership[t][v]` is node `v`'s community in snapshot `t`.
    pub membership: Vec<Vec<u8>>,
    /// Undirected edges `(u, v)` with `u < v`, per snapshot.
    pub edges: Vec<Vec<(NodeId, NodeId)>>,
}

impl CommunityGraph {
    pub fn generate(cfg: &CommunityGraphConfig) -> Self {
        let n = cfg.nodes;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[0x5b3]));
        let mut current: Vec<u8> = (0..n).map(|v| (v >= n / 2) as u8).collect();
        let mut membership = Vec::with_capacity(cfg.snapshots);
        let mut edges = Vec::with_capacity(cfg.snapshots);
        let movers = (cfg.churn * n as f64).round() as usize;
        for t in 0..cfg.snapshots {
            if t > 0 {
                for v in sample(&mut rng, n, movers.min(n)) {
                    current[v] ^= 1;
                }
            }
            let prev: Option<&Vec<(NodeId, NodeId)>> = edges.last();
            let mut prev_iter = prev.into_iter().flatten().peekable();
            let mut list = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    let was = prev_iter.next_if_eq(&&(u, v)).is_some();
                    let keep = t > 0 && cfg.persistence > 0.0 && rng.random_bool(cfg.persistence);
                    let present = if keep {
                        was
                    } else {
                        let p = if current[u] == current[v] { cfg.p_in } else { cfg.p_out };
                        rng.random_bool(p)
                    };
                    if present {
                        list.push((u, v));
                    }
                }
            }
            membership.push(current.clone());
            edges.push(list);
        }
        CommunityGraph { membership, edges }
    }

    pub fn snapshots(&self) -> Vec<Snapshot> {
        self.edges
            .iter()
            .enumerate()
            .map(|(t, e)| Snapshot::from_pairs(t, e, false))
            .collect()
    }

    /// Edge list with snapshot `t` stamped at `t * span`.
    pub fn write_edgelist<W: Write>(&self, mut out: W, span: i64) -> std::io::Result<()> {
        for (t, list) in self.edges.iter().enumerate() {
            for (u, v) in list {
                writeln!(out, "{u} {v} {}", t as i64 * span)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn churn_and_density() {
        let cfg = CommunityGraphConfig {
            snapshots: 3,
            ..CommunityGraphConfig::default()
        };
        let g = CommunityGraph::generate(&cfg);
        assert_eq!(g, CommunityGraph::generate(&cfg));
        for t in 1..3 {
            let moved = (0..400)
                .filter(|&v| g.membership[t][v] != g.membership[t - 1][v])
                .count();
            assert_eq!(moved, 20);
        }
        let intra = g.edges[0]
            .iter()
            .filter(|&&(u, v)| g.membership[0][u] == g.membership[0][v])
            .count();
        assert!(intra as f64 > 0.8 * g.edges[0].len() as f64);
    }

    #[test]
    fn persistence_keeps_edges() {
        let cfg = CommunityGraphConfig {
            churn: 0.0,
            persistence: 0.9,
            snapshots: 2,
            ..CommunityGraphConfig::default()
        };
        let g = CommunityGraph::generate(&cfg);
        let before: std::collections::BTreeSet<_> = g.edges[0].iter().collect();
        let kept = g.edges[1].iter().filter(|e| before.contains(e)).count();
        assert!(kept as f64 > 0.85 * g.edges[0].len() as f64);
    }
}
