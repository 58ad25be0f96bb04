//! Temporal edge lists, the dynamic graph they describe, and its split into
//! discrete time-window snapshots.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use chrono::{DateTime, Months, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense internal node identifier.
pub type NodeId = usize;

/// Ordered set of node ids. Iteration is ascending.
pub type NodeSet = BTreeSet<NodeId>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemporalEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub timestamp: i64,
    pub weight: f64,
}

/// Maps external labels to dense ids and back.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeRegistry {
    labels: Vec<String>,
    index: HashMap<String, NodeId>,
}

impl NodeRegistry {
    pub fn intern(&mut self, label: &str) -> NodeId {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len();
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn id(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(default)]
pub struct ParseOptions {
    /// Single-character field separator; whitespace when absent.
    pub delimiter: Option<char>,
    pub directed: bool,
    /// Read a fourth column as the edge weight.
    pub has_weight: bool,
}

/// The full timestamped edge multiset of a dynamic graph.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalGraph {
    registry: NodeRegistry,
    edges: Vec<TemporalEdge>,
    directed: bool,
    weighted: bool,
}

impl TemporalGraph {
    pub fn registry(&self) -> &NodeRegistry {
        &self.registry
    }

    /// Edges sorted by timestamp, ties kept in input order.
    pub fn edges(&self) -> &[TemporalEdge] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.registry.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn time_span(&self) -> (i64, i64) {
        let first = self.edges.first().map_or(0, |e| e.timestamp);
        let last = self.edges.last().map_or(0, |e| e.timestamp);
        (first, last)
    }

    /// Writes the graph back in edge-list form using the original labels.
    pub fn write_edgelist<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.edges {
            let src = &self.registry.labels[e.src];
            let dst = &self.registry.labels[e.dst];
            if self.weighted {
                writeln!(out, "{src} {dst} {} {}", e.timestamp, e.weight)?;
            } else {
                writeln!(out, "{src} {dst} {}", e.timestamp)?;
            }
        }
        Ok(())
    }
}

/// Parses a temporal edge list: `src dst timestamp [weight]` per line.
///
/// Lines starting with `#` or `%` are comments. Node ids are assigned in order
/// of first appearance along the time-sorted edge sequence, so writing the
/// graph back out and re-reading it reproduces the same ids.
pub fn parse_temporal_edgelist<R: BufRead>(
    reader: R,
    options: &ParseOptions,
) -> Result<TemporalGraph> {
    struct Raw {
        src: String,
        dst: String,
        timestamp: i64,
        weight: f64,
    }

    let mut raw = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = match options.delimiter {
            Some(d) => trimmed.split(d).map(str::trim).collect(),
            None => trimmed.split_whitespace().collect(),
        };
        let expected = if options.has_weight { 4..=4 } else { 3..=4 };
        if !expected.contains(&fields.len()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!(
                    "expected {} fields, found {}",
                    if options.has_weight { "4" } else { "3" },
                    fields.len()
                ),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "empty node label".into(),
            });
        }
        let timestamp: i64 = fields[2].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("timestamp `{}` is not an integer", fields[2]),
        })?;
        if timestamp < 0 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("negative timestamp {timestamp}"),
            });
        }
        let weight = if options.has_weight {
            let w: f64 = fields[3].parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("weight `{}` is not a number", fields[3]),
            })?;
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("weight {w} must be finite and non-negative"),
                });
            }
            w
        } else {
            1.0
        };
        raw.push(Raw {
            src: fields[0].to_owned(),
            dst: fields[1].to_owned(),
            timestamp,
            weight,
        });
    }
    if raw.is_empty() {
        return Err(Error::EmptyGraph);
    }

    raw.sort_by_key(|r| r.timestamp);
    let mut registry = NodeRegistry::default();
    let edges = raw
        .iter()
        .map(|r| TemporalEdge {
            src: registry.intern(&r.src),
            dst: registry.intern(&r.dst),
            timestamp: r.timestamp,
            weight: r.weight,
        })
        .collect();

    Ok(TemporalGraph {
        registry,
        edges,
        directed: options.directed,
        weighted: options.has_weight,
    })
}

/// One neighbor entry of a snapshot adjacency list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub node: NodeId,
    pub weight: f64,
    pub timestamp: i64,
}

/// Subgraph restricted to the half-open time window `[start, end)`.
#[derive(Clone, Debug)]
pub struct Snapshot {
    index: usize,
    start: i64,
    end: i64,
    directed: bool,
    nodes: NodeSet,
    edges: Vec<TemporalEdge>,
    adjacency: HashMap<NodeId, Vec<Neighbor>>,
}

impl Snapshot {
    pub fn new(
        index: usize,
        time_range: (i64, i64),
        edges: Vec<TemporalEdge>,
        directed: bool,
    ) -> Self {
        let mut nodes = NodeSet::new();
        let mut adjacency: HashMap<NodeId, Vec<Neighbor>> = HashMap::new();
        for e in &edges {
            nodes.insert(e.src);
            nodes.insert(e.dst);
            adjacency.entry(e.src).or_default().push(Neighbor {
                node: e.dst,
                weight: e.weight,
                timestamp: e.timestamp,
            });
            if !directed && e.src != e.dst {
                adjacency.entry(e.dst).or_default().push(Neighbor {
                    node: e.src,
                    weight: e.weight,
                    timestamp: e.timestamp,
                });
            }
        }
        Snapshot {
            index,
            start: time_range.0,
            end: time_range.1,
            directed,
            nodes,
            edges,
            adjacency,
        }
    }

    /// Builds an untimed snapshot from plain pairs, all stamped at time 0.
    pub fn from_pairs(index: usize, pairs: &[(NodeId, NodeId)], directed: bool) -> Self {
        let edges = pairs
            .iter()
            .map(|&(src, dst)| TemporalEdge {
                src,
                dst,
                timestamp: 0,
                weight: 1.0,
            })
            .collect();
        Snapshot::new(index, (0, 1), edges, directed)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn time_range(&self) -> (i64, i64) {
        (self.start, self.end)
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn edges(&self) -> &[TemporalEdge] {
        &self.edges
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Outgoing neighbor entries (both directions for undirected graphs).
    /// Repeated interactions appear once per edge.
    pub fn neighbors(&self, node: NodeId) -> &[Neighbor] {
        self.adjacency.get(&node).map_or(&[], Vec::as_slice)
    }

    pub fn neighbor_set(&self, node: NodeId) -> NodeSet {
        self.neighbors(node).iter().map(|n| n.node).collect()
    }

    /// Whether `(u, v)` is an edge, in either direction for undirected graphs.
    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).iter().any(|n| n.node == v)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Monthly,
    Yearly,
    /// Fixed window length in timestamp units (seconds for UNIX time).
    FixedSpan(i64),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct SnapshotPlan {
    pub frequency: Frequency,
    #[serde(default)]
    pub drop_leading: usize,
    #[serde(default)]
    pub merge_trailing: usize,
}

impl SnapshotPlan {
    pub fn new(frequency: Frequency) -> Self {
        SnapshotPlan {
            frequency,
            drop_leading: 0,
            merge_trailing: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.merge_trailing == 1 {
            return Err(Error::Config(
                "merge_trailing must be 0 or at least 2".into(),
            ));
        }
        if let Frequency::FixedSpan(span) = self.frequency {
            if span <= 0 {
                return Err(Error::Config(format!(
                    "fixed span must be positive, got {span}"
                )));
            }
        }
        Ok(())
    }
}

/// Window boundaries `b_0 < b_1 < ... < b_k` with `b_0 = first` and `b_k > last`.
/// Calendar frequencies step from the first timestamp in whole UTC months or
/// years.
fn window_bounds(first: i64, last: i64, frequency: Frequency) -> Result<Vec<i64>> {
    let mut bounds = vec![first];
    match frequency {
        Frequency::FixedSpan(span) => {
            let mut b = first;
            while b <= last {
                b += span;
                bounds.push(b);
            }
        }
        Frequency::Monthly | Frequency::Yearly => {
            let step = if frequency == Frequency::Monthly { 1 } else { 12 };
            let anchor = DateTime::<Utc>::from_timestamp(first, 0)
                .ok_or_else(|| Error::Config(format!("timestamp {first} out of range")))?;
            let mut k = 1u32;
            loop {
                let next = anchor
                    .checked_add_months(Months::new(k * step))
                    .ok_or_else(|| Error::Config("calendar overflow".into()))?
                    .timestamp();
                bounds.push(next);
                if next > last {
                    break;
                }
                k += 1;
            }
        }
    }
    Ok(bounds)
}

/// Splits the graph into consecutive snapshots according to `plan`.
pub fn split_snapshots(graph: &TemporalGraph, plan: &SnapshotPlan) -> Result<Vec<Snapshot>> {
    plan.validate()?;
    if graph.edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let (first, last) = graph.time_span();
    let bounds = window_bounds(first, last, plan.frequency)?;

    let mut windows: Vec<((i64, i64), Vec<TemporalEdge>)> = bounds
        .windows(2)
        .map(|w| ((w[0], w[1]), Vec::new()))
        .collect();
    for e in &graph.edges {
        // bounds are sorted; the window is the last bound <= timestamp
        let k = bounds.partition_point(|&b| b <= e.timestamp) - 1;
        windows[k].1.push(*e);
    }

    if plan.drop_leading >= windows.len() {
        return Err(Error::Config(format!(
            "dropping {} leading snapshots leaves nothing of {}",
            plan.drop_leading,
            windows.len()
        )));
    }
    windows.drain(..plan.drop_leading);

    if plan.merge_trailing >= 2 {
        if plan.merge_trailing > windows.len() {
            return Err(Error::Config(format!(
                "cannot merge {} trailing snapshots out of {}",
                plan.merge_trailing,
                windows.len()
            )));
        }
        let tail = windows.split_off(windows.len() - plan.merge_trailing);
        let start = tail[0].0 .0;
        let end = tail[tail.len() - 1].0 .1;
        let edges = tail.into_iter().flat_map(|(_, e)| e).collect();
        windows.push(((start, end), edges));
    }

    if windows.len() < 2 {
        return Err(Error::Config(format!(
            "plan yields {} snapshot(s), at least 2 are required",
            windows.len()
        )));
    }

    Ok(windows
        .into_iter()
        .enumerate()
        .map(|(i, (range, edges))| Snapshot::new(i, range, edges, graph.directed))
        .collect())
}

/// Nodes present in both snapshots, ascending.
pub fn common_nodes(a: &Snapshot, b: &Snapshot) -> NodeSet {
    a.nodes.intersection(&b.nodes).copied().collect()
}

/// Union of node sets of the given snapshots.
pub fn union_nodes<'a>(snapshots: impl IntoIterator<Item = &'a Snapshot>) -> NodeSet {
    let mut out = NodeSet::new();
    for s in snapshots {
        out.extend(s.nodes.iter().copied());
    }
    out
}
