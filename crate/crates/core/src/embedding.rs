//! Node-indexed embedding matrices and their on-disk formats.
//!
//! Binary layout (little-endian): magic `RAFN`, version `u32`, row count `u64`,
//! dimension `u32`, then one record per row of `node_id: u64` followed by
//! `dim` 32-bit floats. CSV layout: `node_id,v1,...,vd` with a header line.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeSet};

const MAGIC: &[u8; 4] = b"RAFN";
const VERSION: u32 = 1;

/// Dense `n x d` matrix whose rows are keyed by node id, stored in ascending
/// id order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(nodes: &NodeSet, dim: usize) -> Self {
        let ids: Vec<NodeId> = nodes.iter().copied().collect();
        let index = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        EmbeddingMatrix {
            dim,
            data: vec![0.0; ids.len() * dim],
            ids,
            index,
        }
    }

    /// Builds a matrix from `(node, row)` pairs. Rows are re-ordered by id.
    pub fn from_rows<I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, Vec<f64>)>,
    {
        let mut rows: Vec<(NodeId, Vec<f64>)> = rows.into_iter().collect();
        rows.sort_by_key(|(id, _)| *id);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Contract("duplicate node row".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        let mut ids = Vec::with_capacity(rows.len());
        for (id, row) in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            ids.push(id);
            data.extend_from_slice(&row);
        }
        let index = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        Ok(EmbeddingMatrix {
            dim,
            ids,
            index,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Node ids in row order (ascending).
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn node_set(&self) -> NodeSet {
        self.ids.iter().copied().collect()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.index.contains_key(&node)
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.index.get(&node).copied()
    }

    pub fn row(&self, node: NodeId) -> Option<&[f64]> {
        self.position(node).map(|i| self.row_at(i))
    }

    pub fn row_mut(&mut self, node: NodeId) -> Option<&mut [f64]> {
        let i = self.position(node)?;
        Some(self.row_at_mut(i))
    }

    pub fn try_row(&self, node: NodeId) -> Result<&[f64]> {
        self.row(node).ok_or(Error::MissingNode(node))
    }

    pub fn row_at(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_at_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &[f64])> + '_ {
        self.ids.iter().enumerate().map(|(i, &id)| (id, self.row_at(i)))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Rounds every entry to the nearest `f32`, matching what the binary
    /// format stores.
    pub fn quantize_f32(&mut self) {
        for x in &mut self.data {
            *x = *x as f32 as f64;
        }
    }

    pub fn max_abs_diff(&self, other: &EmbeddingMatrix) -> Option<f64> {
        if self.ids != other.ids || self.dim != other.dim {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        for (id, row) in self.iter() {
            out.write_all(&(id as u64).to_le_bytes())?;
            for &x in row {
                out.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + self.len() * (8 + 4 * self.dim));
        self.write_binary(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let fmt = |e: std::io::Error| Error::Format(e.to_string());
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(fmt)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4).map_err(fmt)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        input.read_exact(&mut b8).map_err(fmt)?;
        let n = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b4).map_err(fmt)?;
        let dim = u32::from_le_bytes(b4) as usize;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut b8).map_err(fmt)?;
            let id = u64::from_le_bytes(b8) as NodeId;
            let mut row = Vec::with_capacity(dim);
            for _ in 0..dim {
                input.read_exact(&mut b4).map_err(fmt)?;
                row.push(f32::from_le_bytes(b4) as f64);
            }
            rows.push((id, row));
        }
        EmbeddingMatrix::from_rows(dim, rows)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "node_id")?;
        for k in 1..=self.dim {
            write!(out, ",v{k}")?;
        }
        writeln!(out)?;
        for (id, row) in self.iter() {
            write!(out, "{id}")?;
            for x in row {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        let mut dim = None;
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let bad = || Error::Parse {
                line: i + 1,
                message: "malformed embedding row".into(),
            };
            let id: NodeId = fields.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            let row = fields
                .map(|f| f.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: row.len(),
                    })
                }
                _ => {}
            }
            rows.push((id, row));
        }
        EmbeddingMatrix::from_rows(dim.unwrap_or(0), rows)
    }
}
