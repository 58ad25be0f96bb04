//! Fusing a sequence of snapshot embeddings into one matrix.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{auc, hadamard_features, train_logistic, LabeledEdges, LogisticHyper};
use crate::graph::NodeSet;

/// Floor on `AUC - 0.5` when estimating k-FILDNE step weights.
pub const KFILDNE_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum AggregationSpec {
    /// Per node, the mean over the snapshots containing it.
    Mean,
    /// Per node, its most recent row.
    Last,
    /// `C_t = (1 - alpha) C_{t-1} + alpha F_t`.
    Fildne { alpha: f64 },
    /// Fildne with per-step weights estimated from validation AUC.
    KFildne,
}

impl AggregationSpec {
    pub const DEFAULT_FILDNE_ALPHA: f64 = 0.5;

    pub fn validate(&self) -> Result<()> {
        if let AggregationSpec::Fildne { alpha } = self {
            if !(0.0..=1.0).contains(alpha) {
                return Err(Error::Config(format!("fildne alpha {alpha} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for AggregationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationSpec::Mean => write!(f, "mean"),
            AggregationSpec::Last => write!(f, "last"),
            AggregationSpec::Fildne { alpha } => write!(f, "fildne{alpha}"),
            AggregationSpec::KFildne => write!(f, "kfildne"),
        }
    }
}

fn union_nodes_of(embs: &[EmbeddingMatrix]) -> NodeSet {
    embs.iter().flat_map(|e| e.ids().iter().copied()).collect()
}

fn check_inputs(embs: &[EmbeddingMatrix]) -> Result<usize> {
    let first = embs
        .first()
        .ok_or_else(|| Error::Contract("aggregation needs at least one embedding".into()))?;
    for e in embs {
        if e.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                found: e.dim(),
            });
        }
    }
    Ok(first.dim())
}

/// Aggregates `embs` (oldest first). The output covers the union of input
/// nodes; a node missing from a snapshot is skipped at that step.
pub fn aggregate(
    embs: &[EmbeddingMatrix],
    spec: &AggregationSpec,
    val_edges: Option<&LabeledEdges>,
) -> Result<EmbeddingMatrix> {
    spec.validate()?;
    let dim = check_inputs(embs)?;
    match *spec {
        AggregationSpec::Mean => {
            let mut out = EmbeddingMatrix::zeros(&union_nodes_of(embs), dim);
            let mut counts = vec![0u32; out.len()];
            for e in embs {
                for (v, row) in e.iter() {
                    let pos = out.position(v).expect("union");
                    counts[pos] += 1;
                    for (x, y) in out.row_at_mut(pos).iter_mut().zip(row) {
                        *x += y;
                    }
                }
            }
            for (pos, &c) in counts.iter().enumerate() {
                let c = c as f64;
                out.row_at_mut(pos).iter_mut().for_each(|x| *x /= c);
            }
            Ok(out)
        }
        AggregationSpec::Last => Ok(fildne(embs, &vec![1.0; embs.len() - 1], dim)),
        AggregationSpec::Fildne { alpha } => Ok(fildne(embs, &vec![alpha; embs.len() - 1], dim)),
        AggregationSpec::KFildne => {
            let val = val_edges.ok_or_else(|| {
                Error::Config("kfildne aggregation needs validation edges".into())
            })?;
            let alphas = kfildne_alphas(embs, val)?;
            Ok(fildne(embs, &alphas, dim))
        }
    }
}

/// Runs the incremental recurrence with `alphas[t - 1]` weighting step `t`.
fn fildne(embs: &[EmbeddingMatrix], alphas: &[f64], dim: usize) -> EmbeddingMatrix {
    let mut out = EmbeddingMatrix::zeros(&union_nodes_of(embs), dim);
    let mut seen = vec![false; out.len()];
    for (t, e) in embs.iter().enumerate() {
        let alpha = if t == 0 { 1.0 } else { alphas[t - 1] };
        for (v, row) in e.iter() {
            let pos = out.position(v).expect("union");
            let acc = out.row_at_mut(pos);
            if seen[pos] {
                for (x, y) in acc.iter_mut().zip(row) {
                    *x = (1.0 - alpha) * *x + alpha * y;
                }
            } else {
                acc.copy_from_slice(row);
                seen[pos] = true;
            }
        }
    }
    out
}

/// Implicit weight of each snapshot after unrolling the recurrence, for a
/// node present in all of them. `alphas` has one entry per step after the
/// first.
pub fn fildne_weights(alphas: &[f64]) -> Vec<f64> {
    let mut weights = vec![1.0];
    for &a in alphas {
        weights.iter_mut().for_each(|w| *w *= 1.0 - a);
        weights.push(a);
    }
    weights
}

/// In-sample AUC of a Hadamard-logistic model fitted on `val`, or 0.5 when
/// the covered pairs do not contain both classes.
fn validation_auc(emb: &EmbeddingMatrix, val: &LabeledEdges) -> Result<f64> {
    let covered = val.covered_by(emb);
    if !covered.has_both_classes() {
        return Ok(0.5);
    }
    let x = hadamard_features(emb, &covered.pairs)?;
    let model = train_logistic(&x, &covered.labels, LogisticHyper::default())?;
    auc(&model.decisions(&x), &covered.labels)
}

/// Step weights `alpha_t = a_t / (a_prev + a_t)` with
/// `a = max(AUC - 0.5, epsilon)`, where `a_t` scores snapshot `t` and
/// `a_prev` the running combination before it.
pub fn kfildne_alphas(embs: &[EmbeddingMatrix], val: &LabeledEdges) -> Result<Vec<f64>> {
    let dim = check_inputs(embs)?;
    let strength = |e: &EmbeddingMatrix| -> Result<f64> {
        Ok((validation_auc(e, val)? - 0.5).max(KFILDNE_EPSILON))
    };
    let mut alphas = Vec::with_capacity(embs.len().saturating_sub(1));
    for t in 1..embs.len() {
        let running = fildne(&embs[..t], &alphas, dim);
        let (a_prev, a_t) = (strength(&running)?, strength(&embs[t])?);
        alphas.push(a_t / (a_prev + a_t));
    }
    Ok(alphas)
}
