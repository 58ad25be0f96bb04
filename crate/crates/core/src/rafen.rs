//! Alignment regularization: an MSE pull of common nodes toward the previous
//! snapshot's embedding, added to the embedding model's own loss.
//!
//! Three alignment terms are provided: all common nodes, all common nodes
//! weighted by an activity score, and a top-`p` reference subset. Each is
//! `(1/N) * sum_v w_v * ||F_cur(v) - F_anchor(v)||^2`; they differ only in the
//! node set and weights. The anchor is frozen and never receives gradient.
//!
//! [`LossScaler`] divides both terms by their first-batch magnitudes before
//! combining them, either as `(1 - alpha) * model + alpha * alignment` or as
//! the plain sum.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeSet};
use crate::scoring::{ReferenceSet, ScoreMap};

/// First-batch magnitudes below this are replaced by 1.
pub const SCALE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    All,
    Weighted,
    Ref,
}

/// How the scaled model and alignment losses are combined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `(1 - alpha) * model + alpha * alignment`.
    Alpha(f64),
    /// `model + alignment`.
    Simplified,
}

impl Weighting {
    pub fn from_alpha(alpha: Option<f64>) -> Self {
        alpha.map_or(Weighting::Simplified, Weighting::Alpha)
    }

    /// Coefficients applied to the scaled model and alignment terms.
    pub fn coefficients(self) -> (f64, f64) {
        match self {
            Weighting::Alpha(a) => (1.0 - a, a),
            Weighting::Simplified => (1.0, 1.0),
        }
    }
}

/// Which common nodes enter the alignment term on each batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentScope {
    /// The whole common (or reference) set every batch.
    #[default]
    Full,
    /// Only aligned nodes that occur in the batch, averaged over those.
    Batch,
}

/// Value and per-node gradient of an alignment term.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentLoss {
    pub loss: f64,
    pub gradients: BTreeMap<NodeId, Vec<f64>>,
}

/// Weighted squared-distance term against a frozen anchor.
#[derive(Clone, Debug)]
pub struct AlignmentTerm {
    dim: usize,
    nodes: Vec<NodeId>,
    weights: Vec<f64>,
    anchor_rows: Vec<f64>,
}

impl AlignmentTerm {
    fn build(anchor: &EmbeddingMatrix, nodes: &NodeSet, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Contract("alignment node set is empty".into()));
        }
        let mut anchor_rows = Vec::with_capacity(nodes.len() * anchor.dim());
        for &v in nodes {
            anchor_rows.extend_from_slice(anchor.try_row(v)?);
        }
        Ok(AlignmentTerm {
            dim: anchor.dim(),
            nodes: nodes.iter().copied().collect(),
            weights,
            anchor_rows,
        })
    }

    /// Every common node with unit weight.
    pub fn all(anchor: &EmbeddingMatrix, common: &NodeSet) -> Result<Self> {
        Self::build(anchor, common, vec![1.0; common.len()])
    }

    /// Common nodes weighted by their scores rescaled to mean 1.
    pub fn weighted(anchor: &EmbeddingMatrix, common: &NodeSet, scores: &ScoreMap) -> Result<Self> {
        let raw = common
            .iter()
            .map(|&v| {
                scores.get(v).ok_or_else(|| {
                    Error::Contract(format!("score map has no entry for common node {v}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        Self::build(anchor, common, mean_one_weights(&raw)?)
    }

    /// Reference nodes with unit weight.
    pub fn reference(anchor: &EmbeddingMatrix, reference: &ReferenceSet) -> Result<Self> {
        Self::all(anchor, &reference.nodes)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `coef * gradient` into `grad`, laid out like `current`'s rows, and
    /// returns the loss. When `restrict` is given (indexed by row position of
    /// `current`) only flagged nodes count and the mean is over those.
    pub fn accumulate(
        &self,
        current: &EmbeddingMatrix,
        restrict: Option<&[bool]>,
        coef: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        if current.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: current.dim(),
            });
        }
        let mut active = Vec::with_capacity(self.nodes.len());
        for (k, &v) in self.nodes.iter().enumerate() {
            let pos = current.position(v).ok_or(Error::MissingNode(v))?;
            if restrict.is_none_or(|flags| flags[pos]) {
                active.push((k, pos));
            }
        }
        if active.is_empty() {
            return Ok(0.0);
        }
        let n = active.len() as f64;
        let d = self.dim;
        let mut loss = 0.0;
        for &(k, pos) in &active {
            let cur = current.row_at(pos);
            let anchor = &self.anchor_rows[k * d..(k + 1) * d];
            let w = self.weights[k];
            let mut sq = 0.0;
            for (c, a) in cur.iter().zip(anchor) {
                let diff = c - a;
                sq += diff * diff;
            }
            loss += sq * w;
            let scale = coef * (2.0 * w / n);
            let g = &mut grad[pos * d..(pos + 1) * d];
            for ((gi, c), a) in g.iter_mut().zip(cur).zip(anchor) {
                *gi += scale * (c - a);
            }
        }
        Ok(loss / n)
    }

    pub fn evaluate(&self, current: &EmbeddingMatrix) -> Result<AlignmentLoss> {
        let mut grad = vec![0.0; current.len() * current.dim()];
        let loss = self.accumulate(current, None, 1.0, &mut grad)?;
        let d = self.dim;
        let gradients = self
            .nodes
            .iter()
            .map(|&v| {
                let pos = current.position(v).expect("checked in accumulate");
                (v, grad[pos * d..(pos + 1) * d].to_vec())
            })
            .collect();
        Ok(AlignmentLoss { loss, gradients })
    }
}

/// Rescales non-negative scores so their mean is 1. A constant map yields
/// exactly unit weights.
fn mean_one_weights(scores: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    if scores.iter().all(|&s| s == scores[0]) {
        return Ok(vec![1.0; scores.len()]);
    }
    let mean = total / scores.len() as f64;
    Ok(scores.iter().map(|s| s / mean).collect())
}

fn check_dims(cur: &EmbeddingMatrix, anchor: &EmbeddingMatrix) -> Result<()> {
    if cur.dim() != anchor.dim() {
        return Err(Error::DimensionMismatch {
            expected: anchor.dim(),
            found: cur.dim(),
        });
    }
    Ok(())
}

/// Mean squared distance over all common nodes.
pub fn alignment_loss_all(
    cur: &EmbeddingMatrix,
    anchor: &EmbeddingMatrix,
    common: &NodeSet,
) -> Result<AlignmentLoss> {
    check_dims(cur, anchor)?;
    AlignmentTerm::all(anchor, common)?.evaluate(cur)
}

/// Score-weighted mean squared distance over all common nodes.
pub fn alignment_loss_weighted(
    cur: &EmbeddingMatrix,
    anchor: &EmbeddingMatrix,
    common: &NodeSet,
    scores: &ScoreMap,
) -> Result<AlignmentLoss> {
    check_dims(cur, anchor)?;
    AlignmentTerm::weighted(anchor, common, scores)?.evaluate(cur)
}

/// Mean squared distance over the reference nodes only.
pub fn alignment_loss_ref(
    cur: &EmbeddingMatrix,
    anchor: &EmbeddingMatrix,
    reference: &ReferenceSet,
) -> Result<AlignmentLoss> {
    check_dims(cur, anchor)?;
    AlignmentTerm::reference(anchor, reference)?.evaluate(cur)
}

/// Raw and scaled loss terms of one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub model: f64,
    pub alignment: f64,
    pub model_scaled: f64,
    pub alignment_scaled: f64,
    pub combined: f64,
    pub scale_model: f64,
    pub scale_alignment: f64,
    /// Multiplier on the raw model gradient.
    pub grad_model: f64,
    /// Multiplier on the raw alignment gradient.
    pub grad_alignment: f64,
}

/// Records first-batch loss magnitudes and normalizes later batches by them.
#[derive(Clone, Debug, Default)]
pub struct LossScaler {
    scales: Option<(f64, f64)>,
}

impl LossScaler {
    pub fn new() -> Self {
        Self::default()
    }

    /// `(scale_model, scale_alignment)` once the first batch has been seen.
    pub fn scales(&self) -> Option<(f64, f64)> {
        self.scales
    }

    pub fn combine(&mut self, model: f64, alignment: f64, weighting: Weighting) -> LossParts {
        let floor = |x: f64| if x.abs() < SCALE_FLOOR { 1.0 } else { x.abs() };
        let (scale_model, scale_alignment) =
            *self.scales.get_or_insert_with(|| (floor(model), floor(alignment)));
        let model_scaled = model / scale_model;
        let alignment_scaled = alignment / scale_alignment;
        let (cm, ca) = weighting.coefficients();
        LossParts {
            model,
            alignment,
            model_scaled,
            alignment_scaled,
            combined: cm * model_scaled + ca * alignment_scaled,
            scale_model,
            scale_alignment,
            grad_model: cm / scale_model,
            grad_alignment: ca / scale_alignment,
        }
    }
}

/// A training-time alignment regularizer.
pub trait Regularizer: Sync {
    /// Nodes whose rows the regularizer reads in the trained matrix.
    fn nodes(&self) -> &[NodeId];
    fn weighting(&self) -> Weighting;
    fn scope(&self) -> AlignmentScope;
    /// Adds the raw alignment gradient into `grad` and returns the raw loss.
    fn accumulate(
        &self,
        current: &EmbeddingMatrix,
        restrict: Option<&[bool]>,
        grad: &mut [f64],
    ) -> Result<f64>;
    /// Short label used in cache keys and traces.
    fn describe(&self) -> String;
}

/// Settings for one alignment regularizer.
#[derive(Clone, Debug)]
pub struct RafenConfig {
    pub variant: Variant,
    pub alpha: Option<f64>,
    pub scores: Option<ScoreMap>,
    pub reference: Option<ReferenceSet>,
    pub anchor: EmbeddingMatrix,
    pub common: NodeSet,
    pub scope: AlignmentScope,
}

impl RafenConfig {
    pub fn new(variant: Variant, anchor: EmbeddingMatrix, common: NodeSet) -> Self {
        RafenConfig {
            variant,
            alpha: None,
            scores: None,
            reference: None,
            anchor,
            common,
            scope: AlignmentScope::Full,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha must lie in [0, 1], got {a}")));
            }
        }
        match self.variant {
            Variant::Weighted if self.scores.is_none() => {
                return Err(Error::Config("weighted alignment requires a score map".into()))
            }
            Variant::Ref if self.reference.is_none() => {
                return Err(Error::Config("reference alignment requires reference nodes".into()))
            }
            _ => {}
        }
        if self.anchor.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.anchor.dim(),
            });
        }
        Ok(())
    }

    pub fn build(&self, dim: usize) -> Result<Rafen> {
        self.validate(dim)?;
        let term = match self.variant {
            Variant::All => AlignmentTerm::all(&self.anchor, &self.common)?,
            Variant::Weighted => AlignmentTerm::weighted(
                &self.anchor,
                &self.common,
                self.scores.as_ref().expect("validated"),
            )?,
            Variant::Ref => {
                let reference = self.reference.as_ref().expect("validated");
                if !reference.nodes.is_subset(&self.common) {
                    return Err(Error::Contract(
                        "reference nodes must be common nodes".into(),
                    ));
                }
                AlignmentTerm::reference(&self.anchor, reference)?
            }
        };
        Ok(Rafen {
            term,
            variant: self.variant,
            weighting: Weighting::from_alpha(self.alpha),
            scope: self.scope,
        })
    }
}

/// A built alignment regularizer ready to attach to training.
#[derive(Clone, Debug)]
pub struct Rafen {
    term: AlignmentTerm,
    variant: Variant,
    weighting: Weighting,
    scope: AlignmentScope,
}

impl Rafen {
    pub fn term(&self) -> &AlignmentTerm {
        &self.term
    }
}

impl Regularizer for Rafen {
    fn nodes(&self) -> &[NodeId] {
        self.term.nodes()
    }

    fn weighting(&self) -> Weighting {
        self.weighting
    }

    fn scope(&self) -> AlignmentScope {
        self.scope
    }

    fn accumulate(
        &self,
        current: &EmbeddingMatrix,
        restrict: Option<&[bool]>,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.term.accumulate(current, restrict, 1.0, grad)
    }

    fn describe(&self) -> String {
        let weighting = match self.weighting {
            Weighting::Alpha(a) => format!("alpha={a}"),
            Weighting::Simplified => "simplified".into(),
        };
        format!(
            "{:?}/{weighting}/{:?}/{} nodes",
            self.variant,
            self.scope,
            self.term.nodes.len()
        )
    }
}
