//! Link-prediction evaluation: dataset construction, Hadamard features,
//! logistic regression, AUC, per-run reports, rank tables and the
//! previous/next snapshot transfer study.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate, AggregationSpec};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeSet, Snapshot};
use crate::linalg::DenseMatrix;
use crate::seed;

/// Negative sampling gives up after this many draws per positive.
pub const NEGATIVE_OVERSAMPLING: usize = 50;

/// Labeled node pairs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledEdges {
    pub pairs: Vec<(NodeId, NodeId)>,
    pub labels: Vec<bool>,
}

impl LabeledEdges {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let p = self.positives();
        p > 0 && p < self.len()
    }

    /// The pairs whose endpoints both have rows in `emb`.
    pub fn covered_by(&self, emb: &EmbeddingMatrix) -> LabeledEdges {
        let mut out = LabeledEdges::default();
        for (&(u, v), &l) in self.pairs.iter().zip(&self.labels) {
            if emb.contains(u) && emb.contains(v) {
                out.pairs.push((u, v));
                out.labels.push(l);
            }
        }
        out
    }
}

/// Per-class split fractions; the test share is the remainder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl SplitFractions {
    pub const STANDARD: SplitFractions = SplitFractions { train: 0.6, val: 0.2 };
    pub const TRAIN_TEST: SplitFractions = SplitFractions { train: 0.6, val: 0.0 };
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Positives from a target snapshot and an equal number of sampled
/// non-edges. Example `i` is `positives[i]` for `i < positives.len()` and a
/// negative afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPredDataset {
    pub positives: Vec<(NodeId, NodeId)>,
    pub negatives: Vec<(NodeId, NodeId)>,
    pub splits: Splits,
    pub directed: bool,
    pub seed: u64,
}

impl LinkPredDataset {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn example(&self, i: usize) -> ((NodeId, NodeId), bool) {
        match self.positives.get(i) {
            Some(&p) => (p, true),
            None => (self.negatives[i - self.positives.len()], false),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledEdges {
        let mut out = LabeledEdges::default();
        for &i in indices {
            let (pair, label) = self.example(i);
            out.pairs.push(pair);
            out.labels.push(label);
        }
        out
    }

    pub fn train(&self) -> LabeledEdges {
        self.subset(&self.splits.train)
    }

    pub fn val(&self) -> LabeledEdges {
        self.subset(&self.splits.val)
    }

    pub fn test(&self) -> LabeledEdges {
        self.subset(&self.splits.test)
    }

    pub fn train_val(&self) -> LabeledEdges {
        let idx: Vec<usize> = self
            .splits
            .train
            .iter()
            .chain(&self.splits.val)
            .copied()
            .collect();
        self.subset(&idx)
    }
}

fn pair_key(u: NodeId, v: NodeId, directed: bool) -> (NodeId, NodeId) {
    if directed || u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Builds a dataset with the standard 60/20/20 split.
pub fn build_dataset(target: &Snapshot, seen: &NodeSet, seed: u64) -> Result<LinkPredDataset> {
    build_dataset_with(target, seen, seed, SplitFractions::STANDARD)
}

/// Positives are the target's distinct non-loop edges with both endpoints in
/// `seen`; negatives are uniform pairs of seen nodes that are neither target
/// edges nor self-loops nor repeats. Undirected pairs are unordered.
pub fn build_dataset_with(
    target: &Snapshot,
    seen: &NodeSet,
    seed: u64,
    fractions: SplitFractions,
) -> Result<LinkPredDataset> {
    if target.is_empty() {
        return Err(Error::Contract("link prediction target snapshot is empty".into()));
    }
    let directed = target.is_directed();
    let positives: Vec<(NodeId, NodeId)> = target
        .edges()
        .iter()
        .filter(|e| e.src != e.dst && seen.contains(&e.src) && seen.contains(&e.dst))
        .map(|e| pair_key(e.src, e.dst, directed))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if positives.is_empty() {
        return Err(Error::SingleClass {
            positives: 0,
            negatives: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[0xda7a]));
    let nodes: Vec<NodeId> = seen.iter().copied().collect();
    let needed = positives.len();
    let budget = NEGATIVE_OVERSAMPLING * needed;
    let mut chosen = BTreeSet::new();
    let mut negatives = Vec::with_capacity(needed);
    let mut attempts = 0;
    while negatives.len() < needed && attempts < budget {
        attempts += 1;
        let (&u, &v) = (
            nodes.choose(&mut rng).expect("seen nodes"),
            nodes.choose(&mut rng).expect("seen nodes"),
        );
        if u == v || target.has_edge(u, v) || (!directed && target.has_edge(v, u)) {
            continue;
        }
        let key = pair_key(u, v, directed);
        if chosen.insert(key) {
            negatives.push(key);
        }
    }
    if negatives.len() < needed {
        return Err(Error::NegativeSampling {
            needed,
            found: negatives.len(),
            attempts,
        });
    }

    let mut splits = Splits::default();
    for class in [0..needed, needed..2 * needed] {
        let mut idx: Vec<usize> = class.collect();
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let n_train = (fractions.train * n).round() as usize;
        let n_val = ((fractions.val * n).round() as usize).min(idx.len() - n_train);
        splits.train.extend_from_slice(&idx[..n_train]);
        splits.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        splits.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    Ok(LinkPredDataset {
        positives,
        negatives,
        splits,
        directed,
        seed,
    })
}

/// Row `i` is `emb(u_i) ⊙ emb(v_i)`.
pub fn hadamard_features(emb: &EmbeddingMatrix, pairs: &[(NodeId, NodeId)]) -> Result<DenseMatrix> {
    let d = emb.dim();
    let mut data = Vec::with_capacity(pairs.len() * d);
    for &(u, v) in pairs {
        let (a, b) = (emb.try_row(u)?, emb.try_row(v)?);
        data.extend(a.iter().zip(b).map(|(x, y)| x * y));
    }
    DenseMatrix::from_vec(pairs.len(), d, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticHyper {
    /// Inverse L2 strength on the weights; the bias is not penalized.
    pub c: f64,
    pub max_iter: usize,
    /// Stop once the gradient's max-norm falls below this.
    pub tolerance: f64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        LogisticHyper {
            c: 1.0,
            max_iter: 1000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyper: LogisticHyper,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn decisions(&self, features: &DenseMatrix) -> Vec<f64> {
        (0..features.rows()).map(|i| self.decision(features.row(i))).collect()
    }

    pub fn accuracy(&self, features: &DenseMatrix, labels: &[bool]) -> f64 {
        let hits = self
            .decisions(features)
            .iter()
            .zip(labels)
            .filter(|&(&z, &l)| (z > 0.0) == l)
            .count();
        hits as f64 / labels.len().max(1) as f64
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Problem<'a> {
    x: &'a DenseMatrix,
    y: Vec<f64>,
    c: f64,
}

impl Problem<'_> {
    /// Objective `½‖w‖² + C Σ log(1 + e^{−y z})` with `params = [w, b]`.
    fn objective(&self, params: &[f64]) -> f64 {
        let d = self.x.cols();
        let (w, b) = (&params[..d], params[d]);
        let penalty: f64 = 0.5 * w.iter().map(|x| x * x).sum::<f64>();
        let data: f64 = (0..self.x.rows())
            .map(|i| {
                let z = b + self.x.row(i).iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
                softplus(-self.y[i] * z)
            })
            .sum();
        penalty + self.c * data
    }

    fn gradient(&self, params: &[f64], grad: &mut [f64]) {
        let d = self.x.cols();
        let (w, b) = (&params[..d], params[d]);
        grad[..d].copy_from_slice(w);
        grad[d] = 0.0;
        for i in 0..self.x.rows() {
            let row = self.x.row(i);
            let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            let coef = -self.c * self.y[i] * sigmoid(-self.y[i] * z);
            for (g, a) in grad[..d].iter_mut().zip(row) {
                *g += coef * a;
            }
            grad[d] += coef;
        }
    }
}

/// Fits L2-regularized logistic regression by full-batch gradient descent
/// with Armijo backtracking. Returns the model and the objective after each
/// iteration, starting with the objective at zero.
pub fn train_logistic_traced(
    features: &DenseMatrix,
    labels: &[bool],
    hyper: LogisticHyper,
) -> Result<(LogisticModel, Vec<f64>)> {
    if features.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.rows(),
            found: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass {
            positives,
            negatives: labels.len() - positives,
        });
    }
    if !features.is_finite() {
        return Err(Error::NonFinite);
    }
    let d = features.cols();
    let problem = Problem {
        x: features,
        y: labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect(),
        c: hyper.c,
    };
    // Lipschitz bound of the gradient: 1 + C/4 · ‖[X 1]‖_F²
    let lipschitz = 1.0 + 0.25 * hyper.c * (features.frobenius().powi(2) + features.rows() as f64);
    let mut step = 1.0 / lipschitz;
    let mut params = vec![0.0; d + 1];
    let mut grad = vec![0.0; d + 1];
    let mut trial = vec![0.0; d + 1];
    let mut f = problem.objective(&params);
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < hyper.max_iter {
        problem.gradient(&params, &mut grad);
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < hyper.tolerance {
            converged = true;
            break;
        }
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        step *= 2.0;
        let mut accepted = false;
        for _ in 0..60 {
            for ((t, p), g) in trial.iter_mut().zip(&params).zip(&grad) {
                *t = p - step * g;
            }
            let ft = problem.objective(&trial);
            if ft <= f - 1e-4 * step * g2 {
                std::mem::swap(&mut params, &mut trial);
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no representable descent left
            converged = true;
            break;
        }
        iterations += 1;
        history.push(f);
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite);
    }
    let bias = params[d];
    params.truncate(d);
    Ok((
        LogisticModel {
            weights: params,
            bias,
            hyper,
            iterations,
            converged,
        },
        history,
    ))
}

pub fn train_logistic(
    features: &DenseMatrix,
    labels: &[bool],
    hyper: LogisticHyper,
) -> Result<LogisticModel> {
    train_logistic_traced(features, labels, hyper).map(|(m, _)| m)
}

/// Area under the ROC curve by rank sums with averaged tie ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite);
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass {
            positives: pos,
            negatives: neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Fits on `train` and returns the AUC of the decision values on `test`.
pub fn fit_and_score(
    emb: &EmbeddingMatrix,
    train: &LabeledEdges,
    test: &LabeledEdges,
    hyper: LogisticHyper,
) -> Result<f64> {
    let model = train_logistic(&hadamard_features(emb, &train.pairs)?, &train.labels, hyper)?;
    let scores = model.decisions(&hadamard_features(emb, &test.pairs)?);
    auc(&scores, &test.labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    /// Fit on train, scored on validation.
    pub val_auc: f64,
    /// Fit on train and validation, scored on test.
    pub test_auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub method: String,
    pub aggregation: String,
    pub runs: Vec<RunResult>,
    pub mean: f64,
    /// Sample standard deviation of the test AUCs; zero for a single run.
    pub std: f64,
}

impl EvalReport {
    pub fn label(&self) -> String {
        format!("{}/{}", self.method, self.aggregation)
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates each run's snapshot embeddings and scores last-snapshot link
/// prediction. Runs are independent and reduce in run order.
pub fn evaluate_method(
    dataset_name: &str,
    method: &str,
    runs: &[Vec<EmbeddingMatrix>],
    spec: &AggregationSpec,
    dataset: &LinkPredDataset,
    hyper: LogisticHyper,
) -> Result<EvalReport> {
    use rayon::prelude::*;
    if runs.is_empty() {
        return Err(Error::Config("evaluation needs at least one run".into()));
    }
    let (train, val, test, train_val) =
        (dataset.train(), dataset.val(), dataset.test(), dataset.train_val());
    let results: Vec<RunResult> = runs
        .par_iter()
        .enumerate()
        .map(|(run, snapshots)| {
            let emb = aggregate(snapshots, spec, Some(&val))?;
            let val_auc = if val.has_both_classes() {
                fit_and_score(&emb, &train, &val, hyper)?
            } else {
                f64::NAN
            };
            let test_auc = fit_and_score(&emb, &train_val, &test, hyper)?;
            Ok(RunResult {
                run,
                val_auc,
                test_auc,
            })
        })
        .collect::<Result<_>>()?;
    let aucs: Vec<f64> = results.iter().map(|r| r.test_auc).collect();
    let (mean, std) = mean_std(&aucs);
    Ok(EvalReport {
        dataset: dataset_name.to_string(),
        method: method.to_string(),
        aggregation: spec.label(),
        runs: results,
        mean,
        std,
    })
}

/// Ranks of `values`, 1 for the largest, ties sharing their average rank.
pub fn descending_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Mean rank of each entry (by `key`) per dataset and overall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub keys: Vec<String>,
    pub datasets: Vec<String>,
    /// `ranks[k][d]`: mean rank of key `k` on dataset `d`, NaN when absent.
    pub ranks: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

/// Within each dataset, entries are ranked per run index by test AUC and
/// the ranks averaged over runs.
pub fn rank_table(reports: &[EvalReport], key: impl Fn(&EvalReport) -> String) -> RankTable {
    let keys: Vec<String> = reports.iter().map(&key).collect::<BTreeSet<_>>().into_iter().collect();
    let datasets: Vec<String> = reports
        .iter()
        .map(|r| r.dataset.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut ranks = vec![vec![f64::NAN; datasets.len()]; keys.len()];
    for (di, ds) in datasets.iter().enumerate() {
        let group: Vec<&EvalReport> = reports.iter().filter(|r| &r.dataset == ds).collect();
        let runs = group.iter().map(|r| r.runs.len()).min().unwrap_or(0);
        let mut sums = vec![0.0; group.len()];
        for run in 0..runs {
            let values: Vec<f64> = group.iter().map(|r| r.runs[run].test_auc).collect();
            for (s, r) in sums.iter_mut().zip(descending_ranks(&values)) {
                *s += r;
            }
        }
        for (r, s) in group.iter().zip(sums) {
            let ki = keys.binary_search(&key(r)).expect("key collected");
            ranks[ki][di] = s / runs.max(1) as f64;
        }
    }
    let mean = ranks
        .iter()
        .map(|row| {
            let present: Vec<f64> = row.iter().copied().filter(|x| !x.is_nan()).collect();
            present.iter().sum::<f64>() / present.len().max(1) as f64
        })
        .collect();
    RankTable {
        keys,
        datasets,
        ranks,
        mean,
    }
}

impl RankTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "key,{},mean", self.datasets.join(","))?;
        for ((k, row), mean) in self.keys.iter().zip(&self.ranks).zip(&self.mean) {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.4}")).collect();
            writeln!(out, "{k},{},{mean:.4}", cells.join(","))?;
        }
        Ok(())
    }
}

/// All reports of an experiment plus rank tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub reports: Vec<EvalReport>,
    /// Methods and aggregations ranked jointly.
    pub ranks: RankTable,
    /// Aggregation schemes ranked within each method.
    pub aggregation_ranks: BTreeMap<String, RankTable>,
}

impl EvalSummary {
    pub fn new(reports: Vec<EvalReport>) -> Self {
        let ranks = rank_table(&reports, EvalReport::label);
        let methods: BTreeSet<&str> = reports.iter().map(|r| r.method.as_str()).collect();
        let aggregation_ranks = methods
            .into_iter()
            .map(|m| {
                let subset: Vec<EvalReport> =
                    reports.iter().filter(|r| r.method == m).cloned().collect();
                (m.to_string(), rank_table(&subset, |r| r.aggregation.clone()))
            })
            .collect();
        EvalSummary {
            reports,
            ranks,
            aggregation_ranks,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per method/aggregation, one `mean±std` cell per dataset.
    pub fn write_table_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let datasets = &self.ranks.datasets;
        writeln!(out, "method,aggregation,{}", datasets.join(","))?;
        let mut rows: BTreeMap<(String, String), BTreeMap<&str, String>> = BTreeMap::new();
        for r in &self.reports {
            rows.entry((r.method.clone(), r.aggregation.clone()))
                .or_default()
                .insert(&r.dataset, format!("{:.2}±{:.2}", 100.0 * r.mean, 100.0 * r.std));
        }
        for ((m, a), cells) in rows {
            let cells: Vec<&str> = datasets
                .iter()
                .map(|d| cells.get(d.as_str()).map_or("", |s| s.as_str()))
                .collect();
            writeln!(out, "{m},{a},{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Prev,
    Next,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Prev => "prev",
            Scenario::Next => "next",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevNextRow {
    pub snapshot: usize,
    pub method: String,
    pub scenario: Scenario,
    /// Mean over runs of `AUC(method) / AUC(vanilla)`.
    pub ratio: f64,
}

pub fn write_prevnext_csv<W: Write>(rows: &[PrevNextRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "snapshot,method,scenario,ratio")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.snapshot, r.method, r.scenario.as_str(), r.ratio)?;
    }
    Ok(())
}

/// Scores each snapshot's own embedding on the structure of the snapshot
/// before it (`Prev`) and after it (`Next`), relative to `vanilla`.
///
/// `embeddings[method][run][t]` is the embedding trained on snapshot `t`.
/// Each target gets one dataset with a 60/40 train/test split, shared by
/// every method and run; candidate pairs are restricted to nodes of
/// snapshot `t`.
pub fn prev_next_study(
    embeddings: &BTreeMap<String, Vec<Vec<EmbeddingMatrix>>>,
    snapshots: &[Snapshot],
    vanilla: &str,
    base_seed: u64,
    hyper: LogisticHyper,
) -> Result<Vec<PrevNextRow>> {
    use rayon::prelude::*;
    let t_count = snapshots.len();
    if t_count < 3 {
        return Err(Error::Config(format!(
            "the previous/next study needs at least 3 snapshots, got {t_count}"
        )));
    }
    let base = embeddings
        .get(vanilla)
        .ok_or_else(|| Error::Config(format!("missing vanilla baseline `{vanilla}`")))?;
    for (m, runs) in embeddings {
        if runs.len() != base.len() || runs.iter().any(|r| r.len() != t_count) {
            return Err(Error::Config(format!(
                "method `{m}` needs {} runs of {t_count} snapshot embeddings",
                base.len()
            )));
        }
    }

    let mut cells = Vec::new();
    for t in 0..t_count {
        for scenario in [Scenario::Prev, Scenario::Next] {
            let target = match scenario {
                Scenario::Prev if t > 0 => t - 1,
                Scenario::Next if t + 1 < t_count => t + 1,
                _ => continue,
            };
            cells.push((t, scenario, target));
        }
    }

    let per_cell: Vec<Vec<PrevNextRow>> = cells
        .par_iter()
        .map(|&(t, scenario, target)| {
            let seed = seed::derive(base_seed, &[0x9e7, t as u64, scenario as u64]);
            let ds = build_dataset_with(
                &snapshots[target],
                snapshots[t].nodes(),
                seed,
                SplitFractions::TRAIN_TEST,
            )?;
            let (train, test) = (ds.train(), ds.test());
            let score = |emb: &EmbeddingMatrix| fit_and_score(emb, &train, &test, hyper);
            let base_aucs: Vec<f64> = base.iter().map(|run| score(&run[t])).collect::<Result<_>>()?;
            if base_aucs.iter().any(|&a| a <= 0.0) {
                return Err(Error::Contract(format!(
                    "vanilla AUC is zero at snapshot {t} ({})",
                    scenario.as_str()
                )));
            }
            embeddings
                .iter()
                .map(|(m, runs)| {
                    let mut sum = 0.0;
                    for (run, b) in runs.iter().zip(&base_aucs) {
                        let a = if m == vanilla { *b } else { score(&run[t])? };
                        sum += a / b;
                    }
                    Ok(PrevNextRow {
                        snapshot: t,
                        method: m.clone(),
                        scenario,
                        ratio: sum / runs.len() as f64,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<PrevNextRow> = per_cell.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (a.scenario, a.snapshot, &a.method).cmp(&(b.scenario, b.snapshot, &b.method))
    });
    Ok(rows)
}
