//! Config-driven experiment runner: ingest, snapshot, embed, post-hoc
//! align, aggregate, evaluate and the previous/next study, with a
//! content-addressed cache for trained embeddings.

mod cache;
mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::Cache;
pub use config::{
    AlphaSetting, DatasetConfig, MethodSpec, PosthocSubset, ResolvedMethod, RunConfig,
    DEFAULT_POSTHOC_P,
};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{
    build_dataset, evaluate_method, prev_next_study, write_prevnext_csv, EvalSummary,
    LinkPredDataset, LogisticHyper, PrevNextRow,
};
use crate::aggregate::aggregate;
use crate::graph::{
    common_nodes, parse_temporal_edgelist, split_snapshots, union_nodes, Snapshot, TemporalGraph,
};
use crate::node2vec::{train, TrainConfig};
use crate::posthoc::fit_posthoc;
use crate::rafen::{RafenConfig, Variant};
use crate::scoring::{score_nodes, select_top_percent, ScoreMap, ScoreMethod};
use crate::seed;

/// Environment variable overriding the cache location.
pub const CACHE_ENV: &str = "RAFEN_CACHE_DIR";
pub const VANILLA: &str = "vanilla";
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Snapshot,
    Embed,
    AlignPosthoc,
    Aggregate,
    Evaluate,
    StudyPrevnext,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Snapshot => "snapshot",
            Stage::Embed => "embed",
            Stage::AlignPosthoc => "align-posthoc",
            Stage::Aggregate => "aggregate",
            Stage::Evaluate => "evaluate",
            Stage::StudyPrevnext => "study-prevnext",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seconds: f64,
    /// Embeddings trained from scratch in this stage.
    pub trained: usize,
    /// Embeddings served from the cache.
    pub cache_hits: usize,
    pub outputs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    pub dataset_sha256: String,
    pub stages: Vec<StageRecord>,
    /// Every file under the output directory except the manifest itself.
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage.name())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn to_csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

/// `embeddings/<label>/run<r>/snapshot<t>.bin` under the output directory.
pub fn embedding_path(out: &Path, label: &str, run: usize, t: usize) -> PathBuf {
    out.join("embeddings")
        .join(label)
        .join(format!("run{run}"))
        .join(format!("snapshot{t}.bin"))
}

/// Per method label: `runs[r][t]`.
pub type EmbeddingGrid = BTreeMap<String, Vec<Vec<EmbeddingMatrix>>>;

#[derive(Default)]
struct Counters {
    trained: AtomicUsize,
    hits: AtomicUsize,
}

/// One configured experiment and its output directory.
pub struct Pipeline {
    cfg: RunConfig,
    out: PathBuf,
    cache: Cache,
    stages: Vec<StageRecord>,
    dataset_sha: String,
    graph: Option<TemporalGraph>,
    snapshots: Vec<Snapshot>,
    snapshot_hashes: Vec<String>,
    scores: BTreeMap<(ScoreMethod, usize), ScoreMap>,
    embeddings: EmbeddingGrid,
    dataset: Option<LinkPredDataset>,
    summary: Option<EvalSummary>,
    study: Option<Vec<PrevNextRow>>,
}

impl Pipeline {
    /// Validates `cfg` and prepares the output directory. The cache lives in
    /// `$RAFEN_CACHE_DIR`, the configured `cache_dir`, or `<out>/cache`.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.output_dir.clone();
        let cache_dir = std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .or_else(|| cfg.cache_dir.clone())
            .unwrap_or_else(|| out.join("cache"));
        Ok(Pipeline {
            cfg,
            out,
            cache: Cache::new(cache_dir),
            stages: Vec::new(),
            dataset_sha: String::new(),
            graph: None,
            snapshots: Vec::new(),
            snapshot_hashes: Vec::new(),
            scores: BTreeMap::new(),
            embeddings: BTreeMap::new(),
            dataset: None,
            summary: None,
            study: None,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn embeddings(&self) -> &EmbeddingGrid {
        &self.embeddings
    }

    pub fn summary(&self) -> Option<&EvalSummary> {
        self.summary.as_ref()
    }

    pub fn study(&self) -> Option<&[PrevNextRow]> {
        self.study.as_deref()
    }

    /// Runs every stage up to and including `until`, then writes the
    /// manifest. `StudyPrevnext` runs the whole chain; the study itself is
    /// skipped with a warning when fewer than 3 snapshots exist or vanilla
    /// is not among the methods.
    pub fn run(&mut self, until: Stage) -> Result<RunManifest> {
        let order = [
            Stage::Ingest,
            Stage::Snapshot,
            Stage::Embed,
            Stage::AlignPosthoc,
            Stage::Aggregate,
            Stage::Evaluate,
            Stage::StudyPrevnext,
        ];
        for stage in order.into_iter().filter(|&s| s <= until) {
            self.run_stage(stage)?;
        }
        self.write_manifest()
    }

    /// Runs the previous/next study on embeddings already stored in the
    /// output directory.
    pub fn study_from_disk(&mut self) -> Result<RunManifest> {
        self.run_stage(Stage::Ingest)?;
        self.run_stage(Stage::Snapshot)?;
        let stage = Stage::StudyPrevnext;
        let t_count = self.snapshots.len();
        let mut grid = EmbeddingGrid::new();
        for m in self.cfg.resolved_methods() {
            let mut runs = Vec::with_capacity(self.cfg.retrains);
            for r in 0..self.cfg.retrains {
                let mut snaps = Vec::with_capacity(t_count);
                for t in 0..t_count {
                    let path = embedding_path(&self.out, &m.label, r, t);
                    if !path.is_file() {
                        let hint = if matches!(m.spec, MethodSpec::Posthoc(_)) {
                            "align-posthoc"
                        } else {
                            "embed"
                        };
                        return Err(Error::Config(format!(
                            "missing embedding {}; run `rafen {hint}` with this config first",
                            path.display()
                        ))
                        .in_stage(stage.name()));
                    }
                    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
                    snaps.push(EmbeddingMatrix::read_binary(BufReader::new(file))?);
                }
                runs.push(snaps);
            }
            grid.insert(m.label, runs);
        }
        self.embeddings = grid;
        self.run_stage(stage)?;
        self.write_manifest()
    }

    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        let start = Instant::now();
        let counters = Counters::default();
        log::info!("stage {stage}: start");
        let outputs = match stage {
            Stage::Ingest => self.ingest(),
            Stage::Snapshot => self.snapshot(),
            Stage::Embed => self.embed(&counters),
            Stage::AlignPosthoc => self.align_posthoc(),
            Stage::Aggregate => self.aggregate(),
            Stage::Evaluate => self.evaluate(),
            Stage::StudyPrevnext => self.study_prevnext(),
        }
        .map_err(|e| e.in_stage(stage.name()))?;
        let record = StageRecord {
            stage: stage.name().to_string(),
            seconds: start.elapsed().as_secs_f64(),
            trained: counters.trained.into_inner(),
            cache_hits: counters.hits.into_inner(),
            outputs,
        };
        log::info!(
            "stage {stage}: {} outputs, {} trained, {} cached, {:.2}s",
            record.outputs,
            record.trained,
            record.cache_hits,
            record.seconds
        );
        self.stages.retain(|s| s.stage != record.stage);
        self.stages.push(record);
        Ok(())
    }

    fn ingest(&mut self) -> Result<usize> {
        let path = &self.cfg.dataset.path;
        let bytes = read_file(path)?;
        self.dataset_sha = sha256_hex(&bytes);
        let graph = parse_temporal_edgelist(bytes.as_slice(), &self.cfg.dataset.parse)?;
        let (first, last) = graph.time_span();
        let summary = serde_json::json!({
            "dataset": self.cfg.dataset.display_name(),
            "nodes": graph.num_nodes(),
            "edges": graph.num_edges(),
            "directed": graph.is_directed(),
            "weighted": graph.is_weighted(),
            "first_timestamp": first,
            "last_timestamp": last,
            "sha256": self.dataset_sha,
        });
        write_file(
            &self.out.join("ingest/summary.json"),
            serde_json::to_string_pretty(&summary)?.as_bytes(),
        )?;
        let nodes = to_csv_bytes(|buf| {
            use std::io::Write;
            writeln!(buf, "node_id,label")?;
            for (id, label) in graph.registry().labels().iter().enumerate() {
                writeln!(buf, "{id},{label}")?;
            }
            Ok(())
        });
        write_file(&self.out.join("ingest/nodes.csv"), &nodes)?;
        self.graph = Some(graph);
        Ok(2)
    }

    fn snapshot(&mut self) -> Result<usize> {
        let graph = self.graph.as_ref().expect("ingest ran");
        self.snapshots = split_snapshots(graph, &self.cfg.snapshots)?;
        self.snapshot_hashes.clear();
        let mut rows = Vec::new();
        for s in &self.snapshots {
            let bytes = to_csv_bytes(|buf| {
                use std::io::Write;
                writeln!(buf, "src,dst,timestamp,weight")?;
                for e in s.edges() {
                    writeln!(buf, "{},{},{},{}", e.src, e.dst, e.timestamp, e.weight)?;
                }
                Ok(())
            });
            let mut keyed = bytes.clone();
            keyed.push(s.is_directed() as u8);
            self.snapshot_hashes.push(sha256_hex(&keyed));
            write_file(
                &self.out.join(format!("snapshots/snapshot{}.csv", s.index())),
                &bytes,
            )?;
            let (start, end) = s.time_range();
            rows.push(serde_json::json!({
                "index": s.index(),
                "start": start,
                "end": end,
                "nodes": s.num_nodes(),
                "edges": s.num_edges(),
            }));
        }
        write_file(
            &self.out.join("snapshots/summary.json"),
            serde_json::to_string_pretty(&rows)?.as_bytes(),
        )?;
        log::info!("{} snapshots", self.snapshots.len());
        Ok(self.snapshots.len() + 1)
    }

    fn score_map(&mut self, method: ScoreMethod, t: usize) -> Result<&ScoreMap> {
        if !self.scores.contains_key(&(method, t)) {
            let (prev, cur) = (&self.snapshots[t - 1], &self.snapshots[t]);
            let common = common_nodes(prev, cur);
            let key = Cache::key(&[
                b"scores-v1",
                method.short_name().as_bytes(),
                self.snapshot_hashes[t - 1].as_bytes(),
                self.snapshot_hashes[t].as_bytes(),
                serde_json::to_string(&self.cfg.betweenness)?.as_bytes(),
            ]);
            let bytes = match self.cache.load(&key)? {
                Some(b) => b,
                None => {
                    let map = score_nodes(method, prev, cur, &common, &self.cfg.betweenness)?;
                    let b = to_csv_bytes(|buf| map.write_csv(buf));
                    self.cache.store(&key, &b)?;
                    b
                }
            };
            write_file(
                &self
                    .out
                    .join(format!("scores/{}/snapshot{t}.csv", method.short_name())),
                &bytes,
            )?;
            let map = ScoreMap::read_csv(bytes.as_slice(), method)?;
            self.scores.insert((method, t), map);
        }
        Ok(&self.scores[&(method, t)])
    }

    /// Trains every training-based method (vanilla and RAFEN variants) for
    /// every run and snapshot. Snapshot 0 is always plain Node2Vec; later
    /// RAFEN snapshots align to the method's own previous embedding.
    fn embed(&mut self, counters: &Counters) -> Result<usize> {
        let methods = self.cfg.resolved_methods();
        let needs_vanilla = methods
            .iter()
            .any(|m| matches!(m.spec, MethodSpec::Vanilla | MethodSpec::Posthoc(_)));
        let mut trained: Vec<ResolvedMethod> = Vec::new();
        if needs_vanilla {
            trained.push(ResolvedMethod {
                spec: MethodSpec::Vanilla,
                alpha: None,
                label: VANILLA.into(),
            });
        }
        trained.extend(methods.into_iter().filter(|m| m.spec.is_rafen()));

        let t_count = self.snapshots.len();
        for m in &trained {
            if let Some(score) = m.spec.score_method() {
                for t in 1..t_count {
                    self.score_map(score, t)?;
                }
            }
        }

        let cells: Vec<(usize, usize)> = (0..trained.len())
            .flat_map(|mi| (0..self.cfg.retrains).map(move |r| (mi, r)))
            .collect();
        let this = &*self;
        let results: Vec<Vec<EmbeddingMatrix>> = cells
            .par_iter()
            .map(|&(mi, r)| this.embed_chain(&trained[mi], r, counters))
            .collect::<Result<_>>()?;

        let mut grid = EmbeddingGrid::new();
        for (&(mi, _), chain) in cells.iter().zip(results) {
            grid.entry(trained[mi].label.clone()).or_default().push(chain);
        }
        let outputs = grid.len() * self.cfg.retrains * t_count;
        self.embeddings = grid;
        Ok(outputs)
    }

    fn embed_chain(
        &self,
        method: &ResolvedMethod,
        run: usize,
        counters: &Counters,
    ) -> Result<Vec<EmbeddingMatrix>> {
        let dim = self.cfg.train.dim;
        let mut chain: Vec<EmbeddingMatrix> = Vec::with_capacity(self.snapshots.len());
        for (t, snap) in self.snapshots.iter().enumerate() {
            let train_cfg = TrainConfig {
                seed: seed::derive(self.cfg.seed, &[run as u64, t as u64]),
                ..self.cfg.train.clone()
            };
            let prev = chain.last();
            let common = if t > 0 {
                common_nodes(&self.snapshots[t - 1], snap)
            } else {
                Default::default()
            };

            let regularizer = match (method.spec, prev) {
                (MethodSpec::Rafen { variant, score }, Some(anchor)) if !common.is_empty() => {
                    let mut rc = RafenConfig::new(variant, anchor.clone(), common.clone());
                    rc.alpha = method.alpha;
                    rc.scope = self.cfg.scope;
                    if let Some(s) = score {
                        let map = self.scores[&(s, t)].clone();
                        if variant == Variant::Ref {
                            rc.reference = Some(select_top_percent(&map, self.cfg.p.expect("validated"))?);
                        }
                        rc.scores = Some(map);
                    }
                    Some(rc.build(dim)?)
                }
                (MethodSpec::Rafen { .. }, Some(_)) => {
                    log::warn!("{}: snapshot {t} shares no nodes with its predecessor; training without alignment", method.label);
                    None
                }
                _ => None,
            };
            let init = if train_cfg.warm_start { prev } else { None };

            // the key covers everything the trained matrix depends on
            let mut parts: Vec<Vec<u8>> = vec![
                b"embed-v1".to_vec(),
                self.snapshot_hashes[t].as_bytes().to_vec(),
                serde_json::to_vec(&train_cfg)?,
            ];
            if let Some(reg) = &regularizer {
                use crate::rafen::Regularizer;
                parts.push(reg.describe().into_bytes());
                parts.push(format!("{:?}", method.alpha).into_bytes());
                parts.push(format!("{:?}", self.cfg.scope).into_bytes());
                let w: Vec<u8> = reg.term().weights().iter().flat_map(|x| x.to_le_bytes()).collect();
                parts.push(w);
                let n: Vec<u8> = reg.term().nodes().iter().flat_map(|&x| (x as u64).to_le_bytes()).collect();
                parts.push(n);
            }
            if regularizer.is_some() || init.is_some() {
                parts.push(sha256_hex(&prev.expect("t > 0").to_binary()).into_bytes());
            }
            let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
            let key = Cache::key(&refs);

            let emb = match self.cache.load(&key)? {
                Some(bytes) => {
                    counters.hits.fetch_add(1, Ordering::Relaxed);
                    EmbeddingMatrix::read_binary(bytes.as_slice())?
                }
                None => {
                    let reg_dyn = regularizer.as_ref().map(|r| r as &dyn crate::rafen::Regularizer);
                    let (mut emb, trace) = train(snap, &train_cfg, reg_dyn, init)?;
                    emb.quantize_f32();
                    self.cache.store(&key, &emb.to_binary())?;
                    if regularizer.is_some() {
                        let csv = to_csv_bytes(|buf| trace.write_csv(buf));
                        write_file(
                            &self.out.join(format!(
                                "traces/{}/run{run}/snapshot{t}.csv",
                                method.label
                            )),
                            &csv,
                        )?;
                    }
                    counters.trained.fetch_add(1, Ordering::Relaxed);
                    emb
                }
            };
            write_file(&embedding_path(&self.out, &method.label, run, t), &emb.to_binary())?;
            chain.push(emb);
        }
        Ok(chain)
    }

    /// Chains Procrustes alignment: each vanilla snapshot embedding is
    /// rotated onto the already-aligned previous one.
    fn align_posthoc(&mut self) -> Result<usize> {
        let methods: Vec<ResolvedMethod> = self
            .cfg
            .resolved_methods()
            .into_iter()
            .filter(|m| matches!(m.spec, MethodSpec::Posthoc(_)))
            .collect();
        let t_count = self.snapshots.len();
        let p = self.cfg.posthoc_p();
        let mut outputs = 0;
        for m in &methods {
            let MethodSpec::Posthoc(subset) = m.spec else { unreachable!() };
            let mut subsets = vec![Default::default()];
            for t in 1..t_count {
                let s = match subset {
                    PosthocSubset::Common => common_nodes(&self.snapshots[t - 1], &self.snapshots[t]),
                    PosthocSubset::Scored(method) => {
                        let map = self.score_map(method, t)?;
                        if map.is_empty() {
                            Default::default()
                        } else {
                            select_top_percent(map, p)?.nodes
                        }
                    }
                };
                subsets.push(s);
            }
            let vanilla = &self.embeddings[VANILLA];
            let out = &self.out;
            let runs: Vec<Vec<EmbeddingMatrix>> = vanilla
                .par_iter()
                .enumerate()
                .map(|(r, chain)| {
                    let mut aligned: Vec<EmbeddingMatrix> = vec![chain[0].clone()];
                    for t in 1..t_count {
                        let anchor = &aligned[t - 1];
                        let next = if subsets[t].is_empty() {
                            log::warn!("{}: empty alignment subset at snapshot {t}; left unaligned", m.label);
                            chain[t].clone()
                        } else {
                            let q = fit_posthoc(&chain[t], anchor, &subsets[t])?;
                            let csv = to_csv_bytes(|buf| q.write_csv(buf));
                            write_file(
                                &out.join(format!("posthoc/{}/run{r}/map{t}.csv", m.label)),
                                &csv,
                            )?;
                            let mut e = q.apply(&chain[t])?;
                            e.quantize_f32();
                            e
                        };
                        aligned.push(next);
                    }
                    for (t, e) in aligned.iter().enumerate() {
                        write_file(&embedding_path(out, &m.label, r, t), &e.to_binary())?;
                    }
                    Ok(aligned)
                })
                .collect::<Result<_>>()?;
            outputs += runs.len() * t_count;
            self.embeddings.insert(m.label.clone(), runs);
        }
        Ok(outputs)
    }

    fn dataset(&mut self) -> Result<&LinkPredDataset> {
        if self.dataset.is_none() {
            let t_count = self.snapshots.len();
            let seen = union_nodes(&self.snapshots[..t_count - 1]);
            let ds = build_dataset(
                &self.snapshots[t_count - 1],
                &seen,
                seed::derive(self.cfg.seed, &[0xe7a1]),
            )?;
            write_file(
                &self.out.join("eval/dataset.json"),
                serde_json::to_string(&ds)?.as_bytes(),
            )?;
            self.dataset = Some(ds);
        }
        Ok(self.dataset.as_ref().expect("built"))
    }

    /// Runs of `label` restricted to the snapshots before the target.
    fn history(&self, label: &str) -> Vec<Vec<EmbeddingMatrix>> {
        let t_count = self.snapshots.len();
        self.embeddings[label]
            .iter()
            .map(|chain| chain[..t_count - 1].to_vec())
            .collect()
    }

    fn aggregate(&mut self) -> Result<usize> {
        let val = self.dataset()?.val();
        let mut outputs = 0;
        for m in self.cfg.resolved_methods() {
            let history = self.history(&m.label);
            for spec in &self.cfg.aggregations {
                let out = &self.out;
                history
                    .par_iter()
                    .enumerate()
                    .map(|(r, chain)| {
                        let agg = aggregate(chain, spec, Some(&val))?;
                        write_file(
                            &out.join(format!("aggregated/{}/{}/run{r}.bin", m.label, spec.label())),
                            &agg.to_binary(),
                        )
                    })
                    .collect::<Result<Vec<()>>>()?;
                outputs += history.len();
            }
        }
        Ok(outputs)
    }

    fn evaluate(&mut self) -> Result<usize> {
        let ds = self.dataset()?.clone();
        let name = self.cfg.dataset.display_name();
        let cells: Vec<(ResolvedMethod, crate::aggregate::AggregationSpec)> = self
            .cfg
            .resolved_methods()
            .into_iter()
            .flat_map(|m| self.cfg.aggregations.iter().map(move |a| (m.clone(), *a)))
            .collect();
        let reports = cells
            .par_iter()
            .map(|(m, spec)| {
                let history = self.history(&m.label);
                evaluate_method(&name, &m.label, &history, spec, &ds, LogisticHyper::default())
            })
            .collect::<Result<Vec<_>>>()?;
        let summary = EvalSummary::new(reports);
        let dir = self.out.join("report");
        write_file(&dir.join("report.json"), summary.to_json()?.as_bytes())?;
        write_file(&dir.join("table.csv"), &to_csv_bytes(|b| summary.write_table_csv(b)))?;
        write_file(&dir.join("ranks.csv"), &to_csv_bytes(|b| summary.ranks.write_csv(b)))?;
        let agg_ranks = to_csv_bytes(|buf| {
            use std::io::Write;
            for (method, table) in &summary.aggregation_ranks {
                writeln!(buf, "# {method}")?;
                table.write_csv(&mut *buf)?;
            }
            Ok(())
        });
        write_file(&dir.join("aggregation_ranks.csv"), &agg_ranks)?;
        self.summary = Some(summary);
        Ok(4)
    }

    fn study_prevnext(&mut self) -> Result<usize> {
        let methods = self.cfg.resolved_methods();
        if self.snapshots.len() < 3 {
            log::warn!("previous/next study skipped: needs at least 3 snapshots");
            return Ok(0);
        }
        if !methods.iter().any(|m| m.label == VANILLA) {
            log::warn!("previous/next study skipped: vanilla is not among the methods");
            return Ok(0);
        }
        let grid: EmbeddingGrid = methods
            .iter()
            .map(|m| (m.label.clone(), self.embeddings[&m.label].clone()))
            .collect();
        let rows = prev_next_study(
            &grid,
            &self.snapshots,
            VANILLA,
            seed::derive(self.cfg.seed, &[0x57d]),
            LogisticHyper::default(),
        )?;
        write_file(
            &self.out.join("study/prevnext.csv"),
            &to_csv_bytes(|b| write_prevnext_csv(&rows, b)),
        )?;
        self.study = Some(rows);
        Ok(1)
    }

    fn write_manifest(&self) -> Result<RunManifest> {
        let mut files = Vec::new();
        collect_files(&self.out, &self.out, &mut files)?;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.cfg.clone(),
            dataset_sha256: self.dataset_sha.clone(),
            stages: self.stages.clone(),
            files,
        };
        write_file(
            &self.out.join(MANIFEST),
            serde_json::to_string_pretty(&manifest)?.as_bytes(),
        )?;
        Ok(manifest)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
            continue;
        }
        let rel = path.strip_prefix(root).expect("under root");
        if rel == Path::new(MANIFEST) {
            continue;
        }
        let bytes = read_file(&path)?;
        out.push(FileEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    Ok(())
}

/// Convenience wrapper: builds a pipeline and runs it to the end.
pub fn run_pipeline(cfg: RunConfig) -> Result<RunManifest> {
    Pipeline::new(cfg)?.run(Stage::StudyPrevnext)
}
