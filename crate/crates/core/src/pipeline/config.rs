//! JSON run configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregationSpec;
use crate::error::{Error, Result};
use crate::graph::{ParseOptions, SnapshotPlan};
use crate::node2vec::TrainConfig;
use crate::rafen::{AlignmentScope, Variant};
use crate::scoring::{BetweennessOptions, ScoreMethod};

/// Subset used by post-hoc Procrustes alignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosthocSubset {
    /// All common nodes.
    Common,
    /// Top-`p` common nodes by score.
    Scored(ScoreMethod),
}

/// One compared model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodSpec {
    Vanilla,
    Posthoc(PosthocSubset),
    Rafen {
        variant: Variant,
        score: Option<ScoreMethod>,
    },
}

impl MethodSpec {
    pub fn score_method(&self) -> Option<ScoreMethod> {
        match *self {
            MethodSpec::Posthoc(PosthocSubset::Scored(s)) => Some(s),
            MethodSpec::Rafen { score, .. } => score,
            _ => None,
        }
    }

    pub fn is_rafen(&self) -> bool {
        matches!(self, MethodSpec::Rafen { .. })
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = |s: Option<ScoreMethod>| s.map_or(String::new(), |s| format!("_{}", s.short_name()));
        match *self {
            MethodSpec::Vanilla => write!(f, "vanilla"),
            MethodSpec::Posthoc(PosthocSubset::Common) => write!(f, "posthoc_pa"),
            MethodSpec::Posthoc(PosthocSubset::Scored(s)) => write!(f, "posthoc{}", suffix(Some(s))),
            MethodSpec::Rafen { variant, score } => {
                let v = match variant {
                    Variant::All => "all",
                    Variant::Weighted => "weighted",
                    Variant::Ref => "ref",
                };
                write!(f, "rafen_{v}{}", suffix(score))
            }
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let score = |tag: &str| match tag {
            "ej" => Ok(ScoreMethod::EdgeJaccard),
            "tb" => Ok(ScoreMethod::TemporalBetweenness),
            _ => Err(Error::Config(format!("unknown scoring method `{tag}` in `{s}`"))),
        };
        let lower = s.to_ascii_lowercase();
        let parts: Vec<&str> = lower.split('_').collect();
        match parts.as_slice() {
            ["vanilla"] => Ok(MethodSpec::Vanilla),
            ["posthoc", "pa"] => Ok(MethodSpec::Posthoc(PosthocSubset::Common)),
            ["posthoc", tag] => Ok(MethodSpec::Posthoc(PosthocSubset::Scored(score(tag)?))),
            ["rafen", "all"] => Ok(MethodSpec::Rafen {
                variant: Variant::All,
                score: None,
            }),
            ["rafen", v @ ("weighted" | "ref"), rest @ ..] => {
                let variant = if *v == "weighted" { Variant::Weighted } else { Variant::Ref };
                let score = match rest {
                    [] => None,
                    [tag] => Some(score(tag)?),
                    _ => return Err(Error::Config(format!("unknown method `{s}`"))),
                };
                Ok(MethodSpec::Rafen { variant, score })
            }
            _ => Err(Error::Config(format!("unknown method `{s}`"))),
        }
    }
}

impl Serialize for MethodSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MethodSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `null` for the simplified loss, a number for one alpha, a list to sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    One(f64),
    Sweep(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Report name; defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub parse: ParseOptions,
}

impl DatasetConfig {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
        })
    }
}

fn default_aggregations() -> Vec<AggregationSpec> {
    vec![AggregationSpec::Last]
}

fn default_retrains() -> usize {
    25
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub snapshots: SnapshotPlan,
    #[serde(default)]
    pub train: TrainConfig,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub alpha: Option<AlphaSetting>,
    /// Fraction of common nodes kept by reference and scored post-hoc subsets.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default = "default_aggregations")]
    pub aggregations: Vec<AggregationSpec>,
    #[serde(default = "default_retrains")]
    pub retrains: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Stage cache location; `<output_dir>/cache` when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub scope: AlignmentScope,
    #[serde(default)]
    pub betweenness: BetweennessOptions,
    #[serde(default = "default_true")]
    pub study_prevnext: bool,
}

/// Default subset fraction for scored post-hoc alignment.
pub const DEFAULT_POSTHOC_P: f64 = 0.2;

/// A method with its alpha resolved; RAFEN methods expand once per alpha.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedMethod {
    pub spec: MethodSpec,
    pub alpha: Option<f64>,
    pub label: String,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file. A relative dataset path is taken relative to the
    /// file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if cfg.dataset.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset.path = dir.join(&cfg.dataset.path);
            }
        }
        Ok(cfg)
    }

    pub fn alphas(&self) -> Vec<Option<f64>> {
        match &self.alpha {
            None => vec![None],
            Some(AlphaSetting::One(a)) => vec![Some(*a)],
            Some(AlphaSetting::Sweep(list)) => list.iter().map(|&a| Some(a)).collect(),
        }
    }

    pub fn resolved_methods(&self) -> Vec<ResolvedMethod> {
        let mut out = Vec::new();
        for &spec in &self.methods {
            if spec.is_rafen() {
                for alpha in self.alphas() {
                    let label = match alpha {
                        None => spec.to_string(),
                        Some(a) => format!("{spec}_a{a}"),
                    };
                    out.push(ResolvedMethod { spec, alpha, label });
                }
            } else {
                out.push(ResolvedMethod {
                    spec,
                    alpha: None,
                    label: spec.to_string(),
                });
            }
        }
        out
    }

    pub fn posthoc_p(&self) -> f64 {
        self.p.unwrap_or(DEFAULT_POSTHOC_P)
    }

    /// Checks everything that can be checked before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.aggregations.is_empty() {
            return Err(Error::Config("at least one aggregation is required".into()));
        }
        if self.retrains == 0 {
            return Err(Error::Config("retrains must be positive".into()));
        }
        if !self.dataset.path.is_file() {
            return Err(Error::Config(format!(
                "dataset file {} does not exist",
                self.dataset.path.display()
            )));
        }
        self.snapshots.validate()?;
        self.train.validate()?;
        for agg in &self.aggregations {
            agg.validate()?;
        }
        for a in self.alphas().into_iter().flatten() {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha must lie in [0, 1], got {a}")));
            }
        }
        if let Some(p) = self.p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("p must lie in (0, 1], got {p}")));
            }
        }
        for spec in &self.methods {
            if let MethodSpec::Rafen { variant, score } = spec {
                if *variant != Variant::All && score.is_none() {
                    return Err(Error::Config(format!(
                        "{spec} needs a scoring method, e.g. {spec}_ej or {spec}_tb"
                    )));
                }
                if *variant == Variant::Ref && self.p.is_none() {
                    return Err(Error::Config(format!("{spec} needs the reference fraction p")));
                }
            }
        }
        let mut labels = BTreeSet::new();
        for m in self.resolved_methods() {
            if !labels.insert(m.label.clone()) {
                return Err(Error::Config(format!("method `{}` is listed twice", m.label)));
            }
        }
        let mut aggs = BTreeSet::new();
        for a in &self.aggregations {
            if !aggs.insert(a.label()) {
                return Err(Error::Config(format!("aggregation `{a}` is listed twice")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for name in [
            "vanilla",
            "posthoc_pa",
            "posthoc_ej",
            "posthoc_tb",
            "rafen_all",
            "rafen_weighted_ej",
            "rafen_weighted_tb",
            "rafen_ref_ej",
            "rafen_ref_tb",
            "rafen_weighted",
        ] {
            let m: MethodSpec = name.parse().unwrap();
            assert_eq!(m.to_string(), name);
        }
        assert!("rafen_magic".parse::<MethodSpec>().is_err());
        assert!("posthoc_xx".parse::<MethodSpec>().is_err());
    }

    fn base() -> serde_json::Value {
        serde_json::json!({
            "dataset": {"path": "Cargo.toml"},
            "snapshots": {"frequency": "monthly"},
            "methods": ["vanilla"],
        })
    }

    fn parse(v: serde_json::Value) -> RunConfig {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn defaults_and_sweep() {
        let cfg = parse(base());
        assert_eq!(cfg.retrains, 25);
        assert_eq!(cfg.aggregations, vec![AggregationSpec::Last]);
        cfg.validate().unwrap();

        let mut v = base();
        v["methods"] = serde_json::json!(["vanilla", "rafen_all"]);
        v["alpha"] = serde_json::json!([0.1, 0.5, 0.9]);
        let labels: Vec<String> = parse(v).resolved_methods().into_iter().map(|m| m.label).collect();
        assert_eq!(labels, ["vanilla", "rafen_all_a0.1", "rafen_all_a0.5", "rafen_all_a0.9"]);
    }

    #[test]
    fn rejects_invalid_combinations() {
        let mut v = base();
        v["methods"] = serde_json::json!(["rafen_weighted"]);
        assert!(matches!(parse(v).validate(), Err(Error::Config(_))));
        let mut v = base();
        v["methods"] = serde_json::json!(["rafen_ref_ej"]);
        assert!(parse(v.clone()).validate().is_err());
        v["p"] = serde_json::json!(0.2);
        parse(v).validate().unwrap();
        let mut v = base();
        v["methods"] = serde_json::json!([]);
        assert!(parse(v).validate().is_err());
        let mut v = base();
        v["aggregations"] = serde_json::json!([]);
        assert!(parse(v).validate().is_err());
        let mut v = base();
        v["dataset"]["path"] = serde_json::json!("no/such/file.txt");
        assert!(parse(v).validate().is_err());
        let mut v = base();
        v["alpha"] = serde_json::json!(1.5);
        v["methods"] = serde_json::json!(["rafen_all"]);
        assert!(parse(v).validate().is_err());
        let mut v = base();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }
}
