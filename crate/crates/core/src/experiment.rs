//! Run configuration, multi-seed runs, bootstrap intervals and ε sweeps.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_sbm, load_graph, split_nodes, Graph, SbmSpec, Split, SplitMasks, DEFAULT_SPLIT};
use crate::privacy::{AccountingReport, PrivacyLevel};
use crate::rng::{keyed_rng, Domain};
use crate::trainer::{evaluate, train_progressive, EpochMetrics, ModelConfig, PrivacyConfig, TrainConfig};

pub const CONFIG_VERSION: u32 = 1;
pub const MAX_DEPTH: usize = 5;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// ε in configs and reports: a number, `"inf"` or `null` (both mean ∞).
pub mod epsilon_serde {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(e) if e.is_finite() => s.serialize_f64(*e),
            _ => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Number(e)) if e > 0.0 => Ok(Some(e)),
            Some(Raw::Number(e)) => Err(D::Error::custom(format!("epsilon must be positive, got {e}"))),
            Some(Raw::Text(t)) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(None),
                other => other
                    .parse::<f64>()
                    .ok()
                    .filter(|e| *e > 0.0)
                    .map(|e| Some(e).filter(|e| e.is_finite()))
                    .ok_or_else(|| D::Error::custom(format!("bad epsilon {t:?}"))),
            },
        }
    }

    /// Same encoding for a list of targets.
    pub mod list {
        use super::*;
        use serde::ser::SerializeSeq;

        #[derive(Deserialize)]
        struct Item(#[serde(with = "super")] Option<f64>);

        pub fn serialize<S: Serializer>(v: &[Option<f64>], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for e in v {
                match e {
                    Some(e) => seq.serialize_element(e)?,
                    None => seq.serialize_element("inf")?,
                }
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<f64>>, D::Error> {
            Ok(Vec::<Item>::deserialize(d)?.into_iter().map(|i| i.0).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Sbm(SbmSpec),
    /// Edge list, feature CSV and label file; relative paths resolve against
    /// the config file's directory. Nodes are split 75/10/15 with `split_seed`.
    Files {
        edges: PathBuf,
        features: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        split_seed: u64,
    },
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub privacy: PrivacyConfig,
    /// `train.seed` is replaced by each entry of `seeds`.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Targets for `sweep`; `"inf"` adds a non-private row.
    #[serde(default, with = "epsilon_serde::list")]
    pub epsilons: Vec<Option<f64>>,
    /// Seed of the bootstrap resampling.
    #[serde(default)]
    pub bootstrap_seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config, resolving relative dataset paths
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let DatasetSource::Files {
            edges,
            features,
            labels,
            ..
        } = &mut cfg.dataset
        {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [edges, features, labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.model.depth > MAX_DEPTH {
            return Err(Error::Config(format!("depth {} exceeds {MAX_DEPTH}", self.model.depth)));
        }
        if !(1..=2).contains(&self.model.base_layers) {
            return Err(Error::Config("base MLPs have 1 or 2 layers".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.train.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if let Some(delta) = self.privacy.delta {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::Config(format!("delta {delta} is outside (0, 1)")));
            }
        }
        if let DatasetSource::Sbm(spec) = &self.dataset {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Builds the graph and split described by `source`.
pub fn load_dataset(source: &DatasetSource) -> Result<(Graph, SplitMasks)> {
    match source {
        DatasetSource::Sbm(spec) => generate_sbm(spec),
        DatasetSource::Files {
            edges,
            features,
            labels,
            split_seed,
        } => {
            let graph = load_graph(edges, features, labels)?;
            let masks = split_nodes(graph.num_nodes(), DEFAULT_SPLIT, *split_seed);
            Ok((graph, masks))
        }
    }
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub test_acc: f64,
    pub val_acc: f64,
    #[serde(with = "epsilon_serde")]
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    #[serde(rename = "K")]
    pub depth: usize,
    pub level: PrivacyLevel,
    pub sigma_ap: f64,
    pub sigma_gp: f64,
    pub nap_calls: usize,
    pub empty_batches: usize,
    #[serde(skip)]
    pub metrics: Vec<EpochMetrics>,
    #[serde(skip)]
    pub report: Option<AccountingReport>,
}

pub fn run_seed(graph: &Graph, masks: &SplitMasks, cfg: &RunConfig, seed: u64) -> Result<SeedResult> {
    let train = TrainConfig { seed, ..cfg.train.clone() };
    let out = train_progressive(graph, masks, &cfg.model, &cfg.privacy, &train)?;
    let labels = out.graph.labels();
    let epsilon = out.report.as_ref().map(|r| r.epsilon).filter(|e| e.is_finite());
    Ok(SeedResult {
        seed,
        test_acc: evaluate(&out.model, labels, masks, Split::Test)?,
        val_acc: evaluate(&out.model, labels, masks, Split::Val)?,
        epsilon,
        delta: out.report.as_ref().map(|r| r.delta),
        depth: cfg.model.depth,
        level: cfg.privacy.level,
        sigma_ap: out.plan.sigma_ap,
        sigma_gp: out.plan.sigma_gp,
        nap_calls: out.model.nap_calls(),
        empty_batches: out.empty_batches,
        metrics: out.metrics,
        report: out.report,
    })
}

/// Mean test accuracy over seeds with a percentile bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub test_acc: Vec<f64>,
    #[serde(with = "epsilon_serde")]
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    #[serde(rename = "K")]
    pub depth: usize,
    pub seeds: Vec<u64>,
}

/// 95% percentile interval of the mean from `resamples` bootstrap draws.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = keyed_rng(seed, Domain::Bootstrap, 0);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    (quantile(&means, 0.025), quantile(&means, 0.975))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn aggregate(results: &[SeedResult], bootstrap_seed: u64) -> Aggregate {
    let acc: Vec<f64> = results.iter().map(|r| r.test_acc).collect();
    let n = acc.len() as f64;
    let mean = acc.iter().sum::<f64>() / n;
    let std = if acc.len() > 1 {
        (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let (ci_low, ci_high) = bootstrap_ci(&acc, BOOTSTRAP_RESAMPLES, bootstrap_seed);
    Aggregate {
        mean,
        std,
        ci_low,
        ci_high,
        test_acc: acc,
        epsilon: results.first().and_then(|r| r.epsilon),
        delta: results.first().and_then(|r| r.delta),
        depth: results.first().map_or(0, |r| r.depth),
        seeds: results.iter().map(|r| r.seed).collect(),
    }
}

/// Per-seed results (in seed-list order) and their aggregate.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub results: Vec<SeedResult>,
    pub aggregate: Aggregate,
}

/// Trains every seed of `cfg` (in parallel) on one dataset instance.
pub fn run_all(cfg: &RunConfig) -> Result<RunOutcome> {
    let (graph, masks) = load_dataset(&cfg.dataset)?;
    run_on(&graph, &masks, cfg)
}

pub fn run_on(graph: &Graph, masks: &SplitMasks, cfg: &RunConfig) -> Result<RunOutcome> {
    let results = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(graph, masks, cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&results, cfg.bootstrap_seed);
    Ok(RunOutcome { results, aggregate })
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Serializes `value` with an extra top-level `timestamp` field.
pub fn stamped_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("timestamp".into(), timestamp().into());
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `metrics/seed-<s>.jsonl`, `summary/seed-<s>.json` and
/// `aggregate.json` under `dir`.
pub fn write_outcome(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    let metrics_dir = dir.join("metrics");
    let summary_dir = dir.join("summary");
    for d in [&metrics_dir, &summary_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for r in &outcome.results {
        let path = metrics_dir.join(format!("seed-{}.jsonl", r.seed));
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        for m in &r.metrics {
            writeln!(file, "{}", serde_json::to_string(m)?).map_err(|e| Error::io(&path, e))?;
        }
        write_file(&summary_dir.join(format!("seed-{}.json", r.seed)), &stamped_json(r)?)?;
    }
    write_file(&dir.join("aggregate.json"), &stamped_json(&outcome.aggregate)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(with = "epsilon_serde")]
    pub epsilon: Option<f64>,
    pub mean_accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Mean is at least the previous row's, or the two intervals overlap.
    pub trend_ok: bool,
}

/// Whether `next` (larger ε) is no worse than `prev` up to interval overlap.
pub fn trend_holds(prev: &Aggregate, next: &Aggregate) -> bool {
    next.mean >= prev.mean || next.ci_high >= prev.ci_low
}

/// One multi-seed run per target in `cfg.epsilons`, ordered by ε with ∞ last.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<(SweepRow, RunOutcome)>> {
    if cfg.epsilons.is_empty() {
        return Err(Error::Config("sweep needs a non-empty epsilons list".into()));
    }
    let mut targets = cfg.epsilons.clone();
    targets.sort_by(|a, b| a.unwrap_or(f64::INFINITY).total_cmp(&b.unwrap_or(f64::INFINITY)));
    targets.dedup();
    let (graph, masks) = load_dataset(&cfg.dataset)?;
    let mut rows: Vec<(SweepRow, RunOutcome)> = Vec::with_capacity(targets.len());
    for eps in targets {
        let mut run = cfg.clone();
        run.privacy.epsilon = eps;
        let outcome = run_on(&graph, &masks, &run)?;
        let agg = &outcome.aggregate;
        let trend_ok = rows.last().is_none_or(|(_, prev)| trend_holds(&prev.aggregate, agg));
        rows.push((
            SweepRow {
                epsilon: eps,
                mean_accuracy: agg.mean,
                ci_low: agg.ci_low,
                ci_high: agg.ci_high,
                trend_ok,
            },
            outcome,
        ));
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("epsilon,mean_accuracy,ci_low,ci_high,trend_ok\n");
    for r in rows {
        let eps = r.epsilon.map_or("inf".to_string(), |e| e.to_string());
        out.push_str(&format!("{eps},{},{},{},{}\n", r.mean_accuracy, r.ci_low, r.ci_high, r.trend_ok));
    }
    out
}
