//! Progressive training over cached noisy aggregates.
//!
//! A depth-`K` model is trained in `K + 1` stages. Stage `s` sees the
//! embeddings of base MLPs `0..=s`, each fed with its cached aggregate
//! `X̃^(k)`, combined by concatenation and mapped to logits by a fresh linear
//! head. Moving to stage `s + 1` aggregates the stage-`s` embeddings once
//! through NAP, caches the result, adds a new base MLP and replaces the head.
//!
//! Cached aggregates are constants for the optimizer: later updates to base
//! `k` reach the logits only through the concatenation, never through a
//! second aggregation.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dpoptim::{clip_and_noise, poisson_sample, AdamConfig, DpConfig, OptimizerState};
use crate::error::{Error, Result};
use crate::graph::{bound_degree, Graph, Split, SplitMasks};
use crate::nap::{AggregateCache, NapConfig};
use crate::nn::checkpoint::{self, NamedTensor};
use crate::nn::{
    cross_entropy, cross_entropy_per_sample, jk_concat, jk_split, predict, GradTape, Mlp, MlpSpec, MlpTrace,
    Mode, NormKind, Parameterized,
};
use crate::privacy::{self, AccountingReport, Calibration, Noise, PrivacyLevel, PrivacySpec};
use crate::rng::{keyed_rng, Domain};

pub const DEFAULT_HIDDEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Number of aggregation stages `K`.
    pub depth: usize,
    pub hidden_dim: usize,
    /// Layers per base MLP.
    pub base_layers: usize,
    /// Normalization inside base MLPs; by default batch norm for edge-level
    /// and non-private runs, single-group norm for node level.
    pub norm: Option<NormKind>,
    /// Keep earlier base MLPs fixed in later stages.
    pub freeze_prior: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            hidden_dim: DEFAULT_HIDDEN,
            base_layers: 1,
            norm: None,
            freeze_prior: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before a stage stops early
    /// (edge level and non-private only). `None` trains all epochs and
    /// keeps the best validation checkpoint.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.01,
            patience: None,
            seed: 0,
        }
    }
}

/// Privacy settings of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrivacyConfig {
    pub level: PrivacyLevel,
    /// Target ε; `None` is ε = ∞ (no noise, no accounting).
    #[serde(with = "crate::experiment::epsilon_serde")]
    pub epsilon: Option<f64>,
    /// Defaults to `1 / (10 · private units)`.
    pub delta: Option<f64>,
    pub degree_cap: usize,
    pub clip: f64,
    pub batch_size: usize,
    /// Explicit noise scales; when both are set they replace calibration.
    pub sigma_ap: Option<f64>,
    pub sigma_gp: Option<f64>,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            level: PrivacyLevel::None,
            epsilon: None,
            delta: None,
            degree_cap: 100,
            clip: 1.0,
            batch_size: 256,
            sigma_ap: None,
            sigma_gp: None,
        }
    }
}

impl PrivacyConfig {
    pub fn non_private() -> Self {
        Self::default()
    }

    pub fn edge(epsilon: f64) -> Self {
        Self {
            level: PrivacyLevel::Edge,
            epsilon: Some(epsilon).filter(|e| e.is_finite()),
            ..Self::default()
        }
    }

    pub fn node(epsilon: f64, degree_cap: usize, batch_size: usize) -> Self {
        Self {
            level: PrivacyLevel::Node,
            epsilon: Some(epsilon).filter(|e| e.is_finite()),
            degree_cap,
            batch_size,
            ..Self::default()
        }
    }

    fn explicit_noise(&self) -> Option<(f64, f64)> {
        match (self.sigma_ap, self.sigma_gp) {
            (Some(ap), Some(gp)) => Some((ap, gp)),
            (Some(ap), None) if self.level == PrivacyLevel::Edge => Some((ap, 0.0)),
            _ => None,
        }
    }
}

/// Trainable and buffer state of the modules that define the current stage.
#[derive(Debug, Clone, PartialEq)]
struct ModuleState {
    bases: Vec<Mlp>,
    head: Mlp,
}

/// A progressive model: base MLPs `0..=stage`, the current head, the
/// aggregate cache and the NAP noise configuration.
#[derive(Debug, Clone)]
pub struct ProgapModel {
    config: ModelConfig,
    norm: NormKind,
    input_dim: usize,
    num_classes: usize,
    stage: usize,
    modules: ModuleState,
    cache: AggregateCache,
    nap: NapConfig,
    seed: u64,
}

/// Activations of a stage forward pass over a set of rows.
#[derive(Debug, Clone)]
pub struct StageTrace {
    bases: Vec<MlpTrace>,
    head: MlpTrace,
    widths: Vec<usize>,
}

impl ProgapModel {
    /// Stage-0 model over the raw `features`.
    pub fn new(
        config: ModelConfig,
        norm: NormKind,
        features: Array2<f64>,
        num_classes: usize,
        nap: NapConfig,
        seed: u64,
    ) -> Result<Self> {
        if config.base_layers == 0 || config.hidden_dim == 0 {
            return Err(Error::Config("base MLPs need at least one layer and one hidden unit".into()));
        }
        if num_classes == 0 {
            return Err(Error::Config("at least one class is required".into()));
        }
        let input_dim = features.ncols();
        let mut model = Self {
            norm,
            input_dim,
            num_classes,
            stage: 0,
            modules: ModuleState {
                bases: Vec::new(),
                head: Mlp::from_layers(Vec::new(), NormKind::None, true),
            },
            cache: AggregateCache::with_features(features),
            nap,
            seed,
            config,
        };
        let base = model.new_base(0)?;
        model.modules.bases.push(base);
        model.modules.head = model.new_head(0)?;
        Ok(model)
    }

    fn new_base(&self, stage: usize) -> Result<Mlp> {
        let spec = MlpSpec {
            input_dim: if stage == 0 { self.input_dim } else { self.config.hidden_dim },
            hidden_dim: self.config.hidden_dim,
            output_dim: self.config.hidden_dim,
            num_layers: self.config.base_layers,
            norm: self.norm,
            plain_last: false,
        };
        Mlp::new(&spec, &mut keyed_rng(self.seed, Domain::Init, 2 * stage as u64))
    }

    fn new_head(&self, stage: usize) -> Result<Mlp> {
        let spec = MlpSpec {
            input_dim: (stage + 1) * self.config.hidden_dim,
            hidden_dim: self.config.hidden_dim,
            output_dim: self.num_classes,
            num_layers: 1,
            norm: NormKind::None,
            plain_last: true,
        };
        Mlp::new(&spec, &mut keyed_rng(self.seed, Domain::Init, 2 * stage as u64 + 1))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn cache(&self) -> &AggregateCache {
        &self.cache
    }

    pub fn nap_calls(&self) -> usize {
        self.cache.nap_calls()
    }

    pub fn nap_config(&self) -> &NapConfig {
        &self.nap
    }

    pub fn bases(&self) -> &[Mlp] {
        &self.modules.bases
    }

    pub fn head(&self) -> &Mlp {
        &self.modules.head
    }

    /// True when any base MLP normalizes with batch statistics.
    pub fn uses_batch_norm(&self) -> bool {
        self.modules.bases.iter().any(Mlp::uses_batch_norm)
    }

    /// Moves to the next stage: adds a fresh base MLP and replaces the head
    /// (the previous head and its combiner leave the parameter set).
    pub fn expand(&mut self) -> Result<()> {
        let next = self.stage + 1;
        let base = self.new_base(next)?;
        let head = self.new_head(next)?;
        self.modules.bases.push(base);
        self.modules.head = head;
        self.stage = next;
        Ok(())
    }

    /// Fills the cache up to the current stage, running NAP only for stages
    /// that are not cached yet. This is the only method that reads the graph.
    pub fn ensure_aggregates(&mut self, graph: &Graph) -> Result<()> {
        for k in 1..=self.stage {
            if self.cache.contains(k) {
                continue;
            }
            let prev = self.cache.get(k - 1).ok_or(Error::MissingAggregate(k - 1))?;
            let embedding = self.modules.bases[k - 1].forward_eval(prev)?;
            self.cache.cached_nap(k, graph, &embedding, &self.nap)?;
        }
        Ok(())
    }

    fn stage_input(&self, k: usize, rows: Option<&[usize]>) -> Result<Array2<f64>> {
        let x = self.cache.get(k).ok_or(Error::MissingAggregate(k))?;
        Ok(match rows {
            Some(rows) => x.select(Axis(0), rows),
            None => x.clone(),
        })
    }

    /// Traced forward pass of the current stage over `rows` (all nodes when
    /// `None`), reading only cached aggregates.
    pub fn forward_rows(&mut self, rows: Option<&[usize]>, mode: Mode) -> Result<(Array2<f64>, StageTrace)> {
        let mut embeddings = Vec::with_capacity(self.stage + 1);
        let mut traces = Vec::with_capacity(self.stage + 1);
        for k in 0..=self.stage {
            let input = self.stage_input(k, rows)?;
            let (emb, trace) = self.modules.bases[k].forward_traced(&input, mode)?;
            embeddings.push(emb);
            traces.push(trace);
        }
        let widths = embeddings.iter().map(|e| e.ncols()).collect();
        let views: Vec<ArrayView2<'_, f64>> = embeddings.iter().map(|e| e.view()).collect();
        let combined = jk_concat(&views)?;
        let (logits, head) = self.modules.head.forward_traced(&combined, mode)?;
        Ok((
            logits,
            StageTrace {
                bases: traces,
                head,
                widths,
            },
        ))
    }

    /// Parameter tape of the trainable set for `dlogits`: base MLPs first
    /// (only the newest one when `freeze_prior`), then the head.
    pub fn backward(&self, trace: &StageTrace, dlogits: &Array2<f64>) -> Result<GradTape> {
        let (head_tape, dcombined) = self.modules.head.backward(&trace.head, dlogits)?;
        let parts = jk_split(&dcombined, &trace.widths)?;
        let mut tape = GradTape::default();
        for k in self.trainable_bases() {
            let (base_tape, _) = self.modules.bases[k].backward(&trace.bases[k], &parts[k])?;
            tape.extend(base_tape);
        }
        tape.extend(head_tape);
        Ok(tape)
    }

    fn trainable_bases(&self) -> std::ops::RangeInclusive<usize> {
        if self.config.freeze_prior {
            self.stage..=self.stage
        } else {
            0..=self.stage
        }
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable_bases()
            .map(|k| self.modules.bases[k].num_params())
            .sum::<usize>()
            + self.modules.head.num_params()
    }

    pub fn trainable_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_trainable());
        for k in self.trainable_bases() {
            out.extend(self.modules.bases[k].flat_params());
        }
        out.extend(self.modules.head.flat_params());
        out
    }

    pub fn set_trainable_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_trainable() {
            return Err(Error::Shape(format!(
                "stage {} has {} trainable parameters, got {}",
                self.stage,
                self.num_trainable(),
                params.len()
            )));
        }
        let mut offset = 0;
        for k in self.trainable_bases() {
            let n = self.modules.bases[k].num_params();
            self.modules.bases[k].load_flat_params(&params[offset..offset + n])?;
            offset += n;
        }
        self.modules.head.load_flat_params(&params[offset..])
    }

    /// Eval-mode logits for every node from the cache alone. Fails if an
    /// aggregate of the current stage has not been computed.
    pub fn logits(&self) -> Result<Array2<f64>> {
        let mut embeddings = Vec::with_capacity(self.stage + 1);
        for k in 0..=self.stage {
            let x = self.cache.get(k).ok_or(Error::MissingAggregate(k))?;
            embeddings.push(self.modules.bases[k].forward_eval(x)?);
        }
        let views: Vec<ArrayView2<'_, f64>> = embeddings.iter().map(|e| e.view()).collect();
        self.modules.head.forward_eval(&jk_concat(&views)?)
    }

    /// Parameters, normalization buffers and cached aggregates as named tensors.
    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut out = vec![
            NamedTensor::new("meta/stage", vec![1], vec![self.stage as f64]),
            NamedTensor::new("meta/nap_sigma", vec![1], vec![self.nap.sigma]),
        ];
        let mut push_module = |prefix: String, mlp: &Mlp| {
            let shapes = mlp.param_shapes();
            let mut i = 0;
            mlp.for_each_param(&mut |p| {
                out.push(NamedTensor::new(format!("{prefix}/param/{i}"), shapes[i].clone(), p.to_vec()));
                i += 1;
            });
            let mut j = 0;
            mlp.for_each_buffer(&mut |b| {
                out.push(NamedTensor::new(format!("{prefix}/buffer/{j}"), vec![b.len()], b.to_vec()));
                j += 1;
            });
        };
        for (k, base) in self.modules.bases.iter().enumerate() {
            push_module(format!("base/{k}"), base);
        }
        push_module("head".into(), &self.modules.head);
        out.extend(self.cache.to_tensors());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.to_tensors())
    }

    /// Rebuilds a saved model. `config`, `norm`, `input_dim`, `num_classes`
    /// and `nap` must describe the same architecture that was saved.
    pub fn load(
        path: &Path,
        config: ModelConfig,
        norm: NormKind,
        num_classes: usize,
        nap: NapConfig,
    ) -> Result<Self> {
        let tensors = checkpoint::load(path)?;
        let find = |name: &str| tensors.iter().find(|t| t.name == name);
        let stage = find("meta/stage")
            .and_then(|t| t.data.first().copied())
            .ok_or_else(|| Error::Validation("checkpoint has no stage".into()))? as usize;
        let cache = AggregateCache::from_tensors(tensors.clone())?;
        let features = cache.get(0).ok_or(Error::MissingAggregate(0))?.clone();
        let mut model = Self::new(config, norm, features, num_classes, nap, 0)?;
        for _ in 0..stage {
            model.expand()?;
        }
        let restore = |prefix: String, mlp: &mut Mlp| -> Result<()> {
            let mut i = 0;
            let mut missing = None;
            mlp.for_each_param_mut(&mut |p| {
                match find(&format!("{prefix}/param/{i}")) {
                    Some(t) if t.data.len() == p.len() => p.copy_from_slice(&t.data),
                    _ => missing = Some(format!("{prefix}/param/{i}")),
                }
                i += 1;
            });
            let mut j = 0;
            mlp.for_each_buffer_mut(&mut |b| {
                match find(&format!("{prefix}/buffer/{j}")) {
                    Some(t) if t.data.len() == b.len() => b.copy_from_slice(&t.data),
                    _ => missing = Some(format!("{prefix}/buffer/{j}")),
                }
                j += 1;
            });
            match missing {
                Some(name) => Err(Error::Validation(format!("checkpoint tensor {name} missing or misshapen"))),
                None => Ok(()),
            }
        };
        for (k, base) in model.modules.bases.iter_mut().enumerate() {
            restore(format!("base/{k}"), base)?;
        }
        restore("head".into(), &mut model.modules.head)?;
        model.cache = cache;
        Ok(model)
    }
}

/// Eval-mode logits of the current stage, computing any missing aggregate
/// through NAP first.
pub fn forward_stage(model: &mut ProgapModel, graph: &Graph) -> Result<Array2<f64>> {
    model.ensure_aggregates(graph)?;
    model.logits()
}

/// Fraction of `split` nodes whose predicted class equals the label. Uses
/// cached aggregates only; it has no access to the graph.
pub fn evaluate(model: &ProgapModel, labels: &[usize], masks: &SplitMasks, split: Split) -> Result<f64> {
    Ok(accuracy(&predict(&model.logits()?), labels, masks.mask(split)))
}

fn accuracy(predictions: &[usize], labels: &[usize], mask: &[bool]) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for ((&p, &l), &m) in predictions.iter().zip(labels).zip(mask) {
        if m {
            total += 1;
            hits += (p == l) as usize;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EarlyStop {
    pub stop: bool,
    /// 1-based epoch of the best score (earliest on ties).
    pub best_epoch: usize,
}

/// Stops once `patience` epochs have passed since the best validation score.
pub fn early_stop(history: &[f64], patience: usize) -> EarlyStop {
    let mut best = 0;
    for (i, &v) in history.iter().enumerate() {
        if v > history[best] {
            best = i;
        }
    }
    let best_epoch = best + 1;
    EarlyStop {
        stop: !history.is_empty() && history.len() - best_epoch >= patience,
        best_epoch,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub stage: usize,
    pub epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub loss: f64,
}

/// How a run is optimized, derived from its privacy settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Full-batch Adam, no noise.
    NonPrivate,
    /// Full-batch Adam over noisy aggregates.
    Edge,
    /// DP-Adam over Poisson batches, noisy aggregates on a degree-bounded graph.
    Node,
}

/// Resolved privacy plan of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyPlan {
    pub regime: Regime,
    pub sigma_ap: f64,
    pub sigma_gp: f64,
    pub delta: Option<f64>,
    pub sampling_rate: f64,
    pub steps_per_epoch: usize,
    /// Accountant input, absent for non-private runs.
    pub spec: Option<PrivacySpec>,
    pub calibration: Option<Calibration>,
}

pub struct TrainOutcome {
    pub model: ProgapModel,
    pub metrics: Vec<EpochMetrics>,
    pub report: Option<AccountingReport>,
    pub plan: PrivacyPlan,
    /// The graph the model was trained on (degree-bounded at node level).
    pub graph: Graph,
    /// Optimizer steps skipped because their Poisson batch was empty.
    pub empty_batches: usize,
}

/// Resolves noise scales, δ and batching for a run.
pub fn plan_privacy(
    graph: &Graph,
    n_train: usize,
    model: &ModelConfig,
    privacy: &PrivacyConfig,
    train: &TrainConfig,
) -> Result<PrivacyPlan> {
    let explicit = privacy.explicit_noise();
    let non_private = privacy.level == PrivacyLevel::None
        || (explicit.is_none() && privacy.epsilon.is_none_or(|e| e.is_infinite()));
    let regime = match privacy.level {
        _ if non_private && privacy.level != PrivacyLevel::Node => Regime::NonPrivate,
        PrivacyLevel::Node if non_private => Regime::NonPrivate,
        PrivacyLevel::Node => Regime::Node,
        _ => Regime::Edge,
    };
    let mut plan = PrivacyPlan {
        regime,
        sigma_ap: 0.0,
        sigma_gp: 0.0,
        delta: None,
        sampling_rate: 1.0,
        steps_per_epoch: 1,
        spec: None,
        calibration: None,
    };
    if regime == Regime::NonPrivate {
        return Ok(plan);
    }

    let mut spec = match regime {
        Regime::Edge => PrivacySpec::edge(
            model.depth,
            privacy.delta.unwrap_or_else(|| privacy::default_delta(graph.num_edges())),
            Noise::TargetEpsilon(f64::INFINITY),
        ),
        _ => {
            if privacy.batch_size == 0 {
                return Err(Error::Config("node-level training needs a positive batch size".into()));
            }
            let q = (privacy.batch_size as f64 / n_train as f64).min(1.0);
            plan.sampling_rate = q;
            plan.steps_per_epoch = (1.0 / q).round().max(1.0) as usize;
            PrivacySpec {
                level: PrivacyLevel::Node,
                delta: privacy.delta.unwrap_or_else(|| privacy::default_delta(graph.num_nodes())),
                depth: model.depth,
                degree_cap: privacy.degree_cap,
                clip: privacy.clip,
                batch_size: privacy.batch_size.min(n_train),
                iterations: train.epochs * plan.steps_per_epoch,
                num_nodes: n_train,
                noise: Noise::TargetEpsilon(f64::INFINITY),
            }
        }
    };
    plan.delta = Some(spec.delta);

    match explicit {
        Some((ap, gp)) => {
            plan.sigma_ap = ap;
            plan.sigma_gp = gp;
            if ap == 0.0 && gp == 0.0 {
                // Noiseless: nothing to account, ε is unbounded.
                return Ok(plan);
            }
        }
        None => {
            let target = privacy.epsilon.expect("finite target checked above");
            spec.noise = Noise::TargetEpsilon(target);
            let cal = privacy::calibrate(&spec)?;
            plan.sigma_ap = cal.sigma_ap;
            plan.sigma_gp = cal.sigma_gp;
            plan.calibration = Some(cal);
        }
    }
    spec.noise = Noise::Explicit {
        sigma_ap: plan.sigma_ap,
        sigma_gp: plan.sigma_gp,
    };
    plan.spec = Some(spec);
    Ok(plan)
}

/// Trains all `K + 1` stages in order and accounts the run.
pub fn train_progressive(
    graph: &Graph,
    masks: &SplitMasks,
    model_config: &ModelConfig,
    privacy: &PrivacyConfig,
    train: &TrainConfig,
) -> Result<TrainOutcome> {
    masks.validate(graph.num_nodes())?;
    if train.epochs == 0 {
        return Err(Error::Config("epochs must be positive".into()));
    }
    if !(train.learning_rate > 0.0) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    let train_rows = masks.indices(Split::Train);
    let plan = plan_privacy(graph, train_rows.len(), model_config, privacy, train)?;

    let norm = match (plan.regime, model_config.norm) {
        (Regime::Node, Some(NormKind::Batch)) => {
            return Err(Error::Config(
                "node-level training cannot use batch normalization (it mixes samples)".into(),
            ));
        }
        (Regime::Node, None) => NormKind::Group,
        (_, None) => NormKind::Batch,
        (_, Some(kind)) => kind,
    };

    let working = if plan.regime == Regime::Node {
        bound_degree(graph, privacy.degree_cap, train.seed)?
    } else {
        graph.clone()
    };

    let nap = NapConfig {
        sigma: plan.sigma_ap,
        seed: train.seed,
    };
    let mut model = ProgapModel::new(
        model_config.clone(),
        norm,
        working.features().clone(),
        working.num_classes(),
        nap,
        train.seed,
    )?;

    let labels = working.labels().to_vec();
    let train_labels: Vec<usize> = train_rows.iter().map(|&i| labels[i]).collect();
    let mut metrics = Vec::new();
    let mut empty_batches = 0;
    let mut global_step = 0u64;

    for stage in 0..=model_config.depth {
        if stage > 0 {
            model.expand()?;
        }
        model.ensure_aggregates(&working)?;
        let mut opt = OptimizerState::new(model.num_trainable(), AdamConfig::with_lr(train.learning_rate));
        match plan.regime {
            Regime::NonPrivate | Regime::Edge => {
                train_stage_full_batch(&mut model, &mut opt, &train_rows, &train_labels, &labels, masks, train, &mut metrics)?;
            }
            Regime::Node => {
                let dp = DpConfig {
                    clip: privacy.clip,
                    noise_std: plan.sigma_gp,
                    sampling_rate: plan.sampling_rate,
                    seed: train.seed,
                };
                empty_batches += train_stage_dp(
                    &mut model,
                    &mut opt,
                    &dp,
                    plan.steps_per_epoch,
                    &train_rows,
                    &labels,
                    masks,
                    train,
                    &mut global_step,
                    &mut metrics,
                )?;
            }
        }
    }

    let report = plan.spec.as_ref().map(privacy::account).transpose()?;
    Ok(TrainOutcome {
        model,
        metrics,
        report,
        plan,
        graph: working,
        empty_batches,
    })
}

fn check_finite(loss: f64, stage: usize, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!("non-finite loss {loss} at stage {stage}, epoch {epoch}")))
    }
}

#[allow(clippy::too_many_arguments)]
fn train_stage_full_batch(
    model: &mut ProgapModel,
    opt: &mut OptimizerState,
    train_rows: &[usize],
    train_labels: &[usize],
    labels: &[usize],
    masks: &SplitMasks,
    train: &TrainConfig,
    metrics: &mut Vec<EpochMetrics>,
) -> Result<()> {
    let stage = model.stage();
    let mut history = Vec::with_capacity(train.epochs);
    let mut best = model.modules.clone();
    for epoch in 1..=train.epochs {
        let (logits, trace) = model.forward_rows(Some(train_rows), Mode::Train)?;
        let (loss, dlogits) = cross_entropy(&logits, train_labels);
        check_finite(loss, stage, epoch)?;
        let grads = model.backward(&trace, &dlogits)?.batch_gradient().summed();
        let mut params = model.trainable_params();
        opt.adam_step(&mut params, grads.as_slice().unwrap())?;
        model.set_trainable_params(&params)?;

        let predictions = predict(&model.logits()?);
        let val_acc = accuracy(&predictions, labels, &masks.val);
        metrics.push(EpochMetrics {
            stage,
            epoch,
            train_acc: accuracy(&predictions, labels, &masks.train),
            val_acc,
            loss,
        });
        history.push(val_acc);
        let verdict = early_stop(&history, train.patience.unwrap_or(usize::MAX));
        if verdict.best_epoch == epoch {
            best = model.modules.clone();
        }
        if verdict.stop {
            break;
        }
    }
    model.modules = best;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_stage_dp(
    model: &mut ProgapModel,
    opt: &mut OptimizerState,
    dp: &DpConfig,
    steps_per_epoch: usize,
    train_rows: &[usize],
    labels: &[usize],
    masks: &SplitMasks,
    train: &TrainConfig,
    global_step: &mut u64,
    metrics: &mut Vec<EpochMetrics>,
) -> Result<usize> {
    let stage = model.stage();
    let mut empty = 0;
    for epoch in 1..=train.epochs {
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for _ in 0..steps_per_epoch {
            let step = *global_step;
            *global_step += 1;
            let picked = poisson_sample(train_rows.len(), dp.sampling_rate, dp.seed, step);
            if picked.is_empty() {
                empty += 1;
                continue;
            }
            let rows: Vec<usize> = picked.iter().map(|&i| train_rows[i]).collect();
            let batch_labels: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
            let (logits, trace) = model.forward_rows(Some(&rows), Mode::Train)?;
            let (losses, dlogits) = cross_entropy_per_sample(&logits, &batch_labels);
            loss_sum += losses.sum();
            seen += rows.len();
            check_finite(loss_sum, stage, epoch)?;
            let per_sample = model.backward(&trace, &dlogits)?.per_sample_gradients()?;
            let grads = clip_and_noise(&per_sample, dp, train_rows.len(), step)?;
            let mut params = model.trainable_params();
            opt.adam_step(&mut params, &grads)?;
            model.set_trainable_params(&params)?;
        }
        let predictions = predict(&model.logits()?);
        metrics.push(EpochMetrics {
            stage,
            epoch,
            train_acc: accuracy(&predictions, labels, &masks.train),
            val_acc: accuracy(&predictions, labels, &masks.val),
            loss: if seen == 0 { 0.0 } else { loss_sum / seen as f64 },
        });
    }
    Ok(empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmSpec};
    use crate::nap::{aggregate, row_normalize};
    use crate::nn::Linear;

    fn small_sbm(seed: u64) -> (Graph, SplitMasks) {
        generate_sbm(&SbmSpec {
            num_nodes: 300,
            num_classes: 3,
            intra_p: 0.05,
            inter_p: 0.005,
            feature_dim: 6,
            feature_signal: 1.5,
            seed,
        })
        .unwrap()
    }

    fn quick_train(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate: 0.05,
            patience: None,
            seed: 3,
        }
    }

    #[test]
    fn early_stop_rules() {
        let rising: Vec<f64> = (0..50).map(|i| i as f64).collect();
        for n in 1..=50 {
            assert!(!early_stop(&rising[..n], 10).stop);
        }
        let flat = vec![0.5; 11];
        assert_eq!(early_stop(&flat[..10], 10), EarlyStop { stop: false, best_epoch: 1 });
        assert_eq!(early_stop(&flat, 10), EarlyStop { stop: true, best_epoch: 1 });
        let h = [0.5, 0.7, 0.6, 0.7];
        assert!(!early_stop(&h[..3], 2).stop);
        assert_eq!(early_stop(&h, 2), EarlyStop { stop: true, best_epoch: 2 });
    }

    #[test]
    fn stage_zero_is_a_plain_mlp() {
        let (g, _) = small_sbm(1);
        let nap = NapConfig { sigma: 1.0, seed: 0 };
        let mut model = ProgapModel::new(ModelConfig::default(), NormKind::None, g.features().clone(), 3, nap, 5).unwrap();
        let logits = forward_stage(&mut model, &g).unwrap();
        assert_eq!(g.adjacency_reads(), 0);
        assert_eq!(model.nap_calls(), 0);
        let emb = model.bases()[0].forward_eval(g.features()).unwrap();
        assert_eq!(logits, model.head().forward_eval(&emb).unwrap());
    }

    #[test]
    fn first_stage_uses_normalized_neighbor_sums() {
        // Identity base MLPs without activation turn the stage-1 input into
        // exactly Aᵀ · normalize(X).
        let (g, _) = small_sbm(2);
        let d = g.feature_dim();
        let config = ModelConfig {
            depth: 1,
            hidden_dim: d,
            ..ModelConfig::default()
        };
        let nap = NapConfig { sigma: 0.0, seed: 0 };
        let mut model = ProgapModel::new(config, NormKind::None, g.features().clone(), 3, nap, 1).unwrap();
        model.modules.bases[0] = Mlp::from_layers(vec![Linear::identity(d)], NormKind::None, true);
        model.expand().unwrap();
        model.modules.bases[1] = Mlp::from_layers(vec![Linear::identity(d)], NormKind::None, true);
        let logits = forward_stage(&mut model, &g).unwrap();

        let mut dense = Array2::<f64>::zeros((g.num_nodes(), g.num_nodes()));
        for (s, t) in g.adjacency().edges() {
            dense[[s, t]] = 1.0;
        }
        let agg = dense.t().dot(&row_normalize(g.features()));
        let combined = ndarray::concatenate(Axis(1), &[g.features().view(), agg.view()]).unwrap();
        let expected = model.head().forward_eval(&combined).unwrap();
        let diff = (&logits - &expected).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(diff < 1e-9);
        assert_eq!(model.cache().get(1).unwrap(), &aggregate(&g, &row_normalize(g.features())).unwrap());
    }

    #[test]
    fn one_nap_call_per_stage() {
        let (g, _) = small_sbm(3);
        let nap = NapConfig { sigma: 0.5, seed: 0 };
        let config = ModelConfig {
            depth: 3,
            ..ModelConfig::default()
        };
        let mut model = ProgapModel::new(config, NormKind::Batch, g.features().clone(), 3, nap, 1).unwrap();
        for s in 1..=3 {
            model.expand().unwrap();
            forward_stage(&mut model, &g).unwrap();
            forward_stage(&mut model, &g).unwrap();
            assert_eq!(model.nap_calls(), s);
        }
    }

    #[test]
    fn missing_aggregate_is_an_error() {
        let (g, _) = small_sbm(3);
        let nap = NapConfig { sigma: 0.5, seed: 0 };
        let mut model = ProgapModel::new(ModelConfig::default(), NormKind::Batch, g.features().clone(), 3, nap, 1).unwrap();
        model.expand().unwrap();
        assert!(matches!(model.logits(), Err(Error::MissingAggregate(1))));
    }

    #[test]
    fn expansion_carries_bases_and_drops_head() {
        let (g, _) = small_sbm(4);
        let nap = NapConfig { sigma: 0.0, seed: 0 };
        let mut model = ProgapModel::new(ModelConfig::default(), NormKind::Group, g.features().clone(), 3, nap, 1).unwrap();
        let base0 = model.bases()[0].clone();
        let head0 = model.head().clone();
        let before = model.num_trainable();
        model.expand().unwrap();
        assert_eq!(model.bases()[0], base0);
        assert_ne!(model.head().input_dim(), head0.input_dim());
        assert_eq!(
            model.num_trainable(),
            before - head0.num_params() + model.bases()[1].num_params() + model.head().num_params()
        );

        let mut frozen = ProgapModel::new(
            ModelConfig {
                freeze_prior: true,
                ..ModelConfig::default()
            },
            NormKind::Group,
            g.features().clone(),
            3,
            nap,
            1,
        )
        .unwrap();
        frozen.expand().unwrap();
        assert_eq!(frozen.num_trainable(), frozen.bases()[1].num_params() + frozen.head().num_params());
    }

    #[test]
    fn trainable_params_roundtrip() {
        let (g, _) = small_sbm(4);
        let nap = NapConfig { sigma: 0.0, seed: 0 };
        let mut model = ProgapModel::new(ModelConfig::default(), NormKind::Group, g.features().clone(), 3, nap, 1).unwrap();
        model.expand().unwrap();
        let mut p = model.trainable_params();
        p.iter_mut().for_each(|v| *v *= 0.5);
        model.set_trainable_params(&p).unwrap();
        assert_eq!(model.trainable_params(), p);
        assert!(model.set_trainable_params(&p[1..]).is_err());
    }

    #[test]
    fn depth_zero_training_never_reads_the_graph() {
        let (g, masks) = small_sbm(5);
        let config = ModelConfig {
            depth: 0,
            ..ModelConfig::default()
        };
        let out = train_progressive(&g, &masks, &config, &PrivacyConfig::edge(1.0), &quick_train(5)).unwrap();
        assert_eq!(out.model.nap_calls(), 0);
        assert_eq!(out.graph.adjacency_reads(), 0);
        assert_eq!(out.report.unwrap().epsilon, 0.0);
    }

    #[test]
    fn training_reads_the_graph_once_per_stage() {
        let (g, masks) = small_sbm(6);
        let out = train_progressive(&g, &masks, &ModelConfig::default(), &PrivacyConfig::edge(2.0), &quick_train(5)).unwrap();
        assert_eq!(out.model.nap_calls(), 2);
        assert_eq!(out.graph.adjacency_reads(), 2);
        let before = out.model.nap_calls();
        let a = evaluate(&out.model, g.labels(), &masks, Split::Test).unwrap();
        let b = evaluate(&out.model, g.labels(), &masks, Split::Test).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(out.model.nap_calls(), before);
        assert_eq!(out.graph.adjacency_reads(), 2);
        assert!((out.report.unwrap().epsilon - 2.0).abs() < 1e-5);
    }

    #[test]
    fn node_level_uses_group_norm_and_bounded_degree() {
        let (g, masks) = small_sbm(7);
        let privacy = PrivacyConfig::node(16.0, 3, 32);
        let out = train_progressive(&g, &masks, &ModelConfig::default(), &privacy, &quick_train(2)).unwrap();
        assert!(!out.model.uses_batch_norm());
        assert!(out.graph.out_degrees().iter().all(|&d| d <= 3));
        let report = out.report.unwrap();
        assert!(report.epsilon <= 16.0 && report.epsilon > 15.9);
        assert_eq!(out.model.nap_calls(), 2);

        let batch = PrivacyConfig {
            ..privacy.clone()
        };
        let cfg = ModelConfig {
            norm: Some(NormKind::Batch),
            ..ModelConfig::default()
        };
        assert!(matches!(train_progressive(&g, &masks, &cfg, &batch, &quick_train(1)), Err(Error::Config(_))));
    }

    #[test]
    fn zero_noise_full_rate_node_path_is_deterministic() {
        let (g, masks) = small_sbm(8);
        let n_train = masks.sizes().0;
        let privacy = PrivacyConfig {
            level: PrivacyLevel::Node,
            epsilon: None,
            batch_size: n_train,
            degree_cap: 1000,
            sigma_ap: Some(0.0),
            sigma_gp: Some(0.0),
            ..PrivacyConfig::default()
        };
        let run = || {
            let out = train_progressive(&g, &masks, &ModelConfig::default(), &privacy, &quick_train(3)).unwrap();
            (evaluate(&out.model, g.labels(), &masks, Split::Test).unwrap(), out.model.trainable_params())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(pa, pb);
    }

    #[test]
    fn evaluate_extremes() {
        let (g, masks) = small_sbm(9);
        let nap = NapConfig { sigma: 0.0, seed: 0 };
        let mut model = ProgapModel::new(ModelConfig::default(), NormKind::None, g.features().clone(), 3, nap, 1).unwrap();
        // A head that reads off a one-hot label column gives perfect accuracy.
        let mut onehot = Array2::<f64>::zeros((g.num_nodes(), 3));
        for (i, &l) in g.labels().iter().enumerate() {
            onehot[[i, l]] = 10.0;
        }
        model.cache = AggregateCache::with_features(onehot);
        model.input_dim = 3;
        model.config.hidden_dim = 3;
        model.modules.bases[0] = Mlp::from_layers(vec![Linear::identity(3)], NormKind::None, true);
        model.modules.head = Mlp::from_layers(vec![Linear::identity(3)], NormKind::None, true);
        assert_eq!(evaluate(&model, g.labels(), &masks, Split::Test).unwrap(), 1.0);
    }

    #[test]
    fn checkpoint_roundtrip_preserves_logits() {
        let (g, masks) = small_sbm(10);
        let out = train_progressive(&g, &masks, &ModelConfig::default(), &PrivacyConfig::edge(4.0), &quick_train(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        out.model.save(&path).unwrap();
        let restored = ProgapModel::load(
            &path,
            ModelConfig::default(),
            NormKind::Batch,
            g.num_classes(),
            *out.model.nap_config(),
        )
        .unwrap();
        assert_eq!(restored.logits().unwrap(), out.model.logits().unwrap());
        assert_eq!(restored.nap_calls(), 2);
    }
}
