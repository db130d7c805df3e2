//! Resolved settings and the in-memory stage-1 / stage-2 / scoring steps
//! shared by the single-run commands and the grid.

use serde::{Deserialize, Serialize};

use longtail_core::eval::{bucket_report, evaluate, Bucket, BucketAccuracy, BucketSpec, EvalReport};
use longtail_core::model::{AdamConfig, Checkpoint, ExtractorParams, HeadParams, LrSchedule, ModelConfig};
use longtail_core::ncm::{ClassStats, Distance, MeanMode, MetricConfig};
use longtail_core::sampling::SamplerKind;
use longtail_core::train::{
    crt_on_features, extract_features, ncm_on_features, stage1_train, Classifier, Dataset, EpochRecord, StageOneResult,
    StageTwoConfig, TrainConfig,
};

use crate::data::PreparedData;
use crate::error::{CliError, CliResult};

/// Every stage-1 knob, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainSettings {
    pub sampler: SamplerKind,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decayed: f64,
    pub decay_after: usize,
    pub filters: usize,
    pub filter_widths: Vec<usize>,
    pub feature_dim: usize,
    pub freeze_embedding: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let cfg = TrainConfig::default();
        Self {
            sampler: SamplerKind::Ibs,
            seed: cfg.seed,
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr.initial,
            lr_decayed: cfg.lr.decayed,
            decay_after: cfg.lr.decay_after,
            filters: cfg.model.filters,
            filter_widths: cfg.model.filter_widths,
            feature_dim: cfg.model.feature_dim,
            freeze_embedding: false,
        }
    }
}

impl TrainSettings {
    /// Embedding width and sequence length come from the prepared data.
    pub fn model_config(&self, data: &PreparedData) -> ModelConfig {
        ModelConfig {
            embed_dim: data.embedding.dim(),
            filters: self.filters,
            filter_widths: self.filter_widths.clone(),
            feature_dim: self.feature_dim,
            max_len: data.meta.options.max_len,
        }
    }

    pub fn train_config(&self, data: &PreparedData) -> TrainConfig {
        TrainConfig {
            model: self.model_config(data),
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr: LrSchedule {
                initial: self.lr,
                decayed: self.lr_decayed,
                decay_after: self.decay_after,
            },
            adam: AdamConfig::default(),
            seed: self.seed,
        }
    }

    pub fn config_hash(&self, data: &PreparedData) -> u64 {
        self.model_config(data).fingerprint(data.vocab.len(), data.labels().len())
    }

    fn validate(&self) -> CliResult<()> {
        if self.filters == 0 || self.feature_dim == 0 || self.filter_widths.is_empty() || self.filter_widths.contains(&0) {
            return Err(CliError::usage("filters, feature-dim and every filter width must be positive"));
        }
        for (name, lr) in [("lr", self.lr), ("lr-decayed", self.lr_decayed)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(CliError::usage(format!("{name} must be a positive number")));
            }
        }
        Ok(())
    }
}

/// Every stage-2 knob, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Stage2Settings {
    pub method: Classifier,
    pub seed: u64,
    pub stage2_epochs: usize,
    pub stage2_lr: f64,
    pub stage2_batch_size: usize,
    pub init_scale: f64,
    pub mean_mode: MeanMode,
    pub decay_alpha: f64,
    pub distance: Distance,
    pub metric_dim: usize,
    pub metric_epochs: usize,
    pub metric_step: f64,
}

impl Default for Stage2Settings {
    fn default() -> Self {
        let cfg = StageTwoConfig::default();
        Self {
            method: cfg.method,
            seed: cfg.seed,
            stage2_epochs: cfg.epochs,
            stage2_lr: cfg.lr,
            stage2_batch_size: cfg.batch_size,
            init_scale: cfg.init_scale,
            mean_mode: cfg.ncm_mean_mode,
            decay_alpha: cfg.decay_alpha,
            distance: cfg.distance,
            metric_dim: cfg.metric.dim,
            metric_epochs: cfg.metric.epochs,
            metric_step: cfg.metric.initial_step,
        }
    }
}

impl Stage2Settings {
    pub fn config(&self) -> CliResult<StageTwoConfig> {
        if !(self.decay_alpha > 0.0 && self.decay_alpha < 1.0) {
            return Err(CliError::usage("decay-alpha must lie in (0, 1)"));
        }
        if !(self.stage2_lr.is_finite() && self.stage2_lr > 0.0) {
            return Err(CliError::usage("stage2-lr must be a positive number"));
        }
        Ok(StageTwoConfig {
            method: self.method,
            ncm_mean_mode: self.mean_mode,
            decay_alpha: self.decay_alpha,
            distance: self.distance,
            metric: MetricConfig {
                dim: self.metric_dim,
                epochs: self.metric_epochs,
                initial_step: self.metric_step,
            },
            epochs: self.stage2_epochs,
            lr: self.stage2_lr,
            batch_size: self.stage2_batch_size,
            init_scale: self.init_scale,
            adam: AdamConfig::default(),
            seed: self.seed,
        })
    }
}

/// Stage 1 on the prepared data.
pub fn run_stage1(data: &PreparedData, train: &Dataset, eval: &Dataset, settings: &TrainSettings) -> CliResult<StageOneResult> {
    settings.validate()?;
    let mut embedding = data.embedding.clone();
    embedding.trainable = !settings.freeze_embedding;
    Ok(stage1_train(
        train,
        Some(eval),
        embedding,
        settings.sampler,
        &settings.train_config(data),
        data.vocab_hash(),
    )?)
}

/// A trained decision rule over extractor features.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Head(HeadParams),
    Ncm { stats: ClassStats, distance: Distance },
}

impl Decision {
    pub fn predict(&self, feature: &[f64]) -> longtail_core::Result<usize> {
        match self {
            Decision::Head(head) => head.predict(feature),
            Decision::Ncm { stats, distance } => stats.predict(feature, *distance),
        }
    }
}

/// Stage 2 from precomputed training features of the frozen extractor.
pub fn run_stage2_on_features(
    features: &[Vec<f64>],
    train: &Dataset,
    settings: &Stage2Settings,
) -> CliResult<(Decision, Vec<EpochRecord>)> {
    let cfg = settings.config()?;
    let labels = train.labels();
    Ok(match cfg.method {
        Classifier::Crt => {
            let (head, log) = crt_on_features(features, &labels, train.num_classes, &cfg)?;
            (Decision::Head(head), log)
        }
        Classifier::Ncm => {
            let (stats, log) = ncm_on_features(features, &labels, train.num_classes, &cfg)?;
            (
                Decision::Ncm {
                    stats,
                    distance: cfg.distance,
                },
                log,
            )
        }
    })
}

pub fn run_stage2(stage1: &Checkpoint, train: &Dataset, settings: &Stage2Settings) -> CliResult<(Decision, Vec<EpochRecord>)> {
    let features = extract_features(&stage1.model.extractor, train);
    run_stage2_on_features(&features, train, settings)
}

/// Evaluation report plus bucket accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub report: EvalReport,
    pub buckets: BucketAccuracy,
}

impl Scores {
    pub fn bucket(&self, b: Bucket) -> Option<f64> {
        self.buckets.get(b)
    }
}

/// Score a decision rule on features of the eval documents.
pub fn score(
    eval_features: &[Vec<f64>],
    eval: &Dataset,
    decision: &Decision,
    labels: &[String],
    buckets: &BucketSpec,
) -> CliResult<Scores> {
    let mut pairs = Vec::with_capacity(eval.len());
    for (f, d) in eval_features.iter().zip(&eval.docs) {
        pairs.push((d.label, decision.predict(f)?));
    }
    let report = evaluate(pairs, eval.num_classes)?;
    let buckets = bucket_report(&report, labels, buckets)?;
    Ok(Scores { report, buckets })
}

pub fn eval_features(extractor: &ExtractorParams, eval: &Dataset) -> Vec<Vec<f64>> {
    extract_features(extractor, eval)
}

/// Buckets from `much=A,B;medium=C;less=D`, or training-count terciles when
/// no spec is given.
pub fn bucket_spec(data: &PreparedData, spec: Option<&str>) -> CliResult<BucketSpec> {
    let labels = data.labels();
    let Some(spec) = spec else {
        return Ok(BucketSpec::terciles(labels, &data.meta.train_counts)?);
    };
    let mut lists = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, members) = part
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("bucket-labels: expected name=LABEL,... in {part:?}")))?;
        let bucket = Bucket::ALL
            .into_iter()
            .find(|b| b.name() == name.trim())
            .ok_or_else(|| CliError::usage(format!("bucket-labels: unknown bucket {:?}", name.trim())))?;
        let members: Vec<String> = members
            .split(',')
            .map(str::trim)
            .filter(|m| !m.is_empty())
            .map(String::from)
            .collect();
        lists.push((bucket, members));
    }
    Ok(BucketSpec::explicit(labels, &lists)?)
}
