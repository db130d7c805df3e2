//! The decoupled pipeline: stage-one feature learning under a sampling
//! strategy, then a stage-two classifier over the frozen extractor.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::model::{
    head_loss_and_grads, loss_and_grads, optimizer_step, AdamConfig, AdamState, Checkpoint, ExtractorParams,
    HeadParams, LrSchedule, Model, ModelConfig,
};
use crate::ncm::{self, ClassStats, Distance, MeanMode, MetricConfig};
use crate::rng::{self, Purpose};
use crate::sampling::{plan_epoch, ClassIndex, SamplerKind, SamplerSpec};
use crate::text::{preprocess, Stopwords};
use crate::vocab::{encode, EmbeddingTable, EncodedDoc, Vocabulary};

/// Encoded documents with their class count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub docs: Vec<EncodedDoc>,
    pub num_classes: usize,
}

impl Dataset {
    /// Clean, segment, drop stopwords and encode every document.
    pub fn encode(corpus: &LabeledCorpus, vocab: &Vocabulary, stopwords: &Stopwords, max_len: usize) -> Self {
        let docs = corpus
            .documents()
            .iter()
            .zip(corpus.class_ids())
            .map(|(d, &label)| EncodedDoc {
                ids: encode(&preprocess(&d.text, stopwords), vocab, max_len),
                label,
            })
            .collect();
        Self {
            docs,
            num_classes: corpus.num_classes(),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.docs.iter().map(|d| d.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for d in &self.docs {
            counts[d.label] += 1;
        }
        counts
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: LrSchedule,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            batch_size: 64,
            epochs: 15,
            lr: LrSchedule::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// One line of a training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: String,
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub eval_accuracy: Option<f64>,
    pub lr: f64,
    /// Realized number of draws per class in this epoch.
    pub class_draws: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOneResult {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochRecord>,
    pub sampler: SamplerSpec,
}

fn with_context(e: Error, context: &str) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("{context}: {msg}")),
        other => other,
    }
}

/// Features of every document under a fixed extractor.
pub fn extract_features(extractor: &ExtractorParams, data: &Dataset) -> Vec<Vec<f64>> {
    data.docs.iter().map(|d| extractor.features(&d.ids)).collect()
}

/// Accuracy of `model` on `data`.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    let mut correct = 0;
    for d in &data.docs {
        correct += usize::from(model.predict(&d.ids)? == d.label);
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}

/// Train extractor and head jointly for `cfg.epochs` epochs on batches
/// planned by `sampler`. Every epoch runs `⌈N / B⌉` batches.
pub fn stage1_train(
    train: &Dataset,
    eval: Option<&Dataset>,
    embedding: EmbeddingTable,
    sampler: SamplerKind,
    cfg: &TrainConfig,
    vocab_hash: u64,
) -> Result<StageOneResult> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::arg("epochs and batch size must be positive"));
    }
    let vocab_size = embedding.vocab_size();
    let extractor = ExtractorParams::init(&cfg.model, embedding, cfg.seed);
    let dim = cfg.model.feature_dim;
    let head = HeadParams::uniform(train.num_classes, dim, 1.0 / libm::sqrt(dim as f64), cfg.seed, 0);
    let mut model = Model { extractor, head };

    let spec = SamplerSpec::for_run(sampler, cfg.epochs, cfg.seed);
    let index = ClassIndex::new(&train.labels(), train.num_classes, cfg.seed)?;
    let batches = train.len().div_ceil(cfg.batch_size);
    let mut state = AdamState::new(cfg.adam);
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let plan = plan_epoch(&index, &spec, epoch, cfg.batch_size, batches)?;
        let lr = cfg.lr.lr(epoch);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        let mut draws = vec![0usize; train.num_classes];
        for (b, batch) in plan.batches.iter().enumerate() {
            let docs: Vec<&EncodedDoc> = batch.iter().map(|&i| &train.docs[i]).collect();
            for d in &docs {
                draws[d.label] += 1;
            }
            let out = loss_and_grads(&model, &docs, true).map_err(|e| with_context(e, &format!("epoch {epoch} batch {b}")))?;
            loss_sum += out.loss;
            correct += out.correct;
            optimizer_step(&mut state, &mut model, &out.grads, lr, false);
        }
        let eval_accuracy = eval.map(|e| accuracy(&model, e)).transpose()?;
        log.push(EpochRecord {
            stage: "stage1".into(),
            epoch,
            mean_loss: loss_sum / plan.batches.len() as f64,
            train_accuracy: correct as f64 / plan.len() as f64,
            eval_accuracy,
            lr,
            class_draws: draws,
        });
    }

    Ok(StageOneResult {
        checkpoint: Checkpoint {
            config_hash: cfg.model.fingerprint(vocab_size, train.num_classes),
            vocab_hash,
            model,
        },
        log,
        sampler: spec,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Crt,
    Ncm,
}

impl Classifier {
    pub const ALL: [Classifier; 2] = [Classifier::Crt, Classifier::Ncm];

    pub fn name(self) -> &'static str {
        match self {
            Classifier::Crt => "crt",
            Classifier::Ncm => "ncm",
        }
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Classifier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crt" => Ok(Classifier::Crt),
            "ncm" => Ok(Classifier::Ncm),
            other => Err(Error::arg(format!("unknown classifier {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTwoConfig {
    pub method: Classifier,
    pub ncm_mean_mode: MeanMode,
    /// Only read in [`MeanMode::Decay`].
    pub decay_alpha: f64,
    pub distance: Distance,
    pub metric: MetricConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Half-width of the uniform head re-initialization.
    pub init_scale: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for StageTwoConfig {
    fn default() -> Self {
        Self {
            method: Classifier::Crt,
            ncm_mean_mode: MeanMode::Batch,
            decay_alpha: 0.9,
            distance: Distance::Euclidean,
            metric: MetricConfig::default(),
            epochs: 5,
            lr: 5e-5,
            batch_size: 64,
            init_scale: 0.05,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Re-initialize the head and train it alone on fixed features under
/// class-balanced sampling.
pub fn crt_on_features(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    cfg: &StageTwoConfig,
) -> Result<(HeadParams, Vec<EpochRecord>)> {
    let dim = features.first().map(Vec::len).ok_or(Error::EmptyCorpus)?;
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::arg("epochs and batch size must be positive"));
    }
    let mut head = HeadParams::uniform(num_classes, dim, cfg.init_scale, cfg.seed, 1);
    let index = ClassIndex::new(labels, num_classes, cfg.seed)?;
    let spec = SamplerSpec::for_run(SamplerKind::Cbs, cfg.epochs, cfg.seed);
    let batches = features.len().div_ceil(cfg.batch_size);
    let mut state = AdamState::new(cfg.adam);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let plan = plan_epoch(&index, &spec, epoch, cfg.batch_size, batches)?;
        let mut loss_sum = 0.0;
        let mut correct = 0;
        let mut draws = vec![0usize; num_classes];
        for (b, batch) in plan.batches.iter().enumerate() {
            let feats: Vec<&[f64]> = batch.iter().map(|&i| features[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            for &y in &ys {
                draws[y] += 1;
            }
            let (loss, ok, grads) =
                head_loss_and_grads(&head, &feats, &ys).map_err(|e| with_context(e, &format!("crt epoch {epoch} batch {b}")))?;
            loss_sum += loss;
            correct += ok;
            state.begin_step();
            state.update("head.weight", head.weight.as_mut_slice(), grads.weight.as_slice(), cfg.lr);
            state.update("head.bias", &mut head.bias, &grads.bias, cfg.lr);
        }
        log.push(EpochRecord {
            stage: "crt".into(),
            epoch,
            mean_loss: loss_sum / plan.batches.len() as f64,
            train_accuracy: correct as f64 / plan.len() as f64,
            eval_accuracy: None,
            lr: cfg.lr,
            class_draws: draws,
        });
    }
    Ok((head, log))
}

/// Classifier re-training over the frozen stage-one extractor.
pub fn crt_stage2(stage1: &Checkpoint, train: &Dataset, cfg: &StageTwoConfig) -> Result<(HeadParams, Vec<EpochRecord>)> {
    let features = extract_features(&stage1.model.extractor, train);
    crt_on_features(&features, &train.labels(), train.num_classes, cfg)
}

/// Class statistics on fixed features. Running and decay modes visit the
/// samples in a seeded shuffled order; Mahalanobis distance additionally
/// fits the metric.
pub fn ncm_on_features(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    cfg: &StageTwoConfig,
) -> Result<(ClassStats, Vec<EpochRecord>)> {
    let mut order: Vec<usize> = (0..features.len()).collect();
    if cfg.ncm_mean_mode != MeanMode::Batch {
        order.shuffle(&mut rng::stream(cfg.seed, Purpose::NcmOrder, 0));
    }
    let feats: Vec<Vec<f64>> = order.iter().map(|&i| features[i].clone()).collect();
    let ys: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let mut stats = match cfg.ncm_mean_mode {
        MeanMode::Batch => ncm::batch_means(&feats, &ys, num_classes)?,
        MeanMode::Running => ncm::running_means(&feats, &ys, num_classes)?,
        MeanMode::Decay => ncm::decay_means(&feats, &ys, num_classes, cfg.batch_size, cfg.decay_alpha)?,
    };
    let mut log = Vec::new();
    if cfg.distance == Distance::Mahalanobis {
        let fit = ncm::metric_fit(&stats, &feats, &ys, &cfg.metric)?;
        for (epoch, objective) in fit.objective_log.iter().enumerate() {
            log.push(EpochRecord {
                stage: "metric".into(),
                epoch,
                mean_loss: -objective,
                train_accuracy: f64::NAN,
                eval_accuracy: None,
                lr: 0.0,
                class_draws: Vec::new(),
            });
        }
        stats.metric = Some(fit.metric);
    }
    Ok((stats, log))
}

/// Nearest-class-mean statistics over the frozen stage-one extractor.
pub fn ncm_fit(stage1: &Checkpoint, train: &Dataset, cfg: &StageTwoConfig) -> Result<(ClassStats, Vec<EpochRecord>)> {
    let features = extract_features(&stage1.model.extractor, train);
    ncm_on_features(&features, &train.labels(), train.num_classes, cfg)
}
