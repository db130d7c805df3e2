//! TextCNN feature extractor: embedding lookup, one valid 1-D convolution
//! bank per filter width, rectifier, max-over-time pooling and an affine
//! projection to the feature dimension.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

use crate::linalg::{axpy, dot, Matrix};
use crate::rng::{self, Purpose};
use crate::vocab::{EmbeddingTable, PAD_ID};

use super::ModelConfig;

/// `F` filters of width `w`, each flattened to `w · E` weights laid out
/// position-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBank {
    pub width: usize,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams {
    pub embedding: EmbeddingTable,
    pub convs: Vec<ConvBank>,
    /// `D × (banks · F)`
    pub proj_weight: Matrix,
    pub proj_bias: Vec<f64>,
}

/// What backpropagation needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    ids: Vec<u32>,
    inputs: Vec<f64>,
    pooled: Vec<f64>,
    /// Winning position per filter, `None` when the pooled value is zero.
    winners: Vec<Option<usize>>,
}

impl ForwardCache {
    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }
}

impl ExtractorParams {
    /// Convolution and projection weights uniform in `±1/√fan_in`, biases
    /// zero.
    pub fn init(config: &ModelConfig, embedding: EmbeddingTable, seed: u64) -> Self {
        let e = embedding.dim();
        let mut rng = rng::stream(seed, Purpose::ExtractorInit, 0);
        let convs = config
            .filter_widths
            .iter()
            .map(|&w| {
                let fan_in = w * e;
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                ConvBank {
                    width: w,
                    weight: Matrix::from_fn(config.filters, fan_in, |_, _| rng.random_range(-bound..=bound)),
                    bias: vec![0.0; config.filters],
                }
            })
            .collect::<Vec<_>>();
        let pooled = config.filters * config.filter_widths.len();
        let bound = 1.0 / libm::sqrt(pooled as f64);
        let proj_weight = Matrix::from_fn(config.feature_dim, pooled, |_, _| rng.random_range(-bound..=bound));
        Self {
            embedding,
            convs,
            proj_weight,
            proj_bias: vec![0.0; config.feature_dim],
        }
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            embedding: EmbeddingTable {
                matrix: Matrix::zeros(self.embedding.vocab_size(), self.embedding.dim()),
                trainable: self.embedding.trainable,
            },
            convs: self
                .convs
                .iter()
                .map(|b| ConvBank {
                    width: b.width,
                    weight: Matrix::zeros(b.weight.rows(), b.weight.cols()),
                    bias: vec![0.0; b.bias.len()],
                })
                .collect(),
            proj_weight: Matrix::zeros(self.proj_weight.rows(), self.proj_weight.cols()),
            proj_bias: vec![0.0; self.proj_bias.len()],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.proj_bias.len()
    }

    fn max_width(&self) -> usize {
        self.convs.iter().map(|b| b.width).max().unwrap_or(1)
    }

    pub fn features(&self, ids: &[u32]) -> Vec<f64> {
        self.forward(ids).0
    }

    /// Feature vector plus the cache for [`backward`](Self::backward).
    /// Sequences shorter than the widest filter are padded up to it.
    pub fn forward(&self, ids: &[u32]) -> (Vec<f64>, ForwardCache) {
        let e = self.embedding.dim();
        let mut ids = ids.to_vec();
        if ids.len() < self.max_width() {
            ids.resize(self.max_width(), PAD_ID);
        }
        let mut inputs = Vec::with_capacity(ids.len() * e);
        for &id in &ids {
            inputs.extend_from_slice(self.embedding.matrix.row(id as usize));
        }

        let mut pooled = Vec::new();
        let mut winners = Vec::new();
        for bank in &self.convs {
            let span = bank.width * e;
            let positions = ids.len() + 1 - bank.width;
            for f in 0..bank.weight.rows() {
                let kernel = bank.weight.row(f);
                let mut best = 0.0;
                let mut at = None;
                for p in 0..positions {
                    let z = bank.bias[f] + dot(kernel, &inputs[p * e..p * e + span]);
                    // Strict comparison keeps the earliest maximum.
                    if z > best {
                        best = z;
                        at = Some(p);
                    }
                }
                pooled.push(best);
                winners.push(at);
            }
        }

        let mut feature = self.proj_weight.matvec(&pooled);
        for (v, b) in feature.iter_mut().zip(&self.proj_bias) {
            *v += b;
        }
        (
            feature,
            ForwardCache {
                ids,
                inputs,
                pooled,
                winners,
            },
        )
    }

    /// Accumulate the gradient of a scalar with respect to every parameter
    /// into `grads`, given `d_feature`. Embedding rows are skipped unless
    /// `grads.embedding.trainable`.
    pub fn backward(&self, cache: &ForwardCache, d_feature: &[f64], grads: &mut ExtractorParams) {
        let e = self.embedding.dim();
        for (o, &g) in d_feature.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            axpy(g, &cache.pooled, grads.proj_weight.row_mut(o));
            grads.proj_bias[o] += g;
        }
        let d_pooled = self.proj_weight.t_matvec(d_feature);

        let embed = grads.embedding.trainable;
        let mut d_inputs = if embed { vec![0.0; cache.inputs.len()] } else { Vec::new() };
        let mut slot = 0;
        for (bank, gbank) in self.convs.iter().zip(grads.convs.iter_mut()) {
            let span = bank.width * e;
            for f in 0..bank.weight.rows() {
                let g = d_pooled[slot];
                let winner = cache.winners[slot];
                slot += 1;
                let Some(p) = winner else { continue };
                let window = &cache.inputs[p * e..p * e + span];
                axpy(g, window, gbank.weight.row_mut(f));
                gbank.bias[f] += g;
                if embed {
                    axpy(g, bank.weight.row(f), &mut d_inputs[p * e..p * e + span]);
                }
            }
        }
        if embed {
            for (pos, &id) in cache.ids.iter().enumerate() {
                let row = grads.embedding.matrix.row_mut(id as usize);
                for (r, d) in row.iter_mut().zip(&d_inputs[pos * e..(pos + 1) * e]) {
                    *r += d;
                }
            }
        }
    }
}
