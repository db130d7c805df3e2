//! Trainable TextCNN extractor plus linear softmax head, with explicit
//! backpropagation.

mod adam;
mod checkpoint;
mod extractor;
mod head;

pub use adam::{AdamConfig, AdamState, LrSchedule};
pub use checkpoint::{Checkpoint, NamedTensor, TensorFile, CHECKPOINT_MAGIC, FORMAT_VERSION};
pub use extractor::{ConvBank, ExtractorParams, ForwardCache};
pub use head::{cross_entropy, HeadParams};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{argmax, axpy};
use crate::vocab::{fingerprint, EncodedDoc, PAD_ID};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Filters per width.
    pub filters: usize,
    pub filter_widths: Vec<usize>,
    pub feature_dim: usize,
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            filters: 32,
            filter_widths: vec![2, 3, 4],
            feature_dim: 128,
            max_len: 64,
        }
    }
}

impl ModelConfig {
    /// Hash of everything that fixes tensor shapes.
    pub fn fingerprint(&self, vocab_size: usize, num_classes: usize) -> u64 {
        let text = format!(
            "E={};F={};widths={:?};D={};L={};V={};S={}",
            self.embed_dim, self.filters, self.filter_widths, self.feature_dim, self.max_len, vocab_size, num_classes
        );
        fingerprint(text.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub extractor: ExtractorParams,
    pub head: HeadParams,
}

/// Gradients with the same layout as [`Model`]. `extractor` is `None` when
/// only the head was differentiated.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub extractor: Option<ExtractorParams>,
    pub head: HeadParams,
}

/// Result of one forward/backward pass over a batch.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub loss: f64,
    pub correct: usize,
    pub grads: Gradients,
}

impl Model {
    pub fn predict(&self, ids: &[u32]) -> Result<usize> {
        self.head.predict(&self.extractor.features(ids))
    }

    /// Named tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = extractor_tensors(&self.extractor);
        let h = &self.head;
        out.push(("head.weight".into(), vec![h.weight.rows(), h.weight.cols()], h.weight.as_slice()));
        out.push(("head.bias".into(), vec![h.bias.len()], &h.bias));
        out
    }
}

fn extractor_tensors(p: &ExtractorParams) -> Vec<(String, Vec<usize>, &[f64])> {
    let m = &p.embedding.matrix;
    let mut out = vec![("embedding".into(), vec![m.rows(), m.cols()], m.as_slice())];
    for b in &p.convs {
        out.push((format!("conv{}.weight", b.width), vec![b.weight.rows(), b.weight.cols()], b.weight.as_slice()));
        out.push((format!("conv{}.bias", b.width), vec![b.bias.len()], b.bias.as_slice()));
    }
    out.push(("proj.weight".into(), vec![p.proj_weight.rows(), p.proj_weight.cols()], p.proj_weight.as_slice()));
    out.push(("proj.bias".into(), vec![p.proj_bias.len()], &p.proj_bias));
    out
}

fn extractor_tensors_mut(p: &mut ExtractorParams) -> Vec<(String, &mut [f64])> {
    let mut out: Vec<(String, &mut [f64])> = vec![("embedding".into(), p.embedding.matrix.as_mut_slice())];
    for b in &mut p.convs {
        out.push((format!("conv{}.weight", b.width), b.weight.as_mut_slice()));
        out.push((format!("conv{}.bias", b.width), b.bias.as_mut_slice()));
    }
    out.push(("proj.weight".into(), p.proj_weight.as_mut_slice()));
    out.push(("proj.bias".into(), p.proj_bias.as_mut_slice()));
    out
}

/// Mean cross-entropy over `batch` and exact gradients for every tensor.
/// With `train_extractor == false` only the head is differentiated.
pub fn loss_and_grads(model: &Model, batch: &[&EncodedDoc], train_extractor: bool) -> Result<BatchOutcome> {
    if batch.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut ext_grads = train_extractor.then(|| model.extractor.zeros_like());
    let mut head_grads = HeadParams::zeros(model.head.num_classes(), model.head.dim());
    let mut loss = 0.0;
    let mut correct = 0;
    for doc in batch {
        let (feature, cache) = model.extractor.forward(&doc.ids);
        let logits = model.head.logits(&feature)?;
        let (l, mut d_logits) = cross_entropy(&logits, doc.label);
        if !l.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {l} on a batch of {} (label {}, max |logit| {:.3e})",
                batch.len(),
                doc.label,
                logits.iter().fold(0.0f64, |a, v| a.max(v.abs()))
            )));
        }
        loss += l * scale;
        correct += usize::from(argmax(&logits) == doc.label);
        for d in &mut d_logits {
            *d *= scale;
        }
        for (c, &g) in d_logits.iter().enumerate() {
            axpy(g, &feature, head_grads.weight.row_mut(c));
            head_grads.bias[c] += g;
        }
        if let Some(grads) = ext_grads.as_mut() {
            let d_feature = model.head.weight.t_matvec(&d_logits);
            model.extractor.backward(&cache, &d_feature, grads);
        }
    }
    Ok(BatchOutcome {
        loss,
        correct,
        grads: Gradients {
            extractor: ext_grads,
            head: head_grads,
        },
    })
}

/// Mean cross-entropy of the head alone over precomputed features.
pub fn head_loss_and_grads(head: &HeadParams, features: &[&[f64]], labels: &[usize]) -> Result<(f64, usize, HeadParams)> {
    if features.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    let scale = 1.0 / features.len() as f64;
    let mut grads = HeadParams::zeros(head.num_classes(), head.dim());
    let mut loss = 0.0;
    let mut correct = 0;
    for (feature, &label) in features.iter().zip(labels) {
        let logits = head.logits(feature)?;
        let (l, d_logits) = cross_entropy(&logits, label);
        if !l.is_finite() {
            return Err(Error::Numeric(format!("non-finite head loss {l} (label {label})")));
        }
        loss += l * scale;
        correct += usize::from(argmax(&logits) == label);
        for (c, &g) in d_logits.iter().enumerate() {
            axpy(g * scale, feature, grads.weight.row_mut(c));
            grads.bias[c] += g * scale;
        }
    }
    Ok((loss, correct, grads))
}

/// Apply one Adam step. Frozen tensors are left bit-identical; the padding
/// row of the embedding is re-zeroed after the update.
pub fn optimizer_step(state: &mut AdamState, model: &mut Model, grads: &Gradients, lr: f64, freeze_extractor: bool) {
    state.begin_step();
    if !freeze_extractor {
        if let Some(g) = &grads.extractor {
            let embed = model.extractor.embedding.trainable;
            let gt = extractor_tensors(g);
            for ((name, param), (_, _, grad)) in extractor_tensors_mut(&mut model.extractor).into_iter().zip(gt) {
                if name == "embedding" && !embed {
                    continue;
                }
                state.update(&name, param, grad, lr);
            }
            let pad = model.extractor.embedding.matrix.row_mut(PAD_ID as usize);
            pad.fill(0.0);
        }
    }
    state.update("head.weight", model.head.weight.as_mut_slice(), grads.head.weight.as_slice(), lr);
    state.update("head.bias", &mut model.head.bias, &grads.head.bias, lr);
    debug_assert!(model.extractor.embedding.matrix.row(PAD_ID as usize).iter().all(|&v| v == 0.0));
}

/// Flat copies of every gradient tensor, by name. Useful for diagnostics and
/// gradient checks.
pub fn gradient_tensors(grads: &Gradients) -> Vec<(String, Vec<f64>)> {
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    if let Some(g) = &grads.extractor {
        for (name, _, data) in extractor_tensors(g) {
            if name == "embedding" && !g.embedding.trainable {
                continue;
            }
            out.push((name, data.to_vec()));
        }
    }
    out.push(("head.weight".into(), grads.head.weight.as_slice().to_vec()));
    out.push(("head.bias".into(), grads.head.bias.clone()));
    out
}

/// Mutable access to one parameter of `model` by tensor name and flat
/// offset.
pub fn parameter_mut<'a>(model: &'a mut Model, name: &str, offset: usize) -> Option<&'a mut f64> {
    match name {
        "head.weight" => model.head.weight.as_mut_slice().get_mut(offset),
        "head.bias" => model.head.bias.get_mut(offset),
        _ => extractor_tensors_mut(&mut model.extractor)
            .into_iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, t)| t.get_mut(offset)),
    }
}
