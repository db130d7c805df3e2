//! Nearest-class-mean classification over frozen features.
//!
//! Class means can be computed exactly, as a per-sample running mean, or as
//! an exponentially decayed mean of batch means. Distances are squared
//! Euclidean, Mahalanobis `(x−μ)ᵀWᵀW(x−μ)` under a learned `m × D` metric
//! `W`, or cosine.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, log_sum_exp, softmax, squared_distance, Matrix};
use crate::model::HeadParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanMode {
    /// Exact mean of all class features.
    Batch,
    /// `μ ← n/(n+1)·μ + 1/(n+1)·φ(x)`, one sample at a time.
    Running,
    /// `μ ← α·μ + (1−α)·batch_mean`, once per batch.
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Euclidean,
    Mahalanobis,
    Cosine,
}

macro_rules! parse_enum {
    ($ty:ty, $($name:literal => $variant:expr),+) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($variant),)+
                    other => Err(Error::arg(format!("unknown {} {other:?}", stringify!($ty)))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self { $(v if *v == $variant => $name,)+ _ => unreachable!() };
                f.write_str(name)
            }
        }
    };
}

parse_enum!(MeanMode, "batch" => MeanMode::Batch, "running" => MeanMode::Running, "decay" => MeanMode::Decay);
parse_enum!(Distance, "euclidean" => Distance::Euclidean, "mahalanobis" => Distance::Mahalanobis, "cosine" => Distance::Cosine);

/// Per-class feature means, sample counts and an optional metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub means: Matrix,
    pub counts: Vec<usize>,
    pub metric: Option<Matrix>,
}

impl ClassStats {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    /// Classes without samples never win a prediction.
    pub fn usable(&self, class: usize) -> bool {
        self.counts[class] > 0
    }

    pub fn distance(&self, feature: &[f64], class: usize, kind: Distance) -> Result<f64> {
        let mu = self.means.row(class);
        match kind {
            Distance::Euclidean => Ok(squared_distance(feature, mu)),
            Distance::Mahalanobis => {
                let w = self
                    .metric
                    .as_ref()
                    .ok_or_else(|| Error::arg("Mahalanobis distance needs a fitted metric"))?;
                Ok(mahalanobis(w, feature, mu))
            }
            Distance::Cosine => {
                let denom = libm::sqrt(dot(feature, feature) * dot(mu, mu));
                Ok(if denom == 0.0 { 1.0 } else { 1.0 - dot(feature, mu) / denom })
            }
        }
    }

    /// Nearest usable class mean; ties go to the lowest class id.
    pub fn predict(&self, feature: &[f64], kind: Distance) -> Result<usize> {
        if feature.len() != self.dim() {
            return Err(Error::Shape(format!("feature {} vs means {}", feature.len(), self.dim())));
        }
        let mut best: Option<(usize, f64)> = None;
        for c in (0..self.num_classes()).filter(|&c| self.usable(c)) {
            let d = self.distance(feature, c, kind)?;
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c, d));
            }
        }
        best.map(|(c, _)| c).ok_or(Error::NoUsableClass)
    }

    /// Linear head whose argmax equals [`predict`](Self::predict).
    ///
    /// For Euclidean and Mahalanobis distances with `M = WᵀW` (identity for
    /// Euclidean) the rows are `Mμ_y` and biases `−½ μ_yᵀMμ_y`. For cosine
    /// the rows are the unit-normalized means with zero bias. Unusable
    /// classes get a zero row and the most negative finite bias.
    pub fn as_head(&self, kind: Distance) -> Result<HeadParams> {
        let s = self.num_classes();
        let d = self.dim();
        let mut head = HeadParams::zeros(s, d);
        let gram = match kind {
            Distance::Euclidean | Distance::Cosine => None,
            Distance::Mahalanobis => Some(
                self.metric
                    .as_ref()
                    .ok_or_else(|| Error::arg("Mahalanobis head needs a fitted metric"))?
                    .gram(),
            ),
        };
        for c in 0..s {
            if !self.usable(c) {
                head.bias[c] = f64::MIN;
                continue;
            }
            let mu = self.means.row(c);
            match kind {
                Distance::Cosine => {
                    let norm = libm::sqrt(dot(mu, mu));
                    if norm > 0.0 {
                        for (w, m) in head.weight.row_mut(c).iter_mut().zip(mu) {
                            *w = m / norm;
                        }
                    }
                }
                _ => {
                    let row = match &gram {
                        Some(g) => g.matvec(mu),
                        None => mu.to_vec(),
                    };
                    head.bias[c] = -0.5 * dot(mu, &row);
                    head.weight.row_mut(c).copy_from_slice(&row);
                }
            }
        }
        Ok(head)
    }
}

/// `(x−μ)ᵀWᵀW(x−μ)` computed as `‖W(x−μ)‖²`.
pub fn mahalanobis(w: &Matrix, x: &[f64], mu: &[f64]) -> f64 {
    let delta: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let proj = w.matvec(&delta);
    dot(&proj, &proj)
}

fn check_inputs(features: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<usize> {
    if features.len() != labels.len() {
        return Err(Error::Shape(format!("{} features, {} labels", features.len(), labels.len())));
    }
    let dim = features.first().map_or(0, Vec::len);
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::Shape("ragged features".into()));
    }
    if let Some(&c) = labels.iter().find(|&&c| c >= num_classes) {
        return Err(Error::ClassOutOfRange { class: c, classes: num_classes });
    }
    Ok(dim)
}

/// Exact per-class means.
pub fn batch_means(features: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<ClassStats> {
    let dim = check_inputs(features, labels, num_classes)?;
    let mut sums = Matrix::zeros(num_classes, dim);
    let mut counts = vec![0usize; num_classes];
    for (f, &c) in features.iter().zip(labels) {
        crate::linalg::axpy(1.0, f, sums.row_mut(c));
        counts[c] += 1;
    }
    for c in 0..num_classes {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            sums.row_mut(c).iter_mut().for_each(|v| *v /= n);
        }
    }
    Ok(ClassStats {
        means: sums,
        counts,
        metric: None,
    })
}

/// Per-sample running means in the given order.
pub fn running_means(features: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<ClassStats> {
    let dim = check_inputs(features, labels, num_classes)?;
    let mut means = Matrix::zeros(num_classes, dim);
    let mut counts = vec![0usize; num_classes];
    for (f, &c) in features.iter().zip(labels) {
        let n = counts[c] as f64;
        for (m, &x) in means.row_mut(c).iter_mut().zip(f) {
            *m = running_update(*m, n, x);
        }
        counts[c] += 1;
    }
    Ok(ClassStats {
        means,
        counts,
        metric: None,
    })
}

/// `n/(n+1)·μ + 1/(n+1)·x`
pub fn running_update(mean: f64, n: f64, x: f64) -> f64 {
    n / (n + 1.0) * mean + x / (n + 1.0)
}

/// `α·μ + (1−α)·x`
pub fn decay_update(mean: f64, alpha: f64, x: f64) -> f64 {
    alpha * mean + (1.0 - alpha) * x
}

/// Decayed means over consecutive batches of `batch_size`. A class's first
/// batch mean initializes it; later batch means are blended in with factor
/// `alpha`.
pub fn decay_means(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    batch_size: usize,
    alpha: f64,
) -> Result<ClassStats> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("decay alpha must be in (0, 1), got {alpha}")));
    }
    if batch_size == 0 {
        return Err(Error::arg("batch size must be positive"));
    }
    let dim = check_inputs(features, labels, num_classes)?;
    let mut means = Matrix::zeros(num_classes, dim);
    let mut counts = vec![0usize; num_classes];
    for (fs, ls) in features.chunks(batch_size).zip(labels.chunks(batch_size)) {
        let batch = batch_means(fs, ls, num_classes)?;
        for c in 0..num_classes {
            if batch.counts[c] == 0 {
                continue;
            }
            let first = counts[c] == 0;
            for (m, &x) in means.row_mut(c).iter_mut().zip(batch.means.row(c)) {
                *m = if first { x } else { decay_update(*m, alpha, x) };
            }
            counts[c] += batch.counts[c];
        }
    }
    Ok(ClassStats {
        means,
        counts,
        metric: None,
    })
}

/// Settings for learning the Mahalanobis metric by gradient ascent on the
/// mean log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Rows of `W` (`m ≤ D`).
    pub dim: usize,
    pub epochs: usize,
    pub initial_step: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            epochs: 50,
            initial_step: 1.0,
        }
    }
}

/// Mean log-likelihood `(1/N) Σ ln p(y_i|x_i)` with
/// `p(y|x) = softmax_y(−½ (x−μ_y)ᵀWᵀW(x−μ_y))` over usable classes.
pub fn metric_objective(w: &Matrix, stats: &ClassStats, features: &[Vec<f64>], labels: &[usize]) -> f64 {
    let usable: Vec<usize> = (0..stats.num_classes()).filter(|&c| stats.usable(c)).collect();
    let mut total = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let scores: Vec<f64> = usable.iter().map(|&c| -0.5 * mahalanobis(w, x, stats.means.row(c))).collect();
        let pos = usable.iter().position(|&c| c == y).expect("label of a usable class");
        total += scores[pos] - log_sum_exp(&scores);
    }
    total / features.len() as f64
}

/// Gradient of [`metric_objective`] with respect to `W`:
/// `(1/N) Σ_i Σ_y (p_y − [y = y_i]) · W δ δᵀ` with `δ = x_i − μ_y`.
pub fn metric_gradient(w: &Matrix, stats: &ClassStats, features: &[Vec<f64>], labels: &[usize]) -> Matrix {
    let usable: Vec<usize> = (0..stats.num_classes()).filter(|&c| stats.usable(c)).collect();
    let mut grad = Matrix::zeros(w.rows(), w.cols());
    let scale = 1.0 / features.len() as f64;
    for (x, &y) in features.iter().zip(labels) {
        let deltas: Vec<Vec<f64>> = usable
            .iter()
            .map(|&c| x.iter().zip(stats.means.row(c)).map(|(a, b)| a - b).collect())
            .collect();
        let projected: Vec<Vec<f64>> = deltas.iter().map(|d| w.matvec(d)).collect();
        let scores: Vec<f64> = projected.iter().map(|p| -0.5 * dot(p, p)).collect();
        let probs = softmax(&scores);
        for (k, &c) in usable.iter().enumerate() {
            let coef = (probs[k] - f64::from(u8::from(c == y))) * scale;
            if coef == 0.0 {
                continue;
            }
            // coef · (Wδ) δᵀ
            for r in 0..w.rows() {
                crate::linalg::axpy(coef * projected[k][r], &deltas[k], grad.row_mut(r));
            }
        }
    }
    grad
}

/// Learned metric with the objective after every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricFit {
    pub metric: Matrix,
    pub objective_log: Vec<f64>,
    pub initial_objective: f64,
}

/// Full-batch gradient ascent from the identity slice `[I_m | 0]`. Each
/// epoch backtracks (halving the step) until the objective does not
/// decrease, so accepted steps never lower it; a step that cannot be
/// accepted ends training early.
pub fn metric_fit(stats: &ClassStats, features: &[Vec<f64>], labels: &[usize], cfg: &MetricConfig) -> Result<MetricFit> {
    let d = stats.dim();
    if cfg.dim == 0 || cfg.dim > d {
        return Err(Error::arg(format!("metric dimension {} must be in 1..={d}", cfg.dim)));
    }
    check_inputs(features, labels, stats.num_classes())?;
    if features.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(&y) = labels.iter().find(|&&y| !stats.usable(y)) {
        return Err(Error::EmptyClass { class: y });
    }
    let mut w = Matrix::from_fn(cfg.dim, d, |r, c| f64::from(u8::from(r == c)));
    let mut current = metric_objective(&w, stats, features, labels);
    if !current.is_finite() {
        return Err(Error::Numeric(format!("initial metric objective {current}")));
    }
    let initial_objective = current;
    let mut step = cfg.initial_step;
    let mut log = Vec::with_capacity(cfg.epochs);
    'epochs: for _ in 0..cfg.epochs {
        let grad = metric_gradient(&w, stats, features, labels);
        let norm = libm::sqrt(dot(grad.as_slice(), grad.as_slice()));
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        for _ in 0..40 {
            let mut candidate = w.clone();
            crate::linalg::axpy(step / norm, grad.as_slice(), candidate.as_mut_slice());
            let value = metric_objective(&candidate, stats, features, labels);
            if value.is_finite() && value >= current {
                w = candidate;
                current = value;
                log.push(current);
                step *= 1.5;
                continue 'epochs;
            }
            step *= 0.5;
        }
        break;
    }
    Ok(MetricFit {
        metric: w,
        objective_log: log,
        initial_objective,
    })
}
