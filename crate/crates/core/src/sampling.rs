//! Class sampling strategies and per-epoch batch plans.
//!
//! | strategy | class probability                      |
//! |----------|----------------------------------------|
//! | IBS      | `m_i / Σ m_j`                          |
//! | CBS      | `1 / S`                                |
//! | SRS      | `√m_i / Σ √m_j`                        |
//! | PBS      | `(t/T)·CBS_i + (1 − t/T)·IBS_i`        |

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Ibs,
    Cbs,
    Srs,
    Pbs,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] = [SamplerKind::Ibs, SamplerKind::Cbs, SamplerKind::Srs, SamplerKind::Pbs];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Ibs => "ibs",
            SamplerKind::Cbs => "cbs",
            SamplerKind::Srs => "srs",
            SamplerKind::Pbs => "pbs",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ibs" => Ok(SamplerKind::Ibs),
            "cbs" => Ok(SamplerKind::Cbs),
            "srs" => Ok(SamplerKind::Srs),
            "pbs" => Ok(SamplerKind::Pbs),
            other => Err(Error::arg(format!("unknown sampler {other:?}"))),
        }
    }
}

fn check_counts(counts: &[usize]) -> Result<()> {
    if counts.is_empty() {
        return Err(Error::arg("no classes"));
    }
    match counts.iter().position(|&m| m == 0) {
        Some(class) => Err(Error::EmptyClass { class }),
        None => Ok(()),
    }
}

pub fn ibs_probs(counts: &[usize]) -> Result<Vec<f64>> {
    check_counts(counts)?;
    let total: usize = counts.iter().sum();
    Ok(counts.iter().map(|&m| m as f64 / total as f64).collect())
}

pub fn cbs_probs(num_classes: usize) -> Result<Vec<f64>> {
    if num_classes == 0 {
        return Err(Error::arg("class-balanced sampling needs at least one class"));
    }
    Ok(alloc::vec![1.0 / num_classes as f64; num_classes])
}

pub fn srs_probs(counts: &[usize]) -> Result<Vec<f64>> {
    check_counts(counts)?;
    let roots: Vec<f64> = counts.iter().map(|&m| libm::sqrt(m as f64)).collect();
    let total: f64 = roots.iter().sum();
    Ok(roots.into_iter().map(|r| r / total).collect())
}

/// Progressive mix at epoch `t` of `T`: IBS at `t = 0`, CBS at `t = T`.
pub fn pbs_probs(counts: &[usize], t: usize, total: usize) -> Result<Vec<f64>> {
    if total == 0 {
        return Err(Error::arg("PBS needs at least one epoch"));
    }
    if t > total {
        return Err(Error::arg(format!("epoch {t} beyond total {total}")));
    }
    let ibs = ibs_probs(counts)?;
    if t == 0 {
        return Ok(ibs);
    }
    let cbs = cbs_probs(counts.len())?;
    if t == total {
        return Ok(cbs);
    }
    let mix = t as f64 / total as f64;
    Ok(cbs.iter().zip(&ibs).map(|(c, i)| mix * c + (1.0 - mix) * i).collect())
}

/// Which strategy drives batch construction. `total_epochs` is the `T` of
/// the progressive mix and is ignored by the other strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub total_epochs: usize,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn new(kind: SamplerKind, total_epochs: usize, seed: u64) -> Result<Self> {
        if kind == SamplerKind::Pbs && total_epochs == 0 {
            return Err(Error::arg("PBS needs total_epochs >= 1"));
        }
        Ok(Self { kind, total_epochs, seed })
    }

    /// Spec for a run of `epochs` epochs. The progressive mix walks the
    /// uniform grid from 0 to 1 over the epochs, so `T = epochs − 1`.
    pub fn for_run(kind: SamplerKind, epochs: usize, seed: u64) -> Self {
        Self {
            kind,
            total_epochs: epochs.saturating_sub(1).max(1),
            seed,
        }
    }

    /// Class probabilities in effect at `epoch`.
    pub fn probs(&self, counts: &[usize], epoch: usize) -> Result<Vec<f64>> {
        match self.kind {
            SamplerKind::Ibs => ibs_probs(counts),
            SamplerKind::Cbs => {
                check_counts(counts)?;
                cbs_probs(counts.len())
            }
            SamplerKind::Srs => srs_probs(counts),
            SamplerKind::Pbs => pbs_probs(counts, epoch.min(self.total_epochs), self.total_epochs),
        }
    }
}

/// Training indices grouped by class, each group shuffled once under
/// `seed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndex {
    per_class: Vec<Vec<usize>>,
}

impl ClassIndex {
    /// `labels[i]` is the class of training document `i`. Every class in
    /// `0..num_classes` must own at least one document.
    pub fn new(labels: &[usize], num_classes: usize, seed: u64) -> Result<Self> {
        let mut per_class = alloc::vec![Vec::new(); num_classes];
        for (i, &c) in labels.iter().enumerate() {
            if c >= num_classes {
                return Err(Error::ClassOutOfRange { class: c, classes: num_classes });
            }
            per_class[c].push(i);
        }
        if let Some(class) = per_class.iter().position(Vec::is_empty) {
            return Err(Error::EmptyClass { class });
        }
        let mut rng = rng::stream(seed, Purpose::ClassIndex, 0);
        for list in &mut per_class {
            list.shuffle(&mut rng);
        }
        Ok(Self { per_class })
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.per_class.iter().map(Vec::len).collect()
    }

    pub fn class(&self, c: usize) -> &[usize] {
        &self.per_class[c]
    }

    pub fn total(&self) -> usize {
        self.per_class.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPlan {
    pub epoch: usize,
    pub batches: Vec<Vec<usize>>,
}

impl EpochPlan {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.batches.iter().flatten().copied()
    }

    pub fn len(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draw `batch_size · batches` document indices for `epoch`.
///
/// IBS walks shuffled passes over all documents. The other strategies pick a
/// class from their probability vector, then the next document from that
/// class's cursor; a class list is reshuffled when its cursor wraps, so no
/// document repeats before its whole class has been visited.
pub fn plan_epoch(
    index: &ClassIndex,
    spec: &SamplerSpec,
    epoch: usize,
    batch_size: usize,
    batches: usize,
) -> Result<EpochPlan> {
    if batch_size == 0 || batches == 0 {
        return Err(Error::arg("batch size and batch count must be positive"));
    }
    let draws = batch_size * batches;
    let mut rng = rng::stream(spec.seed, Purpose::EpochPlan, epoch as u64);
    let mut flat = Vec::with_capacity(draws);

    if spec.kind == SamplerKind::Ibs {
        let mut all: Vec<usize> = index.per_class.iter().flatten().copied().collect();
        all.sort_unstable();
        while flat.len() < draws {
            all.shuffle(&mut rng);
            let take = (draws - flat.len()).min(all.len());
            flat.extend_from_slice(&all[..take]);
        }
    } else {
        let probs = spec.probs(&index.counts(), epoch)?;
        let classes = WeightedIndex::new(&probs).map_err(|e| Error::arg(format!("{e}")))?;
        let mut lists = index.per_class.clone();
        for list in &mut lists {
            list.shuffle(&mut rng);
        }
        let mut cursors = alloc::vec![0usize; lists.len()];
        for _ in 0..draws {
            let c = classes.sample(&mut rng);
            if cursors[c] == lists[c].len() {
                lists[c].shuffle(&mut rng);
                cursors[c] = 0;
            }
            flat.push(lists[c][cursors[c]]);
            cursors[c] += 1;
        }
    }

    Ok(EpochPlan {
        epoch,
        batches: flat.chunks(batch_size).map(<[usize]>::to_vec).collect(),
    })
}
