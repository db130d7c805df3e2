//! Accuracy, confusion matrices and head/medium/tail bucket reports.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    /// `None` for classes absent from the eval set.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[actual][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub n_eval: usize,
}

/// Score `(actual, predicted)` pairs over `num_classes` classes.
pub fn evaluate<I>(pairs: I, num_classes: usize) -> Result<EvalReport>
where
    I: IntoIterator<Item = (usize, usize)>,
{
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    let mut n = 0;
    for (actual, predicted) in pairs {
        for class in [actual, predicted] {
            if class >= num_classes {
                return Err(Error::ClassOutOfRange {
                    class,
                    classes: num_classes,
                });
            }
        }
        confusion[actual][predicted] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let trace: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[c] as f64 / total as f64)
        })
        .collect();
    Ok(EvalReport {
        overall_accuracy: trace as f64 / n as f64,
        per_class_accuracy,
        confusion,
        n_eval: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Much,
    Medium,
    Less,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Much, Bucket::Medium, Bucket::Less];

    pub fn name(self) -> &'static str {
        match self {
            Bucket::Much => "much",
            Bucket::Medium => "medium",
            Bucket::Less => "less",
        }
    }
}

/// Bucket membership by label string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketSpec {
    assignment: BTreeMap<String, Bucket>,
}

impl BucketSpec {
    /// Rank classes by training count (descending, ties by label order) and
    /// cut the ranking into thirds: rank `r` of `S` falls in bucket
    /// `⌊3r/S⌋`.
    pub fn terciles(labels: &[String], train_counts: &[usize]) -> Result<Self> {
        if labels.len() != train_counts.len() {
            return Err(Error::Shape(format!("{} labels, {} counts", labels.len(), train_counts.len())));
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| train_counts[b].cmp(&train_counts[a]).then(a.cmp(&b)));
        let s = labels.len();
        let assignment = order
            .iter()
            .enumerate()
            .map(|(rank, &c)| (labels[c].clone(), Bucket::ALL[3 * rank / s]))
            .collect();
        Ok(Self { assignment })
    }

    /// Explicit label lists per bucket. Every label in `labels` must appear
    /// in exactly one list.
    pub fn explicit(labels: &[String], lists: &[(Bucket, Vec<String>)]) -> Result<Self> {
        let mut assignment = BTreeMap::new();
        for (bucket, members) in lists {
            for label in members {
                if !labels.contains(label) {
                    return Err(Error::arg(format!("bucket label {label:?} is not a class")));
                }
                if assignment.insert(label.clone(), *bucket).is_some() {
                    return Err(Error::arg(format!("label {label:?} is in more than one bucket")));
                }
            }
        }
        if let Some(missing) = labels.iter().find(|l| !assignment.contains_key(*l)) {
            return Err(Error::arg(format!("label {missing:?} is in no bucket")));
        }
        Ok(Self { assignment })
    }

    pub fn bucket_of(&self, label: &str) -> Option<Bucket> {
        self.assignment.get(label).copied()
    }

    pub fn members(&self, bucket: Bucket) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &b)| b == bucket)
            .map(|(l, _)| l.as_str())
            .collect()
    }
}

/// Unweighted mean per-class accuracy of each bucket. `None` when a
/// bucket has no class with eval documents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketAccuracy {
    pub much: Option<f64>,
    pub medium: Option<f64>,
    pub less: Option<f64>,
}

impl BucketAccuracy {
    pub fn get(&self, bucket: Bucket) -> Option<f64> {
        match bucket {
            Bucket::Much => self.much,
            Bucket::Medium => self.medium,
            Bucket::Less => self.less,
        }
    }
}

/// `labels[c]` names class `c` of `report`.
pub fn bucket_report(report: &EvalReport, labels: &[String], buckets: &BucketSpec) -> Result<BucketAccuracy> {
    let mut sums = [(0.0, 0usize); 3];
    for (c, label) in labels.iter().enumerate() {
        let bucket = buckets
            .bucket_of(label)
            .ok_or_else(|| Error::arg(format!("label {label:?} has no bucket")))?;
        if let Some(acc) = report.per_class_accuracy.get(c).copied().flatten() {
            let slot = &mut sums[bucket as usize];
            slot.0 += acc;
            slot.1 += 1;
        }
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    Ok(BucketAccuracy {
        much: mean(sums[0]),
        medium: mean(sums[1]),
        less: mean(sums[2]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("L{i}")).collect()
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let r = evaluate([(0, 0), (1, 1), (1, 1)], 2).unwrap();
        assert_eq!(r.overall_accuracy, 1.0);
        assert_eq!(r.confusion, vec![vec![1, 0], vec![0, 2]]);
        let r = evaluate([(0, 0), (0, 0), (1, 0), (1, 0)], 2).unwrap();
        assert_eq!(r.overall_accuracy, 0.5);
    }

    #[test]
    fn hand_built_confusion() {
        // 10 docs over 3 classes.
        let pairs = [(0, 0), (0, 0), (0, 1), (0, 0), (1, 1), (1, 2), (1, 1), (2, 2), (2, 0), (2, 2)];
        let r = evaluate(pairs, 3).unwrap();
        assert_eq!(r.confusion, vec![vec![3, 1, 0], vec![0, 2, 1], vec![1, 0, 2]]);
        assert_eq!(r.per_class_accuracy, vec![Some(0.75), Some(2.0 / 3.0), Some(2.0 / 3.0)]);
        assert_eq!(r.overall_accuracy, 0.7);
        assert_eq!(r.n_eval, 10);
        for (c, row) in r.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), pairs.iter().filter(|p| p.0 == c).count());
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(evaluate([(0, 2)], 2), Err(Error::ClassOutOfRange { class: 2, .. })));
        assert_eq!(evaluate([], 2), Err(Error::EmptyCorpus));
    }

    #[test]
    fn absent_class_has_no_accuracy() {
        let r = evaluate([(0, 0)], 2).unwrap();
        assert_eq!(r.per_class_accuracy, vec![Some(1.0), None]);
    }

    #[test]
    fn single_bucket_means() {
        let l = vec!["A".to_string(), "B".to_string()];
        let spec = BucketSpec::explicit(&l, &[(Bucket::Much, l.clone())]).unwrap();
        let r = evaluate([(0, 0), (1, 0)], 2).unwrap();
        let b = bucket_report(&r, &l, &spec).unwrap();
        assert_eq!(b.much, Some(0.5));
        assert_eq!(b.medium, None);
        assert_eq!(b.less, None);
    }

    #[test]
    fn terciles_follow_counts() {
        let l = labels(6);
        let spec = BucketSpec::terciles(&l, &[5, 50, 1, 20, 7, 100]).unwrap();
        assert_eq!(spec.members(Bucket::Much), ["L1", "L5"]);
        assert_eq!(spec.members(Bucket::Medium), ["L3", "L4"]);
        assert_eq!(spec.members(Bucket::Less), ["L0", "L2"]);
    }

    #[test]
    fn explicit_validation() {
        let l = labels(2);
        assert!(BucketSpec::explicit(&l, &[(Bucket::Much, vec!["L0".into()])]).is_err());
        assert!(BucketSpec::explicit(
            &l,
            &[(Bucket::Much, vec!["L0".into(), "L1".into()]), (Bucket::Less, vec!["L1".into()])]
        )
        .is_err());
        assert!(BucketSpec::explicit(&l, &[(Bucket::Much, vec!["L0".into(), "L1".into(), "X".into()])]).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        fn pairs_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
            (3usize..8).prop_flat_map(|s| (Just(s), proptest::collection::vec((0..s, 0..s), 1..80)))
        }

        proptest! {
            #[test]
            fn evaluation_ignores_document_order((s, pairs) in pairs_strategy(), seed in 0u64..1000) {
                let mut shuffled = pairs.clone();
                shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                prop_assert_eq!(evaluate(pairs, s).unwrap(), evaluate(shuffled, s).unwrap());
            }

            #[test]
            fn buckets_ignore_class_ids((s, pairs) in pairs_strategy(), seed in 0u64..1000) {
                let names = labels(s);
                let counts: Vec<usize> = (0..s).map(|c| 100 - 7 * c).collect();
                let spec = BucketSpec::terciles(&names, &counts).unwrap();
                let before = bucket_report(&evaluate(pairs.clone(), s).unwrap(), &names, &spec).unwrap();

                // New id of old class c is perm[c]; label strings travel with their class.
                let mut perm: Vec<usize> = (0..s).collect();
                perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                let mut relabeled = names.clone();
                for c in 0..s {
                    relabeled[perm[c]] = names[c].clone();
                }
                let moved: Vec<(usize, usize)> = pairs.iter().map(|&(a, p)| (perm[a], perm[p])).collect();
                let after = bucket_report(&evaluate(moved, s).unwrap(), &relabeled, &spec).unwrap();
                for b in Bucket::ALL {
                    match (before.get(b), after.get(b)) {
                        (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                        (x, y) => prop_assert_eq!(x, y),
                    }
                }
            }

            #[test]
            fn confusion_rows_and_trace((s, pairs) in pairs_strategy()) {
                let r = evaluate(pairs.clone(), s).unwrap();
                let trace: usize = (0..s).map(|c| r.confusion[c][c]).sum();
                prop_assert_eq!(r.overall_accuracy, trace as f64 / pairs.len() as f64);
                for c in 0..s {
                    prop_assert_eq!(r.confusion[c].iter().sum::<usize>(), pairs.iter().filter(|p| p.0 == c).count());
                }
            }
        }
    }
}
