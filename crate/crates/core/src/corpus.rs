//! Labeled corpora: TSV parsing, the synthetic long-tailed generator and
//! stratified splitting.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: u64,
    pub text: String,
    pub label: String,
}

/// Documents with their label set in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    documents: Vec<Document>,
    labels: Vec<String>,
    class_of: Vec<usize>,
    class_counts: Vec<usize>,
}

impl LabeledCorpus {
    /// Labels are collected in first-appearance order. Requires at least two
    /// distinct labels.
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        Self::with_labels(documents, Vec::new())
    }

    /// Like [`new`](Self::new) but seeds the label order with `labels`, so a
    /// sub-corpus keeps the class ids of its parent. Labels listed but never
    /// seen keep a zero count.
    pub fn with_labels(documents: Vec<Document>, labels: Vec<String>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut index: BTreeMap<String, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        let mut labels = labels;
        let mut class_of = Vec::with_capacity(documents.len());
        for doc in &documents {
            if doc.label.is_empty() {
                return Err(Error::arg(format!("document {} has an empty label", doc.id)));
            }
            let next = labels.len();
            let class = *index.entry(doc.label.clone()).or_insert_with(|| {
                labels.push(doc.label.clone());
                next
            });
            class_of.push(class);
        }
        if labels.len() < 2 {
            return Err(Error::arg(format!(
                "corpus needs at least 2 classes, found {}",
                labels.len()
            )));
        }
        let mut class_counts = alloc::vec![0; labels.len()];
        for &c in &class_of {
            class_counts[c] += 1;
        }
        Ok(Self {
            documents,
            labels,
            class_of,
            class_counts,
        })
    }

    /// Parse `label<TAB>text` lines. Blank lines are skipped; ids are
    /// assigned in line order starting at 0.
    pub fn parse_tsv(content: &str) -> Result<Self> {
        let mut documents = Vec::new();
        for (i, line) in content.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let Some((label, body)) = line.split_once('\t') else {
                return Err(Error::Parse {
                    line: line_no,
                    message: "missing tab separator".to_string(),
                });
            };
            let label = label.trim();
            if label.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty label".to_string(),
                });
            }
            if text::clean(body).is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty text".to_string(),
                });
            }
            documents.push(Document {
                id: documents.len() as u64,
                text: body.to_string(),
                label: label.to_string(),
            });
        }
        Self::new(documents)
    }

    /// Inverse of [`parse_tsv`](Self::parse_tsv) for texts without tabs or
    /// newlines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for d in &self.documents {
            out.push_str(&d.label);
            out.push('\t');
            out.push_str(&d.text);
            out.push('\n');
        }
        out
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    /// Class id of every document, parallel to [`documents`](Self::documents).
    pub fn class_ids(&self) -> &[usize] {
        &self.class_of
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Drop every class with fewer than `min_count` documents. Returns the
    /// filtered corpus and the dropped `(label, count)` pairs.
    pub fn drop_rare(&self, min_count: usize) -> Result<(Self, Vec<(String, usize)>)> {
        let dropped: Vec<(String, usize)> = self
            .labels
            .iter()
            .zip(&self.class_counts)
            .filter(|(_, &n)| n < min_count)
            .map(|(l, &n)| (l.clone(), n))
            .collect();
        let kept_labels: Vec<String> = self
            .labels
            .iter()
            .zip(&self.class_counts)
            .filter(|(_, &n)| n >= min_count)
            .map(|(l, _)| l.clone())
            .collect();
        let docs: Vec<Document> = self
            .documents
            .iter()
            .zip(&self.class_of)
            .filter(|(_, &c)| self.class_counts[c] >= min_count)
            .map(|(d, _)| d.clone())
            .collect();
        Ok((Self::with_labels(docs, kept_labels)?, dropped))
    }
}

/// Train/eval partition of a corpus. Both halves share the parent's label
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: LabeledCorpus,
    pub eval: LabeledCorpus,
    pub seed: u64,
}

/// Stratified split: each class sends `max(1, round(fraction · m_i))`
/// documents to eval, never all of them.
pub fn split(corpus: &LabeledCorpus, eval_fraction: f64, seed: u64) -> Result<CorpusSplit> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(Error::arg(format!(
            "eval fraction must be in (0, 1), got {eval_fraction}"
        )));
    }
    let small: Vec<String> = corpus
        .labels
        .iter()
        .zip(&corpus.class_counts)
        .filter(|(_, &n)| n < 2)
        .map(|(l, _)| l.clone())
        .collect();
    if !small.is_empty() {
        return Err(Error::Stratification { labels: small });
    }

    let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); corpus.num_classes()];
    for (i, &c) in corpus.class_of.iter().enumerate() {
        members[c].push(i);
    }
    let mut to_eval = alloc::vec![false; corpus.len()];
    for (class, docs) in members.iter_mut().enumerate() {
        let m = docs.len();
        let n_eval = (libm::round(eval_fraction * m as f64) as usize).clamp(1, m - 1);
        docs.shuffle(&mut rng::stream(seed, Purpose::Split, class as u64));
        for &i in &docs[..n_eval] {
            to_eval[i] = true;
        }
    }

    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (doc, &e) in corpus.documents.iter().zip(&to_eval) {
        if e {
            eval.push(doc.clone());
        } else {
            train.push(doc.clone());
        }
    }
    Ok(CorpusSplit {
        train: LabeledCorpus::with_labels(train, corpus.labels.clone())?,
        eval: LabeledCorpus::with_labels(eval, corpus.labels.clone())?,
        seed,
    })
}

/// Per-class sizes of the synthetic corpus, largest first:
/// `max(1, round(head_count / (i+1)^zipf_exponent))`.
pub fn longtail_counts(n_classes: usize, head_count: usize, zipf_exponent: f64) -> Result<Vec<usize>> {
    if n_classes < 2 {
        return Err(Error::arg("n_classes must be at least 2"));
    }
    if head_count < n_classes {
        return Err(Error::arg("head_count must be at least n_classes"));
    }
    if !(zipf_exponent > 0.0) || !zipf_exponent.is_finite() {
        return Err(Error::arg(format!(
            "zipf exponent must be positive, got {zipf_exponent}"
        )));
    }
    Ok((0..n_classes)
        .map(|i| {
            let raw = head_count as f64 / libm::pow((i + 1) as f64, zipf_exponent);
            (libm::round(raw) as usize).max(1)
        })
        .collect())
}

/// Deterministic synthetic corpus with a Zipf-shaped class distribution.
///
/// Classes are grouped into families that share most of their vocabulary;
/// each class also owns a few CJK characters and Latin acronyms. Documents
/// mix CJK runs with Latin tokens and frequently carry no class-specific
/// token at all, so small classes are genuinely confusable with the large
/// classes of their family.
pub fn synth_longtail(
    n_classes: usize,
    head_count: usize,
    zipf_exponent: f64,
    seed: u64,
) -> Result<LabeledCorpus> {
    let counts = longtail_counts(n_classes, head_count, zipf_exponent)?;
    let n_families = n_classes.div_ceil(5).max(2);
    let mut documents = Vec::with_capacity(counts.iter().sum());
    for (class, &count) in counts.iter().enumerate() {
        let label = class_code(class);
        let pools = Pools::for_class(class, class % n_families);
        for index in 0..count {
            let mut rng = rng::stream(seed, Purpose::Synthesis, ((class as u64) << 32) | index as u64);
            documents.push(Document {
                id: documents.len() as u64,
                text: pools.sentence(&mut rng),
                label: label.clone(),
            });
        }
    }
    LabeledCorpus::new(documents)
}

/// Four-letter pseudo Q-code for a class index: `QAAA`, `QAAB`, ...
pub fn class_code(class: usize) -> String {
    let mut code = String::from("Q");
    for shift in [676, 26, 1] {
        code.push((b'A' + ((class / shift) % 26) as u8) as char);
    }
    code
}

const SHARED_CJK: &[&str] = &[
    "机场", "跑道", "关闭", "高度", "范围", "半径", "使用", "测试", "校飞", "飞行", "限制", "开放",
    "时间", "区域", "导航", "设备", "通知", "临时", "维护", "航路",
];
const SHARED_LATIN: &[&str] = &[
    "RWY", "TWY", "DME", "VOR", "ILS", "NDB", "CLSD", "ACT", "FL", "AGL", "AMSL", "SFC", "UNL", "DUE",
    "WIP", "AVBL", "U/S", "OPS", "ARP", "THR",
];

// Family and class characters come from CJK Extension A, which the shared
// words above never touch.
const FAMILY_CJK_BASE: u32 = 0x4400;
const CLASS_CJK_BASE: u32 = 0x3400;
const FAMILY_WORDS: usize = 6;
const CLASS_WORDS: usize = 3;

struct Pools {
    family_cjk: Vec<char>,
    family_latin: Vec<String>,
    class_cjk: Vec<char>,
    class_latin: Vec<String>,
}

impl Pools {
    fn for_class(class: usize, family: usize) -> Self {
        let cjk = |base: u32, i: usize| char::from_u32(base + i as u32).unwrap_or('口');
        Self {
            family_cjk: (0..FAMILY_WORDS).map(|k| cjk(FAMILY_CJK_BASE, family * FAMILY_WORDS + k)).collect(),
            family_latin: (0..3).map(|k| format!("F{}{}", family_letters(family), k)).collect(),
            class_cjk: (0..CLASS_WORDS).map(|k| cjk(CLASS_CJK_BASE, class * CLASS_WORDS + k)).collect(),
            class_latin: alloc::vec![format!("{}X", class_code(class)), format!("CH{}X", 10 + class)],
        }
    }

    fn sentence(&self, rng: &mut rng::Rng) -> String {
        let units = rng.random_range(8..=14);
        let mut out = String::new();
        let mut last_latin = false;
        for _ in 0..units {
            let roll: f64 = rng.random();
            let cjk_unit: bool = rng.random_bool(0.55);
            let piece: String = if roll < 0.15 {
                if cjk_unit {
                    self.class_cjk[rng.random_range(0..self.class_cjk.len())].to_string()
                } else {
                    self.class_latin[rng.random_range(0..self.class_latin.len())].clone()
                }
            } else if roll < 0.55 {
                if cjk_unit {
                    self.family_cjk[rng.random_range(0..self.family_cjk.len())].to_string()
                } else {
                    self.family_latin[rng.random_range(0..self.family_latin.len())].clone()
                }
            } else if roll < 0.62 {
                let n = rng.random_range(1..100) * 100;
                let unit = ["KM", "M", "FT"][rng.random_range(0..3)];
                format!("{n}{unit}")
            } else if cjk_unit {
                SHARED_CJK[rng.random_range(0..SHARED_CJK.len())].to_string()
            } else {
                SHARED_LATIN[rng.random_range(0..SHARED_LATIN.len())].to_string()
            };
            let is_latin = !piece.chars().next().is_some_and(text::is_cjk);
            if !out.is_empty() && (is_latin || last_latin) {
                out.push(' ');
            }
            out.push_str(&piece);
            last_latin = is_latin;
        }
        out.push('.');
        out
    }
}

fn family_letters(family: usize) -> String {
    let mut s = String::new();
    s.push((b'A' + (family / 26 % 26) as u8) as char);
    s.push((b'A' + (family % 26) as u8) as char);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn doc(id: u64, label: &str) -> Document {
        Document {
            id,
            text: "x".into(),
            label: label.into(),
        }
    }

    #[test]
    fn parse_table_row() {
        let c = LabeledCorpus::parse_tsv(
            "RTLTP\t以和田机场为中心半径 100KM 范围内禁航.\nIDCT\tDME 05 'IWF' CH40X 仅供测试\n",
        )
        .unwrap();
        assert_eq!(c.documents()[0].label, "RTLTP");
        assert_eq!(c.labels(), ["RTLTP", "IDCT"]);
    }

    #[test]
    fn parse_counts_in_first_appearance_order() {
        let c = LabeledCorpus::parse_tsv("B\tx\nA\ty\nB\tz\n\n").unwrap();
        assert_eq!(c.labels(), ["B", "A"]);
        assert_eq!(c.class_counts(), [2, 1]);
        assert_eq!(c.num_classes(), 2);
        let c = LabeledCorpus::parse_tsv("A\tx\nA\ty\nB\tz").unwrap();
        assert_eq!(c.class_counts(), [2, 1]);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(LabeledCorpus::parse_tsv(""), Err(Error::EmptyCorpus));
        assert_eq!(LabeledCorpus::parse_tsv("\n  \n"), Err(Error::EmptyCorpus));
        assert!(matches!(
            LabeledCorpus::parse_tsv("A\tx\nno tab here"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            LabeledCorpus::parse_tsv("\tx"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            LabeledCorpus::parse_tsv("A\tx\nB\t \t"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            LabeledCorpus::new(vec![doc(0, "A"), doc(1, "A")]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn synth_counts() {
        assert_eq!(longtail_counts(3, 100, 1.0).unwrap(), [100, 50, 33]);
        assert_eq!(longtail_counts(2, 2, 1.0).unwrap(), [2, 1]);
        let c = synth_longtail(3, 100, 1.0, 7).unwrap();
        assert_eq!(c.class_counts(), [100, 50, 33]);
        assert!(matches!(longtail_counts(3, 100, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(longtail_counts(3, 100, -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn synth_reaches_published_imbalance() {
        // Exponent for which 87078 / 113^s lands at about 1000.
        let s = libm::log(87078.0 / 1000.0) / libm::log(113.0);
        let counts = longtail_counts(113, 87078, s).unwrap();
        let ratio = counts[0] as f64 / counts[112] as f64;
        assert!(ratio > 80.0, "ratio {ratio}");
        assert!((ratio - 87.078).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn synth_is_deterministic_and_mixed_script() {
        let a = synth_longtail(5, 40, 1.0, 3).unwrap();
        let b = synth_longtail(5, 40, 1.0, 3).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
        assert_ne!(a.to_tsv(), synth_longtail(5, 40, 1.0, 4).unwrap().to_tsv());
        let has_cjk = a.documents().iter().any(|d| d.text.chars().any(text::is_cjk));
        let has_latin = a.documents().iter().any(|d| d.text.chars().any(|c| c.is_ascii_alphabetic()));
        assert!(has_cjk && has_latin);
        let reparsed = LabeledCorpus::parse_tsv(&a.to_tsv()).unwrap();
        assert_eq!(reparsed, a);
    }

    #[test]
    fn generated_ranges_avoid_shared_words() {
        assert!(CLASS_CJK_BASE + (CLASS_WORDS * 1000) as u32 <= FAMILY_CJK_BASE);
        assert!(FAMILY_CJK_BASE + (FAMILY_WORDS * 200) as u32 <= 0x4DC0);
        for w in SHARED_CJK {
            for ch in w.chars() {
                let cp = ch as u32;
                assert!(cp >= 0x4E00, "{ch} overlaps the generated ranges");
            }
        }
    }

    #[test]
    fn split_stratified() {
        let mut docs = Vec::new();
        for i in 0..20 {
            docs.push(doc(i, if i < 10 { "A" } else { "B" }));
        }
        let c = LabeledCorpus::new(docs).unwrap();
        let s = split(&c, 0.2, 1).unwrap();
        assert_eq!(s.eval.class_counts(), [2, 2]);
        assert_eq!(s.train.class_counts(), [8, 8]);
        assert_eq!(s, split(&c, 0.2, 1).unwrap());

        let mut ids: Vec<u64> = s.train.documents().iter().chain(s.eval.documents()).map(|d| d.id).collect();
        ids.sort();
        assert_eq!(ids, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_singletons() {
        let c = LabeledCorpus::new(vec![doc(0, "A"), doc(1, "A"), doc(2, "B")]).unwrap();
        assert_eq!(
            split(&c, 0.5, 0),
            Err(Error::Stratification { labels: vec!["B".into()] })
        );
    }

    #[test]
    fn split_keeps_one_training_doc() {
        let c = LabeledCorpus::new(vec![doc(0, "A"), doc(1, "A"), doc(2, "B"), doc(3, "B")]).unwrap();
        let s = split(&c, 0.9, 0).unwrap();
        assert_eq!(s.train.class_counts(), [1, 1]);
        assert_eq!(s.eval.class_counts(), [1, 1]);
    }

    #[test]
    fn drop_rare_keeps_order() {
        let c = LabeledCorpus::parse_tsv("A\tx\nB\ty\nC\tz\nA\tw\nC\tv\n").unwrap();
        let (kept, dropped) = c.drop_rare(2).unwrap();
        assert_eq!(kept.labels(), ["A", "C"]);
        assert_eq!(kept.class_counts(), [2, 2]);
        assert_eq!(dropped, vec![("B".to_string(), 1)]);
    }

    mod properties {
        use super::*;
        use alloc::collections::BTreeMap;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_partitions_the_documents(
                sizes in proptest::collection::vec(2usize..30, 2..6),
                fraction in 0.05f64..0.95,
                seed in 0u64..500,
            ) {
                let mut docs = Vec::new();
                for (c, &m) in sizes.iter().enumerate() {
                    for k in 0..m {
                        docs.push(Document { id: docs.len() as u64, text: format!("doc {c} {k}"), label: format!("C{c}") });
                    }
                }
                let corpus = LabeledCorpus::new(docs).unwrap();
                prop_assert_eq!(corpus.class_counts().iter().sum::<usize>(), corpus.len());
                let parts = split(&corpus, fraction, seed).unwrap();
                for side in [&parts.train, &parts.eval] {
                    prop_assert_eq!(side.class_counts().iter().sum::<usize>(), side.len());
                    prop_assert!(side.class_counts().iter().all(|&n| n >= 1));
                }
                let mut union: BTreeMap<u64, &Document> = BTreeMap::new();
                for d in parts.train.documents().iter().chain(parts.eval.documents()) {
                    prop_assert!(union.insert(d.id, d).is_none(), "document {} on both sides", d.id);
                }
                prop_assert_eq!(union.len(), corpus.len());
                for d in corpus.documents() {
                    prop_assert_eq!(union[&d.id], d);
                }
                prop_assert_eq!(split(&corpus, fraction, seed).unwrap(), parts);
            }

            #[test]
            fn synthetic_corpus_is_pure(n in 2usize..8, extra in 0usize..40, s in 0.3f64..2.0, seed in 0u64..100) {
                let head = n + extra;
                let a = synth_longtail(n, head, s, seed).unwrap();
                prop_assert_eq!(a.to_tsv(), synth_longtail(n, head, s, seed).unwrap().to_tsv());
                let counts = longtail_counts(n, head, s).unwrap();
                prop_assert_eq!(a.class_counts(), counts.as_slice());
            }
        }
    }
}
