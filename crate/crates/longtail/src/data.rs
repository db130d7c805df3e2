//! The preprocessed data directory shared by every training command.
//!
//! ```text
//! <dir>/train.tsv  eval.tsv  vocab.tsv  embedding.bin
//!       stopwords_zh.txt  stopwords_en.txt  preprocess.json
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use longtail_core::corpus::{split, LabeledCorpus};
use longtail_core::text::{preprocess, Stopwords};
use longtail_core::train::Dataset;
use longtail_core::vocab::{EmbeddingTable, Vocabulary};

use crate::error::{CliError, CliResult};
use crate::files;

/// How a raw corpus becomes a prepared data directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepOptions {
    pub eval_fraction: f64,
    pub seed: u64,
    pub max_len: usize,
    pub min_freq: usize,
    pub embed_dim: usize,
}

impl Default for PrepOptions {
    fn default() -> Self {
        Self {
            eval_fraction: 0.2,
            seed: 0,
            max_len: 64,
            min_freq: 1,
            embed_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedClass {
    pub label: String,
    pub count: usize,
}

/// Written to `preprocess.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepMeta {
    pub options: PrepOptions,
    /// Class order; index = class id.
    pub labels: Vec<String>,
    pub train_counts: Vec<usize>,
    pub eval_counts: Vec<usize>,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub min_count: usize,
    pub dropped: Vec<DroppedClass>,
    pub vectors: Option<String>,
    pub vector_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: LabeledCorpus,
    pub eval: LabeledCorpus,
    pub vocab: Vocabulary,
    pub stopwords: Stopwords,
    pub embedding: EmbeddingTable,
    pub meta: PrepMeta,
}

/// Where the embedding rows come from.
pub enum VectorSource<'a> {
    Random,
    File(&'a Path),
}

fn hex(h: u64) -> String {
    format!("{h:016x}")
}

impl PreparedData {
    /// Split, build the vocabulary from the training side and attach word
    /// vectors.
    pub fn prepare(
        corpus: &LabeledCorpus,
        stopwords: Stopwords,
        vectors: VectorSource<'_>,
        opts: &PrepOptions,
    ) -> CliResult<Self> {
        if opts.max_len == 0 || opts.embed_dim == 0 || opts.min_freq == 0 {
            return Err(CliError::usage("max-len, embed-dim and min-freq must be positive"));
        }
        let parts = split(corpus, opts.eval_fraction, opts.seed)?;
        let seqs: Vec<_> = parts.train.documents().iter().map(|d| preprocess(&d.text, &stopwords)).collect();
        let vocab = Vocabulary::build(&seqs, opts.min_freq)?;
        let (embedding, vectors, coverage) = match vectors {
            VectorSource::Random => (EmbeddingTable::random(vocab.len(), opts.embed_dim, opts.seed), None, None),
            VectorSource::File(path) => {
                let load = files::load_vectors(path, &vocab, opts.embed_dim, opts.seed)?;
                (load.table, Some(path.display().to_string()), Some(load.coverage))
            }
        };
        let meta = PrepMeta {
            options: opts.clone(),
            labels: corpus.labels().to_vec(),
            train_counts: parts.train.class_counts().to_vec(),
            eval_counts: parts.eval.class_counts().to_vec(),
            vocab_size: vocab.len(),
            vocab_hash: hex(vocab.fingerprint()),
            min_count: 1,
            dropped: Vec::new(),
            vectors,
            vector_coverage: coverage,
        };
        Ok(Self {
            train: parts.train,
            eval: parts.eval,
            vocab,
            stopwords,
            embedding,
            meta,
        })
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        files::save_tsv(&dir.join("train.tsv"), &self.train)?;
        files::save_tsv(&dir.join("eval.tsv"), &self.eval)?;
        files::save_vocab(&dir.join("vocab.tsv"), &self.vocab)?;
        files::save_embedding(&dir.join("embedding.bin"), &self.embedding, self.vocab.fingerprint())?;
        files::save_stopwords(&dir.join("stopwords_zh.txt"), &self.stopwords.cjk)?;
        files::save_stopwords(&dir.join("stopwords_en.txt"), &self.stopwords.latin)?;
        files::write(&dir.join("preprocess.json"), serde_json::to_string_pretty(&self.meta)? + "\n")
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let meta: PrepMeta = serde_json::from_str(&files::read_text(&dir.join("preprocess.json"))?)
            .map_err(|e| CliError::data(format!("{}: {e}", dir.join("preprocess.json").display())))?;
        let side = |name: &str| -> CliResult<LabeledCorpus> {
            let path: PathBuf = dir.join(name);
            let parsed = LabeledCorpus::parse_tsv(&files::read_text(&path)?).map_err(|e| CliError::from(e).context(path.display()))?;
            LabeledCorpus::with_labels(parsed.documents().to_vec(), meta.labels.clone())
                .map_err(|e| CliError::from(e).context(path.display()))
        };
        let train = side("train.tsv")?;
        let eval = side("eval.tsv")?;
        let vocab = files::load_vocab(&dir.join("vocab.tsv"))?;
        if hex(vocab.fingerprint()) != meta.vocab_hash {
            return Err(CliError::data(format!("{}: vocabulary does not match preprocess.json", dir.display())));
        }
        let embedding = files::load_embedding(&dir.join("embedding.bin"), vocab.fingerprint())?;
        let stopwords = Stopwords {
            cjk: files::load_stopwords(&dir.join("stopwords_zh.txt"))?,
            latin: files::load_stopwords(&dir.join("stopwords_en.txt"))?,
        };
        Ok(Self {
            train,
            eval,
            vocab,
            stopwords,
            embedding,
            meta,
        })
    }

    pub fn vocab_hash(&self) -> u64 {
        self.vocab.fingerprint()
    }

    /// `(train, eval)` encoded at the prepared sequence length.
    pub fn encode(&self) -> (Dataset, Dataset) {
        let l = self.meta.options.max_len;
        (
            Dataset::encode(&self.train, &self.vocab, &self.stopwords, l),
            Dataset::encode(&self.eval, &self.vocab, &self.stopwords, l),
        )
    }

    pub fn labels(&self) -> &[String] {
        &self.meta.labels
    }
}
