//! Reading and writing the on-disk formats.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use longtail_core::corpus::LabeledCorpus;
use longtail_core::linalg::Matrix;
use longtail_core::model::{Checkpoint, NamedTensor, TensorFile};
use longtail_core::ncm::{ClassStats, Distance};
use longtail_core::text::parse_stopword_list;
use longtail_core::vocab::{EmbeddingTable, VectorLoad, Vocabulary};

use crate::error::{CliError, CliResult};

pub const NCM_MAGIC: [u8; 4] = *b"LTNS";
pub const EMBEDDING_MAGIC: [u8; 4] = *b"LTEM";

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Write a file, creating parent directories.
pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn in_file<T>(path: &Path, r: longtail_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::from(e).context(path.display()))
}

/// A `label<TAB>text` corpus, with classes below `min_count` documents
/// removed. Returns the dropped `(label, count)` pairs.
pub fn load_tsv(path: &Path, min_count: usize) -> CliResult<(LabeledCorpus, Vec<(String, usize)>)> {
    let corpus = in_file(path, LabeledCorpus::parse_tsv(&read_text(path)?))?;
    if min_count <= 1 {
        return Ok((corpus, Vec::new()));
    }
    corpus.drop_rare(min_count).map_err(|e| {
        CliError::data(format!("{}: after dropping classes below {min_count} documents: {e}", path.display()))
    })
}

pub fn save_tsv(path: &Path, corpus: &LabeledCorpus) -> CliResult<()> {
    write(path, corpus.to_tsv())
}

pub fn load_stopwords(path: &Path) -> CliResult<BTreeSet<String>> {
    Ok(parse_stopword_list(&read_text(path)?))
}

pub fn save_stopwords(path: &Path, words: &BTreeSet<String>) -> CliResult<()> {
    let mut out = String::new();
    for w in words {
        out.push_str(w);
        out.push('\n');
    }
    write(path, out)
}

pub fn load_vectors(path: &Path, vocab: &Vocabulary, dim: usize, seed: u64) -> CliResult<VectorLoad> {
    in_file(path, EmbeddingTable::from_vector_text(&read_text(path)?, vocab, dim, seed))
}

pub fn load_vocab(path: &Path) -> CliResult<Vocabulary> {
    in_file(path, Vocabulary::parse_tsv(&read_text(path)?))
}

pub fn save_vocab(path: &Path, vocab: &Vocabulary) -> CliResult<()> {
    write(path, vocab.to_tsv())
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> CliResult<()> {
    write(path, ckpt.to_bytes())
}

/// Load a checkpoint and require it to match the given hashes.
pub fn load_checkpoint(path: &Path, config_hash: u64, vocab_hash: u64) -> CliResult<Checkpoint> {
    in_file(path, Checkpoint::from_bytes_checked(&read_bytes(path)?, config_hash, vocab_hash))
}

pub fn save_embedding(path: &Path, table: &EmbeddingTable, vocab_hash: u64) -> CliResult<()> {
    let file = TensorFile {
        magic: EMBEDDING_MAGIC,
        config_hash: 0,
        vocab_hash,
        flags: u32::from(table.trainable),
        tensors: vec![NamedTensor::new(
            "embedding",
            vec![table.matrix.rows(), table.matrix.cols()],
            table.matrix.as_slice().to_vec(),
        )],
    };
    write(path, file.to_bytes())
}

pub fn load_embedding(path: &Path, vocab_hash: u64) -> CliResult<EmbeddingTable> {
    let bytes = read_bytes(path)?;
    let file = in_file(path, TensorFile::from_bytes(&bytes, EMBEDDING_MAGIC))?;
    in_file(path, file.verify(0, vocab_hash))?;
    Ok(EmbeddingTable {
        matrix: in_file(path, file.get("embedding").and_then(NamedTensor::matrix))?,
        trainable: file.flags & 1 == 1,
    })
}

fn distance_code(d: Distance) -> u32 {
    match d {
        Distance::Euclidean => 0,
        Distance::Mahalanobis => 1,
        Distance::Cosine => 2,
    }
}

fn distance_from_code(code: u32) -> Option<Distance> {
    match code {
        0 => Some(Distance::Euclidean),
        1 => Some(Distance::Mahalanobis),
        2 => Some(Distance::Cosine),
        _ => None,
    }
}

/// Class statistics and the distance they are meant to be used with. The
/// distance lives in the header flags; counts are stored as floats.
pub fn ncm_stats_bytes(stats: &ClassStats, distance: Distance, config_hash: u64, vocab_hash: u64) -> Vec<u8> {
    let mut tensors = vec![
        NamedTensor::new(
            "means",
            vec![stats.means.rows(), stats.means.cols()],
            stats.means.as_slice().to_vec(),
        ),
        NamedTensor::new("counts", vec![stats.counts.len()], stats.counts.iter().map(|&c| c as f64).collect()),
    ];
    if let Some(w) = &stats.metric {
        tensors.push(NamedTensor::new("metric", vec![w.rows(), w.cols()], w.as_slice().to_vec()));
    }
    TensorFile {
        magic: NCM_MAGIC,
        config_hash,
        vocab_hash,
        flags: distance_code(distance),
        tensors,
    }
    .to_bytes()
}

pub fn ncm_stats_from_bytes(bytes: &[u8], config_hash: u64, vocab_hash: u64) -> longtail_core::Result<(ClassStats, Distance)> {
    use longtail_core::Error;
    let file = TensorFile::from_bytes(bytes, NCM_MAGIC)?;
    file.verify(config_hash, vocab_hash)?;
    let distance = distance_from_code(file.flags).ok_or_else(|| Error::Malformed(format!("distance code {}", file.flags)))?;
    let means = file.get("means")?.matrix()?;
    let counts = file
        .get("counts")?
        .vector()?
        .into_iter()
        .map(|c| {
            if c >= 0.0 && c.fract() == 0.0 {
                Ok(c as usize)
            } else {
                Err(Error::Malformed(format!("class count {c}")))
            }
        })
        .collect::<longtail_core::Result<Vec<_>>>()?;
    let metric = match file.get("metric") {
        Ok(t) => Some(t.matrix()?),
        Err(_) => None,
    };
    if counts.len() != means.rows() || metric.as_ref().is_some_and(|w: &Matrix| w.cols() != means.cols()) {
        return Err(Error::Malformed("inconsistent class statistics shapes".into()));
    }
    if distance == Distance::Mahalanobis && metric.is_none() {
        return Err(Error::Malformed("mahalanobis statistics without a metric".into()));
    }
    Ok((ClassStats { means, counts, metric }, distance))
}

pub fn save_ncm_stats(path: &Path, stats: &ClassStats, distance: Distance, config_hash: u64, vocab_hash: u64) -> CliResult<()> {
    write(path, ncm_stats_bytes(stats, distance, config_hash, vocab_hash))
}

pub fn load_ncm_stats(path: &Path, config_hash: u64, vocab_hash: u64) -> CliResult<(ClassStats, Distance)> {
    in_file(path, ncm_stats_from_bytes(&read_bytes(path)?, config_hash, vocab_hash))
}
