//! Token vocabulary, fixed-length encoding and word-vector tables.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::Rng as _;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Purpose};
use crate::text::TokenSeq;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense token ids. `0` is padding and `1` the shared out-of-vocabulary id;
/// corpus tokens start at `2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Keep tokens seen at least `min_freq` times, ordered by descending
    /// frequency with lexicographic tie-break.
    pub fn build<'a, I>(docs: I, min_freq: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TokenSeq>,
    {
        if min_freq == 0 {
            return Err(Error::arg("min_freq must be at least 1"));
        }
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in docs {
            for t in seq.tokens() {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = freq.into_iter().filter(|&(_, n)| n >= min_freq).collect();
        if kept.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        // BTreeMap iteration is already lexicographic; a stable sort keeps it
        // as the tie-break.
        kept.sort_by(|a, b| b.1.cmp(&a.1));
        Ok(Self::from_tokens(kept.into_iter().map(|(t, _)| t.to_string())))
    }

    /// Vocabulary with the given corpus tokens at ids `2..`.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut id_to_token = alloc::vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        id_to_token.extend(tokens);
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            token_to_id,
            id_to_token,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    /// Always false; pad and unk are present.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Corpus tokens with their ids, in id order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, &str)> {
        self.id_to_token.iter().enumerate().skip(2).map(|(i, t)| (i as u32, t.as_str()))
    }

    /// Audit format: one `id<TAB>token` line per id, including the two
    /// reserved entries.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.id_to_token.iter().enumerate() {
            out.push_str(&format!("{i}\t{t}\n"));
        }
        out
    }

    pub fn parse_tsv(content: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |message: &str| Error::Parse {
                line: i + 1,
                message: message.to_string(),
            };
            let (id, token) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let id: usize = id.parse().map_err(|_| bad("bad id"))?;
            if id != tokens.len() {
                return Err(bad("ids must be dense and ascending"));
            }
            tokens.push(token.to_string());
        }
        if tokens.len() < 3 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Self::from_tokens(tokens.into_iter().skip(2)))
    }

    /// First eight bytes of the SHA-256 of the audit form.
    pub fn fingerprint(&self) -> u64 {
        fingerprint(self.to_tsv().as_bytes())
    }
}

pub fn fingerprint(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

/// Token ids padded or truncated to a fixed length, with the class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDoc {
    pub ids: Vec<u32>,
    pub label: usize,
}

/// Map tokens to ids (unk for unknown), keep the first `max_len`, right-pad.
pub fn encode(seq: &TokenSeq, vocab: &Vocabulary, max_len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = seq
        .tokens()
        .iter()
        .take(max_len)
        .map(|t| vocab.id(t).unwrap_or(UNK_ID))
        .collect();
    ids.resize(max_len, PAD_ID);
    ids
}

/// Tokens for ids up to the first pad; unk ids decode to `<unk>`.
pub fn decode(ids: &[u32], vocab: &Vocabulary) -> Vec<String> {
    ids.iter()
        .take_while(|&&id| id != PAD_ID)
        .map(|&id| vocab.token(id).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

/// `V × E` word vectors. Row `0` (padding) is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Matrix,
    pub trainable: bool,
}

/// Outcome of attaching a vector file.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorLoad {
    pub table: EmbeddingTable,
    /// In-vocabulary tokens found in the file over all corpus tokens.
    pub coverage: f64,
}

impl EmbeddingTable {
    /// Every corpus row uniform in `[-0.5/E, 0.5/E]`; pad row zero.
    pub fn random(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Purpose::EmbeddingInit, 0);
        let scale = 0.5 / dim as f64;
        let mut matrix = Matrix::zeros(vocab_size, dim);
        for r in 1..vocab_size {
            for v in matrix.row_mut(r) {
                *v = rng.random_range(-scale..=scale);
            }
        }
        Self {
            matrix,
            trainable: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.rows()
    }

    /// Fill rows from `token v1 … vE` lines. Tokens missing from the file
    /// keep their seeded random row.
    pub fn from_vector_text(content: &str, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<VectorLoad> {
        if dim == 0 {
            return Err(Error::arg("embedding dimension must be positive"));
        }
        let mut table = Self::random(vocab.len(), dim, seed);
        let mut found = alloc::vec![false; vocab.len()];
        for (i, line) in content.lines().enumerate() {
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values: Vec<&str> = fields.collect();
            if values.len() != dim {
                return Err(Error::VectorFormat {
                    line: line_no,
                    message: format!("expected {dim} values, found {}", values.len()),
                });
            }
            let Some(id) = vocab.id(token) else { continue };
            let row = table.matrix.row_mut(id as usize);
            for (slot, raw) in row.iter_mut().zip(&values) {
                let v: f64 = raw.parse().map_err(|_| Error::VectorFormat {
                    line: line_no,
                    message: format!("not a number: {raw:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::VectorFormat {
                        line: line_no,
                        message: format!("non-finite value {raw:?}"),
                    });
                }
                *slot = v;
            }
            found[id as usize] = true;
        }
        let covered = found.iter().filter(|&&f| f).count();
        let eligible = vocab.len() - 2;
        Ok(VectorLoad {
            table,
            coverage: covered as f64 / eligible.max(1) as f64,
        })
    }
}
