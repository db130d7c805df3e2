//! Versioned binary tensor files.
//!
//! ```text
//! magic        4 bytes
//! version      u32
//! config hash  u64
//! vocab hash   u64
//! flags        u32   (bit 0: embedding trainable)
//! count        u32
//! count × { name_len u32, name utf-8, rank u32, dims u64 × rank, f64 × Π dims }
//! ```
//!
//! All integers and floats are little-endian.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::vocab::EmbeddingTable;

use super::{ConvBank, ExtractorParams, HeadParams, Model};

pub const FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LTCK";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self {
            name: name.into(),
            dims,
            data,
        }
    }

    pub fn matrix(&self) -> Result<Matrix> {
        match self.dims[..] {
            [r, c] => Ok(Matrix::from_vec(r, c, self.data.clone())),
            _ => Err(Error::Malformed(format!("{} is not a matrix", self.name))),
        }
    }

    pub fn vector(&self) -> Result<Vec<f64>> {
        match self.dims[..] {
            [_] => Ok(self.data.clone()),
            _ => Err(Error::Malformed(format!("{} is not a vector", self.name))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub magic: [u8; 4],
    pub config_hash: u64,
    pub vocab_hash: u64,
    pub flags: u32,
    pub tensors: Vec<NamedTensor>,
}

impl TensorFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&self.vocab_hash.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parse and check the magic and version. Hashes are returned for the
    /// caller to verify.
    pub fn from_bytes(bytes: &[u8], magic: [u8; 4]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != magic {
            return Err(Error::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let config_hash = r.u64()?;
        let vocab_hash = r.u64()?;
        let flags = r.u32()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = core::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Malformed("tensor name is not utf-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(Error::Malformed(format!("{name}: rank {rank}")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u64()? as usize);
            }
            let len = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Malformed(format!("{name}: dims overflow")))?;
            if len.checked_mul(8).is_none_or(|n| n > bytes.len()) {
                return Err(Error::Truncated);
            }
            let raw = r.take(len * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push(NamedTensor { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            magic,
            config_hash,
            vocab_hash,
            flags,
            tensors,
        })
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Malformed(format!("missing tensor {name}")))
    }

    /// Fail unless both hashes match.
    pub fn verify(&self, config_hash: u64, vocab_hash: u64) -> Result<()> {
        if self.config_hash != config_hash {
            return Err(Error::HashMismatch {
                which: "config",
                found: self.config_hash,
                expected: config_hash,
            });
        }
        if self.vocab_hash != vocab_hash {
            return Err(Error::HashMismatch {
                which: "vocab",
                found: self.vocab_hash,
                expected: vocab_hash,
            });
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Extractor and head with the hashes of the configuration and vocabulary
/// they were trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub config_hash: u64,
    pub vocab_hash: u64,
}

impl Checkpoint {
    pub fn to_tensor_file(&self) -> TensorFile {
        TensorFile {
            magic: CHECKPOINT_MAGIC,
            config_hash: self.config_hash,
            vocab_hash: self.vocab_hash,
            flags: u32::from(self.model.extractor.embedding.trainable),
            tensors: self
                .model
                .tensors()
                .into_iter()
                .map(|(name, dims, data)| NamedTensor::new(name, dims, data.to_vec()))
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_tensor_file().to_bytes()
    }

    /// Decode without checking hashes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let file = TensorFile::from_bytes(bytes, CHECKPOINT_MAGIC)?;
        let embedding = EmbeddingTable {
            matrix: file.get("embedding")?.matrix()?,
            trainable: file.flags & 1 == 1,
        };
        let mut convs = Vec::new();
        for t in &file.tensors {
            let Some(width) = t.name.strip_prefix("conv").and_then(|s| s.strip_suffix(".weight")) else {
                continue;
            };
            let width: usize = width
                .parse()
                .map_err(|_| Error::Malformed(format!("bad tensor name {}", t.name)))?;
            let weight = t.matrix()?;
            let bias = file.get(&format!("conv{width}.bias"))?.vector()?;
            if weight.cols() != width * embedding.dim() || bias.len() != weight.rows() {
                return Err(Error::Malformed(format!("conv{width} shapes")));
            }
            convs.push(ConvBank { width, weight, bias });
        }
        let extractor = ExtractorParams {
            embedding,
            convs,
            proj_weight: file.get("proj.weight")?.matrix()?,
            proj_bias: file.get("proj.bias")?.vector()?,
        };
        let head = HeadParams {
            weight: file.get("head.weight")?.matrix()?,
            bias: file.get("head.bias")?.vector()?,
        };
        let pooled: usize = extractor.convs.iter().map(|b| b.weight.rows()).sum();
        if extractor.proj_weight.cols() != pooled
            || extractor.proj_bias.len() != extractor.proj_weight.rows()
            || head.weight.cols() != extractor.proj_bias.len()
            || head.bias.len() != head.weight.rows()
        {
            return Err(Error::Malformed("inconsistent tensor shapes".into()));
        }
        Ok(Self {
            model: Model { extractor, head },
            config_hash: file.config_hash,
            vocab_hash: file.vocab_hash,
        })
    }

    /// Decode and require the given hashes.
    pub fn from_bytes_checked(bytes: &[u8], config_hash: u64, vocab_hash: u64) -> Result<Self> {
        let ckpt = Self::from_bytes(bytes)?;
        if ckpt.config_hash != config_hash {
            return Err(Error::HashMismatch {
                which: "config",
                found: ckpt.config_hash,
                expected: config_hash,
            });
        }
        if ckpt.vocab_hash != vocab_hash {
            return Err(Error::HashMismatch {
                which: "vocab",
                found: ckpt.vocab_hash,
                expected: vocab_hash,
            });
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use alloc::vec;

    fn checkpoint() -> Checkpoint {
        let cfg = ModelConfig {
            embed_dim: 3,
            filters: 2,
            filter_widths: vec![2, 3],
            feature_dim: 4,
            max_len: 5,
        };
        let extractor = ExtractorParams::init(&cfg, EmbeddingTable::random(6, 3, 1), 2);
        Checkpoint {
            model: Model {
                extractor,
                head: HeadParams::uniform(3, 4, 0.05, 3, 0),
            },
            config_hash: 0xAB,
            vocab_hash: 0xCD,
        }
    }

    fn bits(m: &Model) -> Vec<u64> {
        m.tensors().iter().flat_map(|(_, _, d)| d.iter().map(|v| v.to_bits())).collect()
    }

    #[test]
    fn bit_exact_round_trip() {
        let c = checkpoint();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(bits(&back.model), bits(&c.model));
    }

    #[test]
    fn hash_guards() {
        let bytes = checkpoint().to_bytes();
        assert!(Checkpoint::from_bytes_checked(&bytes, 0xAB, 0xCD).is_ok());
        assert!(matches!(
            Checkpoint::from_bytes_checked(&bytes, 0xAB, 0xCE),
            Err(Error::HashMismatch { which: "vocab", .. })
        ));
        assert!(matches!(
            Checkpoint::from_bytes_checked(&bytes, 0xAA, 0xCD),
            Err(Error::HashMismatch { which: "config", .. })
        ));
    }

    #[test]
    fn truncation_and_corruption() {
        let bytes = checkpoint().to_bytes();
        for cut in [1, 7, 100, bytes.len() - 1] {
            assert_eq!(Checkpoint::from_bytes(&bytes[..bytes.len() - cut]), Err(Error::Truncated));
        }
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert_eq!(Checkpoint::from_bytes(&wrong), Err(Error::BadMagic));
        let mut old = bytes.clone();
        old[4] = 9;
        assert_eq!(
            Checkpoint::from_bytes(&old),
            Err(Error::VersionMismatch { found: 9, expected: 1 })
        );
        let mut long = bytes;
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(Error::Malformed(_))));
    }
}
