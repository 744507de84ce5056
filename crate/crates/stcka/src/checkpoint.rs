//! Checkpoint persistence.
//!
//! A checkpoint is a self-contained snapshot: the model config, the three
//! vocabularies, the label names, and every named parameter tensor. That is
//! everything inference needs, so `predict` and `eval` run from a
//! checkpoint plus raw text alone.
//!
//! The format is a versioned little-endian binary: magic, format version,
//! config as a JSON blob, length-prefixed symbol lists, then
//! `(name, shape, values)` records in the fixed parameter order. Round
//! trips are bitwise: save → load → save produces identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::ModelConfig;
use crate::data::LabelMap;
use crate::embedding::{SymbolTable, Vocabulary};
use crate::model::{ModelError, Parameters};

const MAGIC: &[u8; 8] = b"STCKAv01";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a checkpoint file (bad magic)")]
    BadMagic { path: String },
    #[error("{path}: checkpoint format version {got}, this build reads {expected}")]
    VersionMismatch {
        path: String,
        expected: u32,
        got: u32,
    },
    #[error("{path}: truncated checkpoint")]
    Truncated { path: String },
    #[error("{path}: corrupt checkpoint: {reason}")]
    Corrupt { path: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything a saved model carries.
#[derive(Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub labels: LabelMap,
    pub params: Parameters,
}

struct Writer<W: Write> {
    inner: W,
    path: String,
}

impl<W: Write> Writer<W> {
    fn io(&self, source: std::io::Error) -> CheckpointError {
        CheckpointError::Io {
            path: self.path.clone(),
            source,
        }
    }

    fn bytes(&mut self, data: &[u8]) -> Result<(), CheckpointError> {
        self.inner.write_all(data).map_err(|e| CheckpointError::Io {
            path: self.path.clone(),
            source: e,
        })
    }

    fn u32(&mut self, v: u32) -> Result<(), CheckpointError> {
        self.bytes(&v.to_le_bytes())
    }

    fn u64(&mut self, v: u64) -> Result<(), CheckpointError> {
        self.bytes(&v.to_le_bytes())
    }

    fn str(&mut self, s: &str) -> Result<(), CheckpointError> {
        self.u64(s.len() as u64)?;
        self.bytes(s.as_bytes())
    }

    fn str_list(&mut self, items: &[String]) -> Result<(), CheckpointError> {
        self.u64(items.len() as u64)?;
        for item in items {
            self.str(item)?;
        }
        Ok(())
    }

    fn f64_slice(&mut self, values: &[f64]) -> Result<(), CheckpointError> {
        for v in values {
            self.bytes(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    inner: R,
    path: String,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, buf: &mut [u8]) -> Result<(), CheckpointError> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                CheckpointError::Truncated {
                    path: self.path.clone(),
                }
            } else {
                CheckpointError::Io {
                    path: self.path.clone(),
                    source: e,
                }
            }
        })
    }

    fn corrupt(&self, reason: impl Into<String>) -> CheckpointError {
        CheckpointError::Corrupt {
            path: self.path.clone(),
            reason: reason.into(),
        }
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let mut buf = [0u8; 4];
        self.bytes(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        let mut buf = [0u8; 8];
        self.bytes(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    }

    fn len(&mut self, what: &str) -> Result<usize, CheckpointError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.corrupt(format!("{what} length {v} overflows")))
    }

    fn str(&mut self, what: &str) -> Result<String, CheckpointError> {
        let len = self.len(what)?;
        if len > (1 << 32) {
            return Err(self.corrupt(format!("{what} length {len} is implausible")));
        }
        let mut buf = vec![0u8; len];
        self.bytes(&mut buf)?;
        String::from_utf8(buf).map_err(|_| self.corrupt(format!("{what} is not UTF-8")))
    }

    fn str_list(&mut self, what: &str) -> Result<Vec<String>, CheckpointError> {
        let count = self.len(what)?;
        (0..count).map(|_| self.str(what)).collect()
    }
}

/// Writes a checkpoint. The config's class count must match the label map.
pub fn save(
    path: &Path,
    params: &Parameters,
    config: &ModelConfig,
    vocab: &Vocabulary,
    labels: &LabelMap,
) -> Result<(), CheckpointError> {
    assert_eq!(
        config.num_classes,
        Some(labels.len()),
        "config class count must match the label map before saving"
    );
    let display = path.display().to_string();
    let file = File::create(path).map_err(|source| CheckpointError::Io {
        path: display.clone(),
        source,
    })?;
    let mut w = Writer {
        inner: BufWriter::new(file),
        path: display,
    };

    w.bytes(MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    let config_json = serde_json::to_string(config).expect("config serializes");
    w.str(&config_json)?;
    w.str_list(vocab.words.real_symbols())?;
    w.str_list(vocab.chars.real_symbols())?;
    w.str_list(vocab.concepts.real_symbols())?;
    w.str_list(labels.names())?;

    let tensors = params.tensors();
    w.u64(tensors.len() as u64)?;
    for (name, tensor) in tensors {
        w.str(name)?;
        w.u64(tensor.shape().len() as u64)?;
        for dim in tensor.shape() {
            w.u64(*dim as u64)?;
        }
        w.f64_slice(tensor.data())?;
    }
    w.inner.flush().map_err(|e| w.io(e))
}

/// Reads a checkpoint back. Tensor records must match the freshly shaped
/// parameter set name for name and shape for shape.
pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| CheckpointError::Io {
        path: display.clone(),
        source,
    })?;
    let mut r = Reader {
        inner: BufReader::new(file),
        path: display,
    };

    let mut magic = [0u8; 8];
    r.bytes(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic { path: r.path });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            path: r.path,
            expected: FORMAT_VERSION,
            got: version,
        });
    }
    let config_json = r.str("config")?;
    let config: ModelConfig = serde_json::from_str(&config_json)
        .map_err(|e| r.corrupt(format!("config does not parse: {e}")))?;

    let words = r.str_list("word symbol")?;
    let chars = r.str_list("char symbol")?;
    let concepts = r.str_list("concept symbol")?;
    let labels = LabelMap::from_names(r.str_list("label")?);
    let vocab = Vocabulary {
        words: SymbolTable::from_real_symbols(&words),
        chars: SymbolTable::from_real_symbols(&chars),
        concepts: SymbolTable::from_real_symbols(&concepts),
    };
    if config.num_classes != Some(labels.len()) {
        return Err(r.corrupt(format!(
            "config says {:?} classes but {} labels are stored",
            config.num_classes,
            labels.len()
        )));
    }

    // Shape a parameter set from the stored config, then overwrite every
    // value; the throwaway rng never survives into the result.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = Parameters::init(&config, &vocab, labels.len(), &mut rng)?;
    let expected = params.tensors().len();
    let count = r.len("tensor count")?;
    if count != expected {
        return Err(r.corrupt(format!("expected {expected} tensors, found {count}")));
    }
    for (name, tensor) in params.tensors_mut() {
        let stored_name = r.str("tensor name")?;
        if stored_name != name {
            return Err(CheckpointError::Corrupt {
                path: r.path,
                reason: format!("expected tensor `{name}`, found `{stored_name}`"),
            });
        }
        let rank = r.len("tensor rank")?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.len("tensor dim")?);
        }
        if shape != tensor.shape() {
            return Err(CheckpointError::Corrupt {
                path: r.path,
                reason: format!(
                    "tensor `{name}`: stored shape {shape:?} does not match {:?}",
                    tensor.shape()
                ),
            });
        }
        let mut buf = [0u8; 8];
        for slot in tensor.data_mut() {
            r.bytes(&mut buf)?;
            *slot = f64::from_le_bytes(buf);
        }
    }

    Ok(Checkpoint {
        config,
        vocab,
        labels,
        params,
    })
}
