//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "ECBMCKPT"
//! 8       4     u32 format version (currently 1)
//! 12      1     u8 model kind: 0 = cbm, 1 = baseline
//! 13      3     reserved, zero
//! 16      4     u32 vocab_size
//! 20      4     u32 embed_dim
//! 24      4     u32 hidden_dim
//! 28      4     u32 n = number of grade-head hidden layers
//! 32      4n    u32 grade-head hidden widths
//! ..      8     u64 metadata length m
//! ..      m     UTF-8 JSON {"concepts": [...], "vocab": [...], "provenance": {...}}
//! ..      4     u32 parameter count p
//! then p blocks:
//!         4     u32 name length l
//!         l     UTF-8 parameter name
//!         4     u32 rank r
//!         8r    u64 dims
//!         8k    f64 values, k = product of dims
//! ..      32    SHA-256 of every preceding byte
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AnyModel, BaselineModel, EssayCbmModel, GradingModel, ModelDims, ModelKind, Provenance};
use crate::data::{Vocab, CONCEPT_NAMES};
use crate::error::{Error, Result};
use crate::numerics::Parameters;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ECBMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct Metadata {
    concepts: Vec<String>,
    vocab: Vec<String>,
    provenance: Provenance,
}

fn kind_byte(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Cbm => 0,
        ModelKind::Baseline => 1,
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Contract(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Serializes `model` to checkpoint bytes. Identical models give identical
/// bytes.
pub fn write_checkpoint<M: GradingModel>(model: &M) -> Result<Vec<u8>> {
    let dims = model.dims();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&[kind_byte(M::KIND), 0, 0, 0]);
    put_u32(&mut out, model.vocab().len())?;
    put_u32(&mut out, dims.embed_dim)?;
    put_u32(&mut out, dims.hidden_dim)?;
    put_u32(&mut out, dims.grade_hidden.len())?;
    for &w in &dims.grade_hidden {
        put_u32(&mut out, w)?;
    }

    let meta = serde_json::to_vec(&Metadata {
        concepts: CONCEPT_NAMES.iter().map(|s| s.to_string()).collect(),
        vocab: model.vocab().tokens().to_vec(),
        provenance: model.provenance().clone(),
    })?;
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);

    let params = model.named_params();
    put_u32(&mut out, params.len())?;
    for (name, t) in params {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank())?;
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn save_checkpoint<M: GradingModel>(model: &M, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_checkpoint(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptCheckpoint(format!("unexpected end of data reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let b = self.take(8, what)?;
        usize::try_from(u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .map_err(|_| Error::CorruptCheckpoint(format!("{what} overflows")))
    }
}

/// Parses checkpoint bytes into a model of whichever kind they hold.
pub fn read_checkpoint(bytes: &[u8]) -> Result<AnyModel> {
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::CorruptCheckpoint("missing checkpoint magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < 16 + DIGEST_LEN {
        return Err(Error::CorruptCheckpoint("file is truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::CorruptCheckpoint(
            "digest mismatch (file truncated or modified)".into(),
        ));
    }

    let mut r = Reader { buf: body, pos: 12 };
    let kind = match r.take(4, "kind")?[0] {
        0 => ModelKind::Cbm,
        1 => ModelKind::Baseline,
        other => return Err(Error::CorruptCheckpoint(format!("unknown model kind byte {other}"))),
    };
    let vocab_size = r.u32("vocab size")?;
    let embed_dim = r.u32("embed dim")?;
    let hidden_dim = r.u32("hidden dim")?;
    let layers = r.u32("grade head depth")?;
    let grade_hidden = (0..layers)
        .map(|_| r.u32("grade head width"))
        .collect::<Result<Vec<_>>>()?;
    let dims = ModelDims {
        embed_dim,
        hidden_dim,
        grade_hidden,
    };
    dims.validate().map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    if kind == ModelKind::Baseline && !dims.grade_hidden.is_empty() {
        return Err(Error::CorruptCheckpoint(
            "baseline checkpoint lists grade-head layers".into(),
        ));
    }

    let meta_len = r.u64("metadata length")?;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len, "metadata")?)
        .map_err(|e| Error::CorruptCheckpoint(format!("metadata: {e}")))?;
    if meta
        .concepts
        .iter()
        .map(String::as_str)
        .ne(CONCEPT_NAMES.iter().copied())
    {
        return Err(Error::CorruptCheckpoint(format!(
            "concept schema {:?} does not match this build",
            meta.concepts
        )));
    }
    if meta.vocab.len() != vocab_size {
        return Err(Error::CorruptCheckpoint(format!(
            "header says {vocab_size} tokens, metadata has {}",
            meta.vocab.len()
        )));
    }
    let vocab = Vocab::from_tokens(meta.vocab).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;

    let count = r.u32("parameter count")?;
    let mut blocks = HashMap::new();
    for _ in 0..count {
        let name_len = r.u32("name length")?;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::CorruptCheckpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")?;
        let shape = (0..rank).map(|_| r.u64("dim")).collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::CorruptCheckpoint(format!("{name}: shape overflows")))?;
        let data = r
            .take(numel, &name)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect::<Vec<_>>();
        if blocks.insert(name.clone(), (shape, data)).is_some() {
            return Err(Error::CorruptCheckpoint(format!("duplicate parameter {name}")));
        }
    }
    if r.pos != body.len() {
        return Err(Error::CorruptCheckpoint("trailing bytes after parameters".into()));
    }

    Ok(match kind {
        ModelKind::Cbm => {
            let mut m = EssayCbmModel::new(vocab, &dims, 0)?;
            fill(&mut m, blocks)?;
            m.provenance = meta.provenance;
            AnyModel::Cbm(m)
        }
        ModelKind::Baseline => {
            let mut m = BaselineModel::new(vocab, &dims, 0)?;
            fill(&mut m, blocks)?;
            m.provenance = meta.provenance;
            AnyModel::Baseline(m)
        }
    })
}

fn fill(model: &mut impl Parameters, mut blocks: HashMap<String, (Vec<usize>, Vec<f64>)>) -> Result<()> {
    for (name, t) in model.named_params_mut() {
        let (shape, data) = blocks
            .remove(&name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing parameter {name}")))?;
        if shape != t.shape() {
            return Err(Error::CorruptCheckpoint(format!(
                "{name}: stored shape {shape:?}, expected {:?}",
                t.shape()
            )));
        }
        t.data_mut().copy_from_slice(&data);
    }
    if let Some(extra) = blocks.keys().min() {
        return Err(Error::CorruptCheckpoint(format!("unexpected parameter {extra}")));
    }
    Ok(())
}

pub fn load_any(path: impl AsRef<Path>) -> Result<AnyModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

/// Loads a bottleneck model; a baseline checkpoint is a kind mismatch.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EssayCbmModel> {
    match load_any(path)? {
        AnyModel::Cbm(m) => Ok(m),
        other => Err(Error::KindMismatch {
            found: other.kind().to_string(),
            expected: ModelKind::Cbm.to_string(),
        }),
    }
}

pub fn load_baseline(path: impl AsRef<Path>) -> Result<BaselineModel> {
    match load_any(path)? {
        AnyModel::Baseline(m) => Ok(m),
        other => Err(Error::KindMismatch {
            found: other.kind().to_string(),
            expected: ModelKind::Baseline.to_string(),
        }),
    }
}
