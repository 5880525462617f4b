//! Binary checkpoint: magic, format version, scalar width, a JSON metadata
//! block (config, vocabulary version, mask, shapes, RNG state) and the raw
//! little-endian parameter data in [`ParamId::ALL`] order.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelState, ParamId, Parameters, TrainabilityMask};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vocab::Vocabulary;

const MAGIC: &[u8; 8] = b"CAPCLCKP";
const FORMAT_VERSION: u32 = 2;

/// Serializable position of a ChaCha8 stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: String,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream().to_string(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bad = |m: &str| Error::Checkpoint(format!("bad RNG state: {m}"));
        let seed: [u8; 32] = hex::decode(&self.seed)
            .map_err(|e| bad(&e.to_string()))?
            .try_into()
            .map_err(|_| bad("seed must be 32 bytes"))?;
        let stream: u64 = self.stream.parse().map_err(|_| bad("stream"))?;
        let pos: u128 = self.word_pos.parse().map_err(|_| bad("word position"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: ModelConfig,
    vocab_version: u32,
    prev_vocab_size: usize,
    mask: TrainabilityMask,
    shapes: Vec<(String, Vec<usize>)>,
    rng: Option<RngState>,
}

/// A model plus the RNG position of the run that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub state: ModelState<T>,
    pub rng: Option<RngState>,
}

pub fn checkpoint_bytes<T: Scalar>(state: &ModelState<T>, rng: Option<&RngState>) -> Vec<u8> {
    let meta = Metadata {
        config: state.config.clone(),
        vocab_version: state.vocab_version,
        prev_vocab_size: state.prev_vocab_size,
        mask: state.mask.clone(),
        shapes: state
            .params
            .iter()
            .map(|(id, t)| (id.name().to_string(), t.shape().to_vec()))
            .collect(),
        rng: rng.cloned(),
    };
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(32 + json.len() + state.params.count() * T::WIDTH as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(T::WIDTH);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in state.params.iter() {
        for &v in t.data() {
            let v = v.to_f64_lossless();
            if T::WIDTH == 4 {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            } else {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn save_checkpoint<T: Scalar>(path: &Path, state: &ModelState<T>, rng: Option<&RngState>) -> Result<String> {
    let bytes = checkpoint_bytes(state, rng);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
}

pub fn parse_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint format {version}")));
    }
    let width = r.take(1)?[0];
    if width != 4 && width != 8 {
        return Err(Error::Checkpoint(format!("bad scalar width {width}")));
    }
    let json_len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let meta: Metadata =
        serde_json::from_slice(r.take(json_len)?).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    if meta.shapes.len() != ParamId::ALL.len() {
        return Err(Error::Checkpoint("wrong number of parameter arrays".into()));
    }
    let mut tensors = Vec::with_capacity(meta.shapes.len());
    for ((name, shape), id) in meta.shapes.iter().zip(ParamId::ALL) {
        if name != id.name() {
            return Err(Error::Checkpoint(format!("expected {} but found {name}", id.name())));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * width as usize)?;
        let data: Vec<T> = raw
            .chunks_exact(width as usize)
            .map(|c| {
                let v = if width == 4 {
                    f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))
                } else {
                    f64::from_le_bytes(c.try_into().expect("8 bytes"))
                };
                T::of(v)
            })
            .collect();
        tensors.push(Tensor::from_vec(shape, data)?);
    }
    if r.at != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after parameter data".into()));
    }
    let state = ModelState {
        config: meta.config,
        params: Parameters::from_tensors(tensors),
        vocab_version: meta.vocab_version,
        prev_vocab_size: meta.prev_vocab_size,
        mask: meta.mask,
    };
    state.check_invariants()?;
    Ok(Checkpoint { state, rng: meta.rng })
}

/// Loads without checking a vocabulary.
pub fn load_checkpoint_unchecked<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

/// Loads and rejects a vocabulary whose version or size disagrees.
pub fn load_checkpoint<T: Scalar>(path: &Path, vocab: &Vocabulary) -> Result<Checkpoint<T>> {
    let ck = load_checkpoint_unchecked(path)?;
    ck.state
        .check_vocab(vocab)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    Ok(ck)
}
