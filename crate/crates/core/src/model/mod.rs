//! Encoder-decoder captioner: two strided convolutions and a tanh-bounded
//! linear layer over the flattened feature map produce a fixed-length feature; a single-layer GRU
//! consumes the projected feature at step 0 and then token embeddings with
//! the projected feature added at every step.

mod checkpoint;
mod decoder;
mod encoder;

use std::collections::BTreeMap;
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{checkpoint_bytes, load_checkpoint, load_checkpoint_unchecked, save_checkpoint, Checkpoint, RngState};
pub use decoder::{softmax, DecoderCache};
pub use encoder::EncoderCache;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vocab::Vocabulary;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 3,
            height: 24,
            width: 24,
            conv1_channels: 8,
            conv2_channels: 16,
            feature_dim: 64,
            embed_dim: 32,
            hidden_dim: 64,
        }
    }
}

impl ModelConfig {
    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Length of the flattened second convolution output.
    pub fn flat_len(&self) -> usize {
        let (h, w) = self.conv2_out();
        self.conv2_channels * h * w
    }

    pub(crate) fn conv1_out(&self) -> (usize, usize) {
        (conv_out(self.height), conv_out(self.width))
    }

    pub(crate) fn conv2_out(&self) -> (usize, usize) {
        let (h, w) = self.conv1_out();
        (conv_out(h), conv_out(w))
    }
}

/// Output length of a 3×3, stride-2, padding-1 convolution.
fn conv_out(n: usize) -> usize {
    (n - 1) / 2 + 1
}

/// Parameter slots, in storage and checkpoint order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamId {
    Conv1W,
    Conv1B,
    Conv2W,
    Conv2B,
    FcW,
    FcB,
    FeatProjW,
    FeatProjB,
    Embed,
    WIh,
    WHh,
    BIh,
    BHh,
    OutW,
    OutB,
}

impl ParamId {
    pub const ALL: [ParamId; 15] = [
        ParamId::Conv1W,
        ParamId::Conv1B,
        ParamId::Conv2W,
        ParamId::Conv2B,
        ParamId::FcW,
        ParamId::FcB,
        ParamId::FeatProjW,
        ParamId::FeatProjB,
        ParamId::Embed,
        ParamId::WIh,
        ParamId::WHh,
        ParamId::BIh,
        ParamId::BHh,
        ParamId::OutW,
        ParamId::OutB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamId::Conv1W => "encoder.conv1.weight",
            ParamId::Conv1B => "encoder.conv1.bias",
            ParamId::Conv2W => "encoder.conv2.weight",
            ParamId::Conv2B => "encoder.conv2.bias",
            ParamId::FcW => "encoder.fc.weight",
            ParamId::FcB => "encoder.fc.bias",
            ParamId::FeatProjW => "decoder.feature_proj.weight",
            ParamId::FeatProjB => "decoder.feature_proj.bias",
            ParamId::Embed => "decoder.embed",
            ParamId::WIh => "decoder.gru.weight_ih",
            ParamId::WHh => "decoder.gru.weight_hh",
            ParamId::BIh => "decoder.gru.bias_ih",
            ParamId::BHh => "decoder.gru.bias_hh",
            ParamId::OutW => "decoder.out.weight",
            ParamId::OutB => "decoder.out.bias",
        }
    }

    pub fn from_name(name: &str) -> Option<ParamId> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn is_encoder(self) -> bool {
        self <= ParamId::FcB
    }

    /// Parameters whose leading dimension is the vocabulary.
    pub fn is_vocab_sized(self) -> bool {
        matches!(self, ParamId::Embed | ParamId::OutW | ParamId::OutB)
    }
}

/// All model arrays. Also used for gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T> {
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Parameters<T> {
    pub fn zeros_like(other: &Self) -> Self {
        Self {
            tensors: other.tensors.iter().map(Tensor::zeros_like).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        ParamId::ALL.into_iter().zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Tensor<T>)> {
        ParamId::ALL.into_iter().zip(&mut self.tensors)
    }

    pub fn fill(&mut self, v: T) {
        self.tensors.iter_mut().for_each(|t| t.fill(v));
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub(crate) fn from_tensors(tensors: Vec<Tensor<T>>) -> Self {
        debug_assert_eq!(tensors.len(), ParamId::ALL.len());
        Self { tensors }
    }
}

impl<T> Index<ParamId> for Parameters<T> {
    type Output = Tensor<T>;
    fn index(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id as usize]
    }
}

impl<T> IndexMut<ParamId> for Parameters<T> {
    fn index_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id as usize]
    }
}

/// Number of leading (row-major) elements of each parameter that are frozen.
/// Zero means fully trainable; the full length means fully frozen. Rows
/// appended by vocabulary growth sit at the end, so a prefix describes
/// "old rows frozen, new rows trainable" exactly.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainabilityMask {
    frozen_prefix: BTreeMap<String, usize>,
}

impl TrainabilityMask {
    pub fn all_trainable() -> Self {
        Self {
            frozen_prefix: ParamId::ALL.iter().map(|p| (p.name().to_string(), 0)).collect(),
        }
    }

    pub fn frozen_prefix(&self, id: ParamId) -> usize {
        self.frozen_prefix.get(id.name()).copied().unwrap_or(0)
    }

    pub fn set_frozen_prefix(&mut self, id: ParamId, n: usize) {
        self.frozen_prefix.insert(id.name().to_string(), n);
    }

    pub fn is_frozen(&self, id: ParamId, element: usize) -> bool {
        element < self.frozen_prefix(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.frozen_prefix.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Every parameter named exactly once and no prefix longer than its array.
    pub fn covers<T: Scalar>(&self, params: &Parameters<T>) -> bool {
        self.frozen_prefix.len() == ParamId::ALL.len()
            && params
                .iter()
                .all(|(id, t)| self.frozen_prefix.get(id.name()).is_some_and(|&n| n <= t.len()))
    }
}

/// Encoder output.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature<T> {
    pub values: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T> {
    pub config: ModelConfig,
    pub params: Parameters<T>,
    pub vocab_version: u32,
    /// Vocabulary size before the most recent expansion (equal to the current
    /// size for a freshly built model).
    pub prev_vocab_size: usize,
    pub mask: TrainabilityMask,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<T> {
    (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect()
}

impl<T: Scalar> ModelState<T> {
    /// Freshly initialized weights (uniform ±1/√fan_in, embeddings ±0.1,
    /// zero biases), deterministic in `seed`.
    pub fn new(config: ModelConfig, vocab_size: usize, vocab_version: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let (e, h, f) = (c.embed_dim, c.hidden_dim, c.feature_dim);
        let mut w = |shape: &[usize], fan_in: usize| {
            let n = shape.iter().product();
            Tensor::from_vec(shape, uniform(&mut rng, n, 1.0 / (fan_in as f64).sqrt())).expect("sized")
        };
        let conv1_w = w(&[c.conv1_channels, c.channels, 3, 3], c.channels * 9);
        let conv2_w = w(&[c.conv2_channels, c.conv1_channels, 3, 3], c.conv1_channels * 9);
        let flat = c.flat_len();
        let fc_w = w(&[f, flat], flat);
        let proj_w = w(&[e, f], f);
        let w_ih = w(&[3 * h, e], h);
        let w_hh = w(&[3 * h, h], h);
        let out_w = w(&[vocab_size, h], h);
        let embed = Tensor::from_vec(&[vocab_size, e], uniform(&mut rng, vocab_size * e, 0.1)).expect("sized");
        let params = Parameters::from_tensors(vec![
            conv1_w,
            Tensor::zeros(&[c.conv1_channels]),
            conv2_w,
            Tensor::zeros(&[c.conv2_channels]),
            fc_w,
            Tensor::zeros(&[f]),
            proj_w,
            Tensor::zeros(&[e]),
            embed,
            w_ih,
            w_hh,
            Tensor::zeros(&[3 * h]),
            Tensor::zeros(&[3 * h]),
            out_w,
            Tensor::zeros(&[vocab_size]),
        ]);
        Self {
            config,
            params,
            vocab_version,
            prev_vocab_size: vocab_size,
            mask: TrainabilityMask::all_trainable(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.params[ParamId::Embed].shape()[0]
    }

    /// Embedding rows, output rows and mask all agree with the vocabulary size.
    pub fn check_invariants(&self) -> Result<()> {
        let v = self.vocab_size();
        if self.params[ParamId::OutW].shape()[0] != v || self.params[ParamId::OutB].len() != v {
            return Err(Error::Contract(format!("output layer does not match vocabulary size {v}")));
        }
        if !self.mask.covers(&self.params) {
            return Err(Error::Contract("trainability mask does not cover every parameter".into()));
        }
        Ok(())
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.version() != self.vocab_version || vocab.len() != self.vocab_size() {
            return Err(Error::Contract(format!(
                "model has vocabulary version {} ({} tokens) but vocabulary is version {} ({} tokens)",
                self.vocab_version,
                self.vocab_size(),
                vocab.version(),
                vocab.len()
            )));
        }
        Ok(())
    }

    /// Grows the embedding and output layer to `new_vocab`, copying old rows
    /// bit-exactly and drawing new weights from uniform(−0.1, 0.1). New output
    /// biases start at zero. The mask of old elements is unchanged.
    pub fn expand_decoder(&self, new_vocab: &Vocabulary, seed: u64) -> Result<ModelState<T>> {
        let old_v = self.vocab_size();
        let new_v = new_vocab.len();
        if new_vocab.version() != self.vocab_version + 1 {
            return Err(Error::Contract(format!(
                "expansion needs vocabulary version {}, got {}",
                self.vocab_version + 1,
                new_vocab.version()
            )));
        }
        if new_v < old_v {
            return Err(Error::Contract(format!("vocabulary shrank from {old_v} to {new_v}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let added = new_v - old_v;
        let mut next = self.clone();
        let (e, h) = (self.config.embed_dim, self.config.hidden_dim);
        next.params[ParamId::Embed].append_rows(uniform(&mut rng, added * e, 0.1));
        next.params[ParamId::OutW].append_rows(uniform(&mut rng, added * h, 0.1));
        let bias = &mut next.params[ParamId::OutB];
        let mut grown = bias.data().to_vec();
        grown.resize(new_v, T::zero());
        *bias = Tensor::from_vec(&[new_v], grown)?;
        next.vocab_version = new_vocab.version();
        next.prev_vocab_size = old_v;
        Ok(next)
    }

    pub fn encode(&self, image: &[T]) -> Result<Feature<T>> {
        Ok(Feature {
            values: self.encoder_forward(image)?.feature,
        })
    }

    /// Teacher-forced per-step distributions; `target` starts with start and
    /// ends with end, and `|target| − 1` distributions are returned.
    pub fn decode_train(&self, feature: &Feature<T>, target: &[usize]) -> Result<Vec<Vec<T>>> {
        Ok(self.decoder_forward(&feature.values, target)?.probs)
    }

    /// Pre-softmax scores after consuming the feature and each prefix token.
    /// One row per prefix token.
    pub fn step_logits(&self, feature: &Feature<T>, prefix: &[usize]) -> Result<Vec<Vec<T>>> {
        if prefix.is_empty() {
            return Err(Error::Contract("prefix is empty".into()));
        }
        // The trailing token is only a placeholder target; its input is never consumed.
        let mut target = prefix.to_vec();
        target.push(crate::vocab::END);
        Ok(self.decoder_forward(&feature.values, &target)?.logits)
    }

    /// Greedy decoding: never emits start or pad; stops at end (excluded) or
    /// after `max_len` tokens.
    pub fn generate(&self, feature: &Feature<T>, max_len: usize) -> Result<Vec<usize>> {
        self.greedy(&feature.values, max_len)
    }

    /// Freezes everything (used for teachers and pseudo-label models).
    pub fn frozen(mut self) -> Self {
        for (id, t) in self.params.iter() {
            self.mask.set_frozen_prefix(id, t.len());
        }
        self
    }
}
