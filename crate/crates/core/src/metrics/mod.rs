//! Corpus-level caption metrics on the percent scale used in result tables.

mod bleu;
mod cider;
mod meteor;
mod rouge;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu, corpus_bleu};
pub use cider::{cider, cider_raw};
pub use meteor::{align, meteor_lite, meteor_sentence, stem};
pub use rouge::{lcs_len, rouge_l, rouge_l_sentence, ROUGE_BETA};

use crate::dataio::{DataSource, ImageId, TaskSpec};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::scalar::{cast_slice, Scalar};
use crate::vocab::{tokenize, Vocabulary};

/// One candidate caption with its references, as word tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalPair {
    pub fn new<S: AsRef<str>>(candidate: &[S], references: &[&[S]]) -> Self {
        let own = |s: &[S]| s.iter().map(|t| t.as_ref().to_string()).collect::<Vec<_>>();
        Self {
            candidate: own(candidate),
            references: references.iter().map(|r| own(r)).collect(),
        }
    }

    /// Tokenizes raw caption text.
    pub fn from_text<S: AsRef<str>>(candidate: &str, references: &[S]) -> Self {
        Self {
            candidate: tokenize(candidate),
            references: references.iter().map(|r| tokenize(r.as_ref())).collect(),
        }
    }
}

/// All five scores, percent scale. CIDEr is unbounded above.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu4: f64,
    pub meteor_lite: f64,
    pub rouge_l: f64,
    pub cider: f64,
}

impl MetricReport {
    pub const NAMES: [&'static str; 5] = ["BLEU1", "BLEU4", "METEOR", "ROUGE_L", "CIDEr"];

    pub fn values(&self) -> [f64; 5] {
        [self.bleu1, self.bleu4, self.meteor_lite, self.rouge_l, self.cider]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self {
            bleu1: v[0],
            bleu4: v[1],
            meteor_lite: v[2],
            rouge_l: v[3],
            cider: v[4],
        }
    }

    pub fn is_valid(&self) -> bool {
        let bounded = [self.bleu1, self.bleu4, self.meteor_lite, self.rouge_l];
        bounded.iter().all(|v| v.is_finite() && (0.0..=100.0).contains(v)) && self.cider.is_finite() && self.cider >= 0.0
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in Self::NAMES.iter().zip(self.values()).enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{name}={v:.1}")?;
        }
        Ok(())
    }
}

/// Scores a corpus; CIDEr document frequencies come from the corpus itself.
pub fn score_pairs(pairs: &[EvalPair]) -> Result<MetricReport> {
    let refs: Vec<Vec<Vec<String>>> = pairs.iter().map(|p| p.references.clone()).collect();
    Ok(MetricReport {
        bleu1: bleu(pairs, 1)?,
        bleu4: bleu(pairs, 4)?,
        meteor_lite: meteor_lite(pairs),
        rouge_l: rouge_l(pairs),
        cider: cider(pairs, &refs),
    })
}

/// Greedy captions (words only) for the given images.
pub fn generate_captions<T: Scalar>(
    state: &ModelState<T>,
    image_ids: &[ImageId],
    vocab: &Vocabulary,
    data: &dyn DataSource,
    max_len: usize,
) -> Result<BTreeMap<ImageId, Vec<String>>> {
    state.check_vocab(vocab)?;
    image_ids
        .iter()
        .map(|&id| {
            let image: Vec<T> = cast_slice(&data.image(id)?);
            let feature = state.encode(&image)?;
            let tokens = state.generate(&feature, max_len)?;
            Ok((id, vocab.decode_words(&tokens)))
        })
        .collect()
}

/// Pairs generated captions with tokenized references from `data`.
pub fn pairs_for(captions: &BTreeMap<ImageId, Vec<String>>, data: &dyn DataSource) -> Result<Vec<EvalPair>> {
    captions
        .iter()
        .map(|(&id, cand)| {
            Ok(EvalPair {
                candidate: cand.clone(),
                references: data.captions(id)?.iter().map(|c| tokenize(c)).collect(),
            })
        })
        .collect()
}

/// Captions every test image of `task` greedily and scores the corpus.
pub fn evaluate<T: Scalar>(
    state: &ModelState<T>,
    task: &TaskSpec,
    vocab: &Vocabulary,
    data: &dyn DataSource,
    max_len: usize,
) -> Result<MetricReport> {
    evaluate_images(state, &task.test, vocab, data, max_len)
}

pub fn evaluate_images<T: Scalar>(
    state: &ModelState<T>,
    image_ids: &[ImageId],
    vocab: &Vocabulary,
    data: &dyn DataSource,
    max_len: usize,
) -> Result<MetricReport> {
    if image_ids.is_empty() {
        return Err(Error::Validation("evaluation split is empty".into()));
    }
    let captions = generate_captions(state, image_ids, vocab, data, max_len)?;
    score_pairs(&pairs_for(&captions, data)?)
}

/// Contiguous n-grams of `tokens`.
pub(crate) fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = &[String]> {
    tokens.windows(n)
}
