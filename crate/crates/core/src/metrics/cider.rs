use std::collections::{HashMap, HashSet};

use super::{ngrams, EvalPair};

const MAX_N: usize = 4;

type Vector<'a> = [HashMap<&'a [String], f64>; MAX_N];

struct Idf<'a> {
    df: HashMap<&'a [String], f64>,
    log_docs: f64,
}

impl<'a> Idf<'a> {
    fn new(corpus_refs: &'a [Vec<Vec<String>>]) -> Self {
        let mut df: HashMap<&[String], f64> = HashMap::new();
        for refs in corpus_refs {
            let mut seen: HashSet<&[String]> = HashSet::new();
            for r in refs {
                for n in 1..=MAX_N {
                    seen.extend(ngrams(r, n));
                }
            }
            for g in seen {
                *df.entry(g).or_insert(0.0) += 1.0;
            }
        }
        Self {
            df,
            log_docs: (corpus_refs.len().max(1) as f64).ln(),
        }
    }

    /// Term counts weighted by `ln(N) − ln(max(1, df))`, with per-order norms.
    fn vector<'s>(&self, tokens: &'s [String]) -> (Vector<'s>, [f64; MAX_N]) {
        let mut vec: Vector<'s> = Default::default();
        let mut norms = [0.0; MAX_N];
        for n in 1..=MAX_N {
            for g in ngrams(tokens, n) {
                *vec[n - 1].entry(g).or_insert(0.0) += 1.0;
            }
            for (g, w) in vec[n - 1].iter_mut() {
                let df = self.df.get(g).copied().unwrap_or(0.0).max(1.0);
                *w *= self.log_docs - df.ln();
                norms[n - 1] += *w * *w;
            }
        }
        (vec, norms.map(f64::sqrt))
    }
}

fn pair_score(idf: &Idf<'_>, pair: &EvalPair) -> f64 {
    if pair.references.is_empty() {
        return 0.0;
    }
    let (cv, cn) = idf.vector(&pair.candidate);
    let mut total = 0.0;
    for r in &pair.references {
        let (rv, rn) = idf.vector(r);
        for n in 0..MAX_N {
            let mut dot: f64 = cv[n].iter().map(|(g, w)| w * rv[n].get(g).copied().unwrap_or(0.0)).sum();
            if cn[n] != 0.0 && rn[n] != 0.0 {
                dot /= cn[n] * rn[n];
            }
            total += dot;
        }
    }
    10.0 * total / (MAX_N as f64 * pair.references.len() as f64)
}

/// Corpus CIDEr on its native scale (mean over pairs of 10 × average TF-IDF
/// cosine over n = 1..4 and references). Document frequencies count the
/// reference sets in `corpus_refs` containing each n-gram.
pub fn cider_raw(pairs: &[EvalPair], corpus_refs: &[Vec<Vec<String>>]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let idf = Idf::new(corpus_refs);
    pairs.iter().map(|p| pair_score(&idf, p)).sum::<f64>() / pairs.len() as f64
}

/// CIDEr ×100, the scale of the result tables.
pub fn cider(pairs: &[EvalPair], corpus_refs: &[Vec<Vec<String>>]) -> f64 {
    100.0 * cider_raw(pairs, corpus_refs)
}
