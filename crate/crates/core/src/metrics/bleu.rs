use std::collections::HashMap;

use super::{ngrams, EvalPair};
use crate::error::{Error, Result};

fn counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    for g in ngrams(tokens, n) {
        *out.entry(g).or_insert(0) += 1;
    }
    out
}

/// Corpus BLEU in `[0, 1]`: clipped n-gram precisions pooled over the corpus,
/// uniform geometric mean over orders `1..=n`, brevity penalty against the
/// closest reference length (shorter wins ties). No smoothing.
pub fn corpus_bleu(pairs: &[EvalPair], n: usize) -> Result<f64> {
    if n != 1 && n != 4 {
        return Err(Error::Config(format!("BLEU order must be 1 or 4, got {n}")));
    }
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for pair in pairs {
        let c = pair.candidate.len();
        cand_len += c;
        ref_len += pair
            .references
            .iter()
            .map(Vec::len)
            .min_by_key(|&r| (r.abs_diff(c), r))
            .unwrap_or(0);
        for order in 1..=n {
            let cand = counts(&pair.candidate, order);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in &pair.references {
                for (g, k) in counts(r, order) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in cand {
                matched[order - 1] += k.min(max_ref.get(g).copied().unwrap_or(0));
                total[order - 1] += k;
            }
        }
    }
    if cand_len == 0 || matched.contains(&0) {
        return Ok(0.0);
    }
    let log_mean = (0..n)
        .map(|i| (matched[i] as f64 / total[i] as f64).ln())
        .sum::<f64>()
        / n as f64;
    let bp = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    Ok(bp * log_mean.exp())
}

/// Corpus BLEU-`n` ×100; `n` must be 1 or 4.
pub fn bleu(pairs: &[EvalPair], n: usize) -> Result<f64> {
    Ok(corpus_bleu(pairs, n)? * 100.0)
}
