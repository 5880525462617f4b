//! Brute-force reference implementations of the caption metrics. Each one is
//! written from the textbook definition with no shared code: n-grams are
//! joined strings, LCS is found by enumerating subsequences, METEOR
//! alignments by enumerating every matching.

use std::collections::{BTreeMap, BTreeSet};

pub type Corpus = Vec<(Vec<String>, Vec<Vec<String>>)>;

fn grams(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].join(" ")).collect()
}

fn histogram(items: Vec<String>) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for g in items {
        *h.entry(g).or_insert(0) += 1;
    }
    h
}

/// Corpus BLEU in [0, 1], uniform weights over orders 1..=n, no smoothing.
pub fn bleu(corpus: &Corpus, n: usize) -> f64 {
    let mut log_sum = 0.0;
    for order in 1..=n {
        let (mut hit, mut all) = (0usize, 0usize);
        for (cand, refs) in corpus {
            let mut ceiling: BTreeMap<String, usize> = BTreeMap::new();
            for r in refs {
                for (g, k) in histogram(grams(r, order)) {
                    let c = ceiling.entry(g).or_insert(0);
                    if k > *c {
                        *c = k;
                    }
                }
            }
            for (g, k) in histogram(grams(cand, order)) {
                all += k;
                hit += std::cmp::min(k, *ceiling.get(&g).unwrap_or(&0));
            }
        }
        if hit == 0 {
            return 0.0;
        }
        log_sum += (hit as f64 / all as f64).ln();
    }
    let c: usize = corpus.iter().map(|(cand, _)| cand.len()).sum();
    let mut r = 0usize;
    for (cand, refs) in corpus {
        let mut best: Option<usize> = None;
        for len in refs.iter().map(Vec::len) {
            best = match best {
                None => Some(len),
                Some(b) => {
                    let (db, dl) = (b.abs_diff(cand.len()), len.abs_diff(cand.len()));
                    Some(if dl < db || (dl == db && len < b) { len } else { b })
                }
            };
        }
        r += best.unwrap_or(0);
    }
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (log_sum / n as f64).exp()
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|w| it.any(|h| h == *w))
}

/// LCS by trying every subsequence of `a`, longest first.
pub fn lcs(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16, "brute-force LCS is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let pick: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if is_subsequence(&pick, b) {
            best = len;
        }
    }
    best
}

/// Mean over pairs of the best ROUGE-L F (β = 1.2) among references.
pub fn rouge_l(corpus: &Corpus) -> f64 {
    let beta2 = 1.2f64 * 1.2;
    let mut total = 0.0;
    for (cand, refs) in corpus {
        let mut best = 0.0f64;
        for r in refs {
            let l = lcs(cand, r) as f64;
            if l > 0.0 {
                let p = l / cand.len() as f64;
                let rc = l / r.len() as f64;
                best = best.max((1.0 + beta2) * p * rc / (rc + beta2 * p));
            }
        }
        total += best;
    }
    total / corpus.len() as f64
}

fn stemmed(w: &str) -> String {
    for suffix in ["ing", "ed", "es", "s"] {
        if w.ends_with(suffix) && w.chars().count() - suffix.chars().count() >= 3 {
            return w[..w.len() - suffix.len()].to_string();
        }
    }
    w.to_string()
}

/// Every partial injective matching of equal-stem words; returns the best
/// (matches, chunks) with matches maximal and chunks minimal among those.
fn best_alignment(cand: &[String], reference: &[String]) -> (usize, usize) {
    let c: Vec<String> = cand.iter().map(|w| stemmed(w)).collect();
    let r: Vec<String> = reference.iter().map(|w| stemmed(w)).collect();
    let mut best = (0usize, 0usize);
    let mut chosen: Vec<Option<usize>> = vec![None; c.len()];
    let mut used = vec![false; r.len()];
    fn walk(
        i: usize,
        c: &[String],
        r: &[String],
        chosen: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        best: &mut (usize, usize),
    ) {
        if i == c.len() {
            let pairs: Vec<(usize, usize)> =
                chosen.iter().enumerate().filter_map(|(ci, rj)| rj.map(|j| (ci, j))).collect();
            let m = pairs.len();
            let chunks = pairs
                .iter()
                .enumerate()
                .filter(|(k, &(ci, rj))| *k == 0 || !(pairs[k - 1].0 + 1 == ci && pairs[k - 1].1 + 1 == rj))
                .count();
            if m > best.0 || (m == best.0 && m > 0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        walk(i + 1, c, r, chosen, used, best);
        for j in 0..r.len() {
            if !used[j] && r[j] == c[i] {
                used[j] = true;
                chosen[i] = Some(j);
                walk(i + 1, c, r, chosen, used, best);
                chosen[i] = None;
                used[j] = false;
            }
        }
    }
    walk(0, &c, &r, &mut chosen, &mut used, &mut best);
    best
}

/// Mean over pairs of the best sentence METEOR (exact or stem matches).
pub fn meteor(corpus: &Corpus) -> f64 {
    let mut total = 0.0;
    for (cand, refs) in corpus {
        let mut best = 0.0f64;
        for r in refs {
            let (m, chunks) = best_alignment(cand, r);
            if m == 0 {
                continue;
            }
            let p = m as f64 / cand.len() as f64;
            let rc = m as f64 / r.len() as f64;
            let f = 10.0 * p * rc / (rc + 9.0 * p);
            let frag = chunks as f64 / m as f64;
            best = best.max(f * (1.0 - 0.5 * frag * frag * frag));
        }
        total += best;
    }
    total / corpus.len() as f64
}

/// CIDEr: per order n = 1..4, cosine between TF-IDF vectors of candidate and
/// each reference; idf = ln(#images) − ln(max(1, df)), df counted over the
/// images' reference sets; 10 × mean over orders and references, then mean
/// over images.
pub fn cider(corpus: &Corpus) -> f64 {
    let images = corpus.len() as f64;
    let mut df: BTreeMap<String, f64> = BTreeMap::new();
    for (_, refs) in corpus {
        let mut seen = BTreeSet::new();
        for r in refs {
            for n in 1..=4 {
                seen.extend(grams(r, n).into_iter().map(|g| format!("{n}|{g}")));
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0.0) += 1.0;
        }
    }
    let tfidf = |tokens: &[String], n: usize| -> BTreeMap<String, f64> {
        histogram(grams(tokens, n))
            .into_iter()
            .map(|(g, k)| {
                let d = df.get(&format!("{n}|{g}")).copied().unwrap_or(0.0).max(1.0);
                (g, k as f64 * (images.ln() - d.ln()))
            })
            .collect()
    };
    let norm = |v: &BTreeMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let mut total = 0.0;
    for (cand, refs) in corpus {
        let mut s = 0.0;
        for r in refs {
            for n in 1..=4 {
                let (cv, rv) = (tfidf(cand, n), tfidf(r, n));
                let dot: f64 = cv.iter().map(|(g, w)| w * rv.get(g).copied().unwrap_or(0.0)).sum();
                let (a, b) = (norm(&cv), norm(&rv));
                if a > 0.0 && b > 0.0 {
                    s += dot / (a * b);
                }
            }
        }
        total += 10.0 * s / (4.0 * refs.len() as f64);
    }
    total / images
}
