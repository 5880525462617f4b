//! METEOR without synonym tables: words match when equal or when their
//! suffix-stripped stems are equal. Among alignments with the most matches,
//! the one with the fewest chunks is used.

use std::collections::HashMap;

use super::EvalPair;

const ALPHA: f64 = 0.9;
const GAMMA: f64 = 0.5;
const BETA: f64 = 3.0;

/// Strips one of `ing`, `ed`, `es`, `s` when at least three characters remain.
pub fn stem(word: &str) -> &str {
    for suffix in ["ing", "ed", "es", "s"] {
        if let Some(base) = word.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return base;
            }
        }
    }
    word
}

struct Aligner<'a> {
    cand: Vec<&'a str>,
    /// For each candidate position, eligible reference positions and their bit.
    options: Vec<Vec<(usize, u32)>>,
    memo: HashMap<(usize, u64, usize), (usize, usize)>,
}

const NONE: usize = usize::MAX;

impl Aligner<'_> {
    /// Best (matches, adjacencies) from candidate position `i` onwards.
    fn best(&mut self, i: usize, used: u64, prev: usize) -> (usize, usize) {
        if i == self.cand.len() {
            return (0, 0);
        }
        if let Some(&v) = self.memo.get(&(i, used, prev)) {
            return v;
        }
        let mut best = self.best(i + 1, used, NONE);
        for k in 0..self.options[i].len() {
            let (j, bit) = self.options[i][k];
            if used & (1 << bit) != 0 {
                continue;
            }
            let (m, a) = self.best(i + 1, used | (1 << bit), j);
            let adj = usize::from(prev != NONE && j == prev + 1);
            let cand = (m + 1, a + adj);
            if cand > best {
                best = cand;
            }
        }
        self.memo.insert((i, used, prev), best);
        best
    }
}

/// `(matches, chunks)` of the best alignment between candidate and reference.
pub fn align(candidate: &[String], reference: &[String]) -> (usize, usize) {
    let cand: Vec<&str> = candidate.iter().map(|w| stem(w)).collect();
    let refs: Vec<&str> = reference.iter().map(|w| stem(w)).collect();
    let mut bits: HashMap<usize, u32> = HashMap::new();
    for (j, r) in refs.iter().enumerate() {
        if cand.contains(r) {
            let next = bits.len() as u32;
            bits.insert(j, next);
        }
    }
    if bits.len() > 64 {
        return greedy_align(&cand, &refs);
    }
    let options = cand
        .iter()
        .map(|c| {
            refs.iter()
                .enumerate()
                .filter(|(_, r)| *r == c)
                .map(|(j, _)| (j, bits[&j]))
                .collect()
        })
        .collect();
    let mut aligner = Aligner {
        cand,
        options,
        memo: HashMap::new(),
    };
    let (m, adj) = aligner.best(0, 0, NONE);
    (m, m - adj)
}

/// Left-to-right first-free matching, used only for very long references.
fn greedy_align(cand: &[&str], refs: &[&str]) -> (usize, usize) {
    let mut used = vec![false; refs.len()];
    let (mut m, mut chunks, mut prev) = (0, 0, NONE);
    for c in cand {
        let hit = (0..refs.len())
            .filter(|&j| !used[j] && refs[j] == *c)
            .min_by_key(|&j| (prev == NONE || j != prev + 1, j));
        match hit {
            Some(j) => {
                used[j] = true;
                m += 1;
                if prev == NONE || j != prev + 1 {
                    chunks += 1;
                }
                prev = j;
            }
            None => prev = NONE,
        }
    }
    (m, chunks)
}

fn score_against(candidate: &[String], reference: &[String]) -> f64 {
    let (m, chunks) = align(candidate, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let penalty = GAMMA * (chunks as f64 / m as f64).powf(BETA);
    f_mean * (1.0 - penalty)
}

/// Best score over references, in `[0, 1]`.
pub fn meteor_sentence(candidate: &[String], references: &[Vec<String>]) -> f64 {
    references.iter().map(|r| score_against(candidate, r)).fold(0.0, f64::max)
}

/// Mean sentence METEOR-lite ×100.
pub fn meteor_lite(pairs: &[EvalPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    100.0 * pairs.iter().map(|p| meteor_sentence(&p.candidate, &p.references)).sum::<f64>() / pairs.len() as f64
}
