//! Hand-built evaluation corpora and the metric comparison against the
//! brute-force oracles.

use capcl::metrics::{corpus_bleu, cider_raw, meteor_lite, rouge_l, EvalPair};

use super::oracle::{self, Corpus};

pub const METRIC_TOL: f64 = 1e-6;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn corpus(entries: &[(&str, &[&str])]) -> Corpus {
    entries
        .iter()
        .map(|(c, refs)| (toks(c), refs.iter().map(|r| toks(r)).collect()))
        .collect()
}

/// (name, corpus) pairs covering clipping, brevity, multiple references,
/// stems, reordering and disjoint vocabularies.
pub fn corpora() -> Vec<(&'static str, Corpus)> {
    vec![
        ("clipped unigram precision", corpus(&[("the the the", &["the cat"])])),
        ("lcs with gaps", corpus(&[("the cat sat", &["the cat on the mat"])])),
        (
            "exact matches",
            corpus(&[
                ("a small red square on the left", &["a small red square on the left"]),
                ("a large blue circle at the top", &["a large blue circle at the top"]),
            ]),
        ),
        (
            "short candidate brevity",
            corpus(&[
                ("a red square", &["a red square in the middle", "there is a red square"]),
                ("blue circle", &["a blue circle at the top", "a big blue circle"]),
            ]),
        ),
        (
            "stems and plurals",
            corpus(&[
                ("two dogs playing in parks", &["a dog plays in the park", "dogs played in a park"]),
                ("the boxes jumped", &["a box jumping over boxes"]),
                ("cats sitting", &["a cat sits on the mat"]),
            ]),
        ),
        (
            "reordered words",
            corpus(&[
                ("on the mat sat the cat", &["the cat sat on the mat"]),
                ("left square red small a", &["a small red square on the left"]),
            ]),
        ),
        (
            "disjoint vocabulary",
            corpus(&[("x y z", &["red square"]), ("q w", &["blue ring"]), ("m", &["green star"])]),
        ),
        (
            "repeated words on both sides",
            corpus(&[
                ("the dog and the dog and the cat", &["the dog and the cat and the dog", "a dog and a cat"]),
                ("red red red ring", &["a red ring", "red ring red ring"]),
            ]),
        ),
        (
            "long matching runs",
            corpus(&[
                ("a man riding a wave on top of a surfboard", &["a man riding a wave on a surfboard", "a surfer riding a big wave"]),
                ("a group of people standing in a kitchen", &["people standing around in a kitchen", "a group of people in a kitchen"]),
                ("a plate of food with broccoli", &["a plate topped with food and broccoli"]),
            ]),
        ),
        (
            "synthetic scene captions",
            corpus(&[
                ("a small red square on the left", &["a small red square on the left", "a little red box at the left side", "red square small left"]),
                ("a large blue circle at the top", &["a big blue circle near the top", "a large blue circle at the top"]),
                ("a green triangle in the middle", &["a green triangle in the center", "a small green triangle"]),
                ("a small red square on the left", &["a small red ring on the left"]),
            ]),
        ),
        (
            "shared references across images",
            corpus(&[
                ("a cat on a mat", &["a cat on a mat", "the cat is on the mat"]),
                ("a dog on a mat", &["a cat on a mat", "a dog lies on a rug"]),
                ("a cat on a rug", &["a dog lies on a rug"]),
            ]),
        ),
        (
            "single word candidates",
            corpus(&[("cat", &["cat"]), ("dog", &["a dog"]), ("bird", &["birds flying"])]),
        ),
    ]
}

/// `(library, oracle)` for BLEU-1, BLEU-4, ROUGE-L, CIDEr and METEOR on the
/// unscaled range.
pub fn metric_pairs(c: &Corpus) -> Vec<(&'static str, f64, f64)> {
    let pairs: Vec<EvalPair> = c
        .iter()
        .map(|(cand, refs)| EvalPair {
            candidate: cand.clone(),
            references: refs.clone(),
        })
        .collect();
    let refs: Vec<Vec<Vec<String>>> = c.iter().map(|(_, r)| r.clone()).collect();
    vec![
        ("BLEU-1", corpus_bleu(&pairs, 1).expect("order 1"), oracle::bleu(c, 1)),
        ("BLEU-4", corpus_bleu(&pairs, 4).expect("order 4"), oracle::bleu(c, 4)),
        ("ROUGE-L", rouge_l(&pairs) / 100.0, oracle::rouge_l(c)),
        ("CIDEr", cider_raw(&pairs, &refs), oracle::cider(c)),
        ("METEOR-lite", meteor_lite(&pairs) / 100.0, oracle::meteor(c)),
    ]
}

/// Every metric on every corpus; the error lists the mismatches.
pub fn check_all() -> Result<String, String> {
    let all = corpora();
    let mut bad = Vec::new();
    let mut compared = 0;
    for (name, c) in &all {
        for (metric, lib, oracle) in metric_pairs(c) {
            compared += 1;
            // Written so that NaN counts as a mismatch.
            let close = (lib - oracle).abs() <= METRIC_TOL;
            if !close {
                bad.push(format!("{name}/{metric}: {lib} vs oracle {oracle}"));
            }
        }
    }
    if bad.is_empty() {
        Ok(format!("{} corpora, {compared} comparisons", all.len()))
    } else {
        Err(bad.join("; "))
    }
}
