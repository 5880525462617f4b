//! Exact invariants: parameter freezing, loss identities, vocabulary growth
//! and logit preservation under decoder expansion.

use std::collections::BTreeSet;

use capcl::model::{Feature, ModelConfig};
use capcl::strategies::{apply_variant_mask, StrategyConfig, Trainer, Variant};
use capcl::{ModelStateF64, Vocabulary};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{mini_batch, mini_config};

fn words(prefix: &str, range: std::ops::Range<usize>) -> BTreeSet<String> {
    range.map(|i| format!("{prefix}{i}")).collect()
}

/// A model over 6 tokens expanded to a vocabulary of 8 (version 1 → 2).
fn expanded(seed: u64) -> (ModelStateF64, ModelStateF64, Vocabulary) {
    let v1 = Vocabulary::new().accumulate(&words("w", 0..2));
    let v2 = v1.accumulate(&words("w", 0..4));
    let before = ModelStateF64::new(mini_config(), v1.len(), v1.version(), seed);
    let after = before.expand_decoder(&v2, seed + 1).expect("expansion");
    (before, after, v2)
}

fn remap(batch: &mut capcl::strategies::CaptionBatch<f64>, vocab: usize, rng: &mut ChaCha8Rng) {
    for seq in batch.targets.iter_mut() {
        for t in seq.iter_mut().filter(|t| **t >= 4) {
            *t = rng.gen_range(4..vocab);
        }
    }
}

fn train(state: ModelStateF64, variant: Variant, steps: u64) -> ModelStateF64 {
    let cfg = StrategyConfig {
        learning_rate: 1e-2,
        ..StrategyConfig::new(variant)
    };
    let vocab = state.vocab_size();
    let mut t = Trainer::new(state, cfg, None).expect("trainer");
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for s in 0..steps {
        let mut b = mini_batch(s, 3, false);
        remap(&mut b, vocab, &mut rng);
        t.step(&b).expect("step");
    }
    t.state
}

pub const FREEZE_STEPS: u64 = 50;

pub fn check_freezing() -> Result<String, String> {
    let (_, grown, _) = expanded(3);
    let mut problems = Vec::new();

    let mut e = grown.clone();
    apply_variant_mask(&mut e, Variant::FreezeEncoder);
    let after = train(e, Variant::FreezeEncoder, FREEZE_STEPS);
    for (id, p) in after.params.iter() {
        if id.is_encoder() && p != &grown.params[id] {
            problems.push(format!("E_F changed encoder {}", id.name()));
        }
    }

    let mut d = grown.clone();
    apply_variant_mask(&mut d, Variant::FreezeDecoder);
    let after = train(d, Variant::FreezeDecoder, FREEZE_STEPS);
    let mut frozen_elems = 0;
    let mut expanded_changed = 0;
    for (id, p) in after.params.iter() {
        let was = &grown.params[id];
        if id.is_encoder() {
            continue;
        }
        let keep = if id.is_vocab_sized() {
            grown.prev_vocab_size * p.len() / grown.vocab_size()
        } else {
            p.len()
        };
        if p.data()[..keep] != was.data()[..keep] {
            problems.push(format!("D_F changed pre-expansion part of {}", id.name()));
        }
        frozen_elems += keep;
        let fresh_changed = p.data()[keep..].iter().zip(&was.data()[keep..]).filter(|(a, b)| a != b).count();
        if id.is_vocab_sized() && fresh_changed == 0 {
            problems.push(format!("D_F left expanded rows of {} untouched", id.name()));
        }
        expanded_changed += fresh_changed;
    }
    if problems.is_empty() {
        Ok(format!(
            "{FREEZE_STEPS} steps; {frozen_elems} frozen decoder values identical, {expanded_changed} expanded values moved"
        ))
    } else {
        Err(problems.join("; "))
    }
}

pub fn check_loss_identities() -> Result<String, String> {
    let (_, grown, _) = expanded(5);
    let vocab = grown.vocab_size();
    let make = |variant, beta| StrategyConfig {
        beta,
        learning_rate: 1e-2,
        ..StrategyConfig::new(variant)
    };
    let mut f = Trainer::new(grown.clone(), make(Variant::FineTune, 1.0), None).expect("trainer");
    let mut p = Trainer::new(grown.clone(), make(Variant::PseudoLabel, 0.0), None).expect("trainer");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for s in 0..20 {
        let mut b = mini_batch(100 + s, 3, true);
        remap(&mut b, vocab, &mut rng);
        let lf = f.step(&b).expect("step");
        let lp = p.step(&b).expect("step");
        if lf.total.to_bits() != lp.total.to_bits() {
            return Err(format!("step {s}: F loss {} vs P(beta=0) loss {}", lf.total, lp.total));
        }
    }
    if f.state.params != p.state.params {
        return Err("P with beta = 0 diverged from F after 20 steps".into());
    }

    let teacher = grown.clone().frozen();
    let student = grown.clone();
    let fd = Trainer::new(student, StrategyConfig::new(Variant::FeatureDistill), Some(teacher)).expect("trainer");
    let (loss, _) = fd.batch_gradients(&mini_batch(7, 4, false)).expect("loss");
    if loss.distill != 0.0 {
        return Err(format!("distillation loss with copied encoder is {}", loss.distill));
    }
    Ok("P(beta=0) == F over 20 steps bit-exactly; copied student has distillation loss 0".into())
}

pub const VOCAB_CASES: usize = 1000;

fn random_set(rng: &mut ChaCha8Rng, pool: &[String], max: usize) -> BTreeSet<String> {
    let n = rng.gen_range(0..=max);
    pool.choose_multiple(rng, n).cloned().collect()
}

pub fn check_vocabulary() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pool: Vec<String> = (0..120).map(|i| format!("t{i}")).collect();
    for case in 0..VOCAB_CASES {
        let a = random_set(&mut rng, &pool, 60);
        let b = random_set(&mut rng, &pool, 60);
        let old = Vocabulary::new().accumulate(&a);
        let new = old.accumulate(&b);
        let shared = a.intersection(&b).count();
        if new.len() != old.len() + b.len() - shared {
            return Err(format!("case {case}: size {} != {} + {} - {shared}", new.len(), old.len(), b.len()));
        }
        let union: BTreeSet<String> = a.union(&b).cloned().collect();
        if new.words() != union {
            return Err(format!("case {case}: word set differs from the set union"));
        }
    }
    let mut chain = Vocabulary::new();
    let mut history: Vec<Vocabulary> = Vec::new();
    for step in 0..10 {
        let next = chain.accumulate(&random_set(&mut rng, &pool, 30));
        if next.version() != chain.version() + 1 {
            return Err(format!("accumulation {step} did not bump the version by one"));
        }
        history.push(chain);
        chain = next;
        for earlier in &history {
            for (i, t) in earlier.tokens().iter().enumerate() {
                if chain.index_of(t) != Some(i) {
                    return Err(format!("token {t:?} moved from index {i} after accumulation {step}"));
                }
            }
        }
    }
    Ok(format!("{VOCAB_CASES} random set pairs; 10 chained accumulations kept every index"))
}

pub const EXPANSION_PROBES: usize = 100;

pub fn check_expansion() -> Result<String, String> {
    let config = ModelConfig {
        embed_dim: 6,
        hidden_dim: 10,
        ..mini_config()
    };
    let v1 = Vocabulary::new().accumulate(&words("a", 0..5));
    let v2 = v1.accumulate(&words("b", 0..7));
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for probe in 0..EXPANSION_PROBES {
        let before = ModelStateF64::new(config.clone(), v1.len(), v1.version(), probe as u64);
        let after = before.expand_decoder(&v2, rng.gen()).expect("expansion");
        let feature = Feature {
            values: (0..config.feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let mut prefix = vec![capcl::vocab::START];
        prefix.extend((0..rng.gen_range(0..6)).map(|_| rng.gen_range(4..v1.len())));
        let old = before.step_logits(&feature, &prefix).expect("logits");
        let new = after.step_logits(&feature, &prefix).expect("logits");
        for (step, (o, n)) in old.iter().zip(&new).enumerate() {
            if o[..] != n[..v1.len()] {
                return Err(format!("probe {probe}, step {step}: old-token logits changed"));
            }
        }
    }
    Ok(format!("{EXPANSION_PROBES} probes, old-token logits identical"))
}
