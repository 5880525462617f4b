//! Central finite differences against the trainer's analytic gradients on a
//! miniature double-precision model.

use capcl::model::{ModelConfig, ParamId};
use capcl::strategies::{CaptionBatch, StrategyConfig, Trainer, Variant};
use capcl::vocab::{END, START};
use capcl::ModelStateF64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VOCAB: usize = 6;
/// Largest step of the five-point central stencil. Its O(h⁴) truncation
/// error allows a step large enough to keep rounding error near 1e-12, so
/// even gradients of order 1e-7 are resolved to the tolerance.
pub const STEP: f64 = 1e-3;
/// The step shrinks tenfold until no ReLU switches inside the stencil.
const MIN_STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
/// Below this magnitude both gradients count as zero.
const ABS_FLOOR: f64 = 1e-7;

pub fn mini_config() -> ModelConfig {
    ModelConfig {
        channels: 3,
        height: 6,
        width: 6,
        conv1_channels: 2,
        conv2_channels: 3,
        feature_dim: 5,
        embed_dim: 4,
        hidden_dim: 8,
    }
}

fn sequence(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut s = vec![START];
    s.extend((0..rng.gen_range(1..4)).map(|_| rng.gen_range(4..VOCAB)));
    s.push(END);
    s
}

pub fn mini_batch(seed: u64, n: usize, pseudo: bool) -> CaptionBatch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = mini_config().image_len();
    CaptionBatch {
        image_ids: (0..n as u64).collect(),
        images: (0..n).map(|_| (0..len).map(|_| rng.gen_range(0.0..1.0)).collect()).collect(),
        targets: (0..n).map(|_| sequence(&mut rng)).collect(),
        pseudo_targets: pseudo.then(|| (0..n).map(|_| sequence(&mut rng)).collect()),
    }
}

/// 3×3, stride-2, padding-1 convolution before the ReLU, channels first.
fn conv_pre(w: &[f64], b: &[f64], input: &[f64], in_c: usize, side: usize) -> Vec<f64> {
    let out_c = b.len();
    let out = (side - 1) / 2 + 1;
    let mut pre = vec![0.0; out_c * out * out];
    for o in 0..out_c {
        for y in 0..out {
            for x in 0..out {
                let mut acc = b[o];
                for c in 0..in_c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (iy, ix) = ((2 * y + ky) as isize - 1, (2 * x + kx) as isize - 1);
                            if iy < 0 || ix < 0 || iy >= side as isize || ix >= side as isize {
                                continue;
                            }
                            acc += w[((o * in_c + c) * 3 + ky) * 3 + kx] * input[(c * side + iy as usize) * side + ix as usize];
                        }
                    }
                }
                pre[(o * out + y) * out + x] = acc;
            }
        }
    }
    pre
}

/// Which encoder ReLUs are active over the batch. Finite differences are
/// only meaningful when this pattern is constant across the stencil.
fn relu_pattern(s: &ModelStateF64, batch: &CaptionBatch<f64>) -> Vec<bool> {
    let c = &s.config;
    let p = &s.params;
    let mut pattern = Vec::new();
    for image in &batch.images {
        let pre1 = conv_pre(p[ParamId::Conv1W].data(), p[ParamId::Conv1B].data(), image, c.channels, c.height);
        let act1: Vec<f64> = pre1.iter().map(|v| v.max(0.0)).collect();
        let side1 = (c.height - 1) / 2 + 1;
        let pre2 = conv_pre(p[ParamId::Conv2W].data(), p[ParamId::Conv2B].data(), &act1, c.conv1_channels, side1);
        pattern.extend(pre1.iter().chain(&pre2).map(|v| *v > 0.0));
    }
    pattern
}

/// Fresh weights with every bias drawn away from zero, so that no
/// pre-activation starts exactly on a ReLU kink.
pub fn mini_state(seed: u64) -> ModelStateF64 {
    let mut s = ModelStateF64::new(mini_config(), VOCAB, 1, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for id in [
        ParamId::Conv1B,
        ParamId::Conv2B,
        ParamId::FcB,
        ParamId::FeatProjB,
        ParamId::BIh,
        ParamId::BHh,
        ParamId::OutB,
    ] {
        for v in s.params[id].data_mut() {
            *v = rng.gen_range(-0.3..0.3);
        }
    }
    s
}

/// Worst relative error over every parameter element, with its location.
pub struct GradReport {
    pub checked: usize,
    pub worst: f64,
    pub worst_at: String,
}

/// Checks the total loss of `variant` (plain captioning, pseudo-label or
/// distillation objective).
pub fn check_variant(variant: Variant, seed: u64) -> GradReport {
    let state = mini_state(seed);
    let teacher = (variant == Variant::FeatureDistill).then(|| mini_state(seed + 100));
    let cfg = StrategyConfig {
        beta: 0.7,
        lambda: 1.3,
        ..StrategyConfig::new(variant)
    };
    let batch = mini_batch(seed, 3, variant == Variant::PseudoLabel);
    let trainer = Trainer::new(state.clone(), cfg.clone(), teacher.clone()).expect("trainer");
    let (_, grads) = trainer.batch_gradients(&batch).expect("gradients");

    let loss_at = |s: &ModelStateF64| {
        let t = Trainer::new(s.clone(), cfg.clone(), teacher.clone()).expect("trainer");
        t.batch_gradients(&batch).expect("loss").0.total
    };
    let mut report = GradReport {
        checked: 0,
        worst: 0.0,
        worst_at: String::new(),
    };
    for id in ParamId::ALL {
        for i in 0..state.params[id].len() {
            let shifted = |offset: f64| {
                let mut s = state.clone();
                s.params[id].data_mut()[i] += offset;
                s
            };
            let pattern = relu_pattern(&state, &batch);
            let mut h = STEP;
            while h > MIN_STEP
                && [-2.0, -1.0, 1.0, 2.0]
                    .iter()
                    .any(|k| relu_pattern(&shifted(k * h), &batch) != pattern)
            {
                h /= 10.0;
            }
            let at = |offset: f64| loss_at(&shifted(offset));
            let numeric = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
            let analytic = grads[id].data()[i];
            let scale = analytic.abs().max(numeric.abs());
            let rel = if scale < ABS_FLOOR { 0.0 } else { (analytic - numeric).abs() / scale };
            report.checked += 1;
            if rel > report.worst || rel.is_nan() {
                report.worst = rel;
                report.worst_at = format!("{}[{i}]: analytic {analytic:e}, numeric {numeric:e}", id.name());
            }
        }
    }
    report
}

pub fn check_all() -> Result<String, String> {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut worst = 0.0f64;
    for (variant, label) in [
        (Variant::FineTune, "captioning CE"),
        (Variant::PseudoLabel, "CE + pseudo-label CE"),
        (Variant::FeatureDistill, "CE + feature distillation"),
    ] {
        for seed in [1, 2] {
            let r = check_variant(variant, seed);
            ok &= r.worst < REL_TOL;
            worst = worst.max(r.worst);
            lines.push(format!("{label} seed {seed}: {} params, worst rel {:.2e} at {}", r.checked, r.worst, r.worst_at));
        }
    }
    if ok {
        Ok(format!("{} objective/seed checks, worst relative error {worst:.2e} < {REL_TOL:e}", lines.len()))
    } else {
        Err(lines.join("; "))
    }
}
