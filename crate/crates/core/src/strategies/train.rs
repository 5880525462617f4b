use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::losses::{ce_logit_grad, loss_ce, loss_distill};
use super::optim::Adam;
use super::pseudo::PseudoLabels;
use super::{StrategyConfig, Variant};
use crate::dataio::{DataSource, ImageId, TaskSpec};
use crate::error::{Error, Result};
use crate::metrics::{cider, generate_captions, pairs_for};
use crate::model::{Feature, ModelState, ParamId, Parameters, TrainabilityMask};
use crate::scalar::{cast_slice, Scalar};
use crate::vocab::{Vocabulary, PAD};

/// Images with their teacher-forcing targets, each `[start, …, end]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptionBatch<T> {
    pub image_ids: Vec<ImageId>,
    pub images: Vec<Vec<T>>,
    pub targets: Vec<Vec<usize>>,
    /// Present only for the pseudo-labeling strategy.
    pub pseudo_targets: Option<Vec<Vec<usize>>>,
}

impl<T: Scalar> CaptionBatch<T> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Targets right-padded with pad to a common length, plus true lengths.
    pub fn padded_targets(&self) -> (Vec<Vec<usize>>, Vec<usize>) {
        pad(&self.targets)
    }

    fn check(&self, vocab_size: usize) -> Result<()> {
        if self.is_empty() || self.targets.len() != self.len() {
            return Err(Error::Contract("batch needs one target per image".into()));
        }
        let seqs = self.targets.iter().chain(self.pseudo_targets.iter().flatten());
        if seqs.flatten().any(|&t| t >= vocab_size) {
            return Err(Error::Contract(format!("batch token outside vocabulary of {vocab_size}")));
        }
        if self.pseudo_targets.as_ref().is_some_and(|p| p.len() != self.len()) {
            return Err(Error::Contract("batch needs one pseudo target per image".into()));
        }
        Ok(())
    }
}

fn pad(seqs: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let lens: Vec<usize> = seqs.iter().map(Vec::len).collect();
    let width = lens.iter().copied().max().unwrap_or(0);
    let padded = seqs
        .iter()
        .map(|s| {
            let mut p = s.clone();
            p.resize(width, PAD);
            p
        })
        .collect();
    (padded, lens)
}

/// Loss terms of one optimizer step (batch means).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLoss {
    pub ce: f64,
    pub pseudo: f64,
    pub distill: f64,
    pub total: f64,
}

/// Sets the mask for a variant: E_F freezes the encoder, D_F freezes the
/// decoder except rows added by the latest expansion, the others train
/// everything.
pub fn apply_variant_mask<T: Scalar>(state: &mut ModelState<T>, variant: Variant) {
    let mut mask = TrainabilityMask::all_trainable();
    match variant {
        Variant::FreezeEncoder => {
            for (id, t) in state.params.iter().filter(|(id, _)| id.is_encoder()) {
                mask.set_frozen_prefix(id, t.len());
            }
        }
        Variant::FreezeDecoder => {
            let old = state.prev_vocab_size;
            for (id, t) in state.params.iter().filter(|(id, _)| !id.is_encoder()) {
                let frozen = if id.is_vocab_sized() {
                    old * t.len() / state.vocab_size()
                } else {
                    t.len()
                };
                mask.set_frozen_prefix(id, frozen);
            }
        }
        Variant::FineTune | Variant::PseudoLabel | Variant::FeatureDistill => {}
    }
    state.mask = mask;
}

fn encoder_frozen(mask: &TrainabilityMask, params: &Parameters<impl Scalar>) -> bool {
    params
        .iter()
        .filter(|(id, _)| id.is_encoder())
        .all(|(id, t)| mask.frozen_prefix(id) >= t.len())
}

/// Owns the student, its optimizer and (for FD) the frozen teacher.
pub struct Trainer<T> {
    pub state: ModelState<T>,
    pub cfg: StrategyConfig,
    teacher: Option<ModelState<T>>,
    optimizer: Adam<T>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(state: ModelState<T>, cfg: StrategyConfig, teacher: Option<ModelState<T>>) -> Result<Self> {
        cfg.validate()?;
        if cfg.variant == Variant::FeatureDistill && teacher.is_none() {
            return Err(Error::Config("feature distillation needs a teacher model".into()));
        }
        if let Some(t) = &teacher {
            if t.config.feature_dim != state.config.feature_dim {
                return Err(Error::Contract("teacher and student feature sizes differ".into()));
            }
        }
        let optimizer = Adam::new(&state.params, cfg.learning_rate);
        Ok(Self {
            state,
            cfg,
            teacher,
            optimizer,
        })
    }

    /// Loss and gradients w.r.t. every parameter (frozen ones included, except
    /// that a fully frozen encoder is skipped).
    pub fn batch_gradients(&self, batch: &CaptionBatch<T>) -> Result<(StepLoss, Parameters<T>)> {
        let state = &self.state;
        batch.check(state.vocab_size())?;
        let variant = self.cfg.variant;
        let beta = T::of(self.cfg.beta);
        let lambda = T::of(self.cfg.lambda);
        let use_pseudo = variant == Variant::PseudoLabel && self.cfg.beta != 0.0;
        if variant == Variant::PseudoLabel && batch.pseudo_targets.is_none() {
            return Err(Error::Config("pseudo-labeling batch has no pseudo targets".into()));
        }
        let skip_encoder = encoder_frozen(&state.mask, &state.params);
        let n = batch.len();
        let scale = T::one() / T::of(n as f64);
        let mut grads = Parameters::zeros_like(&state.params);
        let mut probs = Vec::with_capacity(n);
        let mut pseudo_probs = Vec::new();
        let mut students = Vec::new();
        let mut teachers = Vec::new();
        for (b, image) in batch.images.iter().enumerate() {
            let enc = state.encoder_forward(image)?;
            let target = &batch.targets[b];
            let dec = state.decoder_forward(&enc.feature, target)?;
            let mut dfeature = state.decoder_backward(&dec, &ce_logit_grad(&dec.probs, target, scale), &mut grads);
            probs.push(dec.probs);
            if use_pseudo {
                let pseudo = &batch.pseudo_targets.as_ref().expect("checked")[b];
                let dec = state.decoder_forward(&enc.feature, pseudo)?;
                let d = state.decoder_backward(&dec, &ce_logit_grad(&dec.probs, pseudo, beta * scale), &mut grads);
                for (a, x) in dfeature.iter_mut().zip(d) {
                    *a += x;
                }
                pseudo_probs.push(dec.probs);
            }
            if variant == Variant::FeatureDistill {
                let teacher = self.teacher.as_ref().expect("checked in new").encode(image)?;
                let k = T::of(2.0) * lambda * scale;
                for ((a, &s), &t) in dfeature.iter_mut().zip(&enc.feature).zip(&teacher.values) {
                    *a += k * (s - t);
                }
                students.push(Feature {
                    values: enc.feature.clone(),
                });
                teachers.push(teacher);
            }
            if !skip_encoder {
                state.encoder_backward(&enc, &dfeature, &mut grads);
            }
        }
        let ce = loss_ce(&probs, &batch.targets)?;
        let mut loss = StepLoss {
            ce: ce.to_f64_lossless(),
            ..StepLoss::default()
        };
        let mut total = ce;
        if use_pseudo {
            let p = beta * loss_ce(&pseudo_probs, batch.pseudo_targets.as_ref().expect("checked"))?;
            loss.pseudo = p.to_f64_lossless();
            total += p;
        }
        if variant == Variant::FeatureDistill {
            let d = loss_distill(&teachers, &students, lambda)?;
            loss.distill = d.to_f64_lossless();
            total += d;
        }
        loss.total = total.to_f64_lossless();
        if !loss.total.is_finite() {
            return Err(Error::Validation(format!("non-finite training loss {}", loss.total)));
        }
        Ok((loss, grads))
    }

    /// One optimizer step on `batch`.
    pub fn step(&mut self, batch: &CaptionBatch<T>) -> Result<StepLoss> {
        let (loss, grads) = self.batch_gradients(batch)?;
        self.optimizer.update(&mut self.state, &grads, self.cfg.clip_norm);
        Ok(loss)
    }
}

/// Inputs shared by every training stage of a run.
pub struct TrainContext<'a> {
    pub data: &'a dyn DataSource,
    pub vocab: &'a Vocabulary,
    /// Required by the pseudo-labeling strategy.
    pub pseudo: Option<&'a PseudoLabels>,
    pub rng: &'a mut ChaCha8Rng,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub state: ModelState<T>,
    /// Mean batch loss per completed epoch.
    pub epoch_losses: Vec<f64>,
    /// Validation CIDEr after each epoch (empty without early stopping).
    pub val_cider: Vec<f64>,
    /// Epoch whose weights were kept, when validation ran.
    pub best_epoch: Option<usize>,
}

/// Builds the variant's starting point: FD draws a fresh student (encoder
/// always, decoder when `fd_reinit_decoder`), the others continue from
/// `state`.
fn initial_state<T: Scalar>(state: &ModelState<T>, cfg: &StrategyConfig, rng: &mut ChaCha8Rng) -> ModelState<T> {
    let mut start = if cfg.variant == Variant::FeatureDistill {
        let fresh = ModelState::new(state.config.clone(), state.vocab_size(), state.vocab_version, rng.gen());
        if cfg.fd_reinit_decoder {
            fresh
        } else {
            let mut kept = state.clone();
            for id in ParamId::ALL.into_iter().filter(|id| id.is_encoder()) {
                kept.params[id] = fresh.params[id].clone();
            }
            kept
        }
    } else {
        state.clone()
    };
    start.prev_vocab_size = state.prev_vocab_size;
    apply_variant_mask(&mut start, cfg.variant);
    start
}

fn val_cider<T: Scalar>(state: &ModelState<T>, ids: &[ImageId], ctx: &TrainContext<'_>, max_len: usize) -> Result<f64> {
    let captions = generate_captions(state, ids, ctx.vocab, ctx.data, max_len)?;
    let pairs = pairs_for(&captions, ctx.data)?;
    let refs: Vec<_> = pairs.iter().map(|p| p.references.clone()).collect();
    Ok(cider(&pairs, &refs))
}

/// Trains `state` on `task` under `cfg.variant`. The vocabulary in `ctx` must
/// already include the task's words and `state` must be expanded to it.
/// Each epoch visits every training image once with one of its reference
/// captions drawn at random. With early stopping the weights of the best
/// validation epoch are returned; the patience counter starts once the
/// validation CIDEr has been positive, so a model that has not yet matched a
/// single n-gram is not treated as converged.
pub fn train_task<T: Scalar>(
    state: &ModelState<T>,
    task: &TaskSpec,
    cfg: &StrategyConfig,
    teacher: Option<&ModelState<T>>,
    ctx: &mut TrainContext<'_>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    state.check_vocab(ctx.vocab)?;
    if cfg.variant == Variant::FeatureDistill && teacher.is_none() {
        return Err(Error::Config("feature distillation needs a teacher model".into()));
    }
    let pseudo = match (cfg.variant, ctx.pseudo) {
        (Variant::PseudoLabel, None) => {
            return Err(Error::Config("pseudo-labeling needs cached pseudo labels".into()));
        }
        (Variant::PseudoLabel, Some(p)) => Some(p),
        _ => None,
    };
    if task.train.is_empty() {
        return Err(Error::Validation(format!("task {} has no training images", task.task_id)));
    }

    let start = initial_state(state, cfg, ctx.rng);
    let mut trainer = Trainer::new(start, cfg.clone(), teacher.map(|t| t.clone().frozen()))?;

    let mut samples = Vec::with_capacity(task.train.len());
    for &id in &task.train {
        let image: Vec<T> = cast_slice(&ctx.data.image(id)?);
        let captions: Vec<Vec<usize>> = ctx.data.captions(id)?.iter().map(|c| ctx.vocab.encode_caption(c)).collect();
        if captions.is_empty() {
            return Err(Error::Validation(format!("image {id} has no captions")));
        }
        let pseudo_target = match pseudo {
            Some(p) => Some(
                p.get(id)
                    .ok_or_else(|| Error::Config(format!("no pseudo label for image {id}")))?
                    .to_vec(),
            ),
            None => None,
        };
        samples.push((id, image, captions, pseudo_target));
    }

    let validate = cfg.patience.is_some() && !task.val.is_empty();
    let mut outcome = TrainOutcome {
        state: trainer.state.clone(),
        epoch_losses: Vec::new(),
        val_cider: Vec::new(),
        best_epoch: None,
    };
    let mut best = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(ctx.rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = CaptionBatch {
                image_ids: Vec::with_capacity(chunk.len()),
                images: Vec::with_capacity(chunk.len()),
                targets: Vec::with_capacity(chunk.len()),
                pseudo_targets: pseudo.map(|_| Vec::with_capacity(chunk.len())),
            };
            for &i in chunk {
                let (id, image, captions, pseudo_target) = &samples[i];
                batch.image_ids.push(*id);
                batch.images.push(image.clone());
                batch.targets.push(captions[ctx.rng.gen_range(0..captions.len())].clone());
                if let (Some(p), Some(t)) = (batch.pseudo_targets.as_mut(), pseudo_target) {
                    p.push(t.clone());
                }
            }
            losses.push(trainer.step(&batch)?.total);
        }
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        outcome.epoch_losses.push(mean);
        if validate {
            let score = val_cider(&trainer.state, &task.val, ctx, cfg.max_len)?;
            outcome.val_cider.push(score);
            log::debug!("{} epoch {epoch}: loss {mean:.4}, val CIDEr {score:.3}", cfg.variant);
            if score > best {
                best = score;
                since_best = 0;
                outcome.best_epoch = Some(epoch);
                outcome.state = trainer.state.clone();
            } else if best > 0.0 {
                since_best += 1;
                if since_best >= cfg.patience.expect("validate implies patience") {
                    break;
                }
            }
        } else {
            log::debug!("{} epoch {epoch}: loss {mean:.4}", cfg.variant);
            outcome.state = trainer.state.clone();
        }
    }
    Ok(outcome)
}
