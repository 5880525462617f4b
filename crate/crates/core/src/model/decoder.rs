use super::encoder::split_two;
use super::{ModelState, ParamId, Parameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{affine, affine_backward};
use crate::vocab::{END, PAD, START};

#[derive(Clone, Debug)]
struct StepCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    r: Vec<T>,
    z: Vec<T>,
    n: Vec<T>,
    gh_n: Vec<T>,
    h: Vec<T>,
}

/// Teacher-forced decoder activations. Step 0 consumes the projected feature
/// and emits nothing; step `i + 1` consumes the embedding of `target[i]` plus
/// the projected feature and emits the distribution for `target[i + 1]`.
#[derive(Clone, Debug)]
pub struct DecoderCache<T> {
    feature: Vec<T>,
    tokens: Vec<usize>,
    steps: Vec<StepCache<T>>,
    pub logits: Vec<Vec<T>>,
    pub probs: Vec<Vec<T>>,
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl<T: Scalar> ModelState<T> {
    fn gru_step(&self, x: Vec<T>, h_prev: Vec<T>) -> StepCache<T> {
        let p = &self.params;
        let hd = self.config.hidden_dim;
        let mut gi = vec![T::zero(); 3 * hd];
        let mut gh = vec![T::zero(); 3 * hd];
        affine(&p[ParamId::WIh], &p[ParamId::BIh], &x, &mut gi);
        affine(&p[ParamId::WHh], &p[ParamId::BHh], &h_prev, &mut gh);
        let mut r = vec![T::zero(); hd];
        let mut z = vec![T::zero(); hd];
        let mut n = vec![T::zero(); hd];
        let mut h = vec![T::zero(); hd];
        for j in 0..hd {
            r[j] = (gi[j] + gh[j]).sigmoid();
            z[j] = (gi[hd + j] + gh[hd + j]).sigmoid();
            n[j] = (gi[2 * hd + j] + r[j] * gh[2 * hd + j]).tanh();
            h[j] = (T::one() - z[j]) * n[j] + z[j] * h_prev[j];
        }
        StepCache {
            x,
            h_prev,
            r,
            z,
            n,
            gh_n: gh[2 * hd..].to_vec(),
            h,
        }
    }

    fn project_feature(&self, feature: &[T]) -> Result<Vec<T>> {
        if feature.len() != self.config.feature_dim {
            return Err(Error::Contract(format!(
                "feature has {} values, decoder expects {}",
                feature.len(),
                self.config.feature_dim
            )));
        }
        let mut x = vec![T::zero(); self.config.embed_dim];
        affine(&self.params[ParamId::FeatProjW], &self.params[ParamId::FeatProjB], feature, &mut x);
        Ok(x)
    }

    fn token_input(&self, tok: usize, projected: &[T]) -> Vec<T> {
        self.params[ParamId::Embed]
            .row(tok)
            .iter()
            .zip(projected)
            .map(|(&e, &p)| e + p)
            .collect()
    }

    fn output_logits(&self, h: &[T]) -> Vec<T> {
        let mut logits = vec![T::zero(); self.vocab_size()];
        affine(&self.params[ParamId::OutW], &self.params[ParamId::OutB], h, &mut logits);
        logits
    }

    pub fn decoder_forward(&self, feature: &[T], target: &[usize]) -> Result<DecoderCache<T>> {
        let v = self.vocab_size();
        if let Some(&bad) = target.iter().find(|&&t| t >= v) {
            return Err(Error::Contract(format!("token index {bad} outside vocabulary of {v}")));
        }
        if target.is_empty() {
            return Err(Error::Contract("target sequence is empty".into()));
        }
        let x0 = self.project_feature(feature)?;
        let first = self.gru_step(x0.clone(), vec![T::zero(); self.config.hidden_dim]);
        let mut h = first.h.clone();
        let mut steps = Vec::with_capacity(target.len());
        steps.push(first);
        let tokens = target[..target.len() - 1].to_vec();
        let mut logits = Vec::with_capacity(tokens.len());
        let mut probs = Vec::with_capacity(tokens.len());
        for &tok in &tokens {
            let step = self.gru_step(self.token_input(tok, &x0), h);
            h = step.h.clone();
            let l = self.output_logits(&step.h);
            probs.push(softmax(&l));
            logits.push(l);
            steps.push(step);
        }
        Ok(DecoderCache {
            feature: feature.to_vec(),
            tokens,
            steps,
            logits,
            probs,
        })
    }

    /// Accumulates decoder gradients given the loss gradient w.r.t. each
    /// step's logits; returns the gradient w.r.t. the feature.
    pub fn decoder_backward(&self, cache: &DecoderCache<T>, dlogits: &[Vec<T>], grads: &mut Parameters<T>) -> Vec<T> {
        debug_assert_eq!(dlogits.len(), cache.tokens.len());
        let p = &self.params;
        let hd = self.config.hidden_dim;
        let mut dh_next = vec![T::zero(); hd];
        let mut dprojected = vec![T::zero(); self.config.embed_dim];
        for s in (0..cache.steps.len()).rev() {
            let step = &cache.steps[s];
            let mut dh = std::mem::replace(&mut dh_next, vec![T::zero(); hd]);
            if s > 0 {
                let (dw, db) = split_two(grads, ParamId::OutW, ParamId::OutB);
                affine_backward(&p[ParamId::OutW], &step.h, &dlogits[s - 1], dw, db, Some(&mut dh));
            }
            let mut dgi = vec![T::zero(); 3 * hd];
            let mut dgh = vec![T::zero(); 3 * hd];
            for j in 0..hd {
                let (r, z, n) = (step.r[j], step.z[j], step.n[j]);
                dh_next[j] = dh[j] * z;
                let dn = dh[j] * (T::one() - z);
                let dz = dh[j] * (step.h_prev[j] - n);
                let dan = dn * (T::one() - n * n);
                let dr = dan * step.gh_n[j];
                let daz = dz * z * (T::one() - z);
                let dar = dr * r * (T::one() - r);
                dgi[j] = dar;
                dgh[j] = dar;
                dgi[hd + j] = daz;
                dgh[hd + j] = daz;
                dgi[2 * hd + j] = dan;
                dgh[2 * hd + j] = dan * r;
            }
            let mut dx = vec![T::zero(); step.x.len()];
            {
                let (dw, db) = split_two(grads, ParamId::WIh, ParamId::BIh);
                affine_backward(&p[ParamId::WIh], &step.x, &dgi, dw, db, Some(&mut dx));
            }
            {
                let (dw, db) = split_two(grads, ParamId::WHh, ParamId::BHh);
                affine_backward(&p[ParamId::WHh], &step.h_prev, &dgh, dw, db, Some(&mut dh_next));
            }
            for (a, d) in dprojected.iter_mut().zip(&dx) {
                *a += *d;
            }
            if s > 0 {
                let row = grads[ParamId::Embed].row_mut(cache.tokens[s - 1]);
                for (g, d) in row.iter_mut().zip(&dx) {
                    *g += *d;
                }
            } else {
                let mut dfeature = vec![T::zero(); cache.feature.len()];
                let (dw, db) = split_two(grads, ParamId::FeatProjW, ParamId::FeatProjB);
                affine_backward(&p[ParamId::FeatProjW], &cache.feature, &dprojected, dw, db, Some(&mut dfeature));
                return dfeature;
            }
        }
        unreachable!("step 0 always exists")
    }

    pub(crate) fn greedy(&self, feature: &[T], max_len: usize) -> Result<Vec<usize>> {
        let x0 = self.project_feature(feature)?;
        let mut h = self.gru_step(x0.clone(), vec![T::zero(); self.config.hidden_dim]).h;
        let mut tok = START;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let step = self.gru_step(self.token_input(tok, &x0), h);
            h = step.h;
            let logits = self.output_logits(&h);
            let mut best = END;
            for (i, &l) in logits.iter().enumerate() {
                if i == START || i == PAD {
                    continue;
                }
                if l > logits[best] {
                    best = i;
                }
            }
            if best == END {
                break;
            }
            out.push(best);
            tok = best;
        }
        Ok(out)
    }
}
