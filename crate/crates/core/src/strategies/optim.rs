use crate::model::{ModelState, Parameters, TrainabilityMask};
use crate::scalar::Scalar;

/// Adam with bias correction. Frozen elements are never touched, so their
/// values stay bit-identical.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    m: Parameters<T>,
    v: Parameters<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &Parameters<T>, lr: f64) -> Self {
        Self {
            lr: T::of(lr),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            step: 0,
            m: Parameters::zeros_like(params),
            v: Parameters::zeros_like(params),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Norm of the gradient over trainable elements.
    pub fn trainable_norm(grads: &Parameters<T>, mask: &TrainabilityMask) -> T {
        grads
            .iter()
            .map(|(id, g)| g.data()[mask.frozen_prefix(id).min(g.len())..].iter().map(|&x| x * x).sum::<T>())
            .sum::<T>()
            .sqrt()
    }

    pub fn update(&mut self, state: &mut ModelState<T>, grads: &Parameters<T>, clip_norm: Option<f64>) {
        self.step += 1;
        let scale = match clip_norm {
            Some(c) => {
                let norm = Self::trainable_norm(grads, &state.mask);
                let c = T::of(c);
                if norm > c {
                    c / norm
                } else {
                    T::one()
                }
            }
            None => T::one(),
        };
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.step);
        let bc2 = one - self.beta2.powi(self.step);
        let mask = state.mask.clone();
        let moments = self.m.iter_mut().zip(self.v.iter_mut());
        for (((id, p), (_, g)), ((_, m), (_, v))) in state.params.iter_mut().zip(grads.iter()).zip(moments) {
            let start = mask.frozen_prefix(id).min(p.len());
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in start..p.len() {
                let gi = g[i] * scale;
                m[i] = self.beta1 * m[i] + (one - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (one - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
