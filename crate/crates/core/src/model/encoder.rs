use super::{ModelState, ParamId, Parameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{affine, affine_backward, Tensor};

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct EncoderCache<T> {
    input: Vec<T>,
    act1: Vec<T>,
    act2: Vec<T>,
    pub feature: Vec<T>,
}

struct ConvShape {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    out_h: usize,
    out_w: usize,
}

/// 3×3 convolution, stride 2, padding 1, followed by ReLU.
fn conv_relu<T: Scalar>(s: &ConvShape, w: &Tensor<T>, b: &Tensor<T>, input: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); s.out_c * s.out_h * s.out_w];
    let w = w.data();
    for o in 0..s.out_c {
        for y in 0..s.out_h {
            for x in 0..s.out_w {
                let mut acc = b.data()[o];
                for c in 0..s.in_c {
                    for ky in 0..3 {
                        let iy = (2 * y + ky) as isize - 1;
                        if iy < 0 || iy >= s.in_h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (2 * x + kx) as isize - 1;
                            if ix < 0 || ix >= s.in_w as isize {
                                continue;
                            }
                            acc += w[((o * s.in_c + c) * 3 + ky) * 3 + kx]
                                * input[(c * s.in_h + iy as usize) * s.in_w + ix as usize];
                        }
                    }
                }
                out[(o * s.out_h + y) * s.out_w + x] = acc.max(T::zero());
            }
        }
    }
    out
}

/// Backward through ReLU and the convolution. `dout` is w.r.t. the
/// post-activation output; returns the input gradient when requested.
#[allow(clippy::too_many_arguments)]
fn conv_relu_backward<T: Scalar>(
    s: &ConvShape,
    w: &Tensor<T>,
    input: &[T],
    act: &[T],
    dout: &[T],
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
    mut dinput: Option<&mut [T]>,
) {
    let wd = w.data();
    for o in 0..s.out_c {
        for y in 0..s.out_h {
            for x in 0..s.out_w {
                let at = (o * s.out_h + y) * s.out_w + x;
                if act[at] <= T::zero() {
                    continue;
                }
                let g = dout[at];
                db.data_mut()[o] += g;
                for c in 0..s.in_c {
                    for ky in 0..3 {
                        let iy = (2 * y + ky) as isize - 1;
                        if iy < 0 || iy >= s.in_h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (2 * x + kx) as isize - 1;
                            if ix < 0 || ix >= s.in_w as isize {
                                continue;
                            }
                            let wi = ((o * s.in_c + c) * 3 + ky) * 3 + kx;
                            let ii = (c * s.in_h + iy as usize) * s.in_w + ix as usize;
                            dw.data_mut()[wi] += g * input[ii];
                            if let Some(d) = dinput.as_deref_mut() {
                                d[ii] += g * wd[wi];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> ModelState<T> {
    fn conv_shapes(&self) -> (ConvShape, ConvShape) {
        let c = &self.config;
        let (h1, w1) = c.conv1_out();
        let (h2, w2) = c.conv2_out();
        (
            ConvShape {
                in_c: c.channels,
                in_h: c.height,
                in_w: c.width,
                out_c: c.conv1_channels,
                out_h: h1,
                out_w: w1,
            },
            ConvShape {
                in_c: c.conv1_channels,
                in_h: h1,
                in_w: w1,
                out_c: c.conv2_channels,
                out_h: h2,
                out_w: w2,
            },
        )
    }

    pub fn encoder_forward(&self, image: &[T]) -> Result<EncoderCache<T>> {
        if image.len() != self.config.image_len() {
            return Err(Error::Contract(format!(
                "image has {} values, encoder expects {}×{}×{}",
                image.len(),
                self.config.channels,
                self.config.height,
                self.config.width
            )));
        }
        let p = &self.params;
        let (s1, s2) = self.conv_shapes();
        let act1 = conv_relu(&s1, &p[ParamId::Conv1W], &p[ParamId::Conv1B], image);
        let act2 = conv_relu(&s2, &p[ParamId::Conv2W], &p[ParamId::Conv2B], &act1);
        let mut feature = vec![T::zero(); self.config.feature_dim];
        affine(&p[ParamId::FcW], &p[ParamId::FcB], &act2, &mut feature);
        for v in &mut feature {
            *v = v.tanh();
        }
        Ok(EncoderCache {
            input: image.to_vec(),
            act1,
            act2,
            feature,
        })
    }

    /// Accumulates encoder parameter gradients from `dfeature`.
    pub fn encoder_backward(&self, cache: &EncoderCache<T>, dfeature: &[T], grads: &mut Parameters<T>) {
        let p = &self.params;
        let (s1, s2) = self.conv_shapes();
        let dlinear: Vec<T> = dfeature
            .iter()
            .zip(&cache.feature)
            .map(|(&g, &f)| g * (T::one() - f * f))
            .collect();
        let mut dact2 = vec![T::zero(); cache.act2.len()];
        {
            let (dw, db) = split_two(grads, ParamId::FcW, ParamId::FcB);
            affine_backward(&p[ParamId::FcW], &cache.act2, &dlinear, dw, db, Some(&mut dact2));
        }
        let mut dact1 = vec![T::zero(); cache.act1.len()];
        {
            let (dw, db) = split_two(grads, ParamId::Conv2W, ParamId::Conv2B);
            conv_relu_backward(&s2, &p[ParamId::Conv2W], &cache.act1, &cache.act2, &dact2, dw, db, Some(&mut dact1));
        }
        let (dw, db) = split_two(grads, ParamId::Conv1W, ParamId::Conv1B);
        conv_relu_backward(&s1, &p[ParamId::Conv1W], &cache.input, &cache.act1, &dact1, dw, db, None);
    }
}

/// Two distinct mutable gradient slots.
pub(super) fn split_two<T>(grads: &mut Parameters<T>, a: ParamId, b: ParamId) -> (&mut Tensor<T>, &mut Tensor<T>) {
    debug_assert!(a < b);
    let (lo, hi) = grads.tensors.split_at_mut(b as usize);
    (&mut lo[a as usize], &mut hi[0])
}
