//! Reference implementations shared by the integration and acceptance
//! targets. Written directly from the definitions, without the library's
//! kernels.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn quantize_ref(w: f64, eta: f64) -> f64 {
    if w > eta {
        1.0
    } else if w < -eta {
        -1.0
    } else {
        0.0
    }
}

pub fn random_ternary(n: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<i8> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(density) {
                if rng.gen_bool(0.5) {
                    1
                } else {
                    -1
                }
            } else {
                0
            }
        })
        .collect()
}

/// `y[b, o] = sum_i w[o, i] * x[b, i]` with `w` in `[out, in]` order.
pub fn fc_ref_i32(x: &[i8], w: &[i8], batch: usize, inp: usize, out: usize) -> Vec<i32> {
    let mut y = vec![0i32; batch * out];
    for b in 0..batch {
        for o in 0..out {
            y[b * out + o] = (0..inp).map(|i| w[o * inp + i] as i32 * x[b * inp + i] as i32).sum();
        }
    }
    y
}

/// f64 FC reference and the per-output conditioning `sum |w * x|`.
pub fn fc_ref_f64(x: &[f32], w: &[i8], batch: usize, inp: usize, out: usize) -> (Vec<f64>, Vec<f64>) {
    let mut y = vec![0.0; batch * out];
    let mut scale = vec![0.0; batch * out];
    for b in 0..batch {
        for o in 0..out {
            for i in 0..inp {
                let p = w[o * inp + i] as f64 * x[b * inp + i] as f64;
                y[b * out + o] += p;
                scale[b * out + o] += p.abs();
            }
        }
    }
    (y, scale)
}

#[derive(Clone, Copy, Debug)]
pub struct ConvShape {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let kernel = rng.gen_range(1..4);
        let pad = rng.gen_range(0..kernel);
        let stride = rng.gen_range(1..3);
        // outputs must tile the padded input exactly
        let fit = |rng: &mut ChaCha8Rng| loop {
            let n: usize = rng.gen_range(kernel.max(2)..9);
            if (n + 2 * pad - kernel).is_multiple_of(stride) {
                break n;
            }
        };
        let height = fit(rng);
        let width = fit(rng);
        ConvShape {
            batch: rng.gen_range(1..4),
            channels: rng.gen_range(1..5),
            height,
            width,
            filters: rng.gen_range(1..6),
            kernel,
            stride,
            pad,
        }
    }
}

/// Direct convolution over zero-padded input; `k` is `[F, C, kh, kw]`.
/// Returns outputs and the per-output conditioning `sum |k * x|`.
pub fn conv_ref(x: &[f64], k: &[i8], s: ConvShape) -> (Vec<f64>, Vec<f64>) {
    let (oh, ow) = (s.out_h(), s.out_w());
    let mut y = vec![0.0; s.batch * s.filters * oh * ow];
    let mut scale = y.clone();
    for b in 0..s.batch {
        for f in 0..s.filters {
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = 0.0;
                    let mut mag = 0.0;
                    for ch in 0..s.channels {
                        for i in 0..s.kernel {
                            for j in 0..s.kernel {
                                let ih = (r * s.stride + i) as isize - s.pad as isize;
                                let iw = (c * s.stride + j) as isize - s.pad as isize;
                                if ih < 0 || iw < 0 || ih >= s.height as isize || iw >= s.width as isize {
                                    continue;
                                }
                                let xv = x[((b * s.channels + ch) * s.height + ih as usize) * s.width + iw as usize];
                                let kv = k[((f * s.channels + ch) * s.kernel + i) * s.kernel + j] as f64;
                                acc += kv * xv;
                                mag += (kv * xv).abs();
                            }
                        }
                    }
                    let idx = ((b * s.filters + f) * oh + r) * ow + c;
                    y[idx] = acc;
                    scale[idx] = mag;
                }
            }
        }
    }
    (y, scale)
}

/// Largest `|a - ref| / max(scale, tiny)`, the error relative to the
/// magnitude of the summed products.
pub fn max_rel_err(a: &[f64], reference: &[f64], scale: &[f64]) -> f64 {
    a.iter().zip(reference).zip(scale).map(|((a, r), s)| (a - r).abs() / s.max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}
