//! Naive double-precision kernels.
//!
//! Straight loop nests with no shared code with the im2col/GEMM engine, used
//! as the finite-difference side of gradient checks.

use std::collections::HashMap;

use crate::nn::{DiscriminatorConfig, GeneratorConfig};

/// Dense `N×C×H×W` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Array4 {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl Array4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len());
        Array4 { dims, data }
    }

    pub fn from_f32(dims: [usize; 4], data: &[f32]) -> Self {
        Self::new(dims, data.iter().map(|&v| v as f64).collect())
    }

    fn zeros(dims: [usize; 4]) -> Self {
        Self::new(dims, vec![0.0; dims.iter().product()])
    }

    #[inline]
    fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + h) * self.dims[3] + w
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.idx(n, c, h, w)]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.dims, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// Cross-correlation, weight `Cout×Cin×k×k`.
pub fn conv2d(x: &Array4, w: &Array4, bias: Option<&[f64]>, stride: usize, pad: usize) -> Array4 {
    let [n, cin, h, wd] = x.dims;
    let [cout, _, k, _] = w.dims;
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Array4::zeros([n, cout, oh, ow]);
    for b in 0..n {
        for co in 0..cout {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = bias.map_or(0.0, |bv| bv[co]);
                    for ci in 0..cin {
                        for ki in 0..k {
                            for kj in 0..k {
                                let iy = (y * stride + ki) as isize - pad as isize;
                                let ix = (xo * stride + kj) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.at(b, ci, iy as usize, ix as usize) * w.at(co, ci, ki, kj);
                            }
                        }
                    }
                    let i = out.idx(b, co, y, xo);
                    out.data[i] = acc;
                }
            }
        }
    }
    out
}

/// Transposed convolution by direct scatter, weight `Cin×Cout×k×k`.
pub fn conv_transpose2d(x: &Array4, w: &Array4, bias: Option<&[f64]>, stride: usize, pad: usize) -> Array4 {
    let [n, cin, h, wd] = x.dims;
    let [_, cout, k, _] = w.dims;
    let oh = (h - 1) * stride + k - 2 * pad;
    let ow = (wd - 1) * stride + k - 2 * pad;
    let mut out = Array4::zeros([n, cout, oh, ow]);
    for b in 0..n {
        for ci in 0..cin {
            for y in 0..h {
                for xi in 0..wd {
                    let v = x.at(b, ci, y, xi);
                    for co in 0..cout {
                        for ki in 0..k {
                            for kj in 0..k {
                                let oy = (y * stride + ki) as isize - pad as isize;
                                let ox = (xi * stride + kj) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                let i = out.idx(b, co, oy as usize, ox as usize);
                                out.data[i] += v * w.at(ci, co, ki, kj);
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(bv) = bias {
        for b in 0..n {
            for co in 0..cout {
                for y in 0..oh {
                    for xo in 0..ow {
                        let i = out.idx(b, co, y, xo);
                        out.data[i] += bv[co];
                    }
                }
            }
        }
    }
    out
}

/// Batch norm with batch statistics (biased variance).
pub fn batch_norm_train(x: &Array4, gamma: &[f64], beta: &[f64], eps: f64) -> Array4 {
    let [n, c, h, w] = x.dims;
    let count = (n * h * w) as f64;
    let mut out = x.clone();
    for ch in 0..c {
        let mut vals = Vec::with_capacity(n * h * w);
        for b in 0..n {
            for y in 0..h {
                for xi in 0..w {
                    vals.push(x.at(b, ch, y, xi));
                }
            }
        }
        let mean = vals.iter().sum::<f64>() / count;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        let inv = 1.0 / (var + eps).sqrt();
        for b in 0..n {
            for y in 0..h {
                for xi in 0..w {
                    let i = x.idx(b, ch, y, xi);
                    out.data[i] = gamma[ch] * (x.data[i] - mean) * inv + beta[ch];
                }
            }
        }
    }
    out
}

pub fn batch_norm_eval(x: &Array4, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64], eps: f64) -> Array4 {
    let [n, c, h, w] = x.dims;
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xi in 0..w {
                    let i = x.idx(b, ch, y, xi);
                    out.data[i] = gamma[ch] * (x.data[i] - mean[ch]) / (var[ch] + eps).sqrt() + beta[ch];
                }
            }
        }
    }
    out
}

pub fn leaky_relu(x: &Array4, slope: f64) -> Array4 {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn relu(x: &Array4) -> Array4 {
    x.map(|v| v.max(0.0))
}

pub fn tanh(x: &Array4) -> Array4 {
    x.map(f64::tanh)
}

pub fn sigmoid(x: &Array4) -> Array4 {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

pub fn concat_channels(a: &Array4, b: &Array4) -> Array4 {
    let [n, ca, h, w] = a.dims;
    let cb = b.dims[1];
    let plane = h * w;
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    for i in 0..n {
        data.extend_from_slice(&a.data[i * ca * plane..(i + 1) * ca * plane]);
        data.extend_from_slice(&b.data[i * cb * plane..(i + 1) * cb * plane]);
    }
    Array4::new([n, ca + cb, h, w], data)
}

pub fn l1(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64
}

pub fn bce(pred: &[f64], target: &[f64], eps: f64) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(eps, 1.0 - eps);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / pred.len() as f64
}

/// Named parameter values in double precision.
pub type Params = HashMap<String, (Vec<usize>, Vec<f64>)>;

fn arr(params: &Params, name: &str) -> Array4 {
    let (shape, data) = params.get(name).unwrap_or_else(|| panic!("reference: missing {name}"));
    Array4::new([shape[0], shape[1], shape[2], shape[3]], data.clone())
}

fn vec_of<'a>(params: &'a Params, name: &str) -> Option<&'a [f64]> {
    params.get(name).map(|(_, d)| d.as_slice())
}

/// Sign of every input to a piecewise-linear function, in evaluation order.
/// Two evaluations with equal patterns lie on the same smooth piece.
pub type KinkPattern = Vec<bool>;

fn record(x: &Array4, kinks: &mut KinkPattern) {
    kinks.extend(x.data.iter().map(|&v| v > 0.0));
}

#[derive(Clone, Copy)]
enum Act {
    Leaky,
    Relu,
    Tanh,
    Sigmoid,
}

/// Conv/deconv → optional train-mode batch norm → activation.
fn stage(params: &Params, name: &str, x: &Array4, up: bool, stride: usize, act: Act, kinks: &mut KinkPattern) -> Array4 {
    let w = arr(params, &format!("{name}.weight"));
    let bias = vec_of(params, &format!("{name}.bias"));
    let mut y = if up {
        conv_transpose2d(x, &w, bias, stride, 1)
    } else {
        conv2d(x, &w, bias, stride, 1)
    };
    if let (Some(g), Some(b)) = (
        vec_of(params, &format!("{name}.bn.gamma")),
        vec_of(params, &format!("{name}.bn.beta")),
    ) {
        y = batch_norm_train(&y, g, b, 1e-5);
    }
    match act {
        Act::Leaky => {
            record(&y, kinks);
            leaky_relu(&y, 0.2)
        }
        Act::Relu => {
            record(&y, kinks);
            relu(&y)
        }
        Act::Tanh => tanh(&y),
        Act::Sigmoid => sigmoid(&y),
    }
}

/// U-Net forward with batch statistics and no dropout.
pub fn generator_forward(params: &Params, config: &GeneratorConfig, input: &Array4) -> Array4 {
    generator_forward_traced(params, config, input, &mut Vec::new())
}

pub fn generator_forward_traced(
    params: &Params,
    config: &GeneratorConfig,
    input: &Array4,
    kinks: &mut KinkPattern,
) -> Array4 {
    let d = config.depth;
    let mut skips = Vec::new();
    let mut x = input.clone();
    for i in 0..d {
        x = stage(params, &format!("gen.enc{i}"), &x, false, 2, Act::Leaky, kinks);
        skips.push(x.clone());
    }
    for j in 0..d {
        if j > 0 {
            x = concat_channels(&x, &skips[d - 1 - j]);
        }
        let act = if j + 1 == d { Act::Tanh } else { Act::Relu };
        x = stage(params, &format!("gen.dec{j}"), &x, true, 2, act, kinks);
    }
    x
}

/// PatchGAN forward with batch statistics.
pub fn discriminator_forward(
    params: &Params,
    config: &DiscriminatorConfig,
    condition: &Array4,
    image: &Array4,
) -> Array4 {
    discriminator_forward_traced(params, config, condition, image, &mut Vec::new())
}

pub fn discriminator_forward_traced(
    params: &Params,
    config: &DiscriminatorConfig,
    condition: &Array4,
    image: &Array4,
    kinks: &mut KinkPattern,
) -> Array4 {
    let strides = [2, 2, 2, 1, 1];
    let mut x = concat_channels(condition, image);
    for (i, &s) in strides.iter().enumerate().take(config.num_encoders) {
        let act = if i + 1 == config.num_encoders { Act::Sigmoid } else { Act::Leaky };
        x = stage(params, &format!("disc.layer{i}"), &x, false, s, act, kinks);
    }
    x
}

/// L1 loss that also records the sign of every residual.
pub fn l1_traced(pred: &[f64], target: &[f64], kinks: &mut KinkPattern) -> f64 {
    kinks.extend(pred.iter().zip(target).map(|(p, t)| p > t));
    l1(pred, target)
}

/// BCE that also records which predictions fall inside the clamp range.
pub fn bce_traced(pred: &[f64], target: &[f64], eps: f64, kinks: &mut KinkPattern) -> f64 {
    kinks.extend(pred.iter().map(|&p| p > eps && p < 1.0 - eps));
    bce(pred, target, eps)
}
