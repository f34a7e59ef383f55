use rand::Rng;

use super::{check_same_shape, Backward, Tensor};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f32),
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    /// Leaky ReLU with the conventional 0.2 negative slope.
    pub const LEAKY: Activation = Activation::LeakyRelu(0.2);

    fn apply(self, x: f32) -> f32 {
        match self {
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => {
                // split to keep exp from overflowing
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f32, y: f32) -> f32 {
        match self {
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    let out: Vec<f32> = input.data().iter().map(|&x| kind.apply(x)).collect();
    Tensor::from_op(
        input.shape().to_vec(),
        out,
        Box::new(ActivationBackward {
            input: input.clone(),
            kind,
        }),
    )
}

struct ActivationBackward {
    input: Tensor,
    kind: Activation,
}

impl Backward for ActivationBackward {
    fn inputs(&self) -> Vec<&Tensor> {
        vec![&self.input]
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        let g = self
            .input
            .data()
            .iter()
            .zip(grad_out)
            .map(|(&x, &go)| go * self.kind.derivative(x, self.kind.apply(x)))
            .collect();
        vec![Some(g)]
    }
}

/// Inverted dropout. In eval mode (`train == false`) this is the identity
/// and returns `input` itself.
pub fn dropout(input: &Tensor, p: f32, train: bool, seed: u64) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout probability {p} outside [0, 1)")));
    }
    if !train || p == 0.0 {
        return Ok(input.clone());
    }
    let keep_scale = 1.0 / (1.0 - p);
    let mut rng = rng::stream(seed, &[0xD0]);
    let mask: Vec<f32> = (0..input.numel())
        .map(|_| if rng.random::<f32>() < p { 0.0 } else { keep_scale })
        .collect();
    let out = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok(Tensor::from_op(
        input.shape().to_vec(),
        out,
        Box::new(MaskBackward {
            input: input.clone(),
            mask,
        }),
    ))
}

struct MaskBackward {
    input: Tensor,
    mask: Vec<f32>,
}

impl Backward for MaskBackward {
    fn inputs(&self) -> Vec<&Tensor> {
        vec![&self.input]
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        vec![Some(grad_out.iter().zip(&self.mask).map(|(g, m)| g * m).collect())]
    }
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("add", a, b)?;
    let out = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        out,
        Box::new(AddBackward {
            a: a.clone(),
            b: b.clone(),
        }),
    ))
}

struct AddBackward {
    a: Tensor,
    b: Tensor,
}

impl Backward for AddBackward {
    fn inputs(&self) -> Vec<&Tensor> {
        vec![&self.a, &self.b]
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        vec![Some(grad_out.to_vec()), Some(grad_out.to_vec())]
    }
}

/// Elementwise product.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("mul", a, b)?;
    let out = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        out,
        Box::new(MulBackward {
            a: a.clone(),
            b: b.clone(),
        }),
    ))
}

struct MulBackward {
    a: Tensor,
    b: Tensor,
}

impl Backward for MulBackward {
    fn inputs(&self) -> Vec<&Tensor> {
        vec![&self.a, &self.b]
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        let da = self.a.requires_grad().then(|| {
            grad_out.iter().zip(self.b.data()).map(|(g, y)| g * y).collect()
        });
        let db = self.b.requires_grad().then(|| {
            grad_out.iter().zip(self.a.data()).map(|(g, x)| g * x).collect()
        });
        vec![da, db]
    }
}

pub fn scale(input: &Tensor, factor: f32) -> Tensor {
    let out = input.data().iter().map(|x| x * factor).collect();
    Tensor::from_op(
        input.shape().to_vec(),
        out,
        Box::new(ScaleBackward {
            input: input.clone(),
            factor,
        }),
    )
}

struct ScaleBackward {
    input: Tensor,
    factor: f32,
}

impl Backward for ScaleBackward {
    fn inputs(&self) -> Vec<&Tensor> {
        vec![&self.input]
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        vec![Some(grad_out.iter().map(|g| g * self.factor).collect())]
    }
}

/// Sum of all elements, as a `[1]` tensor.
pub fn sum(input: &Tensor) -> Tensor {
    reduce(input, 1.0)
}

/// Mean of all elements, as a `[1]` tensor.
pub fn mean(input: &Tensor) -> Tensor {
    reduce(input, 1.0 / input.numel() as f32)
}

fn reduce(input: &Tensor, factor: f32) -> Tensor {
    let total: f64 = input.data().iter().map(|&v| v as f64).sum();
    Tensor::from_op(
        vec![1],
        vec![(total * factor as f64) as f32],
        Box::new(ReduceBackward {
            input: input.clone(),
            factor,
        }),
    )
}

struct ReduceBackward {
    input: Tensor,
    factor: f32,
}

impl Backward for ReduceBackward {
    fn inputs(&self) -> Vec<&Tensor> {
        vec![&self.input]
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        vec![Some(vec![grad_out[0] * self.factor; self.input.numel()])]
    }
}

/// Concatenate `N×Cᵢ×H×W` tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat_channels: no inputs"))?;
    let [n, _, h, w] = first.dims4()?;
    let mut channels = Vec::with_capacity(parts.len());
    for p in parts {
        let [pn, pc, ph, pw] = p.dims4()?;
        if pn != n {
            return Err(Error::shape(format!("concat_channels: batch size {pn} differs from {n}")));
        }
        if (ph, pw) != (h, w) {
            return Err(Error::shape(format!(
                "concat_channels: spatial size {ph}×{pw} differs from {h}×{w}"
            )));
        }
        channels.push(pc);
    }
    let total: usize = channels.iter().sum();
    let plane = h * w;
    let mut out = Vec::with_capacity(n * total * plane);
    for i in 0..n {
        for (p, &c) in parts.iter().zip(&channels) {
            out.extend_from_slice(&p.data()[i * c * plane..(i + 1) * c * plane]);
        }
    }
    Ok(Tensor::from_op(
        vec![n, total, h, w],
        out,
        Box::new(ConcatBackward {
            parts: parts.iter().map(|&t| t.clone()).collect(),
            channels,
            batch: n,
            plane,
        }),
    ))
}

struct ConcatBackward {
    parts: Vec<Tensor>,
    channels: Vec<usize>,
    batch: usize,
    plane: usize,
}

impl Backward for ConcatBackward {
    fn inputs(&self) -> Vec<&Tensor> {
        self.parts.iter().collect()
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        let total: usize = self.channels.iter().sum();
        let mut offset = 0;
        let mut grads = Vec::with_capacity(self.parts.len());
        for (p, &c) in self.parts.iter().zip(&self.channels) {
            if p.requires_grad() {
                let mut g = Vec::with_capacity(self.batch * c * self.plane);
                for i in 0..self.batch {
                    let start = (i * total + offset) * self.plane;
                    g.extend_from_slice(&grad_out[start..start + c * self.plane]);
                }
                grads.push(Some(g));
            } else {
                grads.push(None);
            }
            offset += c;
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_definitions() {
        let x = Tensor::from_vec(vec![-1.0, 0.0, 2.0], &[3]).unwrap();
        assert_eq!(activation(&x, Activation::LEAKY).data()[0], -0.2);
        assert_eq!(activation(&x, Activation::Tanh).data()[1], 0.0);
        assert_eq!(activation(&x, Activation::Sigmoid).data()[1], 0.5);
        assert_eq!(activation(&x, Activation::Relu).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_gradient() {
        let x = Tensor::parameter(vec![2.0, -2.0], &[2]).unwrap();
        sum(&activation(&x, Activation::Relu)).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn sigmoid_is_finite_for_extreme_inputs() {
        let x = Tensor::from_vec(vec![-1e4, 1e4, -88.0, 88.0], &[4]).unwrap();
        let y = activation(&x, Activation::Sigmoid);
        assert!(y.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn dropout_identity_cases() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        assert_eq!(dropout(&x, 0.0, true, 1).unwrap().data(), x.data());
        assert_eq!(dropout(&x, 0.5, false, 1).unwrap().data(), x.data());
    }

    #[test]
    fn dropout_rejects_bad_probability() {
        let x = Tensor::zeros(&[2]);
        assert!(dropout(&x, 1.0, true, 0).is_err());
        assert!(dropout(&x, -0.1, true, 0).is_err());
    }

    #[test]
    fn dropout_preserves_mean_and_is_seeded() {
        let x = Tensor::full(&[1_000_000], 1.0);
        let y = dropout(&x, 0.5, true, 42).unwrap();
        let m: f64 = y.data().iter().map(|&v| v as f64).sum::<f64>() / 1e6;
        assert!((m - 1.0).abs() < 0.01, "mean {m}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let again = dropout(&x, 0.5, true, 42).unwrap();
        assert_eq!(y.data(), again.data());
    }

    #[test]
    fn concat_then_split_gradients() {
        let a = Tensor::parameter((0..8).map(|v| v as f32).collect(), &[2, 1, 2, 2]).unwrap();
        let b = Tensor::parameter((0..16).map(|v| v as f32).collect(), &[2, 2, 2, 2]).unwrap();
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 3, 2, 2]);
        assert_eq!(&c.data()[..4], &a.data()[..4]);
        assert_eq!(&c.data()[4..12], &b.data()[..8]);
        assert_eq!(&c.data()[12..16], &a.data()[4..8]);
        let w = Tensor::from_vec((0..24).map(|v| v as f32).collect(), &[2, 3, 2, 2]).unwrap();
        sum(&mul(&c, &w).unwrap()).backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![0.0, 1.0, 2.0, 3.0, 12.0, 13.0, 14.0, 15.0]);
    }

    #[test]
    fn concat_rejects_mismatched_batch() {
        let a = Tensor::zeros(&[1, 1, 2, 2]);
        let b = Tensor::zeros(&[2, 1, 2, 2]);
        assert!(concat_channels(&[&a, &b]).is_err());
    }
}
