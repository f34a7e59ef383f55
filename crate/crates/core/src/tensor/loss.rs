use super::{check_same_shape, Backward, Tensor};
use crate::error::Result;

/// Probabilities are clamped to `[BCE_EPS, 1 − BCE_EPS]` before taking logs.
pub const BCE_EPS: f32 = 1e-7;

/// Mean absolute error.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_same_shape("l1_loss", pred, target)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t).abs() as f64)
        .sum();
    let value = (total / pred.numel() as f64) as f32;
    Ok(Tensor::from_op(
        vec![1],
        vec![value],
        Box::new(L1Backward {
            pred: pred.clone(),
            target: target.clone(),
        }),
    ))
}

struct L1Backward {
    pred: Tensor,
    target: Tensor,
}

impl Backward for L1Backward {
    fn inputs(&self) -> Vec<&Tensor> {
        vec![&self.pred, &self.target]
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        let scale = grad_out[0] / self.pred.numel() as f32;
        let signs: Vec<f32> = self
            .pred
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(p, t)| {
                let d = p - t;
                if d > 0.0 {
                    scale
                } else if d < 0.0 {
                    -scale
                } else {
                    0.0
                }
            })
            .collect();
        let dt = self
            .target
            .requires_grad()
            .then(|| signs.iter().map(|v| -v).collect());
        vec![self.pred.requires_grad().then_some(signs), dt]
    }
}

/// Mean binary cross-entropy of probabilities `pred` against labels
/// `target`.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_same_shape("bce_loss", pred, target)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS) as f64;
            let t = t as f64;
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    let value = (total / pred.numel() as f64) as f32;
    Ok(Tensor::from_op(
        vec![1],
        vec![value],
        Box::new(BceBackward {
            pred: pred.clone(),
            target: target.clone(),
        }),
    ))
}

struct BceBackward {
    pred: Tensor,
    target: Tensor,
}

impl Backward for BceBackward {
    fn inputs(&self) -> Vec<&Tensor> {
        vec![&self.pred, &self.target]
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        let scale = grad_out[0] as f64 / self.pred.numel() as f64;
        let dp = self.pred.requires_grad().then(|| {
            self.pred
                .data()
                .iter()
                .zip(self.target.data())
                .map(|(&p, &t)| {
                    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
                        return 0.0;
                    }
                    let (p, t) = (p as f64, t as f64);
                    ((p - t) / (p * (1.0 - p)) * scale) as f32
                })
                .collect()
        });
        let dt = self.target.requires_grad().then(|| {
            self.pred
                .data()
                .iter()
                .map(|&p| {
                    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS) as f64;
                    (((1.0 - p).ln() - p.ln()) * scale) as f32
                })
                .collect()
        });
        vec![dp, dt]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_values() {
        let a = Tensor::full(&[2, 3], 1.0);
        let b = Tensor::zeros(&[2, 3]);
        assert_eq!(l1_loss(&a, &a).unwrap().item(), 0.0);
        assert_eq!(l1_loss(&a, &b).unwrap().item(), 1.0);
    }

    #[test]
    fn l1_gradient_is_sign_over_numel() {
        let p = Tensor::parameter(vec![1.0, -1.0, 0.5, 2.0], &[4]).unwrap();
        let t = Tensor::from_vec(vec![0.0, 0.0, 0.5, 3.0], &[4]).unwrap();
        l1_loss(&p, &t).unwrap().backward().unwrap();
        assert_eq!(p.grad().unwrap(), vec![0.25, -0.25, 0.0, -0.25]);
    }

    #[test]
    fn bce_at_half_is_ln2() {
        let p = Tensor::full(&[4], 0.5);
        let t = Tensor::full(&[4], 1.0);
        let v = bce_loss(&p, &t).unwrap().item();
        assert!((v - std::f32::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn bce_saturated_prediction_is_finite_and_small() {
        let p = Tensor::full(&[4], 1.0);
        let t = Tensor::full(&[4], 1.0);
        let v = bce_loss(&p, &t).unwrap().item();
        assert!(v.is_finite() && v < 1e-5);
        let wrong = bce_loss(&Tensor::zeros(&[4]), &t).unwrap().item();
        assert!(wrong.is_finite() && wrong > 10.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor::zeros(&[2]);
        let b = Tensor::zeros(&[3]);
        assert!(l1_loss(&a, &b).is_err());
        assert!(bce_loss(&a, &b).is_err());
    }
}
