use super::Tensor;
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for a list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f32>>,
    pub second_moment: Vec<Vec<f32>>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            first_moment: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update of a flat parameter buffer. `step` is the
/// 1-based step number.
pub fn adam_update(param: &mut [f32], grad: &[f32], m: &mut [f32], v: &mut [f32], step: u64, hp: &Adam) {
    let bc1 = 1.0 - (hp.beta1 as f64).powi(step as i32);
    let bc2 = 1.0 - (hp.beta2 as f64).powi(step as i32);
    let step_size = (hp.lr as f64 / bc1) as f32;
    let bc2_sqrt = bc2.sqrt() as f32;
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        param[i] -= step_size * m[i] / (v[i].sqrt() / bc2_sqrt + hp.eps);
    }
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Adam {
            lr,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Update every parameter from its accumulated gradient. Each parameter
    /// is replaced by a fresh trainable leaf, so gradients are cleared as a
    /// side effect. Parameters without a gradient see a zero gradient.
    pub fn step(&self, params: &mut [Tensor], state: &mut AdamState) -> Result<()> {
        self.validate()?;
        if state.first_moment.len() != params.len() {
            return Err(Error::shape(format!(
                "Adam state tracks {} parameters, got {}",
                state.first_moment.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if state.first_moment[i].len() != p.numel() || state.second_moment[i].len() != p.numel() {
                return Err(Error::shape(format!(
                    "Adam state for parameter {i} has {} entries, parameter has {}",
                    state.first_moment[i].len(),
                    p.numel()
                )));
            }
        }
        state.step_count += 1;
        for (i, p) in params.iter_mut().enumerate() {
            let mut values = p.to_vec();
            let grad = p.grad().unwrap_or_else(|| vec![0.0; values.len()]);
            adam_update(
                &mut values,
                &grad,
                &mut state.first_moment[i],
                &mut state.second_moment[i],
                state.step_count,
                self,
            );
            *p = Tensor::parameter(values, p.shape())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![Tensor::parameter(vec![1.0], &[1]).unwrap()];
        p[0].accumulate_grad(&[1.0]);
        let mut state = AdamState::new(&p);
        let opt = Adam::new(0.01);
        opt.step(&mut p, &mut state).unwrap();
        assert!((p[0].item() - 0.99).abs() < 1e-6, "{}", p[0].item());
        assert_eq!(state.step_count, 1);
        assert!(p[0].grad().is_none());
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut p = vec![Tensor::parameter(vec![0.3, -0.7], &[2]).unwrap()];
        let mut state = AdamState::new(&p);
        Adam::new(0.1).step(&mut p, &mut state).unwrap();
        assert_eq!(p[0].data(), &[0.3, -0.7]);
    }

    #[test]
    fn quadratic_converges() {
        let mut p = vec![Tensor::parameter(vec![0.0], &[1]).unwrap()];
        let mut state = AdamState::new(&p);
        let opt = Adam::new(0.1);
        for _ in 0..100 {
            let w = p[0].item();
            p[0].accumulate_grad(&[2.0 * (w - 3.0)]);
            opt.step(&mut p, &mut state).unwrap();
        }
        assert!((p[0].item() - 3.0).abs() < 0.5, "{}", p[0].item());
    }

    #[test]
    fn rejects_non_positive_lr() {
        let mut p = vec![Tensor::parameter(vec![0.0], &[1]).unwrap()];
        let mut state = AdamState::new(&p);
        assert!(Adam::new(0.0).step(&mut p, &mut state).is_err());
        assert!(Adam::new(-1.0).step(&mut p, &mut state).is_err());
    }

    #[test]
    fn state_shape_mismatch_rejected() {
        let mut p = vec![Tensor::parameter(vec![0.0, 1.0], &[2]).unwrap()];
        let mut state = AdamState::new(&[Tensor::zeros(&[3])]);
        assert!(Adam::default().step(&mut p, &mut state).is_err());
    }
}
