use super::{Backward, Tensor};
use crate::error::{Error, Result};

/// Exponential moving averages of per-channel batch statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub momentum: f32,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            momentum: 0.1,
        }
    }
}

pub enum BatchNormMode<'a> {
    /// Normalize with batch statistics; fold them into `Some(stats)`.
    Train(Option<&'a mut RunningStats>),
    /// Normalize with stored statistics.
    Eval(&'a RunningStats),
}

/// Per-channel batch normalization over `N×C×H×W`.
pub fn batch_norm2d(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f32,
    mode: BatchNormMode<'_>,
) -> Result<Tensor> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!("batch_norm2d: eps must be > 0, got {eps}")));
    }
    let [n, c, h, w] = input.dims4()?;
    for (name, t) in [("gamma", gamma), ("beta", beta)] {
        if t.shape() != [c] {
            return Err(Error::shape(format!(
                "batch_norm2d: {name} shape {:?} does not match {c} channels",
                t.shape()
            )));
        }
    }
    let plane = h * w;
    let count = n * plane;
    let x = input.data();

    let (mean, inv_std, train) = match mode {
        BatchNormMode::Train(running) => {
            let mut mean = vec![0.0f32; c];
            let mut var = vec![0.0f32; c];
            for ch in 0..c {
                let (mut s, mut s2) = (0.0f64, 0.0f64);
                for i in 0..n {
                    let base = (i * c + ch) * plane;
                    for &v in &x[base..base + plane] {
                        s += v as f64;
                    }
                }
                let m = s / count as f64;
                for i in 0..n {
                    let base = (i * c + ch) * plane;
                    for &v in &x[base..base + plane] {
                        let d = v as f64 - m;
                        s2 += d * d;
                    }
                }
                mean[ch] = m as f32;
                var[ch] = (s2 / count as f64) as f32;
            }
            if let Some(stats) = running {
                if stats.mean.len() != c || stats.var.len() != c {
                    return Err(Error::shape(format!(
                        "batch_norm2d: running stats hold {} channels, input has {c}",
                        stats.mean.len()
                    )));
                }
                let m = stats.momentum;
                for ch in 0..c {
                    stats.mean[ch] = (1.0 - m) * stats.mean[ch] + m * mean[ch];
                }
                // A single value per channel says nothing about the variance
                // (the unbiased estimate is 0/0), so the running variance is
                // only updated from larger batches.
                if count > 1 {
                    let unbias = count as f32 / (count - 1) as f32;
                    for ch in 0..c {
                        stats.var[ch] = (1.0 - m) * stats.var[ch] + m * var[ch] * unbias;
                    }
                }
            }
            let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            (mean, inv_std, true)
        }
        BatchNormMode::Eval(stats) => {
            if stats.mean.len() != c || stats.var.len() != c {
                return Err(Error::shape(format!(
                    "batch_norm2d: running stats hold {} channels, input has {c}",
                    stats.mean.len()
                )));
            }
            let inv_std: Vec<f32> = stats.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            (stats.mean.clone(), inv_std, false)
        }
    };

    let mut xhat = vec![0.0f32; x.len()];
    let mut out = vec![0.0f32; x.len()];
    let (g, b) = (gamma.data(), beta.data());
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * plane;
            for j in base..base + plane {
                let v = (x[j] - mean[ch]) * inv_std[ch];
                xhat[j] = v;
                out[j] = g[ch] * v + b[ch];
            }
        }
    }

    Ok(Tensor::from_op(
        vec![n, c, h, w],
        out,
        Box::new(BatchNormBackward {
            input: input.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            xhat,
            inv_std,
            dims: [n, c, plane],
            train,
        }),
    ))
}

struct BatchNormBackward {
    input: Tensor,
    gamma: Tensor,
    beta: Tensor,
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
    dims: [usize; 3],
    train: bool,
}

impl Backward for BatchNormBackward {
    fn inputs(&self) -> Vec<&Tensor> {
        vec![&self.input, &self.gamma, &self.beta]
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        let [n, c, plane] = self.dims;
        let count = (n * plane) as f64;
        let g = self.gamma.data();

        let mut dgamma = vec![0.0f64; c];
        let mut dbeta = vec![0.0f64; c];
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * plane;
                for j in base..base + plane {
                    dgamma[ch] += (grad_out[j] * self.xhat[j]) as f64;
                    dbeta[ch] += grad_out[j] as f64;
                }
            }
        }

        let dx = self.input.requires_grad().then(|| {
            let mut dx = vec![0.0f32; grad_out.len()];
            for ch in 0..c {
                let k = g[ch] * self.inv_std[ch];
                // d/dx of batch statistics only matters in train mode
                let (mean_dy, mean_dy_xhat) = if self.train {
                    ((dbeta[ch] / count) as f32, (dgamma[ch] / count) as f32)
                } else {
                    (0.0, 0.0)
                };
                for i in 0..n {
                    let base = (i * c + ch) * plane;
                    for j in base..base + plane {
                        dx[j] = k * (grad_out[j] - mean_dy - self.xhat[j] * mean_dy_xhat);
                    }
                }
            }
            dx
        });

        vec![
            dx,
            self.gamma
                .requires_grad()
                .then(|| dgamma.iter().map(|&v| v as f32).collect()),
            self.beta
                .requires_grad()
                .then(|| dbeta.iter().map(|&v| v as f32).collect()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_input_maps_to_beta() {
        let x = Tensor::full(&[2, 3, 4, 4], 5.0);
        let gamma = Tensor::full(&[3], 1.0);
        let out = batch_norm2d(&x, &gamma, &Tensor::zeros(&[3]), 1e-5, BatchNormMode::Train(None)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        let out = batch_norm2d(&x, &gamma, &Tensor::full(&[3], 2.5), 1e-5, BatchNormMode::Train(None)).unwrap();
        assert!(out.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn train_output_is_standardized() {
        let mut rng = crate::rng::stream(3, &[]);
        let data: Vec<f32> = (0..2 * 4 * 8 * 8).map(|_| rng.random::<f32>() * 7.0 - 2.0).collect();
        let x = Tensor::from_vec(data, &[2, 4, 8, 8]).unwrap();
        let out = batch_norm2d(&x, &Tensor::full(&[4], 1.0), &Tensor::zeros(&[4]), 1e-5, BatchNormMode::Train(None)).unwrap();
        for ch in 0..4 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|i| out.data()[(i * 4 + ch) * 64..(i * 4 + ch + 1) * 64].iter().map(|&v| v as f64))
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-5, "mean {m}");
            assert!((v - 1.0).abs() < 1e-3, "var {v}");
        }
    }

    #[test]
    fn running_stats_update_and_eval() {
        let x = Tensor::from_vec(vec![1.0, 3.0, 1.0, 3.0], &[1, 1, 2, 2]).unwrap();
        let mut stats = RunningStats::new(1);
        let g = Tensor::full(&[1], 1.0);
        let b = Tensor::zeros(&[1]);
        batch_norm2d(&x, &g, &b, 1e-5, BatchNormMode::Train(Some(&mut stats))).unwrap();
        assert!((stats.mean[0] - 0.2).abs() < 1e-6);
        // biased var 1, unbiased 4/3
        assert!((stats.var[0] - (0.9 + 0.1 * 4.0 / 3.0)).abs() < 1e-6);
        let out = batch_norm2d(&x, &g, &b, 1e-5, BatchNormMode::Eval(&stats)).unwrap();
        let want = (1.0 - 0.2) / (stats.var[0] + 1e-5f32).sqrt();
        assert!((out.data()[0] - want).abs() < 1e-6);
    }

    #[test]
    fn single_value_channels_keep_running_variance() {
        let x = Tensor::from_vec(vec![2.0], &[1, 1, 1, 1]).unwrap();
        let mut stats = RunningStats::new(1);
        let (g, b) = (Tensor::full(&[1], 1.0), Tensor::zeros(&[1]));
        batch_norm2d(&x, &g, &b, 1e-5, BatchNormMode::Train(Some(&mut stats))).unwrap();
        assert!((stats.mean[0] - 0.2).abs() < 1e-6);
        assert_eq!(stats.var[0], 1.0);
    }

    #[test]
    fn non_positive_eps_rejected() {
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        let g = Tensor::full(&[1], 1.0);
        let b = Tensor::zeros(&[1]);
        assert!(batch_norm2d(&x, &g, &b, 0.0, BatchNormMode::Train(None)).is_err());
        assert!(batch_norm2d(&x, &g, &b, -1.0, BatchNormMode::Train(None)).is_err());
    }
}
