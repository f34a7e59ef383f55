use super::{
    restore_from, run_stage, running_stats_tensors, stats_slots, ConvKind, ForwardOptions, NamedTensor, ParamSet,
    Stage, StageBuilder,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{concat_channels, mean, Activation, RunningStats, Tensor};

/// Strides of the five encoder stages.
const STRIDES: [usize; 5] = [2, 2, 2, 1, 1];

/// PatchGAN discriminator architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    pub base_layer_k: usize,
    pub num_encoders: usize,
    /// Condition channels plus image channels.
    pub in_channels: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig::new(64)
    }
}

impl DiscriminatorConfig {
    pub fn new(base_layer_k: usize) -> Self {
        DiscriminatorConfig {
            base_layer_k,
            num_encoders: STRIDES.len(),
            in_channels: 15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_layer_k == 0 {
            return Err(Error::invalid("discriminator base layer k must be ≥ 1"));
        }
        if self.num_encoders != STRIDES.len() {
            return Err(Error::invalid(format!(
                "discriminator has {} encoders, {} requested",
                STRIDES.len(),
                self.num_encoders
            )));
        }
        if self.in_channels == 0 {
            return Err(Error::invalid("discriminator input channels must be ≥ 1"));
        }
        Ok(())
    }

    /// `k, 2k, 4k, 8k, 1`.
    pub fn layer_channels(&self) -> Vec<usize> {
        let k = self.base_layer_k;
        vec![k, 2 * k, 4 * k, 8 * k, 1]
    }
}

/// Five convolutional encoders producing a map of per-patch real/fake
/// probabilities.
#[derive(Clone, Debug)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    params: ParamSet,
    stats: Vec<RunningStats>,
    stages: Vec<Stage>,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::default();
        let mut stats = Vec::new();
        let mut builder = StageBuilder {
            params: &mut params,
            stats: &mut stats,
            seed: rng::derive_seed(seed, &[0xD15C]),
            prefix: "disc",
        };
        let widths = config.layer_channels();
        let last = widths.len() - 1;
        let mut stages = Vec::with_capacity(widths.len());
        for (i, &cout) in widths.iter().enumerate() {
            let cin = if i == 0 { config.in_channels } else { widths[i - 1] };
            stages.push(builder.stage(
                &format!("layer{i}"),
                ConvKind::Down,
                cin,
                cout,
                STRIDES[i],
                i != 0 && i != last,
                if i == last { Activation::Sigmoid } else { Activation::LEAKY },
            )?);
        }
        Ok(Discriminator {
            config,
            params,
            stats,
            stages,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.stats
    }

    /// Patch probability map `N×1×P×P` for `condition` (N×12×S×S) paired
    /// with `image` (N×3×S×S).
    pub fn forward(&mut self, condition: &Tensor, image: &Tensor, opts: &ForwardOptions) -> Result<Tensor> {
        let [cn, cc, ch, cw] = condition.dims4()?;
        let [n, ic, ih, iw] = image.dims4()?;
        if cn != n {
            return Err(Error::shape(format!(
                "discriminator: condition batch {cn} does not match image batch {n}"
            )));
        }
        if (ch, cw) != (ih, iw) {
            return Err(Error::shape(format!(
                "discriminator: condition is {ch}×{cw}, image is {ih}×{iw}"
            )));
        }
        if cc + ic != self.config.in_channels {
            return Err(Error::shape(format!(
                "discriminator expects {} input channels, got {cc} + {ic}",
                self.config.in_channels
            )));
        }
        let mut x = concat_channels(&[condition, image])?;
        let mut slots = stats_slots(&self.stages, &mut self.stats);
        for (i, stage) in self.stages.iter().enumerate() {
            x = run_stage(stage, &self.params, &x, slots[i].take(), opts)?;
        }
        Ok(x)
    }

    /// Mean patch probability.
    pub fn score(patches: &Tensor) -> Tensor {
        mean(patches)
    }

    pub fn state_tensors(&self) -> Vec<NamedTensor> {
        let mut out: Vec<NamedTensor> = self
            .params
            .names()
            .iter()
            .zip(self.params.tensors())
            .map(|(n, t)| NamedTensor::new(n.clone(), t.shape().to_vec(), t.to_vec()))
            .collect();
        out.extend(running_stats_tensors(&self.stages, &self.params, &self.stats));
        out
    }

    pub fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        restore_from(&self.stages, &mut self.params, &mut self.stats, tensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_k64() {
        assert_eq!(DiscriminatorConfig::new(64).layer_channels(), vec![64, 128, 256, 512, 1]);
    }

    #[test]
    fn patch_map_at_64() {
        let mut d = Discriminator::new(DiscriminatorConfig::new(8), 3).unwrap();
        let cond = Tensor::full(&[2, 12, 64, 64], 0.1);
        let img = Tensor::full(&[2, 3, 64, 64], -0.4);
        let p = d.forward(&cond, &img, &ForwardOptions::eval()).unwrap();
        assert_eq!(p.shape(), &[2, 1, 6, 6]);
        assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let s = Discriminator::score(&p).item();
        let m = p.data().iter().map(|&v| v as f64).sum::<f64>() / p.numel() as f64;
        assert!((s as f64 - m).abs() < 1e-6);
    }

    #[test]
    fn rejects_batch_mismatch() {
        let mut d = Discriminator::new(DiscriminatorConfig::new(4), 3).unwrap();
        let cond = Tensor::zeros(&[2, 12, 32, 32]);
        let img = Tensor::zeros(&[1, 3, 32, 32]);
        let err = d.forward(&cond, &img, &ForwardOptions::eval()).unwrap_err().to_string();
        assert!(err.contains("batch"), "{err}");
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Discriminator::new(DiscriminatorConfig::new(4), 1).unwrap();
        let b = Discriminator::new(DiscriminatorConfig::new(4), 1).unwrap();
        for (x, y) in a.params().tensors().iter().zip(b.params().tensors()) {
            assert_eq!(x.data(), y.data());
        }
    }
}
