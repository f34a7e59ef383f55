use super::{
    restore_from, run_stage, running_stats_tensors, stats_slots, ConvKind, ForwardOptions, NamedTensor, ParamSet,
    Stage, StageBuilder,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{concat_channels, dropout, Activation, RunningStats, Tensor};

/// Decoder stages (counted from the bottleneck) that apply dropout in
/// training mode.
pub const DROPOUT_STAGES: usize = 3;

/// U-Net generator architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub base_layer_k: usize,
    /// Number of encoder stages; the decoder mirrors it.
    pub depth: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub channel_cap: usize,
}

impl GeneratorConfig {
    /// Four 3-channel buffers in, RGB out, widths capped at `8·K`.
    pub fn new(base_layer_k: usize, depth: usize) -> Self {
        GeneratorConfig {
            base_layer_k,
            depth,
            in_channels: 12,
            out_channels: 3,
            channel_cap: 8 * base_layer_k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_layer_k == 0 {
            return Err(Error::invalid("generator base layer K must be ≥ 1"));
        }
        if self.depth == 0 || self.depth > 16 {
            return Err(Error::invalid(format!("generator depth {} outside 1..=16", self.depth)));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.channel_cap == 0 {
            return Err(Error::invalid("generator channel counts must be ≥ 1"));
        }
        Ok(())
    }

    /// Required input height and width, `2^depth`.
    pub fn resolution(&self) -> usize {
        1 << self.depth
    }

    /// Output channels of each encoder stage: `K, 2K, 4K, …` capped.
    pub fn encoder_channels(&self) -> Vec<usize> {
        (0..self.depth)
            .map(|i| (self.base_layer_k << i).min(self.channel_cap))
            .collect()
    }
}

/// U-Net: strided-conv encoders, transposed-conv decoders, and skip
/// connections concatenating each encoder output onto the input of the
/// decoder at the same resolution.
#[derive(Clone, Debug)]
pub struct Generator {
    config: GeneratorConfig,
    params: ParamSet,
    stats: Vec<RunningStats>,
    encoders: Vec<Stage>,
    decoders: Vec<Stage>,
}

impl Generator {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::default();
        let mut stats = Vec::new();
        let mut builder = StageBuilder {
            params: &mut params,
            stats: &mut stats,
            seed: rng::derive_seed(seed, &[0x6E4]),
            prefix: "gen",
        };

        let widths = config.encoder_channels();
        let d = config.depth;
        let mut encoders = Vec::with_capacity(d);
        for i in 0..d {
            let cin = if i == 0 { config.in_channels } else { widths[i - 1] };
            encoders.push(builder.stage(
                &format!("enc{i}"),
                ConvKind::Down,
                cin,
                widths[i],
                2,
                i > 0,
                Activation::LEAKY,
            )?);
        }
        let mut decoders = Vec::with_capacity(d);
        for j in 0..d {
            let last = j + 1 == d;
            let cin = if j == 0 {
                widths[d - 1]
            } else {
                // previous decoder output + matching encoder output
                widths[d - 1 - j] * 2
            };
            let cout = if last { config.out_channels } else { widths[d - 2 - j] };
            decoders.push(builder.stage(
                &format!("dec{j}"),
                ConvKind::Up,
                cin,
                cout,
                2,
                !last,
                if last { Activation::Tanh } else { Activation::Relu },
            )?);
        }
        Ok(Generator {
            config,
            params,
            stats,
            encoders,
            decoders,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
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

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let [_, c, h, w] = input.dims4()?;
        if c != self.config.in_channels {
            return Err(Error::shape(format!(
                "generator expects {} input channels, got {c}",
                self.config.in_channels
            )));
        }
        let s = self.config.resolution();
        if (h, w) != (s, s) {
            return Err(Error::shape(format!(
                "generator of depth {} needs {s}×{s} input, got {h}×{w}",
                self.config.depth
            )));
        }
        Ok(())
    }

    /// Forward pass. In train mode with `update_stats`, batch-norm running
    /// averages are updated.
    pub fn forward(&mut self, input: &Tensor, opts: &ForwardOptions) -> Result<Tensor> {
        self.forward_impl(input, opts, None, true)
    }

    /// Eval-mode forward on shared parameters.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut frozen = self.stats.clone();
        Self::run(
            &self.params,
            &self.encoders,
            &self.decoders,
            &mut frozen,
            &self.config,
            input,
            &ForwardOptions::eval(),
            None,
        )
    }

    /// Forward pass with the skip connection from encoder `skip` replaced
    /// by zeros. Running statistics are left untouched.
    pub fn forward_without_skip(&mut self, input: &Tensor, opts: &ForwardOptions, skip: usize) -> Result<Tensor> {
        if skip + 1 >= self.config.depth {
            return Err(Error::invalid(format!(
                "encoder {skip} has no skip connection at depth {}",
                self.config.depth
            )));
        }
        self.forward_impl(input, opts, Some(skip), false)
    }

    fn forward_impl(&mut self, input: &Tensor, opts: &ForwardOptions, zero_skip: Option<usize>, write_stats: bool) -> Result<Tensor> {
        self.check_input(input)?;
        let mut scratch;
        let stats = if write_stats {
            &mut self.stats
        } else {
            scratch = self.stats.clone();
            &mut scratch
        };
        Self::run(&self.params, &self.encoders, &self.decoders, stats, &self.config, input, opts, zero_skip)
    }

    #[allow(clippy::too_many_arguments)]
    fn run(
        params: &ParamSet,
        encoders: &[Stage],
        decoders: &[Stage],
        stats: &mut [RunningStats],
        config: &GeneratorConfig,
        input: &Tensor,
        opts: &ForwardOptions,
        zero_skip: Option<usize>,
    ) -> Result<Tensor> {
        let n_enc_stats = encoders.iter().filter(|s| s.norm.is_some()).count();
        let (enc_stats, dec_stats) = stats.split_at_mut(n_enc_stats);
        let mut enc_slots = stats_slots(encoders, enc_stats);
        let mut dec_slots = stats_slots(decoders, dec_stats);

        let d = config.depth;
        let mut skips = Vec::with_capacity(d);
        let mut x = input.clone();
        for (i, stage) in encoders.iter().enumerate() {
            x = run_stage(stage, params, &x, enc_slots[i].take(), opts)?;
            skips.push(x.clone());
        }
        for (j, stage) in decoders.iter().enumerate() {
            if j > 0 {
                let e = d - 1 - j;
                let skip = if zero_skip == Some(e) {
                    Tensor::zeros(skips[e].shape())
                } else {
                    skips[e].clone()
                };
                x = concat_channels(&[&x, &skip])?;
            }
            x = run_stage(stage, params, &x, dec_slots[j].take(), opts)?;
            if opts.train && j < DROPOUT_STAGES && j + 1 < d {
                x = dropout(&x, opts.dropout_p, true, rng::derive_seed(opts.seed, &[0xD7, j as u64]))?;
            }
        }
        Ok(x)
    }

    pub fn state_tensors(&self) -> Vec<NamedTensor> {
        let mut out: Vec<NamedTensor> = self
            .params
            .names()
            .iter()
            .zip(self.params.tensors())
            .map(|(n, t)| NamedTensor::new(n.clone(), t.shape().to_vec(), t.to_vec()))
            .collect();
        let stages: Vec<Stage> = self.encoders.iter().chain(&self.decoders).cloned().collect();
        out.extend(running_stats_tensors(&stages, &self.params, &self.stats));
        out
    }

    pub fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        let stages: Vec<Stage> = self.encoders.iter().chain(&self.decoders).cloned().collect();
        restore_from(&stages, &mut self.params, &mut self.stats, tensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{l1_loss, Adam, AdamState};

    fn input(n: usize, s: usize, seed: u64) -> Tensor {
        use rand::Rng;
        let mut r = crate::rng::stream(seed, &[]);
        Tensor::from_vec((0..n * 12 * s * s).map(|_| r.random::<f32>() * 2.0 - 1.0).collect(), &[n, 12, s, s]).unwrap()
    }

    #[test]
    fn ladder_k32_depth8() {
        let c = GeneratorConfig::new(32, 8);
        assert_eq!(c.encoder_channels(), vec![32, 64, 128, 256, 256, 256, 256, 256]);
    }

    #[test]
    fn first_weight_shape_k64() {
        let g = Generator::new(GeneratorConfig::new(64, 8), 0).unwrap();
        assert_eq!(g.params().get(0).shape(), &[64, 12, 4, 4]);
        assert_eq!(g.params().names()[0], "gen.enc0.weight");
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Generator::new(GeneratorConfig::new(8, 5), 9).unwrap();
        let b = Generator::new(GeneratorConfig::new(8, 5), 9).unwrap();
        let c = Generator::new(GeneratorConfig::new(8, 5), 10).unwrap();
        for (x, y) in a.params().tensors().iter().zip(b.params().tensors()) {
            assert_eq!(x.data(), y.data());
        }
        assert_ne!(a.params().get(0).data(), c.params().get(0).data());
    }

    #[test]
    fn shape_and_range_depth6() {
        let mut g = Generator::new(GeneratorConfig::new(8, 6), 1).unwrap();
        let y = g.forward(&input(2, 64, 3), &ForwardOptions::train(0.5, 4)).unwrap();
        assert_eq!(y.shape(), &[2, 3, 64, 64]);
        assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn eval_is_deterministic() {
        let g = Generator::new(GeneratorConfig::new(4, 5), 1).unwrap();
        let x = input(1, 32, 5);
        assert_eq!(g.infer(&x).unwrap().data(), g.infer(&x).unwrap().data());
    }

    #[test]
    fn rejects_wrong_channels_and_resolution() {
        let g = Generator::new(GeneratorConfig::new(4, 5), 1).unwrap();
        let err = g.infer(&Tensor::zeros(&[1, 11, 32, 32])).unwrap_err().to_string();
        assert!(err.contains("12 input channels"), "{err}");
        assert!(g.infer(&Tensor::zeros(&[1, 12, 64, 64])).is_err());
        assert!(Generator::new(GeneratorConfig::new(0, 5), 1).is_err());
        assert!(Generator::new(GeneratorConfig::new(4, 0), 1).is_err());
    }

    #[test]
    fn every_skip_matters_after_brief_training() {
        let mut g = Generator::new(GeneratorConfig::new(4, 4), 2).unwrap();
        let x = input(2, 16, 7);
        let target = Tensor::full(&[2, 3, 16, 16], 0.3);
        let mut state = AdamState::new(g.params().tensors());
        let opt = Adam::new(2e-3);
        for step in 0..10 {
            let y = g.forward(&x, &ForwardOptions::train(0.0, step)).unwrap();
            l1_loss(&y, &target).unwrap().backward().unwrap();
            opt.step(g.params_mut().tensors_mut(), &mut state).unwrap();
        }
        let opts = ForwardOptions::eval();
        let full = g.forward(&x, &opts).unwrap();
        for skip in 0..3 {
            let ablated = g.forward_without_skip(&x, &opts, skip).unwrap();
            let diff = l1_loss(&full, &ablated).unwrap().item();
            assert!(diff > 0.0, "skip {skip} had no effect");
        }
        assert!(g.forward_without_skip(&x, &opts, 3).is_err());
    }
}
