//! Generator and discriminator networks and their persistence.

mod checkpoint;
mod discriminator;
mod generator;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{
    activation, batch_norm2d, conv2d, conv_transpose2d, Activation, BatchNormMode, RunningStats, Tensor,
};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedTensor, TrainingMeta, CHECKPOINT_VERSION};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig};

pub const KERNEL: usize = 4;
pub const PAD: usize = 1;
pub const BN_EPS: f32 = 1e-5;
const INIT_STD: f32 = 0.02;

/// Ordered, named trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    fn push(&mut self, name: String, tensor: Tensor) -> usize {
        self.names.push(name);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Mutable access for optimizers; shapes must not change.
    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&self) {
        self.tensors.iter().for_each(Tensor::zero_grad);
    }

    /// Replace the value of the named parameter, keeping it trainable.
    fn assign(&mut self, i: usize, data: Vec<f32>) -> Result<()> {
        let shape = self.tensors[i].shape().to_vec();
        if data.len() != self.tensors[i].numel() {
            return Err(Error::shape(format!(
                "tensor {} expects shape {shape:?}",
                self.names[i]
            )));
        }
        self.tensors[i] = Tensor::parameter(data, &shape)?;
        Ok(())
    }
}

/// Forward-pass behaviour shared by both networks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    /// Batch statistics and dropout active.
    pub train: bool,
    /// Fold batch statistics into the running averages (train mode only).
    pub update_stats: bool,
    pub dropout_p: f32,
    pub seed: u64,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        ForwardOptions {
            train: false,
            update_stats: false,
            dropout_p: 0.0,
            seed: 0,
        }
    }

    pub fn train(dropout_p: f32, seed: u64) -> Self {
        ForwardOptions {
            train: true,
            update_stats: true,
            dropout_p,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ConvKind {
    Down,
    Up,
}

/// One convolution (optionally followed by batch norm) plus its activation.
#[derive(Clone, Debug)]
struct Stage {
    kind: ConvKind,
    stride: usize,
    weight: usize,
    bias: Option<usize>,
    norm: Option<(usize, usize)>,
    activation: Activation,
}

struct StageBuilder<'a> {
    params: &'a mut ParamSet,
    stats: &'a mut Vec<RunningStats>,
    seed: u64,
    prefix: &'static str,
}

impl StageBuilder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn stage(
        &mut self,
        name: &str,
        kind: ConvKind,
        cin: usize,
        cout: usize,
        stride: usize,
        with_norm: bool,
        activation: Activation,
    ) -> Result<Stage> {
        let index = self.params.len() as u64;
        let shape = match kind {
            ConvKind::Down => [cout, cin, KERNEL, KERNEL],
            ConvKind::Up => [cin, cout, KERNEL, KERNEL],
        };
        let numel = shape.iter().product();
        let weight = self.params.push(
            format!("{}.{name}.weight", self.prefix),
            Tensor::parameter(normal_init(self.seed, index, numel, 0.0), &shape)?,
        );
        let (bias, norm) = if with_norm {
            let gamma = self.params.push(
                format!("{}.{name}.bn.gamma", self.prefix),
                Tensor::parameter(normal_init(self.seed, index + 1, cout, 1.0), &[cout])?,
            );
            let beta = self.params.push(
                format!("{}.{name}.bn.beta", self.prefix),
                Tensor::parameter(vec![0.0; cout], &[cout])?,
            );
            self.stats.push(RunningStats::new(cout));
            (None, Some((gamma, beta)))
        } else {
            let bias = self.params.push(
                format!("{}.{name}.bias", self.prefix),
                Tensor::parameter(vec![0.0; cout], &[cout])?,
            );
            (Some(bias), None)
        };
        Ok(Stage {
            kind,
            stride,
            weight,
            bias,
            norm,
            activation,
        })
    }
}

fn normal_init(seed: u64, index: u64, n: usize, mean: f32) -> Vec<f32> {
    let mut rng = rng::stream(seed, &[0x1417, index]);
    let dist = Normal::new(mean, INIT_STD).expect("valid normal");
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Run one stage. `stats` is the stage's running-statistics slot when it has
/// a norm layer.
fn run_stage(
    stage: &Stage,
    params: &ParamSet,
    input: &Tensor,
    stats: Option<&mut RunningStats>,
    opts: &ForwardOptions,
) -> Result<Tensor> {
    let weight = params.get(stage.weight);
    let bias = stage.bias.map(|b| params.get(b));
    let mut x = match stage.kind {
        ConvKind::Down => conv2d(input, weight, bias, stage.stride, PAD)?,
        ConvKind::Up => conv_transpose2d(input, weight, bias, stage.stride, PAD)?,
    };
    if let Some((g, b)) = stage.norm {
        let stats = stats.ok_or_else(|| Error::invalid("stage with batch norm has no running stats"))?;
        let mode = if !opts.train {
            BatchNormMode::Eval(stats)
        } else if opts.update_stats {
            BatchNormMode::Train(Some(stats))
        } else {
            BatchNormMode::Train(None)
        };
        x = batch_norm2d(&x, params.get(g), params.get(b), BN_EPS, mode)?;
    }
    Ok(activation(&x, stage.activation))
}

/// Stats slot for each stage, in stage order.
fn stats_slots<'a>(stages: &[Stage], stats: &'a mut [RunningStats]) -> Vec<Option<&'a mut RunningStats>> {
    let mut iter = stats.iter_mut();
    stages
        .iter()
        .map(|s| if s.norm.is_some() { iter.next() } else { None })
        .collect()
}

fn running_stats_tensors(stages: &[Stage], params: &ParamSet, stats: &[RunningStats]) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    let mut it = stats.iter();
    for s in stages {
        if let Some((g, _)) = s.norm {
            let st = it.next().expect("one stats slot per norm stage");
            let base = params.names()[g].trim_end_matches(".gamma").to_string();
            out.push(NamedTensor::new(format!("{base}.running_mean"), vec![st.mean.len()], st.mean.clone()));
            out.push(NamedTensor::new(format!("{base}.running_var"), vec![st.var.len()], st.var.clone()));
        }
    }
    out
}

/// Restore parameters and running statistics from named tensors with the
/// given prefix. Every expected tensor must be present with a matching shape.
fn restore_from(
    stages: &[Stage],
    params: &mut ParamSet,
    stats: &mut [RunningStats],
    tensors: &[NamedTensor],
) -> Result<()> {
    let lookup = |name: &str| tensors.iter().find(|t| t.name == name);
    let mut updates = Vec::new();
    for i in 0..params.len() {
        let name = &params.names()[i];
        let t = lookup(name).ok_or_else(|| Error::shape(format!("checkpoint is missing tensor {name}")))?;
        if t.shape != params.get(i).shape() {
            return Err(Error::shape(format!(
                "tensor {name}: checkpoint shape {:?} does not match model shape {:?}",
                t.shape,
                params.get(i).shape()
            )));
        }
        updates.push((i, t.data.clone()));
    }
    let expected = running_stats_tensors(stages, params, stats);
    for e in &expected {
        let t = lookup(&e.name).ok_or_else(|| Error::shape(format!("checkpoint is missing tensor {}", e.name)))?;
        if t.shape != e.shape {
            return Err(Error::shape(format!(
                "tensor {}: checkpoint shape {:?} does not match model shape {:?}",
                e.name, t.shape, e.shape
            )));
        }
    }
    for (i, data) in updates {
        params.assign(i, data)?;
    }
    for (slot, pair) in stats.iter_mut().zip(expected.chunks(2)) {
        slot.mean = lookup(&pair[0].name).expect("checked").data.clone();
        slot.var = lookup(&pair[1].name).expect("checked").data.clone();
    }
    Ok(())
}
