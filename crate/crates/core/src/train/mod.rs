//! Adversarial training: one discriminator update then one generator update
//! per mini-batch, validation, CSV statistics and resumable checkpoints.

mod data;
mod experiment;
mod infer;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

pub use data::{Batch, FrameSet, Sample};
pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentKind, ExperimentReport, RunSummary, TimingRow,
};
pub use infer::{infer, InferInputs, InferOutput};

use crate::error::{Error, Result};
use crate::metrics::{ImageRef, MetricReport};
use crate::nn::{
    load_checkpoint, save_checkpoint, Checkpoint, Discriminator, DiscriminatorConfig, ForwardOptions, Generator,
    GeneratorConfig, TrainingMeta,
};
use crate::scene::{to_display, DatasetManifest, Split};
use crate::tensor::{add, bce_loss, l1_loss, scale, Adam, AdamState, Tensor};
use crate::{io, rng};

pub const REAL_LABEL: f32 = 1.0;
pub const FAKE_LABEL: f32 = 0.0;
pub const STATS_FILE: &str = "stats.csv";
pub const LATEST_CHECKPOINT: &str = "latest.dicp";
pub const STATS_HEADER: &str = "epoch,g_loss,d_loss,l1,val_mse,val_ssim,seconds";

// Stream tags for seeds derived from the run seed.
const GEN_INIT: u64 = 1;
const DISC_INIT: u64 = 2;
const SHUFFLE: u64 = 3;
const STEP: u64 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub lr: f32,
    pub dropout_p: f32,
    pub lambda_l1: f32,
    pub base_layer_k: usize,
    pub depth: usize,
    pub disc_base_k: usize,
    pub seed: u64,
    /// Write a numbered checkpoint every this many epochs (0: only at the
    /// end). `latest.dicp` is refreshed after every epoch regardless.
    pub checkpoint_interval: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Split scored at the end of each epoch.
    pub val_split: Split,
    /// Train on a nested seeded subset of this many frames.
    pub train_frames: Option<usize>,
    /// Continue from `out_dir/latest.dicp` when it exists.
    pub resume: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 4,
            lr: 2e-4,
            dropout_p: 0.5,
            lambda_l1: 100.0,
            base_layer_k: 32,
            depth: 6,
            disc_base_k: 64,
            seed: 0,
            checkpoint_interval: 10,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs"),
            val_split: Split::Val,
            train_frames: None,
            resume: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be ≥ 1"));
        }
        if !(self.lambda_l1 >= 0.0) || !self.lambda_l1.is_finite() {
            return Err(Error::invalid(format!("L1 weight must be finite and ≥ 0, got {}", self.lambda_l1)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        self.generator_config().validate()?;
        self.discriminator_config().validate()
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig::new(self.base_layer_k, self.depth)
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig::new(self.disc_base_k)
    }

    pub fn adam(&self) -> Adam {
        Adam::new(self.lr)
    }
}

/// Per-epoch means over training steps plus validation metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: u64,
    pub g_loss: f64,
    pub d_loss: f64,
    pub l1: f64,
    pub val_mse: f64,
    pub val_ssim: f64,
    pub seconds: f64,
}

impl EpochStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.g_loss, self.d_loss, self.l1, self.val_mse, self.val_ssim, self.seconds
        )
    }

    pub fn parse_csv_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return None;
        }
        let num = |i: usize| f[i].trim().parse::<f64>().ok();
        Some(EpochStats {
            epoch: f[0].trim().parse().ok()?,
            g_loss: num(1)?,
            d_loss: num(2)?,
            l1: num(3)?,
            val_mse: num(4)?,
            val_ssim: num(5)?,
            seconds: num(6)?,
        })
    }
}

pub fn stats_csv(stats: &[EpochStats]) -> String {
    let mut s = format!("{STATS_HEADER}\n");
    for row in stats {
        let _ = writeln!(s, "{}", row.csv_row());
    }
    s
}

/// Losses from one [`Trainer::train_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    /// Adversarial term plus `λ`·L1.
    pub g_loss: f32,
    pub g_adversarial: f32,
    pub l1: f32,
    pub d_loss: f32,
}

/// Generator objective split into its parts.
#[derive(Clone, Debug)]
pub struct GeneratorObjective {
    pub total: Tensor,
    pub adversarial: f32,
    pub l1: f32,
}

/// `BCE(patches, real) + λ·L1(fake, target)`.
pub fn generator_objective(patches: &Tensor, fake: &Tensor, target: &Tensor, lambda: f32) -> Result<GeneratorObjective> {
    let adversarial = bce_loss(patches, &Tensor::full(patches.shape(), REAL_LABEL))?;
    let l1 = l1_loss(fake, target)?;
    let total = add(&adversarial, &scale(&l1, lambda))?;
    Ok(GeneratorObjective {
        adversarial: adversarial.item(),
        l1: l1.item(),
        total,
    })
}

fn finite(value: f32, what: &str, step: u64) -> Result<f32> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
            step,
        })
    }
}

/// Both networks with their optimizer states.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
    pub adam: Adam,
    pub lambda_l1: f32,
    pub dropout_p: f32,
    pub meta: TrainingMeta,
}

impl Trainer {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(config.generator_config(), rng::derive_seed(config.seed, &[GEN_INIT]))?;
        let discriminator =
            Discriminator::new(config.discriminator_config(), rng::derive_seed(config.seed, &[DISC_INIT]))?;
        Ok(Trainer {
            gen_opt: AdamState::new(generator.params().tensors()),
            disc_opt: AdamState::new(discriminator.params().tensors()),
            generator,
            discriminator,
            adam: config.adam(),
            lambda_l1: config.lambda_l1,
            dropout_p: config.dropout_p,
            meta: TrainingMeta {
                seed: config.seed,
                ..TrainingMeta::default()
            },
        })
    }

    /// Restore networks, optimizer moments and progress. The checkpoint's
    /// architecture and seed must match `config`.
    pub fn from_checkpoint(checkpoint: &Checkpoint, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if checkpoint.generator != config.generator_config() || checkpoint.discriminator != config.discriminator_config() {
            return Err(Error::invalid(format!(
                "checkpoint networks (K={}, depth {}, disc k={}) differ from the run (K={}, depth {}, disc k={})",
                checkpoint.generator.base_layer_k,
                checkpoint.generator.depth,
                checkpoint.discriminator.base_layer_k,
                config.base_layer_k,
                config.depth,
                config.disc_base_k
            )));
        }
        if checkpoint.meta.seed != config.seed {
            return Err(Error::invalid(format!(
                "checkpoint was trained with seed {}, run uses seed {}",
                checkpoint.meta.seed, config.seed
            )));
        }
        if !checkpoint.has_optimizer_state() {
            return Err(Error::invalid("checkpoint has no optimizer state; cannot resume training"));
        }
        let generator = checkpoint.generator()?;
        let discriminator = checkpoint.discriminator()?;
        Ok(Trainer {
            gen_opt: checkpoint.adam_state(generator.params().names(), checkpoint.meta.gen_adam_steps)?,
            disc_opt: checkpoint.adam_state(discriminator.params().names(), checkpoint.meta.disc_adam_steps)?,
            generator,
            discriminator,
            adam: config.adam(),
            lambda_l1: config.lambda_l1,
            dropout_p: config.dropout_p,
            meta: checkpoint.meta,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(
            &self.generator,
            &self.discriminator,
            Some((&self.gen_opt, &self.disc_opt)),
            self.meta,
        )
    }

    /// Generator forward in train mode (dropout on, batch statistics folded
    /// into the running averages).
    pub fn generate(&mut self, batch: &Batch, seed: u64) -> Result<Tensor> {
        self.generator.forward(&batch.input, &ForwardOptions::train(self.dropout_p, seed))
    }

    /// `½[BCE(D(x, y), real) + BCE(D(x, fake), fake)]`; updates D only.
    /// `fake` should already be detached.
    pub fn discriminator_step(&mut self, batch: &Batch, fake: &Tensor) -> Result<f32> {
        let opts = ForwardOptions::train(0.0, 0);
        self.discriminator.params().zero_grad();
        let real_p = self.discriminator.forward(&batch.input, &batch.target, &opts)?;
        let fake_p = self.discriminator.forward(&batch.input, fake, &opts)?;
        let loss = scale(
            &add(
                &bce_loss(&real_p, &Tensor::full(real_p.shape(), REAL_LABEL))?,
                &bce_loss(&fake_p, &Tensor::full(fake_p.shape(), FAKE_LABEL))?,
            )?,
            0.5,
        );
        let value = finite(loss.item(), "discriminator loss", self.meta.global_step)?;
        loss.backward()?;
        self.adam.step(self.discriminator.params_mut().tensors_mut(), &mut self.disc_opt)?;
        Ok(value)
    }

    /// `BCE(D(x, fake), real) + λ·L1(fake, y)`; updates G only. D runs with
    /// batch statistics but its running averages are left alone.
    pub fn generator_step(&mut self, batch: &Batch, fake: &Tensor) -> Result<GeneratorObjective> {
        let opts = ForwardOptions {
            update_stats: false,
            ..ForwardOptions::train(0.0, 0)
        };
        self.generator.params().zero_grad();
        let patches = self.discriminator.forward(&batch.input, fake, &opts)?;
        let objective = generator_objective(&patches, fake, &batch.target, self.lambda_l1)?;
        finite(objective.total.item(), "generator loss", self.meta.global_step)?;
        objective.total.backward()?;
        self.adam.step(self.generator.params_mut().tensors_mut(), &mut self.gen_opt)?;
        // The backward pass also reached D's leaves; drop those gradients.
        self.discriminator.params().zero_grad();
        Ok(objective)
    }

    /// One D update followed by one G update on the same generated batch.
    pub fn train_step(&mut self, batch: &Batch, seed: u64) -> Result<StepLosses> {
        let fake = self.generate(batch, seed)?;
        let d_loss = self.discriminator_step(batch, &fake.detach())?;
        let g = self.generator_step(batch, &fake)?;
        self.meta.global_step += 1;
        Ok(StepLosses {
            g_loss: g.total.item(),
            g_adversarial: g.adversarial,
            l1: g.l1,
            d_loss,
        })
    }
}

/// Mean MSE and SSIM in display space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Validation {
    pub mse: f64,
    pub ssim: f64,
    pub frames: usize,
}

/// Score `predict` (network-range `3×S×S` output per sample) against the
/// targets, after mapping both to display space.
pub fn validate_with(samples: &FrameSet, mut predict: impl FnMut(&Sample) -> Result<Vec<f32>>) -> Result<Validation> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot validate on an empty split"));
    }
    let s = samples.resolution;
    let (mut mse, mut ssim) = (0.0, 0.0);
    for sample in &samples.samples {
        let pred: Vec<f32> = predict(sample)?.into_iter().map(to_display).collect();
        let target: Vec<f32> = sample.target.iter().map(|&v| to_display(v)).collect();
        let report = MetricReport::compute(ImageRef::new(&pred, 3, s, s)?, ImageRef::new(&target, 3, s, s)?)?;
        mse += report.mse;
        ssim += report.ssim;
    }
    let n = samples.len() as f64;
    Ok(Validation {
        mse: mse / n,
        ssim: ssim / n,
        frames: samples.len(),
    })
}

/// Eval-mode generator (no dropout, running batch-norm statistics).
pub fn validate(generator: &Generator, samples: &FrameSet) -> Result<Validation> {
    let s = samples.resolution;
    validate_with(samples, |sample| {
        let x = Tensor::from_vec(sample.input.clone(), &[1, 12, s, s])?;
        Ok(generator.infer(&x)?.to_vec())
    })
}

/// Outcome of [`train`].
#[derive(Clone, Debug)]
pub struct TrainReport {
    /// All epochs so far, including any before a resume.
    pub stats: Vec<EpochStats>,
    /// Steps run by this call.
    pub steps: u64,
    pub checkpoint: PathBuf,
    pub trainer: Trainer,
}

fn read_stats(path: &Path, upto_epoch: u64) -> Result<Vec<EpochStats>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let row = EpochStats::parse_csv_row(line)
            .ok_or_else(|| Error::corrupt(path, format!("line {}: malformed stats row", i + 1)))?;
        if row.epoch <= upto_epoch {
            out.push(row);
        }
    }
    Ok(out)
}

/// Load the dataset named in `config` and train on it.
pub fn train(config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let manifest = DatasetManifest::load(&config.data_dir)?;
    let want = config.generator_config().resolution();
    if manifest.resolution != want {
        return Err(Error::invalid(format!(
            "dataset is {0}×{0} but a depth-{1} generator needs {want}×{want}",
            manifest.resolution, config.depth
        )));
    }
    let mut train_set = FrameSet::load(&config.data_dir, &manifest, Split::Train)?;
    if train_set.is_empty() {
        return Err(Error::invalid("dataset has no training frames"));
    }
    if let Some(n) = config.train_frames {
        train_set = train_set.subset(n, config.seed)?;
    }
    let val_set = FrameSet::load(&config.data_dir, &manifest, config.val_split)?;
    if val_set.is_empty() {
        return Err(Error::invalid(format!("dataset has no {} frames to validate on", config.val_split)));
    }
    train_on(config, &train_set, &val_set)
}

/// Train on preloaded frames. Writes `stats.csv`, `latest.dicp` after every
/// epoch, and `epoch_NNNN.dicp` at the checkpoint interval and at the end.
pub fn train_on(config: &TrainConfig, train_set: &FrameSet, val_set: &FrameSet) -> Result<TrainReport> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("no training frames"));
    }
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let latest = config.out_dir.join(LATEST_CHECKPOINT);
    let stats_path = config.out_dir.join(STATS_FILE);
    let mut trainer = if config.resume && latest.exists() {
        let t = Trainer::from_checkpoint(&load_checkpoint(&latest)?, config)?;
        log::info!("resuming from {} after epoch {}", latest.display(), t.meta.epoch);
        t
    } else {
        Trainer::new(config)?
    };
    let mut stats = if config.resume {
        read_stats(&stats_path, trainer.meta.epoch)?
    } else {
        Vec::new()
    };
    let mut steps = 0;
    let res = train_set.resolution;
    while trainer.meta.epoch < config.epochs {
        let epoch = trainer.meta.epoch;
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng::stream(config.seed, &[SHUFFLE, epoch]));
        let (mut g, mut d, mut l1) = (0.0f64, 0.0f64, 0.0f64);
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        for (i, idx) in batches.iter().enumerate() {
            let samples: Vec<&Sample> = idx.iter().map(|&k| &train_set.samples[k]).collect();
            let batch = Batch::new(&samples, res)?;
            let losses = trainer.train_step(&batch, rng::derive_seed(config.seed, &[STEP, epoch, i as u64]))?;
            g += losses.g_loss as f64;
            d += losses.d_loss as f64;
            l1 += losses.l1 as f64;
            steps += 1;
        }
        let n = batches.len() as f64;
        let val = validate(&trainer.generator, val_set)?;
        trainer.meta.epoch += 1;
        let row = EpochStats {
            epoch: trainer.meta.epoch,
            g_loss: g / n,
            d_loss: d / n,
            l1: l1 / n,
            val_mse: val.mse,
            val_ssim: val.ssim,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {}/{}: g {:.4} d {:.4} l1 {:.4} val mse {:.5} ssim {:.4} ({:.1}s)",
            row.epoch,
            config.epochs,
            row.g_loss,
            row.d_loss,
            row.l1,
            row.val_mse,
            row.val_ssim,
            row.seconds
        );
        stats.push(row);
        let checkpoint = trainer.checkpoint();
        save_checkpoint(&latest, &checkpoint)?;
        let e = trainer.meta.epoch;
        if (config.checkpoint_interval > 0 && e % config.checkpoint_interval == 0) || e == config.epochs {
            save_checkpoint(config.out_dir.join(format!("epoch_{e:04}.dicp")), &checkpoint)?;
        }
        io::write_atomic(&stats_path, stats_csv(&stats).as_bytes())?;
    }
    if !latest.exists() {
        save_checkpoint(&latest, &trainer.checkpoint())?;
    }
    Ok(TrainReport {
        stats,
        steps,
        checkpoint: latest,
        trainer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamSet;

    fn tiny_config(dir: &Path) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 4,
            base_layer_k: 2,
            depth: 5,
            disc_base_k: 2,
            seed: 9,
            out_dir: dir.to_path_buf(),
            ..TrainConfig::default()
        }
    }

    fn synthetic(n: usize, res: usize, seed: u64) -> FrameSet {
        use rand::Rng;
        let mut r = rng::stream(seed, &[]);
        let plane = res * res;
        FrameSet {
            resolution: res,
            samples: (0..n)
                .map(|frame| Sample {
                    frame,
                    input: (0..12 * plane).map(|_| r.random_range(-1.0..1.0)).collect(),
                    target: (0..3 * plane).map(|_| r.random_range(-1.0..1.0)).collect(),
                })
                .collect(),
        }
    }

    fn snapshot(p: &ParamSet) -> Vec<Vec<u32>> {
        p.tensors().iter().map(|t| t.data().iter().map(|v| v.to_bits()).collect()).collect()
    }

    #[test]
    fn constant_half_discriminator_gives_ln2() {
        let patches = Tensor::full(&[2, 1, 3, 3], 0.5);
        for fill in [-0.7, 0.0, 0.9] {
            let fake = Tensor::full(&[2, 3, 4, 4], fill);
            let target = Tensor::full(&[2, 3, 4, 4], 0.1);
            let obj = generator_objective(&patches, &fake, &target, 0.0).unwrap();
            assert!((obj.total.item() - std::f32::consts::LN_2).abs() < 1e-6);
        }
    }

    #[test]
    fn step_updates_both_networks_and_decomposes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let mut t = Trainer::new(&cfg).unwrap();
        let (g0, d0) = (snapshot(t.generator.params()), snapshot(t.discriminator.params()));
        let set = synthetic(2, 32, 1);
        let batch = Batch::new(&set.samples.iter().collect::<Vec<_>>(), 32).unwrap();
        let l = t.train_step(&batch, 5).unwrap();
        assert_ne!(snapshot(t.generator.params()), g0);
        assert_ne!(snapshot(t.discriminator.params()), d0);
        let recomposed = l.g_adversarial as f64 + cfg.lambda_l1 as f64 * l.l1 as f64;
        assert!((l.g_loss as f64 - recomposed).abs() <= 1e-6 * recomposed.abs().max(1.0));
    }

    #[test]
    fn each_step_touches_only_its_network() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(&tiny_config(dir.path())).unwrap();
        let set = synthetic(2, 32, 2);
        let batch = Batch::new(&set.samples.iter().collect::<Vec<_>>(), 32).unwrap();
        let fake = t.generate(&batch, 1).unwrap();
        let g = snapshot(t.generator.params());
        t.discriminator_step(&batch, &fake.detach()).unwrap();
        assert_eq!(snapshot(t.generator.params()), g);
        let d = snapshot(t.discriminator.params());
        t.generator_step(&batch, &fake).unwrap();
        assert_eq!(snapshot(t.discriminator.params()), d);
        assert_ne!(snapshot(t.generator.params()), g);
    }

    #[test]
    fn two_epochs_of_eight_frames_is_four_steps() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let r = train_on(&cfg, &synthetic(8, 32, 3), &synthetic(2, 32, 4)).unwrap();
        assert_eq!(r.steps, 4);
        assert_eq!(r.stats.len(), 2);
        let csv = fs::read_to_string(dir.path().join(STATS_FILE)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], STATS_HEADER);
        assert_eq!(lines.len(), 3);
        for line in &lines[1..] {
            let row = EpochStats::parse_csv_row(line).unwrap();
            for v in [row.g_loss, row.d_loss, row.l1, row.val_mse, row.val_ssim, row.seconds] {
                assert!(v.is_finite());
            }
        }
        assert!(dir.path().join("epoch_0002.dicp").exists());
    }

    #[test]
    fn non_finite_input_aborts_with_step() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(&tiny_config(dir.path())).unwrap();
        let mut set = synthetic(1, 32, 5);
        set.samples[0].target[0] = f32::NAN;
        let batch = Batch::new(&[&set.samples[0]], 32).unwrap();
        match t.train_step(&batch, 0) {
            Err(Error::NonFinite { step, .. }) => assert_eq!(step, 0),
            other => panic!("expected a non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn oracle_validates_perfectly() {
        let set = synthetic(3, 32, 6);
        let v = validate_with(&set, |s| Ok(s.target.clone())).unwrap();
        assert_eq!(v.mse, 0.0);
        assert!((v.ssim - 1.0).abs() < 1e-6);
    }

    #[test]
    fn validation_ignores_frame_order() {
        let dir = tempfile::tempdir().unwrap();
        let t = Trainer::new(&tiny_config(dir.path())).unwrap();
        let set = synthetic(4, 32, 7);
        let mut rev = set.clone();
        rev.samples.reverse();
        let (a, b) = (validate(&t.generator, &set).unwrap(), validate(&t.generator, &rev).unwrap());
        assert!((a.mse - b.mse).abs() < 1e-12 && (a.ssim - b.ssim).abs() < 1e-12);
        assert_eq!(validate(&t.generator, &set).unwrap(), a);
    }

    #[test]
    fn empty_split_rejected() {
        let set = FrameSet {
            resolution: 32,
            samples: vec![],
        };
        assert!(validate_with(&set, |s| Ok(s.target.clone())).is_err());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (train_set, val_set) = (synthetic(6, 32, 8), synthetic(2, 32, 9));
        let full = TrainConfig {
            epochs: 4,
            ..tiny_config(a.path())
        };
        let straight = train_on(&full, &train_set, &val_set).unwrap();
        let half = TrainConfig {
            epochs: 2,
            ..tiny_config(b.path())
        };
        train_on(&half, &train_set, &val_set).unwrap();
        let resumed = TrainConfig {
            epochs: 4,
            resume: true,
            ..tiny_config(b.path())
        };
        let r = train_on(&resumed, &train_set, &val_set).unwrap();
        assert_eq!(r.steps, 4);
        assert_eq!(r.stats.len(), 4);
        let (x, y) = (straight.trainer.checkpoint(), r.trainer.checkpoint());
        for (p, q) in x.tensors.iter().zip(&y.tensors) {
            assert_eq!(p.name, q.name);
            let diff = p.data.iter().zip(&q.data).map(|(u, v)| (u - v).abs()).fold(0.0f32, f32::max);
            assert!(diff <= 1e-6, "{} differs by {diff}", p.name);
        }
    }
}
