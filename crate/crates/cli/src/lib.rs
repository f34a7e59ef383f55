//! Command-line front end for `deepgi`.
//!
//! Every subcommand reads its settings from three layers: flags, then the
//! matching table of an optional TOML file (`--config`), then built-in
//! defaults. Flag names are the kebab-case form of the file keys.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use deepgi_core::metrics::psnr_from_mse;
use deepgi_core::nn::load_checkpoint;
use deepgi_core::scene::{generate_dataset, split_dataset, Holdout, ObjectKind};
use deepgi_core::train::{
    infer, run_experiment, train, validate, ExperimentConfig, ExperimentKind, FrameSet, InferInputs,
};
use deepgi_core::{selftest, DatasetManifest, Split, SweepConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "DEEPGI_THREADS";

/// Why a command did not succeed; decides the exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file or values. Exit code 1.
    Usage(String),
    /// Anything that failed while doing the work. Exit code 2.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<deepgi_core::Error> for CliError {
    fn from(e: deepgi_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage(msg: impl fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "deepgi", version, about = "Screen-space global illumination with a conditional GAN")]
pub struct Cli {
    /// TOML file with one table per subcommand (`[gen-data]`, `[train]`, ...).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output; repeat for trace level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a swept Cornell-box dataset and assign splits.
    GenData(GenDataArgs),
    /// Train a generator and discriminator.
    Train(TrainArgs),
    /// Run a checkpoint on one frame.
    Infer(InferArgs),
    /// Score a checkpoint on one split.
    Eval(EvalArgs),
    /// Run one of the experiment sweeps.
    Sweep(SweepArgs),
    /// Gradient checks and renderer analytics.
    Selftest(SelftestArgs),
}

/// Settings file. Each table takes the same keys as the subcommand flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(rename = "gen-data", default)]
    pub gen_data: GenDataArgs,
    #[serde(default)]
    pub train: TrainArgs,
    #[serde(default)]
    pub infer: InferArgs,
    #[serde(default)]
    pub eval: EvalArgs,
    #[serde(default)]
    pub sweep: SweepArgs,
    #[serde(default)]
    pub selftest: SelftestArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Field-wise `flag.or(file)`.
macro_rules! layer {
    ($flags:expr, $file:expr, [$($f:ident),* $(,)?]) => {{
        let (a, b) = ($flags, $file);
        Self { $($f: a.$f.or(b.$f)),* }
    }};
}

fn parse_all<T: std::str::FromStr>(items: &[String], what: &str) -> CliResult<Vec<T>>
where
    T::Err: fmt::Display,
{
    items
        .iter()
        .map(|s| s.parse().map_err(|e| usage(format!("--{what} {s}: {e}"))))
        .collect()
}

fn echo<T: Serialize>(command: &str, resolved: &T) {
    match toml::to_string(resolved) {
        Ok(text) => log::info!("resolved {command} config:\n{}", text.trim_end()),
        Err(e) => log::warn!("could not echo {command} config: {e}"),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataArgs {
    #[arg(long)]
    pub light_start_deg: Option<f64>,
    #[arg(long)]
    pub light_end_deg: Option<f64>,
    #[arg(long)]
    pub light_steps: Option<usize>,
    #[arg(long)]
    pub object_start_deg: Option<f64>,
    #[arg(long)]
    pub object_end_deg: Option<f64>,
    #[arg(long)]
    pub object_steps: Option<usize>,
    /// Comma-separated: sphere, cube, cylinder or mesh:<file.obj>.
    #[arg(long, value_delimiter = ',')]
    pub objects: Option<Vec<String>>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub spp: Option<u32>,
    #[arg(long)]
    pub max_bounces: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset directory.
    #[arg(long, visible_alias = "out")]
    pub out_dir: Option<PathBuf>,
    /// Test range `light:LO:HI` or `object:LO:HI` in degrees; repeatable.
    #[arg(long)]
    pub holdout: Option<Vec<String>>,
    /// Share of the non-test frames drawn for validation.
    #[arg(long)]
    pub val_fraction: Option<f64>,
}

/// Everything `gen-data` needs, after layering.
#[derive(Clone, Debug, PartialEq)]
pub struct GenDataPlan {
    pub sweep: SweepConfig,
    pub out_dir: PathBuf,
    pub holdouts: Vec<Holdout>,
    pub val_fraction: f64,
}

pub const DEFAULT_DATA_DIR: &str = "data";
pub const DEFAULT_VAL_FRACTION: f64 = 0.1;

impl GenDataArgs {
    pub fn layered(self, file: Self) -> Self {
        layer!(self, file, [
            light_start_deg, light_end_deg, light_steps, object_start_deg, object_end_deg, object_steps,
            objects, resolution, spp, max_bounces, seed, out_dir, holdout, val_fraction,
        ])
    }

    pub fn resolve(self) -> CliResult<GenDataPlan> {
        let d = SweepConfig::default();
        let objects = match &self.objects {
            Some(o) => parse_all::<ObjectKind>(o, "objects")?,
            None => d.objects.clone(),
        };
        let sweep = SweepConfig {
            light_start_deg: self.light_start_deg.unwrap_or(d.light_start_deg),
            light_end_deg: self.light_end_deg.unwrap_or(d.light_end_deg),
            light_steps: self.light_steps.unwrap_or(d.light_steps),
            object_start_deg: self.object_start_deg.unwrap_or(d.object_start_deg),
            object_end_deg: self.object_end_deg.unwrap_or(d.object_end_deg),
            object_steps: self.object_steps.unwrap_or(d.object_steps),
            objects,
            resolution: self.resolution.unwrap_or(d.resolution),
            spp: self.spp.unwrap_or(d.spp),
            max_bounces: self.max_bounces.unwrap_or(d.max_bounces),
            seed: self.seed.unwrap_or(d.seed),
        };
        sweep.validate().map_err(usage)?;
        let val_fraction = self.val_fraction.unwrap_or(DEFAULT_VAL_FRACTION);
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(usage(format!("--val-fraction {val_fraction} must lie in [0, 1)")));
        }
        Ok(GenDataPlan {
            sweep,
            out_dir: self.out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
            holdouts: parse_all(self.holdout.as_deref().unwrap_or_default(), "holdout")?,
            val_fraction,
        })
    }
}

impl GenDataPlan {
    fn echo(&self) {
        let s = &self.sweep;
        echo(
            "gen-data",
            &GenDataArgs {
                light_start_deg: Some(s.light_start_deg),
                light_end_deg: Some(s.light_end_deg),
                light_steps: Some(s.light_steps),
                object_start_deg: Some(s.object_start_deg),
                object_end_deg: Some(s.object_end_deg),
                object_steps: Some(s.object_steps),
                objects: Some(s.objects.iter().map(ToString::to_string).collect()),
                resolution: Some(s.resolution),
                spp: Some(s.spp),
                max_bounces: Some(s.max_bounces),
                seed: Some(s.seed),
                out_dir: Some(self.out_dir.clone()),
                holdout: Some(self.holdouts.iter().map(ToString::to_string).collect()),
                val_fraction: Some(self.val_fraction),
            },
        );
    }
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long, visible_alias = "batch")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub dropout_p: Option<f32>,
    #[arg(long)]
    pub lambda_l1: Option<f32>,
    /// Width of the first generator stage.
    #[arg(long, visible_alias = "k")]
    pub base_layer_k: Option<usize>,
    /// Encoder stages; the input is `2^depth` pixels square.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub disc_base_k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_interval: Option<u64>,
    #[arg(long, visible_alias = "data")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, visible_alias = "out")]
    pub out_dir: Option<PathBuf>,
    /// Split scored after every epoch.
    #[arg(long)]
    pub val_split: Option<String>,
    /// Train on a seeded subset of this many frames.
    #[arg(long)]
    pub train_frames: Option<usize>,
    /// Continue from `out_dir/latest.dicp`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub resume: Option<bool>,
}

impl TrainArgs {
    pub fn layered(self, file: Self) -> Self {
        layer!(self, file, [
            epochs, batch_size, lr, dropout_p, lambda_l1, base_layer_k, depth, disc_base_k, seed,
            checkpoint_interval, data_dir, out_dir, val_split, train_frames, resume,
        ])
    }

    pub fn resolve(self) -> CliResult<TrainConfig> {
        let d = TrainConfig::default();
        let val_split = match &self.val_split {
            Some(s) => s.parse::<Split>().map_err(|e| usage(format!("--val-split {s}: {e}")))?,
            None => d.val_split,
        };
        let c = TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            dropout_p: self.dropout_p.unwrap_or(d.dropout_p),
            lambda_l1: self.lambda_l1.unwrap_or(d.lambda_l1),
            base_layer_k: self.base_layer_k.unwrap_or(d.base_layer_k),
            depth: self.depth.unwrap_or(d.depth),
            disc_base_k: self.disc_base_k.unwrap_or(d.disc_base_k),
            seed: self.seed.unwrap_or(d.seed),
            checkpoint_interval: self.checkpoint_interval.unwrap_or(d.checkpoint_interval),
            data_dir: self.data_dir.unwrap_or(d.data_dir),
            out_dir: self.out_dir.unwrap_or(d.out_dir),
            val_split,
            train_frames: self.train_frames.or(d.train_frames),
            resume: self.resume.unwrap_or(d.resume),
        };
        c.validate().map_err(usage)?;
        Ok(c)
    }

    /// The fully resolved form, for echoing.
    pub fn from_config(c: &TrainConfig) -> Self {
        TrainArgs {
            epochs: Some(c.epochs),
            batch_size: Some(c.batch_size),
            lr: Some(c.lr),
            dropout_p: Some(c.dropout_p),
            lambda_l1: Some(c.lambda_l1),
            base_layer_k: Some(c.base_layer_k),
            depth: Some(c.depth),
            disc_base_k: Some(c.disc_base_k),
            seed: Some(c.seed),
            checkpoint_interval: Some(c.checkpoint_interval),
            data_dir: Some(c.data_dir.clone()),
            out_dir: Some(c.out_dir.clone()),
            val_split: Some(c.val_split.to_string()),
            train_frames: c.train_frames,
            resume: Some(c.resume),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Dataset directory; use with `--frame`.
    #[arg(long, visible_alias = "data")]
    pub data_dir: Option<PathBuf>,
    /// Frame number from the dataset manifest.
    #[arg(long)]
    pub frame: Option<usize>,
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long)]
    pub normal: Option<PathBuf>,
    #[arg(long)]
    pub diffuse: Option<PathBuf>,
    #[arg(long)]
    pub direct: Option<PathBuf>,
    /// Optional ground truth for the preview and metrics.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, visible_alias = "out")]
    pub out_dir: Option<PathBuf>,
    /// Output file stem.
    #[arg(long)]
    pub name: Option<String>,
}

pub const DEFAULT_INFER_DIR: &str = "predictions";

impl InferArgs {
    pub fn layered(self, file: Self) -> Self {
        layer!(self, file, [ckpt, data_dir, frame, depth, normal, diffuse, direct, gt, out_dir, name])
    }

    fn resolved(mut self) -> CliResult<Self> {
        if self.ckpt.is_none() {
            return Err(usage("infer needs --ckpt"));
        }
        let buffers = [&self.depth, &self.normal, &self.diffuse, &self.direct];
        let explicit = buffers.iter().filter(|b| b.is_some()).count();
        match (self.frame, explicit) {
            (Some(_), 0) => {
                self.data_dir.get_or_insert_with(|| PathBuf::from(DEFAULT_DATA_DIR));
            }
            (None, 4) => {}
            (Some(_), _) => return Err(usage("give either --frame or the buffer files, not both")),
            (None, _) => {
                return Err(usage(
                    "infer needs --frame N (with --data-dir) or all of --depth --normal --diffuse --direct",
                ))
            }
        }
        self.out_dir.get_or_insert_with(|| PathBuf::from(DEFAULT_INFER_DIR));
        if self.name.is_none() {
            self.name = Some(match self.frame {
                Some(f) => format!("{f:06}"),
                None => "frame".into(),
            });
        }
        Ok(self)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, visible_alias = "data")]
    pub data_dir: Option<PathBuf>,
    /// train, val or test.
    #[arg(long)]
    pub split: Option<String>,
}

impl EvalArgs {
    pub fn layered(self, file: Self) -> Self {
        layer!(self, file, [ckpt, data_dir, split])
    }

    fn resolved(mut self) -> CliResult<(Self, PathBuf, PathBuf, Split)> {
        let ckpt = self.ckpt.clone().ok_or_else(|| usage("eval needs --ckpt"))?;
        let data = self.data_dir.get_or_insert_with(|| PathBuf::from(DEFAULT_DATA_DIR)).clone();
        let split_text = self.split.get_or_insert_with(|| Split::Test.to_string()).clone();
        let split = split_text.parse::<Split>().map_err(|e| usage(format!("--split {split_text}: {e}")))?;
        Ok((self, ckpt, data, split))
    }
}

/// Experiment-specific settings. The training settings come from the
/// `[train]` table and the training flags given here.
#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    /// epochs, dataset-size or base-layer.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Training-set sizes for the dataset-size sweep.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Widths for the base-layer sweep.
    #[arg(long, value_delimiter = ',')]
    pub base_layers: Option<Vec<usize>>,
    #[arg(long)]
    pub timing_frames: Option<usize>,
    #[arg(long)]
    pub timing_repeats: Option<usize>,
    #[arg(long)]
    pub path_trace_spp: Option<u32>,
    #[serde(skip)]
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Serialize)]
struct SweepEcho {
    experiment: String,
    sizes: Vec<usize>,
    base_layers: Vec<usize>,
    timing_frames: usize,
    timing_repeats: usize,
    path_trace_spp: u32,
    train: TrainArgs,
}

impl SweepArgs {
    pub fn layered(self, file: Self, train_file: TrainArgs) -> Self {
        SweepArgs {
            experiment: self.experiment.or(file.experiment),
            sizes: self.sizes.or(file.sizes),
            base_layers: self.base_layers.or(file.base_layers),
            timing_frames: self.timing_frames.or(file.timing_frames),
            timing_repeats: self.timing_repeats.or(file.timing_repeats),
            path_trace_spp: self.path_trace_spp.or(file.path_trace_spp),
            train: self.train.layered(train_file),
        }
    }

    pub fn resolve(self) -> CliResult<ExperimentConfig> {
        let text = self.experiment.ok_or_else(|| usage("sweep needs --experiment (epochs, dataset-size or base-layer)"))?;
        let kind: ExperimentKind = text.parse().map_err(|e| usage(format!("--experiment {text}: {e}")))?;
        let d = ExperimentConfig::new(kind, self.train.resolve()?);
        Ok(ExperimentConfig {
            sizes: self.sizes.unwrap_or(d.sizes.clone()),
            base_layers: self.base_layers.unwrap_or(d.base_layers.clone()),
            timing_frames: self.timing_frames.unwrap_or(d.timing_frames),
            timing_repeats: self.timing_repeats.unwrap_or(d.timing_repeats),
            path_trace_spp: self.path_trace_spp.unwrap_or(d.path_trace_spp),
            ..d
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Cap rayon's global pool at `DEEPGI_THREADS` when set.
pub fn configure_threads(value: Option<&str>) -> CliResult<Option<usize>> {
    let Some(v) = value else { return Ok(None) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("{THREADS_ENV}={v} is not a positive integer")))?;
    let n = n.min(std::thread::available_parallelism().map_or(n, |p| p.get()));
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.into()))?;
    Ok(Some(n))
}

pub fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::GenData(a) => gen_data(a.layered(file.gen_data).resolve()?),
        Command::Train(a) => {
            let c = a.layered(file.train).resolve()?;
            echo("train", &TrainArgs::from_config(&c));
            run_train(&c)
        }
        Command::Infer(a) => run_infer(a.layered(file.infer).resolved()?),
        Command::Eval(a) => run_eval(a.layered(file.eval)),
        Command::Sweep(a) => {
            let c = a.layered(file.sweep, file.train).resolve()?;
            echo(
                "sweep",
                &SweepEcho {
                    experiment: c.kind.to_string(),
                    sizes: c.sizes.clone(),
                    base_layers: c.base_layers.clone(),
                    timing_frames: c.timing_frames,
                    timing_repeats: c.timing_repeats,
                    path_trace_spp: c.path_trace_spp,
                    train: TrainArgs::from_config(&c.train),
                },
            );
            run_sweep(&c)
        }
        Command::Selftest(a) => {
            let seed = a.seed.or(file.selftest.seed).unwrap_or(0);
            echo("selftest", &SelftestArgs { seed: Some(seed) });
            run_selftest(seed)
        }
    }
}

fn gen_data(plan: GenDataPlan) -> CliResult<()> {
    plan.echo();
    let start = Instant::now();
    log::info!(
        "rendering {} frames at {}×{}, {} spp",
        plan.sweep.frame_count(),
        plan.sweep.resolution,
        plan.sweep.resolution,
        plan.sweep.spp
    );
    let manifest = generate_dataset(&plan.sweep, &plan.out_dir)?;
    let manifest = split_dataset(&manifest, &plan.holdouts, plan.val_fraction).map_err(usage)?;
    manifest.save(&plan.out_dir)?;
    log::info!(
        "wrote {} frames to {} ({} train, {} val, {} test) in {:.1}s",
        manifest.frames.len(),
        plan.out_dir.display(),
        manifest.count(Split::Train),
        manifest.count(Split::Val),
        manifest.count(Split::Test),
        start.elapsed().as_secs_f64()
    );
    if manifest.count(Split::Val) == 0 {
        log::warn!("no val frames; `train` needs some (raise --val-fraction or render more frames)");
    }
    Ok(())
}

fn run_train(c: &TrainConfig) -> CliResult<()> {
    let report = train(c)?;
    if let Some(last) = report.stats.last() {
        log::info!(
            "epoch {}: val mse {:.6}, ssim {:.4}; checkpoint {}",
            last.epoch,
            last.val_mse,
            last.val_ssim,
            report.checkpoint.display()
        );
    }
    Ok(())
}

fn run_infer(a: InferArgs) -> CliResult<()> {
    echo("infer", &a);
    let ckpt = load_checkpoint(a.ckpt.as_ref().expect("resolved"))?;
    let inputs = match a.frame {
        Some(f) => {
            let dir = a.data_dir.as_ref().expect("resolved");
            let manifest = DatasetManifest::load(dir)?;
            let record = manifest
                .frames
                .iter()
                .find(|r| r.coords.frame == f)
                .ok_or_else(|| usage(format!("--frame {f}: not in {}", dir.display())))?;
            InferInputs::from_frame(dir, record)
        }
        None => InferInputs {
            depth: a.depth.clone().expect("resolved"),
            normal: a.normal.clone().expect("resolved"),
            diffuse: a.diffuse.clone().expect("resolved"),
            direct: a.direct.clone().expect("resolved"),
            ground_truth: a.gt.clone(),
        },
    };
    let out = infer(&ckpt, &inputs, a.out_dir.as_ref().expect("resolved"), a.name.as_deref().expect("resolved"))?;
    log::info!("wrote {} and {}", out.prediction.display(), out.preview.display());
    if let (Some(m), Some(d)) = (out.metrics, out.direct_metrics) {
        println!("prediction: mse {:.6} ssim {:.4} psnr {:.2} dB", m.mse, m.ssim, m.psnr);
        println!("direct only: mse {:.6} ssim {:.4} psnr {:.2} dB", d.mse, d.ssim, d.psnr);
    }
    Ok(())
}

fn run_eval(a: EvalArgs) -> CliResult<()> {
    let (a, ckpt, data, split) = a.resolved()?;
    echo("eval", &a);
    let generator = load_checkpoint(&ckpt)?.generator()?;
    let manifest = DatasetManifest::load(&data)?;
    let want = generator.config().resolution();
    if manifest.resolution != want {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "checkpoint expects {want}×{want} frames, dataset is {r}×{r}",
            r = manifest.resolution
        )));
    }
    let set = FrameSet::load(&data, &manifest, split)?;
    let v = validate(&generator, &set)?;
    println!(
        "{split}: {} frames, mse {:.6} ssim {:.4} psnr {:.2} dB",
        v.frames,
        v.mse,
        v.ssim,
        psnr_from_mse(v.mse)
    );
    Ok(())
}

fn run_sweep(c: &ExperimentConfig) -> CliResult<()> {
    let report = run_experiment(c)?;
    print!("{}", report.table());
    for p in [Some(&report.curves_csv), Some(&report.summary_csv), report.timing_csv.as_ref()].into_iter().flatten() {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn run_selftest(seed: u64) -> CliResult<()> {
    let checks = selftest::run(seed)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} checks, {failed} failed", checks.len());
    if failed > 0 {
        return Err(CliError::Runtime(anyhow::anyhow!("{failed} self-test checks failed")));
    }
    Ok(())
}
