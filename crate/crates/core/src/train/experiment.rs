use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use super::{train_on, EpochStats, FrameSet, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::io;
use crate::scene::{path_trace, Camera, DatasetManifest, Split};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Metric curves over epochs for one run.
    Epochs,
    /// Final metrics for nested training subsets of increasing size.
    DatasetSize,
    /// Metrics and inference time for several base widths `K`.
    BaseLayer,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Epochs => "epochs",
            ExperimentKind::DatasetSize => "dataset_size",
            ExperimentKind::BaseLayer => "base_layer",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "epochs" => Ok(ExperimentKind::Epochs),
            "dataset_size" => Ok(ExperimentKind::DatasetSize),
            "base_layer" => Ok(ExperimentKind::BaseLayer),
            _ => Err(Error::invalid(format!(
                "unknown experiment '{s}' (expected epochs, dataset_size or base_layer)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Shared settings; `out_dir` is the experiment root and each run gets a
    /// subdirectory. Metrics are always taken on the test split.
    pub train: TrainConfig,
    /// Training-set sizes for [`ExperimentKind::DatasetSize`].
    pub sizes: Vec<usize>,
    /// Widths for [`ExperimentKind::BaseLayer`].
    pub base_layers: Vec<usize>,
    /// Test frames used for the timing table.
    pub timing_frames: usize,
    /// Repeats per inference timing; the median is reported.
    pub timing_repeats: usize,
    pub path_trace_spp: u32,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, train: TrainConfig) -> Self {
        ExperimentConfig {
            kind,
            train,
            sizes: vec![10, 20, 40],
            base_layers: vec![16, 32, 64],
            timing_frames: 4,
            timing_repeats: 5,
            path_trace_spp: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub base_layer_k: usize,
    pub train_frames: usize,
    pub stats: Vec<EpochStats>,
}

impl RunSummary {
    pub fn last(&self) -> Option<&EpochStats> {
        self.stats.last()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingRow {
    pub base_layer_k: usize,
    pub parameters: usize,
    /// Median seconds per frame.
    pub inference_seconds: f64,
    /// Mean seconds per frame at the configured spp.
    pub path_trace_seconds: f64,
}

impl TimingRow {
    pub fn speedup(&self) -> f64 {
        self.path_trace_seconds / self.inference_seconds
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub runs: Vec<RunSummary>,
    pub timings: Vec<TimingRow>,
    pub curves_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub timing_csv: Option<PathBuf>,
}

impl ExperimentReport {
    /// Plain-text summary for the terminal.
    pub fn table(&self) -> String {
        let mut s = format!("experiment {}\n{:<12} {:>4} {:>7} {:>10} {:>8}\n", self.kind, "run", "K", "frames", "mse", "ssim");
        for r in &self.runs {
            if let Some(e) = r.last() {
                let _ = writeln!(
                    s,
                    "{:<12} {:>4} {:>7} {:>10.6} {:>8.4}",
                    r.label, r.base_layer_k, r.train_frames, e.val_mse, e.val_ssim
                );
            }
        }
        if !self.timings.is_empty() {
            let _ = writeln!(s, "\n{:>4} {:>10} {:>14} {:>15} {:>8}", "K", "params", "infer ms/frame", "trace ms/frame", "speedup");
            for t in &self.timings {
                let _ = writeln!(
                    s,
                    "{:>4} {:>10} {:>14.2} {:>15.2} {:>8.1}",
                    t.base_layer_k,
                    t.parameters,
                    t.inference_seconds * 1e3,
                    t.path_trace_seconds * 1e3,
                    t.speedup()
                );
            }
        }
        s
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn time_inference(trainer: &Trainer, frames: &FrameSet, repeats: usize) -> Result<f64> {
    let s = frames.resolution;
    let inputs: Vec<Tensor> = frames
        .samples
        .iter()
        .map(|f| Tensor::from_vec(f.input.clone(), &[1, 12, s, s]))
        .collect::<Result<_>>()?;
    trainer.generator.infer(&inputs[0])?;
    let mut per_frame = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        for x in &inputs {
            std::hint::black_box(trainer.generator.infer(x)?);
        }
        per_frame.push(start.elapsed().as_secs_f64() / inputs.len() as f64);
    }
    Ok(median(per_frame))
}

fn time_path_trace(manifest: &DatasetManifest, frames: &FrameSet, spp: u32) -> Result<f64> {
    let camera = Camera::cornell(manifest.resolution);
    let start = Instant::now();
    for sample in &frames.samples {
        let record = manifest
            .frames
            .iter()
            .find(|r| r.coords.frame == sample.frame)
            .ok_or_else(|| Error::invalid(format!("frame {} missing from manifest", sample.frame)))?;
        let scene = record.coords.scene()?;
        std::hint::black_box(path_trace(&scene, &camera, spp, manifest.max_bounces, sample.frame as u64)?);
    }
    Ok(start.elapsed().as_secs_f64() / frames.len() as f64)
}

/// Run one experiment over the dataset in `config.train.data_dir`, scoring
/// every epoch on the test split. Writes `curves.csv` and `summary.csv`
/// (plus `timing.csv` for the base-layer sweep) under `config.train.out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let base = &config.train;
    base.validate()?;
    let manifest = DatasetManifest::load(&base.data_dir)?;
    let train_all = FrameSet::load(&base.data_dir, &manifest, Split::Train)?;
    let test = FrameSet::load(&base.data_dir, &manifest, Split::Test)?;
    if train_all.is_empty() {
        return Err(Error::invalid("dataset has no training frames"));
    }
    if test.is_empty() {
        return Err(Error::invalid("experiments score the test split, which is empty; split with a holdout"));
    }

    let mut plan: Vec<(String, usize, usize)> = Vec::new();
    match config.kind {
        ExperimentKind::Epochs => plan.push(("main".into(), base.base_layer_k, train_all.len())),
        ExperimentKind::DatasetSize => {
            let mut sizes = config.sizes.clone();
            sizes.sort_unstable();
            sizes.dedup();
            if sizes.is_empty() {
                return Err(Error::invalid("dataset-size experiment needs at least one size"));
            }
            for n in sizes {
                plan.push((format!("frames_{n}"), base.base_layer_k, n));
            }
        }
        ExperimentKind::BaseLayer => {
            if config.base_layers.is_empty() {
                return Err(Error::invalid("base-layer experiment needs at least one K"));
            }
            for &k in &config.base_layers {
                plan.push((format!("k_{k}"), k, train_all.len()));
            }
        }
    }

    let timing_set = FrameSet {
        resolution: test.resolution,
        samples: test.samples.iter().take(config.timing_frames.max(1)).cloned().collect(),
    };
    let trace_seconds = if config.kind == ExperimentKind::BaseLayer {
        Some(time_path_trace(&manifest, &timing_set, config.path_trace_spp)?)
    } else {
        None
    };

    let mut runs = Vec::new();
    let mut timings = Vec::new();
    for (label, k, n) in plan {
        let run_config = TrainConfig {
            base_layer_k: k,
            out_dir: base.out_dir.join(&label),
            val_split: Split::Test,
            train_frames: None,
            ..base.clone()
        };
        let subset = if n == train_all.len() {
            train_all.clone()
        } else {
            train_all.subset(n, base.seed)?
        };
        log::info!("experiment {}: run {label} (K={k}, {n} frames)", config.kind);
        let report = train_on(&run_config, &subset, &test)?;
        if let Some(trace) = trace_seconds {
            timings.push(TimingRow {
                base_layer_k: k,
                parameters: report.trainer.generator.params().numel(),
                inference_seconds: time_inference(&report.trainer, &timing_set, config.timing_repeats)?,
                path_trace_seconds: trace,
            });
        }
        runs.push(RunSummary {
            label,
            base_layer_k: k,
            train_frames: n,
            stats: report.stats,
        });
    }

    let mut curves = String::from("run,base_layer_k,train_frames,epoch,g_loss,d_loss,l1,mse,ssim,seconds\n");
    let mut summary = String::from("run,base_layer_k,train_frames,final_mse,final_ssim\n");
    for r in &runs {
        for e in &r.stats {
            let _ = writeln!(curves, "{},{},{},{}", r.label, r.base_layer_k, r.train_frames, e.csv_row());
        }
        if let Some(e) = r.last() {
            let _ = writeln!(summary, "{},{},{},{},{}", r.label, r.base_layer_k, r.train_frames, e.val_mse, e.val_ssim);
        }
    }
    let curves_csv = base.out_dir.join("curves.csv");
    let summary_csv = base.out_dir.join("summary.csv");
    io::write_atomic(&curves_csv, curves.as_bytes())?;
    io::write_atomic(&summary_csv, summary.as_bytes())?;
    let timing_csv = if timings.is_empty() {
        None
    } else {
        let mut t = String::from("base_layer_k,parameters,inference_ms,path_trace_ms,speedup\n");
        for row in &timings {
            let _ = writeln!(
                t,
                "{},{},{},{},{}",
                row.base_layer_k,
                row.parameters,
                row.inference_seconds * 1e3,
                row.path_trace_seconds * 1e3,
                row.speedup()
            );
        }
        let path = base.out_dir.join("timing.csv");
        io::write_atomic(&path, t.as_bytes())?;
        Some(path)
    };
    Ok(ExperimentReport {
        kind: config.kind,
        runs,
        timings,
        curves_csv,
        summary_csv,
        timing_csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_dataset, split_dataset, Holdout, SweepConfig};

    #[test]
    fn kind_parsing() {
        assert_eq!("dataset-size".parse::<ExperimentKind>().unwrap(), ExperimentKind::DatasetSize);
        assert_eq!("base_layer".parse::<ExperimentKind>().unwrap(), ExperimentKind::BaseLayer);
        assert!("layers".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn base_layer_sweep_writes_tables() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let sweep = SweepConfig {
            light_steps: 3,
            object_steps: 2,
            resolution: 32,
            spp: 2,
            ..SweepConfig::default()
        };
        let m = generate_dataset(&sweep, &data).unwrap();
        let h: Holdout = "light:90:90".parse().unwrap();
        split_dataset(&m, &[h], 0.0).unwrap().save(&data).unwrap();
        let train = TrainConfig {
            epochs: 1,
            depth: 5,
            disc_base_k: 2,
            data_dir: data,
            out_dir: dir.path().join("exp"),
            ..TrainConfig::default()
        };
        let config = ExperimentConfig {
            base_layers: vec![1, 2],
            timing_frames: 1,
            timing_repeats: 1,
            path_trace_spp: 1,
            ..ExperimentConfig::new(ExperimentKind::BaseLayer, train)
        };
        let r = run_experiment(&config).unwrap();
        assert_eq!(r.runs.len(), 2);
        assert_eq!(r.timings.len(), 2);
        let curves = std::fs::read_to_string(&r.curves_csv).unwrap();
        assert_eq!(curves.lines().count(), 3);
        assert!(r.timing_csv.as_ref().unwrap().exists());
        assert!(r.table().contains("speedup"));
    }
}
