use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{ImageRef, MetricReport};
use crate::nn::Checkpoint;
use crate::scene::{assemble_input, network_to_radiance, FrameRecord, Raster, INPUT_CHANNELS};
use crate::tensor::Tensor;

/// Buffer files for one frame. The ground truth is optional and only used
/// for the preview and the metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct InferInputs {
    pub depth: PathBuf,
    pub normal: PathBuf,
    pub diffuse: PathBuf,
    pub direct: PathBuf,
    pub ground_truth: Option<PathBuf>,
}

impl InferInputs {
    pub fn from_frame(dir: &Path, record: &FrameRecord) -> Self {
        let p = |k: usize| dir.join(&record.paths[k]);
        InferInputs {
            depth: p(0),
            normal: p(1),
            diffuse: p(2),
            direct: p(3),
            ground_truth: Some(p(4)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferOutput {
    /// Predicted radiance, `DIB1`, 3 channels.
    pub prediction: PathBuf,
    /// PNG: direct | predicted | ground truth (when given).
    pub preview: PathBuf,
    pub raster: Raster,
    /// Prediction against the ground truth, display space.
    pub metrics: Option<MetricReport>,
    /// Direct lighting alone against the ground truth, display space.
    pub direct_metrics: Option<MetricReport>,
}

fn read_checked(path: &Path, channels: usize, size: usize) -> Result<Raster> {
    let r = Raster::read(path)?;
    if r.width() != size || r.height() != size {
        return Err(Error::shape(format!(
            "checkpoint expects {size}×{size} buffers, {} is {}×{}",
            path.display(),
            r.width(),
            r.height()
        )));
    }
    if r.channels() != channels {
        return Err(Error::shape(format!(
            "{} has {} channels, expected {channels}",
            path.display(),
            r.channels()
        )));
    }
    Ok(r)
}

fn display(r: &Raster) -> Vec<f32> {
    r.to_planar().into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

fn report(a: &Raster, b: &Raster) -> Result<MetricReport> {
    let (pa, pb) = (display(a), display(b));
    let s = a.width();
    MetricReport::compute(ImageRef::new(&pa, 3, s, s)?, ImageRef::new(&pb, 3, s, s)?)
}

/// Side-by-side PNG of linear radiance panels, clamped to `[0, 1]` and
/// gamma-encoded for viewing.
fn preview_png(panels: &[&Raster]) -> Result<Vec<u8>> {
    let s = panels[0].width() as u32;
    let mut img = RgbImage::new(s * panels.len() as u32, s);
    for (k, r) in panels.iter().enumerate() {
        for y in 0..s {
            for x in 0..s {
                let px = r.pixel(x as usize, y as usize);
                let enc = |v: f32| (v.clamp(0.0, 1.0).powf(1.0 / 2.2) * 255.0).round() as u8;
                img.put_pixel(k as u32 * s + x, y, Rgb([enc(px[0]), enc(px[1]), enc(px[2])]));
            }
        }
    }
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Run the checkpoint's generator in eval mode on one frame and write
/// `{name}_pred.dib` and `{name}_preview.png` into `out_dir`.
pub fn infer(checkpoint: &Checkpoint, inputs: &InferInputs, out_dir: &Path, name: &str) -> Result<InferOutput> {
    let generator = checkpoint.generator()?;
    let s = generator.config().resolution();
    let depth = read_checked(&inputs.depth, 1, s)?;
    let normal = read_checked(&inputs.normal, 3, s)?;
    let diffuse = read_checked(&inputs.diffuse, 3, s)?;
    let direct = read_checked(&inputs.direct, 3, s)?;
    let gt = inputs.ground_truth.as_deref().map(|p| read_checked(p, 3, s)).transpose()?;

    let x = Tensor::from_vec(assemble_input(&depth, &normal, &diffuse, &direct), &[1, INPUT_CHANNELS, s, s])?;
    let y: Vec<f32> = generator.infer(&x)?.to_vec().into_iter().map(network_to_radiance).collect();
    let raster = Raster::from_planar(s, s, 3, &y)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let prediction = out_dir.join(format!("{name}_pred.dib"));
    raster.write(&prediction)?;
    let mut panels = vec![&direct, &raster];
    if let Some(g) = &gt {
        panels.push(g);
    }
    let preview = out_dir.join(format!("{name}_preview.png"));
    io::write_atomic(&preview, &preview_png(&panels)?)?;

    let (metrics, direct_metrics) = match &gt {
        Some(g) => (Some(report(&raster, g)?), Some(report(&direct, g)?)),
        None => (None, None),
    };
    Ok(InferOutput {
        prediction,
        preview,
        raster,
        metrics,
        direct_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, TrainingMeta};
    use crate::scene::{generate_dataset, SweepConfig};

    #[test]
    fn inference_is_deterministic_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let sweep = SweepConfig {
            light_steps: 1,
            object_steps: 1,
            resolution: 32,
            spp: 2,
            ..SweepConfig::default()
        };
        let manifest = generate_dataset(&sweep, &data).unwrap();
        let g = Generator::new(GeneratorConfig::new(2, 5), 1).unwrap();
        let d = Discriminator::new(DiscriminatorConfig::new(2), 1).unwrap();
        let ck = Checkpoint::capture(&g, &d, None, TrainingMeta::default());
        let inputs = InferInputs::from_frame(&data, &manifest.frames[0]);
        let a = infer(&ck, &inputs, &dir.path().join("a"), "f").unwrap();
        let b = infer(&ck, &inputs, &dir.path().join("b"), "f").unwrap();
        assert_eq!(std::fs::read(&a.prediction).unwrap(), std::fs::read(&b.prediction).unwrap());
        assert_eq!(std::fs::read(&a.preview).unwrap(), std::fs::read(&b.preview).unwrap());
        assert_eq!(Raster::read(&a.prediction).unwrap(), a.raster);
        assert!(a.metrics.is_some());
    }

    #[test]
    fn resolution_mismatch_names_both_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let sweep = SweepConfig {
            light_steps: 1,
            object_steps: 1,
            resolution: 16,
            spp: 1,
            ..SweepConfig::default()
        };
        let manifest = generate_dataset(&sweep, &data).unwrap();
        let g = Generator::new(GeneratorConfig::new(2, 5), 1).unwrap();
        let d = Discriminator::new(DiscriminatorConfig::new(2), 1).unwrap();
        let ck = Checkpoint::capture(&g, &d, None, TrainingMeta::default());
        let err = infer(&ck, &InferInputs::from_frame(&data, &manifest.frames[0]), dir.path(), "f")
            .unwrap_err()
            .to_string();
        assert!(err.contains("32×32") && err.contains("16×16"), "{err}");
    }
}
