//! Fixtures shared by the criterion benches.

use deepgi_core::scene::{FrameCoords, ObjectKind};
use deepgi_core::train::{Batch, Sample};
use deepgi_core::{GBufferFrame, Tensor};

/// Deterministic values in `[-1, 1)` from a 32-bit LCG; good enough to keep
/// kernels away from constant-input shortcuts.
pub fn noise(len: usize, seed: u32) -> Vec<f32> {
    let mut s = seed.wrapping_mul(747_796_405).wrapping_add(1);
    (0..len)
        .map(|_| {
            s = s.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
            (s >> 8) as f32 / (1u32 << 23) as f32 - 1.0
        })
        .collect()
}

pub fn tensor(shape: &[usize], seed: u32) -> Tensor {
    Tensor::from_vec(noise(shape.iter().product(), seed), shape).expect("valid shape")
}

pub fn parameter(shape: &[usize], seed: u32) -> Tensor {
    let scale = 0.05;
    let data = noise(shape.iter().product(), seed).into_iter().map(|v| v * scale).collect();
    Tensor::parameter(data, shape).expect("valid shape")
}

/// A rendered sphere frame as a training sample.
pub fn sample(resolution: usize, spp: u32) -> Sample {
    let coords = FrameCoords {
        frame: 0,
        object: ObjectKind::Sphere,
        light_deg: 45.0,
        object_deg: 30.0,
    };
    let frame = GBufferFrame::render(coords, resolution, spp, 8, 1).expect("render");
    Sample {
        frame: 0,
        input: frame.network_input(),
        target: frame.network_target(),
    }
}

pub fn batch(sample: &Sample, resolution: usize) -> Batch {
    Batch::new(&[sample], resolution).expect("batch")
}

/// Images in `[0, 1]` for metric benches.
pub fn image(len: usize, seed: u32) -> Vec<f32> {
    noise(len, seed).into_iter().map(|v| 0.5 * (v + 1.0)).collect()
}
