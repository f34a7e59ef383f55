//! Screen-space global illumination with a conditional GAN.
//!
//! The crate is split along the pipeline:
//!
//! * [`tensor`]: a small dense tensor type with reverse-mode autodiff and the
//!   handful of operators the networks need (strided convolutions, batch
//!   norm, activations, dropout, L1/BCE losses) plus Adam.
//! * [`nn`]: the U-Net generator, the PatchGAN discriminator and the binary
//!   checkpoint format.
//! * [`scene`]: a Cornell-box scene description, G-buffer rasterization by
//!   ray casting, the direct-lighting pass, a diffuse path tracer for ground
//!   truth, and dataset generation/splitting.
//! * [`train`]: the adversarial training loop, validation, inference and
//!   experiment sweeps.
//! * [`metrics`]: MSE, SSIM and PSNR.
//! * [`gradcheck`]: independent double-precision reference kernels and a
//!   finite-difference checker.
//! * [`selftest`]: gradient checks and renderer analytics bundled for the
//!   command line.

pub mod error;
pub mod gradcheck;
mod io;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scene;
pub mod selftest;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use metrics::MetricReport;
pub use nn::{
    Checkpoint, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, TrainingMeta,
};
pub use scene::{Camera, DatasetManifest, GBufferFrame, Scene, Split, SweepConfig};
pub use tensor::{Adam, AdamState, Tensor};
pub use train::{EpochStats, TrainConfig};
