use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;
use crate::scene::{load_frame, DatasetManifest, Split, INPUT_CHANNELS};
use crate::tensor::Tensor;

/// One frame in network range, planar.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub frame: usize,
    /// `12×S×S`.
    pub input: Vec<f32>,
    /// `3×S×S`.
    pub target: Vec<f32>,
}

/// Frames of one split held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    pub resolution: usize,
    pub samples: Vec<Sample>,
}

impl FrameSet {
    pub fn load(dir: &Path, manifest: &DatasetManifest, split: Split) -> Result<Self> {
        let mut samples = Vec::new();
        for record in manifest.frames_in(split) {
            let frame = load_frame(dir, record)?;
            if frame.resolution() != manifest.resolution {
                return Err(Error::corrupt(
                    dir.join(&record.paths[0]),
                    format!(
                        "frame is {0}×{0}, manifest says {1}×{1}",
                        frame.resolution(),
                        manifest.resolution
                    ),
                ));
            }
            samples.push(Sample {
                frame: record.coords.frame,
                input: frame.network_input(),
                target: frame.network_target(),
            });
        }
        Ok(FrameSet {
            resolution: manifest.resolution,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The first `n` frames of a seeded permutation. Subsets drawn with the
    /// same seed are nested.
    pub fn subset(&self, n: usize, seed: u64) -> Result<FrameSet> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(format!(
                "subset of {n} frames requested from a split of {}",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::stream(seed, &[SUBSET_STREAM]));
        order.truncate(n);
        order.sort_unstable();
        Ok(FrameSet {
            resolution: self.resolution,
            samples: order.into_iter().map(|i| self.samples[i].clone()).collect(),
        })
    }
}

const SUBSET_STREAM: u64 = 0x5B5E7;

/// Stacked `N×12×S×S` inputs and `N×3×S×S` targets.
#[derive(Clone, Debug)]
pub struct Batch {
    pub input: Tensor,
    pub target: Tensor,
}

impl Batch {
    pub fn new(samples: &[&Sample], resolution: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let plane = resolution * resolution;
        let mut input = Vec::with_capacity(samples.len() * INPUT_CHANNELS * plane);
        let mut target = Vec::with_capacity(samples.len() * 3 * plane);
        for s in samples {
            input.extend_from_slice(&s.input);
            target.extend_from_slice(&s.target);
        }
        let n = samples.len();
        Ok(Batch {
            input: Tensor::from_vec(input, &[n, INPUT_CHANNELS, resolution, resolution])?,
            target: Tensor::from_vec(target, &[n, 3, resolution, resolution])?,
        })
    }

    pub fn len(&self) -> usize {
        self.input.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(n: usize) -> FrameSet {
        FrameSet {
            resolution: 2,
            samples: (0..n)
                .map(|i| Sample {
                    frame: i,
                    input: vec![i as f32; 48],
                    target: vec![i as f32; 12],
                })
                .collect(),
        }
    }

    #[test]
    fn subsets_are_nested() {
        let s = set(20);
        let small: Vec<usize> = s.subset(5, 3).unwrap().samples.iter().map(|x| x.frame).collect();
        let large: Vec<usize> = s.subset(10, 3).unwrap().samples.iter().map(|x| x.frame).collect();
        assert!(small.iter().all(|f| large.contains(f)));
        assert!(s.subset(21, 3).is_err());
    }

    #[test]
    fn batch_stacks_in_order() {
        let s = set(3);
        let b = Batch::new(&[&s.samples[2], &s.samples[0]], 2).unwrap();
        assert_eq!(b.input.shape(), &[2, 12, 2, 2]);
        assert_eq!(b.input.data()[0], 2.0);
        assert_eq!(b.target.data()[12], 0.0);
    }
}
