//! `DIB1` float raster files.
//!
//! Layout (little-endian): magic `DIB1`, `u32` width, `u32` height, `u32`
//! channels, then `width·height·channels` `f32` values, row-major with
//! channels interleaved.

use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DIB1";
const HEADER: usize = 16;

/// Interleaved (`H×W×C`) float image.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid(format!("raster dimensions {width}×{height}×{channels} must be nonzero")));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "raster {width}×{height}×{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Raster::new(width, height, channels, vec![0.0; width * height * channels]).expect("nonzero dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Planar (`C×H×W`) copy of the data.
    pub fn to_planar(&self) -> Vec<f32> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; self.data.len()];
        for (p, px) in self.data.chunks_exact(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + p] = v;
            }
        }
        out
    }

    /// Build from planar (`C×H×W`) data.
    pub fn from_planar(width: usize, height: usize, channels: usize, planar: &[f32]) -> Result<Self> {
        let plane = width * height;
        if planar.len() != plane * channels {
            return Err(Error::shape(format!(
                "planar data has {} values, {width}×{height}×{channels} needs {}",
                planar.len(),
                plane * channels
            )));
        }
        let mut data = vec![0.0; planar.len()];
        for c in 0..channels {
            for p in 0..plane {
                data[p * channels + c] = planar[c * plane + p];
            }
        }
        Raster::new(width, height, channels, data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        for d in [self.width, self.height, self.channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER {
            return Err(Error::corrupt(path, "truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::corrupt(path, "bad magic (expected DIB1)"));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
        let (w, h, c) = (dim(0), dim(1), dim(2));
        let n = w
            .checked_mul(h)
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| Error::corrupt(path, "dimensions overflow"))?;
        if bytes.len() - HEADER != 4 * n {
            return Err(Error::corrupt(
                path,
                format!("{w}×{h}×{c} raster needs {} payload bytes, found {}", 4 * n, bytes.len() - HEADER),
            ));
        }
        let data = bytes[HEADER..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Raster::new(w, h, c, data).map_err(|e| Error::corrupt(path, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Raster::from_bytes(&bytes, path)
    }

    /// Write via a temporary file and rename.
    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    /// Mean absolute difference; the rasters must have equal shape.
    pub fn mean_abs_diff(&self, other: &Raster) -> Result<f64> {
        if (self.width, self.height, self.channels) != (other.width, other.height, other.channels) {
            return Err(Error::shape(format!(
                "raster {}×{}×{} vs {}×{}×{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        let total: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        Ok(total / self.data.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let r = Raster::new(2, 1, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = r.to_bytes();
        assert_eq!(&b[..4], b"DIB1");
        assert_eq!(&b[4..16], &[2, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(b.len(), 16 + 24);
    }

    #[test]
    fn truncated_and_bad_magic_rejected() {
        let r = Raster::zeros(2, 2, 1);
        let mut b = r.to_bytes();
        b.pop();
        assert!(Raster::from_bytes(&b, Path::new("x.dib")).is_err());
        let mut b = r.to_bytes();
        b[0] = b'X';
        let err = Raster::from_bytes(&b, Path::new("x.dib")).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
    }

    #[test]
    fn planar_round_trip() {
        let r = Raster::new(2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        let p = r.to_planar();
        assert_eq!(&p[..4], &[0.0, 3.0, 6.0, 9.0]);
        assert_eq!(Raster::from_planar(2, 2, 3, &p).unwrap(), r);
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bitwise(w in 1usize..6, h in 1usize..6, c in 1usize..4, seed in any::<u64>()) {
            let data: Vec<f32> = (0..w * h * c).map(|i| f32::from_bits((seed as u32).wrapping_add((i as u32).wrapping_mul(2654435761)) & 0x7f7f_ffff)).collect();
            let r = Raster::new(w, h, c, data).unwrap();
            let back = Raster::from_bytes(&r.to_bytes(), Path::new("p.dib")).unwrap();
            prop_assert_eq!(back.to_bytes(), r.to_bytes());
        }
    }
}
