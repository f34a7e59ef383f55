//! Full-reference image metrics on display-space images in `[0, 1]`.
//!
//! Images are planar `C×H×W` buffers. SSIM follows the single-scale
//! formulation of Wang et al. (2004): an 11×11 Gaussian window with
//! σ = 1.5, `C1 = (0.01·L)²`, `C2 = (0.03·L)²` at dynamic range `L = 1`,
//! evaluated at every window position that fits inside the image, averaged
//! over positions and then over channels.

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Borrowed planar image.
#[derive(Clone, Copy, Debug)]
pub struct ImageRef<'a> {
    pub data: &'a [f32],
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl<'a> ImageRef<'a> {
    pub fn new(data: &'a [f32], channels: usize, height: usize, width: usize) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "image buffer of {} values does not match {channels}×{height}×{width}",
                data.len()
            )));
        }
        Ok(ImageRef {
            data,
            channels,
            height,
            width,
        })
    }

    fn plane(&self, c: usize) -> &'a [f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    pub ssim: f64,
    pub psnr: f64,
}

impl MetricReport {
    pub fn compute(a: ImageRef<'_>, b: ImageRef<'_>) -> Result<Self> {
        let mse = mse(a, b)?;
        Ok(MetricReport {
            mse,
            ssim: ssim(a, b)?,
            psnr: psnr_from_mse(mse),
        })
    }
}

fn check_pair(a: &ImageRef<'_>, b: &ImageRef<'_>) -> Result<()> {
    if (a.channels, a.height, a.width) != (b.channels, b.height, b.width) {
        return Err(Error::shape(format!(
            "image sizes differ: {}×{}×{} vs {}×{}×{}",
            a.channels, a.height, a.width, b.channels, b.height, b.width
        )));
    }
    Ok(())
}

pub fn mse(a: ImageRef<'_>, b: ImageRef<'_>) -> Result<f64> {
    check_pair(&a, &b)?;
    let total: f64 = a
        .data
        .iter()
        .zip(b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(total / a.data.len() as f64)
}

pub fn psnr(a: ImageRef<'_>, b: ImageRef<'_>) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as f64 - r;
        *t = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable "valid" Gaussian filter of a `h×w` plane.
fn blur_valid(src: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let k = SSIM_WINDOW;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| taps[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| taps[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

pub fn ssim(a: ImageRef<'_>, b: ImageRef<'_>) -> Result<f64> {
    check_pair(&a, &b)?;
    if a.height < SSIM_WINDOW || a.width < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "image {}×{} smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} SSIM window",
            a.height, a.width
        )));
    }
    let taps = gaussian_taps();
    let (h, w) = (a.height, a.width);
    let mut total = 0.0;
    for c in 0..a.channels {
        let x: Vec<f64> = a.plane(c).iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = b.plane(c).iter().map(|&v| v as f64).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();

        let mu_x = blur_valid(&x, h, w, &taps);
        let mu_y = blur_valid(&y, h, w, &taps);
        let e_xx = blur_valid(&xx, h, w, &taps);
        let e_yy = blur_valid(&yy, h, w, &taps);
        let e_xy = blur_valid(&xy, h, w, &taps);

        let mut sum = 0.0;
        for i in 0..mu_x.len() {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = (e_xx[i] - mx * mx).max(0.0);
            let var_y = (e_yy[i] - my * my).max(0.0);
            let cov = e_xy[i] - mx * my;
            sum += ((2.0 * mx * my + C1) * (2.0 * cov + C2))
                / ((mx * mx + my * my + C1) * (var_x + var_y + C2));
        }
        total += sum / mu_x.len() as f64;
    }
    Ok(total / a.channels as f64)
}
