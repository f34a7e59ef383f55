//! Strided 2-D convolution and its adjoint (transposed convolution), both
//! lowered to im2col + GEMM.

use rayon::prelude::*;

use super::gemm::{gemm, MatRef};
use super::{Backward, Tensor};
use crate::error::{Error, Result};

/// Geometry shared by a convolution and its transpose: the "image" side has
/// `channels × height × width` elements and the "grid" side has one column
/// per kernel placement.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// `floor((size + 2·pad − kernel) / stride) + 1`, or `None` if the kernel
/// does not fit.
pub fn conv_output_size(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// `(size − 1)·stride − 2·pad + kernel`, or `None` if not positive.
pub fn conv_transpose_output_size(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || size == 0 {
        return None;
    }
    let full = (size - 1) * stride + kernel;
    (full > 2 * pad).then(|| full - 2 * pad)
}

/// Unfold one image into a `(C·k·k) × (out_h·out_w)` column matrix.
fn im2col(image: &[f32], g: &Geometry, cols: &mut [f32]) {
    let k = g.kernel;
    let plane = g.col_cols();
    cols.par_chunks_mut(k * k * plane)
        .enumerate()
        .for_each(|(c, chan_cols)| {
            let src = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &mut chan_cols[(ki * k + kj) * plane..(ki * k + kj + 1) * plane];
                    for oh in 0..g.out_h {
                        let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                        let dst = &mut row[oh * g.out_w..(oh + 1) * g.out_w];
                        if ih < 0 || ih >= g.height as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let src_row = &src[ih as usize * g.width..(ih as usize + 1) * g.width];
                        for (ow, d) in dst.iter_mut().enumerate() {
                            let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                            *d = if iw >= 0 && iw < g.width as isize {
                                src_row[iw as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        });
}

/// Fold a column matrix back onto an image, summing overlaps. `image` is
/// accumulated into, not overwritten.
fn col2im(cols: &[f32], g: &Geometry, image: &mut [f32]) {
    let k = g.kernel;
    let plane = g.col_cols();
    image
        .par_chunks_mut(g.height * g.width)
        .enumerate()
        .for_each(|(c, dst)| {
            let chan_cols = &cols[c * k * k * plane..(c + 1) * k * k * plane];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &chan_cols[(ki * k + kj) * plane..(ki * k + kj + 1) * plane];
                    for oh in 0..g.out_h {
                        let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                        if ih < 0 || ih >= g.height as isize {
                            continue;
                        }
                        let dst_row = &mut dst[ih as usize * g.width..(ih as usize + 1) * g.width];
                        let src = &row[oh * g.out_w..(oh + 1) * g.out_w];
                        for (ow, v) in src.iter().enumerate() {
                            let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                            if iw >= 0 && iw < g.width as isize {
                                dst_row[iw as usize] += v;
                            }
                        }
                    }
                }
            }
        });
}

fn add_bias(out: &mut [f32], bias: &[f32], plane: usize) {
    for (chunk, b) in out.chunks_mut(plane).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad(grad_out: &[f32], channels: usize, plane: usize) -> Vec<f32> {
    let mut g = vec![0.0f32; channels];
    for (i, chunk) in grad_out.chunks(plane).enumerate() {
        g[i % channels] += chunk.iter().sum::<f32>();
    }
    g
}

fn check_bias(bias: Option<&Tensor>, channels: usize, op: &str) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [channels] {
            return Err(Error::shape(format!(
                "{op}: bias shape {:?} does not match output channels {channels}",
                b.shape()
            )));
        }
    }
    Ok(())
}

/// 2-D cross-correlation. `weight` is `Cout×Cin×k×k`.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Result<Tensor> {
    let [n, cin, h, w] = input.dims4()?;
    let [cout, wcin, kh, kw] = weight.dims4()?;
    if kh != kw {
        return Err(Error::shape(format!("conv2d: kernel must be square, got {kh}×{kw}")));
    }
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv2d: input channels {cin} do not match weight input channels {wcin}"
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d: stride must be ≥ 1"));
    }
    let out_h = conv_output_size(h, kh, stride, pad)
        .ok_or_else(|| Error::shape(format!("conv2d: height {h} + 2·{pad} smaller than kernel {kh}")))?;
    let out_w = conv_output_size(w, kw, stride, pad)
        .ok_or_else(|| Error::shape(format!("conv2d: width {w} + 2·{pad} smaller than kernel {kw}")))?;
    check_bias(bias, cout, "conv2d")?;

    let g = Geometry {
        channels: cin,
        height: h,
        width: w,
        kernel: kh,
        stride,
        pad,
        out_h,
        out_w,
    };
    let (rows, plane) = (g.col_rows(), g.col_cols());
    let mut out = vec![0.0f32; n * cout * plane];
    let mut cols = vec![0.0f32; rows * plane];
    for (img, dst) in input.data().chunks(g.image_len()).zip(out.chunks_mut(cout * plane)) {
        im2col(img, &g, &mut cols);
        gemm(cout, rows, plane, MatRef::row_major(weight.data(), rows), MatRef::row_major(&cols, plane), 0.0, dst);
    }
    if let Some(b) = bias {
        add_bias(&mut out, b.data(), plane);
    }

    Ok(Tensor::from_op(
        vec![n, cout, out_h, out_w],
        out,
        Box::new(Conv2dBackward {
            input: input.clone(),
            weight: weight.clone(),
            bias: bias.cloned(),
            geometry: g,
            batch: n,
            out_channels: cout,
        }),
    ))
}

struct Conv2dBackward {
    input: Tensor,
    weight: Tensor,
    bias: Option<Tensor>,
    geometry: Geometry,
    batch: usize,
    out_channels: usize,
}

impl Backward for Conv2dBackward {
    fn inputs(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.input, &self.weight];
        v.extend(self.bias.as_ref());
        v
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        let g = &self.geometry;
        let (rows, plane, cout) = (g.col_rows(), g.col_cols(), self.out_channels);
        let need_x = self.input.requires_grad();
        let need_w = self.weight.requires_grad();

        let mut dx = need_x.then(|| vec![0.0f32; self.batch * g.image_len()]);
        let mut dw = need_w.then(|| vec![0.0f32; cout * rows]);
        let mut cols = vec![0.0f32; rows * plane];

        for i in 0..self.batch {
            let dy = &grad_out[i * cout * plane..(i + 1) * cout * plane];
            if let Some(dw) = dw.as_mut() {
                let img = &self.input.data()[i * g.image_len()..(i + 1) * g.image_len()];
                im2col(img, g, &mut cols);
                // dW += dY · colsᵀ
                gemm(cout, plane, rows, MatRef::row_major(dy, plane), MatRef::transposed(&cols, plane), 1.0, dw);
            }
            if let Some(dx) = dx.as_mut() {
                // dcols = Wᵀ · dY
                gemm(rows, cout, plane, MatRef::transposed(self.weight.data(), rows), MatRef::row_major(dy, plane), 0.0, &mut cols);
                col2im(&cols, g, &mut dx[i * g.image_len()..(i + 1) * g.image_len()]);
            }
        }

        let mut grads = vec![dx, dw];
        if let Some(b) = &self.bias {
            grads.push(b.requires_grad().then(|| bias_grad(grad_out, cout, plane)));
        }
        grads
    }
}

/// Transposed convolution, the adjoint of [`conv2d`] with the same stride and
/// padding. `weight` is `Cin×Cout×k×k`.
pub fn conv_transpose2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let [n, cin, h, w] = input.dims4()?;
    let [wcin, cout, kh, kw] = weight.dims4()?;
    if kh != kw {
        return Err(Error::shape(format!("conv_transpose2d: kernel must be square, got {kh}×{kw}")));
    }
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv_transpose2d: input channels {cin} do not match weight input channels {wcin}"
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("conv_transpose2d: stride must be ≥ 1"));
    }
    let out_h = conv_transpose_output_size(h, kh, stride, pad)
        .ok_or_else(|| Error::shape(format!("conv_transpose2d: height {h} gives empty output")))?;
    let out_w = conv_transpose_output_size(w, kw, stride, pad)
        .ok_or_else(|| Error::shape(format!("conv_transpose2d: width {w} gives empty output")))?;
    check_bias(bias, cout, "conv_transpose2d")?;

    // The output image is the "image" side; the input is the placement grid.
    let g = Geometry {
        channels: cout,
        height: out_h,
        width: out_w,
        kernel: kh,
        stride,
        pad,
        out_h: h,
        out_w: w,
    };
    let (rows, plane) = (g.col_rows(), g.col_cols());
    let mut out = vec![0.0f32; n * g.image_len()];
    let mut cols = vec![0.0f32; rows * plane];
    for (x, dst) in input.data().chunks(cin * plane).zip(out.chunks_mut(g.image_len())) {
        // cols = Wᵀ · x, with W viewed as Cin × (Cout·k·k)
        gemm(rows, cin, plane, MatRef::transposed(weight.data(), rows), MatRef::row_major(x, plane), 0.0, &mut cols);
        col2im(&cols, &g, dst);
    }
    if let Some(b) = bias {
        add_bias(&mut out, b.data(), out_h * out_w);
    }

    Ok(Tensor::from_op(
        vec![n, cout, out_h, out_w],
        out,
        Box::new(ConvTranspose2dBackward {
            input: input.clone(),
            weight: weight.clone(),
            bias: bias.cloned(),
            geometry: g,
            batch: n,
            in_channels: cin,
        }),
    ))
}

struct ConvTranspose2dBackward {
    input: Tensor,
    weight: Tensor,
    bias: Option<Tensor>,
    geometry: Geometry,
    batch: usize,
    in_channels: usize,
}

impl Backward for ConvTranspose2dBackward {
    fn inputs(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.input, &self.weight];
        v.extend(self.bias.as_ref());
        v
    }

    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>> {
        let g = &self.geometry;
        let (rows, plane, cin) = (g.col_rows(), g.col_cols(), self.in_channels);
        let need_x = self.input.requires_grad();
        let need_w = self.weight.requires_grad();

        let mut dx = need_x.then(|| vec![0.0f32; self.batch * cin * plane]);
        let mut dw = need_w.then(|| vec![0.0f32; cin * rows]);
        let mut cols = vec![0.0f32; rows * plane];

        for i in 0..self.batch {
            let dy = &grad_out[i * g.image_len()..(i + 1) * g.image_len()];
            im2col(dy, g, &mut cols);
            if let Some(dx) = dx.as_mut() {
                // dX = W · im2col(dY)
                gemm(cin, rows, plane, MatRef::row_major(self.weight.data(), rows), MatRef::row_major(&cols, plane), 0.0, &mut dx[i * cin * plane..(i + 1) * cin * plane]);
            }
            if let Some(dw) = dw.as_mut() {
                // dW += X · im2col(dY)ᵀ
                let x = &self.input.data()[i * cin * plane..(i + 1) * cin * plane];
                gemm(cin, plane, rows, MatRef::row_major(x, plane), MatRef::transposed(&cols, plane), 1.0, dw);
            }
        }

        let mut grads = vec![dx, dw];
        if let Some(b) = &self.bias {
            grads.push(b.requires_grad().then(|| bias_grad(grad_out, g.channels, g.height * g.width)));
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_kernel_sums_disjoint_blocks() {
        let x = Tensor::full(&[1, 1, 4, 4], 1.0);
        let w = Tensor::full(&[1, 1, 2, 2], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &w, Some(&b), 2, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[4.0; 4]);
    }

    #[test]
    fn generator_first_layer_shape() {
        let x = Tensor::zeros(&[1, 12, 256, 256]);
        let w = Tensor::zeros(&[32, 12, 4, 4]);
        let y = conv2d(&x, &w, None, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 32, 128, 128]);
    }

    #[test]
    fn transpose_ones_kernel_tiles_output() {
        let x = Tensor::full(&[1, 1, 2, 2], 1.0);
        let w = Tensor::full(&[1, 1, 2, 2], 1.0);
        let y = conv_transpose2d(&x, &w, Some(&Tensor::zeros(&[1])), 2, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        assert_eq!(y.data(), &[1.0; 16]);
    }

    #[test]
    fn transpose_bottleneck_shape() {
        let x = Tensor::zeros(&[1, 512, 1, 1]);
        let w = Tensor::zeros(&[512, 512, 4, 4]);
        let y = conv_transpose2d(&x, &w, None, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 512, 2, 2]);
    }

    #[test]
    fn padding_contributes_zeros() {
        let x = Tensor::full(&[1, 1, 2, 2], 1.0);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &w, None, 1, 1).unwrap();
        assert_eq!(y.data(), &[4.0; 4]);
    }

    #[test]
    fn channel_mismatch_names_dimension() {
        let x = Tensor::zeros(&[1, 3, 8, 8]);
        let w = Tensor::zeros(&[4, 2, 4, 4]);
        let err = conv2d(&x, &w, None, 2, 1).unwrap_err().to_string();
        assert!(err.contains("input channels 3"), "{err}");
    }

    #[test]
    fn kernel_larger_than_padded_input_rejected() {
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        let w = Tensor::zeros(&[1, 1, 5, 5]);
        let err = conv2d(&x, &w, None, 1, 1).unwrap_err().to_string();
        assert!(err.contains("height"), "{err}");
    }

    #[test]
    fn bias_length_checked() {
        let x = Tensor::zeros(&[1, 1, 4, 4]);
        let w = Tensor::zeros(&[2, 1, 2, 2]);
        assert!(conv2d(&x, &w, Some(&Tensor::zeros(&[3])), 2, 0).is_err());
    }

    #[test]
    fn output_size_formulas() {
        assert_eq!(conv_output_size(256, 4, 2, 1), Some(128));
        assert_eq!(conv_output_size(32, 4, 1, 1), Some(31));
        assert_eq!(conv_output_size(1, 4, 2, 1), None);
        assert_eq!(conv_transpose_output_size(1, 4, 2, 1), Some(2));
        assert_eq!(conv_transpose_output_size(128, 4, 2, 1), Some(256));
    }
}
