//! Thin wrapper over `matrixmultiply::sgemm`.
//!
//! The output is partitioned into fixed-size row blocks that run on the rayon
//! pool. Block boundaries never depend on the number of threads and the
//! reduction dimension is never split, so results are identical for any
//! thread count.

use rayon::prelude::*;

const ROW_BLOCK: usize = 32;
/// Below this many multiply-adds a single call is cheaper than fanning out.
const PARALLEL_WORK: usize = 1 << 20;

/// Strided read-only matrix view.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f32],
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    /// Row-major `rows × cols`.
    pub fn row_major(data: &'a [f32], cols: usize) -> Self {
        MatRef {
            data,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// Transpose of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f32], cols: usize) -> Self {
        MatRef {
            data,
            row_stride: 1,
            col_stride: cols,
        }
    }
}

/// `c[m×n] = a[m×k] · b[k×n] + beta · c`, with `c` row-major and contiguous.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: MatRef<'_>, b: MatRef<'_>, beta: f32, c: &mut [f32]) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let max_a = (m - 1) * a.row_stride + (k - 1) * a.col_stride;
    let max_b = (k - 1) * b.row_stride + (n - 1) * b.col_stride;
    assert!(max_a < a.data.len(), "gemm: A view out of bounds");
    assert!(max_b < b.data.len(), "gemm: B view out of bounds");

    let block = |row0: usize, rows: usize, c_block: &mut [f32]| {
        // SAFETY: the bounds checks above cover every element addressed by
        // the strided views; the row block of A starts at row0 < m and spans
        // `rows` rows, and `c_block` holds exactly `rows × n` elements.
        unsafe {
            matrixmultiply::sgemm(
                rows,
                k,
                n,
                1.0,
                a.data.as_ptr().add(row0 * a.row_stride),
                a.row_stride as isize,
                a.col_stride as isize,
                b.data.as_ptr(),
                b.row_stride as isize,
                b.col_stride as isize,
                beta,
                c_block.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    };

    if m * k * n < PARALLEL_WORK || m <= ROW_BLOCK {
        block(0, m, &mut c[..m * n]);
    } else {
        c[..m * n]
            .par_chunks_mut(ROW_BLOCK * n)
            .enumerate()
            .for_each(|(i, chunk)| block(i * ROW_BLOCK, chunk.len() / n, chunk));
    }
}
