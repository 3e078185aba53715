//! Dense kernels: GEMM wrappers and im2col/col2im for strided 2D windows.

/// `C ← α·op(A)·op(B) + β·C` on row-major buffers.
///
/// `op(A)` is `m × k`, `op(B)` is `k × n`; `trans_a`/`trans_b` select the
/// transposed view of the stored matrix.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    trans_a: bool,
    b: &[f32],
    trans_b: bool,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // row-major extents checked by the debug assertion.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a square-kernel window sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Window {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Rows of the column matrix.
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Columns of the column matrix.
    pub fn col_cols(&self) -> usize {
        self.out_height() * self.out_width()
    }
}

/// Unfolds `x` (CHW) into `cols[(c·k + ky)·k + kx][oy·ow + ox]`.
pub fn im2col(x: &[f32], w: &Window, cols: &mut [f32]) {
    let (oh, ow) = (w.out_height(), w.out_width());
    let k = w.kernel;
    for c in 0..w.channels {
        let plane = &x[c * w.height * w.width..(c + 1) * w.height * w.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * w.stride + ky) as isize - w.pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= w.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w.width..(iy as usize + 1) * w.width];
                    if w.stride == 1 {
                        // contiguous run with zero padding at both ends
                        let shift = kx as isize - w.pad as isize;
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = ox as isize + shift;
                            *v = if ix >= 0 && (ix as usize) < w.width { src[ix as usize] } else { 0.0 };
                        }
                    } else {
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * w.stride + kx) as isize - w.pad as isize;
                            *v = if ix >= 0 && (ix as usize) < w.width { src[ix as usize] } else { 0.0 };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back onto `x`, accumulating.
pub fn col2im(cols: &[f32], w: &Window, x: &mut [f32]) {
    let (oh, ow) = (w.out_height(), w.out_width());
    let k = w.kernel;
    for c in 0..w.channels {
        let plane = &mut x[c * w.height * w.width..(c + 1) * w.height * w.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * w.stride + ky) as isize - w.pad as isize;
                    if iy < 0 || iy >= w.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w.width..(iy as usize + 1) * w.width];
                    let line = &src[oy * ow..(oy + 1) * ow];
                    for (ox, v) in line.iter().enumerate() {
                        let ix = (ox * w.stride + kx) as isize - w.pad as isize;
                        if ix >= 0 && (ix as usize) < w.width {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}
