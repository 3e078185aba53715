//! Layers with explicit backward passes.
//!
//! Backward functions accumulate into the gradient vector and, when asked,
//! into the input gradient (`+=`), so branches that fan in can share a
//! buffer.

use super::ops::{col2im, gemm, im2col, Window};
use super::{Init, ParamBuilder, Slot, Tensor};

/// Stride-1 convolution with "same" zero padding and an odd square kernel.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    weight: Slot,
    bias: Slot,
}

impl Conv2d {
    pub fn new(pb: &mut ParamBuilder, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "odd kernel required");
        let bound = 1.0 / ((in_channels * kernel * kernel) as f32).sqrt();
        let weight = pb.alloc(out_channels * in_channels * kernel * kernel, Init::Uniform(bound));
        let bias = pb.alloc(out_channels, Init::Uniform(bound));
        Self { in_channels, out_channels, kernel, weight, bias }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len + self.bias.len
    }

    fn window(&self, height: usize, width: usize) -> Window {
        Window { channels: self.in_channels, height, width, kernel: self.kernel, stride: 1, pad: self.kernel / 2 }
    }

    pub fn forward(&self, p: &[f32], x: &Tensor) -> Tensor {
        assert_eq!(x.channels, self.in_channels, "conv input channels");
        self.forward_raw(p, &x.data, x.height, x.width)
    }

    /// Forward pass on the leading `in_channels` planes of `x`.
    pub fn forward_raw(&self, p: &[f32], x: &[f32], height: usize, width: usize) -> Tensor {
        let hw = height * width;
        let mut y = Tensor::zeros(self.out_channels, height, width);
        for (plane, b) in y.data.chunks_mut(hw).zip(self.bias.of(p)) {
            plane.fill(*b);
        }
        let w = self.weight.of(p);
        let k = self.in_channels * self.kernel * self.kernel;
        if self.kernel == 1 {
            gemm(self.out_channels, k, hw, 1.0, w, false, &x[..k * hw], false, 1.0, &mut y.data);
        } else {
            let win = self.window(height, width);
            let mut cols = vec![0.0; k * hw];
            im2col(&x[..self.in_channels * hw], &win, &mut cols);
            gemm(self.out_channels, k, hw, 1.0, w, false, &cols, false, 1.0, &mut y.data);
        }
        y
    }

    /// Accumulates parameter gradients into `g` and, if given, the input
    /// gradient into `dx`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward_raw(
        &self,
        p: &[f32],
        x: &[f32],
        height: usize,
        width: usize,
        dy: &[f32],
        g: &mut [f32],
        dx: Option<&mut [f32]>,
    ) {
        let hw = height * width;
        for (db, plane) in self.bias.of_mut(g).iter_mut().zip(dy.chunks(hw)) {
            *db += plane.iter().sum::<f32>();
        }
        let k = self.in_channels * self.kernel * self.kernel;
        let w = self.weight.of(p);
        let cols_buf;
        let cols: &[f32] = if self.kernel == 1 {
            &x[..k * hw]
        } else {
            let mut c = vec![0.0; k * hw];
            im2col(&x[..self.in_channels * hw], &self.window(height, width), &mut c);
            cols_buf = c;
            &cols_buf
        };
        gemm(self.out_channels, hw, k, 1.0, dy, false, cols, true, 1.0, self.weight.of_mut(g));
        if let Some(dx) = dx {
            if self.kernel == 1 {
                gemm(k, self.out_channels, hw, 1.0, w, true, dy, false, 1.0, &mut dx[..k * hw]);
            } else {
                let mut dcols = vec![0.0; k * hw];
                gemm(k, self.out_channels, hw, 1.0, w, true, dy, false, 0.0, &mut dcols);
                col2im(&dcols, &self.window(height, width), &mut dx[..self.in_channels * hw]);
            }
        }
    }

    pub fn backward(&self, p: &[f32], x: &Tensor, dy: &Tensor, g: &mut [f32], dx: Option<&mut Tensor>) {
        self.backward_raw(p, &x.data, x.height, x.width, &dy.data, g, dx.map(|t| t.data.as_mut_slice()));
    }
}

/// Transposed convolution (fractionally strided), the learned upsampler.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
    weight: Slot,
    bias: Slot,
}

impl ConvTranspose2d {
    pub fn new(
        pb: &mut ParamBuilder,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Self {
        assert!(output_pad < stride, "output padding must be smaller than the stride");
        // weights are stored (in, out, k, k); the fan-in seen by the
        // initializer is therefore out·k²
        let bound = 1.0 / ((out_channels * kernel * kernel) as f32).sqrt();
        let weight = pb.alloc(in_channels * out_channels * kernel * kernel, Init::Uniform(bound));
        let bias = pb.alloc(out_channels, Init::Uniform(bound));
        Self { in_channels, out_channels, kernel, stride, pad, output_pad, weight, bias }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len + self.bias.len
    }

    pub fn output_size(&self, n: usize) -> usize {
        (n - 1) * self.stride + self.kernel + self.output_pad - 2 * self.pad
    }

    fn window(&self, height: usize, width: usize) -> Window {
        Window {
            channels: self.out_channels,
            height: self.output_size(height),
            width: self.output_size(width),
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
        }
    }

    pub fn forward(&self, p: &[f32], x: &Tensor) -> Tensor {
        assert_eq!(x.channels, self.in_channels, "transposed conv input channels");
        let hw = x.plane();
        let win = self.window(x.height, x.width);
        debug_assert_eq!((win.out_height(), win.out_width()), (x.height, x.width));
        let rows = win.col_rows();
        let mut cols = vec![0.0; rows * hw];
        gemm(rows, self.in_channels, hw, 1.0, self.weight.of(p), true, &x.data, false, 0.0, &mut cols);
        let mut y = Tensor::zeros(self.out_channels, win.height, win.width);
        let plane = y.plane();
        for (dst, b) in y.data.chunks_mut(plane).zip(self.bias.of(p)) {
            dst.fill(*b);
        }
        col2im(&cols, &win, &mut y.data);
        y
    }

    pub fn backward(&self, p: &[f32], x: &Tensor, dy: &Tensor, g: &mut [f32], dx: Option<&mut Tensor>) {
        let hw = x.plane();
        let win = self.window(x.height, x.width);
        let rows = win.col_rows();
        for (db, plane) in self.bias.of_mut(g).iter_mut().zip(dy.data.chunks(dy.plane())) {
            *db += plane.iter().sum::<f32>();
        }
        let mut dcols = vec![0.0; rows * hw];
        im2col(&dy.data, &win, &mut dcols);
        gemm(self.in_channels, hw, rows, 1.0, &x.data, false, &dcols, true, 1.0, self.weight.of_mut(g));
        if let Some(dx) = dx {
            gemm(self.in_channels, rows, hw, 1.0, self.weight.of(p), false, &dcols, false, 1.0, &mut dx.data);
        }
    }
}

/// Parametric ReLU with one learned slope per channel.
#[derive(Debug, Clone)]
pub struct PRelu {
    pub channels: usize,
    alpha: Slot,
}

impl PRelu {
    pub fn new(pb: &mut ParamBuilder, channels: usize) -> Self {
        Self { channels, alpha: pb.alloc(channels, Init::Constant(0.25)) }
    }

    pub fn param_count(&self) -> usize {
        self.alpha.len
    }

    pub fn forward(&self, p: &[f32], z: &Tensor) -> Tensor {
        let mut a = z.clone();
        for (plane, &al) in a.data.chunks_mut(z.plane()).zip(self.alpha.of(p)) {
            plane.iter_mut().filter(|v| **v < 0.0).for_each(|v| *v *= al);
        }
        a
    }

    /// Returns the gradient w.r.t. the pre-activation `z`.
    pub fn backward(&self, p: &[f32], z: &Tensor, da: &Tensor, g: &mut [f32]) -> Tensor {
        let hw = z.plane();
        let mut dz = da.clone();
        let alpha = self.alpha.of(p).to_vec();
        let ga = self.alpha.of_mut(g);
        for c in 0..self.channels {
            let zs = &z.data[c * hw..(c + 1) * hw];
            let ds = &mut dz.data[c * hw..(c + 1) * hw];
            let mut acc = 0.0f32;
            for (d, &zv) in ds.iter_mut().zip(zs) {
                if zv < 0.0 {
                    acc += *d * zv;
                    *d *= alpha[c];
                }
            }
            ga[c] += acc;
        }
        dz
    }
}

pub fn relu(z: &Tensor) -> Tensor {
    let mut a = z.clone();
    a.data.iter_mut().for_each(|v| *v = v.max(0.0));
    a
}

/// Masks `da` in place by the sign of the activation output.
pub fn relu_backward(a: &[f32], da: &mut [f32]) {
    da.iter_mut().zip(a).filter(|(_, &v)| v <= 0.0).for_each(|(d, _)| *d = 0.0);
}

/// `(c·r², h, w) → (c, h·r, w·r)`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Tensor {
    assert_eq!(x.channels % (r * r), 0, "pixel shuffle channel count");
    let c = x.channels / (r * r);
    let (h, w) = (x.height, x.width);
    let mut y = Tensor::zeros(c, h * r, w * r);
    for ch in 0..c {
        for i in 0..r {
            for j in 0..r {
                let src = &x.data[((ch * r + i) * r + j) * h * w..][..h * w];
                for yy in 0..h {
                    let row = &mut y.data[(ch * h * r + yy * r + i) * w * r..][..w * r];
                    for xx in 0..w {
                        row[xx * r + j] = src[yy * w + xx];
                    }
                }
            }
        }
    }
    y
}

/// Inverse of [`pixel_shuffle`]; also its adjoint, since the map is a
/// permutation.
pub fn pixel_unshuffle(y: &Tensor, r: usize) -> Tensor {
    assert!(y.height % r == 0 && y.width % r == 0, "pixel unshuffle extent");
    let (h, w) = (y.height / r, y.width / r);
    let c = y.channels;
    let mut x = Tensor::zeros(c * r * r, h, w);
    for ch in 0..c {
        for i in 0..r {
            for j in 0..r {
                let dst = &mut x.data[((ch * r + i) * r + j) * h * w..][..h * w];
                for yy in 0..h {
                    let row = &y.data[(ch * h * r + yy * r + i) * w * r..][..w * r];
                    for xx in 0..w {
                        dst[yy * w + xx] = row[xx * r + j];
                    }
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize, s: f32) -> Tensor {
        let data = (0..c * h * w).map(|i| ((i as f32) * 0.731 + s).sin()).collect();
        Tensor::from_vec(c, h, w, data)
    }

    fn dot(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
    }

    /// Checks parameter and input gradients of a layer against central
    /// differences of the linear read-out ⟨f(x), r⟩, in f64 accumulation.
    fn check_layer(
        n_params: usize,
        x: &Tensor,
        fwd: &dyn Fn(&[f32], &Tensor) -> Tensor,
        bwd: &dyn Fn(&[f32], &Tensor, &Tensor, &mut [f32]) -> Tensor,
    ) {
        let p: Vec<f32> = (0..n_params).map(|i| ((i as f32) * 0.377).cos() * 0.3).collect();
        let y = fwd(&p, x);
        let r = ramp(y.channels, y.height, y.width, 0.5);
        let mut g = vec![0.0; n_params];
        let dx = bwd(&p, x, &r, &mut g);
        let eps = 1e-2f32;
        let loss = |p: &[f32], x: &Tensor| dot(&fwd(p, x).data, &r.data);
        for i in (0..n_params).step_by(n_params.div_ceil(40).max(1)) {
            let mut pp = p.clone();
            pp[i] += eps;
            let lp = loss(&pp, x);
            pp[i] -= 2.0 * eps;
            let lm = loss(&pp, x);
            let fd = (lp - lm) / (2.0 * eps as f64);
            assert!((fd - g[i] as f64).abs() < 2e-2 * (1.0 + fd.abs()), "param {i}: fd {fd} vs {}", g[i]);
        }
        for i in (0..x.data.len()).step_by(x.data.len().div_ceil(40).max(1)) {
            let mut xp = x.clone();
            xp.data[i] += eps;
            let lp = loss(&p, &xp);
            xp.data[i] -= 2.0 * eps;
            let lm = loss(&p, &xp);
            let fd = (lp - lm) / (2.0 * eps as f64);
            assert!((fd - dx.data[i] as f64).abs() < 2e-2 * (1.0 + fd.abs()), "input {i}: fd {fd} vs {}", dx.data[i]);
        }
    }

    #[test]
    fn conv_gradients() {
        for k in [1, 3, 5] {
            let mut pb = ParamBuilder::default();
            let conv = Conv2d::new(&mut pb, 3, 4, k);
            let x = ramp(3, 6, 7, 0.1);
            check_layer(
                pb.len(),
                &x,
                &|p, x| conv.forward(p, x),
                &|p, x, dy, g| {
                    let mut dx = Tensor::zeros(x.channels, x.height, x.width);
                    conv.backward(p, x, dy, g, Some(&mut dx));
                    dx
                },
            );
        }
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut pb = ParamBuilder::default();
        let conv = Conv2d::new(&mut pb, 2, 3, 3);
        let p = pb.initialize(3);
        let x = ramp(2, 5, 4, 0.0);
        let y = conv.forward(&p, &x);
        let (wt, b) = (&p[..54], &p[54..]);
        for o in 0..3 {
            for yy in 0..5 {
                for xx in 0..4 {
                    let mut acc = b[o];
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (iy, ix) = (yy as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                                if iy >= 0 && iy < 5 && ix >= 0 && ix < 4 {
                                    acc += wt[((o * 2 + c) * 3 + ky) * 3 + kx] * x.data[(c * 5 + iy as usize) * 4 + ix as usize];
                                }
                            }
                        }
                    }
                    assert!((acc - y.data[(o * 5 + yy) * 4 + xx]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn transposed_conv_shape_and_gradients() {
        let mut pb = ParamBuilder::default();
        let up = ConvTranspose2d::new(&mut pb, 3, 2, 9, 4, 4, 3);
        assert_eq!(up.output_size(32), 128);
        let x = ramp(3, 4, 5, 0.3);
        let y = up.forward(&pb.initialize(0), &x);
        assert_eq!((y.channels, y.height, y.width), (2, 16, 20));
        check_layer(
            pb.len(),
            &x,
            &|p, x| up.forward(p, x),
            &|p, x, dy, g| {
                let mut dx = Tensor::zeros(x.channels, x.height, x.width);
                up.backward(p, x, dy, g, Some(&mut dx));
                dx
            },
        );
    }

    #[test]
    fn prelu_gradients() {
        let mut pb = ParamBuilder::default();
        let act = PRelu::new(&mut pb, 3);
        // keep values away from the kink so differences stay one-sided
        let mut x = ramp(3, 4, 4, 0.2);
        x.data.iter_mut().for_each(|v| *v += 0.05f32.copysign(*v));
        check_layer(pb.len(), &x, &|p, z| act.forward(p, z), &|p, z, da, g| act.backward(p, z, da, g));
    }

    #[test]
    fn prelu_starts_at_quarter_slope() {
        let mut pb = ParamBuilder::default();
        let act = PRelu::new(&mut pb, 1);
        let p = pb.initialize(0);
        let y = act.forward(&p, &Tensor::from_vec(1, 1, 2, vec![-2.0, 3.0]));
        assert_eq!(y.data, [-0.5, 3.0]);
    }

    #[test]
    fn relu_masks_gradient() {
        let a = relu(&Tensor::from_vec(1, 1, 3, vec![-1.0, 0.0, 2.0]));
        assert_eq!(a.data, [0.0, 0.0, 2.0]);
        let mut d = vec![1.0; 3];
        relu_backward(&a.data, &mut d);
        assert_eq!(d, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn pixel_shuffle_layout_and_inverse() {
        let x = Tensor::from_vec(4, 1, 1, vec![0.0, 1.0, 2.0, 3.0]);
        let y = pixel_shuffle(&x, 2);
        assert_eq!((y.channels, y.height, y.width), (1, 2, 2));
        assert_eq!(y.data, [0.0, 1.0, 2.0, 3.0]);
        let x = ramp(32, 3, 5, 0.0);
        assert_eq!(pixel_unshuffle(&pixel_shuffle(&x, 4), 4), x);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let mut pb = ParamBuilder::default();
        let conv = Conv2d::new(&mut pb, 4, 8, 3);
        assert_eq!(conv.param_count(), 4 * 8 * 9 + 8);
        let a = pb.initialize(7);
        assert_eq!(a, pb.initialize(7));
        assert_ne!(a, pb.initialize(8));
        let bound = 1.0 / 6.0;
        assert!(a.iter().all(|v| v.abs() <= bound));
    }
}
