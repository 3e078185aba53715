//! Bicubic upsampling of cell-centred grids.

use crate::error::{Error, Result};
use crate::grid::{FieldGrid, GridShape, CHANNELS};

/// Keys cubic convolution kernel with `a = -0.5`.
fn keys(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        A * (((t - 5.0) * t + 8.0) * t - 4.0)
    } else {
        0.0
    }
}

/// Source taps and weights for each output index along one axis.
fn axis_taps(n_in: usize, scale: usize) -> Vec<([usize; 4], [f64; 4])> {
    let last = n_in as isize - 1;
    (0..n_in * scale)
        .map(|o| {
            // output cell centre expressed in input cell-centre coordinates
            let s = (o as f64 + 0.5) / scale as f64 - 0.5;
            let base = s.floor();
            let frac = s - base;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let i = base as isize - 1 + k as isize;
                idx[k] = i.clamp(0, last) as usize;
                w[k] = keys(frac - (k as f64 - 1.0));
            }
            (idx, w)
        })
        .collect()
}

/// Upsamples every channel by an integer factor, keeping cell centres
/// aligned and replicating edge values outside the grid.
pub fn bicubic_upsample(lr: &FieldGrid, scale: usize) -> Result<FieldGrid> {
    if scale < 2 {
        return Err(Error::invalid(format!("bicubic scale must be >= 2, got {scale}")));
    }
    let (nx, ny) = lr.resolution();
    let shape = GridShape::new(nx * scale, ny * scale, lr.shape.width, lr.shape.height);
    let tx = axis_taps(nx, scale);
    let ty = axis_taps(ny, scale);
    let mut out = FieldGrid::zeros(shape, lr.q);
    let mut tmp = vec![0.0; ny * shape.nx];
    for c in 0..CHANNELS {
        let src = &lr.data()[c * nx * ny..(c + 1) * nx * ny];
        // horizontal pass on every input row, then vertical
        for j in 0..ny {
            let row = &src[j * nx..(j + 1) * nx];
            for (o, (idx, w)) in tx.iter().enumerate() {
                tmp[j * shape.nx + o] = (0..4).map(|k| w[k] * row[idx[k]]).sum();
            }
        }
        let dst = &mut out.data_mut()[c * shape.nodes()..(c + 1) * shape.nodes()];
        for (o, (idx, w)) in ty.iter().enumerate() {
            let line = &mut dst[o * shape.nx..(o + 1) * shape.nx];
            for (i, v) in line.iter_mut().enumerate() {
                *v = (0..4).map(|k| w[k] * tmp[idx[k] * shape.nx + i]).sum();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_partition_of_unity() {
        for f in [0.0, 0.125, 0.375, 0.5, 0.9] {
            let s: f64 = (0..4).map(|k| keys(f - (k as f64 - 1.0))).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_reproduced_exactly() {
        let lr = FieldGrid::from_fn(GridShape::unit(8), 1.0, |_, _| [3.25, -1.0, 0.0, 7.5, 2.0]);
        let hr = bicubic_upsample(&lr, 4).unwrap();
        assert_eq!(hr.resolution(), (32, 32));
        for c in 0..CHANNELS {
            let v = lr.data()[c * 64];
            assert!(hr.data()[c * 1024..(c + 1) * 1024].iter().all(|x| *x == v));
        }
    }

    #[test]
    fn affine_reproduced_in_interior() {
        let f = |x: f64, y: f64| 2.0 * x - 3.0 * y + 0.5;
        let lr = FieldGrid::from_fn(GridShape::unit(16), 0.0, |x, y| [f(x, y); CHANNELS]);
        let hr = bicubic_upsample(&lr, 4).unwrap();
        let s = hr.shape;
        // the clamped stencil reaches past the edge within 1.5 input cells
        for j in 8..s.ny - 8 {
            for i in 8..s.nx - 8 {
                let v = hr.data()[j * s.nx + i];
                assert!((v - f(s.x(i), s.y(j))).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_unit_scale() {
        let lr = FieldGrid::zeros(GridShape::unit(4), 0.0);
        assert!(bicubic_upsample(&lr, 1).is_err());
    }
}
