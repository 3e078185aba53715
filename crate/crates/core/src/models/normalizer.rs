use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldGrid, CHANNELS};
use crate::nn::Tensor;

/// Per-channel affine standardization fitted on LR training grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub(crate) shift: [f64; CHANNELS],
    pub(crate) scale: [f64; CHANNELS],
}

impl Normalizer {
    /// Channel means and sample standard deviations over every node of every
    /// grid. Channels with no spread get unit scale.
    pub fn fit(grids: &[FieldGrid]) -> Result<Self> {
        if grids.is_empty() {
            return Err(Error::invalid("cannot fit normalizer on an empty set"));
        }
        let mut shift = [0.0; CHANNELS];
        let mut scale = [1.0; CHANNELS];
        for c in 0..CHANNELS {
            let values = || grids.iter().flat_map(|g| chan(g, c).iter().copied());
            let n = values().count() as f64;
            let mean = values().sum::<f64>() / n;
            let var = values().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            shift[c] = mean;
            if var.sqrt() > 1e-12 {
                scale[c] = var.sqrt();
            }
        }
        Self::new(shift, scale)
    }

    pub fn new(shift: [f64; CHANNELS], scale: [f64; CHANNELS]) -> Result<Self> {
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) || shift.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("invalid normalizer statistics {shift:?} / {scale:?}")));
        }
        Ok(Self { shift, scale })
    }

    pub fn shift(&self) -> &[f64; CHANNELS] {
        &self.shift
    }

    pub fn scale(&self) -> &[f64; CHANNELS] {
        &self.scale
    }

    pub fn normalize(&self, grid: &FieldGrid) -> FieldGrid {
        self.map(grid, |c, v| (v - self.shift[c]) / self.scale[c])
    }

    pub fn denormalize(&self, grid: &FieldGrid) -> FieldGrid {
        self.map(grid, |c, v| v * self.scale[c] + self.shift[c])
    }

    /// Normalized grid as an `f32` network input.
    pub fn normalize_tensor(&self, grid: &FieldGrid) -> Result<Tensor> {
        let (nx, ny) = grid.resolution();
        let data = self.normalize(grid).data().iter().map(|v| *v as f32).collect();
        Ok(Tensor::from_vec(CHANNELS, ny, nx, data))
    }

    fn map(&self, grid: &FieldGrid, f: impl Fn(usize, f64) -> f64) -> FieldGrid {
        let mut out = grid.clone();
        let plane = grid.shape.nodes();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = f(i / plane, *v);
        }
        out
    }
}

fn chan(g: &FieldGrid, c: usize) -> &[f64] {
    let n = g.shape.nodes();
    &g.data()[c * n..(c + 1) * n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;

    #[test]
    fn constant_channel_maps_to_zero() {
        let a = FieldGrid::from_fn(GridShape::unit(4), 0.0, |x, y| [2.0, x, y, x * y, 1.0]);
        let n = Normalizer::fit(std::slice::from_ref(&a)).unwrap();
        assert_eq!(n.scale()[0], 1.0);
        let z = n.normalize(&a);
        assert!(chan(&z, 0).iter().all(|v| *v == 0.0));
        assert!(chan(&z, 4).iter().all(|v| *v == 0.0));
        let mean: f64 = chan(&z, 1).iter().sum::<f64>() / 16.0;
        assert!(mean.abs() < 1e-14);
    }

    #[test]
    fn round_trip_is_identity() {
        let a = FieldGrid::from_fn(GridShape::unit(16), 2.0, |x, y| {
            [(7.0 * x).sin() * 1e3, y - 0.3, x * y * 1e-4, (x + y).exp(), -x]
        });
        let n = Normalizer::fit(std::slice::from_ref(&a)).unwrap();
        let back = n.denormalize(&n.normalize(&a));
        let dev = back.data().iter().zip(a.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-12, "{dev}");
    }

    #[test]
    fn rejects_empty_and_invalid() {
        assert!(Normalizer::fit(&[]).is_err());
        assert!(Normalizer::new([0.0; CHANNELS], [1.0, 1.0, 0.0, 1.0, 1.0]).is_err());
    }
}
