//! Five-channel structured-grid snapshots of a deformation state.
//!
//! Nodes sit at cell centers of a uniform `nx × ny` partition of the domain,
//! so node `(i, j)` has coordinates `((i + ½)·hx, (j + ½)·hy)`. Channel data
//! is stored channel-major, each channel row-major with `x` varying fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Ux = 0,
    Uy = 1,
    Sxx = 2,
    Syy = 3,
    Sxy = 4,
}

impl Channel {
    pub const ALL: [Channel; CHANNELS] = [
        Channel::Ux,
        Channel::Uy,
        Channel::Sxx,
        Channel::Syy,
        Channel::Sxy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Ux => "ux",
            Channel::Uy => "uy",
            Channel::Sxx => "sxx",
            Channel::Syy => "syy",
            Channel::Sxy => "sxy",
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Grid geometry shared by every grid of a given resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
}

impl GridShape {
    pub fn new(nx: usize, ny: usize, width: f64, height: f64) -> Self {
        Self {
            nx,
            ny,
            width,
            height,
        }
    }

    pub fn unit(n: usize) -> Self {
        Self::new(n, n, 1.0, 1.0)
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.width / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.height / self.ny as f64
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }

    /// Number of scalar values in a full five-channel grid.
    #[inline]
    pub fn len(&self) -> usize {
        CHANNELS * self.nodes()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub shape: GridShape,
    pub q: f64,
    data: Vec<f64>,
}

impl FieldGrid {
    pub fn zeros(shape: GridShape, q: f64) -> Self {
        Self {
            shape,
            q,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: GridShape, q: f64, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(shape.len(), data.len()));
        }
        Ok(Self { shape, q, data })
    }

    /// Samples `f(x, y) -> [ux, uy, sxx, syy, sxy]` at every node.
    pub fn from_fn(shape: GridShape, q: f64, mut f: impl FnMut(f64, f64) -> [f64; CHANNELS]) -> Self {
        let mut grid = Self::zeros(shape, q);
        let n = shape.nodes();
        for j in 0..shape.ny {
            let y = shape.y(j);
            for i in 0..shape.nx {
                let v = f(shape.x(i), y);
                let k = j * shape.nx + i;
                for (c, value) in v.into_iter().enumerate() {
                    grid.data[c * n + k] = value;
                }
            }
        }
        grid
    }

    #[inline]
    pub fn resolution(&self) -> (usize, usize) {
        (self.shape.nx, self.shape.ny)
    }

    #[inline]
    pub fn spacing(&self) -> (f64, f64) {
        (self.shape.hx(), self.shape.hy())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        let n = self.shape.nodes();
        &self.data[c.index() * n..(c.index() + 1) * n]
    }

    pub fn channel_mut(&mut self, c: Channel) -> &mut [f64] {
        let n = self.shape.nodes();
        &mut self.data[c.index() * n..(c.index() + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: Channel, i: usize, j: usize) -> f64 {
        self.data[c.index() * self.shape.nodes() + j * self.shape.nx + i]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Point sampling of every `stride`-th node, offset to the sub-cell
    /// nearest each coarse cell center.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        let (nx, ny) = self.resolution();
        if stride == 0 || nx % stride != 0 || ny % stride != 0 {
            return Err(Error::invalid(format!(
                "stride {stride} does not divide resolution {nx}x{ny}"
            )));
        }
        let shape = GridShape::new(nx / stride, ny / stride, self.shape.width, self.shape.height);
        let off = stride / 2;
        let n = shape.nodes();
        let mut out = Self::zeros(shape, self.q);
        for c in Channel::ALL {
            for j in 0..shape.ny {
                for i in 0..shape.nx {
                    out.data[c.index() * n + j * shape.nx + i] =
                        self.get(c, i * stride + off, j * stride + off);
                }
            }
        }
        Ok(out)
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(shape: GridShape, q: f64, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != shape.len() * 8 {
            return Err(Error::shape(shape.len() * 8, bytes.len()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self { shape, q, data })
    }
}
