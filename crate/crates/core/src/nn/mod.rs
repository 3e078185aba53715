//! A small CPU tensor engine: CHW activations, a flat parameter vector and
//! explicit forward/backward pairs for the layers the super-resolvers need.
//!
//! Everything runs in `f32` on one sample at a time. Batching and
//! parallelism are handled one level up, by mapping samples over
//! [`crate::exec`] and reducing per-sample gradients in a fixed order.

pub mod layers;
pub mod ops;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use layers::{pixel_shuffle, pixel_unshuffle, relu, relu_backward, Conv2d, ConvTranspose2d, PRelu};

/// Dense CHW activation of a single sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor data length");
        Self { channels, height, width, data }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        (self.channels, self.height, self.width) == (other.channels, other.height, other.width)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }
}

/// A contiguous range inside the flat parameter (or gradient) vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    pub fn of<'a>(&self, p: &'a [f32]) -> &'a [f32] {
        &p[self.offset..self.offset + self.len]
    }

    pub fn of_mut<'a>(&self, p: &'a mut [f32]) -> &'a mut [f32] {
        &mut p[self.offset..self.offset + self.len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform on `[-bound, bound)`.
    Uniform(f32),
    Constant(f32),
}

/// Hands out parameter slots in declaration order and remembers how each
/// one is initialized.
#[derive(Debug, Clone, Default)]
pub struct ParamBuilder {
    len: usize,
    inits: Vec<(Slot, Init)>,
}

impl ParamBuilder {
    pub fn alloc(&mut self, len: usize, init: Init) -> Slot {
        let slot = Slot { offset: self.len, len };
        self.len += len;
        self.inits.push((slot, init));
        slot
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Draws initial values, slot by slot, from a seeded ChaCha8 stream.
    pub fn initialize(&self, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0f32; self.len];
        for (slot, init) in &self.inits {
            let dst = slot.of_mut(&mut params);
            match *init {
                Init::Constant(v) => dst.fill(v),
                Init::Uniform(b) => {
                    let dist = Uniform::new(-b, b).expect("positive init bound");
                    dst.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
                }
            }
        }
        params
    }
}
