//! FSRCNN and RDN super-resolvers adapted to 5-channel deformation fields.
//!
//! A [`Model`] maps a normalized LR tensor to a correction on top of the
//! bicubic upsampling of its input, so at initialization the prediction is
//! already a reasonable interpolant and training only has to learn the
//! physics-driven detail. The residual path can be switched off in
//! [`ModelConfig`].

mod fsrcnn;
mod normalizer;
mod rdn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::{FieldGrid, GridShape, CHANNELS};
use crate::interp::bicubic_upsample;
use crate::nn::{ParamBuilder, Tensor};

pub use fsrcnn::{Fsrcnn, FsrcnnTape};
pub use normalizer::Normalizer;
pub use rdn::{Rdn, RdnTape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Fsrcnn,
    Rdn,
}

impl Arch {
    pub const ALL: [Arch; 2] = [Arch::Fsrcnn, Arch::Rdn];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Fsrcnn => "fsrcnn",
            Arch::Rdn => "rdn",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fsrcnn" => Ok(Arch::Fsrcnn),
            "rdn" => Ok(Arch::Rdn),
            other => Err(Error::invalid(format!("unknown architecture '{other}' (expected fsrcnn or rdn)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsrcnnConfig {
    /// Number of 3×3 mapping layers.
    pub layers: usize,
    /// Feature width before shrinking and after expansion.
    pub d: usize,
    /// Shrunk feature width used by the mapping layers.
    pub s: usize,
}

impl Default for FsrcnnConfig {
    fn default() -> Self {
        Self { layers: 8, d: 128, s: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RdnConfig {
    pub blocks: usize,
    pub layers_per_block: usize,
    pub growth: usize,
    pub features: usize,
}

impl Default for RdnConfig {
    fn default() -> Self {
        Self { blocks: 2, layers_per_block: 4, growth: 32, features: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub in_channels: usize,
    pub out_channels: usize,
    pub scale: usize,
    /// Add the network output to the bicubic upsampling of the input.
    pub bicubic_residual: bool,
    pub fsrcnn: FsrcnnConfig,
    pub rdn: RdnConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Rdn,
            in_channels: CHANNELS,
            out_channels: CHANNELS,
            scale: 4,
            bicubic_residual: true,
            fsrcnn: FsrcnnConfig::default(),
            rdn: RdnConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn new(arch: Arch) -> Self {
        Self { arch, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels != CHANNELS || self.out_channels != CHANNELS {
            return Err(Error::invalid(format!(
                "models read and write {CHANNELS} channels, got {} in / {} out",
                self.in_channels, self.out_channels
            )));
        }
        if self.scale < 2 {
            return Err(Error::invalid(format!("scale must be >= 2, got {}", self.scale)));
        }
        let f = &self.fsrcnn;
        let r = &self.rdn;
        if f.d == 0 || f.s == 0 {
            return Err(Error::invalid("fsrcnn widths must be positive"));
        }
        if r.blocks == 0 || r.layers_per_block == 0 || r.growth == 0 || r.features == 0 {
            return Err(Error::invalid("rdn hyperparameters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Net {
    Fsrcnn(Fsrcnn),
    Rdn(Rdn),
}

/// Saved activations of one forward pass.
#[derive(Debug, Clone)]
pub enum Tape {
    Fsrcnn(FsrcnnTape),
    Rdn(RdnTape),
}

/// Network definition, its flat parameter vector and the input statistics.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    net: Net,
    params: Vec<f32>,
    normalizer: Option<Normalizer>,
}

/// Everything needed to push the gradient of a physical output back to the
/// parameters.
#[derive(Debug, Clone)]
pub struct Trace {
    tape: Tape,
}

impl Model {
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut pb = ParamBuilder::default();
        let net = Self::layout(&config, &mut pb);
        let params = pb.initialize(seed);
        Ok(Self { config, net, params, normalizer: None })
    }

    /// Rebuilds a model around existing parameters.
    pub fn from_parts(config: ModelConfig, params: Vec<f32>, normalizer: Option<Normalizer>) -> Result<Self> {
        config.validate()?;
        let mut pb = ParamBuilder::default();
        let net = Self::layout(&config, &mut pb);
        if params.len() != pb.len() {
            return Err(Error::shape(pb.len(), params.len()));
        }
        Ok(Self { config, net, params, normalizer })
    }

    fn layout(config: &ModelConfig, pb: &mut ParamBuilder) -> Net {
        let (cin, cout, s) = (config.in_channels, config.out_channels, config.scale);
        match config.arch {
            Arch::Fsrcnn => Net::Fsrcnn(Fsrcnn::new(pb, &config.fsrcnn, cin, cout, s)),
            Arch::Rdn => Net::Rdn(Rdn::new(pb, &config.rdn, cin, cout, s)),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn arch(&self) -> Arch {
        self.config.arch
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) {
        self.normalizer = Some(normalizer);
    }

    /// Raw network map on a normalized input tensor.
    pub fn forward_tensor(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        if x.channels != self.config.in_channels {
            return Err(Error::shape(self.config.in_channels, x.channels));
        }
        Ok(match &self.net {
            Net::Fsrcnn(n) => {
                let (y, t) = n.forward(&self.params, x);
                (y, Tape::Fsrcnn(t))
            }
            Net::Rdn(n) => {
                let (y, t) = n.forward(&self.params, x);
                (y, Tape::Rdn(t))
            }
        })
    }

    /// Accumulates `∂L/∂params` into `grads` given `∂L/∂y` for the raw
    /// network output.
    pub fn backward_tensor(&self, tape: &Tape, dy: &Tensor, grads: &mut [f32]) {
        debug_assert_eq!(grads.len(), self.params.len());
        match (&self.net, tape) {
            (Net::Fsrcnn(n), Tape::Fsrcnn(t)) => n.backward(&self.params, t, dy, grads),
            (Net::Rdn(n), Tape::Rdn(t)) => n.backward(&self.params, t, dy, grads),
            _ => panic!("tape recorded by a different architecture"),
        }
    }

    fn fitted(&self) -> Result<&Normalizer> {
        self.normalizer.as_ref().ok_or(Error::UnfittedNormalizer)
    }

    /// Super-resolves one LR grid into physical HR fields.
    pub fn predict(&self, lr: &FieldGrid) -> Result<FieldGrid> {
        self.predict_traced(lr).map(|(y, _)| y)
    }

    /// Like [`Model::predict`], also returning what [`Model::backward`]
    /// needs.
    pub fn predict_traced(&self, lr: &FieldGrid) -> Result<(FieldGrid, Trace)> {
        let norm = self.fitted()?;
        let (nx, ny) = lr.resolution();
        let x = norm.normalize_tensor(lr)?;
        let (y, tape) = self.forward_tensor(&x)?;
        let s = self.config.scale;
        let shape = GridShape::new(nx * s, ny * s, lr.shape.width, lr.shape.height);
        let mut out = FieldGrid::zeros(shape, lr.q);
        let plane = shape.nodes();
        let base = if self.config.bicubic_residual { Some(bicubic_upsample(lr, s)?) } else { None };
        for c in 0..CHANNELS {
            let (shift, scale) = (norm.shift[c], norm.scale[c]);
            let src = &y.data[c * plane..(c + 1) * plane];
            let dst = &mut out.data_mut()[c * plane..(c + 1) * plane];
            match &base {
                Some(b) => {
                    let b = &b.data()[c * plane..(c + 1) * plane];
                    for ((d, v), bv) in dst.iter_mut().zip(src).zip(b) {
                        *d = bv + *v as f64 * scale;
                    }
                }
                None => {
                    for (d, v) in dst.iter_mut().zip(src) {
                        *d = shift + *v as f64 * scale;
                    }
                }
            }
        }
        Ok((out, Trace { tape }))
    }

    /// Accumulates parameter gradients from `∂L/∂out` of a traced
    /// prediction.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut [f32]) -> Result<()> {
        let norm = self.fitted()?;
        let plane = grad_out.len() / CHANNELS;
        let side = (plane as f64).sqrt() as usize;
        if side * side * CHANNELS != grad_out.len() {
            return Err(Error::invalid("gradient is not a square 5-channel grid"));
        }
        let mut dy = Tensor::zeros(CHANNELS, side, side);
        for c in 0..CHANNELS {
            let s = norm.scale[c];
            for (d, g) in dy.data[c * plane..(c + 1) * plane].iter_mut().zip(&grad_out[c * plane..(c + 1) * plane]) {
                *d = (g * s) as f32;
            }
        }
        self.backward_tensor(&trace.tape, &dy, grads);
        Ok(())
    }

    pub fn predict_batch(&self, batch: &[FieldGrid], exec: Execution) -> Result<Vec<FieldGrid>> {
        exec::map_slice(exec, batch, |g| self.predict(g)).into_iter().collect()
    }
}
