//! Physics-informed super-resolution of plane-strain elastic deformation
//! fields.
//!
//! The crate covers the whole pipeline: coarse/fine finite element data
//! generation ([`fem`]), the label-free physics loss on structured grids
//! ([`residual`]), the FSRCNN and RDN super-resolvers ([`models`]) on top of
//! a small CPU tensor engine ([`nn`]), the optimization schedule
//! ([`train`]), and evaluation against ground truth and a bicubic baseline
//! ([`eval`]).

pub mod elasticity;
pub mod error;
pub mod eval;
pub mod exec;
pub mod fem;
pub mod grid;
pub mod interp;
pub mod models;
pub mod nn;
pub mod residual;
pub mod train;

pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::{Channel, FieldGrid, GridShape, CHANNELS};
