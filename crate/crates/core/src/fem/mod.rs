//! Finite element generation of LR/HR deformation fields.

pub mod dataset;
pub mod mesh;
pub mod sample;
pub mod solve;

pub use dataset::{analytical_grid, generate_dataset, Dataset, DatasetParams, HrSource, Manifest, Sample};
pub use mesh::{build_coarse_mesh, CellSplit, Mesh};
pub use sample::sample_to_grid;
pub use solve::{assemble_and_solve, l2_displacement_error, recover_nodal_stress, solve_with, NodalSolution};
