//! LR/HR sample generation and the on-disk dataset container.
//!
//! A dataset directory holds `manifest.json` plus two raw blobs per sample,
//! `samples/NNNN_lr.bin` and `samples/NNNN_hr.bin`: 64-bit little-endian
//! floats, channel-major in the order `(ux, uy, sxx, syy, sxy)`, each channel
//! row-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mesh::{build_coarse_mesh, CellSplit, Mesh};
use super::sample::sample_to_grid;
use super::solve::assemble_and_solve;
use crate::elasticity::{self, DomainSpec, LoadCase, MaterialParams};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::{FieldGrid, GridShape};
use crate::train::split::{split_indices, Split};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Where the HR ground truth comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HrSource {
    /// P1 solve on a `cells × cells` diagonal mesh, `(cells + 1)²` nodes.
    FineFem { cells: usize },
    /// Closed-form manufactured solution.
    Analytical,
}

impl Default for HrSource {
    fn default() -> Self {
        // 128 × 128 = 16384 nodes
        HrSource::FineFem { cells: 127 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetParams {
    pub domain: DomainSpec,
    pub material: MaterialParams,
    pub u0: f64,
    pub q_start: f64,
    pub q_end: f64,
    pub dq: f64,
    pub lr_res: usize,
    pub hr_res: usize,
    pub coarse_target_nodes: usize,
    pub hr_source: HrSource,
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            domain: DomainSpec::unit_square(),
            material: MaterialParams::default(),
            u0: 1.0,
            q_start: 0.0,
            q_end: 4.0,
            dq: 0.04,
            lr_res: 32,
            hr_res: 128,
            coarse_target_nodes: 41,
            hr_source: HrSource::default(),
            split_ratio: 0.8,
            seed: 0,
        }
    }
}

impl DatasetParams {
    /// The arithmetic progression `q_start + k·dq` up to `q_end`.
    pub fn q_values(&self) -> Result<Vec<f64>> {
        if !(self.dq > 0.0) {
            return Err(Error::invalid(format!("dQ must be positive, got {}", self.dq)));
        }
        if !(self.q_end >= self.q_start) {
            return Err(Error::invalid(format!(
                "Q end {} is below Q start {}",
                self.q_end, self.q_start
            )));
        }
        let steps = ((self.q_end - self.q_start) / self.dq + 1e-9).floor() as usize;
        Ok((0..=steps)
            .map(|k| {
                let q = self.q_start + k as f64 * self.dq;
                // strip representation noise such as 0.12000000000000001
                (q * 1e12).round() / 1e12
            })
            .collect())
    }

    pub fn lr_shape(&self) -> GridShape {
        GridShape::new(self.lr_res, self.lr_res, self.domain.width, self.domain.height)
    }

    pub fn hr_shape(&self) -> GridShape {
        GridShape::new(self.hr_res, self.hr_res, self.domain.width, self.domain.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: usize,
    pub q: f64,
    pub lr_file: String,
    pub hr_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub params: DatasetParams,
    pub coarse_mesh_nodes: usize,
    pub hr_nodes: usize,
    pub samples: Vec<SampleEntry>,
    pub split: Split,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// SHA-256 of the serialized manifest, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub q: f64,
    pub lr: FieldGrid,
    pub hr: FieldGrid,
}

impl Sample {
    pub fn load_case(&self, u0: f64) -> LoadCase {
        LoadCase { q: self.q, u0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn params(&self) -> &DatasetParams {
        &self.manifest.params
    }

    pub fn train_samples(&self) -> Vec<&Sample> {
        self.manifest.split.train.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn test_samples(&self) -> Vec<&Sample> {
        self.manifest.split.test.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let sample_dir = dir.join("samples");
        fs::create_dir_all(&sample_dir).map_err(|e| Error::io(&sample_dir, e))?;
        for (entry, sample) in self.manifest.samples.iter().zip(&self.samples) {
            write_file(&dir.join(&entry.lr_file), &sample.lr.to_le_bytes())?;
            write_file(&dir.join(&entry.hr_file), &sample.hr.to_le_bytes())?;
        }
        write_file(&dir.join("manifest.json"), self.manifest.to_json().as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        let lr_shape = manifest.params.lr_shape();
        let hr_shape = manifest.params.hr_shape();
        let mut samples = Vec::with_capacity(manifest.samples.len());
        for entry in &manifest.samples {
            let lr_path = dir.join(&entry.lr_file);
            let hr_path = dir.join(&entry.hr_file);
            let lr = FieldGrid::from_le_bytes(lr_shape, entry.q, &read_file(&lr_path)?).map_err(|e| corrupt(&lr_path, e))?;
            let hr = FieldGrid::from_le_bytes(hr_shape, entry.q, &read_file(&hr_path)?).map_err(|e| corrupt(&hr_path, e))?;
            samples.push(Sample {
                id: entry.id,
                q: entry.q,
                lr,
                hr,
            });
        }
        Ok(Self { manifest, samples })
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = read_file(&path)?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| Error::json(&path, e))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            path,
            found: manifest.format_version,
            expected: DATASET_FORMAT_VERSION,
        });
    }
    Ok(manifest)
}

fn corrupt(path: &Path, e: Error) -> Error {
    Error::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &PathBuf) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Solves the coarse (and, for FEM ground truth, the fine) problem for every
/// load in the Q progression and samples both onto the LR/HR grids.
pub fn generate_dataset(params: &DatasetParams, exec: Execution) -> Result<Dataset> {
    params.domain.validate()?;
    params.material.validate()?;
    if params.lr_res == 0 || params.hr_res == 0 {
        return Err(Error::invalid("grid resolutions must be positive"));
    }
    let q_values = params.q_values()?;
    for &q in &q_values {
        LoadCase::new(q, params.u0)?;
    }
    let coarse = build_coarse_mesh(&params.domain, params.coarse_target_nodes)?;
    let fine = match params.hr_source {
        HrSource::FineFem { cells } => Some(Mesh::structured(&params.domain, cells, cells, CellSplit::Diagonal)?),
        HrSource::Analytical => None,
    };

    let results = exec::map_indexed(exec, q_values.len(), |k| {
        let q = q_values[k];
        make_sample(params, &coarse, fine.as_ref(), k, q).map_err(|e| Error::AtLoad {
            q,
            source: Box::new(e),
        })
    });
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;

    let split = split_indices(samples.len(), params.split_ratio, params.seed)?;
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        params: params.clone(),
        coarse_mesh_nodes: coarse.node_count(),
        hr_nodes: params.hr_shape().nodes(),
        samples: samples
            .iter()
            .map(|s| SampleEntry {
                id: s.id,
                q: s.q,
                lr_file: format!("samples/{:04}_lr.bin", s.id),
                hr_file: format!("samples/{:04}_hr.bin", s.id),
            })
            .collect(),
        split,
    };
    Ok(Dataset { manifest, samples })
}

fn make_sample(params: &DatasetParams, coarse: &Mesh, fine: Option<&Mesh>, id: usize, q: f64) -> Result<Sample> {
    let load = LoadCase { q, u0: params.u0 };
    let mat = params.material;
    let coarse_sol = assemble_and_solve(coarse, &mat, &load)?;
    let lr = sample_to_grid(coarse, &coarse_sol, params.lr_shape(), q)?;
    let hr = match fine {
        Some(mesh) => {
            let sol = assemble_and_solve(mesh, &mat, &load)?;
            sample_to_grid(mesh, &sol, params.hr_shape(), q)?
        }
        None => analytical_grid(params.hr_shape(), &load, &mat),
    };
    Ok(Sample { id, q, lr, hr })
}

/// Grid holding the exact manufactured fields.
pub fn analytical_grid(shape: GridShape, load: &LoadCase, mat: &MaterialParams) -> FieldGrid {
    FieldGrid::from_fn(shape, load.q, |x, y| {
        let (ux, uy) = elasticity::analytical_displacement(x, y, load);
        let (sxx, syy, sxy) = elasticity::analytical_stress(x, y, load, mat);
        [ux, uy, sxx, syy, sxy]
    })
}
