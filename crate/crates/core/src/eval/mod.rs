//! Accuracy against HR ground truth, the bicubic baseline, and contour
//! panels.
//!
//! This is the only place HR fields are read.

mod render;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fem::Sample;
use crate::grid::{Channel, FieldGrid, CHANNELS};
use crate::interp::bicubic_upsample;
use crate::models::Model;
use crate::train::Problem;

pub use render::{format_sig, render_contours, Panel, PanelAnnotations, PanelColumn, RowAnnotation};

pub const REPORT_VERSION: u32 = 1;
pub const BICUBIC: &str = "bicubic";

/// `‖pred − ref‖₂ / ‖ref‖₂` over all nodes.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::shape(reference.len(), pred.len()));
    }
    let den: f64 = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if !(den > 0.0) {
        return Err(Error::invalid("relative error against a zero-norm reference"));
    }
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// Relative error of every channel.
pub fn channel_errors(pred: &FieldGrid, reference: &FieldGrid) -> Result<[f64; CHANNELS]> {
    if pred.shape != reference.shape {
        return Err(Error::shape(format!("{:?}", reference.resolution()), format!("{:?}", pred.resolution())));
    }
    let mut out = [0.0; CHANNELS];
    for c in Channel::ALL {
        out[c.index()] = relative_l2(pred.channel(c), reference.channel(c))?;
    }
    Ok(out)
}

/// A reconstruction method under evaluation.
pub struct Method<'a> {
    pub name: String,
    /// Identifier of the weights, e.g. a checkpoint digest.
    pub source: Option<String>,
    pub model: Option<&'a Model>,
}

impl<'a> Method<'a> {
    pub fn bicubic() -> Self {
        Self { name: BICUBIC.into(), source: None, model: None }
    }

    pub fn model(name: impl Into<String>, model: &'a Model, source: Option<String>) -> Self {
        Self { name: name.into(), source, model: Some(model) }
    }

    pub fn reconstruct(&self, lr: &FieldGrid, scale: usize) -> Result<FieldGrid> {
        match self.model {
            Some(m) => m.predict(lr),
            None => bicubic_upsample(lr, scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub id: usize,
    pub q: f64,
    pub errors: [f64; CHANNELS],
    pub mean_error: f64,
    pub physics_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub source: Option<String>,
    /// Sorted by sample id.
    pub samples: Vec<SampleResult>,
    pub mean_per_channel: [f64; CHANNELS],
    pub median_per_channel: [f64; CHANNELS],
    /// Mean over samples and channels.
    pub mean_error: f64,
    pub median_error: f64,
    pub mean_physics_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub manifest_hash: String,
    pub channels: Vec<String>,
    pub methods: Vec<MethodReport>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn check_ground_truth(s: &Sample) -> Result<()> {
    if s.hr.data().is_empty() {
        return Err(Error::MissingGroundTruth(format!("sample {} has no HR fields", s.id)));
    }
    if !s.hr.is_finite() {
        return Err(Error::MissingGroundTruth(format!("sample {} (Q = {}) has non-finite HR values", s.id, s.q)));
    }
    Ok(())
}

impl MethodReport {
    fn aggregate(method: &Method, mut samples: Vec<SampleResult>) -> Self {
        // fixed order makes every aggregate independent of input order
        samples.sort_by_key(|s| s.id);
        let n = samples.len() as f64;
        let mut mean_per_channel = [0.0; CHANNELS];
        let mut median_per_channel = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            mean_per_channel[c] = samples.iter().map(|s| s.errors[c]).sum::<f64>() / n;
            median_per_channel[c] = median(samples.iter().map(|s| s.errors[c]).collect());
        }
        Self {
            method: method.name.clone(),
            source: method.source.clone(),
            mean_per_channel,
            median_per_channel,
            mean_error: mean_per_channel.iter().sum::<f64>() / CHANNELS as f64,
            median_error: median(samples.iter().map(|s| s.mean_error).collect()),
            mean_physics_loss: samples.iter().map(|s| s.physics_loss).sum::<f64>() / n,
            samples,
        }
    }
}

/// Scores every method on every sample: per-channel relative error against
/// HR and the physics loss of the reconstruction.
pub fn evaluate(
    samples: &[&Sample],
    methods: &[Method],
    problem: &Problem,
    manifest_hash: &str,
    scale: usize,
    exec: Execution,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    for s in samples {
        check_ground_truth(s)?;
    }
    let mut reports = Vec::with_capacity(methods.len());
    for method in methods {
        let results = exec::map_slice(exec, samples, |s| -> Result<SampleResult> {
            let pred = method.reconstruct(&s.lr, scale)?;
            if !pred.is_finite() {
                return Err(Error::invalid(format!("{} produced non-finite output for sample {}", method.name, s.id)));
            }
            let errors = channel_errors(&pred, &s.hr)?;
            Ok(SampleResult {
                id: s.id,
                q: s.q,
                errors,
                mean_error: errors.iter().sum::<f64>() / CHANNELS as f64,
                physics_loss: problem.loss(&pred)?.total,
            })
        });
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        reports.push(MethodReport::aggregate(method, results));
    }
    Ok(EvalReport {
        format_version: REPORT_VERSION,
        manifest_hash: manifest_hash.to_string(),
        channels: Channel::ALL.iter().map(|c| c.name().to_string()).collect(),
        methods: reports,
    })
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// Relative errors of one sample under every method, in method order.
    pub fn sample_errors(&self, id: usize) -> Vec<(&str, [f64; CHANNELS])> {
        self.methods
            .iter()
            .filter_map(|m| m.samples.iter().find(|s| s.id == id).map(|s| (m.method.as_str(), s.errors)))
            .collect()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if report.format_version != REPORT_VERSION {
            return Err(Error::Version { path: path.to_path_buf(), found: report.format_version, expected: REPORT_VERSION });
        }
        Ok(report)
    }

    /// Plain-text table: aggregates first, then one line per sample.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("manifest_hash = {}\n\n", self.manifest_hash));
        s.push_str(&format!("{:<10}", "method"));
        for c in &self.channels {
            s.push_str(&format!("{c:>12}"));
        }
        s.push_str(&format!("{:>12}{:>12}{:>14}\n", "mean", "median", "physics_loss"));
        for m in &self.methods {
            s.push_str(&format!("{:<10}", m.method));
            for v in m.mean_per_channel {
                s.push_str(&format!("{v:>12.5}"));
            }
            s.push_str(&format!("{:>12.5}{:>12.5}{:>14.5e}\n", m.mean_error, m.median_error, m.mean_physics_loss));
        }
        s.push_str("\nper sample\n");
        s.push_str(&format!("{:<10}{:>6}{:>8}", "method", "id", "Q"));
        for c in &self.channels {
            s.push_str(&format!("{c:>12}"));
        }
        s.push_str(&format!("{:>14}\n", "physics_loss"));
        for m in &self.methods {
            for r in &m.samples {
                s.push_str(&format!("{:<10}{:>6}{:>8.3}", m.method, r.id, r.q));
                for v in r.errors {
                    s.push_str(&format!("{v:>12.5}"));
                }
                s.push_str(&format!("{:>14.5e}\n", r.physics_loss));
            }
        }
        s
    }
}
