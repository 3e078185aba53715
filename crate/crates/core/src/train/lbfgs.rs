//! Limited-memory BFGS with a monotone backtracking line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub enabled: bool,
    pub max_iters: usize,
    /// Relative loss change regarded as converged.
    pub tolerance: f64,
    /// Consecutive iterations that must stay below `tolerance`.
    pub window: usize,
    /// Number of curvature pairs kept.
    pub memory: usize,
    /// Step tried first along each search direction.
    pub initial_step: f64,
    /// Halvings attempted before the line search gives up.
    pub max_backtracks: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            max_iters: 500,
            tolerance: 1e-8,
            window: 5,
            memory: 10,
            initial_step: 1.0,
            max_backtracks: 25,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance >= 0.0) || self.window == 0 || self.memory == 0 || !(self.initial_step > 0.0) {
            return Err(Error::invalid("L-BFGS tolerance must be >= 0 and window, memory, initial step positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsIter {
    pub iter: usize,
    pub loss: f64,
    pub step: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsReport {
    pub entry_loss: f64,
    pub exit_loss: f64,
    pub iterations: Vec<LbfgsIter>,
    pub converged: bool,
    /// Set when the line search could not decrease the loss.
    pub warning: Option<String>,
}

/// Minimizes `f` from `x`, which is overwritten with the best point found.
///
/// `f` returns the value and gradient. A step is only accepted if it lowers
/// the value (Armijo condition), so the exit value never exceeds the entry
/// value. Non-finite trial values count as failed trials.
pub fn minimize<F>(x: &mut [f64], cfg: &LbfgsConfig, mut f: F) -> Result<LbfgsReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let (mut fx, mut gx) = f(x)?;
    if !fx.is_finite() {
        return Err(Error::invalid(format!("L-BFGS entry loss is not finite: {fx}")));
    }
    let entry_loss = fx;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut iterations = Vec::new();
    let mut quiet = 0usize;
    let mut converged = false;
    let mut warning = None;

    for iter in 1..=cfg.max_iters {
        let gnorm = norm(&gx);
        if gnorm == 0.0 {
            converged = true;
            break;
        }
        let mut d = direction(&gx, &pairs);
        let mut slope = dot(&d, &gx);
        if !(slope < 0.0) {
            // curvature history gone stale: restart from steepest descent
            pairs.clear();
            d = gx.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if pairs.is_empty() { cfg.initial_step.min(1.0 / gnorm) } else { cfg.initial_step };
        let mut evaluations = 0;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial)?;
            evaluations += 1;
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope && ft < fx {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft, gt)) = accepted else {
            warning = Some(format!("line search failed at iteration {iter}; keeping best point"));
            break;
        };
        let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - ft).abs() / fx.abs().max(f64::MIN_POSITIVE);
        x.copy_from_slice(&trial);
        fx = ft;
        gx = gt;
        iterations.push(LbfgsIter { iter, loss: fx, step, evaluations });
        quiet = if rel < cfg.tolerance { quiet + 1 } else { 0 };
        if quiet >= cfg.window {
            converged = true;
            break;
        }
    }
    Ok(LbfgsReport { entry_loss, exit_loss: fx, iterations, converged, warning })
}

/// Two-loop recursion: `-H·g` for the implicit inverse Hessian.
fn direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        // minimum at (1, -2)
        let (a, b) = (x[0] - 1.0, x[1] + 2.0);
        Ok((3.0 * a * a + a * b + 2.0 * b * b + 0.5, vec![6.0 * a + b, a + 4.0 * b]))
    }

    #[test]
    fn quadratic_converges_to_minimum() {
        let mut x = vec![10.0, 7.0];
        let cfg = LbfgsConfig { tolerance: 0.0, max_iters: 100, ..Default::default() };
        let r = minimize(&mut x, &cfg, quadratic).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-8 && (x[1] + 2.0).abs() < 1e-8, "{x:?}");
        assert!(r.exit_loss <= r.entry_loss);
    }

    #[test]
    fn zero_tolerance_runs_every_iteration() {
        let rosen = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (a, b) = (1.0 - x[0], x[1] - x[0] * x[0]);
            Ok((a * a + 100.0 * b * b, vec![-2.0 * a - 400.0 * x[0] * b, 200.0 * b]))
        };
        let mut x = vec![-1.2, 1.0];
        let cfg = LbfgsConfig { tolerance: 0.0, max_iters: 7, ..Default::default() };
        let r = minimize(&mut x, &cfg, rosen).unwrap();
        assert_eq!(r.iterations.len(), 7);
        assert!(!r.converged && r.warning.is_none());
    }

    #[test]
    fn exit_never_above_entry() {
        // |x| is not smooth at the minimum, the line search must fail
        // gracefully and keep the best point
        let mut x = vec![0.3];
        let cfg = LbfgsConfig { tolerance: 0.0, max_iters: 200, ..Default::default() };
        let r = minimize(&mut x, &cfg, |x| Ok((x[0].abs(), vec![x[0].signum()]))).unwrap();
        assert!(r.exit_loss <= r.entry_loss);
        assert!(r.iterations.windows(2).all(|w| w[1].loss < w[0].loss));
        assert!(r.warning.is_some() || r.converged || r.iterations.len() == 200);
    }

    #[test]
    fn non_finite_entry_is_rejected() {
        let mut x = vec![0.0];
        assert!(minimize(&mut x, &LbfgsConfig::default(), |_| Ok((f64::NAN, vec![0.0]))).is_err());
    }
}
