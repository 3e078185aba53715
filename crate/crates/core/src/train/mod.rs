//! Label-free training: Adam with a plateau schedule, then full-batch
//! L-BFGS fine-tuning, all against the physics loss of the model output.

pub mod checkpoint;
pub mod history;
pub mod lbfgs;
pub mod objective;
pub mod optim;
pub mod split;

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{Model, Normalizer};
use crate::residual::LossWeights;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingState, CHECKPOINT_VERSION};
pub use history::{EpochRecord, TrainHistory};
pub use lbfgs::{LbfgsConfig, LbfgsIter, LbfgsReport};
pub use objective::{evaluate_batch, BatchEval, Problem, TrainInput};
pub use optim::{Adam, PlateauConfig, PlateauScheduler};
pub use split::{split_indices, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub split_ratio: f64,
    pub scheduler: PlateauConfig,
    pub lbfgs: LbfgsConfig,
    /// Loss weights; derived from the dataset's material and scales when
    /// absent.
    pub weights: Option<LossWeights>,
    /// Evaluate the physics loss on held-out inputs every this many epochs
    /// (0 disables it).
    pub eval_every: usize,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 1e-4,
            batch_size: 8,
            seed: 0,
            split_ratio: 0.8,
            scheduler: PlateauConfig::default(),
            lbfgs: LbfgsConfig::default(),
            weights: None,
            eval_every: 10,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::invalid(format!("split_ratio must be in (0, 1), got {}", self.split_ratio)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        self.scheduler.validate()?;
        self.lbfgs.validate()
    }
}

/// Optional side outputs of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainSinks {
    /// Line-delimited JSON epoch log, appended to.
    pub log: Option<PathBuf>,
    /// Where the best-loss state is written whenever it improves.
    pub best_checkpoint: Option<PathBuf>,
    /// Print a progress line every this many epochs (0 = silent).
    pub progress_every: usize,
}

pub struct TrainOutcome {
    pub model: Model,
    pub history: TrainHistory,
    /// Parameters at the end of the best epoch.
    pub best_params: Vec<f32>,
    pub adam_steps: u64,
}

/// Fits the normalizer on LR training inputs only.
pub fn fit_normalizer(inputs: &[TrainInput]) -> Result<Normalizer> {
    let grids: Vec<_> = inputs.iter().map(|i| i.lr.clone()).collect();
    Normalizer::fit(&grids)
}

fn dump_batch(batch: &[&TrainInput], eval: Option<&BatchEval>, params_finite: bool) -> String {
    let ids: Vec<_> = batch.iter().map(|b| b.id).collect();
    let qs: Vec<_> = batch.iter().map(|b| b.q).collect();
    let inputs_finite = batch.iter().all(|b| b.lr.is_finite());
    format!(
        "sample ids {ids:?}, Q {qs:?}, per-sample losses {:?}, LR inputs finite: {inputs_finite}, parameters finite: {params_finite}",
        eval.map(|e| e.per_sample.clone()).unwrap_or_default()
    )
}

/// Runs Adam over shuffled mini-batches of `train`.
///
/// Only the LR fields of the inputs are read. `monitor`, if non-empty, is
/// scored with the physics loss every `eval_every` epochs.
pub fn train(
    mut model: Model,
    train: &[TrainInput],
    monitor: &[TrainInput],
    problem: &Problem,
    cfg: &TrainConfig,
    sinks: &TrainSinks,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if model.normalizer().is_none() {
        return Err(Error::UnfittedNormalizer);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.param_count());
    let mut sched = PlateauScheduler::new(cfg.scheduler, cfg.lr);
    let mut history = TrainHistory::default();
    let mut best_params = model.params().to_vec();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let start = Instant::now();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = sched.lr();
        let mut sum = crate::residual::LossBreakdown::default();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&TrainInput> = chunk.iter().map(|&i| &train[i]).collect();
            let eval = evaluate_batch(&model, &batch, problem, cfg.execution, true)?;
            let grad = eval.grad.as_deref().unwrap_or(&[]);
            if !eval.loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                let finite = model.params().iter().all(|p| p.is_finite());
                return Err(Error::NonFiniteLoss { epoch, batch: b, detail: dump_batch(&batch, Some(&eval), finite) });
            }
            adam.step(model.params_mut(), grad, lr);
            let w = batch.len() as f64 / train.len() as f64;
            sum.pde += w * eval.loss.pde;
            sum.constitutive += w * eval.loss.constitutive;
            sum.dirichlet += w * eval.loss.dirichlet;
            sum.neumann += w * eval.loss.neumann;
            sum.total += w * eval.loss.total;
        }
        sched.step(sum.total);
        let test_loss = if !monitor.is_empty() && cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
            let refs: Vec<&TrainInput> = monitor.iter().collect();
            Some(evaluate_batch(&model, &refs, problem, cfg.execution, false)?.loss.total)
        } else {
            None
        };
        let record = EpochRecord { epoch, train: sum, test_loss, lr, elapsed_s: start.elapsed().as_secs_f64() };
        if let Some(log) = &sinks.log {
            TrainHistory::append_log(log, &record)?;
        }
        if sinks.progress_every > 0 && (epoch % sinks.progress_every == 0 || epoch + 1 == cfg.epochs) {
            eprintln!(
                "epoch {epoch:>5}  loss {:.5e}  lr {lr:.2e}{}",
                sum.total,
                test_loss.map(|t| format!("  held-out {t:.5e}")).unwrap_or_default()
            );
        }
        history.epochs.push(record);
        if history.best_loss.is_none_or(|b| sum.total < b) {
            history.best_loss = Some(sum.total);
            history.best_epoch = Some(epoch);
            best_params.copy_from_slice(model.params());
            if let Some(path) = &sinks.best_checkpoint {
                let state = TrainingState { epochs_done: epoch + 1, lr: sched.lr(), adam_steps: adam.steps(), label: "best".into() };
                let mut best = model.clone();
                best.params_mut().copy_from_slice(&best_params);
                save_checkpoint(path, &best, &history, &state)?;
            }
        }
    }
    Ok(TrainOutcome { model, history, best_params, adam_steps: adam.steps() })
}

/// Full-batch L-BFGS on the same loss. The model keeps the best parameters
/// found, so its loss never rises above the entry loss.
pub fn lbfgs_finetune(model: &mut Model, train: &[TrainInput], problem: &Problem, cfg: &TrainConfig) -> Result<LbfgsReport> {
    cfg.validate()?;
    let batch: Vec<&TrainInput> = train.iter().collect();
    let mut x: Vec<f64> = model.params().iter().map(|&p| p as f64).collect();
    let mut probe = model.clone();
    let report = lbfgs::minimize(&mut x, &cfg.lbfgs, |x| {
        probe.params_mut().iter_mut().zip(x).for_each(|(p, v)| *p = *v as f32);
        let eval = evaluate_batch(&probe, &batch, problem, cfg.execution, true)?;
        let grad = eval.grad.unwrap_or_default().iter().map(|&g| g as f64).collect();
        Ok((eval.loss.total, grad))
    })?;
    model.params_mut().iter_mut().zip(&x).for_each(|(p, v)| *p = *v as f32);
    Ok(report)
}
