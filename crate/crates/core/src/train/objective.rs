use serde::{Deserialize, Serialize};

use crate::elasticity::{DomainSpec, LoadCase, MaterialParams};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fem::{DatasetParams, Sample};
use crate::grid::FieldGrid;
use crate::models::Model;
use crate::residual::{loss_and_grad_raw, total_loss, LossBreakdown, LossWeights, ManufacturedPhysics};

/// The physical setting a batch of predictions is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub material: MaterialParams,
    pub domain: DomainSpec,
    pub u0: f64,
    pub weights: LossWeights,
}

impl Problem {
    pub fn from_dataset(params: &DatasetParams, weights: Option<LossWeights>) -> Self {
        Self {
            material: params.material,
            domain: params.domain,
            u0: params.u0,
            weights: weights.unwrap_or_else(|| LossWeights::nondimensional(&params.domain, &params.material, params.u0)),
        }
    }

    pub fn physics(&self, q: f64) -> ManufacturedPhysics {
        ManufacturedPhysics::new(self.material, self.domain, LoadCase { q, u0: self.u0 })
    }

    /// Physics loss of an HR grid at its own load.
    pub fn loss(&self, grid: &FieldGrid) -> Result<LossBreakdown> {
        let phys = self.physics(grid.q);
        total_loss(grid, &self.weights, &phys.physics())
    }
}

/// What the trainer may see of a sample: its id, load and LR fields.
/// There is deliberately no way to reach the HR fields from here.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainInput {
    pub id: usize,
    pub q: f64,
    pub lr: FieldGrid,
}

impl TrainInput {
    pub fn from_sample(s: &Sample) -> Self {
        Self { id: s.id, q: s.q, lr: s.lr.clone() }
    }

    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Vec<Self> {
        samples.into_iter().map(Self::from_sample).collect()
    }
}

/// Mean loss over a batch and, optionally, its parameter gradient.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub loss: LossBreakdown,
    pub per_sample: Vec<f64>,
    pub grad: Option<Vec<f32>>,
}

/// Evaluates the mean physics loss of `model` over `batch`.
///
/// Samples are processed independently (possibly in parallel) and their
/// gradients summed in batch order, so the result does not depend on the
/// execution mode.
pub fn evaluate_batch(
    model: &Model,
    batch: &[&TrainInput],
    problem: &Problem,
    exec: Execution,
    with_grad: bool,
) -> Result<BatchEval> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = batch.len() as f64;
    let results = exec::map_slice(exec, batch, |input| -> Result<(LossBreakdown, Option<Vec<f32>>)> {
        let (out, trace) = model.predict_traced(&input.lr)?;
        let phys = problem.physics(input.q);
        let mut g = vec![0.0; out.data().len()];
        let loss = loss_and_grad_raw(out.data(), &out.shape, &problem.weights, &phys.physics(), 1.0 / n, &mut g)?;
        let grad = if with_grad {
            let mut pg = vec![0.0f32; model.param_count()];
            model.backward(&trace, &g, &mut pg)?;
            Some(pg)
        } else {
            None
        };
        Ok((loss, grad))
    });
    let mut losses = Vec::with_capacity(batch.len());
    let mut grad = with_grad.then(|| vec![0.0f32; model.param_count()]);
    for r in results {
        let (loss, g) = r?;
        losses.push(loss);
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
    }
    Ok(BatchEval {
        loss: LossBreakdown::mean(&losses),
        per_sample: losses.iter().map(|l| l.total).collect(),
        grad,
    })
}
