//! Flow-matching losses: per-sample squared errors, their mean, the
//! log-mean-exp tilted aggregate, and the linear risk-coefficient ramp.

use crate::autodiff::{Tape, Var};
use crate::data::TrainingBatch;
use crate::error::{Error, Result};
use crate::model::{TapedForward, VelocityFieldParams};

/// Below this coefficient the tilted loss dispatches to the plain mean;
/// the (1/λ) prefactor is singular at zero and the objective family is
/// continuous there.
pub const LAMBDA_MEAN_THRESHOLD: f64 = 1e-12;

/// Linear ramp of the risk coefficient: 0 → lambda_max over `ramp_steps`
/// training steps, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    pub ramp_steps: usize,
    pub lambda_max: f64,
}

impl LambdaSchedule {
    pub fn new(ramp_steps: usize, lambda_max: f64) -> Self {
        assert!(ramp_steps >= 1, "ramp_steps must be >= 1");
        assert!(lambda_max >= 0.0, "lambda_max must be >= 0");
        LambdaSchedule { ramp_steps, lambda_max }
    }

    pub fn lambda_at(&self, step: usize) -> f64 {
        if step < self.ramp_steps {
            step as f64 / self.ramp_steps as f64 * self.lambda_max
        } else {
            self.lambda_max
        }
    }
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule { ramp_steps: 500, lambda_max: 0.0 }
    }
}

/// ℓ_b = ||pred_b − target_b||² for a [B, d] prediction already on the tape.
pub fn per_sample_losses(tape: &mut Tape, pred: Var, targets: &[f64]) -> Result<Var> {
    let shape = tape.shape(pred).to_vec();
    let target_var = tape.leaf(targets.to_vec(), &shape)?;
    let diff = tape.sub(pred, target_var)?;
    tape.square_norm_rows(diff)
}

/// Runs the model forward on the batch and returns (forward handles, ℓ).
pub fn per_sample_losses_for_batch(
    tape: &mut Tape,
    params: &VelocityFieldParams,
    batch: &TrainingBatch,
) -> Result<(TapedForward, Var)> {
    let fwd = params.forward_on_tape(tape, &batch.xt, &batch.t)?;
    let losses = per_sample_losses(tape, fwd.output, &batch.u)?;
    Ok((fwd, losses))
}

/// Arithmetic mean of the per-sample losses.
pub fn mse_loss(tape: &mut Tape, losses: Var) -> Result<Var> {
    if tape.data(losses).is_empty() {
        return Err(Error::EmptyInput { op: "mse_loss" });
    }
    tape.mean(losses)
}

/// (1/λ)·log-mean-exp(λ·ℓ), dispatching to the mean below
/// [`LAMBDA_MEAN_THRESHOLD`]. Always max-subtracted: λ·ℓ can exceed 700 on
/// unlucky early batches and would overflow otherwise.
pub fn tilted_loss(tape: &mut Tape, losses: Var, lambda: f64) -> Result<Var> {
    assert!(lambda >= 0.0, "lambda must be >= 0");
    if lambda < LAMBDA_MEAN_THRESHOLD {
        return mse_loss(tape, losses);
    }
    let scaled = tape.scale(losses, lambda)?;
    let lse = tape.logsumexp_mean(scaled)?;
    tape.scale(lse, 1.0 / lambda)
}

/// Convenience scalar evaluation of the tilted loss on a plain vector.
pub fn tilted_loss_value(losses: &[f64], lambda: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let v = tape.leaf(losses.to_vec(), &[losses.len()])?;
    let out = tilted_loss(&mut tape, v, lambda)?;
    Ok(tape.value(out))
}
