//! Objective, optimizer and the epoch loop with early stopping and resume.

mod data;
mod optim;
mod trainer;

pub use data::{predict_windows, Dataset, DatasetOptions, Scaler};
pub use optim::{clip_grad_norm, Adam};
pub use trainer::{read_history, write_history, EpochRecord, TrainState, Trainer, STATE_STEM};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;
use crate::numcore::{NumError, Scalar, Tape, Var};
use crate::traces::TraceError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("the {0} split has no windows")]
    EmptySplit(&'static str),
    #[error("non-finite loss {loss} at epoch {epoch}, step {step} (global step {global_step})")]
    NonFinite {
        epoch: usize,
        step: usize,
        global_step: u64,
        loss: f64,
    },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NumError> for TrainError {
    fn from(e: NumError) -> Self {
        TrainError::Model(e.into())
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the absolute-error term.
    pub lambda_l1: f64,
    /// Weight of the summed per-layer diversity losses.
    pub lambda_div: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Global gradient-norm bound; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Optional cap on optimizer steps per epoch; each epoch then visits a
    /// fresh random subset of the training windows.
    pub max_steps_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_l1: 0.5,
            lambda_div: 0.01,
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            grad_clip: 1.0,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_steps_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lambda_l1 >= 0.0) || !(self.lambda_div >= 0.0) {
            return bad("lambda_l1 and lambda_div must be >= 0");
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("lr must be finite and >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip must be >= 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps must be > 0");
        }
        if self.max_steps_per_epoch == Some(0) {
            return bad("max_steps_per_epoch must be >= 1 when set");
        }
        Ok(())
    }
}

/// `mean((pred - y)^2) + lambda_l1 * mean(|pred - y|)` over every element.
pub fn forecast_loss<T: Scalar>(tape: &mut Tape<T>, pred: Var, y: Var, lambda_l1: f64) -> Result<Var> {
    if tape.shape(pred) != tape.shape(y) {
        return Err(NumError::Shape {
            op: "forecast_loss",
            lhs: tape.shape(pred).to_vec(),
            rhs: tape.shape(y).to_vec(),
        }
        .into());
    }
    let diff = tape.sub(pred, y)?;
    let sq = tape.square(diff);
    let mse = tape.mean_all(sq);
    if lambda_l1 == 0.0 {
        return Ok(mse);
    }
    let ab = tape.abs(diff);
    let mae = tape.mean_all(ab);
    let weighted = tape.scale(mae, T::from_f64(lambda_l1));
    Ok(tape.add(mse, weighted)?)
}

/// Forecast loss plus `lambda_div` times the sum of the per-layer diversity losses.
pub fn total_loss<T: Scalar>(tape: &mut Tape<T>, forecast: Var, diversity: &[Var], lambda_div: f64) -> Result<Var> {
    let Some((&first, rest)) = diversity.split_first() else {
        return Ok(forecast);
    };
    let mut sum = first;
    for &d in rest {
        sum = tape.add(sum, d)?;
    }
    let weighted = tape.scale(sum, T::from_f64(lambda_div));
    Ok(tape.add(forecast, weighted)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    fn c(tape: &mut Tape<f64>, v: &[f64]) -> Var {
        tape.constant(Tensor::from_f64(vec![v.len()], v).unwrap())
    }

    #[test]
    fn forecast_loss_examples() {
        let mut tape = Tape::new();
        let p = c(&mut tape, &[1.0, 2.0]);
        let y = c(&mut tape, &[0.0, 3.0]);
        let l = forecast_loss(&mut tape, p, y, 0.5).unwrap();
        assert_eq!(tape.value(l).item(), 1.5);
        let same = forecast_loss(&mut tape, p, p, 0.5).unwrap();
        assert_eq!(tape.value(same).item(), 0.0);
        let y2 = c(&mut tape, &[0.5, 2.0]);
        let mse = forecast_loss(&mut tape, p, y2, 0.0).unwrap();
        assert_eq!(tape.value(mse).item(), 0.125);
    }

    #[test]
    fn total_loss_examples() {
        let mut tape = Tape::new();
        let f = c(&mut tape, &[1.0]);
        let a = c(&mut tape, &[0.5]);
        let b = c(&mut tape, &[0.3]);
        let t = total_loss(&mut tape, f, &[a, b], 0.01).unwrap();
        assert!((tape.value(t).item() - 1.008).abs() < 1e-12);
        let t0 = total_loss(&mut tape, f, &[a, b], 0.0).unwrap();
        assert_eq!(tape.value(t0).item(), 1.0);
        let z = c(&mut tape, &[0.0]);
        let tz = total_loss(&mut tape, f, &[z, z], 0.01).unwrap();
        assert_eq!(tape.value(tz).item(), 1.0);
    }

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        for c in [
            TrainConfig {
                lr: -1.0,
                ..Default::default()
            },
            TrainConfig {
                patience: 0,
                ..Default::default()
            },
            TrainConfig {
                lambda_div: -0.1,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
