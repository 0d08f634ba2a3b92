//! Metrics, reference baselines, the ablation harness and interpretability
//! reports.

mod ablation;
mod baselines;
mod report;

pub use ablation::{run_ablation, AblationReport, AblationRow, MetricDeltas, SeedOutcome, Spread};
pub use baselines::{
    baselines, fit_linear, naive_last, seasonal_lag_buckets, seasonal_naive, BaselineResult, LinearBaseline,
};
pub use report::{
    dominant_primitive, interpretability_report, lacks_dominant, separation_score, write_alpha_csv, write_overlay_csv,
    ForecastReport, LayerSummary, OverlayRow, WindowRecipe, NO_DOMINANT_MARGIN,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, PrismModel};
use crate::numcore::Scalar;
use crate::traces::{TraceError, WindowBatch};
use crate::training::{predict_windows, Dataset, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot score an empty set")]
    Empty,
    #[error("prediction has {pred} values but the target has {target}")]
    Shape { pred: usize, target: usize },
    #[error("target is constant, so R^2 is undefined")]
    ConstantTarget,
    #[error("{0}")]
    Sizing(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

impl MetricSet {
    /// Element-wise mean of several metric sets; RMSE is re-derived from the mean MSE.
    pub fn mean(sets: &[MetricSet]) -> Option<MetricSet> {
        if sets.is_empty() {
            return None;
        }
        let n = sets.len() as f64;
        let mse = sets.iter().map(|m| m.mse).sum::<f64>() / n;
        Some(MetricSet {
            mse,
            mae: sets.iter().map(|m| m.mae).sum::<f64>() / n,
            rmse: mse.sqrt(),
            r2: sets.iter().map(|m| m.r2).sum::<f64>() / n,
        })
    }
}

/// Sum in ascending order, so the result does not depend on input order.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

/// MSE, MAE, RMSE and global R^2 over all points.
pub fn metrics(pred: &[f64], target: &[f64]) -> Result<MetricSet> {
    if pred.len() != target.len() {
        return Err(EvalError::Shape {
            pred: pred.len(),
            target: target.len(),
        });
    }
    if target.is_empty() {
        return Err(EvalError::Empty);
    }
    if target.iter().all(|&y| y == target[0]) {
        return Err(EvalError::ConstantTarget);
    }
    let n = target.len() as f64;
    let mean = sorted_sum(target.to_vec()) / n;
    let sse = sorted_sum(pred.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).collect());
    let sae = sorted_sum(pred.iter().zip(target).map(|(p, y)| (p - y).abs()).collect());
    let sst = sorted_sum(target.iter().map(|y| (y - mean) * (y - mean)).collect());
    let mse = sse / n;
    Ok(MetricSet {
        mse,
        mae: sae / n,
        rmse: mse.sqrt(),
        r2: 1.0 - sse / sst,
    })
}

/// Test-set scores in both the training scale and raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Denormalized to the original demand units.
    pub raw: MetricSet,
    /// In the globally z-scored units the model was trained on.
    pub scaled: MetricSet,
}

/// Predicts `batch` (in the dataset's scaled units) and scores it.
/// Returns the scores and the scaled predictions.
pub fn evaluate_model<T: Scalar>(
    model: &PrismModel<T>,
    data: &Dataset,
    batch: &WindowBatch,
) -> Result<(Evaluation, crate::numcore::Tensor<f64>)> {
    let pred = predict_windows(model, batch, 256)?;
    let scaled = metrics(pred.data(), batch.y.data())?;
    let s = data.scaler;
    let raw_pred: Vec<f64> = pred.data().iter().map(|&v| s.invert(v)).collect();
    let raw_y: Vec<f64> = batch.y.data().iter().map(|&v| s.invert(v)).collect();
    let raw = metrics(&raw_pred, &raw_y)?;
    Ok((Evaluation { raw, scaled }, pred))
}
