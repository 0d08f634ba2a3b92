use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::model::PrismModel;
use crate::numcore::{Scalar, Tensor};
use crate::traces::{make_windows, DemandSeries, SplitFractions, WindowBatch};

/// Global affine z-scoring fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Scaler {
    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    /// Population mean and standard deviation; a degenerate spread maps to 1.
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::identity();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        Self {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOptions {
    pub split: SplitFractions,
    /// Step between consecutive training windows.
    pub train_stride: usize,
    /// Step between consecutive validation and test windows.
    pub eval_stride: usize,
    /// Fit a [`Scaler`] on the training segment(s) and train on z-scores.
    pub scale: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            split: SplitFractions::default(),
            train_stride: 1,
            eval_stride: 1,
            scale: true,
        }
    }
}

/// Windowed splits in scaled units plus the scaler that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: WindowBatch,
    pub val: WindowBatch,
    pub test: WindowBatch,
    pub scaler: Scaler,
}

impl Dataset {
    /// Windows every series chronologically and pools the windows of each split.
    pub fn from_series(
        series: &[DemandSeries],
        lookback: usize,
        horizon: usize,
        opts: &DatasetOptions,
    ) -> Result<Self> {
        if series.is_empty() {
            return Err(TrainError::Config("no series given".into()));
        }
        if opts.train_stride == 0 || opts.eval_stride == 0 {
            return Err(TrainError::Config("window strides must be >= 1".into()));
        }
        opts.split.validate()?;
        let scaler = if opts.scale {
            let train_values: Vec<f64> = series
                .iter()
                .flat_map(|s| {
                    let (a, _) = opts.split.boundaries(s.len());
                    s.values[..a].iter().copied()
                })
                .collect();
            Scaler::fit(&train_values)
        } else {
            Scaler::identity()
        };
        Self::with_scaler(series, lookback, horizon, opts, scaler)
    }

    /// Like [`Dataset::from_series`] but with a given scaler, e.g. the one a
    /// checkpoint was trained with.
    pub fn with_scaler(
        series: &[DemandSeries],
        lookback: usize,
        horizon: usize,
        opts: &DatasetOptions,
        scaler: Scaler,
    ) -> Result<Self> {
        if series.is_empty() {
            return Err(TrainError::Config("no series given".into()));
        }
        if opts.train_stride == 0 || opts.eval_stride == 0 {
            return Err(TrainError::Config("window strides must be >= 1".into()));
        }
        if !(scaler.std > 0.0 && scaler.std.is_finite() && scaler.mean.is_finite()) {
            return Err(TrainError::Config(format!("invalid scaler {scaler:?}")));
        }
        let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for s in series {
            let scaled = DemandSeries {
                values: s.values.iter().map(|&v| scaler.apply(v)).collect(),
                ..s.clone()
            };
            train.push(make_windows(&scaled, lookback, horizon, opts.train_stride, opts.split)?.train);
            let ev = make_windows(&scaled, lookback, horizon, opts.eval_stride, opts.split)?;
            val.push(ev.val);
            test.push(ev.test);
        }
        Ok(Self {
            train: WindowBatch::concat(&train)?,
            val: WindowBatch::concat(&val)?,
            test: WindowBatch::concat(&test)?,
            scaler,
        })
    }
}

/// Predicts every window of `batch` in chunks, returning `[B, H]` in the
/// batch's own units.
pub fn predict_windows<T: Scalar>(model: &PrismModel<T>, batch: &WindowBatch, chunk: usize) -> Result<Tensor<f64>> {
    let h = model.config().horizon;
    let mut out = Vec::with_capacity(batch.len() * h);
    let idx: Vec<usize> = (0..batch.len()).collect();
    for part in idx.chunks(chunk.max(1)) {
        let sub = batch.select(part);
        let pred = model.predict(&sub.x.cast::<T>(), &sub.stamps)?;
        out.extend(pred.data().iter().map(|v| v.to_f64()));
    }
    Ok(Tensor::new(vec![batch.len(), h], out).map_err(crate::model::ModelError::from)?)
}
