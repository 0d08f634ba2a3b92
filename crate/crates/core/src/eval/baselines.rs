use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{metrics, EvalError, MetricSet, Result};
use crate::traces::{make_windows, DemandSeries, SplitFractions, WindowBatch, HOUR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub name: String,
    pub metrics: MetricSet,
}

/// Number of buckets spanning `hours`; the bucket width must divide it.
pub fn seasonal_lag_buckets(hours: u32, bucket_width: i64) -> Result<usize> {
    let span = hours as i64 * HOUR;
    if bucket_width <= 0 || span % bucket_width != 0 {
        return Err(EvalError::Sizing(format!(
            "a {hours}h season is not a whole number of {bucket_width}s buckets"
        )));
    }
    Ok((span / bucket_width) as usize)
}

/// Affine map from a flattened history window to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBaseline {
    pub lookback: usize,
    pub horizon: usize,
    /// `(L + 1) x H`, row-major; the last row is the intercept.
    pub weights: Vec<f64>,
}

impl LinearBaseline {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let h = self.horizon;
        let mut out = self.weights[self.lookback * h..].to_vec();
        for (i, &xi) in x.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(&self.weights[i * h..(i + 1) * h]) {
                *o += xi * w;
            }
        }
        out
    }
}

/// Minimum-norm least squares via SVD, so collinear windows are handled.
pub fn fit_linear(train: &WindowBatch) -> Result<LinearBaseline> {
    let (n, l, h) = (train.len(), train.lookback, train.horizon);
    if n == 0 {
        return Err(EvalError::Sizing(
            "linear baseline needs at least one training window".into(),
        ));
    }
    let a = DMatrix::from_fn(n, l + 1, |r, c| if c < l { train.x_row(r)[c] } else { 1.0 });
    let b = DMatrix::from_fn(n, h, |r, c| train.y_row(r)[c]);
    let svd = a.svd(true, true);
    let tol = svd.singular_values.max() * 1e-12 * (n.max(l + 1) as f64);
    let w = svd
        .solve(&b, tol)
        .map_err(|e| EvalError::Sizing(format!("least squares failed: {e}")))?;
    let mut weights = Vec::with_capacity((l + 1) * h);
    for r in 0..=l {
        weights.extend((0..h).map(|c| w[(r, c)]));
    }
    Ok(LinearBaseline {
        lookback: l,
        horizon: h,
        weights,
    })
}

/// Repeats the last observed value over the horizon, `[B * H]`.
pub fn naive_last(batch: &WindowBatch) -> Vec<f64> {
    let (l, h) = (batch.lookback, batch.horizon);
    (0..batch.len())
        .flat_map(|i| std::iter::repeat_n(batch.x_row(i)[l - 1], h))
        .collect()
}

/// Copies the value one season (`lag` buckets) earlier, stepping back whole
/// seasons until the source precedes the forecast start. `batch` must have
/// been windowed from `series`.
pub fn seasonal_naive(series: &DemandSeries, batch: &WindowBatch, lag: usize) -> Result<Vec<f64>> {
    if lag == 0 {
        return Err(EvalError::Sizing("seasonal lag must be >= 1".into()));
    }
    let (l, h) = (batch.lookback, batch.horizon);
    let mut out = Vec::with_capacity(batch.len() * h);
    for i in 0..batch.len() {
        let t0 = (batch.origins[i] - series.start) / series.bucket_width + l as i64;
        if t0 < lag as i64 {
            return Err(EvalError::Sizing(format!(
                "needs {lag} buckets before the forecast start, only {t0} available"
            )));
        }
        let t0 = t0 as usize;
        out.extend((0..h).map(|k| series.values[t0 + k - (k / lag + 1) * lag]));
    }
    Ok(out)
}

/// Scores naive-last, seasonal-naive at 24h and 168h, and the linear map on
/// the test windows of `series`. Seasonal lags may reach back beyond the
/// lookback window into earlier parts of the series.
pub fn baselines(
    series: &DemandSeries,
    lookback: usize,
    horizon: usize,
    split: SplitFractions,
    stride: usize,
) -> Result<Vec<BaselineResult>> {
    let w = make_windows(series, lookback, horizon, stride, split)?;
    let test = &w.test;
    if test.is_empty() {
        return Err(EvalError::Sizing(format!(
            "series of {} buckets leaves no test windows for L={lookback}, H={horizon}",
            series.len()
        )));
    }
    let target = test.y.data();
    let mut out = vec![BaselineResult {
        name: "naive-last".into(),
        metrics: metrics(&naive_last(test), target)?,
    }];
    for hours in [24, 168] {
        let lag = seasonal_lag_buckets(hours, series.bucket_width)?;
        let pred = seasonal_naive(series, test, lag).map_err(|e| match e {
            EvalError::Sizing(m) => EvalError::Sizing(format!("seasonal-naive({hours}h): {m}")),
            other => other,
        })?;
        out.push(BaselineResult {
            name: format!("seasonal-naive-{hours}h"),
            metrics: metrics(&pred, target)?,
        });
    }

    let lin = fit_linear(&w.train)?;
    let pred: Vec<f64> = (0..test.len()).flat_map(|i| lin.predict(test.x_row(i))).collect();
    out.push(BaselineResult {
        name: "linear".into(),
        metrics: metrics(&pred, target)?,
    });
    Ok(out)
}
