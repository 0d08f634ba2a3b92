use serde::{Deserialize, Serialize};

use super::synth::calendar;
use super::{DemandSeries, Result, TraceError};
use crate::numcore::Tensor;

/// Calendar features of one bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarStamp {
    /// 0-23
    pub hour: u8,
    /// 0 = Monday .. 6 = Sunday
    pub dow: u8,
}

impl CalendarStamp {
    pub fn at(ts: i64) -> Self {
        let (hour, dow) = calendar(ts);
        Self {
            hour: hour.floor() as u8,
            dow: dow as u8,
        }
    }
}

/// Supervised examples: `x` is `[B, L]` history, `y` is `[B, H]` future.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub lookback: usize,
    pub horizon: usize,
    pub bucket_width: i64,
    pub x: Tensor<f64>,
    pub y: Tensor<f64>,
    /// `B * (L + H)` stamps, window-major.
    pub stamps: Vec<CalendarStamp>,
    /// Per-window `(mean, std)` of the history.
    pub norm_stats: Vec<(f64, f64)>,
    /// Timestamp of each window's first history bucket.
    pub origins: Vec<i64>,
    pub keys: Vec<Option<String>>,
}

impl WindowBatch {
    pub fn empty(lookback: usize, horizon: usize, bucket_width: i64) -> Self {
        Self {
            lookback,
            horizon,
            bucket_width,
            x: Tensor::zeros(&[0, lookback]),
            y: Tensor::zeros(&[0, horizon]),
            stamps: Vec::new(),
            norm_stats: Vec::new(),
            origins: Vec::new(),
            keys: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x.data()[i * self.lookback..(i + 1) * self.lookback]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y.data()[i * self.horizon..(i + 1) * self.horizon]
    }

    pub fn window_stamps(&self, i: usize) -> &[CalendarStamp] {
        let w = self.lookback + self.horizon;
        &self.stamps[i * w..(i + 1) * w]
    }

    /// Timestamp of position `p` (0..L+H) in window `i`.
    pub fn timestamp(&self, i: usize, p: usize) -> i64 {
        self.origins[i] + p as i64 * self.bucket_width
    }

    /// Sub-batch in the given order.
    pub fn select(&self, idx: &[usize]) -> WindowBatch {
        let mut x = Vec::with_capacity(idx.len() * self.lookback);
        let mut y = Vec::with_capacity(idx.len() * self.horizon);
        let mut stamps = Vec::with_capacity(idx.len() * (self.lookback + self.horizon));
        for &i in idx {
            x.extend_from_slice(self.x_row(i));
            y.extend_from_slice(self.y_row(i));
            stamps.extend_from_slice(self.window_stamps(i));
        }
        WindowBatch {
            lookback: self.lookback,
            horizon: self.horizon,
            bucket_width: self.bucket_width,
            x: Tensor::new(vec![idx.len(), self.lookback], x).expect("sized"),
            y: Tensor::new(vec![idx.len(), self.horizon], y).expect("sized"),
            stamps,
            norm_stats: idx.iter().map(|&i| self.norm_stats[i]).collect(),
            origins: idx.iter().map(|&i| self.origins[i]).collect(),
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
        }
    }

    /// Stacks batches with identical `L`, `H` and bucket width.
    pub fn concat(parts: &[WindowBatch]) -> Result<WindowBatch> {
        let first = parts
            .first()
            .ok_or_else(|| TraceError::Config("cannot concatenate zero batches".into()))?;
        let mut out = WindowBatch::empty(first.lookback, first.horizon, first.bucket_width);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for p in parts {
            if (p.lookback, p.horizon, p.bucket_width) != (first.lookback, first.horizon, first.bucket_width) {
                return Err(TraceError::Config("window batches have different layouts".into()));
            }
            x.extend_from_slice(p.x.data());
            y.extend_from_slice(p.y.data());
            out.stamps.extend_from_slice(&p.stamps);
            out.norm_stats.extend_from_slice(&p.norm_stats);
            out.origins.extend_from_slice(&p.origins);
            out.keys.extend(p.keys.iter().cloned());
        }
        let b = out.origins.len();
        out.x = Tensor::new(vec![b, first.lookback], x).expect("sized");
        out.y = Tensor::new(vec![b, first.horizon], y).expect("sized");
        Ok(out)
    }

    /// Applies `f` to every history and target value.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> WindowBatch {
        let mut out = self.clone();
        out.x = self.x.map(&f);
        out.y = self.y.map(&f);
        out.norm_stats = (0..self.len()).map(|i| row_stats(out.x_row(i))).collect();
        out
    }
}

fn row_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Self {
        Self { train, val, test }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(TraceError::Config(format!(
                "split fractions {parts:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }

    /// `[train_end, val_end]` boundaries for a series of length `n`.
    pub fn boundaries(&self, n: usize) -> (usize, usize) {
        let a = (n as f64 * self.train).round() as usize;
        let b = (n as f64 * (self.train + self.val)).round() as usize;
        (a.min(n), b.clamp(a.min(n), n))
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self::new(0.7, 0.15, 0.15)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSplits {
    pub train: WindowBatch,
    pub val: WindowBatch,
    pub test: WindowBatch,
}

fn window_segment(
    series: &DemandSeries,
    from: usize,
    to: usize,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> WindowBatch {
    let mut out = WindowBatch::empty(lookback, horizon, series.bucket_width);
    let span = lookback + horizon;
    if to - from < span {
        return out;
    }
    let count = (to - from - span) / stride + 1;
    let mut x = Vec::with_capacity(count * lookback);
    let mut y = Vec::with_capacity(count * horizon);
    for w in 0..count {
        let s = from + w * stride;
        let hist = &series.values[s..s + lookback];
        x.extend_from_slice(hist);
        y.extend_from_slice(&series.values[s + lookback..s + span]);
        out.stamps
            .extend((s..s + span).map(|i| CalendarStamp::at(series.timestamp(i))));
        out.norm_stats.push(row_stats(hist));
        out.origins.push(series.timestamp(s));
        out.keys.push(series.series_key.clone());
    }
    out.x = Tensor::new(vec![count, lookback], x).expect("sized");
    out.y = Tensor::new(vec![count, horizon], y).expect("sized");
    out
}

/// Chronological train/val/test windows. Each split is windowed on its own
/// segment, so no window straddles a boundary.
pub fn make_windows(
    series: &DemandSeries,
    lookback: usize,
    horizon: usize,
    stride: usize,
    split: SplitFractions,
) -> Result<WindowSplits> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(TraceError::Config("lookback, horizon and stride must be >= 1".into()));
    }
    split.validate()?;
    let needed = lookback + horizon;
    if series.len() < needed {
        return Err(TraceError::TooShort {
            needed,
            got: series.len(),
        });
    }
    let (a, b) = split.boundaries(series.len());
    Ok(WindowSplits {
        train: window_segment(series, 0, a, lookback, horizon, stride),
        val: window_segment(series, a, b, lookback, horizon, stride),
        test: window_segment(series, b, series.len(), lookback, horizon, stride),
    })
}
