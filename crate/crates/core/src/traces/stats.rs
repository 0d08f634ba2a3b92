use serde::{Deserialize, Serialize};

use super::{DemandSeries, Result, TraceError};
use crate::numcore::{fft, Tensor};

/// Relative floor applied to the minimum before dividing.
pub const TROUGH_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub len: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// `max / max(min, floor)`
    pub peak_trough_ratio: f64,
    /// `p97.5 / max(p2.5, floor)`
    pub central_95_ratio: f64,
    /// Up to three spectral peaks of the demeaned series, strongest first, in hours.
    pub dominant_periods_hours: Vec<f64>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn stats(series: &DemandSeries) -> Result<SeriesStats> {
    let v = &series.values;
    if v.len() < 2 {
        return Err(TraceError::TooShort {
            needed: 2,
            got: v.len(),
        });
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        return Err(TraceError::UndefinedRatio);
    }
    let floor = TROUGH_FLOOR * max;
    let mut sorted = v.clone();
    sorted.sort_by(f64::total_cmp);
    let p_lo = percentile(&sorted, 0.025);
    let p_hi = percentile(&sorted, 0.975);
    let mean = v.iter().sum::<f64>() / v.len() as f64;

    let demeaned: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let spec = fft::rfft(&Tensor::new(vec![v.len()], demeaned).expect("sized")).expect("length >= 2");
    let mag: Vec<f64> = spec.power().iter().map(|p| p.sqrt()).collect();
    let noise_floor = 1e-8 * max * v.len() as f64;
    let mut peaks: Vec<(usize, f64)> = (1..mag.len())
        .filter(|&k| {
            let left = mag[k - 1];
            let right = mag.get(k + 1).copied().unwrap_or(0.0);
            mag[k] > noise_floor && mag[k] >= right && (k == 1 || mag[k] > left)
        })
        .map(|k| (k, mag[k]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let hours = series.bucket_hours() * v.len() as f64;
    let dominant_periods_hours = peaks.iter().take(3).map(|&(k, _)| hours / k as f64).collect();

    Ok(SeriesStats {
        len: v.len(),
        mean,
        min,
        max,
        peak_trough_ratio: max / min.max(floor),
        central_95_ratio: p_hi / p_lo.max(floor),
        dominant_periods_hours,
    })
}

#[cfg(test)]
mod tests {
    use super::super::HOUR;
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_series() {
        let s = stats(&DemandSeries::new(HOUR, 0, vec![7.3; 200]).unwrap()).unwrap();
        assert_eq!(s.peak_trough_ratio, 1.0);
        assert_eq!(s.central_95_ratio, 1.0);
        assert!(s.dominant_periods_hours.is_empty());
    }

    #[test]
    fn daily_sinusoid() {
        let values = (0..24 * 12)
            .map(|t| 10.0 + 3.0 * (2.0 * PI * t as f64 / 24.0).sin())
            .collect();
        let s = stats(&DemandSeries::new(HOUR, 0, values).unwrap()).unwrap();
        assert!((s.dominant_periods_hours[0] - 24.0).abs() < 1e-9);
        assert!((s.peak_trough_ratio - 13.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn all_zero_is_undefined() {
        let err = stats(&DemandSeries::new(HOUR, 0, vec![0.0; 10]).unwrap()).unwrap_err();
        assert!(matches!(err, TraceError::UndefinedRatio));
    }
}
