use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::model::{BandEnergy, ForwardOptions, PrismModel};
use crate::numcore::{Scalar, Tape, Tensor};
use crate::traces::io::format_time;
use crate::traces::WindowBatch;
use crate::training::Scaler;

/// A window has no dominant primitive when its largest weight is below
/// `1/K` plus this margin.
pub const NO_DOMINANT_MARGIN: f64 = 0.05;

const CHUNK: usize = 256;

/// Mixing weights of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecipe {
    /// Start of the lookback window, unix seconds.
    pub origin: i64,
    pub series_key: Option<String>,
    /// `alpha[layer][k]`
    pub alpha: Vec<Vec<f64>>,
    /// Argmax of the last layer's weights; `None` without primitives.
    pub dominant: Option<usize>,
    /// The last layer's largest weight is below `1/K + NO_DOMINANT_MARGIN`.
    pub no_dominant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub mean_alpha: Vec<f64>,
    pub mean_gate: Option<f64>,
    pub band_energy: Option<BandEnergy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub n_primitives: usize,
    pub horizon: usize,
    pub windows: Vec<WindowRecipe>,
    /// `signatures[k]`: mean instance-normalized forecast when every layer is
    /// forced onto primitive `k` alone. Empty without primitives.
    pub signatures: Vec<Vec<f64>>,
    pub layers: Vec<LayerSummary>,
    /// Windows per dominant primitive.
    pub dominant_counts: Vec<usize>,
    /// Windows flagged as having no dominant primitive.
    pub no_dominant: usize,
}

/// Largest-weight primitive; ties go to the lowest index.
pub fn dominant_primitive(alpha: &[f64]) -> Option<usize> {
    let mut best = None;
    for (i, &a) in alpha.iter().enumerate() {
        if best.is_none_or(|b: usize| a > alpha[b]) {
            best = Some(i);
        }
    }
    best
}

/// True when no weight reaches `1/K + NO_DOMINANT_MARGIN`.
pub fn lacks_dominant(alpha: &[f64]) -> bool {
    let thr = 1.0 / alpha.len() as f64 + NO_DOMINANT_MARGIN;
    alpha.iter().all(|&a| a < thr)
}

fn to_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.to_f64()).collect()
}

/// Per-window mixing weights, decoded primitive signatures, gate statistics
/// and band energies of `model` over `batch`.
pub fn interpretability_report<T: Scalar>(model: &PrismModel<T>, batch: &WindowBatch) -> Result<ForecastReport> {
    let cfg = model.config();
    let (k, h, n_layers) = (cfg.n_primitives, cfg.horizon, cfg.n_layers);
    let mut windows = Vec::with_capacity(batch.len());
    let mut alpha_sum = vec![vec![0.0; k]; n_layers];
    let mut gate_sum = vec![0.0; n_layers];
    let mut energy = vec![BandEnergy { low: 0.0, high: 0.0 }; n_layers];
    let mut signatures = if cfg.use_primitive {
        vec![vec![0.0; h]; k]
    } else {
        Vec::new()
    };

    let idx: Vec<usize> = (0..batch.len()).collect();
    for part in idx.chunks(CHUNK) {
        let sub = batch.select(part);
        let x = sub.x.cast::<T>();
        let (_, diag) = model.forward(&x, &sub.stamps)?;
        for (l, d) in diag.layers.iter().enumerate() {
            if let Some(a) = &d.alpha {
                for (i, v) in to_f64(a).into_iter().enumerate() {
                    alpha_sum[l][i % k] += v;
                }
            }
            if let Some(g) = d.mean_gate {
                gate_sum[l] += g * part.len() as f64;
            }
            if let Some(e) = d.band_energy {
                energy[l].low += e.low;
                energy[l].high += e.high;
            }
        }
        let alphas: Vec<Option<Vec<f64>>> = diag.layers.iter().map(|d| d.alpha.as_ref().map(to_f64)).collect();
        for (j, &i) in part.iter().enumerate() {
            let alpha: Vec<Vec<f64>> = alphas
                .iter()
                .flatten()
                .map(|a| a[j * k..(j + 1) * k].to_vec())
                .collect();
            windows.push(WindowRecipe {
                origin: batch.origins[i],
                series_key: batch.keys[i].clone(),
                dominant: alpha.last().and_then(|a| dominant_primitive(a)),
                no_dominant: alpha.last().is_some_and(|a| lacks_dominant(a)),
                alpha,
            });
        }
        for (p, sig) in signatures.iter_mut().enumerate() {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, false);
            let mut opts = ForwardOptions {
                dropout: None,
                alpha_override: Some(p),
            };
            let tr = model.forward_on(&mut tape, &bound, &x, &sub.stamps, &mut opts)?;
            for (i, v) in to_f64(tape.value(tr.normalized)).into_iter().enumerate() {
                sig[i % h] += v;
            }
        }
    }

    let n = batch.len().max(1) as f64;
    for sig in &mut signatures {
        sig.iter_mut().for_each(|v| *v /= n);
    }
    let layers = (0..n_layers)
        .map(|l| LayerSummary {
            mean_alpha: if cfg.use_primitive {
                alpha_sum[l].iter().map(|v| v / n).collect()
            } else {
                Vec::new()
            },
            mean_gate: cfg.use_spectral.then(|| gate_sum[l] / n),
            band_energy: cfg.use_spectral.then_some(energy[l]),
        })
        .collect();
    let mut dominant_counts = vec![0; if cfg.use_primitive { k } else { 0 }];
    let mut no_dominant = 0;
    for w in &windows {
        if let Some(d) = w.dominant {
            dominant_counts[d] += 1;
        }
        no_dominant += w.no_dominant as usize;
    }
    Ok(ForecastReport {
        n_primitives: k,
        horizon: h,
        windows,
        signatures,
        layers,
        dominant_counts,
        no_dominant,
    })
}

/// How well `labels` separate the windows into `groups`: each label is
/// assigned to the group it occurs in most, and the score is the fraction of
/// windows that land in their label's group. Unlabelled windows count as
/// misses. Returns 0 for empty input.
pub fn separation_score(labels: &[Option<usize>], groups: &[usize]) -> f64 {
    assert_eq!(labels.len(), groups.len(), "one group per label");
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::BTreeMap::<usize, std::collections::BTreeMap<usize, usize>>::new();
    for (l, &g) in labels.iter().zip(groups) {
        if let Some(l) = l {
            *counts.entry(*l).or_default().entry(g).or_default() += 1;
        }
    }
    let hits: usize = counts.values().map(|by| by.values().copied().max().unwrap_or(0)).sum();
    hits as f64 / labels.len() as f64
}

/// One point of a prediction overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub time: i64,
    pub actual: f64,
    pub predicted: f64,
    pub series_key: Option<String>,
}

impl OverlayRow {
    /// Forecasts of non-overlapping windows, stitched into one line per series.
    /// `pred` is `[B, H]` in the batch's units; both sides are mapped back
    /// through `scaler`.
    pub fn from_windows(batch: &WindowBatch, pred: &Tensor<f64>, scaler: &Scaler) -> Vec<OverlayRow> {
        let (l, h) = (batch.lookback, batch.horizon);
        let mut rows = Vec::new();
        let mut next: std::collections::HashMap<Option<&str>, i64> = Default::default();
        for i in 0..batch.len() {
            let key = batch.keys[i].as_deref();
            let start = batch.timestamp(i, l);
            if next.get(&key).is_some_and(|&t| start < t) {
                continue;
            }
            next.insert(key, batch.timestamp(i, l + h));
            for p in 0..h {
                rows.push(OverlayRow {
                    time: batch.timestamp(i, l + p),
                    actual: scaler.invert(batch.y_row(i)[p]),
                    predicted: scaler.invert(pred.data()[i * h + p]),
                    series_key: batch.keys[i].clone(),
                });
            }
        }
        rows
    }
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// `time,actual,predicted[,series_key]`; the key column appears when any row has one.
pub fn write_overlay_csv(path: &Path, rows: &[OverlayRow]) -> Result<()> {
    let keyed = rows.iter().any(|r| r.series_key.is_some());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["time", "actual", "predicted"];
    if keyed {
        header.push("series_key");
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let mut rec = vec![format_time(r.time), r.actual.to_string(), r.predicted.to_string()];
        if keyed {
            rec.push(r.series_key.clone().unwrap_or_default());
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// One row per window and layer: `time,series_key,layer,dominant,alpha_0..alpha_{K-1}`,
/// where `time` is the first forecast step.
pub fn write_alpha_csv(path: &Path, report: &ForecastReport, batch: &WindowBatch) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec![
        "time".to_string(),
        "series_key".into(),
        "layer".into(),
        "dominant".into(),
    ];
    header.extend((0..report.n_primitives).map(|k| format!("alpha_{k}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let lead = batch.lookback as i64 * batch.bucket_width;
    for win in &report.windows {
        for (l, a) in win.alpha.iter().enumerate() {
            let mut rec = vec![
                format_time(win.origin + lead),
                win.series_key.clone().unwrap_or_default(),
                l.to_string(),
                match (win.dominant, win.no_dominant) {
                    (Some(d), false) => d.to_string(),
                    _ => "none".into(),
                },
            ];
            rec.extend(a.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PrismConfig;
    use crate::traces::{make_windows, DemandSeries, SplitFractions, HOUR};

    #[test]
    fn threshold_flags_near_uniform_weights() {
        assert!(lacks_dominant(&[0.125; 8]));
        assert_eq!(dominant_primitive(&[0.125; 8]), Some(0));
        let mut a = vec![0.12; 8];
        a[3] = 0.16;
        assert!(lacks_dominant(&a));
        assert_eq!(dominant_primitive(&a), Some(3));
        a[3] = 0.1751;
        assert!(!lacks_dominant(&a));
    }

    #[test]
    fn logit_shift_keeps_labels() {
        let softmax = |s: &[f64]| {
            let m = s.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.into_iter().map(|v| v / z).collect::<Vec<_>>()
        };
        let s = [0.3, 2.0, -1.0, 0.5];
        let shifted: Vec<f64> = s.iter().map(|v| v + 17.5).collect();
        assert_eq!(dominant_primitive(&softmax(&s)), dominant_primitive(&softmax(&shifted)));
        assert_eq!(dominant_primitive(&softmax(&s)), Some(1));
    }

    #[test]
    fn separation_counts_majority_groups() {
        let labels = [Some(0), Some(0), Some(1), Some(1), None, Some(0)];
        let groups = [0, 0, 1, 1, 1, 1];
        assert!((separation_score(&labels, &groups) - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(separation_score(&[Some(2); 4], &[0, 1, 0, 1]), 0.5);
    }

    fn small() -> (PrismModel<f64>, WindowBatch) {
        let cfg = PrismConfig {
            lookback: 32,
            horizon: 8,
            patch_len: 8,
            patch_stride: 4,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            n_primitives: 4,
            ..Default::default()
        };
        let values = (0..300).map(|t| 10.0 + (t as f64 * 0.26).sin()).collect();
        let s = DemandSeries::new(HOUR, 0, values).unwrap();
        let w = make_windows(&s, 32, 8, 1, SplitFractions::default()).unwrap();
        (PrismModel::new(cfg, 3).unwrap(), w.test)
    }

    #[test]
    fn report_shapes() {
        let (m, batch) = small();
        let r = interpretability_report(&m, &batch).unwrap();
        assert_eq!(r.windows.len(), batch.len());
        assert_eq!(r.windows[0].alpha.len(), 2);
        assert_eq!(r.signatures.len(), 4);
        assert_eq!(r.signatures[0].len(), 8);
        assert_eq!(r.dominant_counts.iter().sum::<usize>(), batch.len());
        for l in &r.layers {
            assert!((l.mean_alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let g = l.mean_gate.unwrap();
            assert!(g > 0.0 && g < 1.0);
        }
    }

    #[test]
    fn fresh_model_has_no_dominant_primitive() {
        // the dictionary starts near zero, so every logit is close to equal
        let (m, batch) = small();
        let r = interpretability_report(&m, &batch).unwrap();
        assert_eq!(r.no_dominant, batch.len());
    }

    #[test]
    fn overlay_uses_non_overlapping_windows() {
        let (_, batch) = small();
        let pred = batch.y.clone();
        let rows = OverlayRow::from_windows(&batch, &pred, &Scaler::identity());
        assert!(rows.windows(2).all(|w| w[1].time > w[0].time));
        assert_eq!(
            rows.len(),
            batch.len() / 8 * 8 + if batch.len() % 8 > 0 { 8 } else { 0 }
        );
        assert!(rows.iter().all(|r| r.actual == r.predicted));
    }
}
