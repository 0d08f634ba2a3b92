use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{evaluate_model, EvalError, Evaluation, MetricSet, Result};
use crate::model::{PrismConfig, PrismModel, Variant};
use crate::numcore::Scalar;
use crate::training::{Dataset, TrainConfig, TrainError, Trainer};

/// Result of training one variant with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Test scores of the best-validation model; absent when the run diverged.
    pub evaluation: Option<Evaluation>,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

impl SeedOutcome {
    pub fn diverged(&self) -> bool {
        self.evaluation.is_none()
    }
}

/// Percentage change of each metric relative to a reference:
/// `100 * (value - reference) / |reference|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

impl MetricDeltas {
    pub fn between(reference: &MetricSet, value: &MetricSet) -> Self {
        let pct = |r: f64, v: f64| if r == v { 0.0 } else { 100.0 * (v - r) / r.abs() };
        Self {
            mse: pct(reference.mse, value.mse),
            mae: pct(reference.mae, value.mae),
            rmse: pct(reference.rmse, value.rmse),
            r2: pct(reference.r2, value.r2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: MetricSet,
    pub max: MetricSet,
}

impl Spread {
    fn of(sets: &[MetricSet]) -> Option<Self> {
        let first = *sets.first()?;
        let fold = |pick: fn(f64, f64) -> f64| {
            sets.iter().skip(1).fold(first, |a, m| MetricSet {
                mse: pick(a.mse, m.mse),
                mae: pick(a.mae, m.mae),
                rmse: pick(a.rmse, m.rmse),
                r2: pick(a.r2, m.r2),
            })
        };
        Some(Self {
            min: fold(f64::min),
            max: fold(f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seeds: Vec<SeedOutcome>,
    /// Means over the seeds that finished.
    pub mean: Option<Evaluation>,
    pub raw_spread: Option<Spread>,
    pub scaled_spread: Option<Spread>,
    /// Relative to the full model, on the mean metrics.
    pub delta_raw: Option<MetricDeltas>,
    pub delta_scaled: Option<MetricDeltas>,
}

impl AblationRow {
    /// True when any seed failed to produce finite scores.
    pub fn diverged(&self) -> bool {
        self.seeds.iter().any(SeedOutcome::diverged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// Label of the row deltas are taken against.
    pub reference: String,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// Recomputes every delta from the stored means.
    pub fn recompute_deltas(&mut self) {
        let reference = self.row(&self.reference).and_then(|r| r.mean);
        for row in &mut self.rows {
            let pair = reference.zip(row.mean);
            row.delta_raw = pair.map(|(r, m)| MetricDeltas::between(&r.raw, &m.raw));
            row.delta_scaled = pair.map(|(r, m)| MetricDeltas::between(&r.scaled, &m.scaled));
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| format_err(path, e))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// One line per variant: mean, min and max of each metric in both units,
    /// then the percentage deltas.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e))?;
        let mut header = vec!["variant".to_string(), "seeds_ok".into(), "diverged".into()];
        for unit in ["scaled", "raw"] {
            for m in ["mse", "mae", "rmse", "r2"] {
                for stat in ["mean", "min", "max", "delta_pct"] {
                    header.push(format!("{unit}_{m}_{stat}"));
                }
            }
        }
        w.write_record(&header).map_err(|e| format_err(path, e))?;
        for row in &self.rows {
            let ok = row.seeds.iter().filter(|s| !s.diverged()).count();
            let mut rec = vec![row.variant.clone(), ok.to_string(), row.diverged().to_string()];
            let units = [
                (row.mean.map(|m| m.scaled), row.scaled_spread, row.delta_scaled),
                (row.mean.map(|m| m.raw), row.raw_spread, row.delta_raw),
            ];
            for (mean, spread, delta) in units {
                let get = |m: Option<MetricSet>, i: usize| m.map(|m| [m.mse, m.mae, m.rmse, m.r2][i]);
                for i in 0..4 {
                    let d = delta.map(|d| [d.mse, d.mae, d.rmse, d.r2][i]);
                    for v in [
                        get(mean, i),
                        get(spread.map(|s| s.min), i),
                        get(spread.map(|s| s.max), i),
                        d,
                    ] {
                        rec.push(v.map(|v| v.to_string()).unwrap_or_default());
                    }
                }
            }
            w.write_record(&rec).map_err(|e| format_err(path, e))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn train_one<T: Scalar>(data: &Dataset, cfg: PrismConfig, train: &TrainConfig, seed: u64) -> Result<SeedOutcome> {
    let model = PrismModel::<T>::new(cfg, seed)?;
    let mut trainer = Trainer::new(model, TrainConfig { seed, ..train.clone() })?;
    let fitted = trainer.fit(data, |_, _| Ok(()));
    let mut out = SeedOutcome {
        seed,
        evaluation: None,
        epochs: trainer.history.len(),
        best_epoch: trainer.state.best_epoch,
        error: None,
    };
    match fitted {
        Ok(()) => {}
        Err(e @ TrainError::NonFinite { .. }) => {
            out.error = Some(e.to_string());
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    }
    let (eval, _) = evaluate_model(&trainer.best, data, &data.test)?;
    let finite = [eval.raw, eval.scaled]
        .iter()
        .all(|m| [m.mse, m.mae, m.rmse, m.r2].iter().all(|v| v.is_finite()));
    if finite {
        out.evaluation = Some(eval);
    } else {
        out.error = Some("test metrics are not finite".into());
    }
    Ok(out)
}

/// Trains every `(variant, seed)` pair on the same data and summarizes them.
///
/// Each run uses `seed` for both parameter initialization and batch order.
/// Runs are spread over `threads` workers; the report does not depend on the
/// thread count. `on_run` is called as each run finishes.
pub fn run_ablation<T: Scalar>(
    data: &Dataset,
    base: &PrismConfig,
    train: &TrainConfig,
    seeds: &[u64],
    variants: &[Variant],
    threads: usize,
    on_run: impl Fn(Variant, &SeedOutcome) + Sync,
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(EvalError::Sizing("ablation needs at least one seed".into()));
    }
    if variants.is_empty() {
        return Err(EvalError::Sizing("ablation needs at least one variant".into()));
    }
    for v in variants {
        v.apply(base).validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..seeds.len()).map(move |s| (v, s)))
        .collect();
    let results: Mutex<Vec<Option<Result<SeedOutcome>>>> = Mutex::new(jobs.iter().map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let j = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(v, s)) = jobs.get(j) else { break };
        let r = train_one::<T>(data, variants[v].apply(base), train, seeds[s]);
        if let Ok(o) = &r {
            on_run(variants[v], o);
        }
        results.lock().unwrap()[j] = Some(r);
    };
    std::thread::scope(|scope| {
        for _ in 1..threads.clamp(1, jobs.len()) {
            scope.spawn(worker);
        }
        worker();
    });
    let mut results = results.into_inner().unwrap().into_iter();

    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let mut outcomes = Vec::with_capacity(seeds.len());
        for _ in seeds {
            outcomes.push(results.next().flatten().expect("every job ran")?);
        }
        let ok: Vec<Evaluation> = outcomes.iter().filter_map(|o| o.evaluation).collect();
        let raw: Vec<MetricSet> = ok.iter().map(|e| e.raw).collect();
        let scaled: Vec<MetricSet> = ok.iter().map(|e| e.scaled).collect();
        rows.push(AblationRow {
            variant: v.label().to_string(),
            seeds: outcomes,
            mean: MetricSet::mean(&raw)
                .zip(MetricSet::mean(&scaled))
                .map(|(raw, scaled)| Evaluation { raw, scaled }),
            raw_spread: Spread::of(&raw),
            scaled_spread: Spread::of(&scaled),
            delta_raw: None,
            delta_scaled: None,
        });
    }
    let mut report = AblationReport {
        reference: Variant::Full.label().to_string(),
        rows,
    };
    report.recompute_deltas();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(mse: f64, mae: f64, r2: f64) -> MetricSet {
        MetricSet {
            mse,
            mae,
            rmse: mse.sqrt(),
            r2,
        }
    }

    fn row(name: &str, m: MetricSet) -> AblationRow {
        AblationRow {
            variant: name.into(),
            seeds: vec![],
            mean: Some(Evaluation { raw: m, scaled: m }),
            raw_spread: None,
            scaled_spread: None,
            delta_raw: None,
            delta_scaled: None,
        }
    }

    #[test]
    fn reference_row_has_zero_delta() {
        let mut r = AblationReport {
            reference: "PRISM".into(),
            rows: vec![
                row("PRISM", ms(0.0753, 0.1926, 0.9131)),
                row("w/o-prim-spec", ms(0.0868, 0.2, 0.9)),
            ],
        };
        r.recompute_deltas();
        let d = r.rows[0].delta_scaled.unwrap();
        assert_eq!((d.mse, d.mae, d.rmse, d.r2), (0.0, 0.0, 0.0, 0.0));
        let d = r.rows[1].delta_raw.unwrap();
        assert!((d.mse - 100.0 * (0.0868 - 0.0753) / 0.0753).abs() < 1e-12);
    }

    #[test]
    fn missing_reference_leaves_deltas_empty() {
        let mut r = AblationReport {
            reference: "PRISM".into(),
            rows: vec![row("Baseline", ms(1.0, 1.0, 0.5))],
        };
        r.recompute_deltas();
        assert!(r.rows[0].delta_raw.is_none());
    }

    #[test]
    fn spread_tracks_extremes() {
        let s = Spread::of(&[ms(1.0, 3.0, 0.2), ms(2.0, 1.0, 0.4)]).unwrap();
        assert_eq!((s.min.mse, s.max.mse, s.min.mae, s.max.r2), (1.0, 2.0, 1.0, 0.4));
    }
}
