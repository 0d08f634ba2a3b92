use std::fs;
use std::path::{Path, PathBuf};

use prism::eval::{
    baselines, evaluate_model, interpretability_report, run_ablation, write_alpha_csv, write_overlay_csv,
    BaselineResult, Evaluation, OverlayRow,
};
use prism::model::checkpoint::manifest_path;
use prism::model::{load_checkpoint, CheckpointManifest, PrismModel};
use prism::numcore::{Scalar, Tensor};
use prism::traces::io::{format_time, read_series, read_traces, write_series};
use prism::traces::{
    aggregate as aggregate_traces, stats as series_stats, synthesize, CalendarStamp, SeriesFilter, SeriesStats,
    SynthConfig,
};
use prism::training::{Dataset, DatasetOptions, Scaler, Trainer};
use serde::{Deserialize, Serialize};

use crate::config::{load_run_config, read_json, RunConfig};
use crate::error::CliError;
use crate::manifest::{write_json, ManifestBuilder, RunManifest, MANIFEST_FILE};
use crate::{
    AblateArgs, AggregateArgs, EvaluateArgs, GenerateArgs, InspectArgs, PrecisionArg, PredictArgs, StatsArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

macro_rules! with_precision {
    ($p:expr, $f:ident, $($arg:expr),*) => {
        match $p {
            PrecisionArg::F32 => $f::<f32>($($arg),*),
            PrecisionArg::F64 => $f::<f64>($($arg),*),
        }
    };
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))
}

fn load_series(path: &Path) -> Result<Vec<prism::traces::DemandSeries>> {
    if !path.exists() {
        return Err(CliError::Input(format!("{}: no such file", path.display())));
    }
    Ok(read_series(path)?)
}

/// A manifest path, or a training directory whose best checkpoint is meant.
fn checkpoint_manifest(path: &Path) -> Result<PathBuf> {
    let p = if path.is_dir() {
        manifest_path(path, "best")
    } else {
        path.to_path_buf()
    };
    if !p.exists() {
        return Err(CliError::Input(format!("{}: no such checkpoint", p.display())));
    }
    Ok(p)
}

fn metadata<T: serde::de::DeserializeOwned>(m: &CheckpointManifest, key: &str) -> Result<Option<T>> {
    m.metadata
        .get(key)
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()
        .map_err(|e| CliError::Input(format!("checkpoint metadata {key:?} is malformed: {e}")))
}

/// Model plus the scaler and dataset options it was trained with.
fn load_trained<T: Scalar>(path: &Path) -> Result<(PrismModel<T>, Scaler, DatasetOptions)> {
    let (model, manifest) = load_checkpoint::<T>(&checkpoint_manifest(path)?)?;
    let scaler = metadata(&manifest, "scaler")?.unwrap_or_else(Scaler::identity);
    let data = metadata(&manifest, "data")?.unwrap_or_default();
    Ok((model, scaler, data))
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let mut mb = ManifestBuilder::new("generate");
    let mut cfg = match &a.common.config {
        Some(p) => {
            mb.input(p)?;
            read_json::<SynthConfig>(p)?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.days {
        cfg.horizon_days = d;
    }
    cfg.validate()?;
    let series = synthesize(&cfg)?;
    create_out(&a.common.out)?;
    let path = a.common.out.join("series.csv");
    write_series(&path, std::slice::from_ref(&series))?;
    mb.finish(&a.common.out, &cfg, Some(cfg.seed), None)?;
    println!(
        "wrote {} ({} buckets, {} days)",
        path.display(),
        series.len(),
        series.len() as f64 * series.bucket_hours() / 24.0
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct AggregateResolved<'a> {
    bucket_seconds: i64,
    filter: &'a SeriesFilter,
}

pub fn aggregate(a: AggregateArgs) -> Result<()> {
    let mut mb = ManifestBuilder::new("aggregate");
    if !a.traces.exists() {
        return Err(CliError::Input(format!("{}: no such file", a.traces.display())));
    }
    mb.input(&a.traces)?;
    let filter = SeriesFilter {
        priority: a
            .priority
            .as_deref()
            .map(str::parse)
            .transpose()
            .map_err(CliError::Input)?,
        org: a.org.clone(),
    };
    let records = read_traces(&a.traces)?;
    let series = aggregate_traces(&records, a.bucket_seconds, Some(&filter))?;
    create_out(&a.common.out)?;
    let path = a.common.out.join("series.csv");
    write_series(&path, std::slice::from_ref(&series))?;
    let resolved = AggregateResolved {
        bucket_seconds: a.bucket_seconds,
        filter: &filter,
    };
    mb.finish(&a.common.out, &resolved, None, None)?;
    println!(
        "aggregated {} jobs into {} buckets: {}",
        records.len(),
        series.len(),
        path.display()
    );
    Ok(())
}

/// What `train` records so that a run can be repeated or resumed.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainResolved {
    series: PathBuf,
    run: RunConfig,
}

pub fn train(a: TrainArgs) -> Result<()> {
    with_precision!(a.common.precision, train_with, &a)
}

fn train_with<T: Scalar>(a: &TrainArgs) -> Result<()> {
    let mut mb = ManifestBuilder::new("train");
    let previous = match &a.resume {
        Some(dir) => {
            let m: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
            Some(
                serde_json::from_value::<TrainResolved>(m.config)
                    .map_err(|e| CliError::Input(format!("{}: not a training run: {e}", dir.display())))?,
            )
        }
        None => None,
    };
    let mut run = match (&a.common.config, &previous) {
        (Some(p), _) => {
            mb.input(p)?;
            load_run_config(Some(p))?
        }
        (None, Some(prev)) => prev.run.clone(),
        (None, None) => RunConfig::default(),
    };
    let series_path = a
        .series
        .clone()
        .or_else(|| previous.as_ref().map(|p| p.series.clone()))
        .ok_or_else(|| CliError::Input("--series is required unless --resume is given".into()))?;
    if let Some(s) = a.common.seed {
        run.train.seed = s;
    }
    if let Some(e) = a.epochs {
        run.train.max_epochs = e;
    }
    run.validate()?;
    let series = load_series(&series_path)?;
    mb.input(&series_path)?;
    let data = Dataset::from_series(&series, run.model.lookback, run.model.horizon, &run.data)?;

    let mut trainer = match &a.resume {
        Some(dir) => {
            let t = Trainer::<T>::resume(dir, run.train.clone())?;
            if *t.model.config() != run.model {
                return Err(CliError::Input(format!(
                    "model config differs from the checkpoint in {}",
                    dir.display()
                )));
            }
            run.train.seed = t.config.seed;
            t
        }
        None => Trainer::new(
            PrismModel::<T>::new(run.model.clone(), run.train.seed)?,
            run.train.clone(),
        )?,
    };
    trainer.metadata.insert("scaler".into(), json_value(&data.scaler)?);
    trainer.metadata.insert("data".into(), json_value(&run.data)?);

    let out = &a.common.out;
    create_out(out)?;
    trainer.save(out)?;
    eprintln!(
        "training on {} windows ({} val, {} test), {} parameters",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        trainer.model.n_scalars()
    );
    trainer.fit(&data, |t, rec| {
        eprintln!(
            "epoch {:>3}  train {:.5}  val {:.5}  val_mse {:.5}{}",
            rec.epoch,
            rec.train_loss,
            rec.val_loss,
            rec.val_mse,
            rec.mean_div_loss.map(|d| format!("  div {d:.4}")).unwrap_or_default()
        );
        t.save(out)
    })?;
    if trainer.state.stopped_early {
        eprintln!("stopped early; best epoch {:?}", trainer.state.best_epoch);
    }
    if !data.test.is_empty() {
        let (ev, _) = evaluate_model(&trainer.best, &data, &data.test)?;
        write_json(&out.join("metrics.json"), &ev)?;
        print_evaluation("best checkpoint, test split", &ev);
    }
    let resolved = TrainResolved {
        series: series_path,
        run: run.clone(),
    };
    mb.finish(out, &resolved, Some(run.train.seed), Some(a.common.precision.bits()))?;
    Ok(())
}

fn json_value(v: &impl Serialize) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| CliError::Runtime(e.to_string()))
}

fn print_evaluation(label: &str, ev: &Evaluation) {
    println!("{label}");
    for (unit, m) in [("scaled", ev.scaled), ("raw", ev.raw)] {
        println!(
            "  {unit:<6} mse {:.6}  mae {:.6}  rmse {:.6}  r2 {:.4}",
            m.mse, m.mae, m.rmse, m.r2
        );
    }
}

pub fn predict(a: PredictArgs) -> Result<()> {
    with_precision!(a.common.precision, predict_with, &a)
}

#[derive(Debug, Serialize)]
struct PredictResolved<'a> {
    checkpoint: &'a Path,
    series: &'a Path,
    horizon: usize,
}

fn predict_with<T: Scalar>(a: &PredictArgs) -> Result<()> {
    let mut mb = ManifestBuilder::new("predict");
    let ckpt = checkpoint_manifest(&a.checkpoint)?;
    let (model, scaler, _) = load_trained::<T>(&ckpt)?;
    let (l, h) = (model.config().lookback, model.config().horizon);
    if let Some(want) = a.horizon {
        if want != h {
            return Err(CliError::Input(format!(
                "requested horizon {want} does not match the checkpoint horizon {h}"
            )));
        }
    }
    let series = load_series(&a.series)?;
    mb.input(&ckpt)?;
    mb.input(&a.series)?;
    let mut x = Vec::new();
    let mut stamps = Vec::new();
    for s in &series {
        if s.len() < l {
            return Err(CliError::Input(format!(
                "series {} has {} buckets, fewer than the lookback {l}",
                s.series_key.as_deref().unwrap_or("<unnamed>"),
                s.len()
            )));
        }
        let first = s.len() - l;
        x.extend(s.values[first..].iter().map(|&v| scaler.apply(v)));
        stamps.extend((0..l + h).map(|p| CalendarStamp::at(s.timestamp(first + p))));
    }
    let xt = Tensor::<T>::from_f64(vec![series.len(), l], &x).map_err(|e| CliError::Runtime(e.to_string()))?;
    let pred = model.predict(&xt, &stamps)?;
    let keyed = series.iter().any(|s| s.series_key.is_some());
    create_out(&a.common.out)?;
    let path = a.common.out.join("forecast.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut header = vec!["time", "predicted"];
    if keyed {
        header.push("series_key");
    }
    let csv_err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(csv_err)?;
    for (i, s) in series.iter().enumerate() {
        for k in 0..h {
            let t = s.timestamp(s.len() + k);
            let v = scaler.invert(pred.data()[i * h + k].to_f64());
            let mut rec = vec![format_time(t), v.to_string()];
            if keyed {
                rec.push(s.series_key.clone().unwrap_or_default());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    let resolved = PredictResolved {
        checkpoint: &ckpt,
        series: &a.series,
        horizon: h,
    };
    mb.finish(&a.common.out, &resolved, None, Some(a.common.precision.bits()))?;
    println!(
        "wrote {h}-step forecasts for {} series to {}",
        series.len(),
        path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SeriesBaselines {
    series_key: Option<String>,
    results: Vec<BaselineResult>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    test_windows: usize,
    model: Evaluation,
    baselines: Vec<SeriesBaselines>,
}

#[derive(Debug, Serialize)]
struct CheckpointResolved<'a> {
    checkpoint: &'a Path,
    series: &'a Path,
    data: &'a DatasetOptions,
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    with_precision!(a.common.precision, evaluate_with, &a)
}

fn evaluate_with<T: Scalar>(a: &EvaluateArgs) -> Result<()> {
    let mut mb = ManifestBuilder::new("evaluate");
    let ckpt = checkpoint_manifest(&a.checkpoint)?;
    let (model, scaler, opts) = load_trained::<T>(&ckpt)?;
    let (l, h) = (model.config().lookback, model.config().horizon);
    let series = load_series(&a.series)?;
    mb.input(&ckpt)?;
    mb.input(&a.series)?;
    let data = Dataset::with_scaler(&series, l, h, &opts, scaler)?;
    let (ev, pred) = evaluate_model(&model, &data, &data.test)?;
    let base = series
        .iter()
        .map(|s| {
            let r = baselines(s, l, h, opts.split, opts.eval_stride);
            SeriesBaselines {
                series_key: s.series_key.clone(),
                error: r.as_ref().err().map(|e| e.to_string()),
                results: r.unwrap_or_default(),
            }
        })
        .collect();
    let report = EvaluationReport {
        test_windows: data.test.len(),
        model: ev,
        baselines: base,
    };
    let out = &a.common.out;
    create_out(out)?;
    write_json(&out.join("metrics.json"), &report)?;
    write_overlay_csv(
        &out.join("overlay.csv"),
        &OverlayRow::from_windows(&data.test, &pred, &data.scaler),
    )?;
    print_evaluation(&format!("model on {} test windows", data.test.len()), &ev);
    for b in &report.baselines {
        if let Some(e) = &b.error {
            println!(
                "  baselines skipped for {}: {e}",
                b.series_key.as_deref().unwrap_or("series")
            );
        }
        for r in &b.results {
            println!("  {:<20} raw mse {:.6}  r2 {:.4}", r.name, r.metrics.mse, r.metrics.r2);
        }
    }
    let resolved = CheckpointResolved {
        checkpoint: &ckpt,
        series: &a.series,
        data: &opts,
    };
    mb.finish(out, &resolved, None, Some(a.common.precision.bits()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AblateResolved<'a> {
    series: &'a Path,
    run: &'a RunConfig,
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    with_precision!(a.common.precision, ablate_with, &a)
}

fn ablate_with<T: Scalar>(a: &AblateArgs) -> Result<()> {
    let mut mb = ManifestBuilder::new("ablate");
    if let Some(p) = &a.common.config {
        mb.input(p)?;
    }
    let mut run = load_run_config(a.common.config.as_deref())?;
    if let Some(s) = a.common.seed {
        run.ablation.seeds = vec![s];
    }
    if let Some(s) = &a.seeds {
        run.ablation.seeds = s.clone();
    }
    if let Some(v) = &a.variants {
        run.ablation.variants = v.clone();
    }
    if let Some(e) = a.epochs {
        run.train.max_epochs = e;
    }
    if let Some(t) = a.threads {
        run.ablation.threads = t;
    }
    run.validate()?;
    let variants = run.ablation.resolve_variants()?;
    let series = load_series(&a.series)?;
    mb.input(&a.series)?;
    let data = Dataset::from_series(&series, run.model.lookback, run.model.horizon, &run.data)?;
    let report = run_ablation::<T>(
        &data,
        &run.model,
        &run.train,
        &run.ablation.seeds,
        &variants,
        run.ablation.threads,
        |v, o| match (&o.evaluation, &o.error) {
            (Some(e), _) => eprintln!(
                "{:<14} seed {}: test mse {:.6} after {} epochs",
                v.label(),
                o.seed,
                e.scaled.mse,
                o.epochs
            ),
            (None, err) => eprintln!(
                "{:<14} seed {}: diverged ({})",
                v.label(),
                o.seed,
                err.as_deref().unwrap_or("?")
            ),
        },
    )?;
    let out = &a.common.out;
    create_out(out)?;
    report.write_json(&out.join("ablation.json"))?;
    report.write_csv(&out.join("ablation.csv"))?;
    println!(
        "{:<14} {:>10} {:>10} {:>10} {:>8} {:>9}",
        "variant", "mse", "mae", "rmse", "r2", "d_mse%"
    );
    for row in &report.rows {
        match (row.mean, row.delta_scaled) {
            (Some(m), d) => println!(
                "{:<14} {:>10.6} {:>10.6} {:>10.6} {:>8.4} {:>9}{}",
                row.variant,
                m.scaled.mse,
                m.scaled.mae,
                m.scaled.rmse,
                m.scaled.r2,
                d.map(|d| format!("{:+.2}", d.mse)).unwrap_or_else(|| "-".into()),
                if row.diverged() { "  (some seeds diverged)" } else { "" }
            ),
            (None, _) => println!("{:<14} diverged on every seed", row.variant),
        }
    }
    let resolved = AblateResolved {
        series: &a.series,
        run: &run,
    };
    mb.finish(out, &resolved, None, Some(a.common.precision.bits()))?;
    Ok(())
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    with_precision!(a.common.precision, inspect_with, &a)
}

fn inspect_with<T: Scalar>(a: &InspectArgs) -> Result<()> {
    let mut mb = ManifestBuilder::new("inspect");
    let ckpt = checkpoint_manifest(&a.checkpoint)?;
    let (model, scaler, opts) = load_trained::<T>(&ckpt)?;
    let series = load_series(&a.series)?;
    mb.input(&ckpt)?;
    mb.input(&a.series)?;
    let cfg = model.config();
    let data = Dataset::with_scaler(&series, cfg.lookback, cfg.horizon, &opts, scaler)?;
    let report = interpretability_report(&model, &data.test)?;
    let out = &a.common.out;
    create_out(out)?;
    write_json(&out.join("report.json"), &report)?;
    if cfg.use_primitive {
        write_alpha_csv(&out.join("alpha.csv"), &report, &data.test)?;
        let path = out.join("signatures.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
        let csv_err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
        w.write_record(["primitive", "step", "value"]).map_err(csv_err)?;
        for (k, sig) in report.signatures.iter().enumerate() {
            for (s, v) in sig.iter().enumerate() {
                w.write_record([k.to_string(), s.to_string(), v.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
    }
    println!("{} test windows", report.windows.len());
    if cfg.use_primitive {
        println!("dominant primitive counts: {:?}", report.dominant_counts);
        println!("no dominant primitive: {}", report.no_dominant);
    }
    for (l, s) in report.layers.iter().enumerate() {
        let gate = s.mean_gate.map(|g| format!("{g:.4}")).unwrap_or_else(|| "-".into());
        let low = s
            .band_energy
            .map(|e| format!("{:.3}", e.low_fraction()))
            .unwrap_or_else(|| "-".into());
        println!("layer {l}: mean gate {gate}, low-band energy share {low}");
    }
    let resolved = CheckpointResolved {
        checkpoint: &ckpt,
        series: &a.series,
        data: &opts,
    };
    mb.finish(out, &resolved, None, Some(a.common.precision.bits()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct KeyedStats {
    series_key: Option<String>,
    #[serde(flatten)]
    stats: SeriesStats,
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let mut mb = ManifestBuilder::new("stats");
    let series = load_series(&a.series)?;
    mb.input(&a.series)?;
    let all = series
        .iter()
        .map(|s| {
            Ok(KeyedStats {
                series_key: s.series_key.clone(),
                stats: series_stats(s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    create_out(&a.common.out)?;
    write_json(&a.common.out.join("stats.json"), &all)?;
    for k in &all {
        let s = &k.stats;
        println!(
            "{}: {} buckets, mean {:.3}, peak/trough {:.3}, p97.5/p2.5 {:.3}, dominant periods (h) {:?}",
            k.series_key.as_deref().unwrap_or("series"),
            s.len,
            s.mean,
            s.peak_trough_ratio,
            s.central_95_ratio,
            s.dominant_periods_hours
        );
    }
    mb.finish(&a.common.out, &a.series, None, None)?;
    Ok(())
}
