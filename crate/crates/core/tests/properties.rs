mod common;

use proptest::prelude::*;

use prism::eval::metrics;
use prism::model::{normalize_instance, ForwardOptions, PrismConfig, PrismModel};
use prism::numcore::fft::{irfft, rfft};
use prism::numcore::ops::softmax;
use prism::numcore::{Tape, Tensor};
use prism::traces::{aggregate, make_windows, CalendarStamp, DemandSeries, SplitFractions, TraceRecord, DEFAULT_START};

const HOUR: i64 = 3600;

fn stamps(b: usize, l: usize, offset: i64) -> Vec<CalendarStamp> {
    (0..b)
        .flat_map(|w| (0..l).map(move |i| CalendarStamp::at(DEFAULT_START + (offset + (w + i) as i64) * HOUR)))
        .collect()
}

fn record(id: usize, (start, dur, gpus): (i64, i64, f64)) -> TraceRecord {
    TraceRecord {
        job_id: format!("j{id}"),
        submit_time: start,
        start_time: start,
        end_time: start + dur,
        gpu_request: gpus,
        priority: "HP".parse().unwrap(),
        org: "o".into(),
    }
}

/// Value of `s` at absolute bucket time `t`, zero outside its range.
fn at(s: &DemandSeries, t: i64) -> f64 {
    let i = (t - s.start) / s.bucket_width;
    if t < s.start || i as usize >= s.len() {
        0.0
    } else {
        s.values[i as usize]
    }
}

fn job() -> impl Strategy<Value = (i64, i64, f64)> {
    (0i64..40 * HOUR, 0i64..10 * HOUR, 0.0f64..16.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..12, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let s = softmax(&Tensor::new(vec![rows, cols], data).unwrap(), 1).unwrap();
        for r in s.data().chunks(cols) {
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fft_roundtrip_is_identity(x in (2usize..=64).prop_flat_map(|t| prop::collection::vec(-100.0f64..100.0, t))) {
        let t = x.len();
        let tensor = Tensor::new(vec![t], x.clone()).unwrap();
        let back = irfft(&rfft(&tensor).unwrap(), t).unwrap();
        for (a, b) in back.data().iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-10, "T={t}: {a} vs {b}");
        }
    }

    #[test]
    fn aggregation_is_linear(a in prop::collection::vec(job(), 1..8), b in prop::collection::vec(job(), 1..8)) {
        let ra: Vec<TraceRecord> = a.iter().enumerate().map(|(i, &j)| record(i, j)).collect();
        let rb: Vec<TraceRecord> = b.iter().enumerate().map(|(i, &j)| record(100 + i, j)).collect();
        let both: Vec<TraceRecord> = ra.iter().chain(&rb).cloned().collect();
        let (sa, sb, sab) = (
            aggregate(&ra, HOUR, None).unwrap(),
            aggregate(&rb, HOUR, None).unwrap(),
            aggregate(&both, HOUR, None).unwrap(),
        );
        let end = sab.start + sab.len() as i64 * HOUR;
        prop_assert!(at(&sa, end) == 0.0 && at(&sb, end) == 0.0);
        let mut t = sab.start.min(sa.start).min(sb.start);
        while t < end.max(sa.start + sa.len() as i64 * HOUR).max(sb.start + sb.len() as i64 * HOUR) {
            prop_assert!((at(&sab, t) - at(&sa, t) - at(&sb, t)).abs() < 1e-9);
            t += HOUR;
        }
    }

    #[test]
    fn windows_never_leak_and_tile_the_series(len in 20usize..200, l in 1usize..12, h in 1usize..8, stride in 1usize..5) {
        prop_assume!(len >= l + h);
        let s = DemandSeries::new(HOUR, DEFAULT_START, (0..len).map(|i| (i * i % 17) as f64).collect()).unwrap();
        let w = make_windows(&s, l, h, stride, SplitFractions::default()).unwrap();
        for batch in [&w.train, &w.val, &w.test] {
            for i in 0..batch.len() {
                prop_assert!(batch.timestamp(i, l - 1) < batch.timestamp(i, l));
            }
        }
        let tiled = make_windows(&s, l, h, l + h, SplitFractions::new(1.0, 0.0, 0.0)).unwrap().train;
        let mut joined = Vec::new();
        for i in 0..tiled.len() {
            joined.extend_from_slice(tiled.x_row(i));
            joined.extend_from_slice(tiled.y_row(i));
        }
        prop_assert_eq!(&joined[..], &s.values[..joined.len()]);
        prop_assert_eq!(joined.len(), len / (l + h) * (l + h));
    }

    #[test]
    fn metrics_ignore_order(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..60), rot in 0usize..60) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        prop_assume!(y.iter().any(|&v| v != y[0]));
        let k = rot % p.len();
        let (mut pp, mut yy) = (p.clone(), y.clone());
        pp.rotate_left(k);
        yy.rotate_left(k);
        pp.reverse();
        yy.reverse();
        let (m1, m2) = (metrics(&p, &y).unwrap(), metrics(&pp, &yy).unwrap());
        prop_assert_eq!(m1, m2);
        prop_assert!((m1.rmse * m1.rmse - m1.mse).abs() <= 1e-9 * m1.mse.max(1.0));
    }
}

fn tiny() -> PrismConfig {
    PrismConfig {
        dropout: 0.0,
        ..common::tiny_config()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mixing_and_attention_rows_are_distributions(seed in any::<u64>(), scale in 0.01f64..1e4, offset in 0i64..500) {
        use rand::{Rng, SeedableRng};
        let cfg = tiny();
        let model = PrismModel::<f64>::new(cfg.clone(), seed % 7).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = 3;
        let data: Vec<f64> = (0..b * cfg.lookback).map(|_| rng.gen_range(0.0..scale)).collect();
        let x = Tensor::new(vec![b, cfg.lookback], data).unwrap();
        let norm = normalize_instance(&x, cfg.eps).unwrap();
        for row in norm.normalized.data().chunks(cfg.lookback) {
            prop_assert!((row.iter().sum::<f64>() / row.len() as f64).abs() < 1e-6);
        }
        let mut tape = Tape::new();
        let p = model.bind(&mut tape, false);
        let tr = model
            .forward_on(&mut tape, &p, &x, &stamps(b, cfg.lookback + cfg.horizon, offset), &mut ForwardOptions::default())
            .unwrap();
        for layer in &tr.layers {
            let prim = layer.primitive.unwrap();
            let k = cfg.n_primitives;
            for row in tape.value(prim.alpha).data().chunks(k) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
            let np = cfg.n_patches();
            for row in tape.value(prim.local_attention).data().chunks(np) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
            for row in tape.value(layer.self_attention).data().chunks(np) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn head_ignores_patch_order(seed in any::<u64>(), perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle()) {
        use rand::{Rng, SeedableRng};
        let cfg = tiny();
        let model = PrismModel::<f64>::new(cfg.clone(), 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (b, np, d) = (2, cfg.n_patches(), cfg.d_model);
        prop_assert_eq!(np, perm.len());
        let h: Vec<f64> = (0..b * np * d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut shuffled = vec![0.0; h.len()];
        for bi in 0..b {
            for (j, &src) in perm.iter().enumerate() {
                let (to, from) = ((bi * np + j) * d, (bi * np + src) * d);
                shuffled[to..to + d].copy_from_slice(&h[from..from + d]);
            }
        }
        let x: Vec<f64> = (0..b * cfg.lookback).map(|_| rng.gen_range(0.0..5.0)).collect();
        let norm = normalize_instance(&Tensor::new(vec![b, cfg.lookback], x).unwrap(), cfg.eps).unwrap();
        let run = |enc: Vec<f64>| {
            let mut tape = Tape::new();
            let p = model.bind(&mut tape, false);
            let e = tape.constant(Tensor::new(vec![b, np, d], enc).unwrap());
            let (y, _) = model.predict_head(&mut tape, &p, e, &norm).unwrap();
            tape.value(y).clone()
        };
        prop_assert_eq!(run(h), run(shuffled));
    }
}
