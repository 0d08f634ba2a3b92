#![allow(dead_code)]

use prism::model::{ForwardOptions, PrismConfig, PrismModel};
use prism::numcore::{Tape, Tensor};
use prism::traces::{synthesize, SynthConfig, WindowBatch};
use prism::training::{forecast_loss, total_loss, Dataset, DatasetOptions, TrainConfig};

/// The small one-layer model used by the finite-difference checks.
pub fn tiny_config() -> PrismConfig {
    PrismConfig {
        lookback: 32,
        horizon: 8,
        patch_len: 8,
        patch_stride: 8,
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        n_primitives: 4,
        dropout: 0.0,
        ..Default::default()
    }
}

/// Scaled windows of a 30-day default synthetic series.
pub fn synthetic_dataset(cfg: &PrismConfig) -> Dataset {
    let series = synthesize(&SynthConfig {
        horizon_days: 30,
        ..Default::default()
    })
    .unwrap();
    Dataset::from_series(&[series], cfg.lookback, cfg.horizon, &DatasetOptions::default()).unwrap()
}

pub fn first_windows(batch: &WindowBatch, n: usize, step: usize) -> WindowBatch {
    let idx: Vec<usize> = (0..n).map(|i| i * step).collect();
    batch.select(&idx)
}

/// `L_total` of `model` on `batch`, without dropout.
pub fn loss_value(model: &PrismModel<f64>, batch: &WindowBatch, tc: &TrainConfig) -> f64 {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, false);
    let tr = model
        .forward_on(&mut tape, &p, &batch.x, &batch.stamps, &mut ForwardOptions::default())
        .unwrap();
    let y = tape.constant(batch.y.clone());
    let lf = forecast_loss(&mut tape, tr.prediction, y, tc.lambda_l1).unwrap();
    let lt = total_loss(&mut tape, lf, &tr.diversity_losses(), tc.lambda_div).unwrap();
    tape.value(lt).item()
}

/// Analytic gradient of `L_total` for every parameter, zeros where the tape
/// records none.
pub fn analytic_grads(model: &PrismModel<f64>, batch: &WindowBatch, tc: &TrainConfig) -> Vec<Tensor<f64>> {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, true);
    let tr = model
        .forward_on(&mut tape, &p, &batch.x, &batch.stamps, &mut ForwardOptions::default())
        .unwrap();
    let y = tape.constant(batch.y.clone());
    let lf = forecast_loss(&mut tape, tr.prediction, y, tc.lambda_l1).unwrap();
    let lt = total_loss(&mut tape, lf, &tr.diversity_losses(), tc.lambda_div).unwrap();
    tape.backward(lt).unwrap();
    p.vars()
        .iter()
        .zip(model.params())
        .map(|(&v, prm)| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(prm.value.shape()))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel: f64,
    /// `(parameter, element, analytic, numeric)` at the worst element.
    pub worst: (String, usize, f64, f64),
}

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-8;

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Central differences over every scalar of every parameter.
pub fn grad_check(model: &PrismModel<f64>, batch: &WindowBatch, tc: &TrainConfig) -> GradCheck {
    let grads = analytic_grads(model, batch, tc);
    let mut m = model.clone();
    let mut out = GradCheck {
        checked: 0,
        max_rel: 0.0,
        worst: (String::new(), 0, 0.0, 0.0),
    };
    for (pi, g) in grads.iter().enumerate() {
        for e in 0..g.len() {
            let orig = m.params()[pi].value.data()[e];
            m.params_mut()[pi].value.data_mut()[e] = orig + FD_STEP;
            let up = loss_value(&m, batch, tc);
            m.params_mut()[pi].value.data_mut()[e] = orig - FD_STEP;
            let down = loss_value(&m, batch, tc);
            m.params_mut()[pi].value.data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = g.data()[e];
            let r = rel_error(analytic, numeric);
            out.checked += 1;
            if r > out.max_rel || out.worst.0.is_empty() {
                out.max_rel = out.max_rel.max(r);
                out.worst = (m.params()[pi].name.clone(), e, analytic, numeric);
            }
        }
    }
    out
}
