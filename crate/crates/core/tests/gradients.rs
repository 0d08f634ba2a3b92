mod common;

use common::*;
use prism::model::{PrismConfig, PrismModel, Variant};
use prism::numcore::{Tape, Tensor, Var};
use prism::training::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Builds `f` on a fresh tape and reduces it to `sum(f(x) * w)` with fixed
/// random weights, so no output direction cancels.
fn scalar_of(
    f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
    inputs: &[Tensor<f64>],
    weights: &mut Option<Tensor<f64>>,
    grad: bool,
) -> (Tape<f64>, Vec<Var>, Var) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), grad)).collect();
    let out = f(&mut tape, &vars);
    let w = weights
        .get_or_insert_with(|| random(tape.shape(out), &mut ChaCha8Rng::seed_from_u64(99)))
        .clone();
    let w = tape.constant(w);
    let prod = tape.mul(out, w).unwrap();
    let root = tape.sum_all(prod);
    (tape, vars, root)
}

/// Largest elementwise relative error between tape and central differences.
fn op_chain_error(f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var, inputs: Vec<Tensor<f64>>) -> f64 {
    let mut weights = None;
    let (mut tape, vars, root) = scalar_of(f, &inputs, &mut weights, true);
    tape.backward(root).unwrap();
    let grads: Vec<Tensor<f64>> = vars.iter().map(|&v| tape.grad(v).unwrap().clone()).collect();
    let eval = |xs: &[Tensor<f64>]| {
        let (tape, _, root) = scalar_of(f, xs, &mut weights.clone(), false);
        tape.value(root).item()
    };
    let mut worst: f64 = 0.0;
    for (i, g) in grads.iter().enumerate() {
        for e in 0..g.len() {
            let mut xs = inputs.clone();
            xs[i].data_mut()[e] += FD_STEP;
            let up = eval(&xs);
            xs[i].data_mut()[e] -= 2.0 * FD_STEP;
            let down = eval(&xs);
            worst = worst.max(rel_error(g.data()[e], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

#[test]
fn op_chains_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    type Chain = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>;
    let cases: Vec<(&str, Vec<Tensor<f64>>, Chain)> = vec![
        (
            "matmul-softmax",
            vec![random(&[2, 3, 4], &mut rng), random(&[4, 5], &mut rng)],
            Box::new(|t, v| {
                let m = t.matmul(v[0], v[1]).unwrap();
                t.softmax(m, 2).unwrap()
            }),
        ),
        (
            "layer-norm",
            vec![
                random(&[3, 6], &mut rng),
                random(&[6], &mut rng),
                random(&[6], &mut rng),
            ],
            Box::new(|t, v| t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap()),
        ),
        (
            "gelu-sigmoid-square",
            vec![random(&[4, 5], &mut rng)],
            Box::new(|t, v| {
                let g = t.gelu(v[0]);
                let s = t.sigmoid(g);
                t.square(s)
            }),
        ),
        (
            "div-sub-abs",
            vec![random(&[3, 4], &mut rng), random(&[4], &mut rng).map(|x| x + 2.0)],
            Box::new(|t, v| {
                let q = t.div(v[0], v[1]).unwrap();
                let d = t.sub(q, v[0]).unwrap();
                let s = t.affine(d, 1.0, 3.0);
                t.abs(s)
            }),
        ),
        (
            "unfold-permute-reshape",
            vec![random(&[2, 12], &mut rng)],
            Box::new(|t, v| {
                let u = t.unfold(v[0], 4, 2).unwrap();
                let p = t.permute(u, &[2, 0, 1]).unwrap();
                let r = t.reshape(p, &[8, 5]).unwrap();
                t.square(r)
            }),
        ),
        (
            "concat-linear-mean",
            vec![
                random(&[2, 3, 2], &mut rng),
                random(&[2, 3, 3], &mut rng),
                random(&[5, 4], &mut rng),
                random(&[4], &mut rng),
            ],
            Box::new(|t, v| {
                let c = t.concat_last(&[v[0], v[1]]).unwrap();
                let l = t.linear(c, v[2], Some(v[3])).unwrap();
                let g = t.gelu(l);
                t.mean_axis_sorted(g, 1).unwrap()
            }),
        ),
        (
            "pairwise-cosine",
            vec![random(&[2, 4, 5], &mut rng)],
            Box::new(|t, v| t.pairwise_cosine(v[0]).unwrap()),
        ),
        (
            "rfft-filter-irfft",
            vec![
                random(&[2, 7, 3], &mut rng),
                random(&[4, 3], &mut rng),
                random(&[4, 3], &mut rng),
            ],
            Box::new(|t, v| {
                let (re, im) = t.rfft(v[0], 1).unwrap();
                let a = t.mul(re, v[1]).unwrap();
                let b = t.mul(im, v[2]).unwrap();
                let fr = t.sub(a, b).unwrap();
                let a = t.mul(re, v[2]).unwrap();
                let b = t.mul(im, v[1]).unwrap();
                let fi = t.add(a, b).unwrap();
                t.irfft(fr, fi, 7, 1).unwrap()
            }),
        ),
        (
            "even-length-spectrum",
            vec![random(&[3, 8], &mut rng)],
            Box::new(|t, v| {
                let (re, im) = t.rfft(v[0], 1).unwrap();
                let p = t.square(re);
                let q = t.square(im);
                t.add(p, q).unwrap()
            }),
        ),
        (
            "transpose-mean",
            vec![random(&[2, 3, 4], &mut rng)],
            Box::new(|t, v| {
                let tr = t.transpose(v[0]).unwrap();
                let m = t.mean_axis(tr, 2).unwrap();
                let s = t.scale(m, 2.5);
                t.sigmoid(s)
            }),
        ),
    ];
    for (name, inputs, f) in &cases {
        let err = op_chain_error(f.as_ref(), inputs.clone());
        assert!(err < 1e-4, "{name}: relative error {err:e}");
    }
}

/// Central differences of an O(1) loss cannot resolve gradients much below
/// `ulp(L) / step`; this bound allows a few ulps of the loss.
fn fd_noise_bound(loss: f64) -> f64 {
    64.0 * f64::EPSILON * loss.abs() / FD_STEP
}

#[test]
fn composite_model_gradients_match_finite_differences() {
    let cfg = tiny_config();
    let data = synthetic_dataset(&cfg);
    let batch = first_windows(&data.train, 4, 17);
    let tc = TrainConfig::default();
    let model = PrismModel::<f64>::new(cfg, 3).unwrap();
    let grads = analytic_grads(&model, &batch, &tc);
    let noise = fd_noise_bound(loss_value(&model, &batch, &tc));
    let mut m = model.clone();
    for (pi, g) in grads.iter().enumerate() {
        for e in 0..g.len() {
            let orig = m.params()[pi].value.data()[e];
            m.params_mut()[pi].value.data_mut()[e] = orig + FD_STEP;
            let up = loss_value(&m, &batch, &tc);
            m.params_mut()[pi].value.data_mut()[e] = orig - FD_STEP;
            let down = loss_value(&m, &batch, &tc);
            m.params_mut()[pi].value.data_mut()[e] = orig;
            let (a, n) = (g.data()[e], (up - down) / (2.0 * FD_STEP));
            let name = &m.params()[pi].name;
            assert!(
                rel_error(a, n) < 1e-4 || (a - n).abs() < noise,
                "{name}[{e}]: analytic {a:e} numeric {n:e}"
            );
        }
    }
}

#[test]
fn every_parameter_receives_gradient_in_every_variant() {
    let base = tiny_config();
    for v in Variant::ALL {
        let cfg = PrismConfig {
            lookback: 32,
            ..v.apply(&base)
        };
        let data = synthetic_dataset(&cfg);
        let batch = first_windows(&data.train, 4, 11);
        let model = PrismModel::<f64>::new(cfg, 1).unwrap();
        let grads = analytic_grads(&model, &batch, &TrainConfig::default());
        for (g, p) in grads.iter().zip(model.params()) {
            assert!(
                g.data().iter().any(|&x| x != 0.0),
                "{}: {} gets no gradient",
                v.label(),
                p.name
            );
        }
    }
}

#[test]
fn matmul_sum_gradient_within_1e6() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (a, b) = (random(&[3, 4], &mut rng), random(&[4, 2], &mut rng));
    let loss = |a: &Tensor<f64>, grad: bool| {
        let mut tape = Tape::new();
        let va = tape.leaf(a.clone(), grad);
        let vb = tape.constant(b.clone());
        let m = tape.matmul(va, vb).unwrap();
        let root = tape.sum_all(m);
        (tape, va, root)
    };
    let (mut tape, va, root) = loss(&a, true);
    tape.backward(root).unwrap();
    let g = tape.grad(va).unwrap().clone();
    for e in 0..a.len() {
        let mut up = a.clone();
        up.data_mut()[e] += FD_STEP;
        let mut down = a.clone();
        down.data_mut()[e] -= FD_STEP;
        let f = |t: &Tensor<f64>| {
            let (tape, _, r) = loss(t, false);
            tape.value(r).item()
        };
        let n = (f(&up) - f(&down)) / (2.0 * FD_STEP);
        assert!(rel_error(g.data()[e], n) < 1e-6, "{e}: {} vs {n}", g.data()[e]);
    }
}
