use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{self, Dense, Layout, Norm, Param};
use super::{ModelError, PrismConfig, Result};
use crate::numcore::fft::rfft_bins;
use crate::numcore::{NumError, Scalar, Tape, Tensor, Var};
use crate::traces::CalendarStamp;

/// Per-window z-scoring of the history, kept for denormalizing forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNorm<T> {
    pub normalized: Tensor<T>,
    /// `[B]`
    pub mean: Tensor<T>,
    /// `[B]` population standard deviation.
    pub std: Tensor<T>,
    pub eps: f64,
}

impl<T: Scalar> InstanceNorm<T> {
    /// `sqrt(std^2 + eps)` per row.
    pub fn scale(&self) -> Vec<f64> {
        self.std
            .data()
            .iter()
            .map(|s| (s.to_f64() * s.to_f64() + self.eps).sqrt())
            .collect()
    }

    /// Maps `[B, n]` values from the normalized scale back to raw units.
    pub fn denormalize(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.mean.len();
        if y.ndim() != 2 || y.shape()[0] != b {
            return Err(ModelError::Dimension(format!(
                "cannot denormalize shape {:?} with {b} rows",
                y.shape()
            )));
        }
        let n = y.shape()[1];
        let scale = self.scale();
        let mut out = y.clone();
        for (i, row) in out.data_mut().chunks_mut(n.max(1)).enumerate() {
            let mu = self.mean.data()[i].to_f64();
            for v in row {
                *v = T::from_f64(v.to_f64() * scale[i] + mu);
            }
        }
        Ok(out)
    }
}

pub fn normalize_instance<T: Scalar>(x: &Tensor<T>, eps: f64) -> Result<InstanceNorm<T>> {
    if x.ndim() != 2 {
        return Err(ModelError::Dimension(format!(
            "expected [B, L] input, got {:?}",
            x.shape()
        )));
    }
    if !x.all_finite() {
        return Err(NumError::NonFinite {
            op: "normalize_instance",
        }
        .into());
    }
    let (b, l) = (x.shape()[0], x.shape()[1]);
    let mut normalized = Vec::with_capacity(b * l);
    let mut mean = Vec::with_capacity(b);
    let mut std = Vec::with_capacity(b);
    for row in x.data().chunks(l.max(1)).take(b) {
        let r: Vec<f64> = row.iter().map(|v| v.to_f64()).collect();
        let mu = r.iter().sum::<f64>() / l as f64;
        let var = r.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / l as f64;
        let scale = (var + eps).sqrt();
        normalized.extend(r.iter().map(|v| T::from_f64((v - mu) / scale)));
        mean.push(T::from_f64(mu));
        std.push(T::from_f64(var.sqrt()));
    }
    Ok(InstanceNorm {
        normalized: Tensor::new(vec![b, l], normalized)?,
        mean: Tensor::new(vec![b], mean)?,
        std: Tensor::new(vec![b], std)?,
        eps,
    })
}

/// `[sin, cos]` of hour-of-day followed by `[sin, cos]` of day-of-week.
pub fn calendar_features(s: CalendarStamp) -> [f64; 4] {
    let h = 2.0 * PI * s.hour as f64 / 24.0;
    let d = 2.0 * PI * s.dow as f64 / 7.0;
    [h.sin(), h.cos(), d.sin(), d.cos()]
}

/// The network: parameters in a fixed order plus the layout that indexes them.
#[derive(Debug, Clone, PartialEq)]
pub struct PrismModel<T> {
    config: PrismConfig,
    pub(crate) layout: Layout,
    params: Vec<Param<T>>,
}

/// Tape handles for every parameter of a model, in storage order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn at(&self, i: usize) -> Var {
        self.vars[i]
    }
}

/// Knobs for a single forward pass.
#[derive(Debug, Default)]
pub struct ForwardOptions<'a> {
    /// Enables dropout at the configured rate, drawing masks from this stream.
    pub dropout: Option<&'a mut ChaCha8Rng>,
    /// Replaces every layer's mixing weights with a one-hot on this primitive.
    pub alpha_override: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct PrimitiveTrace {
    /// `[B, K]`
    pub alpha: Var,
    /// `[B, K]` mean pre-softmax logits.
    pub logits: Var,
    /// `[B, N_H, K, N_p]`
    pub local_attention: Var,
    /// `[B, K, D]`
    pub features: Var,
    /// Scalar mean pairwise cosine similarity of `features`.
    pub diversity: Var,
}

/// Energy of the filtered spectrum on each side of the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BandEnergy {
    pub low: f64,
    pub high: f64,
}

impl BandEnergy {
    pub fn low_fraction(&self) -> f64 {
        let t = self.low + self.high;
        if t > 0.0 {
            self.low / t
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralTrace {
    /// `[B, N_p, D]` gate values in (0, 1).
    pub gate: Var,
    /// Low band after its linear map, before gating.
    pub low: Var,
    pub high: Var,
    pub energy: BandEnergy,
}

#[derive(Debug, Clone, Copy)]
pub struct LayerTrace {
    /// `[B, N_H, N_p, N_p]`
    pub self_attention: Var,
    pub primitive: Option<PrimitiveTrace>,
    pub spectral: Option<SpectralTrace>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    /// `[B, H]` in raw units.
    pub prediction: Var,
    /// `[B, H]` before denormalization.
    pub normalized: Var,
    /// `[B, N_p, D]` encoder output.
    pub encoded: Var,
    pub norm: InstanceNorm<T>,
    pub layers: Vec<LayerTrace>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Per-layer diversity losses, empty when primitives are disabled.
    pub fn diversity_losses(&self) -> Vec<Var> {
        self.layers
            .iter()
            .filter_map(|l| l.primitive.map(|p| p.diversity))
            .collect()
    }

    pub fn diagnostics(&self, tape: &Tape<T>) -> EncoderDiagnostics<T> {
        EncoderDiagnostics {
            layers: self
                .layers
                .iter()
                .map(|l| LayerDiagnostics {
                    alpha: l.primitive.map(|p| tape.value(p.alpha).clone()),
                    logits: l.primitive.map(|p| tape.value(p.logits).clone()),
                    primitive_features: l.primitive.map(|p| tape.value(p.features).clone()),
                    diversity: l.primitive.map(|p| tape.value(p.diversity).item().to_f64()),
                    mean_gate: l.spectral.map(|s| {
                        let g = tape.value(s.gate);
                        g.data().iter().map(|v| v.to_f64()).sum::<f64>() / g.len().max(1) as f64
                    }),
                    band_energy: l.spectral.map(|s| s.energy),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDiagnostics<T> {
    /// `[B, K]` mixing weights over primitives.
    pub alpha: Option<Tensor<T>>,
    pub logits: Option<Tensor<T>>,
    /// `[B, K, D]`
    pub primitive_features: Option<Tensor<T>>,
    pub diversity: Option<f64>,
    pub mean_gate: Option<f64>,
    pub band_energy: Option<BandEnergy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderDiagnostics<T> {
    pub layers: Vec<LayerDiagnostics<T>>,
}

fn shape3(tape: &Tape<impl Scalar>, x: Var) -> Result<[usize; 3]> {
    match *tape.shape(x) {
        [a, b, c] => Ok([a, b, c]),
        ref s => Err(ModelError::Dimension(format!("expected a rank-3 tensor, got {s:?}"))),
    }
}

impl<T: Scalar> PrismModel<T> {
    pub fn new(config: PrismConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, params) = params::init_params(&config, seed);
        Ok(Self { config, layout, params })
    }

    /// Rebuilds a model from stored values, checking names and shapes.
    pub fn from_params(config: PrismConfig, values: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = params::param_shapes(&config);
        if shapes.len() != values.len() {
            return Err(ModelError::Dimension(format!(
                "config expects {} parameters, got {}",
                shapes.len(),
                values.len()
            )));
        }
        let mut params = Vec::with_capacity(values.len());
        for ((name, shape), value) in shapes.into_iter().zip(values) {
            if value.shape() != shape.as_slice() {
                return Err(ModelError::Dimension(format!(
                    "parameter {name}: expected shape {shape:?}, got {:?}",
                    value.shape()
                )));
            }
            params.push(Param { name, value });
        }
        Ok(Self {
            layout: params::layout(&config),
            config,
            params,
        })
    }

    pub fn config(&self) -> &PrismConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> PrismModel<U> {
        PrismModel {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
        }
    }

    /// Places every parameter on the tape, as differentiable leaves when
    /// `trainable` is set.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        Bound {
            vars: self
                .params
                .iter()
                .map(|p| tape.leaf(p.value.clone(), trainable))
                .collect(),
        }
    }

    fn dense(&self, tape: &mut Tape<T>, p: &Bound, d: Dense, x: Var) -> Result<Var> {
        Ok(tape.linear(x, p.at(d.w), d.b.map(|b| p.at(b)))?)
    }

    fn norm(&self, tape: &mut Tape<T>, p: &Bound, n: Norm, x: Var) -> Result<Var> {
        let eps = T::from_f64(self.config.eps);
        Ok(tape.layer_norm(x, p.at(n.gain), p.at(n.bias), eps)?)
    }

    fn dropout(&self, tape: &mut Tape<T>, x: Var, opts: &mut ForwardOptions) -> Result<Var> {
        let rate = self.config.dropout;
        let Some(rng) = opts.dropout.as_deref_mut() else {
            return Ok(x);
        };
        if rate <= 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - rate));
        let shape = tape.shape(x).to_vec();
        let n = tape.value(x).len();
        let mask: Vec<T> = (0..n)
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let m = tape.constant(Tensor::new(shape, mask)?);
        Ok(tape.mul(x, m)?)
    }

    fn split_heads(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let [b, n, _] = shape3(tape, x)?;
        let (h, dk) = (self.config.n_heads, self.config.head_dim());
        let r = tape.reshape(x, &[b, n, h, dk])?;
        Ok(tape.permute(r, &[0, 2, 1, 3])?)
    }

    fn merge_heads(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        let p = tape.permute(x, &[0, 2, 1, 3])?;
        Ok(tape.reshape(p, &[s[0], s[2], s[1] * s[3]])?)
    }

    fn check_input(&self, x: &Tensor<T>, stamps: &[CalendarStamp]) -> Result<usize> {
        let l = self.config.lookback;
        if x.ndim() != 2 || x.shape()[1] != l || x.shape()[0] == 0 {
            return Err(ModelError::Dimension(format!(
                "expected input [B, {l}] with B >= 1, got {:?}",
                x.shape()
            )));
        }
        let b = x.shape()[0];
        if !stamps.len().is_multiple_of(b) || stamps.len() / b < l {
            return Err(ModelError::Dimension(format!(
                "{} calendar stamps do not cover {b} windows of length {l}",
                stamps.len()
            )));
        }
        Ok(stamps.len() / b)
    }

    /// Patch tokens plus calendar embedding: `[B, L] -> [B, N_p, D]`.
    ///
    /// `stamps` holds a whole number of per-window runs of at least `L`
    /// stamps each; only the first `L` of each run are read.
    pub fn embed(&self, tape: &mut Tape<T>, p: &Bound, xn: &Tensor<T>, stamps: &[CalendarStamp]) -> Result<Var> {
        let stride = self.check_input(xn, stamps)?;
        let b = xn.shape()[0];
        let (pl, ps) = self.config.effective_patch();
        let np = self.config.n_patches();
        let mut feats = Vec::with_capacity(b * np * 4);
        for w in 0..b {
            for j in 0..np {
                let f = calendar_features(stamps[w * stride + j * ps + pl - 1]);
                feats.extend(f.iter().map(|&v| T::from_f64(v)));
            }
        }
        let x = tape.constant(xn.clone());
        let patches = tape.unfold(x, pl, ps)?;
        let tokens = tape.matmul(patches, p.at(self.layout.patch))?;
        let tf = tape.constant(Tensor::new(vec![b, np, 4], feats)?);
        let te = self.dense(tape, p, self.layout.time, tf)?;
        Ok(tape.add(tokens, te)?)
    }

    /// Post-norm multi-head self-attention. Returns the block output and the
    /// attention weights `[B, N_H, N_p, N_p]`.
    pub fn mha_block(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        layer: usize,
        x: Var,
        opts: &mut ForwardOptions,
    ) -> Result<(Var, Var)> {
        let a = &self.layout.layers[layer].attn;
        let scale = T::from_f64(1.0 / (self.config.head_dim() as f64).sqrt());
        let q = self.dense(tape, p, a.q, x)?;
        let q = self.split_heads(tape, q)?;
        let k = self.dense(tape, p, a.k, x)?;
        let k = self.split_heads(tape, k)?;
        let v = self.dense(tape, p, a.v, x)?;
        let v = self.split_heads(tape, v)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax(scores, 3)?;
        let dropped = self.dropout(tape, attn, opts)?;
        let ctx = tape.matmul(dropped, v)?;
        let ctx = self.merge_heads(tape, ctx)?;
        let out = self.dense(tape, p, a.o, ctx)?;
        let res = tape.add(x, out)?;
        Ok((self.norm(tape, p, a.norm, res)?, attn))
    }

    /// Dictionary attention and recipe-weighted aggregation.
    pub fn primitive_decompose(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        layer: usize,
        x: Var,
        alpha_override: Option<usize>,
    ) -> Result<(Var, PrimitiveTrace)> {
        let pl = self.layout.layers[layer]
            .prim
            .as_ref()
            .ok_or_else(|| ModelError::Config("primitive decomposition is disabled".into()))?;
        let [b, _, d] = shape3(tape, x)?;
        let (h, dk, kk) = (self.config.n_heads, self.config.head_dim(), self.config.n_primitives);
        let keys = tape.matmul(x, p.at(pl.key))?;
        let keys = self.split_heads(tape, keys)?;
        let vals = tape.matmul(x, p.at(pl.value))?;
        let vals = self.split_heads(tape, vals)?;
        let q = tape.reshape(p.at(pl.dict), &[kk, h, dk])?;
        let q = tape.permute(q, &[1, 0, 2])?;
        let kt = tape.transpose(keys)?;
        let logits = tape.matmul(q, kt)?;
        let logits = tape.scale(logits, T::from_f64(1.0 / (dk as f64).sqrt()));
        let local = tape.softmax(logits, 3)?;
        let feats = tape.matmul(local, vals)?;
        let feats = self.merge_heads(tape, feats)?;
        let over_pos = tape.mean_axis(logits, 3)?;
        let sbar = tape.mean_axis(over_pos, 1)?;
        let alpha = tape.softmax(sbar, 1)?;
        let mix = match alpha_override {
            Some(k) if k < kk => {
                let mut onehot = vec![T::zero(); b * kk];
                (0..b).for_each(|i| onehot[i * kk + k] = T::one());
                tape.constant(Tensor::new(vec![b, kk], onehot)?)
            }
            Some(k) => {
                return Err(ModelError::Config(format!("primitive {k} out of range for K={kk}")));
            }
            None => alpha,
        };
        let mix = tape.reshape(mix, &[b, 1, kk])?;
        let agg = tape.matmul(mix, feats)?;
        let proj = tape.matmul(agg, p.at(pl.out))?;
        debug_assert_eq!(tape.shape(proj), &[b, 1, d]);
        let res = tape.add(x, proj)?;
        let y = self.norm(tape, p, pl.norm, res)?;
        let diversity = diversity_loss(tape, feats)?;
        Ok((
            y,
            PrimitiveTrace {
                alpha,
                logits: sbar,
                local_attention: local,
                features: feats,
                diversity,
            },
        ))
    }

    /// Frequency filter, band split at the cutoff, and gated fusion.
    pub fn spectral_refine(&self, tape: &mut Tape<T>, p: &Bound, layer: usize, x: Var) -> Result<(Var, SpectralTrace)> {
        let sl = self.layout.layers[layer]
            .spec
            .as_ref()
            .ok_or_else(|| ModelError::Config("spectral refinement is disabled".into()))?;
        let [_, n, _] = shape3(tape, x)?;
        if n < 2 {
            return Err(ModelError::Config(format!(
                "spectral refinement needs at least 2 patches, got {n}"
            )));
        }
        let f = rfft_bins(n);
        let c = self.config.cutoff().min(f);
        let (re, im) = tape.rfft(x, 1)?;
        let (wr, wi) = (p.at(sl.filter_re), p.at(sl.filter_im));
        let a = tape.mul(re, wr)?;
        let b = tape.mul(im, wi)?;
        let fr = tape.sub(a, b)?;
        let a = tape.mul(re, wi)?;
        let b = tape.mul(im, wr)?;
        let fi = tape.add(a, b)?;
        let energy = band_energy(tape.value(fr), tape.value(fi), n, c);

        let low_mask: Vec<T> = (0..f).map(|k| if k < c { T::one() } else { T::zero() }).collect();
        let high_mask: Vec<T> = low_mask.iter().map(|&m| T::one() - m).collect();
        let ml = tape.constant(Tensor::new(vec![f, 1], low_mask)?);
        let mh = tape.constant(Tensor::new(vec![f, 1], high_mask)?);
        let band = |tape: &mut Tape<T>, m: Var, w: usize| -> Result<Var> {
            let r = tape.mul(fr, m)?;
            let i = tape.mul(fi, m)?;
            let t = tape.irfft(r, i, n, 1)?;
            Ok(tape.matmul(t, p.at(w))?)
        };
        let low = band(tape, ml, sl.low)?;
        let high = band(tape, mh, sl.high)?;
        let cat = tape.concat_last(&[low, high])?;
        let pre = self.dense(tape, p, sl.gate, cat)?;
        let gate = tape.sigmoid(pre);
        let diff = tape.sub(low, high)?;
        let gd = tape.mul(gate, diff)?;
        let fused = tape.add(high, gd)?;
        let res = tape.add(x, fused)?;
        let y = self.norm(tape, p, sl.norm, res)?;
        Ok((
            y,
            SpectralTrace {
                gate,
                low,
                high,
                energy,
            },
        ))
    }

    /// Position-wise GELU MLP of width `4D` with a post-norm residual.
    pub fn ffn_block(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        layer: usize,
        x: Var,
        opts: &mut ForwardOptions,
    ) -> Result<Var> {
        let fl = &self.layout.layers[layer].ffn;
        let up = self.dense(tape, p, fl.up, x)?;
        let act = tape.gelu(up);
        let act = self.dropout(tape, act, opts)?;
        let down = self.dense(tape, p, fl.down, act)?;
        let res = tape.add(x, down)?;
        self.norm(tape, p, fl.norm, res)
    }

    /// Mean pooling over patches, MLP, denormalization. Returns
    /// `(prediction, normalized prediction)`.
    pub fn predict_head(&self, tape: &mut Tape<T>, p: &Bound, x: Var, norm: &InstanceNorm<T>) -> Result<(Var, Var)> {
        let [b, _, _] = shape3(tape, x)?;
        if norm.mean.len() != b {
            return Err(ModelError::Dimension(format!(
                "normalization has {} rows but the batch has {b}",
                norm.mean.len()
            )));
        }
        let pooled = tape.mean_axis_sorted(x, 1)?;
        let hid = self.dense(tape, p, self.layout.head_hidden, pooled)?;
        let hid = tape.gelu(hid);
        let out = self.dense(tape, p, self.layout.head_out, hid)?;
        let scale: Vec<T> = norm.scale().into_iter().map(T::from_f64).collect();
        let s = tape.constant(Tensor::new(vec![b, 1], scale)?);
        let mu = tape.constant(norm.mean.reshape(&[b, 1])?);
        let scaled = tape.mul(out, s)?;
        Ok((tape.add(scaled, mu)?, out))
    }

    /// Full pass on an existing tape with bound parameters.
    pub fn forward_on(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: &Tensor<T>,
        stamps: &[CalendarStamp],
        opts: &mut ForwardOptions,
    ) -> Result<ForwardTrace<T>> {
        self.check_input(x, stamps)?;
        let norm = normalize_instance(x, self.config.eps)?;
        let mut h = self.embed(tape, p, &norm.normalized, stamps)?;
        let mut layers = Vec::with_capacity(self.config.n_layers);
        for l in 0..self.config.n_layers {
            let (h1, self_attention) = self.mha_block(tape, p, l, h, opts)?;
            let (h2, primitive) = if self.config.use_primitive {
                let (y, t) = self.primitive_decompose(tape, p, l, h1, opts.alpha_override)?;
                (y, Some(t))
            } else {
                (h1, None)
            };
            let (h3, spectral) = if self.config.use_spectral {
                let (y, t) = self.spectral_refine(tape, p, l, h2)?;
                (y, Some(t))
            } else {
                (h2, None)
            };
            h = self.ffn_block(tape, p, l, h3, opts)?;
            layers.push(LayerTrace {
                self_attention,
                primitive,
                spectral,
            });
        }
        let (prediction, normalized) = self.predict_head(tape, p, h, &norm)?;
        Ok(ForwardTrace {
            prediction,
            normalized,
            encoded: h,
            norm,
            layers,
        })
    }

    /// Inference without dropout or gradients.
    pub fn forward(&self, x: &Tensor<T>, stamps: &[CalendarStamp]) -> Result<(Tensor<T>, EncoderDiagnostics<T>)> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let tr = self.forward_on(&mut tape, &p, x, stamps, &mut ForwardOptions::default())?;
        Ok((tape.value(tr.prediction).clone(), tr.diagnostics(&tape)))
    }

    pub fn predict(&self, x: &Tensor<T>, stamps: &[CalendarStamp]) -> Result<Tensor<T>> {
        Ok(self.forward(x, stamps)?.0)
    }

    /// Forward FLOP count for a batch, as tallied by the tape.
    pub fn forward_flops(&self, x: &Tensor<T>, stamps: &[CalendarStamp]) -> Result<u64> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        self.forward_on(&mut tape, &p, x, stamps, &mut ForwardOptions::default())?;
        Ok(tape.flops())
    }
}

/// Mean pairwise cosine similarity among the `K` primitive features of each
/// window; lower means more diverse.
pub fn diversity_loss<T: Scalar>(tape: &mut Tape<T>, features: Var) -> Result<Var> {
    Ok(tape.pairwise_cosine(features)?)
}

/// One-sided spectrum energy, with bins other than DC and Nyquist counted twice.
fn band_energy<T: Scalar>(re: &Tensor<T>, im: &Tensor<T>, n: usize, c: usize) -> BandEnergy {
    let s = re.shape();
    let (b, f, d) = (s[0], s[1], s[2]);
    let mut e = BandEnergy { low: 0.0, high: 0.0 };
    for i in 0..b {
        for k in 0..f {
            let w = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                1.0
            } else {
                2.0
            };
            let base = (i * f + k) * d;
            let p: f64 = (0..d)
                .map(|j| {
                    let (r, m) = (re.data()[base + j].to_f64(), im.data()[base + j].to_f64());
                    r * r + m * m
                })
                .sum();
            if k < c {
                e.low += w * p;
            } else {
                e.high += w * p;
            }
        }
    }
    e
}
