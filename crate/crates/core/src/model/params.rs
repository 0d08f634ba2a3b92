use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::PrismConfig;
use crate::numcore::{Scalar, Tensor};

/// Standard deviation of the primitive dictionary at initialization.
pub const DICT_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Zeros,
    Ones,
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` with fan-in from the first axis.
    FanIn,
    Normal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Norm {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct AttnLayout {
    pub q: Dense,
    pub k: Dense,
    pub v: Dense,
    pub o: Dense,
    pub norm: Norm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct PrimLayout {
    pub dict: usize,
    pub key: usize,
    pub value: usize,
    pub out: usize,
    pub norm: Norm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SpecLayout {
    pub filter_re: usize,
    pub filter_im: usize,
    pub low: usize,
    pub high: usize,
    pub gate: Dense,
    pub norm: Norm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct FfnLayout {
    pub up: Dense,
    pub down: Dense,
    pub norm: Norm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LayerLayout {
    pub attn: AttnLayout,
    pub prim: Option<PrimLayout>,
    pub spec: Option<SpecLayout>,
    pub ffn: FfnLayout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub patch: usize,
    pub time: Dense,
    pub layers: Vec<LayerLayout>,
    pub head_hidden: Dense,
    pub head_out: Dense,
}

#[derive(Default)]
struct Builder {
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push((name, shape, init));
        self.specs.len() - 1
    }

    fn dense(&mut self, prefix: &str, fan_in: usize, fan_out: usize, bias: bool) -> Dense {
        let w = self.add(format!("{prefix}.w"), vec![fan_in, fan_out], Init::FanIn);
        let b = bias.then(|| self.add(format!("{prefix}.b"), vec![fan_out], Init::Zeros));
        Dense { w, b }
    }

    fn matrix(&mut self, name: String, fan_in: usize, fan_out: usize) -> usize {
        self.add(name, vec![fan_in, fan_out], Init::FanIn)
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Norm {
        Norm {
            gain: self.add(format!("{prefix}.gain"), vec![d], Init::Ones),
            bias: self.add(format!("{prefix}.bias"), vec![d], Init::Zeros),
        }
    }
}

fn build(cfg: &PrismConfig) -> (Layout, Builder) {
    let d = cfg.d_model;
    let (p, _) = cfg.effective_patch();
    let mut b = Builder::default();
    let patch = b.matrix("embed.patch.w".into(), p, d);
    let time = b.dense("embed.time", 4, d, true);
    let layers = (0..cfg.n_layers)
        .map(|l| {
            let pre = format!("layers.{l}");
            let attn = AttnLayout {
                q: b.dense(&format!("{pre}.attn.q"), d, d, true),
                k: b.dense(&format!("{pre}.attn.k"), d, d, true),
                v: b.dense(&format!("{pre}.attn.v"), d, d, true),
                o: b.dense(&format!("{pre}.attn.o"), d, d, true),
                norm: b.norm(&format!("{pre}.attn.norm"), d),
            };
            let prim = cfg.use_primitive.then(|| PrimLayout {
                dict: b.add(
                    format!("{pre}.prim.dict"),
                    vec![cfg.n_primitives, d],
                    Init::Normal(DICT_INIT_STD),
                ),
                key: b.matrix(format!("{pre}.prim.key.w"), d, d),
                value: b.matrix(format!("{pre}.prim.value.w"), d, d),
                out: b.matrix(format!("{pre}.prim.out.w"), d, d),
                norm: b.norm(&format!("{pre}.prim.norm"), d),
            });
            let spec = cfg.use_spectral.then(|| {
                let f = cfg.n_bins();
                SpecLayout {
                    filter_re: b.add(format!("{pre}.spec.filter.re"), vec![f, d], Init::Ones),
                    filter_im: b.add(format!("{pre}.spec.filter.im"), vec![f, d], Init::Zeros),
                    low: b.matrix(format!("{pre}.spec.low.w"), d, d),
                    high: b.matrix(format!("{pre}.spec.high.w"), d, d),
                    gate: b.dense(&format!("{pre}.spec.gate"), 2 * d, d, true),
                    norm: b.norm(&format!("{pre}.spec.norm"), d),
                }
            });
            let ffn = FfnLayout {
                up: b.dense(&format!("{pre}.ffn.up"), d, cfg.ffn_dim(), true),
                down: b.dense(&format!("{pre}.ffn.down"), cfg.ffn_dim(), d, true),
                norm: b.norm(&format!("{pre}.ffn.norm"), d),
            };
            LayerLayout { attn, prim, spec, ffn }
        })
        .collect();
    let head_hidden = b.dense("head.hidden", d, d, true);
    let head_out = b.dense("head.out", d, cfg.horizon, true);
    (
        Layout {
            patch,
            time,
            layers,
            head_hidden,
            head_out,
        },
        b,
    )
}

pub(crate) fn layout(cfg: &PrismConfig) -> Layout {
    build(cfg).0
}

/// Names and shapes of every parameter, in storage order.
pub fn param_shapes(cfg: &PrismConfig) -> Vec<(String, Vec<usize>)> {
    build(cfg).1.specs.into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Total number of scalars the model stores for `cfg`.
pub fn param_count(cfg: &PrismConfig) -> usize {
    param_shapes(cfg).iter().map(|(_, s)| s.iter().product::<usize>()).sum()
}

pub(crate) fn init_params<T: Scalar>(cfg: &PrismConfig, seed: u64) -> (Layout, Vec<Param<T>>) {
    let (layout, b) = build(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = b
        .specs
        .into_iter()
        .map(|(name, shape, init)| {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = match init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::FanIn => {
                    let a = 1.0 / (shape[0] as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-a..a)).collect()
                }
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).expect("positive std");
                    (0..n).map(|_| dist.sample(&mut rng)).collect()
                }
            };
            Param {
                name,
                value: Tensor::from_f64(shape, &data).expect("sized"),
            }
        })
        .collect();
    (layout, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let shapes = param_shapes(&PrismConfig::default());
        let mut names: Vec<_> = shapes.iter().map(|(n, _)| n.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), shapes.len());
    }

    #[test]
    fn ablations_drop_parameters() {
        let full = param_count(&PrismConfig::default());
        let base = PrismConfig {
            use_primitive: false,
            use_spectral: false,
            ..Default::default()
        };
        assert!(param_count(&base) < full);
        assert!(param_shapes(&base)
            .iter()
            .all(|(n, _)| !n.contains("prim") && !n.contains("spec")));
    }

    #[test]
    fn dictionary_is_not_symmetric() {
        let cfg = PrismConfig::default();
        let (layout, params) = init_params::<f64>(&cfg, 3);
        let dict = &params[layout.layers[0].prim.as_ref().unwrap().dict].value;
        let d = cfg.d_model;
        let row0 = &dict.data()[..d];
        assert!((1..cfg.n_primitives).all(|k| &dict.data()[k * d..(k + 1) * d] != row0));
        let std = (dict.data().iter().map(|v| v * v).sum::<f64>() / dict.len() as f64).sqrt();
        assert!((std - DICT_INIT_STD).abs() < 0.005, "{std}");
    }
}
