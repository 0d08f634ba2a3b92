use serde::{Deserialize, Serialize};

use super::{ModelError, Result};
use crate::numcore::fft::rfft_bins;

/// Architecture hyperparameters and ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrismConfig {
    /// History length L.
    pub lookback: usize,
    /// Forecast horizon H.
    pub horizon: usize,
    /// Patch length P.
    pub patch_len: usize,
    /// Patch stride S.
    pub patch_stride: usize,
    /// Model width D.
    pub d_model: usize,
    /// Encoder layers N.
    pub n_layers: usize,
    /// Attention heads.
    pub n_heads: usize,
    /// Dictionary size K.
    pub n_primitives: usize,
    /// Low/high split bin. `None` picks `max(1, ceil(F/4))`.
    pub cutoff_bins: Option<usize>,
    pub eps: f64,
    pub dropout: f64,
    pub use_patch: bool,
    pub use_primitive: bool,
    pub use_spectral: bool,
}

impl Default for PrismConfig {
    fn default() -> Self {
        Self {
            lookback: 96,
            horizon: 24,
            patch_len: 16,
            patch_stride: 8,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            n_primitives: 8,
            cutoff_bins: None,
            eps: 1e-5,
            dropout: 0.1,
            use_patch: true,
            use_primitive: true,
            use_spectral: true,
        }
    }
}

impl PrismConfig {
    /// `(P, S)` actually used; pointwise tokens when patching is disabled.
    pub fn effective_patch(&self) -> (usize, usize) {
        if self.use_patch {
            (self.patch_len, self.patch_stride)
        } else {
            (1, 1)
        }
    }

    pub fn n_patches(&self) -> usize {
        let (p, s) = self.effective_patch();
        (self.lookback - p) / s + 1
    }

    pub fn n_bins(&self) -> usize {
        rfft_bins(self.n_patches())
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff_bins.unwrap_or_else(|| self.n_bins().div_ceil(4).max(1))
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.d_model
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        let (p, s) = self.effective_patch();
        if self.lookback == 0 || self.horizon == 0 || p == 0 || s == 0 {
            return bad("lookback, horizon, patch length and stride must be >= 1".into());
        }
        if p > self.lookback {
            return bad(format!("patch length {p} exceeds lookback {}", self.lookback));
        }
        if !(self.lookback - p).is_multiple_of(s) {
            return bad(format!(
                "patches of length {p} with stride {s} do not tile lookback {}",
                self.lookback
            ));
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_layers == 0 {
            return bad("at least one encoder layer is required".into());
        }
        if self.use_primitive && self.n_primitives < 2 {
            return bad(format!(
                "n_primitives must be >= 2 for the diversity objective, got {}",
                self.n_primitives
            ));
        }
        if self.use_spectral {
            let np = self.n_patches();
            if np < 2 {
                return bad(format!("spectral refinement needs at least 2 patches, got {np}"));
            }
            let c = self.cutoff();
            if c < 1 || c >= self.n_bins() {
                return bad(format!("cutoff {c} must lie in [1, {})", self.n_bins()));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must be in [0, 1)", self.dropout));
        }
        if !(self.eps > 0.0) {
            return bad("eps must be > 0".into());
        }
        Ok(())
    }
}

/// The six ablation rows: which components are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Variant {
    Full,
    NoPatch,
    NoPrimitive,
    NoSpectral,
    NoPrimSpec,
    Baseline,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoPatch,
        Variant::NoPrimitive,
        Variant::NoSpectral,
        Variant::NoPrimSpec,
        Variant::Baseline,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "PRISM",
            Variant::NoPatch => "w/o-patch",
            Variant::NoPrimitive => "w/o-primitive",
            Variant::NoSpectral => "w/o-spectral",
            Variant::NoPrimSpec => "w/o-prim-spec",
            Variant::Baseline => "Baseline",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.label().eq_ignore_ascii_case(s))
    }

    /// `(use_patch, use_primitive, use_spectral)`
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Variant::Full => (true, true, true),
            Variant::NoPatch => (false, true, true),
            Variant::NoPrimitive => (true, false, true),
            Variant::NoSpectral => (true, true, false),
            Variant::NoPrimSpec => (true, false, false),
            Variant::Baseline => (false, false, false),
        }
    }

    pub fn apply(self, base: &PrismConfig) -> PrismConfig {
        let (use_patch, use_primitive, use_spectral) = self.flags();
        PrismConfig {
            use_patch,
            use_primitive,
            use_spectral,
            ..base.clone()
        }
    }
}
