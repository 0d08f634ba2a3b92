//! Synthetic multi-tenant GPU demand.
//!
//! Demand at bucket `t` is
//! `sum_k base_k * diurnal_k(hour) * weekly(dow) + bursts(t) + noise(t)`,
//! clipped at zero. Each tenant has a single daily activity bump centred on
//! its peak hour; bursts arrive as a Poisson process with Pareto-tailed
//! magnitudes and exponential decay.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Pareto};
use serde::{Deserialize, Serialize};

use super::{DemandSeries, Result, TraceError, HOUR};

/// Monday 2024-04-01 00:00:00 UTC.
pub const DEFAULT_START: i64 = 1_711_929_600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TenantArchetype {
    pub name: String,
    /// Demand at the top of the daily bump, in GPUs.
    pub base: f64,
    /// Hour of day (0-24) where activity peaks.
    pub peak_hour: f64,
    /// Concentration of the daily bump; larger is narrower.
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
    /// Fraction of `base` kept at the quietest hour.
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_sharpness() -> f64 {
    1.2
}

fn default_floor() -> f64 {
    0.03
}

impl TenantArchetype {
    pub fn new(name: impl Into<String>, base: f64, peak_hour: f64) -> Self {
        Self {
            name: name.into(),
            base,
            peak_hour,
            sharpness: default_sharpness(),
            floor: default_floor(),
        }
    }

    /// Daily activity multiplier in `[floor, 1]`.
    pub fn diurnal(&self, hour: f64) -> f64 {
        let phase = 2.0 * PI * (hour - self.peak_hour) / 24.0;
        let bump = (self.sharpness * (phase.cos() - 1.0)).exp();
        self.floor + (1.0 - self.floor) * bump
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Used only when `tenants` is empty: that many default archetypes.
    pub n_tenants: usize,
    pub tenants: Vec<TenantArchetype>,
    /// Day-of-week multipliers, Monday first.
    pub weekly_profile: [f64; 7],
    /// Burst arrivals per day.
    pub burst_rate: f64,
    /// Pareto shape of burst magnitudes.
    pub burst_tail: f64,
    /// Minimum burst magnitude as a fraction of mean deterministic demand.
    pub burst_scale: f64,
    /// Bursts larger than `burst_cap * burst_scale` are clipped.
    pub burst_cap: f64,
    /// e-folding time of a burst, hours.
    pub burst_decay_hours: f64,
    /// Gaussian noise standard deviation relative to the deterministic level.
    pub noise_level: f64,
    pub horizon_days: u32,
    pub bucket_seconds: i64,
    /// Unix seconds of the first bucket.
    pub start: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_tenants: 3,
            tenants: Vec::new(),
            // Friday dip, weekend rebound
            weekly_profile: [1.0, 1.02, 1.0, 0.96, 0.6, 0.8, 1.1],
            burst_rate: 0.4,
            burst_tail: 1.5,
            burst_scale: 0.25,
            burst_cap: 6.0,
            burst_decay_hours: 3.0,
            noise_level: 0.04,
            horizon_days: 184,
            bucket_seconds: HOUR,
            start: DEFAULT_START,
            seed: 0,
        }
    }
}

/// Default archetypes: morning, afternoon and late-evening batch tenants.
fn default_tenants(n: usize) -> Vec<TenantArchetype> {
    let presets = [
        ("morning", 120.0, 9.0),
        ("afternoon", 100.0, 15.0),
        ("evening", 45.0, 21.0),
    ];
    (0..n)
        .map(|i| match presets.get(i) {
            Some(&(name, base, hour)) => TenantArchetype::new(name, base, hour),
            None => TenantArchetype::new(format!("tenant{i}"), 40.0, (i as f64 * 24.0 / n as f64 + 3.0) % 24.0),
        })
        .collect()
}

impl SynthConfig {
    pub const MIN_HORIZON_DAYS: u32 = 14;

    pub fn resolved_tenants(&self) -> Vec<TenantArchetype> {
        if self.tenants.is_empty() {
            default_tenants(self.n_tenants)
        } else {
            self.tenants.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TraceError::Config(m));
        if self.horizon_days < Self::MIN_HORIZON_DAYS {
            return bad(format!(
                "horizon_days {} below the minimum of {} (two weekly cycles)",
                self.horizon_days,
                Self::MIN_HORIZON_DAYS
            ));
        }
        if self.bucket_seconds <= 0 || 86_400 % self.bucket_seconds != 0 {
            return bad(format!("bucket_seconds {} must divide one day", self.bucket_seconds));
        }
        if self.weekly_profile.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return bad("weekly_profile weights must be > 0".into());
        }
        let rates = [
            ("burst_rate", self.burst_rate),
            ("burst_scale", self.burst_scale),
            ("burst_decay_hours", self.burst_decay_hours),
            ("noise_level", self.noise_level),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !(self.burst_tail > 0.0) || !(self.burst_cap >= 1.0) {
            return bad("burst_tail must be > 0 and burst_cap >= 1".into());
        }
        let tenants = self.resolved_tenants();
        if tenants.is_empty() {
            return bad("at least one tenant is required".into());
        }
        for t in &tenants {
            if !(t.base >= 0.0) || !(0.0..=1.0).contains(&t.floor) || !(t.sharpness >= 0.0) {
                return bad(format!("tenant {} has invalid shape parameters", t.name));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.horizon_days as i64 * 86_400 / self.bucket_seconds) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) fn calendar(ts: i64) -> (f64, usize) {
    let secs = ts.rem_euclid(86_400);
    let hour = secs as f64 / HOUR as f64;
    // 1970-01-01 was a Thursday; Monday = 0
    let dow = ((ts.div_euclid(86_400) + 3).rem_euclid(7)) as usize;
    (hour, dow)
}

/// Per-tenant deterministic series (no bursts, no noise), in tenant order.
pub fn synthesize_components(cfg: &SynthConfig) -> Result<Vec<DemandSeries>> {
    cfg.validate()?;
    let n = cfg.len();
    Ok(cfg
        .resolved_tenants()
        .iter()
        .map(|t| {
            let values = (0..n)
                .map(|i| {
                    let (hour, dow) = calendar(cfg.start + i as i64 * cfg.bucket_seconds);
                    t.base * t.diurnal(hour) * cfg.weekly_profile[dow]
                })
                .collect();
            DemandSeries {
                bucket_width: cfg.bucket_seconds,
                start: cfg.start,
                values,
                series_key: Some(t.name.clone()),
            }
        })
        .collect())
}

/// Generates the aggregate series. Identical configs give identical output.
pub fn synthesize(cfg: &SynthConfig) -> Result<DemandSeries> {
    let components = synthesize_components(cfg)?;
    let n = cfg.len();
    let mut level = vec![0.0; n];
    for c in &components {
        for (l, v) in level.iter_mut().zip(&c.values) {
            *l += v;
        }
    }
    let mean_level = level.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut values = level.clone();

    let bucket_hours = cfg.bucket_seconds as f64 / HOUR as f64;
    if cfg.burst_rate > 0.0 && cfg.burst_scale > 0.0 {
        let per_bucket = cfg.burst_rate * bucket_hours / 24.0;
        let gap = Exp::new(per_bucket).expect("positive rate");
        let size = Pareto::new(1.0, cfg.burst_tail).expect("positive shape");
        let decay = (cfg.burst_decay_hours / bucket_hours).max(1e-9);
        let mut t: f64 = gap.sample(&mut rng);
        while (t as usize) < n {
            let start = t as usize;
            let magnitude = cfg.burst_scale * mean_level * size.sample(&mut rng).min(cfg.burst_cap);
            let span = ((5.0 * decay).ceil() as usize).max(1);
            for (j, v) in values.iter_mut().skip(start).take(span).enumerate() {
                *v += magnitude * (-(j as f64) / decay).exp();
            }
            t += gap.sample(&mut rng);
        }
    }
    if cfg.noise_level > 0.0 {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for (v, &l) in values.iter_mut().zip(&level) {
            let z: f64 = normal.sample(&mut rng);
            *v += cfg.noise_level * l * z;
        }
    }
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    Ok(DemandSeries {
        bucket_width: cfg.bucket_seconds,
        start: cfg.start,
        values,
        series_key: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calendar_of_default_start_is_monday_midnight() {
        assert_eq!(calendar(DEFAULT_START), (0.0, 0));
        assert_eq!(calendar(DEFAULT_START + 4 * 86_400 + 13 * 3600).1, 4);
    }

    #[test]
    fn deterministic_single_tenant_is_weekly_periodic() {
        let cfg = SynthConfig {
            tenants: vec![TenantArchetype::new("solo", 50.0, 11.0)],
            burst_rate: 0.0,
            noise_level: 0.0,
            horizon_days: 28,
            ..Default::default()
        };
        let s = synthesize(&cfg).unwrap();
        assert_eq!(s.len(), 28 * 24);
        for i in 0..s.len() - 168 {
            assert_eq!(s.values[i], s.values[i + 168]);
        }
    }

    #[test]
    fn same_config_same_bytes() {
        let cfg = SynthConfig::default();
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        let bits = |s: &DemandSeries| s.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = synthesize(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn short_horizon_rejected() {
        let cfg = SynthConfig {
            horizon_days: 7,
            ..Default::default()
        };
        assert!(matches!(synthesize(&cfg), Err(TraceError::Config(_))));
    }

    #[test]
    fn phase_offset_tenants_correlate_at_six_hours() {
        let cfg = SynthConfig {
            tenants: vec![
                TenantArchetype::new("morning", 80.0, 9.0),
                TenantArchetype::new("afternoon", 80.0, 15.0),
            ],
            ..Default::default()
        };
        let comps = synthesize_components(&cfg).unwrap();
        let centre = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - m).collect::<Vec<_>>()
        };
        let (a, b) = (centre(&comps[0].values), centre(&comps[1].values));
        // corr(lag) = sum_t a[t] * b[t + lag]
        let best = (-12i64..=12)
            .max_by(|&l1, &l2| {
                let c = |lag: i64| -> f64 {
                    (0..a.len() as i64)
                        .filter(|t| (0..b.len() as i64).contains(&(t + lag)))
                        .map(|t| a[t as usize] * b[(t + lag) as usize])
                        .sum()
                };
                c(l1).total_cmp(&c(l2))
            })
            .unwrap();
        assert_eq!(best, 6);
    }

    #[test]
    fn default_values_non_negative() {
        let s = synthesize(&SynthConfig::default()).unwrap();
        assert_eq!(s.len(), 184 * 24);
        assert!(s.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
