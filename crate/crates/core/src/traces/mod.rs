//! Job traces, aggregated demand series, synthetic workloads and windowing.

mod aggregate;
pub mod io;
mod stats;
mod synth;
mod window;

pub use aggregate::aggregate;
pub use stats::{stats, SeriesStats};
pub use synth::{synthesize, synthesize_components, SynthConfig, TenantArchetype, DEFAULT_START};
pub use window::{make_windows, CalendarStamp, SplitFractions, WindowBatch, WindowSplits};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("no records left after filtering{}", .0.as_ref().map(|k| format!(" by {k}")).unwrap_or_default())]
    EmptySeries(Option<String>),
    #[error("invalid record {job_id}: {reason}")]
    InvalidRecord { job_id: String, reason: String },
    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("peak/trough ratio undefined for an all-zero series")]
    UndefinedRatio,
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TraceError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Priority {
    #[serde(rename = "HP")]
    Hp,
    Spot,
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Priority::Hp => "HP",
            Priority::Spot => "Spot",
        })
    }
}

impl FromStr for Priority {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hp" | "high" | "high-priority" => Ok(Priority::Hp),
            "spot" | "low" => Ok(Priority::Spot),
            other => Err(format!("unknown priority {other:?} (expected HP or Spot)")),
        }
    }
}

/// One job lifecycle row. Times are unix seconds, UTC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub job_id: String,
    pub submit_time: i64,
    pub start_time: i64,
    pub end_time: i64,
    /// Fractional requests are allowed.
    pub gpu_request: f64,
    pub priority: Priority,
    pub org: String,
}

impl TraceRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| TraceError::InvalidRecord {
            job_id: self.job_id.clone(),
            reason,
        };
        if self.end_time < self.start_time {
            return Err(bad(format!(
                "end_time {} precedes start_time {}",
                self.end_time, self.start_time
            )));
        }
        if !(self.gpu_request.is_finite() && self.gpu_request >= 0.0) {
            return Err(bad(format!("gpu_request {} must be finite and >= 0", self.gpu_request)));
        }
        Ok(())
    }
}

/// Selects a sub-population of records; unset fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesFilter {
    pub priority: Option<Priority>,
    pub org: Option<String>,
}

impl SeriesFilter {
    pub fn matches(&self, r: &TraceRecord) -> bool {
        self.priority.is_none_or(|p| p == r.priority) && self.org.as_ref().is_none_or(|o| *o == r.org)
    }

    pub fn is_empty(&self) -> bool {
        self.priority.is_none() && self.org.is_none()
    }

    /// Stable textual key, e.g. `priority=HP;org=vision`.
    pub fn key(&self) -> String {
        let mut parts = Vec::new();
        if let Some(p) = self.priority {
            parts.push(format!("priority={p}"));
        }
        if let Some(o) = &self.org {
            parts.push(format!("org={o}"));
        }
        parts.join(";")
    }
}

/// Aggregated demand, one value per bucket starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSeries {
    /// Bucket width in seconds.
    pub bucket_width: i64,
    /// Unix seconds of the first bucket.
    pub start: i64,
    pub values: Vec<f64>,
    pub series_key: Option<String>,
}

pub const HOUR: i64 = 3600;

impl DemandSeries {
    pub fn new(bucket_width: i64, start: i64, values: Vec<f64>) -> Result<Self> {
        let s = Self {
            bucket_width,
            start,
            values,
            series_key: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_key(mut self, key: impl Into<String>) -> Self {
        self.series_key = Some(key.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.bucket_width <= 0 {
            return Err(TraceError::Config(format!(
                "bucket width must be positive, got {}",
                self.bucket_width
            )));
        }
        if let Some((i, v)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(TraceError::Config(format!(
                "value {v} at index {i} must be finite and >= 0"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> i64 {
        self.start + i as i64 * self.bucket_width
    }

    pub fn bucket_hours(&self) -> f64 {
        self.bucket_width as f64 / HOUR as f64
    }

    pub fn slice(&self, from: usize, to: usize) -> DemandSeries {
        DemandSeries {
            bucket_width: self.bucket_width,
            start: self.timestamp(from),
            values: self.values[from..to].to_vec(),
            series_key: self.series_key.clone(),
        }
    }
}
