//! CSV and JSON file formats for traces, series and generator configs.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};

use super::{DemandSeries, Priority, Result, SynthConfig, TraceError, TraceRecord, HOUR};

pub const TRACE_HEADER: [&str; 7] = [
    "job_id",
    "submit_time",
    "start_time",
    "end_time",
    "gpu_request",
    "priority",
    "org",
];

fn format_err(path: &Path, msg: impl Into<String>) -> TraceError {
    TraceError::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Parses unix seconds (integer or decimal) or an ISO-8601 UTC instant.
pub fn parse_time(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then(|| v.floor() as i64);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

pub fn format_time(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path)?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

pub fn read_traces(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| format_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != TRACE_HEADER {
        return Err(format_err(
            path,
            format!("expected header {}, found {}", TRACE_HEADER.join(","), header.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| format_err(path, format!("line {line}: {e}")))?;
        let time = |col: usize| {
            parse_time(&row[col]).ok_or_else(|| format_err(path, format!("line {line}: bad time {:?}", &row[col])))
        };
        let rec = TraceRecord {
            job_id: row[0].to_string(),
            submit_time: time(1)?,
            start_time: time(2)?,
            end_time: time(3)?,
            gpu_request: row[4]
                .parse()
                .map_err(|_| format_err(path, format!("line {line}: bad gpu_request {:?}", &row[4])))?,
            priority: row[5]
                .parse::<Priority>()
                .map_err(|e| format_err(path, format!("line {line}: {e}")))?,
            org: row[6].to_string(),
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_traces(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let io = |e: csv::Error| format_err(path, e.to_string());
    w.write_record(TRACE_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.job_id.clone(),
            r.submit_time.to_string(),
            r.start_time.to_string(),
            r.end_time.to_string(),
            r.gpu_request.to_string(),
            r.priority.to_string(),
            r.org.clone(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `timestamp,value[,series_key]`. Rows are grouped by key in order of
/// first appearance; each group must be evenly spaced.
pub fn read_series(path: &Path) -> Result<Vec<DemandSeries>> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| format_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let keyed = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["timestamp", "value"] => false,
        ["timestamp", "value", "series_key"] => true,
        _ => {
            return Err(format_err(
                path,
                format!(
                    "expected header timestamp,value[,series_key], found {}",
                    header.join(",")
                ),
            ))
        }
    };
    type Group = (Option<String>, Vec<(i64, f64)>);
    let mut groups: Vec<Group> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| format_err(path, format!("line {line}: {e}")))?;
        let ts =
            parse_time(&row[0]).ok_or_else(|| format_err(path, format!("line {line}: bad timestamp {:?}", &row[0])))?;
        let v: f64 = row[1]
            .parse()
            .map_err(|_| format_err(path, format!("line {line}: bad value {:?}", &row[1])))?;
        let key = keyed.then(|| row[2].to_string()).filter(|k| !k.is_empty());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, pts)) => pts.push((ts, v)),
            None => groups.push((key, vec![(ts, v)])),
        }
    }
    if groups.is_empty() {
        return Err(TraceError::EmptySeries(None));
    }
    groups
        .into_iter()
        .map(|(key, mut pts)| {
            pts.sort_by_key(|p| p.0);
            let width = if pts.len() > 1 { pts[1].0 - pts[0].0 } else { HOUR };
            if let Some(w) = pts.windows(2).find(|w| w[1].0 - w[0].0 != width) {
                return Err(format_err(
                    path,
                    format!("uneven spacing at {} in series {:?}", format_time(w[1].0), key),
                ));
            }
            let series = DemandSeries {
                bucket_width: width,
                start: pts[0].0,
                values: pts.iter().map(|p| p.1).collect(),
                series_key: key,
            };
            series.validate().map_err(|e| format_err(path, e.to_string()))?;
            Ok(series)
        })
        .collect()
}

pub fn write_series(path: &Path, series: &[DemandSeries]) -> Result<()> {
    let keyed = series.len() > 1 || series.iter().any(|s| s.series_key.is_some());
    let mut out = String::new();
    out.push_str(if keyed {
        "timestamp,value,series_key\n"
    } else {
        "timestamp,value\n"
    });
    for s in series {
        for (i, v) in s.values.iter().enumerate() {
            out.push_str(&format_time(s.timestamp(i)));
            out.push(',');
            out.push_str(&v.to_string());
            if keyed {
                out.push(',');
                out.push_str(s.series_key.as_deref().unwrap_or(""));
            }
            out.push('\n');
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Loads a generator config; missing keys take their defaults.
pub fn read_synth_config(path: &Path) -> Result<SynthConfig> {
    let text = fs::read_to_string(path)?;
    parse_synth_config(&text).map_err(|e| match e {
        TraceError::Format { msg, .. } => format_err(path, msg),
        other => other,
    })
}

pub fn parse_synth_config(text: &str) -> Result<SynthConfig> {
    let cfg: SynthConfig = serde_json::from_str(text).map_err(|e| TraceError::Format {
        path: "<config>".into(),
        msg: format!("invalid JSON at line {} column {}: {e}", e.line(), e.column()),
    })?;
    cfg.validate()?;
    Ok(cfg)
}
