use super::{DemandSeries, Result, SeriesFilter, TraceError, TraceRecord};

/// Time-weighted GPU demand per bucket.
///
/// Bucket `i` covers `[start + i*w, start + (i+1)*w)` where `start` is the
/// earliest job start rounded down to a multiple of `w`. Each record adds
/// `gpu_request * overlap / w` to every bucket its `[start, end)` touches.
pub fn aggregate(records: &[TraceRecord], bucket_width: i64, filter: Option<&SeriesFilter>) -> Result<DemandSeries> {
    if bucket_width <= 0 {
        return Err(TraceError::Config(format!(
            "bucket width must be positive, got {bucket_width}"
        )));
    }
    for r in records {
        r.validate()?;
    }
    let mut selected: Vec<&TraceRecord> = records.iter().filter(|r| filter.is_none_or(|f| f.matches(r))).collect();
    let key = filter.filter(|f| !f.is_empty()).map(SeriesFilter::key);
    if selected.is_empty() {
        return Err(TraceError::EmptySeries(key));
    }
    // canonical order so the float sums do not depend on input order
    selected.sort_by(|a, b| {
        (a.start_time, a.end_time, &a.job_id)
            .cmp(&(b.start_time, b.end_time, &b.job_id))
            .then(a.gpu_request.total_cmp(&b.gpu_request))
    });

    let first = selected.iter().map(|r| r.start_time).min().unwrap();
    let last = selected.iter().map(|r| r.end_time).max().unwrap();
    let start = first.div_euclid(bucket_width) * bucket_width;
    let n = ((last - start + bucket_width - 1).div_euclid(bucket_width)).max(1) as usize;

    let mut values = vec![0.0; n];
    let w = bucket_width as f64;
    for r in selected {
        if r.end_time == r.start_time || r.gpu_request == 0.0 {
            continue;
        }
        let b0 = ((r.start_time - start) / bucket_width) as usize;
        let b1 = ((r.end_time - 1 - start) / bucket_width) as usize;
        for (b, slot) in values.iter_mut().enumerate().take(b1 + 1).skip(b0) {
            let lo = start + b as i64 * bucket_width;
            let hi = lo + bucket_width;
            let overlap = (r.end_time.min(hi) - r.start_time.max(lo)) as f64;
            *slot += r.gpu_request * overlap / w;
        }
    }
    Ok(DemandSeries {
        bucket_width,
        start,
        values,
        series_key: key,
    })
}
