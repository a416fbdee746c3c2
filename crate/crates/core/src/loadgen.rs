//! Query-stream and load-trace generation.
//!
//! Produces per-server query streams (Poisson arrivals, truncated-lognormal
//! query sizes, per-table pooling factors drawn from the catalog ranges) and
//! cluster-level diurnal load traces; parses external traces; and estimates
//! the over-provision rate R from consecutive interval growth.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::catalog::{AttentionKind, ModelSpec};
use crate::fmath;
use crate::perfmodel::Calibration;

/// Seconds per day, the diurnal period.
pub const DAY_S: f64 = 86_400.0;

/// One inference query.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub arrival_s: f64,
    /// Working-set size in items.
    pub size: u32,
    /// Sparse indices per item, one entry per embedding table.
    pub per_table_pooling: Vec<u32>,
}

impl Query {
    /// Total embedding rows touched per item of this query.
    pub fn lookups_per_item(&self) -> u64 {
        self.per_table_pooling.iter().map(|&p| p as u64).sum()
    }
}

/// A workload's queries-per-second over time.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadTrace {
    pub workload: String,
    pub interval_s: f64,
    /// Time-sorted (seconds, QPS) samples.
    pub points: Vec<(f64, f64)>,
}

/// Trace parsing or validation failure.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceError {
    Empty,
    Unsorted { row: usize },
    Negative { row: usize },
    Parse { row: usize, reason: String },
    TooShort,
}

impl core::fmt::Display for TraceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TraceError::Empty => write!(f, "trace has no points"),
            TraceError::Unsorted { row } => write!(f, "trace row {row} is out of time order"),
            TraceError::Negative { row } => write!(f, "trace row {row} has a negative value"),
            TraceError::Parse { row, reason } => write!(f, "trace row {row}: {reason}"),
            TraceError::TooShort => write!(f, "trace spans fewer than two intervals"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TraceError {}

impl LoadTrace {
    /// Parse the columnar trace format: `time_s,qps` per line, optional
    /// header, `#` comments ignored.
    pub fn parse_csv(text: &str) -> Result<LoadTrace, TraceError> {
        let mut points = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let row = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',');
            let (a, b) = match (cols.next(), cols.next()) {
                (Some(a), Some(b)) => (a.trim(), b.trim()),
                _ => {
                    return Err(TraceError::Parse {
                        row,
                        reason: String::from("expected two comma-separated columns"),
                    })
                }
            };
            // Tolerate a single header line.
            if idx == 0 && a.parse::<f64>().is_err() {
                continue;
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| TraceError::Parse {
                    row,
                    reason: alloc::format!("`{s}` is not a number"),
                })
            };
            points.push((parse(a)?, parse(b)?));
        }
        if points.is_empty() {
            return Err(TraceError::Empty);
        }
        let trace = LoadTrace {
            workload: String::new(),
            interval_s: if points.len() > 1 {
                points[1].0 - points[0].0
            } else {
                0.0
            },
            points,
        };
        trace.validate()?;
        Ok(trace)
    }

    /// Render the same columnar format `parse_csv` accepts.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,qps\n");
        for (t, q) in &self.points {
            out.push_str(&alloc::format!("{t},{q}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.points.is_empty() {
            return Err(TraceError::Empty);
        }
        for (i, pair) in self.points.windows(2).enumerate() {
            if pair[1].0 < pair[0].0 {
                return Err(TraceError::Unsorted { row: i + 2 });
            }
        }
        if let Some(i) = self
            .points
            .iter()
            .position(|&(t, q)| t < 0.0 || q < 0.0 || !t.is_finite() || !q.is_finite())
        {
            return Err(TraceError::Negative { row: i + 1 });
        }
        Ok(())
    }

    /// Load at time `t`, linearly interpolated, clamped to the trace ends.
    pub fn value_at(&self, t: f64) -> f64 {
        match self.points.as_slice() {
            [] => 0.0,
            [only] => only.1,
            points => {
                if t <= points[0].0 {
                    return points[0].1;
                }
                if t >= points[points.len() - 1].0 {
                    return points[points.len() - 1].1;
                }
                let idx = points.partition_point(|&(pt, _)| pt <= t);
                let (t0, q0) = points[idx - 1];
                let (t1, q1) = points[idx];
                if t1 == t0 {
                    q0
                } else {
                    q0 + (q1 - q0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }

    /// Trace end time in seconds.
    pub fn end_s(&self) -> f64 {
        self.points.last().map(|&(t, _)| t).unwrap_or(0.0)
    }
}

/// Generate a Poisson query stream for `model` at `rate_qps` for
/// `duration_s`, deterministic for a given seed.
pub fn gen_query_stream(
    rate_qps: f64,
    duration_s: f64,
    model: &ModelSpec,
    seed: u64,
    cal: &Calibration,
) -> Vec<Query> {
    assert!(rate_qps > 0.0 && duration_s > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = LogNormal::new(cal.size_ln_mu, cal.size_ln_sigma).expect("valid lognormal");
    let mut queries = Vec::with_capacity((rate_qps * duration_s * 1.1) as usize + 16);
    let mut t = 0.0_f64;
    loop {
        // Inverse-CDF exponential inter-arrival.
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        t -= fmath::ln(u) / rate_qps;
        if t >= duration_s {
            break;
        }
        queries.push(Query {
            arrival_s: t,
            size: sample_size(&mut rng, &sizes, cal),
            per_table_pooling: sample_pooling(&mut rng, model),
        });
    }
    queries
}

fn sample_size(rng: &mut ChaCha8Rng, dist: &LogNormal<f64>, cal: &Calibration) -> u32 {
    // Rejection-sample the truncated lognormal; the acceptance mass for the
    // default parameters is ~0.8 so this terminates quickly.
    loop {
        let v = dist.sample(rng);
        if v >= cal.size_min as f64 && v <= cal.size_max as f64 {
            return fmath::round(v) as u32;
        }
    }
}

fn sample_pooling(rng: &mut ChaCha8Rng, model: &ModelSpec) -> Vec<u32> {
    let span = model.lookups_per_table;
    let n = model.num_emb_tables as usize;
    let mut pooling = Vec::with_capacity(n);
    if model.has_pooling {
        for _ in 0..n {
            pooling.push(rng.gen_range(span.lo..=span.hi) as u32);
        }
    } else if model.attention_kind != AttentionKind::None {
        // One behavior-sequence table, the rest one-hot.
        pooling.push(rng.gen_range(span.lo..=span.hi) as u32);
        pooling.resize(n, 1);
    } else {
        pooling.resize(n, 1);
    }
    pooling
}

/// Generate a sinusoidal diurnal trace: 24 h period, maximum `peak_qps`,
/// minimum `trough_ratio * peak_qps`, multiplicative noise bounded by
/// `noise`.
pub fn gen_diurnal_trace(
    peak_qps: f64,
    days: u32,
    trough_ratio: f64,
    noise: f64,
    interval_s: f64,
    seed: u64,
) -> LoadTrace {
    assert!(trough_ratio > 0.0 && trough_ratio < 1.0);
    assert!(interval_s > 0.0 && noise >= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (days as f64 * DAY_S / interval_s) as u64;
    let mut points = Vec::with_capacity(steps as usize);
    for i in 0..steps {
        let t = i as f64 * interval_s;
        // Trough at midnight, crest mid-day.
        let phase = fmath::cos(2.0 * core::f64::consts::PI * t / DAY_S);
        let base = peak_qps * ((1.0 + trough_ratio) / 2.0 - (1.0 - trough_ratio) / 2.0 * phase);
        let factor = if noise > 0.0 {
            1.0 + rng.gen_range(-noise..=noise)
        } else {
            1.0
        };
        points.push((t, (base * factor).max(0.0)));
    }
    LoadTrace {
        workload: String::new(),
        interval_s,
        points,
    }
}

/// Over-provision rate R in percent: the largest relative load growth
/// between consecutive provisioning intervals, clamped at zero.
pub fn estimate_overprovision_rate(trace: &LoadTrace, interval_s: f64) -> Result<f64, TraceError> {
    assert!(interval_s > 0.0);
    trace.validate()?;
    let span = trace.end_s() - trace.points[0].0;
    if span < 2.0 * interval_s {
        return Err(TraceError::TooShort);
    }
    let start = trace.points[0].0;
    let intervals = (span / interval_s) as u64;
    let mut max_growth = 0.0_f64;
    for i in 0..intervals {
        let a = trace.value_at(start + i as f64 * interval_s);
        let b = trace.value_at(start + (i + 1) as f64 * interval_s);
        if a > 0.0 {
            max_growth = max_growth.max((b - a) / a);
        }
    }
    Ok(max_growth.max(0.0) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalogs;

    #[test]
    fn stream_is_poisson_like_and_in_range() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let cal = Calibration::default();
        let q = gen_query_stream(1000.0, 100.0, m, 7, &cal);
        // Count within 3 sigma of Poisson(100_000).
        let n = q.len() as f64;
        assert!((n - 100_000.0).abs() < 3.0 * 100_000.0_f64.sqrt());
        for query in &q {
            assert!((10..=1000).contains(&query.size));
            assert!(query.per_table_pooling.iter().all(|p| (20..=160).contains(p)));
            assert_eq!(query.per_table_pooling.len(), 10);
        }
    }

    #[test]
    fn stream_deterministic_per_seed() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc2").unwrap();
        let cal = Calibration::default();
        let a = gen_query_stream(500.0, 10.0, m, 42, &cal);
        let b = gen_query_stream(500.0, 10.0, m, 42, &cal);
        assert_eq!(a, b);
        let c2 = gen_query_stream(500.0, 10.0, m, 43, &cal);
        assert_ne!(a, c2);
    }

    #[test]
    fn interarrivals_pass_ks_test() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let cal = Calibration::default();
        let rate = 2000.0;
        let q = gen_query_stream(rate, 10.0, m, 11, &cal);
        let mut gaps: Vec<f64> = q.windows(2).map(|w| w[1].arrival_s - w[0].arrival_s).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = gaps.len() as f64;
        assert!(n >= 10_000.0);
        let mut d = 0.0_f64;
        for (i, g) in gaps.iter().enumerate() {
            let cdf = 1.0 - (-rate * g).exp();
            let hi = (i as f64 + 1.0) / n;
            let lo = i as f64 / n;
            d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        // Kolmogorov-Smirnov critical value at alpha = 0.01.
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn one_hot_pooling_is_one() {
        let c = Catalogs::builtin();
        let wnd = c.find_model("mt-wnd").unwrap();
        let din = c.find_model("din").unwrap();
        let cal = Calibration::default();
        for q in gen_query_stream(100.0, 5.0, wnd, 3, &cal) {
            assert!(q.per_table_pooling.iter().all(|&p| p == 1));
        }
        for q in gen_query_stream(100.0, 5.0, din, 3, &cal) {
            assert!((100..=1000).contains(&q.per_table_pooling[0]));
            assert!(q.per_table_pooling[1..].iter().all(|&p| p == 1));
        }
    }

    #[test]
    fn diurnal_extremes_exact_without_noise() {
        let t = gen_diurnal_trace(50_000.0, 1, 0.5, 0.0, 1800.0, 1);
        let max = t.points.iter().map(|&(_, q)| q).fold(0.0, f64::max);
        let min = t.points.iter().map(|&(_, q)| q).fold(f64::INFINITY, f64::min);
        assert_eq!(max, 50_000.0);
        assert_eq!(min, 25_000.0);
        assert_eq!(t.points.len(), 48);
    }

    #[test]
    fn diurnal_zero_days_empty_and_noise_bounded() {
        assert!(gen_diurnal_trace(1000.0, 0, 0.5, 0.0, 1800.0, 1).points.is_empty());
        let noisy = gen_diurnal_trace(1000.0, 2, 0.4, 0.05, 900.0, 9);
        let clean = gen_diurnal_trace(1000.0, 2, 0.4, 0.0, 900.0, 9);
        for (n, c) in noisy.points.iter().zip(clean.points.iter()) {
            assert!((n.1 - c.1).abs() <= 0.05 * c.1 + 1e-9);
        }
    }

    #[test]
    fn trace_round_trip() {
        let t = gen_diurnal_trace(12_345.0, 2, 0.5, 0.02, 1800.0, 5);
        let parsed = LoadTrace::parse_csv(&t.to_csv()).unwrap();
        assert_eq!(parsed.points.len(), t.points.len());
        for (a, b) in parsed.points.iter().zip(t.points.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn parse_rejects_bad_traces() {
        assert_eq!(LoadTrace::parse_csv(""), Err(TraceError::Empty));
        assert!(matches!(
            LoadTrace::parse_csv("0,10\n3600,-2"),
            Err(TraceError::Negative { .. })
        ));
        assert!(matches!(
            LoadTrace::parse_csv("10,10\n5,20"),
            Err(TraceError::Unsorted { row: 2 })
        ));
        assert!(matches!(
            LoadTrace::parse_csv("0,abc"),
            Err(TraceError::Parse { .. }) | Err(TraceError::Empty)
        ));
        let two = LoadTrace::parse_csv("0,10\n3600,20").unwrap();
        assert_eq!(two.points.len(), 2);
    }

    #[test]
    fn overprovision_rate_examples() {
        let constant = LoadTrace {
            workload: String::new(),
            interval_s: 60.0,
            points: alloc::vec![(0.0, 50.0), (60.0, 50.0), (120.0, 50.0)],
        };
        assert_eq!(estimate_overprovision_rate(&constant, 60.0).unwrap(), 0.0);

        let bump = LoadTrace {
            workload: String::new(),
            interval_s: 60.0,
            points: alloc::vec![(0.0, 100.0), (60.0, 120.0), (120.0, 110.0)],
        };
        let r = estimate_overprovision_rate(&bump, 60.0).unwrap();
        assert!((r - 20.0).abs() < 1e-9);

        let short = LoadTrace {
            workload: String::new(),
            interval_s: 60.0,
            points: alloc::vec![(0.0, 100.0), (30.0, 100.0)],
        };
        assert_eq!(
            estimate_overprovision_rate(&short, 60.0),
            Err(TraceError::TooShort)
        );
    }

    #[test]
    fn overprovision_rate_matches_scan_oracle_on_diurnal() {
        let t = gen_diurnal_trace(40_000.0, 7, 0.5, 0.03, 1800.0, 17);
        let r = estimate_overprovision_rate(&t, 1800.0).unwrap();
        // Direct scan over the raw points at the same interval.
        let mut oracle = 0.0_f64;
        for w in t.points.windows(2) {
            if w[0].1 > 0.0 {
                oracle = oracle.max((w[1].1 - w[0].1) / w[0].1);
            }
        }
        assert!((r - oracle * 100.0).abs() < 1e-9);
        assert!(r > 0.0);
    }
}
