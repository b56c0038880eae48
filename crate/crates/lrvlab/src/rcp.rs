//! Rough centering: remove obvious jumps and segment slopes before
//! estimation.
//!
//! Step 1 scans local batch-mean differences for points outside Tukey's
//! outer fences, iteratively subtracting the (winsorized) first difference
//! at each detected time. Step 2 fits a least-squares line per detected
//! segment and subtracts the slopes, shifted so the pieces stay continuous.
//! The centering is deliberately rough: it targets only structure large
//! enough to hurt the difference-based estimator in finite samples, and the
//! intercepts are left in place (a global level is invisible to difference
//! statistics).

use serde::{Deserialize, Serialize};

use crate::estimators::TimeSeries;
use crate::{LrvError, Result};

/// One detected jump. `time` is the 0-based index of the first observation
/// after the jump; the amount subtracted from the tail is
/// `winsorized_jump`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpDetection {
    pub time: usize,
    pub raw_jump: f64,
    pub winsorized_jump: f64,
}

/// Per-segment least-squares fit from step 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFit {
    pub intercept: f64,
    pub slope: f64,
}

/// Everything the two centering steps did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcpReport {
    /// Detections sorted by time; at most `max_jumps` of them.
    pub jumps: Vec<JumpDetection>,
    /// One fit per segment (`jumps.len() + 1` segments).
    pub slopes: Vec<SegmentFit>,
    /// The winsorizing cap `M`.
    pub winsor_cap: f64,
    /// Batch length `b = ⌊n^{1/3}⌋`.
    pub batch_len: usize,
}

const DEFAULT_MAX_JUMPS: usize = 10;
const DEFAULT_WINSOR_MULTIPLE: f64 = 100.0;
const FENCE_MULTIPLE: f64 = 1.5;

/// Integer cube root: the largest `b` with `b³ ≤ n`.
fn batch_length(n: usize) -> usize {
    let mut b = (n as f64).powf(1.0 / 3.0).round() as usize;
    while b.pow(3) > n {
        b -= 1;
    }
    while (b + 1).pow(3) <= n {
        b += 1;
    }
    b
}

/// Lower/upper quartiles with linear interpolation between order
/// statistics.
fn quartiles(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    };
    (q(0.25), q(0.75))
}

/// Step 1: iterative jump detection and removal.
///
/// Batch-mean differences are computed over adjacent disjoint windows,
/// `ξ_τ = mean(X[τ..τ+b]) - mean(X[τ-b..τ])`, so a level shift between
/// `τ-1` and `τ` produces a unique peak exactly at `τ` and the subtracted
/// first difference `X_τ - X_{τ-1}` is the jump itself.
///
/// A point's score is its distance from the *far* Tukey fence,
/// `O_τ = max{0, ξ_τ - 4Q₁ + 3Q₃, 4Q₃ - 3Q₁ - ξ_τ}`, so the scan ranks by
/// extremeness and keeps going until the batch differences are exactly
/// degenerate (constant input) or the detection budget is spent. Small
/// genuine jumps are therefore caught even when they stay inside the
/// fences; the price is a handful of noise-sized subtractions on clean
/// data, which the difference statistics absorb.
pub fn remove_jumps(
    x: &TimeSeries,
    max_jumps: usize,
    winsor_multiple: f64,
) -> Result<(TimeSeries, RcpReport)> {
    if x.dims() != 1 {
        return Err(LrvError::Config("rough centering expects a univariate series".into()));
    }
    let n = x.n();
    if n < 8 {
        return Err(LrvError::InsufficientData(format!(
            "jump removal needs n >= 8 (got {n})"
        )));
    }
    let b = batch_length(n);
    let values = x.values();
    let sq_diff: f64 = values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let cap = winsor_multiple * (sq_diff / (2.0 * n as f64)).sqrt();

    let mut work = values.to_vec();
    let mut jumps: Vec<JumpDetection> = Vec::new();

    if b >= 2 {
        for _ in 0..max_jumps {
            // Prefix sums of the current series.
            let mut cum = vec![0.0; n + 1];
            for (i, &v) in work.iter().enumerate() {
                cum[i + 1] = cum[i] + v;
            }
            let taus: Vec<usize> = (b..=n - b).collect();
            let xi: Vec<f64> = taus
                .iter()
                .map(|&t| {
                    let fwd = (cum[t + b] - cum[t]) / b as f64;
                    let bwd = (cum[t] - cum[t - b]) / b as f64;
                    fwd - bwd
                })
                .collect();
            let (q1, q3) = quartiles(&xi);
            let iqr = q3 - q1;
            let lower = q1 - FENCE_MULTIPLE * iqr;
            let upper = q3 + FENCE_MULTIPLE * iqr;

            let mut best: Option<(f64, usize)> = None;
            for (idx, &tau) in taus.iter().enumerate() {
                if jumps.iter().any(|j| j.time == tau) {
                    continue;
                }
                let dist = (xi[idx] - upper).max(lower - xi[idx]).max(0.0);
                if dist > 0.0 {
                    // Ties broken by the smallest index.
                    let better = match best {
                        None => true,
                        Some((d, _)) => dist > d,
                    };
                    if better {
                        best = Some((dist, tau));
                    }
                }
            }
            let Some((_, t)) = best else { break };
            let raw = work[t] - work[t - 1];
            let w = raw.clamp(-cap, cap);
            for v in work[t..].iter_mut() {
                *v -= w;
            }
            jumps.push(JumpDetection { time: t, raw_jump: raw, winsorized_jump: w });
        }
    }

    jumps.sort_by_key(|j| j.time);
    let report = RcpReport { jumps, slopes: Vec::new(), winsor_cap: cap, batch_len: b };
    Ok((TimeSeries::univariate(work)?, report))
}

/// Step 2: per-segment slope removal with continuity-preserving shifts.
///
/// Each segment `[t_j, t_{j+1})` gets an ordinary least-squares line in the
/// local coordinate `0 … L-1`; the slope is subtracted together with the
/// accumulated rises `Σ α̂_{j',1} (t_{j'+1} - t_{j'})` of the earlier
/// segments, so an affine series maps to a constant under any partition.
/// Intercepts are not subtracted (a level is invisible to difference
/// statistics). Segments of a single point get slope zero.
pub fn remove_slopes(
    x_dagger: &TimeSeries,
    jump_times: &[usize],
) -> Result<(TimeSeries, Vec<SegmentFit>)> {
    if x_dagger.dims() != 1 {
        return Err(LrvError::Config("rough centering expects a univariate series".into()));
    }
    let n = x_dagger.n();
    let mut bounds = Vec::with_capacity(jump_times.len() + 2);
    bounds.push(0usize);
    for &t in jump_times {
        if t == 0 || t >= n {
            return Err(LrvError::Domain(format!(
                "jump time {t} does not partition the series"
            )));
        }
        bounds.push(t);
    }
    bounds.push(n);
    if bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LrvError::Domain("jump times must be strictly increasing".into()));
    }

    let values = x_dagger.values();
    let mut out = values.to_vec();
    let mut fits = Vec::with_capacity(bounds.len() - 1);
    let mut carried = 0.0;
    for w in bounds.windows(2) {
        let (a, e) = (w[0], w[1]);
        let len = e - a;
        let (intercept, slope) = if len >= 2 {
            ols_line(&values[a..e])
        } else {
            (values[a], 0.0)
        };
        for (u, v) in out[a..e].iter_mut().enumerate() {
            *v -= carried + slope * u as f64;
        }
        carried += slope * len as f64;
        fits.push(SegmentFit { intercept, slope });
    }
    Ok((TimeSeries::univariate(out)?, fits))
}

fn ols_line(y: &[f64]) -> (f64, f64) {
    let l = y.len() as f64;
    let u_mean = (l - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / l;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (u, &v) in y.iter().enumerate() {
        let du = u as f64 - u_mean;
        sxy += du * (v - y_mean);
        sxx += du * du;
    }
    let slope = sxy / sxx;
    (y_mean - slope * u_mean, slope)
}

/// Both centering steps with the default tuning (`N' = 10`, `M' = 100`).
pub fn rough_center(x: &TimeSeries) -> Result<(TimeSeries, RcpReport)> {
    rough_center_with(x, DEFAULT_MAX_JUMPS, DEFAULT_WINSOR_MULTIPLE)
}

pub fn rough_center_with(
    x: &TimeSeries,
    max_jumps: usize,
    winsor_multiple: f64,
) -> Result<(TimeSeries, RcpReport)> {
    let (dagger, mut report) = remove_jumps(x, max_jumps, winsor_multiple)?;
    let times: Vec<usize> = report.jumps.iter().map(|j| j.time).collect();
    let (ddagger, fits) = remove_slopes(&dagger, &times)?;
    report.slopes = fits;
    Ok((ddagger, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: Vec<f64>) -> TimeSeries {
        TimeSeries::univariate(v).unwrap()
    }

    #[test]
    fn batch_length_is_exact_cube_root() {
        assert_eq!(batch_length(8), 2);
        assert_eq!(batch_length(26), 2);
        assert_eq!(batch_length(27), 3);
        assert_eq!(batch_length(200), 5);
        assert_eq!(batch_length(1000), 10);
    }

    #[test]
    fn constant_series_is_fixed_point() {
        let x = series(vec![2.0; 64]);
        let (out, report) = rough_center(&x).unwrap();
        assert!(report.jumps.is_empty());
        for (a, b) in out.values().iter().zip(x.values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn single_clean_jump_detected_once_at_the_jump_time() {
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| if i >= 100 { 10.0 } else { 0.0 }).collect();
        let (out, report) = remove_jumps(&series(x), 10, 100.0).unwrap();
        assert_eq!(report.jumps.len(), 1, "detections: {:?}", report.jumps);
        assert_eq!(report.jumps[0].time, 100);
        assert!((report.jumps[0].winsorized_jump - 10.0).abs() < 1e-12);
        for v in out.values() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn huge_jump_is_winsorized() {
        // The cap M scales with the root mean squared increment, which the
        // jump itself inflates; clipping therefore needs 2n > M'^2.
        let n = 8192;
        let t0 = 4096;
        let mut x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        for v in x[t0..].iter_mut() {
            *v += 1.0e6;
        }
        let (out, report) = remove_jumps(&series(x), 10, 100.0).unwrap();
        assert!(report.winsor_cap < 1.0e6);
        let big = report
            .jumps
            .iter()
            .find(|j| j.time == t0)
            .expect("the big jump must be detected");
        assert!(big.raw_jump > 9.9e5);
        assert!((big.winsorized_jump - report.winsor_cap).abs() < 1e-9);
        assert!(big.winsorized_jump < big.raw_jump);
        // The residual step survives winsorization.
        let tail_mean: f64 = out.values()[n - 500..].iter().sum::<f64>() / 500.0;
        let head_mean: f64 = out.values()[..500].iter().sum::<f64>() / 500.0;
        assert!(tail_mean - head_mean > 1.0e5);
    }

    #[test]
    fn winsorized_amounts_respect_cap() {
        let n = 200;
        let x: Vec<f64> = (0..n)
            .map(|i| (i as f64 * 0.7).sin() * 2.0 + if i >= 60 { 30.0 } else { 0.0 })
            .collect();
        let (_, report) = remove_jumps(&series(x), 10, 100.0).unwrap();
        for j in &report.jumps {
            assert!(j.winsorized_jump.abs() <= report.winsor_cap + 1e-12);
        }
        let times: Vec<usize> = report.jumps.iter().map(|j| j.time).collect();
        let mut sorted = times.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), times.len(), "detected times must be distinct");
    }

    #[test]
    fn affine_series_becomes_constant() {
        let n = 150;
        let a = 4.0;
        let s = 0.25;
        let x: Vec<f64> = (1..=n).map(|i| a + s * i as f64).collect();
        let (out, report) = rough_center(&series(x)).unwrap();
        assert!(report.jumps.is_empty());
        let first = out.values()[0];
        assert!((first - (a + s)).abs() < 1e-10, "level should be a + s·t0");
        for w in out.values().windows(2) {
            assert!((w[1] - w[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn affine_series_constant_under_any_partition() {
        let n = 120;
        let x: Vec<f64> = (1..=n).map(|i| -2.0 + 0.5 * i as f64).collect();
        // Length-1 segments are excluded: by design they get slope zero and
        // contribute no shift, which breaks affine exactness at that point.
        let dag = series(x);
        for times in [vec![], vec![40], vec![30, 60], vec![20, 60, 90], vec![2, 50, 118]] {
            let (out, _) = remove_slopes(&dag, &times).unwrap();
            for w in out.values().windows(2) {
                assert!(
                    (w[1] - w[0]).abs() < 1e-10,
                    "partition {times:?} left increments"
                );
            }
        }
    }

    #[test]
    fn piecewise_linear_with_break_flattens_with_matched_seam() {
        let n = 200;
        let s0 = 0.1;
        // Common slope s0 with a jump of 8 at index 120; removing the jump
        // leaves an exactly affine series, so the scan stops after one
        // detection.
        let x: Vec<f64> = (0..n)
            .map(|i| s0 * i as f64 + if i >= 120 { 8.0 } else { 0.0 })
            .collect();
        let (out, report) = rough_center(&series(x)).unwrap();
        // The break is removed on the first pass; the first difference
        // across it includes one slope step, so the residual -s0 shelf
        // keeps the extremeness scan busy with slope-sized corrections.
        let break_fix = report
            .jumps
            .iter()
            .find(|j| j.time == 120)
            .expect("the break must be detected");
        assert!((break_fix.winsorized_jump - (8.0 + s0)).abs() < 1e-9);
        for j in &report.jumps {
            if j.time != 120 {
                assert!(
                    j.winsorized_jump.abs() <= s0 + 1e-9,
                    "spurious correction beyond slope size: {j:?}"
                );
            }
        }
        // Levels match across the seam and the output is flat to within a
        // slope step everywhere.
        for w in out.values().windows(2) {
            assert!((w[1] - w[0]).abs() <= s0 + 1e-9, "residual increment {}", w[1] - w[0]);
        }
        let span = out.values().iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
        assert!(span.1 - span.0 <= 4.0 * s0, "residual range {:?}", span);
    }

    #[test]
    fn length_one_segments_are_tolerated() {
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.2).collect();
        let (out, _) = remove_slopes(&series(x), &[30, 31]).unwrap();
        assert_eq!(out.n(), n);
        assert!(out.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn short_series_rejected() {
        let x = series(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert!(matches!(
            remove_jumps(&x, 10, 100.0),
            Err(LrvError::InsufficientData(_))
        ));
    }
}
