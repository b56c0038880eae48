//! Inference procedures normalized by the robust LRV: the KS change-point
//! test, the moving-sum structural-break test, local linear trend
//! estimation, and simultaneous confidence bands.
//!
//! The break test has no published critical-value table; its null
//! distribution is calibrated once per `(n, β, level)` by seeded Monte
//! Carlo on iid standard normals and cached (in memory, and on disk under
//! `LRVLAB_CACHE` when set).

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::TimeSeries;
use crate::selection::{suggested_estimator, PlugInConfig};
use crate::{LrvError, Result};

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub level: f64,
    pub reject: bool,
    /// The LRV estimate used as the normalizer.
    pub lrv_used: f64,
    /// Argmax index of the break scan (0-based), reported as a diagnostic
    /// by the moving-sum test.
    pub break_index: Option<usize>,
}

/// A simultaneous confidence band for the trend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendBand {
    /// Evaluation grid in `(0, 1)`, strictly increasing.
    pub grid: Vec<f64>,
    /// Trend estimate on the grid.
    pub mu_hat: Vec<f64>,
    /// Common half-width `√v̂ · q_level`.
    pub half_width: f64,
    pub level: f64,
    /// Smoothing bandwidth actually used.
    pub b_n: f64,
    /// The Monte Carlo sup-quantile.
    pub q_level: f64,
    /// The LRV estimate behind the width.
    pub v_hat: f64,
}

/// P(sup|bridge| <= x), truncated series with 50 terms.
fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut acc = 1.0;
    for j in 1..=50 {
        let term = 2.0 * (-2.0 * (j as f64) * (j as f64) * x * x).exp();
        if j % 2 == 1 {
            acc -= term;
        } else {
            acc += term;
        }
    }
    acc.clamp(0.0, 1.0)
}

/// Quantile of the Kolmogorov distribution by bisection; `p` in `(0, 1)`.
pub fn kolmogorov_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (1e-3, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// KS change-point test: `T_n = max_k |Σ_{i≤k}(X_i - X̄)| / √(n v̂)`,
/// rejected when the statistic exceeds the Kolmogorov quantile (1.358 at
/// the 5% level).
pub fn ks_test(x: &TimeSeries, v_hat: f64, level: f64) -> Result<TestResult> {
    if x.dims() != 1 {
        return Err(LrvError::Config("ks test expects a univariate series".into()));
    }
    if v_hat <= 0.0 {
        return Err(LrvError::Domain(format!(
            "ks test needs a positive LRV estimate (got {v_hat:.3e})"
        )));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(LrvError::Domain("test level must lie in (0,1)".into()));
    }
    let v = x.values();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut cum = 0.0;
    let mut max_abs = 0.0_f64;
    for &value in v {
        cum += value - mean;
        max_abs = max_abs.max(cum.abs());
    }
    let statistic = max_abs / (n * v_hat).sqrt();
    let critical_value = kolmogorov_quantile(1.0 - level);
    Ok(TestResult {
        statistic,
        critical_value,
        level,
        reject: statistic > critical_value,
        lrv_used: v_hat,
        break_index: None,
    })
}

fn wz_statistic(v: &[f64], k_n: usize) -> (f64, usize) {
    let n = v.len();
    let mut cum = vec![0.0; n + 1];
    for (i, &x) in v.iter().enumerate() {
        cum[i + 1] = cum[i] + x;
    }
    let mut best = -1.0;
    let mut arg = k_n;
    // 1-based centers i = k_n .. n - k_n.
    for i in k_n..=n - k_n {
        let fwd = cum[i + k_n] - cum[i];
        let bwd = cum[i] - cum[i - k_n];
        let d = (fwd - bwd).abs();
        if d > best {
            best = d;
            arg = i;
        }
    }
    (best, arg - 1)
}

/// Moving-sum structural-break test: the maximal contrast of adjacent
/// `k_n`-sums with `k_n = ⌈n^β⌉`, normalized by `k_n √v̂`.
pub fn wz_test(x: &TimeSeries, v_hat: f64, beta: f64, level: f64) -> Result<TestResult> {
    if x.dims() != 1 {
        return Err(LrvError::Config("break test expects a univariate series".into()));
    }
    if v_hat <= 0.0 {
        return Err(LrvError::Domain(format!(
            "break test needs a positive LRV estimate (got {v_hat:.3e})"
        )));
    }
    if !(0.5 < beta && beta < 2.0 / 3.0) {
        return Err(LrvError::Domain(format!(
            "beta must lie in (1/2, 2/3) (got {beta})"
        )));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(LrvError::Domain("test level must lie in (0,1)".into()));
    }
    let n = x.n();
    let k_n = (n as f64).powf(beta).ceil() as usize;
    if 2 * k_n >= n {
        return Err(LrvError::InsufficientData(format!(
            "window k_n = {k_n} too large for n = {n}"
        )));
    }
    let (raw, arg) = wz_statistic(x.values(), k_n);
    let statistic = raw / (k_n as f64 * v_hat.sqrt());
    let critical_value = wz_critical_value(n, beta, level);
    Ok(TestResult {
        statistic,
        critical_value,
        level,
        reject: statistic > critical_value,
        lrv_used: v_hat,
        break_index: Some(arg),
    })
}

const WZ_CALIBRATION_REPS: usize = 10_000;
const WZ_CALIBRATION_SEED: u64 = 0x57a7_ca1b;

/// Null critical value of the moving-sum statistic, calibrated by Monte
/// Carlo on iid standard normals with the true normalizer `v = 1`.
pub fn wz_critical_value(n: usize, beta: f64, level: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<String, f64>>> = OnceLock::new();
    let key = format!("wz_crit_n{n}_beta{beta:.6}_level{level:.6}");
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().unwrap().get(&key) {
        return v;
    }
    if let Some(v) = read_cached_constant(&key) {
        cache.lock().unwrap().insert(key, v);
        return v;
    }
    let k_n = (n as f64).powf(beta).ceil() as usize;
    let mut stats: Vec<f64> = (0..WZ_CALIBRATION_REPS)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(WZ_CALIBRATION_SEED);
            rng.set_stream(rep as u64 + 1);
            let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            wz_statistic(&x, k_n).0 / k_n as f64
        })
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let crit = quantile_sorted(&stats, 1.0 - level);
    write_cached_constant(&key, crit);
    cache.lock().unwrap().insert(key, crit);
    crit
}

/// Type-7 quantile of an already sorted vector.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("LRVLAB_CACHE").map(PathBuf::from)
}

pub(crate) fn read_cached_constant(key: &str) -> Option<f64> {
    let path = cache_dir()?.join(format!("{key}.json"));
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

pub(crate) fn write_cached_constant(key: &str, value: f64) {
    if let Some(dir) = cache_dir() {
        if std::fs::create_dir_all(&dir).is_ok() {
            let _ = std::fs::write(
                dir.join(format!("{key}.json")),
                serde_json::to_string(&value).unwrap(),
            );
        }
    }
}

/// Gaussian-kernel weighted mean with bandwidth `b` at `t`.
fn gaussian_mean(values: &[f64], t: f64, b: f64) -> Result<f64> {
    let n = values.len() as f64;
    let mut wsum = 0.0;
    let mut acc = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let u = (t - (i as f64 + 1.0) / n) / b;
        let w = (-0.5 * u * u).exp();
        wsum += w;
        acc += w * v;
    }
    if wsum < 1e-300 {
        return Err(LrvError::Numeric(format!(
            "degenerate smoother weights at t = {t} (bandwidth {b})"
        )));
    }
    Ok(acc / wsum)
}

/// Jackknife-corrected local linear trend `μ̂_b(t) = 2μ̄_b(t) - μ̄_{b√2}(t)`
/// on an arbitrary grid.
pub fn local_linear_trend_on_grid(
    x: &TimeSeries,
    grid: &[f64],
    b: f64,
) -> Result<Vec<f64>> {
    if x.dims() != 1 {
        return Err(LrvError::Config("trend estimation expects a univariate series".into()));
    }
    if !(0.0 < b && b < 0.5) {
        return Err(LrvError::Domain(format!("bandwidth must lie in (0, 1/2) (got {b})")));
    }
    let values = x.values();
    let b2 = b * std::f64::consts::SQRT_2;
    grid.iter()
        .map(|&t| Ok(2.0 * gaussian_mean(values, t, b)? - gaussian_mean(values, t, b2)?))
        .collect()
}

/// Trend estimate on the design grid `i/n`.
pub fn local_linear_trend(x: &TimeSeries, b: f64) -> Result<Vec<f64>> {
    let n = x.n();
    let grid: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    local_linear_trend_on_grid(x, &grid, b)
}

/// How the smoothing bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandwidthRule {
    /// `b_n = 2 (v̂/γ̂₀)^{1/5} b*` from an iid-optimal reference bandwidth.
    IidOptimal { b_star: f64 },
    /// Use the given bandwidth directly.
    Direct { b: f64 },
}

const SCB_GRID_POINTS: usize = 201;
const SCB_CALIBRATION_SEED: u64 = 0x5cb0_0bad;
const V_FLOOR: f64 = 1e-12;

fn scb_bandwidth(rule: BandwidthRule, v_hat: f64, gamma0: f64, b_cap: f64) -> f64 {
    let raw = match rule {
        BandwidthRule::Direct { b } => b,
        BandwidthRule::IidOptimal { b_star } => {
            2.0 * (v_hat.max(V_FLOOR) / gamma0.max(V_FLOOR)).powf(0.2) * b_star
        }
    };
    raw.clamp(1e-3, b_cap)
}

fn grid_on(a: f64, b: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Simultaneous confidence band for the trend.
///
/// The normalizer `v̂` comes from the plug-in estimator; the sup-quantile
/// `q_level` is calibrated on iid standard normal samples pushed through
/// the same smoother (sup over the full unit interval), and the band is
/// `μ̂_{b_n}(t) ± √v̂ q_level` on a 201-point grid inside `[b_n, 1-b_n]`.
pub fn scb(
    x: &TimeSeries,
    level: f64,
    rule: BandwidthRule,
    reps: usize,
    seed: u64,
    estimator: &PlugInConfig,
) -> Result<TrendBand> {
    if !(0.5 < level && level < 1.0) {
        return Err(LrvError::Domain("band level must lie in (0.5, 1)".into()));
    }
    if reps < 200 {
        return Err(LrvError::Domain("band calibration needs reps >= 200".into()));
    }
    let n = x.n();
    let fit = suggested_estimator(x, estimator)?;
    let v_hat = fit.lrv.value;

    let b_ref = match rule {
        BandwidthRule::Direct { b } => b,
        BandwidthRule::IidOptimal { b_star } => b_star,
    };
    if !(0.0 < b_ref && b_ref < 0.5) {
        return Err(LrvError::Domain(format!(
            "reference bandwidth must lie in (0, 1/2) (got {b_ref})"
        )));
    }
    let design: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let resid_base = local_linear_trend_on_grid(x, &design, b_ref)?;
    let gamma0 = x
        .values()
        .iter()
        .zip(&resid_base)
        .map(|(v, m)| (v - m) * (v - m))
        .sum::<f64>()
        / n as f64;
    let b_n = scb_bandwidth(rule, v_hat, gamma0, 0.45);

    let sorted_sups = scb_quantile(n, rule, reps, seed, estimator)?;
    let q_level = quantile_sorted(&sorted_sups, level);

    let grid = grid_on(b_n, 1.0 - b_n, SCB_GRID_POINTS);
    let mu_hat = local_linear_trend_on_grid(x, &grid, b_n)?;
    Ok(TrendBand {
        grid,
        mu_hat,
        half_width: v_hat.max(V_FLOOR).sqrt() * q_level,
        level,
        b_n,
        q_level,
        v_hat: v_hat.max(V_FLOOR),
    })
}

/// Sorted Monte Carlo sample of `sup_{0≤t≤1} |μ̂°_{b_n°}(t)|` over iid
/// standard normal draws, with `b_n°` chosen by the same rule on each
/// draw. Replications use independent seeded streams and an index-ordered
/// reduction, so the result does not depend on the worker count.
pub fn scb_quantile(
    n: usize,
    rule: BandwidthRule,
    reps: usize,
    seed: u64,
    estimator: &PlugInConfig,
) -> Result<Vec<f64>> {
    let full_grid = grid_on(0.0, 1.0, SCB_GRID_POINTS);
    let sups: Result<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SCB_CALIBRATION_SEED);
            rng.set_stream(rep as u64 + 1);
            let draw: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let xo = TimeSeries::univariate(draw)?;
            let bno = match rule {
                BandwidthRule::Direct { b } => b,
                BandwidthRule::IidOptimal { b_star } => {
                    let fit = suggested_estimator(&xo, estimator)?;
                    let design: Vec<f64> =
                        (1..=n).map(|i| i as f64 / n as f64).collect();
                    let smooth = local_linear_trend_on_grid(&xo, &design, b_star)?;
                    let gamma0 = xo
                        .values()
                        .iter()
                        .zip(&smooth)
                        .map(|(v, m)| (v - m) * (v - m))
                        .sum::<f64>()
                        / n as f64;
                    scb_bandwidth(rule, fit.lrv.value, gamma0, 0.45)
                }
            };
            let mu = local_linear_trend_on_grid(&xo, &full_grid, bno)?;
            Ok(mu.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
        })
        .collect();
    let mut sups = sups?;
    sups.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sups)
}
