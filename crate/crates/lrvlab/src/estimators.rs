//! Difference-based long-run variance estimators.
//!
//! The kernel form smooths lagged products of difference statistics,
//! `v̂_p = Σ_{|k|<ℓ} |k|^p K(k/ℓ) γ̂_k^D` with
//! `γ̂_k^D = (1/n) Σ_{i=mh+|k|+1}^n D_i D_{i-|k|}`, and the subsampling form
//! averages small quadratic forms over sliding windows. Both accept
//! univariate series; the kernel form also has a matrix-valued variant for
//! multivariate series.
//!
//! `γ̂_k^D` divides by `n`, not by the number of summands. That is the
//! printed definition and what the quadratic-form identities assume. The
//! bandwidth-selection pipeline uses the summand-count divisor instead
//! (see [`LagDivisor`]); the edge loss `mh/n` it removes is what separates
//! the orders `m` in moderate samples.

use serde::{Deserialize, Serialize};

use crate::diffseq::DifferenceSequence;
use crate::kernels::Kernel;
use crate::{LrvError, Result};

/// An observed series: `n` rows by `dims` columns, `dims = 1` univariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    columns: Vec<Vec<f64>>,
}

impl TimeSeries {
    /// Univariate series.
    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        Self::multivariate(vec![values])
    }

    /// Multivariate series, one vector per coordinate.
    pub fn multivariate(columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(LrvError::Domain("series needs at least one column".into()));
        }
        let n = columns[0].len();
        if n < 2 {
            return Err(LrvError::InsufficientData(
                "series needs at least two observations".into(),
            ));
        }
        for (s, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(LrvError::Domain(format!(
                    "column {s} has length {}, expected {n}",
                    col.len()
                )));
            }
            if let Some(bad) = col.iter().find(|x| !x.is_finite()) {
                return Err(LrvError::Domain(format!(
                    "column {s} contains a non-finite value ({bad})"
                )));
            }
        }
        Ok(TimeSeries { columns })
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn dims(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, s: usize) -> &[f64] {
        &self.columns[s]
    }

    /// The single column of a univariate series.
    pub fn values(&self) -> &[f64] {
        &self.columns[0]
    }
}

/// Full parameterization of one estimator evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub seq: DifferenceSequence,
    pub kernel: Kernel,
    /// Bandwidth ℓ: number of lags smoothed.
    pub ell: usize,
    /// Lag h: spacing inside each difference statistic.
    pub h: usize,
    /// Moment order p; `p = 0` estimates the LRV itself.
    pub p: u32,
    /// Subtract the mean of the difference statistics before forming
    /// products. Off by default; for `m = 0` the statistics are centered by
    /// definition and the flag has no effect.
    pub center_differences: bool,
}

impl EstimatorConfig {
    pub fn new(seq: DifferenceSequence, kernel: Kernel, ell: usize, h: usize) -> Self {
        EstimatorConfig { seq, kernel, ell, h, p: 0, center_differences: false }
    }

    fn validate(&self, n: usize) -> Result<()> {
        self.kernel.validate()?;
        if self.ell == 0 || self.h == 0 {
            return Err(LrvError::Config("ell and h must be at least 1".into()));
        }
        if self.seq.m() * self.h + self.ell >= n {
            return Err(LrvError::InsufficientData(format!(
                "mh + ell = {} must be below n = {n}",
                self.seq.m() * self.h + self.ell
            )));
        }
        Ok(())
    }
}

/// Consistency regime of a finite-order configuration, read off the ratio
/// `h/ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Optimal,
    MayBeOptimal,
    Suboptimal,
    Inconsistent,
}

impl Regime {
    fn classify(m: usize, h: usize, ell: usize) -> Regime {
        if m == 0 {
            // Classical globally-centered estimator; the lag plays no role.
            return Regime::Optimal;
        }
        match h.cmp(&ell) {
            std::cmp::Ordering::Less => Regime::Inconsistent,
            std::cmp::Ordering::Equal => Regime::MayBeOptimal,
            std::cmp::Ordering::Greater => Regime::Optimal,
        }
    }
}

/// Divisor convention for `γ̂_k^D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagDivisor {
    /// Divide by `n` (the printed definition).
    SampleSize,
    /// Divide by the number of summands `n - mh - |k|`; removes the edge
    /// bias that otherwise grows with `mh`.
    SummandCount,
}

/// Result of a univariate estimation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrvResult {
    /// The point estimate `v̂_p`.
    pub value: f64,
    /// `γ̂_k^D` for `k = 0 … ℓ-1`.
    pub gamma_d: Vec<f64>,
    pub m: usize,
    pub ell: usize,
    pub h: usize,
    pub p: u32,
    pub regime: Regime,
}

/// Result of a matrix-valued estimation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiLrvResult {
    /// The `S×S` estimate, row-major.
    pub value: SquareMat,
    /// `γ̂_k^D` matrices for `k = 0 … ℓ-1`.
    pub gamma_d: Vec<SquareMat>,
    pub m: usize,
    pub ell: usize,
    pub h: usize,
    pub p: u32,
    pub regime: Regime,
}

/// A small dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SquareMat {
    dim: usize,
    a: Vec<f64>,
}

impl SquareMat {
    pub fn zeros(dim: usize) -> Self {
        SquareMat { dim, a: vec![0.0; dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, s: usize) -> f64 {
        self.a[r * self.dim + s]
    }

    pub fn set(&mut self, r: usize, s: usize, v: f64) {
        self.a[r * self.dim + s] = v;
    }

    pub fn symmetrized(&self) -> SquareMat {
        let mut out = SquareMat::zeros(self.dim);
        for r in 0..self.dim {
            for s in 0..self.dim {
                out.set(r, s, 0.5 * (self.get(r, s) + self.get(s, r)));
            }
        }
        out
    }
}

impl From<Vec<Vec<f64>>> for SquareMat {
    fn from(rows: Vec<Vec<f64>>) -> Self {
        let dim = rows.len();
        let mut a = Vec::with_capacity(dim * dim);
        for row in rows {
            a.extend(row);
        }
        SquareMat { dim, a }
    }
}

impl From<SquareMat> for Vec<Vec<f64>> {
    fn from(m: SquareMat) -> Self {
        (0..m.dim).map(|r| m.a[r * m.dim..(r + 1) * m.dim].to_vec()).collect()
    }
}

/// Difference statistics of every column: `D_i = Σ_j d_j X_{i-jh}` for
/// `i = mh+1, …, n` (1-based), or the globally centered series for `m = 0`.
#[derive(Debug, Clone)]
pub struct DifferenceStatistics {
    cols: Vec<Vec<f64>>,
    /// Number of leading observations lost to differencing (`mh`).
    offset: usize,
    n: usize,
}

impl DifferenceStatistics {
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, s: usize) -> &[f64] {
        &self.cols[s]
    }

    pub fn dims(&self) -> usize {
        self.cols.len()
    }
}

/// Computes the difference statistics for every column.
pub fn difference_statistics(
    x: &TimeSeries,
    seq: &DifferenceSequence,
    h: usize,
) -> Result<DifferenceStatistics> {
    difference_statistics_inner(x, seq, h, false)
}

fn difference_statistics_inner(
    x: &TimeSeries,
    seq: &DifferenceSequence,
    h: usize,
    center: bool,
) -> Result<DifferenceStatistics> {
    let n = x.n();
    let m = seq.m();
    if m > 0 && m * h >= n {
        return Err(LrvError::InsufficientData(format!(
            "differencing span mh = {} exceeds the sample (n = {n})",
            m * h
        )));
    }
    let d = seq.coefficients();
    let mut cols = Vec::with_capacity(x.dims());
    for s in 0..x.dims() {
        let col = x.column(s);
        let mut out = if m == 0 {
            let mean = col.iter().sum::<f64>() / n as f64;
            col.iter().map(|v| v - mean).collect::<Vec<f64>>()
        } else {
            (m * h..n)
                .map(|i| (0..=m).map(|j| d[j] * col[i - j * h]).sum())
                .collect::<Vec<f64>>()
        };
        if center && m > 0 {
            // D̄_n sums all statistics but still divides by n, as printed.
            let mean = out.iter().sum::<f64>() / n as f64;
            for v in out.iter_mut() {
                *v -= mean;
            }
        }
        cols.push(out);
    }
    Ok(DifferenceStatistics { cols, offset: if m == 0 { 0 } else { m * h }, n })
}

/// `γ̂_k^D` for one univariate statistics vector.
pub fn gamma_hat_d(stats: &DifferenceStatistics, k: i64) -> Result<f64> {
    gamma_hat_d_with(stats, k, LagDivisor::SampleSize)
}

pub fn gamma_hat_d_with(stats: &DifferenceStatistics, k: i64, div: LagDivisor) -> Result<f64> {
    let ka = k.unsigned_abs() as usize;
    let d = stats.column(0);
    if ka >= d.len() {
        return Err(LrvError::Domain(format!(
            "lag |k| = {ka} out of range (only {} statistics)",
            d.len()
        )));
    }
    let sum: f64 = d[ka..].iter().zip(&d[..d.len() - ka]).map(|(a, b)| a * b).sum();
    let div = match div {
        LagDivisor::SampleSize => stats.n as f64,
        LagDivisor::SummandCount => (d.len() - ka) as f64,
    };
    Ok(sum / div)
}

/// Matrix-valued `γ̂_k^D = (1/n) Σ D_i D_{i-|k|}ᵀ`.
pub fn gamma_hat_d_matrix(stats: &DifferenceStatistics, k: i64) -> Result<SquareMat> {
    let ka = k.unsigned_abs() as usize;
    let len = stats.column(0).len();
    if ka >= len {
        return Err(LrvError::Domain(format!("lag |k| = {ka} out of range")));
    }
    let dims = stats.dims();
    let mut out = SquareMat::zeros(dims);
    for r in 0..dims {
        for s in 0..dims {
            let a = stats.column(r);
            let b = stats.column(s);
            let sum: f64 = (ka..len).map(|i| a[i] * b[i - ka]).sum();
            out.set(r, s, sum / stats.n as f64);
        }
    }
    Ok(out)
}

/// The kernel estimator `v̂_p` on a univariate series.
pub fn lrv(x: &TimeSeries, config: &EstimatorConfig) -> Result<LrvResult> {
    lrv_with_divisor(x, config, LagDivisor::SampleSize)
}

/// As [`lrv`] with an explicit divisor convention.
pub fn lrv_with_divisor(
    x: &TimeSeries,
    config: &EstimatorConfig,
    div: LagDivisor,
) -> Result<LrvResult> {
    if x.dims() != 1 {
        return Err(LrvError::Config(
            "lrv expects a univariate series; use lrv_multivariate".into(),
        ));
    }
    config.validate(x.n())?;
    let stats =
        difference_statistics_inner(x, &config.seq, config.h, config.center_differences)?;
    let ell = config.ell;
    let mut gamma_d = Vec::with_capacity(ell);
    for k in 0..ell {
        gamma_d.push(gamma_hat_d_with(&stats, k as i64, div)?);
    }
    // The k = 0 term has weight |0|^p K(0), i.e. γ̂_0 for p = 0 and nothing
    // otherwise.
    let mut value = if config.p == 0 { gamma_d[0] } else { 0.0 };
    for (k, g) in gamma_d.iter().enumerate().skip(1) {
        let w = (k as f64).powi(config.p as i32)
            * config.kernel.evaluate(k as f64 / ell as f64);
        value += 2.0 * w * g;
    }
    Ok(LrvResult {
        value,
        gamma_d,
        m: config.seq.m(),
        ell,
        h: config.h,
        p: config.p,
        regime: Regime::classify(config.seq.m(), config.h, ell),
    })
}

/// Index-set choice for the subsampling estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    /// Every admissible window.
    Full,
    /// Non-overlapping windows.
    None,
}

/// The subsampling estimator `v̂'`: averaged windowed quadratic forms.
pub fn lrv_subsampling(
    x: &TimeSeries,
    config: &EstimatorConfig,
    overlap: Overlap,
) -> Result<LrvResult> {
    if x.dims() != 1 {
        return Err(LrvError::Config("subsampling estimator expects a univariate series".into()));
    }
    config.validate(x.n())?;
    let n = x.n();
    let m = config.seq.m();
    let h = config.h;
    let ell = config.ell;
    if m * h + ell + 1 > n {
        return Err(LrvError::InsufficientData(format!(
            "need n >= mh + ell + 1 = {}",
            m * h + ell + 1
        )));
    }
    let stats =
        difference_statistics_inner(x, &config.seq, h, config.center_differences)?;
    let d = stats.column(0);
    let offset = stats.offset();

    // 1-based window ends. For m = 0 the statistics exist from i = 1, so
    // every full window i = ℓ, …, n is admissible (the overlapping batch
    // means convention); for m >= 1 the printed set starts at mh + ℓ + 1.
    let ends: Vec<usize> = match overlap {
        Overlap::Full => {
            let first = if m == 0 { ell } else { m * h + ell + 1 };
            (first..=n).collect()
        }
        Overlap::None => {
            let step = m * h + 1 + ell;
            (1..=n / step).map(|j| j * step).collect()
        }
    };
    if ends.is_empty() {
        return Err(LrvError::InsufficientData(
            "subsampling index set is empty".into(),
        ));
    }

    // Kernel weights over in-window lag differences.
    let weights: Vec<f64> = (0..ell)
        .map(|lag| config.kernel.evaluate(lag as f64 / ell as f64) / (ell - lag) as f64)
        .collect();

    let mut acc = 0.0;
    for &i in &ends {
        // Window Λ_i = {i-ℓ+1, …, i} (1-based series positions).
        let lo = i - ell; // 0-based start
        let mut window_sum = 0.0;
        for a in 0..ell {
            let da = d[lo + a - offset];
            window_sum += weights[0] * da * da;
            for b in 0..a {
                let diff = a - b;
                window_sum += 2.0 * weights[diff] * da * d[lo + b - offset];
            }
        }
        acc += window_sum;
    }
    let value = acc / ends.len() as f64;

    let mut gamma_d = Vec::with_capacity(ell);
    for k in 0..ell {
        gamma_d.push(gamma_hat_d(&stats, k as i64)?);
    }
    Ok(LrvResult {
        value,
        gamma_d,
        m,
        ell,
        h,
        p: config.p,
        regime: Regime::classify(m, h, ell),
    })
}

/// Both sides of the exact autocovariance identity
/// `γ̂_k^x = γ̂_0^x - (1/2n) Σ (x_j - x_{j-|k|})² - (1/2n){edge terms}`.
pub fn acvf_identity_check(x: &TimeSeries, k: i64) -> Result<(f64, f64)> {
    if x.dims() != 1 {
        return Err(LrvError::Config("identity check expects a univariate series".into()));
    }
    let v = x.values();
    let n = v.len();
    let ka = k.unsigned_abs() as usize;
    if ka > n - 1 {
        return Err(LrvError::Domain(format!("lag |k| = {ka} exceeds n-1 = {}", n - 1)));
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let gamma = |lag: usize| -> f64 {
        (lag..n).map(|i| (v[i] - mean) * (v[i - lag] - mean)).sum::<f64>() / n as f64
    };
    let lhs = gamma(ka);
    let sq_diff: f64 = (ka..n).map(|i| (v[i] - v[i - ka]).powi(2)).sum();
    let edge: f64 = (0..ka).map(|i| (v[i] - mean).powi(2)).sum::<f64>()
        + (n - ka..n).map(|i| (v[i] - mean).powi(2)).sum::<f64>();
    let rhs = gamma(0) - sq_diff / (2.0 * n as f64) - edge / (2.0 * n as f64);
    Ok((lhs, rhs))
}

/// Matrix-valued estimator for a multivariate series. `symmetrize` replaces
/// the raw sum `M` by `(M + Mᵀ)/2`, restoring the estimand's symmetry
/// (diagonals and the univariate case are unchanged).
pub fn lrv_multivariate(
    x: &TimeSeries,
    config: &EstimatorConfig,
    symmetrize: bool,
) -> Result<MultiLrvResult> {
    if x.dims() < 2 {
        return Err(LrvError::Config("multivariate estimator expects S >= 2 columns".into()));
    }
    config.validate(x.n())?;
    let stats =
        difference_statistics_inner(x, &config.seq, config.h, config.center_differences)?;
    let ell = config.ell;
    let dims = x.dims();
    let mut gamma_d = Vec::with_capacity(ell);
    for k in 0..ell {
        gamma_d.push(gamma_hat_d_matrix(&stats, k as i64)?);
    }
    let mut value = SquareMat::zeros(dims);
    for r in 0..dims {
        for s in 0..dims {
            let mut acc = if config.p == 0 { gamma_d[0].get(r, s) } else { 0.0 };
            for (k, g) in gamma_d.iter().enumerate().skip(1) {
                let w = (k as f64).powi(config.p as i32)
                    * config.kernel.evaluate(k as f64 / ell as f64);
                acc += 2.0 * w * g.get(r, s);
            }
            value.set(r, s, acc);
        }
    }
    if symmetrize {
        value = value.symmetrized();
    }
    Ok(MultiLrvResult {
        value,
        gamma_d,
        m: config.seq.m(),
        ell,
        h: config.h,
        p: config.p,
        regime: Regime::classify(config.seq.m(), config.h, ell),
    })
}

/// Long-run correlation `v₁₂/√(v₁₁ v₂₂)` of a bivariate series, clamped to
/// `[-1, 1]`.
pub fn long_run_correlation(x: &TimeSeries, config: &EstimatorConfig) -> Result<f64> {
    if x.dims() != 2 {
        return Err(LrvError::Config("long-run correlation expects exactly two columns".into()));
    }
    let fit = lrv_multivariate(x, config, true)?;
    let v11 = fit.value.get(0, 0);
    let v22 = fit.value.get(1, 1);
    if v11 <= 0.0 || v22 <= 0.0 {
        return Err(LrvError::Numeric(format!(
            "non-positive diagonal estimates (v11 = {v11:.3e}, v22 = {v22:.3e}); \
             try a longer series or a different configuration"
        )));
    }
    Ok((fit.value.get(0, 1) / (v11 * v22).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffseq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gauss(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Independent quadratic-form oracle:
    /// `Σ_{i,i'} (1/n) K((i-i')/ℓ) 1(min(i,i') ≥ mh+1) D_i D_{i'}`, with the
    /// difference statistics rebuilt from the raw series by definition.
    fn quadratic_form_oracle(x: &[f64], cfg: &EstimatorConfig) -> f64 {
        let n = x.len();
        let m = cfg.seq.m();
        let h = cfg.h;
        let d = cfg.seq.coefficients();
        let mean = x.iter().sum::<f64>() / n as f64;
        let stat = |i: usize| -> f64 {
            // 1-based index i.
            if m == 0 {
                x[i - 1] - mean
            } else {
                (0..=m).map(|j| d[j] * x[i - 1 - j * h]).sum()
            }
        };
        let first = m * h + 1;
        let mut acc = 0.0;
        for i in first..=n {
            for ip in first..=n {
                let w = cfg.kernel.evaluate((i as f64 - ip as f64) / cfg.ell as f64);
                if w != 0.0 {
                    acc += w * stat(i) * stat(ip) / n as f64;
                }
            }
        }
        acc
    }

    #[test]
    fn constant_series_gives_zero() {
        let x = TimeSeries::univariate(vec![3.5; 64]).unwrap();
        let cfg = EstimatorConfig::new(
            diffseq::optimal_sequence(3).unwrap(),
            Kernel::ParzenPoly { q: 2 },
            5,
            10,
        );
        let fit = lrv(&x, &cfg).unwrap();
        assert_eq!(fit.value, 0.0);
        let sub = lrv_subsampling(&x, &cfg, Overlap::Full).unwrap();
        assert_eq!(sub.value, 0.0);
    }

    #[test]
    fn hand_computed_difference_statistics() {
        let x = TimeSeries::univariate(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let seq = diffseq::optimal_sequence(1).unwrap();
        let stats = difference_statistics(&x, &seq, 1).unwrap();
        assert_eq!(stats.offset(), 1);
        for v in stats.column(0) {
            assert!((v.abs() - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_invariance() {
        let base = gauss(120, 1);
        let shifted: Vec<f64> = base.iter().map(|v| v + 1234.5).collect();
        for m in 0..=3usize {
            let seq = if m == 0 { zero_order() } else { diffseq::optimal_sequence(m).unwrap() };
            let cfg = EstimatorConfig {
                seq,
                kernel: Kernel::ParzenPoly { q: 2 },
                ell: 6,
                h: 12,
                p: 0,
                center_differences: false,
            };
            let a = lrv(&TimeSeries::univariate(base.clone()).unwrap(), &cfg).unwrap().value;
            let b = lrv(&TimeSeries::univariate(shifted.clone()).unwrap(), &cfg).unwrap().value;
            assert!(
                ((a - b) / a.abs().max(1e-12)).abs() < 1e-10,
                "m={m}: {a} vs {b}"
            );
        }
    }

    fn zero_order() -> DifferenceSequence {
        DifferenceSequence::zeroth_order()
    }

    #[test]
    fn scale_equivariance() {
        let base = gauss(100, 2);
        let scaled: Vec<f64> = base.iter().map(|v| 3.0 * v).collect();
        let cfg = EstimatorConfig::new(
            diffseq::optimal_sequence(2).unwrap(),
            Kernel::Bartlett,
            5,
            10,
        );
        let a = lrv(&TimeSeries::univariate(base).unwrap(), &cfg).unwrap().value;
        let b = lrv(&TimeSeries::univariate(scaled).unwrap(), &cfg).unwrap().value;
        assert!(((b - 9.0 * a) / (9.0 * a)).abs() < 1e-10);
    }

    #[test]
    fn quadratic_form_equivalence_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..100 {
            let n = rng.random_range(32..=128);
            let m = rng.random_range(0..=3usize);
            let ell = rng.random_range(4..=10usize);
            let lambda = rng.random_range(1..=3usize);
            let h = lambda * ell;
            if m * h + ell >= n {
                continue;
            }
            let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let seq = if m == 0 { zero_order() } else { diffseq::optimal_sequence(m).unwrap() };
            let cfg = EstimatorConfig {
                seq,
                kernel: Kernel::ParzenPoly { q: 2 },
                ell,
                h,
                p: 0,
                center_differences: false,
            };
            let fast = lrv(&TimeSeries::univariate(x.clone()).unwrap(), &cfg).unwrap().value;
            let oracle = quadratic_form_oracle(&x, &cfg);
            assert!(
                (fast - oracle).abs() < 1e-10,
                "trial {trial}: n={n} m={m} ell={ell} h={h}: {fast} vs {oracle}"
            );
        }
    }

    #[test]
    fn gamma_matches_brute_force() {
        let x = gauss(20, 3);
        let seq = diffseq::optimal_sequence(1).unwrap();
        let ts = TimeSeries::univariate(x.clone()).unwrap();
        let stats = difference_statistics(&ts, &seq, 2).unwrap();
        let n = 20.0;
        let d = stats.column(0);
        for k in 0..5i64 {
            let got = gamma_hat_d(&stats, k).unwrap();
            let mut brute = 0.0;
            for i in (k as usize)..d.len() {
                brute += d[i] * d[i - k as usize];
            }
            assert!((got - brute / n).abs() < 1e-14);
        }
        assert!(gamma_hat_d(&stats, 20).is_err());
    }

    #[test]
    fn acvf_identity_exact() {
        let x = TimeSeries::univariate(gauss(50, 4)).unwrap();
        for k in 0..50i64 {
            let (lhs, rhs) = acvf_identity_check(&x, k).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "k={k}: {lhs} vs {rhs}");
            let (lhs, rhs) = acvf_identity_check(&x, -k).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
        assert!(acvf_identity_check(&x, 50).is_err());
    }

    #[test]
    fn obm_identity_m0_bartlett() {
        // With the Bartlett kernel and overlapping windows the subsampling
        // estimator collapses to overlapping batch means.
        let raw = gauss(100, 5);
        let x = TimeSeries::univariate(raw.clone()).unwrap();
        let ell = 8usize;
        let cfg = EstimatorConfig {
            seq: zero_order(),
            kernel: Kernel::Bartlett,
            ell,
            h: 1,
            p: 0,
            center_differences: false,
        };
        let got = lrv_subsampling(&x, &cfg, Overlap::Full).unwrap().value;
        let n = raw.len();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let mut obm = 0.0;
        for i in ell..=n {
            let s: f64 = centered[i - ell..i].iter().sum();
            obm += s * s;
        }
        obm /= (ell * (n - ell + 1)) as f64;
        assert!((got - obm).abs() < 1e-12, "{got} vs {obm}");
    }

    #[test]
    fn subsampling_close_to_kernel_form() {
        let x = TimeSeries::univariate(gauss(800, 6)).unwrap();
        let cfg = EstimatorConfig::new(
            diffseq::optimal_sequence(1).unwrap(),
            Kernel::Bartlett,
            10,
            20,
        );
        let a = lrv(&x, &cfg).unwrap().value;
        let b = lrv_subsampling(&x, &cfg, Overlap::Full).unwrap().value;
        // Asymptotically equivalent; at n = 800 they are already close.
        assert!((a - b).abs() < 0.3 * a.abs().max(0.1), "{a} vs {b}");
        // Non-overlapping variant also runs.
        let c = lrv_subsampling(&x, &cfg, Overlap::None).unwrap().value;
        assert!(c.is_finite());
    }

    #[test]
    fn multivariate_identical_columns() {
        let col = gauss(150, 7);
        let x = TimeSeries::multivariate(vec![col.clone(), col.clone()]).unwrap();
        let cfg = EstimatorConfig::new(
            diffseq::optimal_sequence(2).unwrap(),
            Kernel::ParzenPoly { q: 2 },
            6,
            12,
        );
        let fit = lrv_multivariate(&x, &cfg, true).unwrap();
        let uni = lrv(&TimeSeries::univariate(col).unwrap(), &cfg).unwrap().value;
        for r in 0..2 {
            for s in 0..2 {
                assert!((fit.value.get(r, s) - uni).abs() < 1e-12);
            }
        }
        let rho = long_run_correlation(&x, &cfg).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multivariate_diagonal_and_symmetry() {
        let a = gauss(200, 8);
        let b = gauss(200, 9);
        let x = TimeSeries::multivariate(vec![a.clone(), b.clone()]).unwrap();
        let cfg = EstimatorConfig::new(
            diffseq::optimal_sequence(3).unwrap(),
            Kernel::ParzenPoly { q: 2 },
            5,
            10,
        );
        let fit = lrv_multivariate(&x, &cfg, true).unwrap();
        assert!((fit.value.get(0, 1) - fit.value.get(1, 0)).abs() < 1e-12);
        let ua = lrv(&TimeSeries::univariate(a).unwrap(), &cfg).unwrap().value;
        let ub = lrv(&TimeSeries::univariate(b).unwrap(), &cfg).unwrap().value;
        assert!((fit.value.get(0, 0) - ua).abs() < 1e-12);
        assert!((fit.value.get(1, 1) - ub).abs() < 1e-12);
    }

    #[test]
    fn anti_correlated_columns() {
        let col = gauss(150, 10);
        let neg: Vec<f64> = col.iter().map(|v| -v).collect();
        let x = TimeSeries::multivariate(vec![col, neg]).unwrap();
        let cfg = EstimatorConfig::new(
            diffseq::optimal_sequence(1).unwrap(),
            Kernel::Bartlett,
            5,
            10,
        );
        let rho = long_run_correlation(&x, &cfg).unwrap();
        assert!((rho + 1.0).abs() < 1e-12);
    }

    #[test]
    fn regime_tags() {
        assert_eq!(Regime::classify(0, 1, 5), Regime::Optimal);
        assert_eq!(Regime::classify(2, 3, 5), Regime::Inconsistent);
        assert_eq!(Regime::classify(2, 5, 5), Regime::MayBeOptimal);
        assert_eq!(Regime::classify(2, 10, 5), Regime::Optimal);
    }

    #[test]
    fn insufficient_data_errors() {
        let x = TimeSeries::univariate(gauss(20, 11)).unwrap();
        let cfg = EstimatorConfig::new(
            diffseq::optimal_sequence(3).unwrap(),
            Kernel::Bartlett,
            5,
            10,
        );
        assert!(matches!(lrv(&x, &cfg), Err(LrvError::InsufficientData(_))));
    }

    #[test]
    fn series_validation() {
        assert!(TimeSeries::univariate(vec![1.0]).is_err());
        assert!(TimeSeries::univariate(vec![1.0, f64::NAN]).is_err());
        assert!(TimeSeries::multivariate(vec![vec![1.0, 2.0], vec![1.0]]).is_err());
    }
}
