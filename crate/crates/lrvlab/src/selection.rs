//! Plug-in bandwidth selection and the suggested LRV estimator.
//!
//! The MSE-optimal bandwidth is
//! `ℓ* = {q (v_q/v)² B² n / (2AΔ_m)}^{1/(1+2q)}`; the unknown ratio is
//! estimated by a pair of pilot estimators at fixed rate-optimal pilot
//! bandwidths (`2n^{1/(5+2q)}` for `v_q`, `2n^{1/5}` for `v`), both with the
//! polynomial kernel of the configured order and the optimal difference
//! sequence. The final estimate is computed at bandwidth `⌈ℓ̂*⌉` with
//! `h = 2⌈ℓ̂*⌉`, so `λ = 2` holds exactly in finite samples.
//!
//! Everything in this pipeline uses the summand-count divisor for
//! `γ̂_k^D`: with `λ = 2` and `m` up to 3 the differencing span `mh` eats a
//! visible fraction of moderate samples, and the `mh/n` edge bias of the
//! divide-by-`n` convention would otherwise swamp the efficiency gain that
//! distinguishes the orders.

use serde::{Deserialize, Serialize};

use crate::diffseq::{self, DifferenceSequence};
use crate::estimators::{
    lrv_with_divisor, EstimatorConfig, LagDivisor, LrvResult, TimeSeries,
};
use crate::kernels::Kernel;
use crate::rcp::{self, RcpReport};
use crate::{LrvError, Result};

/// Configuration of the plug-in pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlugInConfig {
    /// Order of differencing (0 gives the classical globally-centered
    /// estimator).
    pub m: usize,
    /// Kernel of the final estimate; must declare a characteristic
    /// exponent.
    pub kernel: Kernel,
    /// Characteristic exponent; must equal the kernel's own `q`.
    pub q: u32,
    /// Lag-to-bandwidth ratio; fixed at 2 (the matching-property regime).
    pub lambda: f64,
    /// Run the rough centering procedure first.
    pub apply_rcp: bool,
    /// Exponent of the fallback bandwidth `⌈1.5 n^e⌉` used when the pilots
    /// are degenerate.
    pub fallback_exponent: f64,
}

impl Default for PlugInConfig {
    /// The recommended preset: `m = 3`, polynomial kernel with `q = 2`,
    /// `λ = 2`, rough centering on.
    fn default() -> Self {
        PlugInConfig {
            m: 3,
            kernel: Kernel::ParzenPoly { q: 2 },
            q: 2,
            lambda: 2.0,
            apply_rcp: true,
            fallback_exponent: 0.2,
        }
    }
}

impl PlugInConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let kq = self.kernel.q().ok_or_else(|| {
            LrvError::Config(format!(
                "kernel '{}' declares no characteristic exponent; \
                 the plug-in bandwidth needs q and B",
                self.kernel
            ))
        })?;
        if kq != self.q {
            return Err(LrvError::Config(format!(
                "configured q = {} does not match the kernel's q = {kq}",
                self.q
            )));
        }
        if self.lambda != 2.0 {
            return Err(LrvError::Config(
                "the plug-in pipeline fixes lambda = 2".into(),
            ));
        }
        if self.m > 10 {
            return Err(LrvError::Config("plug-in supports m <= 10".into()));
        }
        Ok(())
    }

    fn sequence(&self) -> Result<DifferenceSequence> {
        if self.m == 0 {
            Ok(DifferenceSequence::zeroth_order())
        } else {
            diffseq::optimal_sequence(self.m)
        }
    }
}

/// `Δ_m` of the optimal sequence and the bandwidth formula, exposed for
/// direct use: `ℓ* = {q r² B² n / (2AΔ_m)}^{1/(1+2q)}` with `r = v_q/v`.
pub fn optimal_bandwidth(
    vq_over_v: f64,
    kernel: &Kernel,
    m: usize,
    n: usize,
    q: u32,
) -> Result<f64> {
    kernel.validate()?;
    let (kq, b) = match (kernel.q(), kernel.b_const()) {
        (Some(kq), Some(b)) => (kq, b),
        _ => {
            return Err(LrvError::Config(format!(
                "kernel '{kernel}' has no (q, B); cannot form the optimal bandwidth"
            )))
        }
    };
    if kq != q {
        return Err(LrvError::Config(format!(
            "requested q = {q} does not match the kernel's q = {kq}"
        )));
    }
    if n < 10 {
        return Err(LrvError::InsufficientData("optimal bandwidth needs n >= 10".into()));
    }
    if vq_over_v == 0.0 {
        return Err(LrvError::Domain(
            "degenerate spectrum: v_q/v = 0 admits no MSE-optimal bandwidth".into(),
        ));
    }
    let delta_m = if m == 0 { 1.0 } else { 1.0 + 0.5 / m as f64 };
    let a = kernel.a_const();
    let qf = q as f64;
    Ok(
        (qf * vq_over_v * vq_over_v * b * b * n as f64 / (2.0 * a * delta_m))
            .powf(1.0 / (1.0 + 2.0 * qf)),
    )
}

/// Pilot bandwidths `(⌈2n^{1/(5+2q)}⌉, ⌈2n^{1/5}⌉)` for `(v̂_q, v̂)`.
pub fn pilot_bandwidths(n: usize, q: u32) -> (usize, usize) {
    let nf = n as f64;
    let lq = (2.0 * nf.powf(1.0 / (5.0 + 2.0 * q as f64))).ceil() as usize;
    let l0 = (2.0 * nf.powf(0.2)).ceil() as usize;
    (lq.max(1), l0.max(1))
}

/// Diagnostics of one plug-in run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuggestedFit {
    /// The final estimate.
    pub lrv: LrvResult,
    /// Pilot estimate of `v`.
    pub pilot_v: f64,
    /// Pilot estimate of `v_q`.
    pub pilot_vq: f64,
    /// The unrounded `ℓ̂*`, when the pilots were usable.
    pub ell_star: Option<f64>,
    /// Whether the degeneracy fallback bandwidth was used.
    pub fallback_used: bool,
    /// The rough-centering report, when centering ran.
    pub rcp: Option<RcpReport>,
}

/// Pilot estimates `(v̂♯, v̂_q♯)` on an already rough-centered series.
pub fn pilot_estimates(x: &TimeSeries, cfg: &PlugInConfig) -> Result<(f64, f64)> {
    let (v, vq, _) = pilots_with_gamma0(x, cfg)?;
    Ok((v, vq))
}

fn pilots_with_gamma0(x: &TimeSeries, cfg: &PlugInConfig) -> Result<(f64, f64, f64)> {
    cfg.validate()?;
    let n = x.n();
    let (ell_q, ell_0) = pilot_bandwidths(n, cfg.q);
    let seq = cfg.sequence()?;
    let pilot_kernel = Kernel::ParzenPoly { q: cfg.q };
    let h = |ell: usize| if cfg.m == 0 { 1 } else { 2 * ell };

    let vq_fit = lrv_with_divisor(
        x,
        &EstimatorConfig {
            seq: seq.clone(),
            kernel: pilot_kernel.clone(),
            ell: ell_q,
            h: h(ell_q),
            p: cfg.q,
            center_differences: false,
        },
        LagDivisor::SummandCount,
    )?;
    let v_fit = lrv_with_divisor(
        x,
        &EstimatorConfig {
            seq,
            kernel: pilot_kernel,
            ell: ell_0,
            h: h(ell_0),
            p: 0,
            center_differences: false,
        },
        LagDivisor::SummandCount,
    )?;
    Ok((v_fit.value, vq_fit.value, v_fit.gamma_d[0]))
}

/// The suggested estimator: rough centering, pilot estimates, plug-in
/// bandwidth, and the final kernel estimate with the optimal sequence.
pub fn suggested_estimator(x: &TimeSeries, cfg: &PlugInConfig) -> Result<SuggestedFit> {
    cfg.validate()?;
    if x.dims() != 1 {
        return Err(LrvError::Config(
            "the suggested estimator expects a univariate series".into(),
        ));
    }
    let n = x.n();
    if n < 50 {
        return Err(LrvError::InsufficientData(format!(
            "the plug-in pipeline needs n >= 50 (got {n})"
        )));
    }

    let (centered, rcp_report) = if cfg.apply_rcp {
        let (c, r) = rcp::rough_center(x)?;
        (c, Some(r))
    } else {
        (x.clone(), None)
    };

    let (pilot_v, pilot_vq, gamma0) = pilots_with_gamma0(&centered, cfg)?;

    // Degenerate pilots: a vanishing v̂♯ (flat series) or an explosive
    // ratio cannot be trusted; fall back to a deterministic rate-correct
    // bandwidth.
    let ratio_sq = if pilot_v == 0.0 {
        f64::INFINITY
    } else {
        (pilot_vq / pilot_v).powi(2)
    };
    let degenerate = pilot_v <= 1e-10 * gamma0.abs() || ratio_sq > n as f64;

    let (ell_star, ell_raw, fallback_used) = if degenerate {
        let ell = (1.5 * (n as f64).powf(cfg.fallback_exponent)).ceil();
        (None, ell, true)
    } else {
        let raw = optimal_bandwidth(pilot_vq / pilot_v, &cfg.kernel, cfg.m, n, cfg.q)?;
        (Some(raw), raw.ceil(), false)
    };

    // Keep mh + ell < n with room to spare: ell <= (n-1)/(2m+2).
    let ell_max = if cfg.m == 0 { (n - 1) / 2 } else { (n - 1) / (2 * cfg.m + 2) };
    let ell = (ell_raw as usize).clamp(2, ell_max.max(2));
    let h = if cfg.m == 0 { 1 } else { 2 * ell };

    let fit = lrv_with_divisor(
        &centered,
        &EstimatorConfig {
            seq: cfg.sequence()?,
            kernel: cfg.kernel.clone(),
            ell,
            h,
            p: 0,
            center_differences: false,
        },
        LagDivisor::SummandCount,
    )?;

    Ok(SuggestedFit {
        lrv: fit,
        pilot_v,
        pilot_vq,
        ell_star,
        fallback_used,
        rcp: rcp_report,
    })
}

/// The asymptotic MSE constant at the optimal bandwidth:
/// `M_(m) = (1+2q){B² (2AΔ_m/q)^{2q} η_q²}^{1/(1+2q)}` with `η_q = |v_q/v|`.
pub fn asymptotic_mse_constant(
    kernel: &Kernel,
    m: usize,
    q: u32,
    eta_q: f64,
) -> Result<f64> {
    let (kq, b) = match (kernel.q(), kernel.b_const()) {
        (Some(kq), Some(b)) => (kq, b),
        _ => {
            return Err(LrvError::Config(format!(
                "kernel '{kernel}' has no (q, B) constants"
            )))
        }
    };
    if kq != q {
        return Err(LrvError::Config(format!(
            "requested q = {q} does not match the kernel's q = {kq}"
        )));
    }
    let delta_m = if m == 0 { 1.0 } else { 1.0 + 0.5 / m as f64 };
    let a = kernel.a_const();
    let qf = q as f64;
    let inner = b * b * (2.0 * a * delta_m / qf).powf(2.0 * qf) * eta_q * eta_q;
    Ok((1.0 + 2.0 * qf) * inner.powf(1.0 / (1.0 + 2.0 * qf)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn optimal_bandwidth_worked_example() {
        // q=2, B=-1, A=8/15, Δ_3=7/6, ratio 1, n=512.
        let got = optimal_bandwidth(1.0, &Kernel::ParzenPoly { q: 2 }, 3, 512, 2).unwrap();
        assert!((got - 3.8288194609016215).abs() < 1e-9, "{got}");
    }

    #[test]
    fn optimal_bandwidth_power_law_in_n() {
        let k = Kernel::ParzenPoly { q: 2 };
        let a = optimal_bandwidth(1.0, &k, 3, 1000, 2).unwrap();
        let b = optimal_bandwidth(1.0, &k, 3, 2000, 2).unwrap();
        assert!((b / a - 2.0f64.powf(0.2)).abs() < 1e-12);
    }

    #[test]
    fn optimal_bandwidth_monotone_in_delta_m() {
        let k = Kernel::ParzenPoly { q: 2 };
        // Larger Δ_m (smaller m) gives a smaller ℓ*.
        let l1 = optimal_bandwidth(1.0, &k, 1, 512, 2).unwrap();
        let l3 = optimal_bandwidth(1.0, &k, 3, 512, 2).unwrap();
        assert!(l1 < l3);
    }

    #[test]
    fn optimal_bandwidth_domain_errors() {
        let k = Kernel::ParzenPoly { q: 2 };
        assert!(optimal_bandwidth(0.0, &k, 3, 512, 2).is_err());
        assert!(optimal_bandwidth(1.0, &Kernel::Truncated, 3, 512, 2).is_err());
        assert!(optimal_bandwidth(1.0, &k, 3, 512, 1).is_err());
    }

    #[test]
    fn pilot_bandwidth_arithmetic() {
        // ⌈2·512^{1/9}⌉ = ⌈4⌉ = 4 and ⌈2·512^{1/5}⌉ = ⌈6.96⌉ = 7.
        assert_eq!(pilot_bandwidths(512, 2), (4, 7));
        assert_eq!(pilot_bandwidths(200, 2), (4, 6));
        assert_eq!(pilot_bandwidths(5000, 2), (6, 11));
    }

    #[test]
    fn mismatched_q_is_config_error() {
        let cfg = PlugInConfig { q: 1, ..PlugInConfig::default() };
        assert!(matches!(cfg.validate(), Err(LrvError::Config(_))));
        let cfg = PlugInConfig { lambda: 1.0, ..PlugInConfig::default() };
        assert!(matches!(cfg.validate(), Err(LrvError::Config(_))));
        let cfg = PlugInConfig { kernel: Kernel::Truncated, ..PlugInConfig::default() };
        assert!(matches!(cfg.validate(), Err(LrvError::Config(_))));
    }

    #[test]
    fn mse_constant_reference_values() {
        // Bartlett, m=3, q=1, η=1: (49/3)^{1/3}.
        let m3 = asymptotic_mse_constant(&Kernel::Bartlett, 3, 1, 1.0).unwrap();
        assert!((m3 - (49.0f64 / 3.0).powf(1.0 / 3.0)).abs() < 1e-10);
    }

    #[test]
    fn mse_constant_monotone_in_m() {
        for (kernel, q) in [(Kernel::Bartlett, 1), (Kernel::ParzenPoly { q: 2 }, 2)] {
            let mut prev = f64::INFINITY;
            for m in 1..=4 {
                let v = asymptotic_mse_constant(&kernel, m, q, 1.0).unwrap();
                assert!(v < prev, "{kernel}: M_({m}) not decreasing");
                prev = v;
            }
        }
    }

    #[test]
    fn constant_series_pilots_are_zero() {
        let x = TimeSeries::univariate(vec![7.0; 400]).unwrap();
        let cfg = PlugInConfig::default();
        let (v, vq) = pilot_estimates(&x, &cfg).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(vq, 0.0);
        // The full pipeline falls back instead of erroring.
        let fit = suggested_estimator(&x, &cfg).unwrap();
        assert!(fit.fallback_used);
        assert_eq!(fit.lrv.value, 0.0);
    }

    #[test]
    fn white_noise_pilots() {
        // For iid noise v = γ_0 and v_q = 0; over replications the pilot
        // means should land within Monte Carlo error of those targets.
        let reps = 200;
        let n = 10_000;
        let cfg = PlugInConfig { apply_rcp: false, ..PlugInConfig::default() };
        let mut vs = Vec::with_capacity(reps);
        let mut vqs = Vec::with_capacity(reps);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..reps {
            let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let (v, vq) = pilot_estimates(&TimeSeries::univariate(x).unwrap(), &cfg).unwrap();
            vs.push(v);
            vqs.push(vq);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let se = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
                / v.len() as f64)
                .sqrt()
        };
        let (mv, sev) = (mean(&vs), se(&vs));
        let (mq, seq_) = (mean(&vqs), se(&vqs));
        assert!((mv - 1.0).abs() <= 3.0 * sev.max(1e-3), "v pilot mean {mv} (se {sev})");
        assert!(mq.abs() <= 3.0 * seq_.max(1e-3), "v_q pilot mean {mq} (se {seq_})");
    }

    #[test]
    fn suggested_shift_invariant_and_scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base: Vec<f64> = (0..300).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let cfg = PlugInConfig::default();
        let fit = suggested_estimator(&TimeSeries::univariate(base.clone()).unwrap(), &cfg)
            .unwrap();

        let shifted: Vec<f64> = base.iter().map(|v| v + 500.0).collect();
        let fit_shift =
            suggested_estimator(&TimeSeries::univariate(shifted).unwrap(), &cfg).unwrap();
        assert!(
            ((fit.lrv.value - fit_shift.lrv.value) / fit.lrv.value).abs() < 1e-9,
            "{} vs {}",
            fit.lrv.value,
            fit_shift.lrv.value
        );
        assert_eq!(fit.lrv.ell, fit_shift.lrv.ell);

        let scaled: Vec<f64> = base.iter().map(|v| 3.0 * v).collect();
        let fit_scale =
            suggested_estimator(&TimeSeries::univariate(scaled).unwrap(), &cfg).unwrap();
        // Pilots co-scale, so the selected bandwidth is unchanged and the
        // estimate scales by c².
        assert_eq!(fit.lrv.ell, fit_scale.lrv.ell);
        assert!(
            ((fit_scale.lrv.value - 9.0 * fit.lrv.value) / (9.0 * fit.lrv.value)).abs() < 1e-9
        );
    }

    #[test]
    fn short_series_rejected() {
        let x = TimeSeries::univariate(vec![0.0; 49]).unwrap();
        assert!(matches!(
            suggested_estimator(&x, &PlugInConfig::default()),
            Err(LrvError::InsufficientData(_))
        ));
    }
}
