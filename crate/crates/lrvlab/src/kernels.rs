//! Compactly supported smoothing kernels and their analytic constants.
//!
//! Every kernel here satisfies `K(0) = 1`, `K(t) = K(-t)`, and `K(t) = 0`
//! for `|t| ≥ 1`. The constants exposed are the ones the bandwidth theory
//! consumes: the characteristic exponent `q` with its curvature constant
//! `B` (near-origin flatness), the boundary exponent `q'` with `B'`
//! (near-boundary flatness), `A = ∫₀¹K²`, `A_p = ∫₀¹ t^{2p}K²`, and
//! `κ = ∫₋₁¹K`.
//!
//! The differencing kernel [`Kernel::k_diff`] is the effective kernel a
//! difference-based estimator applies to raw autocovariances: a δ-weighted
//! superposition of shifted copies of `K`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::diffseq::DifferenceSequence;
use crate::{LrvError, Result};

/// Kernel catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Kernel {
    /// `(1 - |t|)⁺` (Newey–West).
    Bartlett,
    /// `(1 - |t|^q)⁺`, Parzen's polynomial family.
    ParzenPoly { q: u32 },
    /// `{1 + cos(πt)}/2` on `|t| ≤ 1`.
    TukeyHanning,
    /// The classical piecewise-cubic Parzen kernel.
    ParzenClassic,
    /// The smoothness-repaired polynomial kernel with matching boundary
    /// exponent `q' = q`.
    ModifiedPoly { q: u32 },
    /// `1(|t| < 1)`.
    Truncated,
    /// Flat on `[0, c]`, linear taper to zero on `(c, 1]`; `c ∈ (0, 1)`.
    Trapezoidal { c: f64 },
    /// `{K₀(t) - c K₀(rt)}/(1 - c)` with `r ≥ 1`, `c ∈ [0, 1)`.
    Lugsail { base: Box<Kernel>, r: f64, c: f64 },
}

impl Kernel {
    /// Validates the shape parameters.
    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::ParzenPoly { q } | Kernel::ModifiedPoly { q } => {
                if *q == 0 {
                    return Err(LrvError::Config("polynomial kernel needs q >= 1".into()));
                }
            }
            Kernel::Trapezoidal { c } => {
                if !(*c > 0.0 && *c < 1.0) {
                    return Err(LrvError::Config(format!(
                        "trapezoidal kernel needs c in (0,1), got {c}"
                    )));
                }
            }
            Kernel::Lugsail { base, r, c } => {
                base.validate()?;
                if *r < 1.0 || !(0.0..1.0).contains(c) {
                    return Err(LrvError::Config(format!(
                        "lugsail kernel needs r >= 1 and c in [0,1), got r={r}, c={c}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Kernel value at `t`; compact support is enforced exactly.
    pub fn evaluate(&self, t: f64) -> f64 {
        let a = t.abs();
        if a >= 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Bartlett => 1.0 - a,
            Kernel::ParzenPoly { q } => 1.0 - a.powi(*q as i32),
            Kernel::TukeyHanning => 0.5 * (1.0 + (std::f64::consts::PI * a).cos()),
            Kernel::ParzenClassic => {
                if a <= 0.5 {
                    1.0 - 6.0 * a * a + 6.0 * a * a * a
                } else {
                    2.0 * (1.0 - a).powi(3)
                }
            }
            Kernel::ModifiedPoly { q } => {
                let q = *q as i32;
                let (aa, bb) = modified_poly_ab(q);
                if a <= 0.5 {
                    1.0 - a.powi(q) + aa * a.powi(q + 1) + bb * a.powi(q + 2)
                } else {
                    let u = 1.0 - a;
                    u.powi(q) - aa * u.powi(q + 1) - bb * u.powi(q + 2)
                }
            }
            Kernel::Truncated => 1.0,
            Kernel::Trapezoidal { c } => {
                if a <= *c {
                    1.0
                } else {
                    (1.0 - a) / (1.0 - c)
                }
            }
            Kernel::Lugsail { base, r, c } => {
                (base.evaluate(t) - c * base.evaluate(r * t)) / (1.0 - c)
            }
        }
    }

    /// Characteristic exponent `q` from the near-origin expansion
    /// `K(t) - 1 ~ B|t|^q`, when it exists.
    pub fn q(&self) -> Option<u32> {
        match self {
            Kernel::Bartlett => Some(1),
            Kernel::ParzenPoly { q } | Kernel::ModifiedPoly { q } => Some(*q),
            Kernel::TukeyHanning | Kernel::ParzenClassic => Some(2),
            Kernel::Truncated | Kernel::Trapezoidal { .. } => None,
            Kernel::Lugsail { base, .. } => base.q(),
        }
    }

    /// The constant `B` paired with `q`.
    pub fn b_const(&self) -> Option<f64> {
        match self {
            Kernel::Bartlett => Some(-1.0),
            Kernel::ParzenPoly { .. } | Kernel::ModifiedPoly { .. } => Some(-1.0),
            Kernel::TukeyHanning => Some(-std::f64::consts::PI * std::f64::consts::PI / 4.0),
            Kernel::ParzenClassic => Some(-6.0),
            Kernel::Truncated | Kernel::Trapezoidal { .. } => None,
            Kernel::Lugsail { base, r, c } => {
                let b0 = base.b_const()?;
                let q = base.q()? as i32;
                Some(b0 * (1.0 - c * r.powi(q)) / (1.0 - c))
            }
        }
    }

    /// Boundary exponent `q'` from `K(1) - K(1-t) ~ B'|t|^{q'}`.
    pub fn q_prime(&self) -> Option<u32> {
        match self {
            Kernel::Bartlett | Kernel::ParzenPoly { .. } | Kernel::Trapezoidal { .. } => Some(1),
            Kernel::TukeyHanning => Some(2),
            Kernel::ParzenClassic => Some(3),
            Kernel::ModifiedPoly { q } => Some(*q),
            Kernel::Truncated => None,
            // The boundary order of a lugsail transform depends on the
            // base kernel in a way the catalog leaves open.
            Kernel::Lugsail { .. } => None,
        }
    }

    /// The constant `B'` paired with `q'`.
    pub fn b_prime(&self) -> Option<f64> {
        match self {
            Kernel::Bartlett => Some(-1.0),
            Kernel::ParzenPoly { q } => Some(-(*q as f64)),
            Kernel::TukeyHanning => Some(-std::f64::consts::PI * std::f64::consts::PI / 4.0),
            Kernel::ParzenClassic => Some(-2.0),
            Kernel::ModifiedPoly { .. } => Some(-1.0),
            Kernel::Trapezoidal { c } => Some(-1.0 / (1.0 - c)),
            Kernel::Truncated | Kernel::Lugsail { .. } => None,
        }
    }

    /// `A = ∫₀¹ K²(t) dt`. Closed-form for the polynomial family, adaptive
    /// quadrature otherwise.
    pub fn a_const(&self) -> f64 {
        match self {
            Kernel::Bartlett => 1.0 / 3.0,
            Kernel::ParzenPoly { q } => {
                let q = *q as f64;
                1.0 - 2.0 / (q + 1.0) + 1.0 / (2.0 * q + 1.0)
            }
            Kernel::TukeyHanning => 3.0 / 8.0,
            Kernel::ParzenClassic => 151.0 / 560.0,
            Kernel::Truncated => 1.0,
            Kernel::Trapezoidal { c } => c + (1.0 - c) / 3.0,
            _ => self.a_p(0),
        }
    }

    /// `A_p = ∫₀¹ t^{2p} K²(t) dt`.
    pub fn a_p(&self, p: u32) -> f64 {
        match self {
            Kernel::Bartlett => {
                let p = p as f64;
                1.0 / (2.0 * p + 1.0) - 2.0 / (2.0 * p + 2.0) + 1.0 / (2.0 * p + 3.0)
            }
            Kernel::ParzenPoly { q } => {
                let (p, q) = (p as f64, *q as f64);
                1.0 / (2.0 * p + 1.0) - 2.0 / (2.0 * p + q + 1.0) + 1.0 / (2.0 * p + 2.0 * q + 1.0)
            }
            Kernel::Truncated => 1.0 / (2.0 * p as f64 + 1.0),
            _ => {
                let f = |t: f64| {
                    let k = self.evaluate(t);
                    t.powi(2 * p as i32) * k * k
                };
                // Split at the piecewise breakpoints so each panel is smooth.
                integrate(&f, 0.0, 0.5) + integrate(&f, 0.5, 1.0)
            }
        }
    }

    /// `κ = ∫₋₁¹ K(t) dt`.
    pub fn kappa(&self) -> f64 {
        match self {
            Kernel::Bartlett => 1.0,
            Kernel::ParzenPoly { q } => 2.0 * *q as f64 / (*q as f64 + 1.0),
            Kernel::TukeyHanning => 1.0,
            Kernel::ParzenClassic => 0.75,
            Kernel::Truncated => 2.0,
            Kernel::Trapezoidal { c } => 1.0 + c,
            _ => 2.0 * (integrate(&|t| self.evaluate(t), 0.0, 0.5)
                + integrate(&|t| self.evaluate(t), 0.5, 1.0)),
        }
    }

    /// The differencing kernel
    /// `K_diff(t) = Σ_{s=⌈-(1+t)/λ⌉}^{⌊(1-t)/λ⌋} δ_{|s|} K(t + λs)`.
    pub fn k_diff(&self, seq: &DifferenceSequence, lambda: f64, t: f64) -> f64 {
        let lo = (-(1.0 + t) / lambda).ceil() as i64;
        let hi = ((1.0 - t) / lambda).floor() as i64;
        (lo..=hi)
            .map(|s| seq.delta(s) * self.evaluate(t + lambda * s as f64))
            .sum()
    }

    /// `K_diff(k/ℓ)` with `λ = h/ℓ`, the summation limits evaluated in
    /// exact integer arithmetic so lattice points never straddle a
    /// float-rounded boundary.
    pub fn k_diff_lattice(&self, seq: &DifferenceSequence, k: i64, ell: u64, h: u64) -> f64 {
        let (ell_i, h_i) = (ell as i64, h as i64);
        // ⌈-(ℓ+k)/h⌉ and ⌊(ℓ-k)/h⌋.
        let lo = -(ell_i + k).div_euclid(h_i);
        let hi = (ell_i - k).div_euclid(h_i);
        let lambda = h as f64 / ell as f64;
        let t = k as f64 / ell as f64;
        (lo..=hi)
            .map(|s| seq.delta(s) * self.evaluate(t + lambda * s as f64))
            .sum()
    }
}

fn modified_poly_ab(q: i32) -> (f64, f64) {
    let two_q = 2.0_f64.powi(q);
    let a = 4.0 - (q as f64 + 1.0) * two_q;
    let b = q as f64 * 2.0 * two_q - 4.0;
    (a, b)
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Bartlett => write!(f, "bartlett"),
            Kernel::ParzenPoly { q } => write!(f, "parzen_poly:q={q}"),
            Kernel::TukeyHanning => write!(f, "tukey_hanning"),
            Kernel::ParzenClassic => write!(f, "parzen_classic"),
            Kernel::ModifiedPoly { q } => write!(f, "modified_poly:q={q}"),
            Kernel::Truncated => write!(f, "truncated"),
            Kernel::Trapezoidal { c } => write!(f, "trapezoidal:c={c}"),
            Kernel::Lugsail { base, r, c } => write!(f, "lugsail:base={base},r={r},c={c}"),
        }
    }
}

impl FromStr for Kernel {
    type Err = LrvError;

    /// Parses names like `bartlett`, `parzen_poly:q=2`, `trapezoidal:c=0.5`,
    /// `lugsail:base=bartlett,r=2,c=0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s.trim(), None),
        };
        let get = |key: &str| -> Result<f64> {
            let args = args.ok_or_else(|| {
                LrvError::Config(format!("kernel '{name}' requires parameter '{key}'"))
            })?;
            for part in args.split(',') {
                if let Some((k, v)) = part.split_once('=') {
                    if k.trim() == key {
                        return v.trim().parse::<f64>().map_err(|_| {
                            LrvError::Config(format!("invalid value for '{key}': {v}"))
                        });
                    }
                }
            }
            Err(LrvError::Config(format!(
                "kernel '{name}' requires parameter '{key}'"
            )))
        };
        let kernel = match name {
            "bartlett" => Kernel::Bartlett,
            "parzen_poly" => Kernel::ParzenPoly { q: get("q")? as u32 },
            "tukey_hanning" => Kernel::TukeyHanning,
            "parzen_classic" => Kernel::ParzenClassic,
            "modified_poly" => Kernel::ModifiedPoly { q: get("q")? as u32 },
            "truncated" => Kernel::Truncated,
            "trapezoidal" => Kernel::Trapezoidal { c: get("c")? },
            "lugsail" => {
                let args = args.ok_or_else(|| {
                    LrvError::Config("lugsail requires base=,r=,c=".into())
                })?;
                let mut base = None;
                for part in args.split(',') {
                    if let Some((k, v)) = part.split_once('=') {
                        if k.trim() == "base" {
                            base = Some(Kernel::from_str(v.trim())?);
                        }
                    }
                }
                Kernel::Lugsail {
                    base: Box::new(base.ok_or_else(|| {
                        LrvError::Config("lugsail requires base=<kernel>".into())
                    })?),
                    r: get("r")?,
                    c: get("c")?,
                }
            }
            other => {
                return Err(LrvError::Config(format!("unknown kernel '{other}'")));
            }
        };
        kernel.validate()?;
        Ok(kernel)
    }
}

/// Adaptive Gauss–Legendre quadrature on `[a, b]`, refined by interval
/// halving until the panel estimates agree to `1e-12`.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    fn gl15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let (nodes, weights) = gauss_legendre_15();
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        nodes
            .iter()
            .zip(weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
    fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let left = gl15(f, a, mid);
        let right = gl15(f, mid, b);
        if depth >= 30 || (left + right - whole).abs() < 1e-12 {
            left + right
        } else {
            adapt(f, a, mid, left, depth + 1) + adapt(f, mid, b, right, depth + 1)
        }
    }
    adapt(f, a, b, gl15(f, a, b), 0)
}

/// 15-point Gauss–Legendre nodes/weights on `[-1, 1]`, computed once by
/// Newton iteration on the Legendre polynomial.
fn gauss_legendre_15() -> (&'static [f64; 15], &'static [f64; 15]) {
    static TABLE: OnceLock<([f64; 15], [f64; 15])> = OnceLock::new();
    let (n, w) = TABLE.get_or_init(|| {
        let deg = 15usize;
        let mut nodes = [0.0; 15];
        let mut weights = [0.0; 15];
        for i in 0..deg {
            // Chebyshev initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (deg as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(deg, x);
                let step = p / dp;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre(deg, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    });
    (n, w)
}

/// Legendre polynomial `P_n(x)` and its derivative via the three-term
/// recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
