//! Polynomial root finding via the Durand–Kerner (Weierstrass) iteration.
//!
//! Used for spectral factorization of small Laurent polynomials and for
//! checking AR stationarity; degrees here never exceed a few tens, where the
//! simultaneous iteration is accurate and fast.

use num_complex::Complex64;

use crate::{LrvError, Result};

/// Roots of `c[0] + c[1] z + ... + c[d] z^d` (`c[d] != 0`).
///
/// Returns the roots in no particular order, or a numeric error with the
/// iteration count if the simultaneous iteration does not reach `tol`.
pub fn roots(coeffs: &[f64], tol: f64, max_iter: usize) -> Result<Vec<Complex64>> {
    let d = coeffs.len() - 1;
    assert!(d >= 1, "constant polynomial has no roots");
    let lead = coeffs[d];
    assert!(lead != 0.0, "leading coefficient must be nonzero");
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();

    let eval = |z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in monic.iter().rev() {
            acc = acc * z + c;
        }
        acc
    };

    // Start on a circle of radius based on the Cauchy bound, with an
    // irrational angle offset so no starting point is a real root.
    let radius = 1.0
        + monic[..d]
            .iter()
            .fold(0.0_f64, |acc, &c| acc.max(c.abs()));
    let mut z: Vec<Complex64> = (0..d)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * (k as f64) / (d as f64) + 0.4;
            Complex64::from_polar(radius * 0.8, angle)
        })
        .collect();

    for iter in 0..max_iter {
        let mut max_step = 0.0_f64;
        for i in 0..d {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..d {
                if j != i {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                // Collided iterates: nudge and continue.
                z[i] += Complex64::new(1e-6, 1e-6);
                continue;
            }
            let step = eval(z[i]) / denom;
            z[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < tol {
            return Ok(z);
        }
        let _ = iter;
    }
    Err(LrvError::Numeric(format!(
        "root finding did not converge within {max_iter} iterations (degree {d})"
    )))
}

/// Divides a polynomial (ascending coefficients) by `(z - root)` exactly via
/// synthetic division, discarding the remainder.
pub fn deflate(coeffs: &[f64], root: f64) -> Vec<f64> {
    let d = coeffs.len() - 1;
    let mut out = vec![0.0; d];
    // Synthetic division on descending coefficients.
    let mut carry = coeffs[d];
    out[d - 1] = carry;
    for k in (1..d).rev() {
        carry = coeffs[k] + carry * root;
        out[k - 1] = carry;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_roots() {
        // z^2 - 3z + 2 = (z-1)(z-2)
        let mut r = roots(&[2.0, -3.0, 1.0], 1e-12, 200).unwrap();
        r.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((r[0] - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        assert!((r[1] - Complex64::new(2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn complex_pair() {
        // z^2 + 1
        let r = roots(&[1.0, 0.0, 1.0], 1e-12, 200).unwrap();
        for z in r {
            assert!((z.norm() - 1.0).abs() < 1e-10);
            assert!(z.re.abs() < 1e-10);
        }
    }

    #[test]
    fn deflation() {
        // (z-1)(z^2+3z+1) = z^3 + 2z^2 - 2z - 1
        let q = deflate(&[-1.0, -2.0, 2.0, 1.0], 1.0);
        assert_eq!(q.len(), 3);
        assert!((q[0] - 1.0).abs() < 1e-12);
        assert!((q[1] - 3.0).abs() < 1e-12);
        assert!((q[2] - 1.0).abs() < 1e-12);
    }
}
