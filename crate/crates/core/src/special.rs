//! Upper incomplete gamma function for real order.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_TERMS: usize = 10_000;

/// `Γ(a, z) = ∫_z^∞ t^{a−1} e^{−t} dt` for real `a` and `z > 0`.
pub fn upper_gamma(a: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::InvalidParameter(format!("upper_gamma needs z > 0, got {z}")));
    }
    if a > 0.0 && z < a + 1.0 {
        // Γ(a) − γ(a, z) via the power series of the lower function
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..MAX_TERMS {
            ap += 1.0;
            term *= z / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                let lower = sum * (-z + a * z.ln()).exp();
                return Ok(gamma(a) - lower);
            }
        }
        return Err(Error::Quadrature(format!("lower gamma series for a = {a}, z = {z} did not converge")));
    }
    // Legendre continued fraction, modified Lentz
    let mut b = z + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok((-z + a * z.ln()).exp() * h);
        }
    }
    Err(Error::Quadrature(format!("incomplete gamma fraction for a = {a}, z = {z} did not converge")))
}
