//! Adaptive Simpson quadrature for the smooth 1-D integrals of the hedging
//! and stage-one layers.

use crate::error::{AmmError, Result};

fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-14 {
        // Richardson extrapolation term
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(AmmError::Convergence(format!(
            "adaptive Simpson failed to converge on [{a}, {b}]"
        )));
    }
    Ok(simpson_step(f, a, fa, m, fm, flm, left, tol / 2.0, depth - 1)?
        + simpson_step(f, m, fm, b, fb, frm, right, tol / 2.0, depth - 1)?)
}

/// ∫ₐᵇ f(x) dx to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, fa, b, fb, fm, whole, tol.max(1e-15), 40)
}
