//! The tanh/cosh tracking kernels of the no-transient-impact solution:
//! P(t) = β̂ tanh(β̂(t−T)), P̃(s,t) = cosh(β̂(t−T))/cosh(β̂(s−T)), plus the
//! exponential-weighted integrals w(s,ρ) = ∫ₛᵀ P̃(s,t) e^{ρ(t−s)} dt that
//! every closed-form ℓ and stage-one expression reduces to.
//!
//! All cosh ratios are evaluated in log space so large β̂T never overflows.

use crate::hedging::HedgeParams;

/// log cosh(x), stable for any |x|.
pub fn logcosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

/// expm1(z)/z, continuous through z = 0.
pub(crate) fn exprel(z: f64) -> f64 {
    if z.abs() < 1e-250 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// Tracking kernels at rate β̂ = √(φ/2η) on horizon [0, T].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingKernels {
    pub rate: f64,
    pub horizon_t: f64,
}

impl TrackingKernels {
    pub fn new(hp: &HedgeParams, horizon_t: f64) -> Self {
        Self { rate: hp.tracking_rate(), horizon_t }
    }

    pub fn from_rate(rate: f64, horizon_t: f64) -> Self {
        Self { rate, horizon_t }
    }

    /// P(t) = β̂ tanh(β̂(t−T)) ≤ 0 on [0, T].
    pub fn p(&self, t: f64) -> f64 {
        self.rate * (self.rate * (t - self.horizon_t)).tanh()
    }

    /// P̃(s,t) = cosh(β̂(t−T))/cosh(β̂(s−T)) for s ≤ t ≤ T.
    pub fn ptilde(&self, s: f64, t: f64) -> f64 {
        let b = self.rate;
        (logcosh(b * (t - self.horizon_t)) - logcosh(b * (s - self.horizon_t))).exp()
    }

    /// w(s, ρ) = ∫ₛᵀ P̃(s,t) e^{ρ(t−s)} dt, in closed form:
    /// ½[(e^{β̂Δ}−e^{ρΔ})/(β̂−ρ) + (e^{ρΔ}−e^{−β̂Δ})/(β̂+ρ)]/cosh(β̂Δ), Δ = T−s.
    pub fn w(&self, s: f64, rho: f64) -> f64 {
        let b = self.rate;
        let d = self.horizon_t - s;
        if d <= 0.0 {
            return 0.0;
        }
        let l = logcosh(b * d);
        // (e^{xΔ−L} − e^{yΔ−L})/(x−y) = Δ e^{yΔ−L} exprel((x−y)Δ), switching
        // to the direct difference when the exprel argument would overflow
        let term = |x: f64, y: f64| -> f64 {
            let z = (x - y) * d;
            if z.abs() < 500.0 {
                d * (y * d - l).exp() * exprel(z)
            } else {
                ((x * d - l).exp() - (y * d - l).exp()) / (x - y)
            }
        };
        0.5 * (term(b, rho) + term(rho, -b))
    }

    /// g(s) of the A = 0 closed forms: w(s, 3σ²/8).
    pub fn g(&self, s: f64, sigma: f64) -> f64 {
        self.w(s, 3.0 * sigma * sigma / 8.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn kern(rate: f64, t: f64) -> TrackingKernels {
        TrackingKernels::from_rate(rate, t)
    }

    #[test]
    fn logcosh_matches_naive_and_survives_large_args() {
        for &x in &[-3.0, -0.5, 0.0, 0.2, 4.0] {
            assert_relative_eq!(logcosh(x), (x as f64).cosh().ln(), epsilon = 1e-14);
        }
        // naive cosh overflows near 710; log form stays linear
        assert_relative_eq!(logcosh(1e4), 1e4 - std::f64::consts::LN_2, max_relative = 1e-14);
    }

    #[test]
    fn terminal_and_diagonal_values() {
        let k = kern(1.0, 1.0);
        assert_eq!(k.p(1.0), 0.0);
        assert_eq!(k.ptilde(0.3, 0.3), 1.0);
        assert_eq!(k.ptilde(1.0, 1.0), 1.0);
        // φ/2η = 1, T = 1: P(0) = tanh(−1)
        assert_relative_eq!(k.p(0.0), -(1.0f64).tanh(), max_relative = 1e-14);
        assert_abs_diff_eq!(k.p(0.0), -0.761594, epsilon = 1e-6);
    }

    #[test]
    fn ptilde_range_and_semigroup() {
        let k = kern(2.3, 1.5);
        for i in 0..=10 {
            let s = 0.15 * i as f64;
            for j in i..=10 {
                let t = 0.15 * j as f64;
                let v = k.ptilde(s, t);
                assert!(v > 0.0 && v <= 1.0 + 1e-15);
                for m in i..=j {
                    let u = 0.15 * m as f64;
                    let split = k.ptilde(s, u) * k.ptilde(u, t);
                    assert_relative_eq!(split, v, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn ptilde_stable_for_large_rate() {
        // β̂T = 300 would overflow naive cosh ratios
        let k = kern(1000.0, 0.3);
        let v = k.ptilde(0.0, 0.1);
        assert_relative_eq!(v, (-1000.0f64 * 0.1).exp(), max_relative = 1e-10);
    }

    #[test]
    fn w_matches_quadrature() {
        for &(rate, horizon, s, rho) in &[
            (1.0, 1.0, 0.0, 0.0),
            (2.236, 1.0, 0.3, 0.00375),
            (0.1, 2.0, 0.5, -0.2),
            (22.4, 0.3, 0.05, 0.015),
            (7.07, 1.0, 0.0, 0.4),
        ] {
            let k = kern(rate, horizon);
            let oracle = quad::integrate(
                |t| k.ptilde(s, t) * (rho * (t - s)).exp(),
                s,
                horizon,
                1e-13,
            )
            .unwrap();
            assert_relative_eq!(k.w(s, rho), oracle, max_relative = 1e-9);
        }
    }

    #[test]
    fn w_degenerate_and_rho_equal_rate() {
        let k = kern(1.7, 1.0);
        assert_eq!(k.w(1.0, 0.3), 0.0);
        // ρ = β̂ hits the removable singularity of the closed form
        let oracle = quad::integrate(|t| k.ptilde(0.2, t) * (1.7 * (t - 0.2)).exp(), 0.2, 1.0, 1e-13).unwrap();
        assert_relative_eq!(k.w(0.2, 1.7), oracle, max_relative = 1e-9);
        // ρ = −β̂ likewise
        let oracle = quad::integrate(|t| k.ptilde(0.2, t) * (-1.7 * (t - 0.2)).exp(), 0.2, 1.0, 1e-13).unwrap();
        assert_relative_eq!(k.w(0.2, -1.7), oracle, max_relative = 1e-9);
    }

    #[test]
    fn w_survives_huge_rate_times_horizon() {
        // β̂Δ = 600: naive e^{β̂Δ} would overflow after squaring
        let k = kern(600.0, 1.0);
        let v = k.w(0.0, 0.01);
        // dominated by the ρ−(−β̂) term: w ≈ 1/β̂ for β̂Δ large
        assert_relative_eq!(v, 1.0 / 600.0, max_relative = 1e-2);
        assert!(v.is_finite());
    }
}
