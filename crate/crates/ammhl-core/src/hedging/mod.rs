//! Stage two: the LP's optimal CEX risk-offsetting strategy.
//!
//! `kernels` holds the tanh/cosh tracking kernels of the no-transient-impact
//! solution, `no_transient` the closed-form strategy for c = 0, `riccati`
//! the 2×2 matrix DRE solver and FBSDE assembly for c > 0, and `gateaux`
//! the first-order optimality diagnostics.

pub mod gateaux;
pub mod kernels;
pub mod no_transient;
pub mod riccati;

use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, require_positive, AmmError, Result};
use crate::market::fmt_g17;

/// CEX trading-cost and penalty parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeParams {
    /// Quadratic trading cost η > 0.
    pub eta: f64,
    /// Deviation penalty (risk aversion) φ > 0.
    pub phi: f64,
    /// Transient impact scale c ≥ 0.
    pub c: f64,
    /// Impact resilience β > 0 (named `beta_res`; the tracking rate
    /// √(φ/2η) is a different β in the source model).
    pub beta_res: f64,
    /// Initial CEX inventory, in units of the risky asset.
    pub q0: f64,
}

impl HedgeParams {
    pub fn new(eta: f64, phi: f64, c: f64, beta_res: f64, q0: f64) -> Result<Self> {
        require_positive("eta", eta)?;
        require_positive("phi", phi)?;
        require_nonnegative("c", c)?;
        require_positive("beta_res", beta_res)?;
        if !q0.is_finite() {
            return Err(AmmError::Domain(format!("q0 must be finite, got {q0}")));
        }
        let hp = Self { eta, phi, c, beta_res, q0 };
        if !hp.assumption_bound_holds() {
            return Err(AmmError::Precondition(format!(
                "impact scale must satisfy c < sqrt(2*eta*phi); got c = {c}, bound = {}",
                (2.0 * eta * phi).sqrt()
            )));
        }
        Ok(hp)
    }

    /// c < √(2ηφ), the standing bound on instantaneous impact.
    pub fn assumption_bound_holds(&self) -> bool {
        self.c < (2.0 * self.eta * self.phi).sqrt()
    }

    /// Tracking rate β̂ = √(φ/2η).
    pub fn tracking_rate(&self) -> f64 {
        (self.phi / (2.0 * self.eta)).sqrt()
    }

    pub fn with_q0(self, q0: f64) -> Self {
        Self { q0, ..self }
    }
}

/// Pathwise optimal strategy: trading rate ν, CEX inventory Q, transient
/// impact I, auxiliary backward state Z, and the forcing process ℓ.
/// Row-major by path on the simulation grid.
#[derive(Debug, Clone)]
pub struct HedgePath {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub nu: Vec<f64>,
    pub q: Vec<f64>,
    pub i: Vec<f64>,
    pub z: Vec<f64>,
    pub ell: Vec<f64>,
}

impl HedgePath {
    fn row(&self, v: &[f64], path: usize) -> std::ops::Range<usize> {
        let w = self.n_steps + 1;
        debug_assert_eq!(v.len(), self.n_paths * w);
        path * w..(path + 1) * w
    }

    pub fn nu_path(&self, path: usize) -> &[f64] {
        let r = self.row(&self.nu, path);
        &self.nu[r]
    }

    pub fn q_path(&self, path: usize) -> &[f64] {
        let r = self.row(&self.q, path);
        &self.q[r]
    }

    pub fn i_path(&self, path: usize) -> &[f64] {
        let r = self.row(&self.i, path);
        &self.i[r]
    }

    pub fn z_path(&self, path: usize) -> &[f64] {
        let r = self.row(&self.z, path);
        &self.z[r]
    }

    pub fn ell_path(&self, path: usize) -> &[f64] {
        let r = self.row(&self.ell, path);
        &self.ell[r]
    }

    /// CSV rows `path,t,nu,Q,I,Z,ell`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,t,nu,Q,I,Z,ell\n");
        for p in 0..self.n_paths {
            for (k, &t) in self.times.iter().enumerate() {
                let w = self.n_steps + 1;
                let j = p * w + k;
                out.push_str(&format!(
                    "{p},{},{},{},{},{},{}\n",
                    fmt_g17(t),
                    fmt_g17(self.nu[j]),
                    fmt_g17(self.q[j]),
                    fmt_g17(self.i[j]),
                    fmt_g17(self.z[j]),
                    fmt_g17(self.ell[j])
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hedge_params_validation() {
        assert!(HedgeParams::new(0.01, 0.1, 0.0, 1.0, 0.0).is_ok());
        // c = 1 >= sqrt(2*0.01*0.1) ~ 0.0447
        assert!(matches!(
            HedgeParams::new(0.01, 0.1, 1.0, 1.0, 0.0),
            Err(AmmError::Precondition(_))
        ));
        assert!(HedgeParams::new(0.0, 0.1, 0.0, 1.0, 0.0).is_err());
        assert!(HedgeParams::new(0.01, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(HedgeParams::new(0.01, 0.1, -0.1, 1.0, 0.0).is_err());
        let hp = HedgeParams::new(0.01, 0.1, 0.02, 1.0, 0.0).unwrap();
        assert!((hp.tracking_rate() - (5.0f64).sqrt()).abs() < 1e-14);
    }
}
