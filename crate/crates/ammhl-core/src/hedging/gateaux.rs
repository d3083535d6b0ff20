//! First-order optimality diagnostics: the Gâteaux derivative of the
//! stage-two criterion,
//!
//! 𝔇J[ν]_t = −2ην_t + c(Y_t+Q_t)
//!          + E_t[∫ₜᵀ (A_sF_s + cν_s − βI_s − φ(Y_s+Q_s)) ds]
//!          + c e^{βt} E_t[∫ₜᵀ e^{−βs}(G_sF_s − β(Y_s+Q_s)) ds],
//!
//! evaluated by mixing closed-form conditional kernels (terms in A_sF_s,
//! G_sF_s, Y_s) with pathwise-forward realizations (terms in ν, I, Q).
//! Averaging across paths estimates E[𝔇J_t], which vanishes at the optimum.

use rayon::prelude::*;

use crate::error::{AmmError, Result};
use crate::hedging::kernels::exprel;
use crate::hedging::{HedgeParams, HedgePath};
use crate::market::{MarketModel, PathBundle, SignalModel};

/// Mean and standard error of the Gâteaux residual at each checkpoint.
#[derive(Debug, Clone)]
pub struct GateauxStats {
    pub checkpoint_times: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// Per-path residuals, checkpoint-major.
    pub samples: Vec<Vec<f64>>,
}

/// Residual statistics of 𝔇J at `n_checkpoints` evenly spaced grid times.
pub fn gateaux_residual(
    hedge: &HedgePath,
    paths: &PathBundle,
    kappa: f64,
    hp: &HedgeParams,
    model: &MarketModel,
    n_checkpoints: usize,
) -> Result<GateauxStats> {
    let a = match model.signal {
        SignalModel::Zero => 0.0,
        SignalModel::Constant { a } => a,
        SignalModel::Ou { .. } => {
            return Err(AmmError::Capability(
                "Gâteaux diagnostics require a zero or constant signal".into(),
            ))
        }
    };
    if paths.n_paths != hedge.n_paths || paths.n_steps != hedge.n_steps {
        return Err(AmmError::Shape("path bundle and hedge path grids differ".into()));
    }
    if n_checkpoints < 1 || n_checkpoints > paths.n_steps {
        return Err(AmmError::Domain("n_checkpoints must be in [1, n_steps]".into()));
    }
    let n = paths.n_steps;
    let dt = paths.dt();
    let s2 = model.sigma * model.sigma;
    let rho_y = -a / 2.0 + 3.0 * s2 / 8.0;
    let beta = hp.beta_res;
    let checkpoints: Vec<usize> = (0..n_checkpoints)
        .map(|j| j * (n - 1) / n_checkpoints.max(1))
        .collect();

    let per_path: Vec<Vec<f64>> = (0..paths.n_paths)
        .into_par_iter()
        .map(|p| {
            let f = paths.f_path(p);
            let y = paths.y_path(p);
            let nu = hedge.nu_path(p);
            let q = hedge.q_path(p);
            let i = hedge.i_path(p);
            checkpoints
                .iter()
                .map(|&k| {
                    let t = paths.times[k];
                    let lead = model.horizon_t - t;
                    let inv_sqrt = f[k].powf(-0.5);
                    let mut r = -2.0 * hp.eta * nu[k] + hp.c * (y[k] + q[k]);
                    // closed form: ∫E_t[A_sF_s] ds = F_t expm1(aΔ)/a·a
                    r += f[k] * (a * lead).exp_m1();
                    // closed form: −φ∫E_t[Y_s] ds
                    r += -hp.phi * kappa * inv_sqrt * lead * exprel(rho_y * lead);
                    // pathwise: ∫(cν − βI − φQ) ds
                    let mut acc = 0.0;
                    for j in k..=n {
                        let wgt = if j == k || j == n { 0.5 } else { 1.0 };
                        acc += wgt * (hp.c * nu[j] - beta * i[j] - hp.phi * q[j]) * dt;
                    }
                    r += acc;
                    if hp.c != 0.0 {
                        // closed form: c∫e^{−β(s−t)}(E_t[G_sF_s] − βE_t[Y_s]) ds
                        //            = cκ F_t^{−1/2} (ρ_y−β) Δ exprel((ρ_y−β)Δ)
                        r += hp.c
                            * kappa
                            * inv_sqrt
                            * (rho_y - beta)
                            * lead
                            * exprel((rho_y - beta) * lead);
                        // pathwise: −cβ∫e^{−β(s−t)} Q_s ds
                        let mut accq = 0.0;
                        for j in k..=n {
                            let wgt = if j == k || j == n { 0.5 } else { 1.0 };
                            accq += wgt * (-beta * (paths.times[j] - t)).exp() * q[j] * dt;
                        }
                        r += -hp.c * beta * accq;
                    }
                    r
                })
                .collect()
        })
        .collect();

    let m = paths.n_paths as f64;
    let mut mean = Vec::with_capacity(checkpoints.len());
    let mut se = Vec::with_capacity(checkpoints.len());
    let mut samples = Vec::with_capacity(checkpoints.len());
    for (j, _) in checkpoints.iter().enumerate() {
        let col: Vec<f64> = per_path.iter().map(|row| row[j]).collect();
        let mu = col.iter().sum::<f64>() / m;
        let var = col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (m - 1.0);
        mean.push(mu);
        se.push((var / m).sqrt());
        samples.push(col);
    }
    Ok(GateauxStats {
        checkpoint_times: checkpoints.iter().map(|&k| paths.times[k]).collect(),
        mean,
        se,
        samples,
    })
}
