//! Closed-form optimal risk offsetting without transient impact (c = 0):
//! ν_t = P(t)Q_t + ℓ_t with the forcing process
//! ℓ_t = (1/2η) E[∫ₜᵀ P̃(t,s)(A_sF_s − φY_s) ds | F_t].

use rayon::prelude::*;

use crate::error::{AmmError, Result};
use crate::hedging::kernels::TrackingKernels;
use crate::hedging::{HedgeParams, HedgePath};
use crate::market::{cond_moment, cond_signal_price_moment, MarketModel, PathBundle, SignalModel};
use crate::quad;

/// ℓ_t at state (f_t, a_t).
///
/// Zero and constant signals reduce to w-kernel closed forms; the OU signal
/// is integrated by adaptive quadrature over the conditional-moment kernels.
pub fn ell_no_transient(
    t: f64,
    f_t: f64,
    a_t: f64,
    kappa: f64,
    hp: &HedgeParams,
    model: &MarketModel,
) -> Result<f64> {
    let tk = TrackingKernels::new(hp, model.horizon_t);
    let s2 = model.sigma * model.sigma;
    let inv_sqrt = f_t.powf(-0.5);
    match model.signal {
        SignalModel::Zero => {
            Ok(-(hp.phi / (2.0 * hp.eta)) * kappa * inv_sqrt * tk.w(t, 3.0 * s2 / 8.0))
        }
        SignalModel::Constant { a } => {
            let rho_y = -a / 2.0 + 3.0 * s2 / 8.0;
            Ok((a * f_t * tk.w(t, a) - hp.phi * kappa * inv_sqrt * tk.w(t, rho_y))
                / (2.0 * hp.eta))
        }
        SignalModel::Ou { .. } => {
            if t >= model.horizon_t {
                return Ok(0.0);
            }
            let integrand = |s: f64| {
                let d = s - t;
                let cross = cond_signal_price_moment(f_t, a_t, d, model).unwrap_or(f64::NAN);
                let inv = cond_moment(-0.5, f_t, a_t, d, model).unwrap_or(f64::NAN);
                tk.ptilde(t, s) * (cross - hp.phi * kappa * inv)
            };
            let scale = (hp.phi * kappa * inv_sqrt).abs().max(f_t.abs()).max(1.0);
            let v = quad::integrate(integrand, t, model.horizon_t, 1e-11 * scale)?;
            Ok(v / (2.0 * hp.eta))
        }
    }
}

/// Integrating-factor recursion for Q′ = P(t)Q + ℓ, then ν = P(t)Q + ℓ.
pub(crate) fn assemble_q_nu(
    tk: &TrackingKernels,
    times: &[f64],
    ell: &[f64],
    q0: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = times.len() - 1;
    let dt = times[1] - times[0];
    let mut q = Vec::with_capacity(n + 1);
    let mut nu = Vec::with_capacity(n + 1);
    let mut qk = q0;
    for k in 0..=n {
        q.push(qk);
        nu.push(tk.p(times[k]) * qk + ell[k]);
        if k < n {
            let step = tk.ptilde(times[k], times[k + 1]);
            qk = step * qk + dt / 2.0 * (step * ell[k] + ell[k + 1]);
        }
    }
    (q, nu)
}

/// Pathwise optimal strategy for c = 0 on a simulated bundle.
pub fn hedge_path_no_transient(
    paths: &PathBundle,
    kappa: f64,
    hp: &HedgeParams,
    model: &MarketModel,
) -> Result<HedgePath> {
    if hp.c != 0.0 {
        return Err(AmmError::Precondition(
            "closed-form solver requires c = 0; use the Riccati solver for transient impact"
                .into(),
        ));
    }
    let tk = TrackingKernels::new(hp, model.horizon_t);
    let s2 = model.sigma * model.sigma;
    let n = paths.n_steps;
    let times = &paths.times;

    // per-time ℓ coefficients: ℓ = c_inv·F^{−1/2} + c_lin·F for closed-form
    // signals; None routes through per-point quadrature (OU)
    let coeffs: Option<(Vec<f64>, Vec<f64>)> = match model.signal {
        SignalModel::Zero => {
            let c_inv: Vec<f64> = times
                .iter()
                .map(|&t| -(hp.phi / (2.0 * hp.eta)) * kappa * tk.w(t, 3.0 * s2 / 8.0))
                .collect();
            Some((c_inv, vec![0.0; n + 1]))
        }
        SignalModel::Constant { a } => {
            let rho_y = -a / 2.0 + 3.0 * s2 / 8.0;
            let c_inv: Vec<f64> = times
                .iter()
                .map(|&t| -(hp.phi / (2.0 * hp.eta)) * kappa * tk.w(t, rho_y))
                .collect();
            let c_lin: Vec<f64> =
                times.iter().map(|&t| a / (2.0 * hp.eta) * tk.w(t, a)).collect();
            Some((c_inv, c_lin))
        }
        SignalModel::Ou { .. } => None,
    };

    let per_path: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..paths.n_paths)
        .into_par_iter()
        .map(|p| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
            let f = paths.f_path(p);
            let a = paths.a_path(p);
            let ell: Vec<f64> = match &coeffs {
                Some((c_inv, c_lin)) => (0..=n)
                    .map(|k| c_inv[k] * f[k].powf(-0.5) + c_lin[k] * f[k])
                    .collect(),
                None => (0..=n)
                    .map(|k| ell_no_transient(times[k], f[k], a[k], kappa, hp, model))
                    .collect::<Result<Vec<f64>>>()?,
            };
            let (q, nu) = assemble_q_nu(&tk, times, &ell, hp.q0);
            Ok((ell, q, nu))
        })
        .collect::<Result<Vec<_>>>()?;

    let m = paths.n_paths * (n + 1);
    let mut ell = Vec::with_capacity(m);
    let mut q = Vec::with_capacity(m);
    let mut nu = Vec::with_capacity(m);
    for (e, qq, nn) in per_path {
        ell.extend(e);
        q.extend(qq);
        nu.extend(nn);
    }

    Ok(HedgePath {
        times: times.clone(),
        n_paths: paths.n_paths,
        n_steps: n,
        nu,
        q,
        i: vec![0.0; m],
        z: vec![0.0; m],
        ell,
    })
}

/// Pathwise values of the ν-dependent part of the stage-two criterion for
/// c = 0:
/// J = ∫[−ην² + A F (Q−Q₀) − (φ/2)((Q+Y)² − (Y+Q₀)²)] dt (trapezoid).
pub fn pathwise_criterion_c0(
    paths: &PathBundle,
    hedge: &HedgePath,
    hp: &HedgeParams,
) -> Result<Vec<f64>> {
    if paths.n_paths != hedge.n_paths || paths.n_steps != hedge.n_steps {
        return Err(AmmError::Shape(
            "path bundle and hedge path have different grids".into(),
        ));
    }
    let dt = paths.dt();
    let n = paths.n_steps;
    Ok((0..paths.n_paths)
        .map(|p| {
            let f = paths.f_path(p);
            let a = paths.a_path(p);
            let y = paths.y_path(p);
            let q = hedge.q_path(p);
            let nu = hedge.nu_path(p);
            let q0 = q[0];
            let mut total = 0.0;
            for k in 0..=n {
                let integrand = -hp.eta * nu[k] * nu[k] + a[k] * f[k] * (q[k] - q0)
                    - hp.phi / 2.0 * ((q[k] + y[k]).powi(2) - (y[k] + q0).powi(2));
                let wgt = if k == 0 || k == n { 0.5 } else { 1.0 };
                total += wgt * integrand * dt;
            }
            total
        })
        .collect())
}

/// Rebuild a c = 0 hedge path from an arbitrary trading rate (for
/// perturbation tests): Q by trapezoid integration of ν, I = Z = ℓ = 0.
pub fn hedge_from_nu(times: &[f64], nu_rows: &[Vec<f64>], q0: f64) -> HedgePath {
    let n = times.len() - 1;
    let dt = times[1] - times[0];
    let n_paths = nu_rows.len();
    let m = n_paths * (n + 1);
    let mut nu = Vec::with_capacity(m);
    let mut q = Vec::with_capacity(m);
    for row in nu_rows {
        let mut qk = q0;
        for k in 0..=n {
            nu.push(row[k]);
            q.push(qk);
            if k < n {
                qk += dt / 2.0 * (row[k] + row[k + 1]);
            }
        }
    }
    HedgePath {
        times: times.to_vec(),
        n_paths,
        n_steps: n,
        nu,
        q,
        i: vec![0.0; m],
        z: vec![0.0; m],
        ell: vec![0.0; m],
    }
}
