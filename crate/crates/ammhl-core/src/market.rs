//! Fundamental price with private signal, DEX reserve paths, transient
//! impact dynamics, and the closed-form conditional-moment kernels used by
//! the hedging solvers.
//!
//! Price dynamics: dF = A F dt + σ F dW. The signal A is zero, constant, or
//! an Ornstein–Uhlenbeck process dA = θ(μ−A) dt + ξ dW driven by the *same*
//! Brownian motion as the price.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::ConstantProduct;
use crate::curve::BondingCurve;
use crate::error::{require_positive, AmmError, Result};
use crate::rng::path_rng;

/// The LP's private signal driving the fundamental drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SignalModel {
    Zero,
    Constant { a: f64 },
    Ou { theta: f64, mu: f64, xi: f64, a0: f64 },
}

impl SignalModel {
    pub fn validate(&self) -> Result<()> {
        if let SignalModel::Ou { theta, xi, .. } = self {
            require_positive("theta", *theta)?;
            if !(*xi >= 0.0) {
                return Err(AmmError::Domain(format!("xi must be nonnegative, got {xi}")));
            }
        }
        Ok(())
    }

    pub fn initial_value(&self) -> f64 {
        match *self {
            SignalModel::Zero => 0.0,
            SignalModel::Constant { a } => a,
            SignalModel::Ou { a0, .. } => a0,
        }
    }
}

/// Fundamental-price parameters: F₀, σ (per √year), horizon T (years).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub f0: f64,
    pub sigma: f64,
    pub horizon_t: f64,
    pub signal: SignalModel,
}

impl MarketModel {
    pub fn new(f0: f64, sigma: f64, horizon_t: f64, signal: SignalModel) -> Result<Self> {
        require_positive("f0", f0)?;
        require_positive("sigma", sigma)?;
        require_positive("horizon_T", horizon_t)?;
        signal.validate()?;
        Ok(Self { f0, sigma, horizon_t, signal })
    }
}

/// Time grid and path count; `seed` keys the per-path random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimGrid {
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimGrid {
    pub fn new(n_steps: usize, n_paths: usize, seed: u64) -> Result<Self> {
        if n_steps == 0 || n_paths == 0 {
            return Err(AmmError::Domain("n_steps and n_paths must be ≥ 1".into()));
        }
        Ok(Self { n_steps, n_paths, seed })
    }

    pub fn dt(&self, horizon_t: f64) -> f64 {
        horizon_t / self.n_steps as f64
    }
}

/// Simulated trajectories on a uniform grid, row-major by path.
///
/// `y = κ/√F` pointwise; `dw` keeps the Brownian increments for reuse.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub kappa: f64,
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub f: Vec<f64>,
    pub a: Vec<f64>,
    pub y: Vec<f64>,
    pub dw: Vec<f64>,
}

impl PathBundle {
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn f_path(&self, path: usize) -> &[f64] {
        let w = self.n_steps + 1;
        &self.f[path * w..(path + 1) * w]
    }

    pub fn a_path(&self, path: usize) -> &[f64] {
        let w = self.n_steps + 1;
        &self.a[path * w..(path + 1) * w]
    }

    pub fn y_path(&self, path: usize) -> &[f64] {
        let w = self.n_steps + 1;
        &self.y[path * w..(path + 1) * w]
    }

    pub fn dw_path(&self, path: usize) -> &[f64] {
        &self.dw[path * self.n_steps..(path + 1) * self.n_steps]
    }

    /// Reserve paths for a different depth over the same prices (CRN reuse).
    pub fn y_for_kappa(&self, path: usize, kappa: f64) -> Vec<f64> {
        self.f_path(path).iter().map(|&f| kappa / f.sqrt()).collect()
    }

    /// CSV rows `path,t,F,A,Y` with 17-significant-digit floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,t,F,A,Y\n");
        for p in 0..self.n_paths {
            let (f, a, y) = (self.f_path(p), self.a_path(p), self.y_path(p));
            for (k, &t) in self.times.iter().enumerate() {
                out.push_str(&format!(
                    "{p},{},{},{},{}\n",
                    fmt_g17(t),
                    fmt_g17(f[k]),
                    fmt_g17(a[k]),
                    fmt_g17(y[k])
                ));
            }
        }
        out
    }
}

/// 17-significant-digit decimal rendering (round-trips any f64).
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Simulate price/signal/reserve paths.
///
/// Log-exact Euler per step: F' = F·exp((A − σ²/2)dt + σ dW), with A held at
/// its start-of-step value in the price exponent and stepped by its exact OU
/// transition using the same Brownian increment.
pub fn simulate_paths(model: &MarketModel, grid: &SimGrid, kappa: f64) -> Result<PathBundle> {
    require_positive("kappa", kappa)?;
    model.signal.validate()?;
    if !(model.f0 > 0.0) || !(model.horizon_t > 0.0) || model.sigma < 0.0 {
        return Err(AmmError::Domain("invalid market model".into()));
    }
    if grid.n_steps == 0 || grid.n_paths == 0 {
        return Err(AmmError::Domain("empty grid".into()));
    }

    let n = grid.n_steps;
    let dt = grid.dt(model.horizon_t);
    let sqrt_dt = dt.sqrt();
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();

    // OU transition constants
    let (decay, ou_std, ou_mu) = match model.signal {
        SignalModel::Ou { theta, mu, xi, .. } => {
            let d = (-theta * dt).exp();
            let var = xi * xi * (-((-2.0 * theta * dt).exp_m1())) / (2.0 * theta);
            (d, var.sqrt(), mu)
        }
        _ => (1.0, 0.0, 0.0),
    };

    let per_path: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = (0..grid.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(grid.seed, p as u64);
            let mut f = Vec::with_capacity(n + 1);
            let mut a = Vec::with_capacity(n + 1);
            let mut y = Vec::with_capacity(n + 1);
            let mut dw = Vec::with_capacity(n);
            let mut ft = model.f0;
            let mut at = model.signal.initial_value();
            f.push(ft);
            a.push(at);
            y.push(kappa / ft.sqrt());
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                let dwk = sqrt_dt * z;
                dw.push(dwk);
                ft *= ((at - 0.5 * model.sigma * model.sigma) * dt + model.sigma * dwk).exp();
                at = match model.signal {
                    SignalModel::Zero => 0.0,
                    SignalModel::Constant { a } => a,
                    SignalModel::Ou { .. } => ou_mu + (at - ou_mu) * decay + ou_std * z,
                };
                f.push(ft);
                a.push(at);
                y.push(kappa / ft.sqrt());
            }
            (f, a, y, dw)
        })
        .collect();

    let mut f = Vec::with_capacity(grid.n_paths * (n + 1));
    let mut a = Vec::with_capacity(grid.n_paths * (n + 1));
    let mut y = Vec::with_capacity(grid.n_paths * (n + 1));
    let mut dw = Vec::with_capacity(grid.n_paths * n);
    for (pf, pa, py, pdw) in per_path {
        f.extend(pf);
        a.extend(pa);
        y.extend(py);
        dw.extend(pdw);
    }

    Ok(PathBundle { kappa, times, n_paths: grid.n_paths, n_steps: n, f, a, y, dw })
}

/// Drift coefficient G = ∂₁h(f,κ)·a + (σ²/2)·∂₁₁h(f,κ)·f of the reserve
/// dynamics dY = G F dt + σ ∂₁h F dW.
pub fn drift_g(f: f64, a: f64, kappa: f64, sigma: f64) -> Result<f64> {
    let c = ConstantProduct;
    Ok(c.reserves_d1(f, kappa)? * a + 0.5 * sigma * sigma * c.reserves_d2(f, kappa)? * f)
}

/// One step of the transient-impact ODE dI = (cν − βI) dt with ν held
/// constant over the step (exact exponential integrator).
pub fn impact_step(i: f64, nu: f64, c: f64, beta_res: f64, dt: f64) -> f64 {
    let decay = (-beta_res * dt).exp();
    i * decay + c * nu * (-((-beta_res * dt).exp_m1())) / beta_res
}

/// OU kernel g(Δ) = (1 − e^{−θΔ})/(2θ) from the conditional moment of F^{−1/2}.
fn ou_g(theta: f64, dt_fwd: f64) -> f64 {
    -((-theta * dt_fwd).exp_m1()) / (2.0 * theta)
}

/// Closed form of ∫₀^Δ (α − b e^{−θu})² du.
fn exp_square_integral(alpha: f64, b: f64, theta: f64, dt_fwd: f64) -> f64 {
    let e1 = -(-theta * dt_fwd).exp_m1(); // 1 − e^{−θΔ}
    let e2 = -(-2.0 * theta * dt_fwd).exp_m1(); // 1 − e^{−2θΔ}
    alpha * alpha * dt_fwd - 2.0 * alpha * b * e1 / theta + b * b * e2 / (2.0 * theta)
}

/// Conditional moment E[F_s^q | F_t] over lead time Δ = s − t.
///
/// Zero signal: lognormal identity for any q. Constant signal: drift-shifted
/// lognormal for any q. OU signal: the q = −1/2 kernel
/// F_t^{−1/2} e^{−A_t g(Δ)} h(Δ) only.
pub fn cond_moment(
    q: f64,
    f_t: f64,
    a_t: f64,
    dt_fwd: f64,
    model: &MarketModel,
) -> Result<f64> {
    require_positive("f_t", f_t)?;
    if dt_fwd < 0.0 {
        return Err(AmmError::Domain("dt_fwd must be nonnegative".into()));
    }
    let s2 = model.sigma * model.sigma;
    match model.signal {
        SignalModel::Zero => Ok(f_t.powf(q) * ((q * q - q) * s2 * dt_fwd / 2.0).exp()),
        SignalModel::Constant { a } => {
            Ok(f_t.powf(q) * (q * a * dt_fwd + (q * q - q) * s2 * dt_fwd / 2.0).exp())
        }
        SignalModel::Ou { theta, mu, xi, .. } => {
            if (q + 0.5).abs() > 1e-12 {
                return Err(AmmError::Capability(format!(
                    "OU conditional moment implemented for q = -1/2 only, got q = {q}"
                )));
            }
            let g = ou_g(theta, dt_fwd);
            let alpha = xi / theta + model.sigma;
            let b = xi / theta;
            let quad = exp_square_integral(alpha, b, theta, dt_fwd);
            let h = ((-mu / 2.0 + s2 / 4.0) * dt_fwd + mu * g + quad / 8.0).exp();
            Ok(f_t.powf(-0.5) * (-a_t * g).exp() * h)
        }
    }
}

/// Cross moment E[A_s F_s | F_t] over Δ = s − t, for a stochastic or
/// constant signal.
///
/// For OU, uses the joint-Gaussian identity
/// E[A_s e^X] = (E[A_s] + Cov(A_s, X)) e^{E[X] + Var[X]/2} with
/// X = log(F_s/F_t) affine in the shared Brownian driver.
pub fn cond_signal_price_moment(
    f_t: f64,
    a_t: f64,
    dt_fwd: f64,
    model: &MarketModel,
) -> Result<f64> {
    require_positive("f_t", f_t)?;
    if dt_fwd < 0.0 {
        return Err(AmmError::Domain("dt_fwd must be nonnegative".into()));
    }
    let s2 = model.sigma * model.sigma;
    match model.signal {
        SignalModel::Constant { a } => Ok(a * f_t * (a * dt_fwd).exp()),
        SignalModel::Ou { theta, mu, xi, .. } => {
            let e1 = -(-theta * dt_fwd).exp_m1(); // 1 − e^{−θΔ}
            let e2 = -(-2.0 * theta * dt_fwd).exp_m1(); // 1 − e^{−2θΔ}
            let mean_a = mu + (a_t - mu) * (-theta * dt_fwd).exp();
            let mean_x = mu * dt_fwd + (a_t - mu) * e1 / theta - s2 * dt_fwd / 2.0;
            let alpha = model.sigma + xi / theta;
            let b = xi / theta;
            let var_x = exp_square_integral(alpha, b, theta, dt_fwd);
            let cov = xi * (alpha * e1 / theta - b * e2 / (2.0 * theta));
            Ok(f_t * (mean_a + cov) * (mean_x + var_x / 2.0).exp())
        }
        SignalModel::Zero => Err(AmmError::Capability(
            "cond_signal_price_moment requires a constant or OU signal".into(),
        )),
    }
}
