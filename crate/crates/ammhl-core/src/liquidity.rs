//! Stage one: the equilibrium liquidity depth κ.
//!
//! For constant-product pools the no-offsetting reference depth κ̲ and the
//! equilibrium depth κ* have closed forms when A = 0, and Monte Carlo
//! representations in terms of the kernel processes C^ℓ, D^ℓ, C^Q, D^Q,
//! C^ν, D^ν for a general signal:
//!
//!   κ̲  = E[∫γ√F dt + 2√F_T − F₀^{−1/2}F_T] / (φ E[∫(F^{−1/2}−F₀^{−1/2})²dt])
//!   κ* = (𝔄 + φ E₂ κ̲) / (φ(𝔅 + E₂)),   E₂ = E[∫(F^{−1/2}−F₀^{−1/2})²dt].
//!
//! The criterion maximized here is terminal wealth
//! L_T + Q_T S_T − ∫(S+ην)ν dt − (φ/2)∫(Q+Y)² dt with Q₀ = −Y₀; its
//! first-order condition is linear-quadratic in κ, which is what makes the
//! closed forms above exact.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AmmError, Result};
use crate::flow::FlowParams;
use crate::hedging::kernels::TrackingKernels;
use crate::hedging::no_transient::hedge_path_no_transient;
use crate::hedging::riccati::{assemble_fbsde_solution, solve_dre};
use crate::hedging::HedgeParams;
use crate::market::{
    cond_moment, cond_signal_price_moment, fmt_g17, simulate_paths, MarketModel, PathBundle,
    SignalModel, SimGrid,
};
use crate::quad;

/// Everything stage one needs: market, hedge costs, flow profitability, and
/// the budget cap κ̄ on pool depth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageOneInputs {
    pub model: MarketModel,
    pub hp: HedgeParams,
    pub flow: FlowParams,
    pub kappa_max: f64,
}

impl StageOneInputs {
    pub fn new(model: MarketModel, hp: HedgeParams, flow: FlowParams, kappa_max: f64) -> Result<Self> {
        if !(kappa_max > 0.0) || !kappa_max.is_finite() {
            return Err(AmmError::Domain(format!(
                "kappa_max must be positive and finite, got {kappa_max}"
            )));
        }
        Ok(Self { model, hp, flow, kappa_max })
    }
}

/// Reference depth κ̲ with the shut-down boundary made explicit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KappaRef {
    pub value: f64,
    /// Negative closed-form numerator: fee revenue cannot cover adverse
    /// selection at any depth, the market shuts down at κ̲ = 0.
    pub shutdown: bool,
}

/// e^x − 1 − (16/3)(e^{3x/8} − 1) + x, the denominator bracket of κ̲ and the
/// scaling constant C_T. The bracket is O(x²/8) so the naive form loses six
/// digits at x = σ²T = 0.01; below x = 1e-4 a series is tighter still.
pub(crate) fn bracket_d(x: f64) -> f64 {
    if x < 1e-4 {
        ((0.037272135416666664 * x + 23.0 / 192.0) * x + 0.125) * x * x
    } else {
        x.exp_m1() - 16.0 / 3.0 * (0.375 * x).exp_m1() + x
    }
}

/// Closed-form reference depth for A = 0:
/// κ̲ = [8γ(1−e^{−σ²T/8}) − σ²(1−2e^{−σ²T/8})] / (φ·D) · F₀^{3/2}.
pub fn kappa_ref_closed_form(model: &MarketModel, flow: &FlowParams, phi: f64) -> Result<KappaRef> {
    if !matches!(model.signal, SignalModel::Zero) {
        return Err(AmmError::Precondition(
            "closed-form reference depth requires a zero signal".into(),
        ));
    }
    if !(phi > 0.0) {
        return Err(AmmError::Domain(format!("phi must be positive, got {phi}")));
    }
    let s2 = model.sigma * model.sigma;
    let x = s2 * model.horizon_t;
    let num = -8.0 * flow.gamma * (-x / 8.0).exp_m1() + s2 * (2.0 * (-x / 8.0).exp() - 1.0);
    let den = phi * bracket_d(x);
    if !(den > 0.0) {
        return Err(AmmError::Inconsistency(format!(
            "nonpositive denominator bracket {den} at sigma^2 T = {x}"
        )));
    }
    if num <= 0.0 {
        return Ok(KappaRef { value: 0.0, shutdown: true });
    }
    Ok(KappaRef { value: num / den * model.f0.powf(1.5), shutdown: false })
}

/// κ̲ by the general moment representation, evaluated with lognormal
/// conditional moments and adaptive quadrature. Algebraically identical to
/// `kappa_ref_closed_form` but shares no code with it; kept as a
/// cross-validation route.
pub fn kappa_ref_via_moments(model: &MarketModel, flow: &FlowParams, phi: f64) -> Result<f64> {
    if !matches!(model.signal, SignalModel::Zero) {
        return Err(AmmError::Precondition(
            "moment-route reference depth requires a zero signal".into(),
        ));
    }
    let f0 = model.f0;
    let t_end = model.horizon_t;
    let inv0 = f0.powf(-0.5);
    let m = |q: f64, t: f64| cond_moment(q, f0, 0.0, t, model).unwrap_or(f64::NAN);
    let fee_scale = f0.sqrt() * t_end;
    let fee = quad::integrate(|t| m(0.5, t), 0.0, t_end, 1e-13 * fee_scale)?;
    let num = flow.gamma * fee + 2.0 * m(0.5, t_end) - inv0 * m(1.0, t_end);
    let e2_integrand = |t: f64| m(-1.0, t) - 2.0 * inv0 * m(-0.5, t) + 1.0 / f0;
    let e2_scale = (e2_integrand(t_end) * t_end).max(f64::MIN_POSITIVE);
    let e2 = quad::integrate(e2_integrand, 0.0, t_end, 1e-13 * e2_scale)?;
    Ok(num / (phi * e2))
}

/// 𝔅 of the A = 0 closed form at tracking rate β̂ = √(φ/2η):
///
///   𝔅 = ∫₀ᵀ(1−P̃(0,t))(e^{3σ²t/8}−1)dt
///       − β̂²∫₀ᵀ∫ₛᵀ g(s)P̃(s,t)(e^{σ²s}e^{3σ²(t−s)/8}−e^{3σ²s/8})dt ds.
///
/// The inner t-integrals reduce exactly to the w kernels, leaving a single
/// adaptive quadrature in s.
pub fn frak_b_closed_form(sigma: f64, horizon_t: f64, rate: f64) -> Result<f64> {
    let s2 = sigma * sigma;
    let rho = 3.0 * s2 / 8.0;
    let tk = TrackingKernels::from_rate(rate, horizon_t);
    let i1 = 8.0 / (3.0 * s2) * (rho * horizon_t).exp_m1() - horizon_t - tk.w(0.0, rho)
        + tk.w(0.0, 0.0);
    let inner = |s: f64| {
        let g = tk.w(s, rho);
        g * ((s2 * s).exp() * g - (rho * s).exp() * tk.w(s, 0.0))
    };
    let scale = (horizon_t * (1.0 + (s2 * horizon_t).exp())).max(1.0);
    let i2 = quad::integrate(inner, 0.0, horizon_t, 1e-13 * scale)?;
    Ok(i1 - rate * rate * i2)
}

/// Closed-form stage one for A = 0, c = 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClosedFormStageOne {
    pub kappa_ref: f64,
    pub shutdown: bool,
    pub kappa_star: f64,
    /// κ*/κ̲ = C_T/(σ²𝔅 + C_T).
    pub scaling: f64,
    pub frak_b: f64,
    pub c_t: f64,
}

/// κ* = κ̲ · C_T/(σ²𝔅 + C_T) with C_T = e^{σ²T}+13/3−(16/3)e^{3σ²T/8}+σ²T.
pub fn kappa_star_closed_form_a0(
    model: &MarketModel,
    flow: &FlowParams,
    hp: &HedgeParams,
) -> Result<ClosedFormStageOne> {
    if hp.c != 0.0 {
        return Err(AmmError::Precondition(
            "closed-form stage one requires c = 0".into(),
        ));
    }
    let kr = kappa_ref_closed_form(model, flow, hp.phi)?;
    let s2 = model.sigma * model.sigma;
    let c_t = bracket_d(s2 * model.horizon_t);
    let frak_b = frak_b_closed_form(model.sigma, model.horizon_t, hp.tracking_rate())?;
    let scaling = c_t / (s2 * frak_b + c_t);
    Ok(ClosedFormStageOne {
        kappa_ref: kr.value,
        shutdown: kr.shutdown,
        kappa_star: kr.value * scaling,
        scaling,
        frak_b,
        c_t,
    })
}

/// Kernel processes of the general (c = 0) solution along simulated paths,
/// row-major like `PathBundle`:
/// ℓ* = κC^ℓ + D^ℓ, Q* = κC^Q + D^Q, ν* = κC^ν + D^ν.
#[derive(Debug, Clone)]
pub struct KernelPaths {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub c_ell: Vec<f64>,
    pub d_ell: Vec<f64>,
    pub c_q: Vec<f64>,
    pub d_q: Vec<f64>,
    pub c_nu: Vec<f64>,
    pub d_nu: Vec<f64>,
}

impl KernelPaths {
    fn row<'a>(&self, field: &'a [f64], path: usize) -> &'a [f64] {
        let w = self.n_steps + 1;
        &field[path * w..(path + 1) * w]
    }
    pub fn c_ell_path(&self, path: usize) -> &[f64] {
        self.row(&self.c_ell, path)
    }
    pub fn d_ell_path(&self, path: usize) -> &[f64] {
        self.row(&self.d_ell, path)
    }
    pub fn c_q_path(&self, path: usize) -> &[f64] {
        self.row(&self.c_q, path)
    }
    pub fn d_q_path(&self, path: usize) -> &[f64] {
        self.row(&self.d_q, path)
    }
    pub fn c_nu_path(&self, path: usize) -> &[f64] {
        self.row(&self.c_nu, path)
    }
    pub fn d_nu_path(&self, path: usize) -> &[f64] {
        self.row(&self.d_nu, path)
    }
}

/// Build C^ℓ, D^ℓ pointwise (closed form for zero/constant signals,
/// quadrature over the conditional-moment kernels for OU), then C^Q, D^Q by
/// the integrating-factor recursion of Q′ = P(t)Q + forcing.
pub fn kernel_paths(paths: &PathBundle, hp: &HedgeParams, model: &MarketModel) -> Result<KernelPaths> {
    if hp.c != 0.0 {
        return Err(AmmError::Precondition(
            "kernel processes are defined for the no-transient-impact solution (c = 0)".into(),
        ));
    }
    let tk = TrackingKernels::new(hp, model.horizon_t);
    let n = paths.n_steps;
    let dt = paths.dt();
    let times = &paths.times;
    let s2 = model.sigma * model.sigma;
    let inv2eta = 1.0 / (2.0 * hp.eta);

    // per-time coefficients for ℓ-kernels linear in F^{−1/2} and F
    let coeffs: Option<(Vec<f64>, Vec<f64>)> = match model.signal {
        SignalModel::Zero => {
            let ci: Vec<f64> = times
                .iter()
                .map(|&t| -hp.phi * inv2eta * tk.w(t, 3.0 * s2 / 8.0))
                .collect();
            Some((ci, vec![0.0; n + 1]))
        }
        SignalModel::Constant { a } => {
            let rho_y = -a / 2.0 + 3.0 * s2 / 8.0;
            let ci: Vec<f64> = times
                .iter()
                .map(|&t| -hp.phi * inv2eta * tk.w(t, rho_y))
                .collect();
            let di: Vec<f64> = times.iter().map(|&t| a * inv2eta * tk.w(t, a)).collect();
            Some((ci, di))
        }
        SignalModel::Ou { .. } => None,
    };
    let step_pt: Vec<f64> = (0..n).map(|k| tk.ptilde(times[k], times[k + 1])).collect();
    let p_of_t: Vec<f64> = times.iter().map(|&t| tk.p(t)).collect();

    type Rows = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);
    let rows: Vec<Rows> = (0..paths.n_paths)
        .into_par_iter()
        .map(|p| -> Result<Rows> {
            let f = paths.f_path(p);
            let a = paths.a_path(p);
            let mut ce = vec![0.0; n + 1];
            let mut de = vec![0.0; n + 1];
            for k in 0..=n {
                match &coeffs {
                    Some((ci, di)) => {
                        ce[k] = ci[k] * f[k].powf(-0.5);
                        de[k] = di[k] * f[k];
                    }
                    None => {
                        let t = times[k];
                        if t >= model.horizon_t {
                            continue;
                        }
                        let inv_sqrt = f[k].powf(-0.5);
                        let ci = quad::integrate(
                            |s| {
                                tk.ptilde(t, s)
                                    * cond_moment(-0.5, f[k], a[k], s - t, model)
                                        .unwrap_or(f64::NAN)
                            },
                            t,
                            model.horizon_t,
                            1e-11 * inv_sqrt.max(1.0),
                        )?;
                        let di = quad::integrate(
                            |s| {
                                tk.ptilde(t, s)
                                    * cond_signal_price_moment(f[k], a[k], s - t, model)
                                        .unwrap_or(f64::NAN)
                            },
                            t,
                            model.horizon_t,
                            1e-11 * f[k].max(1.0),
                        )?;
                        ce[k] = -hp.phi * inv2eta * ci;
                        de[k] = inv2eta * di;
                    }
                }
            }
            let mut cq = vec![0.0; n + 1];
            let mut dq = vec![0.0; n + 1];
            let mut cqk = -model.f0.powf(-0.5);
            let mut dqk = 0.0;
            for k in 0..=n {
                cq[k] = cqk;
                dq[k] = dqk;
                if k < n {
                    cqk = step_pt[k] * cqk + dt / 2.0 * (step_pt[k] * ce[k] + ce[k + 1]);
                    dqk = step_pt[k] * dqk + dt / 2.0 * (step_pt[k] * de[k] + de[k + 1]);
                }
            }
            let cnu: Vec<f64> = (0..=n).map(|k| p_of_t[k] * cq[k] + ce[k]).collect();
            let dnu: Vec<f64> = (0..=n).map(|k| p_of_t[k] * dq[k] + de[k]).collect();
            Ok((ce, de, cq, dq, cnu, dnu))
        })
        .collect::<Result<Vec<_>>>()?;

    let m = paths.n_paths * (n + 1);
    let mut out = KernelPaths {
        times: times.clone(),
        n_paths: paths.n_paths,
        n_steps: n,
        c_ell: Vec::with_capacity(m),
        d_ell: Vec::with_capacity(m),
        c_q: Vec::with_capacity(m),
        d_q: Vec::with_capacity(m),
        c_nu: Vec::with_capacity(m),
        d_nu: Vec::with_capacity(m),
    };
    for (ce, de, cq, dq, cnu, dnu) in rows {
        out.c_ell.extend(ce);
        out.d_ell.extend(de);
        out.c_q.extend(cq);
        out.d_q.extend(dq);
        out.c_nu.extend(cnu);
        out.d_nu.extend(dnu);
    }
    Ok(out)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
}

pub(crate) fn mean_se(xs: &[f64]) -> McEstimate {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return McEstimate { mean, se: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    McEstimate { mean, se: (var / m).sqrt() }
}

/// One point of the stage-one value curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McPoint {
    pub kappa: f64,
    pub value: f64,
    pub se: f64,
}

/// Full stage-one output: closed-form or kernel-based depths plus the Monte
/// Carlo objective curve used to cross-validate them.
#[derive(Debug, Clone, Serialize)]
pub struct StageOneResult {
    pub kappa_ref: f64,
    pub kappa_star: f64,
    pub scaling: f64,
    pub frak_a: McEstimate,
    pub frak_b: McEstimate,
    pub e2: McEstimate,
    pub shutdown: bool,
    pub clamped: bool,
    pub mc_value_curve: Vec<McPoint>,
    pub argmax_mc: Option<f64>,
    pub argmax_at_boundary: bool,
}

impl StageOneResult {
    /// Value-curve CSV `kappa,value,se`.
    pub fn curve_to_csv(&self) -> String {
        let mut out = String::from("kappa,value,se\n");
        for pt in &self.mc_value_curve {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_g17(pt.kappa),
                fmt_g17(pt.value),
                fmt_g17(pt.se)
            ));
        }
        out
    }
}

/// κ* for a constant or OU signal by the kernel representation:
/// 𝔄 = E[∫(C^Q+F₀^{−1/2})AF dt], 𝔅 = E[∫(C^Q+F₀^{−1/2})(F^{−1/2}−F₀^{−1/2})dt],
/// κ* = (𝔄 + φE₂κ̲)/(φ(𝔅+E₂)), clamped to [0, κ̄].
pub fn kappa_star_with_signal(inputs: &StageOneInputs, grid: &SimGrid) -> Result<StageOneResult> {
    let model = &inputs.model;
    let hp = &inputs.hp;
    if hp.c != 0.0 {
        return Err(AmmError::Precondition(
            "the kernel representation of kappa* requires c = 0".into(),
        ));
    }
    let paths = simulate_paths(model, grid, 1.0)?;
    let kp = kernel_paths(&paths, hp, model)?;
    let n = paths.n_steps;
    let dt = paths.dt();
    let inv0 = model.f0.powf(-0.5);
    let gamma = inputs.flow.gamma;

    // per-path trapezoids of the four stage-one integrals
    let samples: Vec<[f64; 4]> = (0..paths.n_paths)
        .into_par_iter()
        .map(|p| {
            let f = paths.f_path(p);
            let a = paths.a_path(p);
            let cq = kp.c_q_path(p);
            let (mut num, mut e2, mut fa, mut fb) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..=n {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                let inv = f[k].powf(-0.5);
                num += w * gamma * f[k].sqrt() * dt;
                e2 += w * (inv - inv0) * (inv - inv0) * dt;
                fa += w * (cq[k] + inv0) * a[k] * f[k] * dt;
                fb += w * (cq[k] + inv0) * (inv - inv0) * dt;
            }
            num += 2.0 * f[n].sqrt() - inv0 * f[n];
            [num, e2, fa, fb]
        })
        .collect();

    let col = |j: usize| -> Vec<f64> { samples.iter().map(|s| s[j]).collect() };
    let num = mean_se(&col(0));
    let e2 = mean_se(&col(1));
    let frak_a = mean_se(&col(2));
    let frak_b = mean_se(&col(3));
    let pos: Vec<f64> = samples.iter().map(|s| s[3] + s[1]).collect();
    let pos = mean_se(&pos);
    if pos.mean < -3.0 * pos.se {
        return Err(AmmError::Inconsistency(format!(
            "estimated frak_B + E2 = {} (SE {}) violates the positivity bound",
            pos.mean, pos.se
        )));
    }

    let kappa_ref = num.mean / (hp.phi * e2.mean);
    let raw = (frak_a.mean + num.mean) / (hp.phi * (frak_b.mean + e2.mean));
    let shutdown = raw <= 0.0;
    let clamped = raw > inputs.kappa_max;
    let kappa_star = raw.clamp(0.0, inputs.kappa_max);
    let scaling = if kappa_ref > 0.0 { kappa_star / kappa_ref } else { 0.0 };
    Ok(StageOneResult {
        kappa_ref: kappa_ref.max(0.0),
        kappa_star,
        scaling,
        frak_a,
        frak_b,
        e2,
        shutdown,
        clamped,
        mc_value_curve: Vec::new(),
        argmax_mc: None,
        argmax_at_boundary: false,
    })
}

/// Pathwise stage-one objective samples at depth κ on a shared bundle (the
/// bundle's own Y and κ are ignored; Y is recomputed as κF^{−1/2}).
pub fn mc_objective_samples(
    paths: &PathBundle,
    kappa: f64,
    inputs: &StageOneInputs,
) -> Result<Vec<f64>> {
    if kappa < 0.0 {
        return Err(AmmError::Domain(format!("kappa must be nonnegative, got {kappa}")));
    }
    if kappa == 0.0 {
        // no pool: Y = 0, q0 = 0, the optimal CEX rate is 0 and every term
        // of the criterion vanishes
        return Ok(vec![0.0; paths.n_paths]);
    }
    let model = &inputs.model;
    let hp = inputs.hp.with_q0(-kappa / model.f0.sqrt());
    let hedge = if hp.c == 0.0 {
        hedge_path_no_transient(paths, kappa, &hp, model)?
    } else {
        let dre = solve_dre(&hp, model.horizon_t, 1024)?;
        assemble_fbsde_solution(&dre, paths, kappa, &hp, model)?
    };
    let n = paths.n_steps;
    let dt = paths.dt();
    let gamma = inputs.flow.gamma;
    Ok((0..paths.n_paths)
        .into_par_iter()
        .map(|p| {
            let f = paths.f_path(p);
            let nu = hedge.nu_path(p);
            let q = hedge.q_path(p);
            let i = hedge.i_path(p);
            let (mut fee, mut cost, mut pen) = (0.0, 0.0, 0.0);
            for k in 0..=n {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                let s = f[k] + i[k];
                fee += w * f[k].sqrt() * dt;
                cost += w * (s + hp.eta * nu[k]) * nu[k] * dt;
                let dev = q[k] + kappa / f[k].sqrt();
                pen += w * dev * dev * dt;
            }
            let s_t = f[n] + i[n];
            gamma * kappa * fee + kappa * f[n].sqrt() + (kappa / f[n].sqrt() + q[n]) * s_t
                - cost
                - hp.phi / 2.0 * pen
        })
        .collect())
}

/// Monte Carlo estimate of the stage-one objective at depth κ.
pub fn mc_objective(kappa: f64, inputs: &StageOneInputs, grid: &SimGrid) -> Result<McEstimate> {
    let paths = simulate_paths(&inputs.model, grid, kappa.max(f64::MIN_POSITIVE))?;
    Ok(mean_se(&mc_objective_samples(&paths, kappa, inputs)?))
}

/// The same objective through the decomposition route (c = 0): per path,
/// κ√F₀ + J[ν*] + ∫[κ√F(γ−σ²/4) + AF(Y−Y₀) − (φ/2)(Y−Y₀)²]dt.
///
/// The leading κ√F₀ is the LP's initial cash leg, which the criterion's
/// terminal wealth carries but the integrand decomposition does not.
pub fn mc_decomposition_samples(
    paths: &PathBundle,
    kappa: f64,
    inputs: &StageOneInputs,
) -> Result<Vec<f64>> {
    if inputs.hp.c != 0.0 {
        return Err(AmmError::Precondition(
            "the decomposition route requires c = 0".into(),
        ));
    }
    if kappa == 0.0 {
        return Ok(vec![0.0; paths.n_paths]);
    }
    let model = &inputs.model;
    let hp = inputs.hp.with_q0(-kappa / model.f0.sqrt());
    let hedge = hedge_path_no_transient(paths, kappa, &hp, model)?;
    let n = paths.n_steps;
    let dt = paths.dt();
    let s2 = model.sigma * model.sigma;
    let gamma = inputs.flow.gamma;
    let y0 = kappa / model.f0.sqrt();
    Ok((0..paths.n_paths)
        .into_par_iter()
        .map(|p| {
            let f = paths.f_path(p);
            let a = paths.a_path(p);
            let q = hedge.q_path(p);
            let nu = hedge.nu_path(p);
            let mut total = kappa * model.f0.sqrt();
            for k in 0..=n {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                let y = kappa / f[k].sqrt();
                // stage-two criterion integrand, relative form
                let j = -hp.eta * nu[k] * nu[k] + a[k] * f[k] * (q[k] - hp.q0)
                    - hp.phi / 2.0 * ((q[k] + y).powi(2) - (y0 + hp.q0).powi(2));
                // fee-minus-convexity plus signal and penalty corrections
                let d = kappa * f[k].sqrt() * (gamma - s2 / 4.0) + a[k] * f[k] * (y - y0)
                    - hp.phi / 2.0 * (y - y0) * (y - y0);
                total += w * (j + d) * dt;
            }
            total
        })
        .collect())
}

/// Grid-plus-golden-section maximization of the Monte Carlo objective with
/// common random numbers across κ.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizeOutcome {
    pub curve: Vec<McPoint>,
    pub argmax: f64,
    pub value_at_argmax: f64,
    pub at_lower: bool,
    pub at_upper: bool,
}

pub fn optimize_kappa_mc(
    inputs: &StageOneInputs,
    grid: &SimGrid,
    kappa_grid_n: usize,
) -> Result<OptimizeOutcome> {
    if kappa_grid_n < 3 {
        return Err(AmmError::Domain("kappa_grid_n must be at least 3".into()));
    }
    let paths = simulate_paths(&inputs.model, grid, 1.0)?;
    let eval_mean = |kappa: f64| -> Result<McEstimate> {
        Ok(mean_se(&mc_objective_samples(&paths, kappa, inputs)?))
    };
    let mut curve = Vec::with_capacity(kappa_grid_n);
    for i in 0..kappa_grid_n {
        let kappa = inputs.kappa_max * i as f64 / (kappa_grid_n - 1) as f64;
        let est = eval_mean(kappa)?;
        curve.push(McPoint { kappa, value: est.mean, se: est.se });
    }
    let best = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .map(|(i, _)| i)
        .unwrap();
    let at_lower = best == 0;
    let at_upper = best == kappa_grid_n - 1;
    if at_lower || at_upper {
        return Ok(OptimizeOutcome {
            argmax: curve[best].kappa,
            value_at_argmax: curve[best].value,
            curve,
            at_lower,
            at_upper,
        });
    }
    // golden-section refinement on the bracketing triple; CRN keeps the
    // sampled objective a smooth (quadratic) function of kappa
    let inv_phi = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (curve[best - 1].kappa, curve[best + 1].kappa);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = eval_mean(x1)?.mean;
    let mut f2 = eval_mean(x2)?.mean;
    for _ in 0..64 {
        if hi - lo < 1e-7 * inputs.kappa_max {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eval_mean(x2)?.mean;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eval_mean(x1)?.mean;
        }
    }
    let argmax = 0.5 * (lo + hi);
    let value_at_argmax = eval_mean(argmax)?.mean;
    Ok(OptimizeOutcome { curve, argmax, value_at_argmax, at_lower, at_upper })
}

/// Closed forms (or kernel estimates) plus the validated Monte Carlo curve.
pub fn run_stage_one(
    inputs: &StageOneInputs,
    grid: &SimGrid,
    kappa_grid_n: usize,
) -> Result<StageOneResult> {
    let mut result = if matches!(inputs.model.signal, SignalModel::Zero) && inputs.hp.c == 0.0 {
        let cf = kappa_star_closed_form_a0(&inputs.model, &inputs.flow, &inputs.hp)?;
        let clamped = cf.kappa_star > inputs.kappa_max;
        StageOneResult {
            kappa_ref: cf.kappa_ref,
            kappa_star: cf.kappa_star.min(inputs.kappa_max),
            scaling: cf.scaling,
            frak_a: McEstimate { mean: 0.0, se: 0.0 },
            frak_b: McEstimate { mean: cf.frak_b, se: 0.0 },
            e2: McEstimate {
                mean: cf.c_t / (inputs.model.sigma * inputs.model.sigma * inputs.model.f0),
                se: 0.0,
            },
            shutdown: cf.shutdown,
            clamped,
            mc_value_curve: Vec::new(),
            argmax_mc: None,
            argmax_at_boundary: false,
        }
    } else {
        kappa_star_with_signal(inputs, grid)?
    };
    let opt = optimize_kappa_mc(inputs, grid, kappa_grid_n)?;
    result.mc_value_curve = opt.curve;
    result.argmax_mc = Some(opt.argmax);
    result.argmax_at_boundary = opt.at_lower || opt.at_upper;
    Ok(result)
}
