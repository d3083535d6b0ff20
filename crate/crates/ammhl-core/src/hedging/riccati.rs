//! The 2×2 matrix differential Riccati equation of the transient-impact
//! problem, P′ + PB₁₁ + PB₁₂P − B₂₁ − B₂₂P = 0 with P(T) = G, and the
//! assembly of the FBSDE solution (ν*, Z, I, Q) from its solution.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{AmmError, Result};
use crate::hedging::{HedgeParams, HedgePath};
use crate::market::{MarketModel, PathBundle, SignalModel};

/// Constant system matrices of the DRE.
#[derive(Debug, Clone, Copy)]
pub(crate) struct System {
    pub b11: Matrix2<f64>,
    pub b12: Matrix2<f64>,
    pub b21: Matrix2<f64>,
    pub b22: Matrix2<f64>,
    pub g: Matrix2<f64>,
}

pub(crate) fn system(hp: &HedgeParams) -> System {
    let (eta, c, beta) = (hp.eta, hp.c, hp.beta_res);
    let inv2eta = 1.0 / (2.0 * eta);
    System {
        b11: Matrix2::new(-beta, 0.0, 0.0, 0.0),
        b12: Matrix2::new(c, 0.0, 1.0, 0.0),
        b21: Matrix2::new(
            beta * inv2eta,
            (hp.phi + c * beta) * inv2eta,
            0.0,
            beta,
        ),
        b22: Matrix2::new(0.0, c * beta * inv2eta, 0.0, beta),
        g: Matrix2::new(0.0, c * inv2eta, 0.0, 0.0),
    }
}

/// DRE solution on a uniform mesh, stored forward in time.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub grid: Vec<f64>,
    pub p_mat: Vec<Matrix2<f64>>,
    pub residual_sup: f64,
}

impl RiccatiSolution {
    /// Linear interpolation between mesh nodes.
    pub fn p_at(&self, t: f64) -> Matrix2<f64> {
        let n = self.grid.len() - 1;
        let horizon = self.grid[n];
        let dt = self.grid[1] - self.grid[0];
        let x = (t.clamp(0.0, horizon)) / dt;
        let k = (x.floor() as usize).min(n - 1);
        let w = x - k as f64;
        self.p_mat[k] * (1.0 - w) + self.p_mat[k + 1] * w
    }
}

/// Sup-norm of the DRE residual via fourth-order centered differences at
/// interior mesh nodes.
fn residual_sup(sys: &System, grid: &[f64], p: &[Matrix2<f64>]) -> f64 {
    let n = grid.len() - 1;
    let dt = grid[1] - grid[0];
    let mut sup: f64 = 0.0;
    for k in 2..=n.saturating_sub(2) {
        let dp = (-p[k + 2] + p[k + 1] * 8.0 - p[k - 1] * 8.0 + p[k - 2]) / (12.0 * dt);
        let r = dp + p[k] * sys.b11 + p[k] * sys.b12 * p[k] - sys.b21 - sys.b22 * p[k];
        sup = sup.max(r.abs().max());
    }
    sup
}

fn rk4_backward(sys: &System, horizon_t: f64, mesh_n: usize) -> (Vec<f64>, Vec<Matrix2<f64>>) {
    let dt = horizon_t / mesh_n as f64;
    let grid: Vec<f64> = (0..=mesh_n).map(|k| k as f64 * dt).collect();
    // P′ = B₂₁ + B₂₂P − PB₁₁ − PB₁₂P (autonomous)
    let rhs = |p: &Matrix2<f64>| sys.b21 + sys.b22 * p - p * sys.b11 - p * sys.b12 * p;
    let mut p = vec![Matrix2::zeros(); mesh_n + 1];
    p[mesh_n] = sys.g;
    let h = -dt;
    for k in (0..mesh_n).rev() {
        let pk = p[k + 1];
        let k1 = rhs(&pk);
        let k2 = rhs(&(pk + k1 * (h / 2.0)));
        let k3 = rhs(&(pk + k2 * (h / 2.0)));
        let k4 = rhs(&(pk + k3 * h));
        p[k] = pk + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    (grid, p)
}

/// Solve the DRE at a fixed mesh, with no refinement (for convergence
/// studies).
pub fn solve_dre_fixed(
    hp: &HedgeParams,
    horizon_t: f64,
    mesh_n: usize,
) -> Result<RiccatiSolution> {
    if !hp.assumption_bound_holds() {
        return Err(AmmError::Precondition(format!(
            "impact scale must satisfy c < sqrt(2*eta*phi); got c = {}",
            hp.c
        )));
    }
    if mesh_n < 8 || !(horizon_t > 0.0) {
        return Err(AmmError::Domain("mesh_n must be >= 8 and horizon positive".into()));
    }
    let sys = system(hp);
    let (grid, p_mat) = rk4_backward(&sys, horizon_t, mesh_n);
    let residual = residual_sup(&sys, &grid, &p_mat);
    Ok(RiccatiSolution { grid, p_mat, residual_sup: residual })
}

pub const DRE_TOL: f64 = 1e-8;

/// Solve the DRE, refining the mesh (up to two doublings) until the
/// residual is below `DRE_TOL`.
pub fn solve_dre(hp: &HedgeParams, horizon_t: f64, mesh_n: usize) -> Result<RiccatiSolution> {
    let mut m = mesh_n;
    for _ in 0..3 {
        let sol = solve_dre_fixed(hp, horizon_t, m)?;
        if sol.residual_sup <= DRE_TOL {
            return Ok(sol);
        }
        m *= 2;
    }
    Err(AmmError::Convergence(format!(
        "DRE residual stayed above {DRE_TOL} after refining the mesh to {m}"
    )))
}

/// Closed-form exponential of a 2×2 matrix.
pub(crate) fn expm2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let tau = 0.5 * m.trace();
    let n = m - Matrix2::identity() * tau;
    // n is trace-free, so n² = disc·Id with disc = −det(n)
    let disc = n[(0, 0)] * n[(0, 0)] + n[(0, 1)] * n[(1, 0)];
    let (c, s_over) = if disc > 1e-12 {
        let s = disc.sqrt();
        (s.cosh(), s.sinh() / s)
    } else if disc < -1e-12 {
        let s = (-disc).sqrt();
        (s.cos(), s.sin() / s)
    } else {
        (1.0 + disc / 2.0, 1.0 + disc / 6.0)
    };
    (Matrix2::identity() * c + n * s_over) * tau.exp()
}

fn invert2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if det.abs() < 1e-300 || !det.is_finite() {
        return Err(AmmError::Convergence(
            "product-integral fundamental matrix is numerically singular".into(),
        ));
    }
    Ok(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// Assemble (ν*, Z, I, Q) from a DRE solution on simulated paths.
///
/// The conditional expectation in ℓ reduces to closed-form lognormal
/// kernels when the signal is zero or constant; those are the supported
/// cases. ℓ_t = Φ̂(t)⁻¹ E_t[L − ∫ₜᵀ Φ̂(s) b_s ds] with Φ̂′ = Φ̂(PB₁₂−B₂₂)
/// accumulated as a product of per-step midpoint exponentials.
pub fn assemble_fbsde_solution(
    dre: &RiccatiSolution,
    paths: &PathBundle,
    kappa: f64,
    hp: &HedgeParams,
    model: &MarketModel,
) -> Result<HedgePath> {
    let a = match model.signal {
        SignalModel::Zero => 0.0,
        SignalModel::Constant { a } => a,
        SignalModel::Ou { .. } => {
            return Err(AmmError::Capability(
                "FBSDE assembly with a stochastic signal and transient impact is not supported"
                    .into(),
            ))
        }
    };
    let sys = system(hp);
    let n = paths.n_steps;
    let dt = paths.dt();
    let times = &paths.times;
    let s2 = model.sigma * model.sigma;
    // E_t[F_s^{−1/2}] = F_t^{−1/2} e^{ρ_y(s−t)}, and G_sF_s = κρ_y F_s^{−1/2}
    let rho_y = -a / 2.0 + 3.0 * s2 / 8.0;
    let inv2eta = 1.0 / (2.0 * hp.eta);

    // fundamental matrices of the backward kernel, forward in time
    let mut phihat = Vec::with_capacity(n + 1);
    let mut phihat_inv = Vec::with_capacity(n + 1);
    phihat.push(Matrix2::identity());
    for k in 0..n {
        let pm = dre.p_at(times[k] + dt / 2.0);
        let x = pm * sys.b12 - sys.b22;
        let next = phihat[k] * expm2(&(x * dt));
        phihat.push(next);
    }
    for m in &phihat {
        phihat_inv.push(invert2(m)?);
    }

    // E_t[b_s] = u·F_t^{−1/2} e^{ρ_y(s−t)} + v·a F_t e^{a(s−t)} with
    let u = Vector2::new(
        (hp.phi + hp.c * hp.beta_res) * kappa * inv2eta,
        kappa * (hp.beta_res - rho_y),
    );
    let v = Vector2::new(-inv2eta, 0.0);
    // suffix trapezoid sums W_u(t_k) = ∫_{t_k}^T Φ̂(s) u e^{ρ_y s} ds (resp. v, a)
    let mut w_u = vec![Vector2::zeros(); n + 1];
    let mut w_v = vec![Vector2::zeros(); n + 1];
    for k in (0..n).rev() {
        let fu = |j: usize| phihat[j] * u * (rho_y * times[j]).exp();
        let fv = |j: usize| phihat[j] * v * (a * times[j]).exp();
        w_u[k] = w_u[k + 1] + (fu(k) + fu(k + 1)) * (dt / 2.0);
        w_v[k] = w_v[k + 1] + (fv(k) + fv(k + 1)) * (dt / 2.0);
    }

    // per-time feedback matrices for the forward sweep
    let p_nodes: Vec<Matrix2<f64>> = times.iter().map(|&t| dre.p_at(t)).collect();
    let step_exp: Vec<Matrix2<f64>> = (0..n)
        .map(|k| {
            let pm = dre.p_at(times[k] + dt / 2.0);
            expm2(&((sys.b12 * pm + sys.b11) * dt))
        })
        .collect();

    let per_path: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = (0..paths.n_paths)
        .into_par_iter()
        .map(|p| {
            let f = paths.f_path(p);
            // ℓ along the path
            let ell_vec: Vec<Vector2<f64>> = (0..=n)
                .map(|k| {
                    let inv_sqrt = f[k].powf(-0.5);
                    let el = Vector2::new(
                        hp.c * kappa * inv2eta
                            * inv_sqrt
                            * (rho_y * (model.horizon_t - times[k])).exp(),
                        0.0,
                    );
                    let m_t = el
                        - w_u[k] * (inv_sqrt * (-rho_y * times[k]).exp())
                        - w_v[k] * (a * f[k] * (-a * times[k]).exp());
                    phihat_inv[k] * m_t
                })
                .collect();
            // forward state Φ = (I, Q)
            let mut state = Vector2::new(0.0, hp.q0);
            let mut nu = Vec::with_capacity(n + 1);
            let mut q = Vec::with_capacity(n + 1);
            let mut i = Vec::with_capacity(n + 1);
            let mut z = Vec::with_capacity(n + 1);
            let mut ell1 = Vec::with_capacity(n + 1);
            for k in 0..=n {
                let psi = p_nodes[k] * state + ell_vec[k];
                nu.push(psi[0]);
                z.push(psi[1]);
                i.push(state[0]);
                q.push(state[1]);
                ell1.push(ell_vec[k][0]);
                if k < n {
                    state = step_exp[k] * state
                        + (step_exp[k] * (sys.b12 * ell_vec[k]) + sys.b12 * ell_vec[k + 1])
                            * (dt / 2.0);
                }
            }
            (nu, q, i, z, ell1)
        })
        .collect();

    let m = paths.n_paths * (n + 1);
    let mut nu = Vec::with_capacity(m);
    let mut q = Vec::with_capacity(m);
    let mut i = Vec::with_capacity(m);
    let mut z = Vec::with_capacity(m);
    let mut ell = Vec::with_capacity(m);
    for (pn, pq, pi, pz, pe) in per_path {
        nu.extend(pn);
        q.extend(pq);
        i.extend(pi);
        z.extend(pz);
        ell.extend(pe);
    }
    Ok(HedgePath { times: times.clone(), n_paths: paths.n_paths, n_steps: n, nu, q, i, z, ell })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hedging::kernels::TrackingKernels;
    use crate::hedging::no_transient::hedge_path_no_transient;
    use crate::market::{simulate_paths, SimGrid};
    use approx::assert_relative_eq;

    fn hp_c(c: f64) -> HedgeParams {
        HedgeParams::new(0.01, 0.1, c, 1.0, 0.0).unwrap()
    }

    #[test]
    fn expm2_against_series_and_rotation() {
        let m = Matrix2::new(0.2, -0.1, 0.3, 0.05);
        let e = expm2(&m);
        // 12-term Taylor series oracle
        let mut term = Matrix2::identity();
        let mut sum = Matrix2::identity();
        for j in 1..=14 {
            term = term * m / j as f64;
            sum += term;
        }
        assert_relative_eq!((e - sum).abs().max(), 0.0, epsilon = 1e-12);
        // pure rotation has complex eigenvalues (disc < 0)
        let rot = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        let e = expm2(&(rot * std::f64::consts::FRAC_PI_2));
        assert_relative_eq!(e[(0, 1)], -1.0, epsilon = 1e-12);
        // nilpotent: disc = 0
        let nil = Matrix2::new(0.0, 1.0, 0.0, 0.0);
        let e = expm2(&nil);
        assert_relative_eq!(e[(0, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn terminal_condition_exact() {
        let hp = hp_c(0.02);
        let sol = solve_dre_fixed(&hp, 1.0, 64).unwrap();
        let g = system(&hp).g;
        assert_eq!(sol.p_mat[64], g);
        assert_relative_eq!(g[(0, 1)], 0.02 / 0.02, epsilon = 1e-15);
    }

    #[test]
    fn assumption_gate() {
        let hp = HedgeParams { eta: 0.01, phi: 0.1, c: 1.0, beta_res: 1.0, q0: 0.0 };
        assert!(matches!(
            solve_dre_fixed(&hp, 1.0, 64),
            Err(AmmError::Precondition(_))
        ));
    }

    #[test]
    fn residual_small_at_reference_mesh() {
        let hp = hp_c(0.02);
        let sol = solve_dre_fixed(&hp, 1.0, 4000).unwrap();
        assert!(sol.residual_sup <= 1e-8, "residual {}", sol.residual_sup);
    }

    #[test]
    fn fourth_order_self_convergence() {
        let hp = hp_c(0.02);
        let res: Vec<f64> = [40usize, 80, 160]
            .iter()
            .map(|&m| solve_dre_fixed(&hp, 1.0, m).unwrap().residual_sup)
            .collect();
        for w in res.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!(
                (slope - 4.0).abs() <= 0.3,
                "observed slope {slope} from residuals {res:?}"
            );
        }
    }

    #[test]
    fn c_zero_matches_tanh_kernel() {
        let hp = hp_c(0.0);
        let sol = solve_dre_fixed(&hp, 1.0, 4000).unwrap();
        let tk = TrackingKernels::new(&hp, 1.0);
        let mut sup: f64 = 0.0;
        for (k, &t) in sol.grid.iter().enumerate() {
            sup = sup.max((sol.p_mat[k][(0, 1)] - tk.p(t)).abs());
        }
        assert!(sup <= 1e-8, "sup deviation {sup}");
    }

    #[test]
    fn assembly_reduces_to_closed_form_at_c_zero() {
        // assembly quadrature error is O(dt²) on the simulation grid
        let model = MarketModel::new(1.0, 0.2, 1.0, SignalModel::Zero).unwrap();
        let grid = SimGrid::new(2000, 4, 3).unwrap();
        let kappa = 1.0;
        let paths = simulate_paths(&model, &grid, kappa).unwrap();
        let hp = hp_c(0.0).with_q0(-kappa);
        let dre = solve_dre_fixed(&hp, 1.0, 4000).unwrap();
        let assembled = assemble_fbsde_solution(&dre, &paths, kappa, &hp, &model).unwrap();
        let closed = hedge_path_no_transient(&paths, kappa, &hp, &model).unwrap();
        let mut sup: f64 = 0.0;
        for p in 0..4 {
            for (x, y) in assembled.nu_path(p).iter().zip(closed.nu_path(p)) {
                sup = sup.max((x - y).abs());
            }
        }
        assert!(sup <= 1e-6, "nu sup deviation {sup}");
    }

    #[test]
    fn assembly_constant_signal_reduces_too() {
        let model = MarketModel::new(1.0, 0.2, 1.0, SignalModel::Constant { a: 0.1 }).unwrap();
        let grid = SimGrid::new(2000, 2, 9).unwrap();
        let kappa = 2.0;
        let paths = simulate_paths(&model, &grid, kappa).unwrap();
        let hp = hp_c(0.0).with_q0(-kappa);
        let dre = solve_dre_fixed(&hp, 1.0, 4000).unwrap();
        let assembled = assemble_fbsde_solution(&dre, &paths, kappa, &hp, &model).unwrap();
        let closed = hedge_path_no_transient(&paths, kappa, &hp, &model).unwrap();
        let mut sup: f64 = 0.0;
        for p in 0..2 {
            for (x, y) in assembled.nu_path(p).iter().zip(closed.nu_path(p)) {
                sup = sup.max((x - y).abs());
            }
        }
        assert!(sup <= 1e-6, "nu sup deviation {sup}");
    }

    #[test]
    fn ou_signal_is_a_capability_error() {
        let model = MarketModel::new(
            1.0,
            0.2,
            1.0,
            SignalModel::Ou { theta: 1.0, mu: 0.0, xi: 0.1, a0: 0.0 },
        )
        .unwrap();
        let grid = SimGrid::new(16, 1, 1).unwrap();
        let paths = simulate_paths(&model, &grid, 1.0).unwrap();
        let hp = hp_c(0.01);
        let dre = solve_dre_fixed(&hp, 1.0, 100).unwrap();
        assert!(matches!(
            assemble_fbsde_solution(&dre, &paths, 1.0, &hp, &model),
            Err(AmmError::Capability(_))
        ));
    }

    #[test]
    fn small_phi_nu_scale_bound() {
        // ℓ ≈ terminal-weight only: |ν| stays within the c/2η inventory scale
        let model = MarketModel::new(1.0, 0.2, 1.0, SignalModel::Zero).unwrap();
        let grid = SimGrid::new(200, 4, 21).unwrap();
        let kappa = 1.0;
        let paths = simulate_paths(&model, &grid, kappa).unwrap();
        let (eta, phi, c) = (0.01, 1e-4, 1e-3);
        let hp = HedgeParams::new(eta, phi, c, 1.0, -kappa).unwrap();
        let dre = solve_dre_fixed(&hp, 1.0, 2000).unwrap();
        let hedge = assemble_fbsde_solution(&dre, &paths, kappa, &hp, &model).unwrap();
        for p in 0..4 {
            let max_gap = paths
                .y_path(p)
                .iter()
                .zip(hedge.q_path(p))
                .map(|(y, q)| (y + q).abs())
                .fold(0.0f64, f64::max);
            let bound = c / (2.0 * eta) * max_gap + 10.0 * phi / (2.0 * eta) * max_gap;
            for nu in hedge.nu_path(p) {
                assert!(nu.abs() <= bound * 1.5 + 1e-9, "|nu| = {} vs bound {bound}", nu.abs());
            }
        }
    }
}
