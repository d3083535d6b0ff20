//! Stage three: noise liquidity takers.
//!
//! LTs arrive as a Poisson process with intensity λ, draw a private
//! valuation deviation |V| supported on [π, 1], and trade the size that
//! maximises their surplus δ(|V|−π)F − ½δ²∂₁₁φ. The LP's expected fee
//! revenue rate is Π = γκ√F with profitability γ = λπ(v̄−π)/2.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{BondingCurve, ConstantProduct};
use crate::error::{require_nonnegative, require_positive, AmmError, Result};
use crate::market::{fmt_g17, PathBundle};
use crate::rng::path_rng;

/// Law of the absolute valuation deviation |V|, supported on [π, 1].
///
/// Only the mean v̄ enters the fee-revenue rate; the law matters for the
/// realized (sampled) accrual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ValuationDist {
    /// |V| ~ Uniform[π, 1], so v̄ = (1+π)/2.
    Uniform,
    /// Mass `p_low` at π+eps, rest at 1.
    TwoPoint { p_low: f64, eps: f64 },
    /// Degenerate at `v`.
    PointMass { v: f64 },
}

impl ValuationDist {
    pub fn mean(&self, fee_pi: f64) -> f64 {
        match *self {
            ValuationDist::Uniform => (1.0 + fee_pi) / 2.0,
            ValuationDist::TwoPoint { p_low, eps } => {
                p_low * (fee_pi + eps) + (1.0 - p_low)
            }
            ValuationDist::PointMass { v } => v,
        }
    }

    fn validate(&self, fee_pi: f64) -> Result<()> {
        match *self {
            ValuationDist::Uniform => Ok(()),
            ValuationDist::TwoPoint { p_low, eps } => {
                if !(0.0..=1.0).contains(&p_low) || !(eps >= 0.0) || fee_pi + eps > 1.0 {
                    return Err(AmmError::Domain(format!(
                        "two-point law needs p_low in [0,1], eps >= 0, pi+eps <= 1; got p_low={p_low}, eps={eps}"
                    )));
                }
                Ok(())
            }
            ValuationDist::PointMass { v } => {
                if !(fee_pi..=1.0).contains(&v) {
                    return Err(AmmError::Domain(format!(
                        "point mass must lie in [pi, 1], got {v}"
                    )));
                }
                Ok(())
            }
        }
    }

    fn sample<R: Rng>(&self, fee_pi: f64, rng: &mut R) -> f64 {
        match *self {
            ValuationDist::Uniform => fee_pi + (1.0 - fee_pi) * rng.gen::<f64>(),
            ValuationDist::TwoPoint { p_low, eps } => {
                if rng.gen::<f64>() < p_low {
                    fee_pi + eps
                } else {
                    1.0
                }
            }
            ValuationDist::PointMass { v } => v,
        }
    }
}

/// Noise-flow parameters. `v_bar` and `gamma = λπ(v̄−π)/2` are cached at
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub lambda: f64,
    pub fee_pi: f64,
    pub valuation: ValuationDist,
    pub v_bar: f64,
    pub gamma: f64,
}

impl FlowParams {
    pub fn new(lambda: f64, fee_pi: f64, valuation: ValuationDist) -> Result<Self> {
        require_nonnegative("lambda", lambda)?;
        if !(fee_pi > 0.0 && fee_pi < 1.0) {
            return Err(AmmError::Domain(format!("fee_pi must lie in (0,1), got {fee_pi}")));
        }
        valuation.validate(fee_pi)?;
        let v_bar = valuation.mean(fee_pi);
        let gamma = lambda * fee_pi * (v_bar - fee_pi) / 2.0;
        Ok(Self { lambda, fee_pi, valuation, v_bar, gamma })
    }

    /// Construct from the profitability γ the figures are parameterized by;
    /// solves λ = 2γ/(π(v̄−π)).
    pub fn from_gamma(gamma: f64, fee_pi: f64, valuation: ValuationDist) -> Result<Self> {
        let lambda = lambda_for_gamma(gamma, fee_pi, valuation.mean(fee_pi))?;
        Self::new(lambda, fee_pi, valuation)
    }
}

/// λ such that λπ(v̄−π)/2 = γ.
pub fn lambda_for_gamma(gamma: f64, fee_pi: f64, v_bar: f64) -> Result<f64> {
    require_nonnegative("gamma", gamma)?;
    require_positive("fee_pi", fee_pi)?;
    if v_bar <= fee_pi {
        return Err(AmmError::Domain(format!(
            "v_bar must exceed fee_pi to yield positive profitability, got v_bar={v_bar}, pi={fee_pi}"
        )));
    }
    Ok(2.0 * gamma / (fee_pi * (v_bar - fee_pi)))
}

/// The noise LT's optimal trade size δ* = (|V|−π)F/∂₁₁φ = κ(|V|−π)/(2√F).
pub fn optimal_volume(v_abs: f64, fee_pi: f64, f: f64, kappa: f64) -> Result<f64> {
    require_positive("f", f)?;
    require_positive("kappa", kappa)?;
    if !(v_abs >= fee_pi && v_abs <= 1.0) {
        return Err(AmmError::Domain(format!(
            "v_abs must lie in [pi, 1], got {v_abs} with pi={fee_pi}"
        )));
    }
    let conv = ConstantProduct.level_d2(kappa / f.sqrt(), kappa)?;
    Ok((v_abs - fee_pi) * f / conv)
}

/// Expected fee-revenue rate Π = γκ√F.
pub fn fee_rate(f: f64, kappa: f64, flow: &FlowParams) -> Result<f64> {
    require_positive("f", f)?;
    require_positive("kappa", kappa)?;
    Ok(flow.gamma * kappa * f.sqrt())
}

/// Per-path cumulative fee processes: realized (thinned Poisson arrivals)
/// and the deterministic-rate accrual ∫Π dt, both left-point on the grid.
#[derive(Debug, Clone)]
pub struct FeeAccrual {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub cum_realized: Vec<f64>,
    pub cum_rate: Vec<f64>,
    /// Set when λ·dt > 0.1: per-step thinning underestimates arrivals.
    pub discretization_warning: bool,
}

impl FeeAccrual {
    pub fn realized_path(&self, path: usize) -> &[f64] {
        let w = self.n_steps + 1;
        &self.cum_realized[path * w..(path + 1) * w]
    }

    pub fn rate_path(&self, path: usize) -> &[f64] {
        let w = self.n_steps + 1;
        &self.cum_rate[path * w..(path + 1) * w]
    }

    /// CSV rows `path,t,cum_fee_realized,cum_fee_rate`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,t,cum_fee_realized,cum_fee_rate\n");
        for p in 0..self.n_paths {
            let (r, d) = (self.realized_path(p), self.rate_path(p));
            for (k, &t) in self.times.iter().enumerate() {
                out.push_str(&format!(
                    "{p},{},{},{}\n",
                    fmt_g17(t),
                    fmt_g17(r[k]),
                    fmt_g17(d[k])
                ));
            }
        }
        out
    }
}

/// Simulate realized fee accrual on an existing price bundle.
///
/// Each step has an arrival with probability λ·dt (at most one); an arrival
/// samples |V|, trades δ*, and pays the fee π·δ*·F. The arrival/valuation
/// streams are keyed by `seed_offset` so they are independent of the price
/// streams and deterministic across thread counts.
pub fn simulate_fee_accrual(
    paths: &PathBundle,
    flow: &FlowParams,
    kappa: f64,
    seed_offset: u64,
) -> Result<FeeAccrual> {
    require_positive("kappa", kappa)?;
    let n = paths.n_steps;
    let dt = paths.dt();
    let p_arrival = flow.lambda * dt;
    let warn = p_arrival > 0.1;

    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..paths.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed_offset, p as u64);
            let f = paths.f_path(p);
            let mut realized = Vec::with_capacity(n + 1);
            let mut rate = Vec::with_capacity(n + 1);
            let mut cr = 0.0;
            let mut cd = 0.0;
            realized.push(0.0);
            rate.push(0.0);
            for k in 0..n {
                // two draws per step regardless of arrival keeps the stream
                // aligned, so accruals are comparable across fee parameters
                let u: f64 = rng.gen();
                let v_abs = flow.valuation.sample(flow.fee_pi, &mut rng);
                if u < p_arrival {
                    let delta = kappa * (v_abs - flow.fee_pi) / (2.0 * f[k].sqrt());
                    cr += flow.fee_pi * delta * f[k];
                }
                cd += flow.gamma * kappa * f[k].sqrt() * dt;
                realized.push(cr);
                rate.push(cd);
            }
            (realized, rate)
        })
        .collect();

    let mut cum_realized = Vec::with_capacity(paths.n_paths * (n + 1));
    let mut cum_rate = Vec::with_capacity(paths.n_paths * (n + 1));
    for (r, d) in per_path {
        cum_realized.extend(r);
        cum_rate.extend(d);
    }

    Ok(FeeAccrual {
        times: paths.times.clone(),
        n_paths: paths.n_paths,
        n_steps: n,
        cum_realized,
        cum_rate,
        discretization_warning: warn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{simulate_paths, MarketModel, SignalModel, SimGrid};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn valuation_means() {
        assert_eq!(ValuationDist::Uniform.mean(0.003), (1.0 + 0.003) / 2.0);
        let tp = ValuationDist::TwoPoint { p_low: 0.25, eps: 0.1 };
        assert_relative_eq!(tp.mean(0.1), 0.25 * 0.2 + 0.75, max_relative = 1e-12);
        assert_eq!(ValuationDist::PointMass { v: 0.4 }.mean(0.1), 0.4);
    }

    #[test]
    fn gamma_round_trip() {
        let flow = FlowParams::from_gamma(0.2, 0.003, ValuationDist::Uniform).unwrap();
        assert_relative_eq!(flow.gamma, 0.2, max_relative = 1e-12);
        assert_relative_eq!(
            flow.lambda,
            2.0 * 0.2 / (0.003 * (flow.v_bar - 0.003)),
            max_relative = 1e-12
        );
        assert!(lambda_for_gamma(0.2, 0.1, 0.1).is_err());
        assert!(FlowParams::new(1.0, 1.5, ValuationDist::Uniform).is_err());
        assert!(FlowParams::new(1.0, 0.1, ValuationDist::PointMass { v: 0.05 }).is_err());
    }

    #[test]
    fn optimal_volume_plug_ins() {
        // |V| = π gives zero surplus and zero trade
        assert_abs_diff_eq!(optimal_volume(0.003, 0.003, 1.7, 2.0).unwrap(), 0.0);
        // (|V|=0.5, π=0.003, F=1, κ=2) → 2·0.497/2 = 0.497
        assert_relative_eq!(
            optimal_volume(0.5, 0.003, 1.0, 2.0).unwrap(),
            0.497,
            max_relative = 1e-12
        );
        assert!(optimal_volume(0.001, 0.003, 1.0, 2.0).is_err());
    }

    #[test]
    fn optimal_volume_maximizes_lt_criterion() {
        // oracle: brute-force grid maximization of δ(|V|−π)F − ½δ²∂₁₁φ
        let (v, pi, f, kappa) = (0.4f64, 0.01f64, 2.5f64, 3.0f64);
        let conv = ConstantProduct.level_d2(kappa / f.sqrt(), kappa).unwrap();
        let crit = |d: f64| d * (v - pi) * f - 0.5 * d * d * conv;
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..=200_000 {
            let d = 2.0 * i as f64 / 200_000.0;
            let c = crit(d);
            if c > best.1 {
                best = (d, c);
            }
        }
        let star = optimal_volume(v, pi, f, kappa).unwrap();
        assert_abs_diff_eq!(star, best.0, epsilon = 2.0 / 200_000.0);
    }

    #[test]
    fn optimal_volume_monotone() {
        let pi = 0.01;
        for i in 1..50 {
            let v0 = pi + 0.019 * i as f64;
            let v1 = pi + 0.019 * (i + 1) as f64;
            assert!(optimal_volume(v1, pi, 2.0, 3.0).unwrap() > optimal_volume(v0, pi, 2.0, 3.0).unwrap());
            assert!(
                optimal_volume(0.5, pi, 2.0, 0.1 * i as f64 + 0.1).unwrap()
                    > optimal_volume(0.5, pi, 2.0, 0.1 * i as f64).unwrap()
            );
            assert!(
                optimal_volume(0.5, pi, 0.2 * i as f64 + 0.2, 3.0).unwrap()
                    < optimal_volume(0.5, pi, 0.2 * i as f64, 3.0).unwrap()
            );
        }
    }

    #[test]
    fn fee_rate_plug_ins() {
        let zero_gamma = FlowParams::new(
            5.0,
            0.1,
            ValuationDist::PointMass { v: 0.1 },
        )
        .unwrap();
        assert_eq!(fee_rate(2.0, 3.0, &zero_gamma).unwrap(), 0.0);
        let flow = FlowParams::from_gamma(0.2, 0.003, ValuationDist::Uniform).unwrap();
        assert_relative_eq!(fee_rate(4.0, 10.0, &flow).unwrap(), 4.0, max_relative = 1e-12);
    }

    #[test]
    fn integrated_fee_rate_matches_closed_form() {
        // E[∫Π dt] = γκ√F₀(8/σ²)(1−e^{−σ²T/8}) for A = 0
        let model = MarketModel::new(1.0, 0.1, 1.0, SignalModel::Zero).unwrap();
        let grid = SimGrid::new(64, 100_000, 2024).unwrap();
        let kappa = 1.0;
        let paths = simulate_paths(&model, &grid, kappa).unwrap();
        let flow = FlowParams::from_gamma(0.2, 0.003, ValuationDist::Uniform).unwrap();
        let s2 = 0.01f64;
        let target = 0.2 * kappa * (8.0 / s2) * (1.0 - (-s2 / 8.0f64).exp());
        assert_abs_diff_eq!(target, 0.199875, epsilon = 5e-6);

        let acc = simulate_fee_accrual(&paths, &flow, kappa, 777).unwrap();
        let vals: Vec<f64> = (0..grid.n_paths)
            .map(|p| *acc.rate_path(p).last().unwrap())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        let se = (var / vals.len() as f64).sqrt();
        // left-point Riemann bias is O(dt); allow for it alongside MC error
        assert!(
            (mean - target).abs() <= 3.0 * se + 0.2 * kappa / 64.0 * 0.01,
            "mean {mean} vs {target} (SE {se})"
        );
    }

    #[test]
    fn realized_accrual_matches_rate_accrual() {
        let model = MarketModel::new(1.0, 0.1, 1.0, SignalModel::Zero).unwrap();
        let grid = SimGrid::new(64, 100_000, 31).unwrap();
        let paths = simulate_paths(&model, &grid, 1.0).unwrap();
        // π = 0.2 keeps λ·dt = 5/64 below the thinning-bias threshold
        let flow = FlowParams::from_gamma(0.2, 0.2, ValuationDist::Uniform).unwrap();
        let acc = simulate_fee_accrual(&paths, &flow, 1.0, 99).unwrap();
        assert!(!acc.discretization_warning);
        let diffs: Vec<f64> = (0..grid.n_paths)
            .map(|p| acc.realized_path(p).last().unwrap() - acc.rate_path(p).last().unwrap())
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        let se = (var / diffs.len() as f64).sqrt();
        assert!(mean.abs() <= 3.5 * se, "mean diff {mean} (SE {se})");
    }

    #[test]
    fn trivial_accruals() {
        let model = MarketModel::new(1.0, 0.2, 1.0, SignalModel::Zero).unwrap();
        let grid = SimGrid::new(16, 32, 5).unwrap();
        let paths = simulate_paths(&model, &grid, 1.0).unwrap();
        // λ = 0: identically zero realized accrual
        let none = FlowParams::new(0.0, 0.1, ValuationDist::Uniform).unwrap();
        let acc = simulate_fee_accrual(&paths, &none, 1.0, 1).unwrap();
        assert!(acc.cum_realized.iter().all(|&x| x == 0.0));
        assert!(acc.cum_rate.iter().all(|&x| x == 0.0));
        // v̄ = π: every trade has size zero
        let degenerate = FlowParams::new(50.0, 0.1, ValuationDist::PointMass { v: 0.1 }).unwrap();
        let acc = simulate_fee_accrual(&paths, &degenerate, 1.0, 1).unwrap();
        assert!(acc.cum_realized.iter().all(|&x| x == 0.0));
        assert!(acc.discretization_warning); // 50/16 > 0.1
    }

    #[test]
    fn accrual_nonnegative_and_nondecreasing() {
        let model = MarketModel::new(1.3, 0.3, 0.5, SignalModel::Zero).unwrap();
        let grid = SimGrid::new(32, 16, 11).unwrap();
        let paths = simulate_paths(&model, &grid, 2.0).unwrap();
        let flow = FlowParams::from_gamma(0.2, 0.01, ValuationDist::Uniform).unwrap();
        let acc = simulate_fee_accrual(&paths, &flow, 2.0, 3).unwrap();
        for p in 0..16 {
            for pair in acc.realized_path(p).windows(2) {
                assert!(pair[0] >= 0.0 && pair[1] >= pair[0]);
            }
            for pair in acc.rate_path(p).windows(2) {
                assert!(pair[1] > pair[0]);
            }
        }
        let csv = acc.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "path,t,cum_fee_realized,cum_fee_rate");
        assert_eq!(csv.lines().count(), 1 + 16 * 33);
    }
}
