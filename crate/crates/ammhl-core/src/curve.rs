//! Bonding-curve mechanics of the DEX: level function, marginal price,
//! reserve inversion, execution prices with fees, and convexity costs.
//!
//! The curve interface exposes the level function φ(y,κ), its first two
//! partials in the risky reserve, the price-to-reserve inverse h(f,κ), and
//! the partials of h. Only the constant-product instance ships; all its
//! quantities evaluate in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, AmmError, Result};

/// A convex bonding curve parameterized by liquidity depth κ.
///
/// `level_value` is the reference-asset reserve X = φ(Y,κ) on the level set,
/// `reserves_from_price` is the inverse h of the marginal price −∂₁φ.
pub trait BondingCurve: Send + Sync {
    /// φ(y, κ): reference reserve at risky reserve `y`.
    fn level_value(&self, y: f64, kappa: f64) -> Result<f64>;
    /// ∂₁φ(y, κ).
    fn level_d1(&self, y: f64, kappa: f64) -> Result<f64>;
    /// ∂₁₁φ(y, κ) — the convexity that prices LT trading costs.
    fn level_d2(&self, y: f64, kappa: f64) -> Result<f64>;
    /// h(f, κ): risky reserve aligning the marginal price with `f`.
    fn reserves_from_price(&self, f: f64, kappa: f64) -> Result<f64>;
    /// ∂₁h(f, κ).
    fn reserves_d1(&self, f: f64, kappa: f64) -> Result<f64>;
    /// ∂₁₁h(f, κ).
    fn reserves_d2(&self, f: f64, kappa: f64) -> Result<f64>;
}

/// Constant-product market: φ(Y,κ) = κ²/Y, h(F,κ) = κ/√F.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantProduct;

impl BondingCurve for ConstantProduct {
    fn level_value(&self, y: f64, kappa: f64) -> Result<f64> {
        require_positive("y", y)?;
        require_positive("kappa", kappa)?;
        Ok(kappa * kappa / y)
    }

    fn level_d1(&self, y: f64, kappa: f64) -> Result<f64> {
        require_positive("y", y)?;
        require_positive("kappa", kappa)?;
        Ok(-kappa * kappa / (y * y))
    }

    fn level_d2(&self, y: f64, kappa: f64) -> Result<f64> {
        require_positive("y", y)?;
        require_positive("kappa", kappa)?;
        Ok(2.0 * kappa * kappa / (y * y * y))
    }

    fn reserves_from_price(&self, f: f64, kappa: f64) -> Result<f64> {
        require_positive("f", f)?;
        require_positive("kappa", kappa)?;
        Ok(kappa / f.sqrt())
    }

    fn reserves_d1(&self, f: f64, kappa: f64) -> Result<f64> {
        require_positive("f", f)?;
        require_positive("kappa", kappa)?;
        Ok(-kappa / (2.0 * f.powf(1.5)))
    }

    fn reserves_d2(&self, f: f64, kappa: f64) -> Result<f64> {
        require_positive("f", f)?;
        require_positive("kappa", kappa)?;
        Ok(3.0 * kappa / (4.0 * f.powf(2.5)))
    }
}

/// Liquidity depth κ, proportional fee π, and the bonding-curve instance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kappa: f64,
    pub fee_pi: f64,
    pub curve: ConstantProduct,
}

impl PoolSpec {
    pub fn new(kappa: f64, fee_pi: f64) -> Result<Self> {
        require_positive("kappa", kappa)?;
        if !(fee_pi > 0.0 && fee_pi < 1.0) {
            return Err(AmmError::Domain(format!(
                "fee_pi must lie in (0,1), got {fee_pi}"
            )));
        }
        Ok(Self { kappa, fee_pi, curve: ConstantProduct })
    }

    /// Snapshot of the pool state when the marginal price is aligned to `f`.
    pub fn eval_at_price(&self, f: f64) -> Result<CurveEval> {
        let y = self.curve.reserves_from_price(f, self.kappa)?;
        let x = self.curve.level_value(y, self.kappa)?;
        Ok(CurveEval {
            x_reserve: x,
            y_reserve: y,
            marginal_price: f,
            convexity: self.curve.level_d2(y, self.kappa)?,
        })
    }
}

/// Pool state on a level set: reserves, marginal price, and convexity ∂₁₁φ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveEval {
    pub x_reserve: f64,
    pub y_reserve: f64,
    pub marginal_price: f64,
    pub convexity: f64,
}

/// φ(y, κ) = κ²/y for the constant-product instance.
pub fn level_value(y: f64, kappa: f64) -> Result<f64> {
    ConstantProduct.level_value(y, kappa)
}

/// Marginal price −∂₁φ(y, κ) = κ²/y².
pub fn marginal_price(y: f64, kappa: f64) -> Result<f64> {
    Ok(-ConstantProduct.level_d1(y, kappa)?)
}

/// h(f, κ) = κ/√f: the risky reserve at which arbitrageurs keep the pool.
pub fn reserves_from_price(f: f64, kappa: f64) -> Result<f64> {
    ConstantProduct.reserves_from_price(f, kappa)
}

/// Exact or second-order execution price.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Exact,
    Approx,
}

fn check_trade(delta_y: f64, y: f64) -> Result<()> {
    if !(delta_y > 0.0) || !delta_y.is_finite() {
        return Err(AmmError::Domain(format!(
            "delta_y must be positive, got {delta_y}"
        )));
    }
    require_positive("y", y)
}

/// Execution price per unit for an LT buying `delta_y` of the risky asset.
///
/// Exact: [φ(y−Δy,κ) − φ(y,κ) + πΔyF]/Δy.
/// Approx: F + πF + ½Δy ∂₁₁φ(y,κ).
pub fn exec_price_buy(
    delta_y: f64,
    y: f64,
    pool: &PoolSpec,
    f: f64,
    mode: ExecMode,
) -> Result<f64> {
    check_trade(delta_y, y)?;
    if delta_y >= y {
        return Err(AmmError::InsufficientReserves { requested: delta_y, available: y });
    }
    match mode {
        ExecMode::Exact => {
            let phi0 = pool.curve.level_value(y, pool.kappa)?;
            let phi1 = pool.curve.level_value(y - delta_y, pool.kappa)?;
            Ok((phi1 - phi0 + pool.fee_pi * delta_y * f) / delta_y)
        }
        ExecMode::Approx => {
            let conv = pool.curve.level_d2(y, pool.kappa)?;
            Ok(f + pool.fee_pi * f + 0.5 * delta_y * conv)
        }
    }
}

/// Execution price per unit for an LT selling `delta_y` of the risky asset.
///
/// Exact: [φ(y,κ) − φ(y+Δy,κ) − πΔyF]/Δy.
/// Approx: F − πF − ½Δy ∂₁₁φ(y,κ).
pub fn exec_price_sell(
    delta_y: f64,
    y: f64,
    pool: &PoolSpec,
    f: f64,
    mode: ExecMode,
) -> Result<f64> {
    check_trade(delta_y, y)?;
    match mode {
        ExecMode::Exact => {
            let phi0 = pool.curve.level_value(y, pool.kappa)?;
            let phi1 = pool.curve.level_value(y + delta_y, pool.kappa)?;
            Ok((phi0 - phi1 - pool.fee_pi * delta_y * f) / delta_y)
        }
        ExecMode::Approx => {
            let conv = pool.curve.level_d2(y, pool.kappa)?;
            Ok(f - pool.fee_pi * f - 0.5 * delta_y * conv)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn pool(kappa: f64) -> PoolSpec {
        // fee_pi irrelevant unless a test sets it; use a tiny placeholder
        PoolSpec { kappa, fee_pi: 0.003, curve: ConstantProduct }
    }

    fn feeless(kappa: f64) -> PoolSpec {
        PoolSpec { kappa, fee_pi: f64::MIN_POSITIVE, curve: ConstantProduct }
    }

    #[test]
    fn level_value_direct() {
        assert_eq!(level_value(1.0, 2.0).unwrap(), 4.0);
        assert_eq!(level_value(4.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn level_value_at_aligned_reserve_is_kappa_sqrt_f() {
        // X = φ(h(F,κ),κ) = κ√F; for F = 2.25, κ = 3 this is 4.5
        let y = reserves_from_price(2.25, 3.0).unwrap();
        assert_relative_eq!(level_value(y, 3.0).unwrap(), 4.5, max_relative = 1e-12);
    }

    #[test]
    fn marginal_price_direct() {
        assert_eq!(marginal_price(7.0, 7.0).unwrap(), 1.0);
        assert_eq!(marginal_price(1.0, 2.0).unwrap(), 4.0);
    }

    #[test]
    fn domain_errors_on_nonpositive_inputs() {
        assert!(level_value(0.0, 1.0).is_err());
        assert!(level_value(1.0, -1.0).is_err());
        assert!(marginal_price(-2.0, 1.0).is_err());
        assert!(reserves_from_price(0.0, 1.0).is_err());
        assert!(PoolSpec::new(1.0, 1.0).is_err());
        assert!(PoolSpec::new(1.0, 0.0).is_err());
        assert!(PoolSpec::new(0.0, 0.5).is_err());
    }

    #[test]
    fn reserves_from_price_direct() {
        assert_eq!(reserves_from_price(1.0, 5.0).unwrap(), 5.0);
        assert_eq!(reserves_from_price(4.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn reserve_derivatives_match_finite_differences() {
        let (f, kappa) = (1.7, 3.2);
        let c = ConstantProduct;
        let eps = 1e-5;
        let h = |x: f64| c.reserves_from_price(x, kappa).unwrap();
        let d1_fd = (h(f + eps) - h(f - eps)) / (2.0 * eps);
        let d2_fd = (h(f + eps) - 2.0 * h(f) + h(f - eps)) / (eps * eps);
        assert_relative_eq!(c.reserves_d1(f, kappa).unwrap(), d1_fd, max_relative = 1e-6);
        assert_relative_eq!(c.reserves_d2(f, kappa).unwrap(), d2_fd, max_relative = 1e-6);
    }

    #[test]
    fn exec_price_buy_exact_and_approx() {
        let p = feeless(2.0);
        // (Δy=0.1, y=1, κ=2, π=0): exact (4/0.9 − 4)/0.1
        let exact = exec_price_buy(0.1, 1.0, &p, 4.0, ExecMode::Exact).unwrap();
        assert_relative_eq!(exact, (4.0 / 0.9 - 4.0) / 0.1, max_relative = 1e-12);
        let approx = exec_price_buy(0.1, 1.0, &p, 4.0, ExecMode::Approx).unwrap();
        assert_relative_eq!(approx, 4.4, max_relative = 1e-12);
        // Δy → 0⁺ limit recovers the marginal price
        let tiny = exec_price_buy(1e-6, 1.0, &p, 4.0, ExecMode::Exact).unwrap();
        assert_abs_diff_eq!(tiny, 4.0, epsilon = 1e-5);
    }

    #[test]
    fn exec_price_sell_exact_and_limit() {
        let p = feeless(2.0);
        let exact = exec_price_sell(0.1, 1.0, &p, 4.0, ExecMode::Exact).unwrap();
        assert_relative_eq!(exact, (4.0 - 4.0 / 1.1) / 0.1, max_relative = 1e-12);
        let tiny = exec_price_sell(1e-6, 1.0, &p, 4.0, ExecMode::Exact).unwrap();
        assert_abs_diff_eq!(tiny, 4.0, epsilon = 1e-5);
    }

    #[test]
    fn buy_errors() {
        let p = pool(2.0);
        assert!(matches!(
            exec_price_buy(1.0, 1.0, &p, 4.0, ExecMode::Exact),
            Err(AmmError::InsufficientReserves { .. })
        ));
        assert!(exec_price_buy(-0.1, 1.0, &p, 4.0, ExecMode::Exact).is_err());
        assert!(exec_price_sell(0.0, 1.0, &p, 4.0, ExecMode::Exact).is_err());
    }

    proptest! {
        #[test]
        fn constant_product_identity(y in 1e-6f64..1e6, kappa in 1e-6f64..1e6) {
            let x = level_value(y, kappa).unwrap();
            prop_assert!((x * y - kappa * kappa).abs() <= 1e-12 * kappa * kappa);
        }

        #[test]
        fn price_round_trip(f in 1e-6f64..1e6, kappa in 1e-6f64..1e6) {
            let y = reserves_from_price(f, kappa).unwrap();
            let back = marginal_price(y, kappa).unwrap();
            prop_assert!((back - f).abs() <= 1e-12 * f);
        }

        #[test]
        fn convexity_ordering_feeless(f in 0.1f64..10.0, kappa in 0.1f64..10.0, frac in 1e-4f64..0.5) {
            let p = feeless(kappa);
            let y = reserves_from_price(f, kappa).unwrap();
            let dy = frac * y;
            let buy = exec_price_buy(dy, y, &p, f, ExecMode::Exact).unwrap();
            let sell = exec_price_sell(dy, y, &p, f, ExecMode::Exact).unwrap();
            prop_assert!(sell <= f * (1.0 + 1e-12));
            prop_assert!(buy >= f * (1.0 - 1e-12));
        }
    }

    #[test]
    fn marginal_price_decreasing_in_reserve_and_convexity_in_kappa() {
        let kappa = 2.5;
        let mut last = f64::INFINITY;
        for i in 1..=50 {
            let y = 0.1 * i as f64;
            let m = marginal_price(y, kappa).unwrap();
            assert!(m < last);
            last = m;
        }
        // at fixed price, convexity 2F^{3/2}/κ decreases in κ
        let f = 1.3;
        let mut last = f64::INFINITY;
        for i in 1..=50 {
            let k = 0.2 * i as f64;
            let y = reserves_from_price(f, k).unwrap();
            let c = ConstantProduct.level_d2(y, k).unwrap();
            assert!(c < last);
            last = c;
        }
    }

    #[test]
    fn second_order_approx_error_quadratic() {
        // |exact − approx|/exact ≤ K (Δy/y)² for Δy/y ≤ 0.05
        let p = feeless(3.0);
        let f = 2.0;
        let y = reserves_from_price(f, p.kappa).unwrap();
        let mut k_max: f64 = 0.0;
        for i in 1..=50 {
            let frac = 0.001 * i as f64;
            let dy = frac * y;
            let exact = exec_price_buy(dy, y, &p, f, ExecMode::Exact).unwrap();
            let approx = exec_price_buy(dy, y, &p, f, ExecMode::Approx).unwrap();
            let rel = (exact - approx).abs() / exact;
            k_max = k_max.max(rel / (frac * frac));
        }
        // empirically K ≈ 1 for CPM at this state; assert a generous bound
        assert!(k_max < 3.0, "calibrated K = {k_max}");
    }

    #[test]
    fn trading_cost_positive_under_convexity() {
        let p = feeless(2.0);
        for i in 1..=20 {
            let f = 0.5 * i as f64;
            let y = reserves_from_price(f, p.kappa).unwrap();
            let dy = 0.02 * y;
            let buy = exec_price_buy(dy, y, &p, f, ExecMode::Exact).unwrap();
            let sell = exec_price_sell(dy, y, &p, f, ExecMode::Exact).unwrap();
            assert!(buy - f > 0.0);
            assert!(f - sell > 0.0);
        }
    }
}
