//! Equilibrium liquidity provision on a constant-product DEX with costly
//! risk offsetting on a CEX.
//!
//! The library is organised around three stages of the LP's problem:
//! pool/curve algebra and execution prices (`curve`), fundamental price and
//! reserve dynamics plus conditional-moment kernels (`market`), noise-trader
//! flow and fee revenue (`flow`), the dynamic hedging layer with and without
//! transient impact (`hedging`), and the stage-one choice of pool depth κ
//! (`liquidity`). `wealth` carries the experiment-level decompositions.

pub mod curve;
pub mod error;
pub mod flow;
pub mod hedging;
pub mod liquidity;
pub mod market;
pub mod quad;
pub mod rng;
pub mod wealth;

pub use curve::{
    exec_price_buy, exec_price_sell, level_value, marginal_price, reserves_from_price,
    BondingCurve, ConstantProduct, CurveEval, ExecMode, PoolSpec,
};
pub use error::{AmmError, Result};
pub use flow::{
    fee_rate, lambda_for_gamma, optimal_volume, simulate_fee_accrual, FeeAccrual, FlowParams,
    ValuationDist,
};
pub use hedging::gateaux::{gateaux_residual, GateauxStats};
pub use hedging::kernels::{logcosh, TrackingKernels};
pub use hedging::no_transient::{
    ell_no_transient, hedge_from_nu, hedge_path_no_transient, pathwise_criterion_c0,
};
pub use hedging::riccati::{assemble_fbsde_solution, solve_dre, solve_dre_fixed, RiccatiSolution};
pub use hedging::{HedgeParams, HedgePath};
pub use liquidity::{
    frak_b_closed_form, kappa_ref_closed_form, kappa_ref_via_moments, kappa_star_closed_form_a0,
    kappa_star_with_signal, kernel_paths, mc_decomposition_samples, mc_objective,
    mc_objective_samples, optimize_kappa_mc, run_stage_one, ClosedFormStageOne, KappaRef,
    KernelPaths, McEstimate, McPoint, OptimizeOutcome, StageOneInputs, StageOneResult,
};
pub use market::{
    cond_moment, cond_signal_price_moment, drift_g, fmt_g17, impact_step, simulate_paths,
    MarketModel, PathBundle, SignalModel, SimGrid,
};
pub use rng::path_rng;
pub use wealth::{lvr_rate, wealth_decomposition, wealth_no_hedge, wealth_to_csv, WealthRecord};
