//! `ammhl`: experiment driver for the AMM liquidity/hedging simulator.
//!
//! Every run resolves one `ExperimentConfig` (defaults, then `--config`,
//! then `--set` overrides), pins the rayon pool if `AMMHL_THREADS` is set,
//! and writes artifacts under the output directory. CSV artifacts start
//! with a `# `-prefixed echo of the resolved config so a result file is
//! reproducible on its own.

mod config;

use ammhl_core::{
    assemble_fbsde_solution, fmt_g17, hedge_path_no_transient, kappa_star_closed_form_a0,
    kappa_star_with_signal, run_stage_one, simulate_fee_accrual, simulate_paths,
    wealth_decomposition, wealth_to_csv, AmmError, HedgePath, SignalModel, StageOneInputs,
    StageOneResult, WealthRecord,
};
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ammhl", version, about = "AMM liquidity and risk-offsetting simulator")]
struct Cli {
    /// TOML experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Dotted override, e.g. --set market.sigma=0.2 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Output directory; overrides outputs.dir.
    #[arg(long, global = true)]
    out: Option<String>,

    /// RNG seed; overrides grid.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate price/signal/reserve paths and fee accrual.
    Simulate,
    /// Solve the stage-two hedge on simulated paths.
    HedgePath,
    /// Solve the matrix Riccati equation and report its residual.
    Riccati {
        /// Time mesh size for the backward RK4 solve.
        #[arg(long, default_value_t = 1024)]
        mesh_n: usize,
    },
    /// Stage-one pool depth: closed forms, MC value curve, argmax.
    Liquidity,
    /// Stage-one equilibrium across a parameter sweep.
    Sweep,
    /// Terminal wealth decomposition at the configured pool depth.
    Decompose,
}

enum CliError {
    Config(String),
    Core(AmmError),
    Io(String),
}

impl From<AmmError> for CliError {
    fn from(e: AmmError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    /// 2 = the request was invalid, 3 = the computation failed.
    fn code_and_kind(&self) -> (u8, &'static str) {
        match self {
            CliError::Config(_) => (2, "config"),
            CliError::Io(_) => (3, "io"),
            CliError::Core(e) => match e {
                AmmError::Config(_) => (2, "config"),
                AmmError::Domain(_) => (2, "domain"),
                AmmError::Precondition(_) => (2, "precondition"),
                AmmError::Capability(_) => (2, "capability"),
                AmmError::Convergence(_) => (3, "convergence"),
                AmmError::Inconsistency(_) => (3, "inconsistency"),
                AmmError::Shape(_) => (3, "shape"),
                AmmError::InsufficientReserves { .. } => (3, "insufficient_reserves"),
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Io(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = e.code_and_kind();
            // single line, machine parseable
            eprintln!("error code={code} kind={kind} msg={:?}", e.message());
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Ok(threads) = std::env::var("AMMHL_THREADS") {
        let n: usize = threads
            .parse()
            .map_err(|_| CliError::Config(format!("AMMHL_THREADS must be an integer, got {threads:?}")))?;
        // ignore the error from a second init; the pool is process-global
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = config::load_config(cli.config.as_deref(), &cli.sets).map_err(CliError::Config)?;
    if let Some(dir) = &cli.out {
        cfg.outputs.dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.grid.seed = seed;
    }
    let out_dir = PathBuf::from(&cfg.outputs.dir);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;

    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg, &out_dir),
        Command::HedgePath => cmd_hedge_path(&cfg, &out_dir),
        Command::Riccati { mesh_n } => cmd_riccati(&cfg, &out_dir, *mesh_n),
        Command::Liquidity => cmd_liquidity(&cfg, &out_dir),
        Command::Sweep => cmd_sweep(&cfg, &out_dir),
        Command::Decompose => cmd_decompose(&cfg, &out_dir),
    }
}

fn write_csv(dir: &Path, name: &str, cfg: &ExperimentConfig, body: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    let text = format!("{}{}", cfg.echo_header(), body);
    std::fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
    let path = dir.join(name);
    let wrapped = serde_json::json!({
        "ammhl_version": env!("CARGO_PKG_VERSION"),
        "result": value,
    });
    let text = serde_json::to_string_pretty(&wrapped).expect("json serialization");
    std::fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.market_model()?;
    let grid = cfg.sim_grid()?;
    let flow = cfg.flow_params()?;
    let kappa = cfg.market.kappa;
    let paths = simulate_paths(&model, &grid, kappa)?;
    let fees = simulate_fee_accrual(&paths, &flow, kappa, grid.seed.wrapping_add(1))?;
    if fees.discretization_warning {
        eprintln!("warning: lambda*dt > 0.1, thinned arrivals underestimate fee counts");
    }
    write_csv(out, "paths.csv", cfg, &paths.to_csv())?;
    write_csv(out, "fees.csv", cfg, &fees.to_csv())
}

/// Solve the hedge at the configured κ: closed form when c = 0, Riccati
/// assembly otherwise.
fn solve_hedge(cfg: &ExperimentConfig, paths: &ammhl_core::PathBundle) -> Result<HedgePath, CliError> {
    let model = cfg.market_model()?;
    let kappa = cfg.market.kappa;
    let hp = cfg.hedge_params(kappa)?;
    if cfg.hedge.c == 0.0 {
        Ok(hedge_path_no_transient(paths, kappa, &hp, &model)?)
    } else {
        let dre = ammhl_core::solve_dre(&hp, model.horizon_t, 1024)?;
        Ok(assemble_fbsde_solution(&dre, paths, kappa, &hp, &model)?)
    }
}

fn cmd_hedge_path(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.market_model()?;
    let grid = cfg.sim_grid()?;
    let paths = simulate_paths(&model, &grid, cfg.market.kappa)?;
    let hedge = solve_hedge(cfg, &paths)?;
    write_csv(out, "hedge.csv", cfg, &hedge.to_csv())
}

fn cmd_riccati(cfg: &ExperimentConfig, out: &Path, mesh_n: usize) -> Result<(), CliError> {
    let model = cfg.market_model()?;
    let hp = cfg.hedge_params(cfg.market.kappa)?;
    let dre = ammhl_core::solve_dre(&hp, model.horizon_t, mesh_n)?;
    let mut body = String::from("t,p11,p12,p21,p22\n");
    for (t, p) in dre.grid.iter().zip(&dre.p_mat) {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_g17(*t),
            fmt_g17(p[(0, 0)]),
            fmt_g17(p[(0, 1)]),
            fmt_g17(p[(1, 0)]),
            fmt_g17(p[(1, 1)])
        ));
    }
    write_csv(out, "riccati.csv", cfg, &body)?;
    write_json(
        out,
        "riccati_summary.json",
        &serde_json::json!({
            "mesh_n": dre.grid.len() - 1,
            "residual_sup": dre.residual_sup,
        }),
    )
}

fn stage_one_inputs(cfg: &ExperimentConfig) -> Result<StageOneInputs, CliError> {
    let model = cfg.market_model()?;
    // stage one chooses κ; q0 is set internally per candidate depth
    let hp = cfg.hedge_params(0.0)?;
    let flow = cfg.flow_params()?;
    Ok(StageOneInputs::new(model, hp, flow, cfg.market.kappa_max)?)
}

fn cmd_liquidity(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let inputs = stage_one_inputs(cfg)?;
    let grid = cfg.sim_grid()?;
    let result = run_stage_one(&inputs, &grid, cfg.market.kappa_grid_n)?;
    write_csv(out, "value_curve.csv", cfg, &result.curve_to_csv())?;
    let value = serde_json::to_value(&result).expect("stage one serialization");
    write_json(out, "stage_one.json", &value)
}

/// Stage-one point without the MC value curve; closed forms when available.
fn stage_one_point(cfg: &ExperimentConfig) -> Result<StageOneResult, CliError> {
    let inputs = stage_one_inputs(cfg)?;
    let grid = cfg.sim_grid()?;
    if matches!(inputs.model.signal, SignalModel::Zero) && inputs.hp.c == 0.0 {
        let cf = kappa_star_closed_form_a0(&inputs.model, &inputs.flow, &inputs.hp)?;
        let s2 = inputs.model.sigma * inputs.model.sigma;
        Ok(StageOneResult {
            kappa_ref: cf.kappa_ref,
            kappa_star: cf.kappa_star.min(inputs.kappa_max),
            scaling: cf.scaling,
            frak_a: ammhl_core::McEstimate { mean: 0.0, se: 0.0 },
            frak_b: ammhl_core::McEstimate { mean: cf.frak_b, se: 0.0 },
            e2: ammhl_core::McEstimate { mean: cf.c_t / (s2 * inputs.model.f0), se: 0.0 },
            shutdown: cf.shutdown,
            clamped: cf.kappa_star > inputs.kappa_max,
            mc_value_curve: Vec::new(),
            argmax_mc: None,
            argmax_at_boundary: false,
        })
    } else {
        Ok(kappa_star_with_signal(&inputs, &grid)?)
    }
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let single_point = cfg.sweep.parameter.is_empty() || cfg.sweep.values.is_empty();
    let values: Vec<f64> = if single_point { vec![f64::NAN] } else { cfg.sweep.values.clone() };
    let mut body = String::from("param,value,kappa_ref,kappa_star,scaling,frak_b,shutdown\n");
    for (i, &v) in values.iter().enumerate() {
        let mut point_cfg = cfg.clone();
        let label = if single_point {
            "none".to_string()
        } else {
            point_cfg.apply_sweep_value(&cfg.sweep.parameter, v)?;
            cfg.sweep.parameter.clone()
        };
        let r = stage_one_point(&point_cfg)?;
        body.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            label,
            fmt_g17(v),
            fmt_g17(r.kappa_ref),
            fmt_g17(r.kappa_star),
            fmt_g17(r.scaling),
            fmt_g17(r.frak_b.mean),
            r.shutdown
        ));
        if r.shutdown || !(r.kappa_star > 0.0) {
            continue;
        }
        if cfg.outputs.emit_wealth {
            let records = wealth_at(&point_cfg, r.kappa_star)?;
            write_csv(out, &format!("wealth_{i}.csv"), &point_cfg, &wealth_to_csv(&records))?;
        }
        if cfg.outputs.emit_samples {
            let model = point_cfg.market_model()?;
            let grid = point_cfg.sim_grid()?;
            let paths = simulate_paths(&model, &grid, r.kappa_star)?;
            write_csv(out, &format!("paths_{i}.csv"), &point_cfg, &paths.to_csv())?;
        }
    }
    write_csv(out, "liquidity_sweep.csv", cfg, &body)
}

/// Simulate, hedge, and decompose terminal wealth at pool depth κ.
fn wealth_at(cfg: &ExperimentConfig, kappa: f64) -> Result<Vec<WealthRecord>, CliError> {
    let model = cfg.market_model()?;
    let grid = cfg.sim_grid()?;
    let flow = cfg.flow_params()?;
    let paths = simulate_paths(&model, &grid, kappa)?;
    let mut point_cfg = cfg.clone();
    point_cfg.market.kappa = kappa;
    let hedge = solve_hedge(&point_cfg, &paths)?;
    let accrual = simulate_fee_accrual(&paths, &flow, kappa, grid.seed.wrapping_add(1))?;
    let fees: Vec<f64> = match cfg.outputs.fees.as_str() {
        "rate" => (0..grid.n_paths).map(|p| *accrual.rate_path(p).last().unwrap()).collect(),
        "realized" => {
            (0..grid.n_paths).map(|p| *accrual.realized_path(p).last().unwrap()).collect()
        }
        other => {
            return Err(CliError::Config(format!(
                "outputs.fees must be rate or realized, got {other:?}"
            )))
        }
    };
    Ok(wealth_decomposition(&paths, &hedge, &fees, kappa, cfg.hedge.eta)?)
}

fn cmd_decompose(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let records = wealth_at(cfg, cfg.market.kappa)?;
    write_csv(out, "wealth.csv", cfg, &wealth_to_csv(&records))?;
    let n = records.len() as f64;
    let mean = |f: fn(&WealthRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    write_json(
        out,
        "wealth_summary.json",
        &serde_json::json!({
            "n_paths": records.len(),
            "kappa": cfg.market.kappa,
            "mean_fee_revenue": mean(|r| r.fee_revenue),
            "mean_dex_value_change": mean(|r| r.dex_value_change),
            "mean_risk_offsetting_pnl": mean(|r| r.risk_offsetting_pnl),
            "mean_cex_cost": mean(|r| r.cex_cost),
            "mean_total": mean(|r| r.total),
            "mean_normalized_total": mean(|r| r.normalized_total),
        }),
    )
}
