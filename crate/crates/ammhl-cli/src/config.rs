//! Experiment configuration: TOML sections market/hedge/flow/grid/sweep/
//! outputs, dotted `--set` overrides, and builders into the core types.

use ammhl_core::{
    AmmError, FlowParams, HedgeParams, MarketModel, SignalModel, SimGrid, ValuationDist,
};
use serde::{Deserialize, Serialize};

/// Top-level config. Unknown keys anywhere are config errors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub market: MarketCfg,
    pub hedge: HedgeCfg,
    pub flow: FlowCfg,
    pub grid: GridCfg,
    pub sweep: SweepCfg,
    pub outputs: OutputCfg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketCfg {
    pub f0: f64,
    pub sigma: f64,
    pub horizon_t: f64,
    /// "zero", "constant", or "ou".
    pub signal: String,
    pub signal_a: f64,
    pub ou_theta: f64,
    pub ou_mu: f64,
    pub ou_xi: f64,
    pub ou_a0: f64,
    /// Pool depth for single-point runs (simulate, hedge-path, decompose).
    pub kappa: f64,
    /// Budget cap and grid resolution for stage one.
    pub kappa_max: f64,
    pub kappa_grid_n: usize,
}

impl Default for MarketCfg {
    fn default() -> Self {
        Self {
            f0: 1.0,
            sigma: 0.1,
            horizon_t: 1.0,
            signal: "zero".into(),
            signal_a: 0.0,
            ou_theta: 1.0,
            ou_mu: 0.0,
            ou_xi: 0.1,
            ou_a0: 0.0,
            kappa: 1.0,
            kappa_max: 2.0e4,
            kappa_grid_n: 21,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HedgeCfg {
    pub eta: f64,
    pub phi: f64,
    pub c: f64,
    pub beta_res: f64,
}

impl Default for HedgeCfg {
    fn default() -> Self {
        Self { eta: 1e-2, phi: 0.1, c: 0.0, beta_res: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowCfg {
    /// Profitability γ = λπ(v̄−π)/2; ignored when `lambda` is set explicitly.
    pub gamma: f64,
    pub lambda: Option<f64>,
    pub fee_pi: f64,
    /// "uniform", "two_point", or "point_mass".
    pub valuation: String,
    pub v_low_prob: f64,
    pub v_eps: f64,
    pub v_point: f64,
}

impl Default for FlowCfg {
    fn default() -> Self {
        Self {
            gamma: 0.2,
            lambda: None,
            fee_pi: 0.003,
            valuation: "uniform".into(),
            v_low_prob: 0.5,
            v_eps: 0.1,
            v_point: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridCfg {
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for GridCfg {
    fn default() -> Self {
        Self { n_steps: 200, n_paths: 1000, seed: 1 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepCfg {
    /// Whitelisted dotted parameter name, e.g. "hedge.phi"; empty = no sweep.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputCfg {
    pub dir: String,
    /// "rate" integrates γκ√F dt; "realized" thins Poisson arrivals.
    pub fees: String,
    /// Emit per-value wealth distributions during sweeps.
    pub emit_wealth: bool,
    /// Emit per-value sample path/hedge CSVs during sweeps.
    pub emit_samples: bool,
}

impl Default for OutputCfg {
    fn default() -> Self {
        Self { dir: "out".into(), fees: "rate".into(), emit_wealth: false, emit_samples: false }
    }
}

/// Parse the file (if any) and apply `--set key=value` overrides on the raw
/// TOML tree, so overrides share the validation path with file values.
pub fn load_config(path: Option<&str>, sets: &[String]) -> Result<ExperimentConfig, String> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| format!("cannot read {p}: {e}"))?,
        None => String::new(),
    };
    let mut tree: toml::Value =
        toml::from_str(&text).map_err(|e| format!("invalid config TOML: {e}"))?;
    for kv in sets {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| format!("--set expects key=value, got {kv:?}"))?;
        let parsed: toml::Value = toml::from_str(&format!("v = {value}"))
            .map(|t: toml::Value| t["v"].clone())
            .unwrap_or_else(|_| toml::Value::String(value.to_string()));
        set_dotted(&mut tree, key, parsed)?;
    }
    tree.try_into().map_err(|e| format!("invalid config: {e}"))
}

fn set_dotted(tree: &mut toml::Value, key: &str, value: toml::Value) -> Result<(), String> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("invalid --set key {key:?}"));
    }
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| format!("--set key {key:?} does not address a table"))?;
        node = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(toml::map::Map::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| format!("--set key {key:?} does not address a table"))?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn market_model(&self) -> Result<MarketModel, AmmError> {
        let m = &self.market;
        let signal = match m.signal.as_str() {
            "zero" => SignalModel::Zero,
            "constant" => SignalModel::Constant { a: m.signal_a },
            "ou" => SignalModel::Ou {
                theta: m.ou_theta,
                mu: m.ou_mu,
                xi: m.ou_xi,
                a0: m.ou_a0,
            },
            other => {
                return Err(AmmError::Config(format!(
                    "market.signal must be zero, constant, or ou; got {other:?}"
                )))
            }
        };
        MarketModel::new(m.f0, m.sigma, m.horizon_t, signal)
    }

    /// Hedge parameters with the stage-one convention q0 = −κ/√F₀.
    pub fn hedge_params(&self, kappa: f64) -> Result<HedgeParams, AmmError> {
        let h = &self.hedge;
        let q0 = if kappa > 0.0 { -kappa / self.market.f0.sqrt() } else { 0.0 };
        HedgeParams::new(h.eta, h.phi, h.c, h.beta_res, q0)
    }

    pub fn flow_params(&self) -> Result<FlowParams, AmmError> {
        let f = &self.flow;
        let valuation = match f.valuation.as_str() {
            "uniform" => ValuationDist::Uniform,
            "two_point" => ValuationDist::TwoPoint { p_low: f.v_low_prob, eps: f.v_eps },
            "point_mass" => ValuationDist::PointMass { v: f.v_point },
            other => {
                return Err(AmmError::Config(format!(
                    "flow.valuation must be uniform, two_point, or point_mass; got {other:?}"
                )))
            }
        };
        match f.lambda {
            Some(lambda) => FlowParams::new(lambda, f.fee_pi, valuation),
            None => FlowParams::from_gamma(f.gamma, f.fee_pi, valuation),
        }
    }

    pub fn sim_grid(&self) -> Result<SimGrid, AmmError> {
        SimGrid::new(self.grid.n_steps, self.grid.n_paths, self.grid.seed)
    }

    /// Apply one sweep value; names outside the whitelist are config errors.
    pub fn apply_sweep_value(&mut self, parameter: &str, value: f64) -> Result<(), AmmError> {
        match parameter {
            "market.f0" => self.market.f0 = value,
            "market.sigma" => self.market.sigma = value,
            "market.horizon_t" => self.market.horizon_t = value,
            "market.signal_a" => self.market.signal_a = value,
            "market.kappa" => self.market.kappa = value,
            "hedge.eta" => self.hedge.eta = value,
            "hedge.phi" => self.hedge.phi = value,
            "hedge.c" => self.hedge.c = value,
            "hedge.beta_res" => self.hedge.beta_res = value,
            // the figures sweep the ratio beta = phi/eta at fixed eta
            "hedge.beta_ratio" => self.hedge.phi = value * self.hedge.eta,
            "flow.gamma" => self.flow.gamma = value,
            "flow.fee_pi" => self.flow.fee_pi = value,
            other => {
                return Err(AmmError::Config(format!(
                    "sweep.parameter {other:?} is not in the whitelist"
                )))
            }
        }
        Ok(())
    }

    /// Config echo for artifact headers: the resolved TOML, `# `-prefixed.
    /// The output directory is not part of the experiment, so it is
    /// normalized out; identical runs then produce identical artifacts.
    pub fn echo_header(&self) -> String {
        let mut echo = self.clone();
        echo.outputs.dir = OutputCfg::default().dir;
        let body = toml::to_string(&echo).unwrap_or_default();
        let mut out = format!("# ammhl {}\n", env!("CARGO_PKG_VERSION"));
        for line in body.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_overrides_apply() {
        let cfg = load_config(None, &[]).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(toml::to_string(&back).unwrap(), text);

        let cfg = load_config(
            None,
            &["market.sigma=0.25".into(), "grid.seed=9".into(), "market.signal=constant".into()],
        )
        .unwrap();
        assert_eq!(cfg.market.sigma, 0.25);
        assert_eq!(cfg.grid.seed, 9);
        assert_eq!(cfg.market.signal, "constant");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(load_config(None, &["market.sigmaa=0.2".into()]).is_err());
        assert!(load_config(None, &["nope.x=1".into()]).is_err());
    }

    #[test]
    fn sweep_whitelist() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_sweep_value("hedge.beta_ratio", 100.0).unwrap();
        assert_eq!(cfg.hedge.phi, 1.0);
        assert!(matches!(
            cfg.apply_sweep_value("grid.seed", 1.0),
            Err(AmmError::Config(_))
        ));
    }
}
