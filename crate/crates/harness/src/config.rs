//! Experiment configuration. JSON, every block optional, unknown keys
//! rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use isac_core::channel::{CsiErrorSpec, ErrorModel, ErrorScale, ScenarioConfig};
use isac_core::fpga::{AcceleratorConfig, BUS_WIDTHS, MAX_BITS, MIN_BITS};
use isac_core::gnn::{GnnConfig, TrainConfig};
use isac_core::metrics::{Noise, ObjectiveWeights, ReceiveMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{HarnessError, Result};

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Transmit budget and noise floors in dBm. The noise default is -90 dBm
/// (1e-9 mW).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConfig {
    pub power_dbm: f64,
    pub noise_user_dbm: f64,
    pub noise_radar_dbm: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            power_dbm: 0.0,
            noise_user_dbm: -90.0,
            noise_radar_dbm: -90.0,
        }
    }
}

impl PowerConfig {
    pub fn noise(&self) -> Noise {
        Noise {
            user: dbm_to_mw(self.noise_user_dbm),
            radar: dbm_to_mw(self.noise_radar_dbm),
            power: dbm_to_mw(self.power_dbm),
        }
    }
}

/// Network sizes; the antenna and RF-chain counts come from the scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: usize,
    pub embed: usize,
    pub conv_layers: usize,
    pub shared: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let g = GnnConfig::default();
        Self {
            hidden: g.hidden,
            embed: g.embed,
            conv_layers: g.conv_layers,
            shared: g.shared,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Gnn,
    Mmse,
    Zf,
    Mrt,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Gnn, Scheme::Mmse, Scheme::Zf, Scheme::Mrt];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Gnn => "gnn",
            Scheme::Mmse => "mmse",
            Scheme::Zf => "zf",
            Scheme::Mrt => "mrt",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gnn" => Ok(Scheme::Gnn),
            "mmse" => Ok(Scheme::Mmse),
            "zf" => Ok(Scheme::Zf),
            "mrt" => Ok(Scheme::Mrt),
            other => Err(format!("unknown scheme `{other}` (expected gnn, mmse, zf or mrt)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepVar {
    Power,
    NBs,
    NUsers,
    NTargets,
    Alpha,
    Csi,
}

impl SweepVar {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::Power => "power",
            SweepVar::NBs => "n_bs",
            SweepVar::NUsers => "n_users",
            SweepVar::NTargets => "n_targets",
            SweepVar::Alpha => "alpha",
            SweepVar::Csi => "csi",
        }
    }
}

/// Grids for every sweep variable plus the schemes and draws per point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub schemes: Vec<Scheme>,
    pub draws: usize,
    pub power_dbm: Vec<f64>,
    pub n_bs: Vec<usize>,
    pub n_users: Vec<usize>,
    pub n_targets: Vec<usize>,
    /// Sensing weights; the communication weight is `1 - alpha_sen`.
    pub alpha_sen: Vec<f64>,
    /// Error variances (gaussian) or bounds (bounded) for the CSI sweep.
    pub csi_levels: Vec<f64>,
    pub csi_model: ErrorModel,
    pub csi_scale: ErrorScale,
    /// Error realizations averaged per evaluated channel in the CSI sweep.
    pub csi_eval_draws: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            draws: 20,
            power_dbm: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            n_bs: vec![1, 2, 3, 4],
            n_users: vec![1, 2, 3, 4],
            n_targets: vec![1, 2],
            alpha_sen: vec![0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0],
            csi_levels: vec![0.0, 0.005, 0.01, 0.02, 0.05],
            csi_model: ErrorModel::Gaussian,
            csi_scale: ErrorScale::Relative,
            csi_eval_draws: 16,
        }
    }
}

impl SweepConfig {
    pub fn grid(&self, var: SweepVar) -> Vec<f64> {
        match var {
            SweepVar::Power => self.power_dbm.clone(),
            SweepVar::NBs => self.n_bs.iter().map(|&v| v as f64).collect(),
            SweepVar::NUsers => self.n_users.iter().map(|&v| v as f64).collect(),
            SweepVar::NTargets => self.n_targets.iter().map(|&v| v as f64).collect(),
            SweepVar::Alpha => self.alpha_sen.clone(),
            SweepVar::Csi => self.csi_levels.clone(),
        }
    }

    pub fn csi_spec(&self, level: f64) -> CsiErrorSpec {
        match self.csi_model {
            ErrorModel::None => CsiErrorSpec::none(),
            ErrorModel::Gaussian => CsiErrorSpec::gaussian(level, level, self.csi_scale),
            ErrorModel::Bounded => CsiErrorSpec::bounded(level, level, self.csi_scale),
        }
    }
}

/// Training-trace variants: one curve per `(bs, kappa)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeConfig {
    pub iterations: usize,
    pub bs: Vec<usize>,
    pub kappa: Vec<f64>,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            bs: vec![2, 3],
            kappa: vec![0.3, 3.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyConfig {
    pub accelerator: AcceleratorConfig,
    pub bits: Vec<u32>,
    pub bus_bits: Vec<u32>,
    /// Channel draws for the fixed-point accuracy deltas.
    pub draws: usize,
    pub checkpoint: Option<PathBuf>,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            accelerator: AcceleratorConfig::default(),
            bits: vec![8, 16],
            bus_bits: vec![64, 128],
            draws: 50,
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub scenario: ScenarioConfig,
    pub weights: ObjectiveWeights,
    pub power: PowerConfig,
    pub receive: ReceiveMode,
    /// CSI error the network is trained under and evaluated against.
    pub csi: CsiErrorSpec,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub converge: ConvergeConfig,
    pub latency: LatencyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("results"),
            scenario: ScenarioConfig::default(),
            weights: ObjectiveWeights::default(),
            power: PowerConfig::default(),
            receive: ReceiveMode::Mvdr,
            csi: CsiErrorSpec::none(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            converge: ConvergeConfig::default(),
            latency: LatencyConfig::default(),
        }
    }
}

fn invalid(path: &str, msg: impl fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    pub fn noise(&self) -> Noise {
        self.power.noise()
    }

    pub fn gnn_config(&self, scenario: &ScenarioConfig) -> GnnConfig {
        GnnConfig {
            hidden: self.network.hidden,
            embed: self.network.embed,
            conv_layers: self.network.conv_layers,
            shared: self.network.shared,
            ..GnnConfig::from_scenario(scenario)
        }
    }

    /// Training settings with the run seed and CSI spec filled in.
    pub fn train_config(&self, csi: &CsiErrorSpec) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            csi: *csi,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate().map_err(|e| invalid("scenario", e))?;
        let w = &self.weights;
        for (name, v) in [("alpha_com", w.alpha_com), ("alpha_sen", w.alpha_sen), ("eta", w.eta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(&format!("weights.{name}"), format!("must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("power_dbm", self.power.power_dbm),
            ("noise_user_dbm", self.power.noise_user_dbm),
            ("noise_radar_dbm", self.power.noise_radar_dbm),
        ] {
            if !v.is_finite() {
                return Err(invalid(&format!("power.{name}"), format!("must be finite, got {v}")));
            }
        }
        self.csi.validate().map_err(|e| invalid("csi", e))?;
        self.gnn_config(&self.scenario).validate().map_err(|e| invalid("network", e))?;
        self.train.validate().map_err(|e| invalid("train", e))?;

        let s = &self.sweep;
        if s.schemes.is_empty() {
            return Err(invalid("sweep.schemes", "must name at least one scheme"));
        }
        if s.draws == 0 || s.csi_eval_draws == 0 {
            return Err(invalid("sweep.draws", "must be at least 1"));
        }
        for var in [SweepVar::Power, SweepVar::NBs, SweepVar::NUsers, SweepVar::NTargets, SweepVar::Alpha, SweepVar::Csi] {
            let grid = s.grid(var);
            let name = format!("sweep.{}", grid_key(var));
            if grid.is_empty() {
                return Err(invalid(&name, "grid is empty"));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return Err(invalid(&name, "grid values must be finite"));
            }
        }
        if s.alpha_sen.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(invalid("sweep.alpha_sen", "values must lie in [0, 1]"));
        }
        for &level in &s.csi_levels {
            s.csi_spec(level).validate().map_err(|e| invalid("sweep.csi_levels", e))?;
        }
        for (name, v) in [("n_bs", &s.n_bs), ("n_users", &s.n_users), ("n_targets", &s.n_targets)] {
            if v.contains(&0) {
                return Err(invalid(&format!("sweep.{name}"), "counts must be at least 1"));
            }
        }
        for &u in &s.n_users {
            let mut d = self.scenario.dims;
            d.users = u;
            d.validate().map_err(|e| invalid("sweep.n_users", e))?;
        }
        for &t in &s.n_targets {
            let mut d = self.scenario.dims;
            d.targets = t;
            d.validate().map_err(|e| invalid("sweep.n_targets", e))?;
        }

        let c = &self.converge;
        if c.iterations == 0 || c.bs.is_empty() || c.kappa.is_empty() || c.bs.contains(&0) {
            return Err(invalid("converge", "needs iterations >= 1 and non-empty bs (>= 1) and kappa lists"));
        }
        if c.kappa.iter().any(|k| !(*k >= 0.0)) {
            return Err(invalid("converge.kappa", "values must be >= 0"));
        }

        let l = &self.latency;
        l.accelerator.validate().map_err(|e| invalid("latency.accelerator", e))?;
        if let Some(b) = l.bits.iter().find(|b| !(MIN_BITS..=MAX_BITS).contains(*b)) {
            return Err(invalid("latency.bits", format!("{b} outside {MIN_BITS}..={MAX_BITS}")));
        }
        if let Some(b) = l.bus_bits.iter().find(|b| !BUS_WIDTHS.contains(b)) {
            return Err(invalid("latency.bus_bits", format!("{b} not in {BUS_WIDTHS:?}")));
        }
        if l.bits.is_empty() || l.bus_bits.is_empty() || l.draws == 0 {
            return Err(invalid("latency", "needs non-empty bits and bus_bits and draws >= 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }
}

fn grid_key(var: SweepVar) -> &'static str {
    match var {
        SweepVar::Power => "power_dbm",
        SweepVar::NBs => "n_bs",
        SweepVar::NUsers => "n_users",
        SweepVar::NTargets => "n_targets",
        SweepVar::Alpha => "alpha_sen",
        SweepVar::Csi => "csi_levels",
    }
}

/// Parses a config; an empty document yields every default.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        invalid(if path == "." { "config" } else { &path }, e.into_inner())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let n = cfg.noise();
        assert_eq!(n.power, 1.0);
        assert!((n.user / 1e-9 - 1.0).abs() < 1e-12);
        let d = cfg.scenario.dims;
        assert_eq!((d.bs, d.users, d.targets, d.n_rf, d.n_u, d.n_r, d.n_t), (2, 2, 2, 6, 2, 4, 8));
        assert_eq!((cfg.weights.alpha_com, cfg.weights.alpha_sen, cfg.weights.eta), (0.5, 0.5, 5e6));
        assert_eq!(cfg.scenario.kappa_com, 0.3);
    }

    #[test]
    fn unknown_key_reports_its_path() {
        let err = parse_config(r#"{"scenario": {"dims": {"bogus": 1}}}"#).unwrap_err().to_string();
        assert!(err.contains("scenario.dims"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn stream_count_violation_is_named() {
        let err = parse_config(r#"{"scenario": {"dims": {"users": 4, "targets": 3}}}"#).unwrap_err().to_string();
        assert!(err.contains("users + targets <= n_rf"), "{err}");
    }

    #[test]
    fn override_changes_hash() {
        let cfg = parse_config(r#"{"weights": {"alpha_sen": 0.7}}"#).unwrap();
        assert_eq!(cfg.weights.alpha_sen, 0.7);
        assert_ne!(cfg.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn scheme_names_parse() {
        assert_eq!("MMSE".parse::<Scheme>().unwrap(), Scheme::Mmse);
        assert!("foo".parse::<Scheme>().is_err());
    }
}
