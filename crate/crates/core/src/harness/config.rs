//! The flat JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codebook::CodebookConfig;
use crate::error::{Error, Result};
use crate::rl::A2cConfig;
use crate::sim::{SimConfig, Traffic};
use crate::topology::Scenario;
use crate::xapp::agent::AgentContext;
use crate::xapp::{AgentKind, Normalization, RewardConstants};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficMode {
    FullBuffer,
    FixedRate,
}

/// Every key is optional; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub agent: AgentKind,
    /// Training episodes.
    pub episodes: u64,
    pub eval_episodes: u64,
    pub ttis_per_episode: u64,
    pub out_dir: PathBuf,

    pub num_sites: usize,
    pub sectors_per_site: usize,
    pub isd_m: f64,
    pub carrier_ghz: f64,
    pub bandwidth_mhz: f64,
    pub num_prbs: usize,
    pub num_subbands: usize,
    pub ues_per_cell: usize,
    pub bs_power_dbm: f64,
    pub bs_height_m: f64,
    pub ue_height_m: f64,
    pub noise_figure_db: f64,

    #[serde(rename = "codebook.n1")]
    pub n1: usize,
    #[serde(rename = "codebook.n2")]
    pub n2: usize,
    #[serde(rename = "codebook.o1")]
    pub o1: usize,
    #[serde(rename = "codebook.o2")]
    pub o2: usize,

    pub rho: f64,
    pub rx_antennas: usize,
    pub traffic: TrafficMode,
    pub demand_mbps: f64,

    #[serde(rename = "rl.n_steps")]
    pub n_steps: usize,
    #[serde(rename = "rl.gamma")]
    pub gamma: f64,
    #[serde(rename = "rl.learning_rate")]
    pub learning_rate: f64,
    #[serde(rename = "rl.value_coef")]
    pub value_coef: f64,
    #[serde(rename = "rl.entropy_coef")]
    pub entropy_coef: f64,
    #[serde(rename = "rl.max_grad_norm")]
    pub max_grad_norm: f64,
    #[serde(rename = "rl.rms_alpha")]
    pub rms_alpha: f64,
    #[serde(rename = "rl.rms_eps")]
    pub rms_eps: f64,
    #[serde(rename = "rl.normalize_advantage")]
    pub normalize_advantage: bool,
    #[serde(rename = "rl.hidden")]
    pub hidden: Vec<usize>,
    #[serde(rename = "rl.head_init_gain")]
    pub head_init_gain: f64,

    #[serde(rename = "reward.gamma_target")]
    pub gamma_target: f64,
    #[serde(rename = "reward.alpha")]
    pub alpha: f64,
    #[serde(rename = "reward.util_target")]
    pub util_target: f64,

    #[serde(rename = "state.interference_decades")]
    pub interference_decades: f64,
    #[serde(rename = "state.thr_cap_mbps")]
    pub thr_cap_mbps: f64,
    #[serde(rename = "state.max_ues_per_cell")]
    pub max_ues_per_cell: f64,
    #[serde(rename = "groups.high_interference_fraction")]
    pub high_interference_fraction: f64,

    #[serde(rename = "train.smoothing_window")]
    pub smoothing_window: usize,
    #[serde(rename = "checkpoint.a2c")]
    pub checkpoint_a2c: Option<PathBuf>,
    #[serde(rename = "checkpoint.inter_a2c")]
    pub checkpoint_inter_a2c: Option<PathBuf>,
    #[serde(rename = "bus.tcp_addr")]
    pub tcp_addr: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sc = Scenario::default();
        let cb = CodebookConfig::default();
        let rl = A2cConfig::default();
        let k = RewardConstants::default();
        let norm = Normalization::default();
        Self {
            seed: sc.seed,
            agent: AgentKind::InterA2c,
            episodes: 10_000,
            eval_episodes: 100,
            ttis_per_episode: 10,
            out_dir: PathBuf::from("out"),
            num_sites: sc.num_sites,
            sectors_per_site: sc.sectors_per_site,
            isd_m: sc.isd_m,
            carrier_ghz: sc.carrier_ghz,
            bandwidth_mhz: sc.bandwidth_mhz,
            num_prbs: sc.num_prbs,
            num_subbands: sc.num_subbands,
            ues_per_cell: sc.ues_per_cell,
            bs_power_dbm: sc.bs_power_dbm,
            bs_height_m: sc.bs_height_m,
            ue_height_m: sc.ue_height_m,
            noise_figure_db: sc.noise_figure_db,
            n1: cb.n1,
            n2: cb.n2,
            o1: cb.o1,
            o2: cb.o2,
            rho: crate::channel::DEFAULT_RHO,
            rx_antennas: 2,
            traffic: TrafficMode::FixedRate,
            demand_mbps: 1.0,
            n_steps: rl.n_steps,
            gamma: rl.gamma,
            learning_rate: rl.learning_rate,
            value_coef: rl.value_coef,
            entropy_coef: rl.entropy_coef,
            max_grad_norm: rl.max_grad_norm,
            rms_alpha: rl.rms_alpha,
            rms_eps: rl.rms_eps,
            normalize_advantage: rl.normalize_advantage,
            hidden: vec![64, 64],
            head_init_gain: 0.01,
            gamma_target: k.gamma_target,
            alpha: k.alpha,
            util_target: k.util_target,
            interference_decades: norm.interference_decades,
            thr_cap_mbps: norm.thr_cap_mbps,
            max_ues_per_cell: norm.max_ues_per_cell,
            high_interference_fraction: 0.2,
            smoothing_window: 100,
            checkpoint_a2c: None,
            checkpoint_inter_a2c: None,
            tcp_addr: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.eval_episodes == 0 {
            return Err(Error::Config(
                "episodes and eval_episodes must be at least 1".into(),
            ));
        }
        if self.ttis_per_episode == 0 {
            return Err(Error::Config("ttis_per_episode must be at least 1".into()));
        }
        if self.smoothing_window == 0 {
            return Err(Error::Config(
                "train.smoothing_window must be at least 1".into(),
            ));
        }
        if !(self.high_interference_fraction > 0.0 && self.high_interference_fraction <= 1.0) {
            return Err(Error::Config(
                "groups.high_interference_fraction must lie in (0, 1]".into(),
            ));
        }
        let positive = [
            ("state.interference_decades", self.interference_decades),
            ("state.thr_cap_mbps", self.thr_cap_mbps),
            ("state.max_ues_per_cell", self.max_ues_per_cell),
        ];
        for (name, x) in positive {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, x) in [
            ("reward.gamma_target", self.gamma_target),
            ("reward.alpha", self.alpha),
            ("reward.util_target", self.util_target),
        ] {
            if !x.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        self.a2c().validate()?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "rl.hidden needs at least one non-empty layer".into(),
            ));
        }
        self.sim().validate()
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            num_sites: self.num_sites,
            sectors_per_site: self.sectors_per_site,
            isd_m: self.isd_m,
            carrier_ghz: self.carrier_ghz,
            bandwidth_mhz: self.bandwidth_mhz,
            num_prbs: self.num_prbs,
            num_subbands: self.num_subbands,
            ues_per_cell: self.ues_per_cell,
            bs_power_dbm: self.bs_power_dbm,
            bs_height_m: self.bs_height_m,
            ue_height_m: self.ue_height_m,
            noise_figure_db: self.noise_figure_db,
            seed: self.seed,
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            scenario: self.scenario(),
            codebook: CodebookConfig {
                n1: self.n1,
                n2: self.n2,
                o1: self.o1,
                o2: self.o2,
            },
            rho: self.rho,
            rx_antennas: self.rx_antennas,
            traffic: match self.traffic {
                TrafficMode::FullBuffer => Traffic::FullBuffer,
                TrafficMode::FixedRate => Traffic::FixedRate {
                    demand_mbps: self.demand_mbps,
                },
            },
        }
    }

    pub fn a2c(&self) -> A2cConfig {
        A2cConfig {
            n_steps: self.n_steps,
            gamma: self.gamma,
            learning_rate: self.learning_rate,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            max_grad_norm: self.max_grad_norm,
            rms_alpha: self.rms_alpha,
            rms_eps: self.rms_eps,
            normalize_advantage: self.normalize_advantage,
        }
    }

    pub fn reward(&self) -> RewardConstants {
        RewardConstants {
            gamma_target: self.gamma_target,
            alpha: self.alpha,
            util_target: self.util_target,
        }
    }

    pub fn normalization(&self) -> Normalization {
        Normalization {
            interference_decades: self.interference_decades,
            thr_cap_mbps: self.thr_cap_mbps,
            max_ues_per_cell: self.max_ues_per_cell,
        }
    }

    pub fn agent_context(&self, sigma2: f64, j1: usize, j2: usize) -> AgentContext {
        AgentContext {
            num_cells: self.scenario().num_cells(),
            num_prbs: self.num_prbs,
            sigma2,
            j1,
            j2,
            high_interference_fraction: self.high_interference_fraction,
            norm: self.normalization(),
        }
    }

    pub fn checkpoint_for(&self, agent: AgentKind) -> Option<&Path> {
        match agent {
            AgentKind::A2c => self.checkpoint_a2c.as_deref(),
            AgentKind::InterA2c => self.checkpoint_inter_a2c.as_deref(),
            _ => None,
        }
    }

    /// Whether two configurations describe the same deployment and channel
    /// process.
    pub fn same_scenario(&self, other: &Self) -> bool {
        self.sim() == other.sim() && self.ttis_per_episode == other.ttis_per_episode
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.scenario(), Scenario::default());
        assert_eq!(cfg.reward(), RewardConstants::default());
    }

    #[test]
    fn dotted_keys_and_unknown_keys() {
        let cfg =
            ExperimentConfig::from_json(r#"{"rl.learning_rate": 0.001, "traffic": "full_buffer"}"#)
                .unwrap();
        assert_eq!(cfg.learning_rate, 0.001);
        assert_eq!(cfg.sim().traffic, Traffic::FullBuffer);
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"learning_rate": 0.001}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"episodes": 0}"#),
            Err(Error::Config(_))
        ));
    }
}
