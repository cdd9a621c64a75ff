//! The TTI loop wiring network, bus and agent.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::bus::tcp::TcpBusServer;
use crate::bus::{Bus, BusMessage, ControlDirective, Payload, Subscription};
use crate::codebook::{Codebook, Rank};
use crate::csi::CsiReport;
use crate::error::{Error, Result};
use crate::rl::{A2c, A2cConfig, Step};
use crate::sim::{Network, Realization};
use crate::topology::Topology;
use crate::xapp::{
    compute_reward, Agent, AgentKind, Decision, GroupKind, RewardBreakdown, RewardConstants,
};

/// A network attached to a bus, with the controller-side and RAN-side
/// subscriptions.
pub struct Env {
    pub network: Network,
    pub bus: Bus,
    csi: Subscription,
    ctrl: Subscription,
    server: Option<TcpBusServer>,
    reward: RewardConstants,
    norm: crate::xapp::Normalization,
    ttis: u64,
}

impl std::fmt::Debug for Env {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Env")
            .field("tti", &self.network.tti())
            .field("bus", &self.bus)
            .finish()
    }
}

impl Env {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let sim = cfg.sim();
        let topo = Arc::new(Topology::build(&sim.scenario)?);
        let codebook = Arc::new(Codebook::build(&sim.codebook)?);
        Self::with_parts(cfg, topo, codebook)
    }

    /// Shares an already built deployment and codebook.
    pub fn with_parts(
        cfg: &ExperimentConfig,
        topo: Arc<Topology>,
        codebook: Arc<Codebook>,
    ) -> Result<Self> {
        let network = Network::with_parts(cfg.sim(), topo, codebook)?;
        let bus = Bus::new();
        let csi = bus.subscribe("csi.>")?;
        let ctrl = bus.subscribe("ctrl.>")?;
        let server = match &cfg.tcp_addr {
            Some(addr) => Some(TcpBusServer::serve(&bus, addr)?),
            None => None,
        };
        Ok(Self {
            network,
            bus,
            csi,
            ctrl,
            server,
            reward: cfg.reward(),
            norm: cfg.normalization(),
            ttis: cfg.ttis_per_episode,
        })
    }

    pub fn tcp_server(&self) -> Option<&TcpBusServer> {
        self.server.as_ref()
    }

    pub fn agent_context(&self, cfg: &ExperimentConfig) -> crate::xapp::agent::AgentContext {
        let cb = self.network.codebook();
        cfg.agent_context(self.network.sigma2(), cb.len(Rank::One), cb.len(Rank::Two))
    }

    fn publish_reports(&self, reports: Vec<CsiReport>) -> Result<Vec<CsiReport>> {
        for r in reports {
            self.bus.publish(BusMessage::csi(r))?;
        }
        self.csi
            .drain()
            .into_iter()
            .map(|m| match m.payload {
                Payload::Csi(r) => Ok(r),
                Payload::Control(_) => Err(Error::Bus(format!("control payload on {}", m.subject))),
            })
            .collect()
    }

    fn publish_directives(
        &self,
        directives: Vec<ControlDirective>,
    ) -> Result<Vec<ControlDirective>> {
        for d in directives {
            self.bus.publish(BusMessage::control(d))?;
        }
        self.ctrl
            .drain()
            .into_iter()
            .map(|m| match m.payload {
                Payload::Control(d) => Ok(d),
                Payload::Csi(_) => Err(Error::Bus(format!("CSI payload on {}", m.subject))),
            })
            .collect()
    }
}

/// One row per cell and realized TTI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub agent: String,
    pub episode: u64,
    pub tti: u64,
    pub pci: usize,
    /// The cell the preceding decision optimized.
    pub target: bool,
    pub mean_se: f64,
    pub mean_thr: f64,
    pub prb_util: f64,
    pub cell_interference: f64,
    pub group: Option<GroupKind>,
    pub gamma_u: Option<f64>,
    pub interference_cost: Option<f64>,
    pub utilization: Option<f64>,
    pub reward: Option<f64>,
    pub degenerate: Option<bool>,
}

/// One scored decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub decision: Decision,
    pub breakdown: RewardBreakdown,
    /// TTI whose realization produced the reward.
    pub realized_tti: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeResult {
    pub episode: u64,
    pub steps: Vec<StepRecord>,
    pub rl_steps: Vec<Step>,
    pub rows: Vec<MetricsRow>,
    /// Realized SE and throughput of every UE in every scored TTI.
    pub ue_se: Vec<f64>,
    pub ue_thr: Vec<f64>,
    pub channel_digests: Vec<u64>,
    /// Realizations checked against the interference identities, and how
    /// many failed.
    pub interference_checked: usize,
    pub interference_violations: usize,
    pub updates: Vec<crate::rl::Losses>,
}

impl EpisodeResult {
    pub fn mean_reward(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.breakdown.reward).sum::<f64>() / self.steps.len() as f64
    }
}

/// Trains `agent` online while it acts.
pub struct Learner {
    pub a2c: A2c,
    buffer: Vec<Step>,
}

impl Learner {
    pub fn new(a2c: A2c) -> Self {
        Self {
            a2c,
            buffer: Vec::new(),
        }
    }

    pub fn config(&self) -> &A2cConfig {
        &self.a2c.cfg
    }

    /// Buffers `step` and updates once the rollout is full, the episode
    /// terminated, or `flush` is set at the episode's time limit.
    fn push(
        &mut self,
        step: Step,
        bootstrap: f64,
        flush: bool,
        agent: &mut Agent,
    ) -> Result<Option<crate::rl::Losses>> {
        let done = step.done;
        self.buffer.push(step);
        if self.buffer.len() < self.a2c.cfg.n_steps && !done && !flush {
            return Ok(None);
        }
        let batch = crate::rl::a2c::samples(
            &self.buffer,
            if done { 0.0 } else { bootstrap },
            &self.a2c.cfg,
        );
        self.buffer.clear();
        let out = self.a2c.update(&batch)?;
        if let Some(net) = agent.net_mut() {
            net.params.copy_from_slice(&self.a2c.net.params);
        }
        Ok(match out {
            crate::rl::UpdateOutcome::Applied(l) => Some(l),
            crate::rl::UpdateOutcome::Skipped => None,
        })
    }
}

fn interference_consistent(r: &Realization) -> bool {
    let ue_ok = r.ues.iter().all(|o| o.i_uk == o.iota.iter().sum::<f64>());
    let cell_ok = r.cells.iter().all(|c| {
        c.interference.is_consistent()
            && c.interference
                .ues
                .iter()
                .zip(&c.interference.i_uk)
                .all(|(&u, &x)| x == r.ues[u].i_uk)
    });
    ue_ok && cell_ok
}

fn cell_rows(
    agent: &str,
    episode: u64,
    r: &Realization,
    step: Option<&StepRecord>,
) -> Vec<MetricsRow> {
    r.cells
        .iter()
        .map(|c| {
            let members = &c.interference.ues;
            let n = members.len().max(1) as f64;
            let target = step.filter(|s| s.decision.pci == c.pci);
            let b = target.map(|s| s.breakdown);
            MetricsRow {
                agent: agent.to_string(),
                episode,
                tti: r.tti,
                pci: c.pci,
                target: target.is_some(),
                mean_se: members.iter().map(|&u| r.ues[u].realized_se).sum::<f64>() / n,
                mean_thr: members.iter().map(|&u| r.ues[u].thr_mbps).sum::<f64>() / n,
                prb_util: c.utilization(),
                cell_interference: c.interference.i_k,
                group: target.map(|s| s.decision.action.map_or(GroupKind::All, |a| a.group)),
                gamma_u: b.map(|b| b.gamma_u),
                interference_cost: b.map(|b| b.interference_cost),
                utilization: b.map(|b| b.utilization),
                reward: b.map(|b| b.reward),
                degenerate: b.map(|b| b.degenerate),
            }
        })
        .collect()
}

/// Runs one episode on fading epoch `epoch`.
///
/// Each of the `ttis_per_episode` decision TTIs publishes every CSI report,
/// lets the agent decide, publishes its directives and advances the network.
/// A directive takes effect in the next TTI, so a final settlement TTI,
/// whose reports are not published, realizes the last decision. The episode
/// ends at a time limit rather than a terminal state, so the learner
/// bootstraps its last rollout from the value of the settlement state.
pub fn run_episode(
    env: &mut Env,
    agent: &mut Agent,
    episode: u64,
    epoch: u64,
    mut learner: Option<&mut Learner>,
) -> Result<EpisodeResult> {
    let name = agent.kind().name();
    let mut out = EpisodeResult {
        episode,
        ..EpisodeResult::default()
    };
    agent.reset();
    let r0 = env.network.reset(epoch)?;
    out.channel_digests.push(r0.channel_digest);
    out.interference_checked += 1;
    out.interference_violations += usize::from(!interference_consistent(r0));

    let sigma2 = env.network.sigma2();
    let mut prev: Option<Decision> = None;
    for t in 1..=env.ttis + 1 {
        let reports = env.network.measure()?;
        let (decision, unpublished) = if t <= env.ttis {
            let seen = env.publish_reports(reports)?;
            (Some(agent.decide(t, &seen)?), Vec::new())
        } else {
            (None, reports)
        };
        let issued = match &decision {
            Some(d) => env.publish_directives(d.directives.clone())?,
            None => Vec::new(),
        };
        let realized = env.network.advance(&issued)?;
        out.channel_digests.push(realized.channel_digest);
        out.interference_checked += 1;
        out.interference_violations += usize::from(!interference_consistent(realized));

        let Some(p) = prev.take() else {
            prev = decision;
            continue;
        };
        let breakdown = if p.action.is_none() && !p.raw.is_empty() {
            RewardBreakdown::rejected(&env.reward)
        } else {
            compute_reward(
                &realized.ues,
                &p.selected,
                &realized.cells[p.pci],
                sigma2,
                &env.norm,
                &env.reward,
            )?
        };
        let record = StepRecord {
            decision: p,
            breakdown,
            realized_tti: realized.tti,
        };
        out.rows
            .extend(cell_rows(name, episode, realized, Some(&record)));
        for o in &realized.ues {
            out.ue_se.push(o.realized_se);
            out.ue_thr.push(o.thr_mbps);
        }
        if agent.kind() != AgentKind::FollowPmi {
            let d = &record.decision;
            let step = Step {
                state: d.state.to_vec(),
                actions: d.raw.clone(),
                log_prob: d.log_prob,
                reward: breakdown.reward,
                value: d.value,
                done: false,
            };
            if let Some(l) = learner.as_deref_mut() {
                let bootstrap = match &decision {
                    Some(d) => d.value,
                    None => agent.value(&agent.observe(t, &unpublished)?)?,
                };
                if let Some(losses) = l.push(step.clone(), bootstrap, decision.is_none(), agent)? {
                    out.updates.push(losses);
                }
            }
            out.rl_steps.push(step);
        }
        out.steps.push(record);
        prev = decision;
    }
    Ok(out)
}
