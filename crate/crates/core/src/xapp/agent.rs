//! The agents: Follow-PMI, plain A2C, Inter-A2C and a uniform random policy.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_state, cell_interference, decode_action, identify_groups, select_target_cell,
    AgentAction, GroupKind, MdpState, Normalization, STATE_DIM,
};
use crate::bus::{Assignment, ControlDirective, SubbandScope};
use crate::csi::CsiReport;
use crate::error::{Error, Result};
use crate::rl::dist;
use crate::rl::{Architecture, PolicyValueNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    FollowPmi,
    A2c,
    InterA2c,
    Random,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::FollowPmi => "follow_pmi",
            AgentKind::A2c => "a2c",
            AgentKind::InterA2c => "inter_a2c",
            AgentKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "follow_pmi" => Ok(AgentKind::FollowPmi),
            "a2c" => Ok(AgentKind::A2c),
            "inter_a2c" => Ok(AgentKind::InterA2c),
            "random" => Ok(AgentKind::Random),
            _ => Err(Error::Config(format!(
                "unknown agent `{s}` (expected follow_pmi, a2c, inter_a2c or random)"
            ))),
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, AgentKind::A2c | AgentKind::InterA2c)
    }

    /// Policy head sizes for codebooks with `j1` rank-1 and `j2` rank-2
    /// entries.
    pub fn heads(self, j1: usize, j2: usize) -> Vec<usize> {
        match self {
            AgentKind::A2c => vec![j1, j2],
            _ => vec![GroupKind::ALL.len(), j1, j2],
        }
    }

    pub fn architecture(self, hidden: &[usize], j1: usize, j2: usize) -> Result<Architecture> {
        Architecture::new(STATE_DIM, hidden.to_vec(), self.heads(j1, j2))
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything an agent decided in one TTI.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub tti: u64,
    /// The cell the decision optimizes.
    pub pci: usize,
    pub state: MdpState,
    /// Raw category per policy head; empty for Follow-PMI.
    pub raw: Vec<usize>,
    /// `None` when the raw choice could not be decoded.
    pub action: Option<AgentAction>,
    /// UEs the reward is computed over.
    pub selected: Vec<usize>,
    pub log_prob: f64,
    pub value: f64,
    pub directives: Vec<ControlDirective>,
}

#[derive(Debug, Clone)]
enum Policy {
    Follow,
    Net { net: PolicyValueNet, greedy: bool },
    Uniform,
}

/// Context shared by every decision of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentContext {
    pub num_cells: usize,
    pub num_prbs: usize,
    pub sigma2: f64,
    pub j1: usize,
    pub j2: usize,
    pub high_interference_fraction: f64,
    pub norm: Normalization,
}

#[derive(Debug, Clone)]
pub struct Agent {
    kind: AgentKind,
    policy: Policy,
    ctx: AgentContext,
    rng: ChaCha8Rng,
    /// Group of the previous decision, used to split the state's CQI term.
    last_group: GroupKind,
}

impl Agent {
    pub fn follow_pmi(ctx: AgentContext) -> Self {
        Self::with_policy(
            AgentKind::FollowPmi,
            Policy::Follow,
            ctx,
            rand::SeedableRng::seed_from_u64(0),
        )
    }

    pub fn random(ctx: AgentContext, rng: ChaCha8Rng) -> Self {
        Self::with_policy(AgentKind::Random, Policy::Uniform, ctx, rng)
    }

    /// A network-driven agent; `greedy` takes the most likely category of
    /// every head instead of sampling.
    pub fn learned(
        kind: AgentKind,
        net: PolicyValueNet,
        greedy: bool,
        ctx: AgentContext,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if !kind.is_learning() {
            return Err(Error::Config(format!("agent {kind} has no network")));
        }
        let expected = kind.heads(ctx.j1, ctx.j2);
        if net.architecture().heads != expected || net.architecture().input != STATE_DIM {
            return Err(Error::Checkpoint(format!(
                "network shape {:?} does not fit agent {kind} (heads {expected:?})",
                net.architecture()
            )));
        }
        Ok(Self::with_policy(
            kind,
            Policy::Net { net, greedy },
            ctx,
            rng,
        ))
    }

    fn with_policy(kind: AgentKind, policy: Policy, ctx: AgentContext, rng: ChaCha8Rng) -> Self {
        Self {
            kind,
            policy,
            ctx,
            rng,
            last_group: GroupKind::All,
        }
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn net(&self) -> Option<&PolicyValueNet> {
        match &self.policy {
            Policy::Net { net, .. } => Some(net),
            _ => None,
        }
    }

    pub fn net_mut(&mut self) -> Option<&mut PolicyValueNet> {
        match &mut self.policy {
            Policy::Net { net, .. } => Some(net),
            _ => None,
        }
    }

    /// Forgets per-episode memory.
    pub fn reset(&mut self) {
        self.last_group = GroupKind::All;
    }

    /// Value estimate of a state under the agent's network, 0 without one.
    pub fn value(&self, state: &MdpState) -> Result<f64> {
        match &self.policy {
            Policy::Net { net, .. } => Ok(net.forward(&state.to_vec())?.value),
            _ => Ok(0.0),
        }
    }

    /// The state a decision at TTI `tti` would see, without acting.
    pub fn observe(&self, tti: u64, reports: &[CsiReport]) -> Result<MdpState> {
        let current: Vec<&CsiReport> = reports.iter().filter(|r| r.tti == tti).collect();
        let interference = cell_interference(&current, self.ctx.num_cells);
        let pci = select_target_cell(&interference)
            .ok_or_else(|| Error::State("no cells to optimize".into()))?;
        let cell: Vec<&CsiReport> = current.iter().copied().filter(|r| r.pci == pci).collect();
        let groups = identify_groups(&cell, self.ctx.high_interference_fraction);
        let prior = match self.policy {
            Policy::Follow => &groups.all,
            _ => groups.get(self.last_group),
        };
        build_state(
            &cell,
            prior,
            self.ctx.sigma2,
            self.ctx.num_prbs,
            &self.ctx.norm,
        )
    }

    /// Decides for TTI `tti` from that TTI's reports.
    pub fn decide(&mut self, tti: u64, reports: &[CsiReport]) -> Result<Decision> {
        let current: Vec<&CsiReport> = reports.iter().filter(|r| r.tti == tti).collect();
        let interference = cell_interference(&current, self.ctx.num_cells);
        let pci = select_target_cell(&interference)
            .ok_or_else(|| Error::State("no cells to optimize".into()))?;
        let cell: Vec<&CsiReport> = current.iter().copied().filter(|r| r.pci == pci).collect();
        let groups = identify_groups(&cell, self.ctx.high_interference_fraction);

        if let Policy::Follow = self.policy {
            let state = build_state(
                &cell,
                &groups.all,
                self.ctx.sigma2,
                self.ctx.num_prbs,
                &self.ctx.norm,
            )?;
            return Ok(Decision {
                tti,
                pci,
                state,
                raw: Vec::new(),
                action: None,
                selected: groups.all.clone(),
                log_prob: 0.0,
                value: 0.0,
                directives: follow_directives(tti, &current, self.ctx.num_cells),
            });
        }

        let prior = groups.get(self.last_group).to_vec();
        let state = build_state(
            &cell,
            &prior,
            self.ctx.sigma2,
            self.ctx.num_prbs,
            &self.ctx.norm,
        )?;
        let (raw, log_prob, value) = match &self.policy {
            Policy::Net { net, greedy } => {
                let fwd = net.forward(&state.to_vec())?;
                let raw: Vec<usize> = if *greedy {
                    fwd.logits.iter().map(|z| dist::argmax(z)).collect()
                } else {
                    fwd.logits
                        .iter()
                        .map(|z| dist::sample(z, &mut self.rng))
                        .collect()
                };
                let lp = fwd
                    .logits
                    .iter()
                    .zip(&raw)
                    .map(|(z, &a)| dist::log_prob(z, a))
                    .sum();
                (raw, lp, fwd.value)
            }
            Policy::Uniform => {
                let heads = self.kind.heads(self.ctx.j1, self.ctx.j2);
                let raw: Vec<usize> = heads.iter().map(|&n| self.rng.random_range(0..n)).collect();
                let lp = -heads.iter().map(|&n| (n as f64).ln()).sum::<f64>();
                (raw, lp, 0.0)
            }
            Policy::Follow => unreachable!("handled above"),
        };
        let (action, selected, directives) = match decode_action(&raw, self.ctx.j1, self.ctx.j2) {
            Ok(action) => {
                self.last_group = action.group;
                let members = groups.get(action.group).to_vec();
                let assignments = action.resolve(&members, &cell);
                let d = ControlDirective::new(pci, tti, self.kind.name(), assignments);
                (Some(action), members, vec![d])
            }
            Err(e) => {
                log::warn!("rejected action {raw:?}: {e}");
                (None, Vec::new(), Vec::new())
            }
        };
        Ok(Decision {
            tti,
            pci,
            state,
            raw,
            action,
            selected,
            log_prob,
            value,
            directives,
        })
    }
}

/// One directive per cell echoing each UE's reported rank and PMIs.
/// Subbands sharing a PMI go in one assignment.
pub fn follow_directives(
    tti: u64,
    reports: &[&CsiReport],
    num_cells: usize,
) -> Vec<ControlDirective> {
    let mut per_cell: Vec<Vec<Assignment>> = vec![Vec::new(); num_cells];
    for r in reports {
        if r.pci >= num_cells {
            continue;
        }
        let mut by_pmi: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (s, &j) in r.pmi.iter().enumerate() {
            by_pmi.entry(j).or_default().push(s);
        }
        let whole = by_pmi.len() == 1;
        for (pmi, subbands) in by_pmi {
            per_cell[r.pci].push(Assignment {
                ue: r.ue,
                ri: r.ri,
                pmi,
                subbands: if whole {
                    SubbandScope::All
                } else {
                    SubbandScope::List(subbands)
                },
            });
        }
    }
    per_cell
        .into_iter()
        .enumerate()
        .filter(|(_, a)| !a.is_empty())
        .map(|(pci, a)| ControlDirective::new(pci, tti, AgentKind::FollowPmi.name(), a))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::Rank;
    use serde_json::Map;

    #[test]
    fn follow_directive_mirrors_reports() {
        let r = CsiReport {
            ue: 3,
            pci: 1,
            tti: 4,
            ri: Rank::Two,
            pmi: vec![7, 7, 2],
            cqi: vec![5; 3],
            wb_cqi: 5,
            rsrp_dbm: -80.0,
            thr_mbps: 0.0,
            interf_mw: vec![],
            prbs: 0,
            extra: Map::new(),
        };
        let d = follow_directives(4, &[&r], 2);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].pci, 1);
        let mut per_sb = vec![usize::MAX; 3];
        for a in &d[0].assignments {
            assert_eq!(a.ri, Rank::Two);
            for (s, slot) in per_sb.iter_mut().enumerate() {
                if a.subbands.covers(s) {
                    *slot = a.pmi;
                }
            }
        }
        assert_eq!(per_sb, r.pmi);
    }

    #[test]
    fn agent_names_roundtrip() {
        for k in [
            AgentKind::FollowPmi,
            AgentKind::A2c,
            AgentKind::InterA2c,
            AgentKind::Random,
        ] {
            assert_eq!(AgentKind::parse(k.name()).unwrap(), k);
        }
        assert!(AgentKind::parse("ppo").is_err());
    }
}
