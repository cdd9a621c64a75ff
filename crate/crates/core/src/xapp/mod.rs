//! The decision layer on the controller side: which cell to optimize, the
//! observation built from its CSI reports, how an agent's categorical choices
//! become PMI directives, and the reward that scores them.

pub mod agent;

use serde::{Deserialize, Serialize};

use crate::bus::{Assignment, SubbandScope};
use crate::codebook::Rank;
use crate::csi::CsiReport;
use crate::error::{Error, Result};
use crate::phy::{cqi_to_se, MAX_CQI};
use crate::sim::{CellOutcome, UeOutcome};
use crate::topology::EDGE_RSRP_DBM;

pub use agent::{Agent, AgentKind, Decision};

pub const STATE_DIM: usize = 6;

/// Reward recorded for an action that cannot be decoded.
pub const REJECTED_REWARD: f64 = -10.0;

/// Scales that map raw cell metrics into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Decades of interference above the noise floor mapped onto `[0, 1]`.
    pub interference_decades: f64,
    pub thr_cap_mbps: f64,
    pub max_ues_per_cell: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            interference_decades: 6.0,
            thr_cap_mbps: 50.0,
            max_ues_per_cell: 50.0,
        }
    }
}

impl Normalization {
    /// `clamp(log10(x / sigma2) / D, 0, 1)`, with zero interference mapped to 0.
    pub fn interference(&self, x: f64, sigma2: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        ((x / sigma2).log10() / self.interference_decades).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConstants {
    pub gamma_target: f64,
    pub alpha: f64,
    pub util_target: f64,
}

impl Default for RewardConstants {
    fn default() -> Self {
        Self {
            gamma_target: 2.5,
            alpha: 0.7,
            util_target: 0.85,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Edge,
    HighInterference,
    All,
}

impl GroupKind {
    pub const ALL: [GroupKind; 3] = [GroupKind::Edge, GroupKind::HighInterference, GroupKind::All];

    pub fn index(self) -> usize {
        match self {
            GroupKind::Edge => 0,
            GroupKind::HighInterference => 1,
            GroupKind::All => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupKind::Edge => "edge",
            GroupKind::HighInterference => "high_interference",
            GroupKind::All => "all",
        }
    }
}

/// The three candidate groups of one cell, as ascending or ranked UE ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Groups {
    pub edge: Vec<usize>,
    /// Highest interference first.
    pub high_interference: Vec<usize>,
    pub all: Vec<usize>,
}

impl Groups {
    pub fn get(&self, kind: GroupKind) -> &[usize] {
        match kind {
            GroupKind::Edge => &self.edge,
            GroupKind::HighInterference => &self.high_interference,
            GroupKind::All => &self.all,
        }
    }
}

/// Size of the high-interference group for a cell of `n` UEs.
pub fn high_interference_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).ceil() as usize)
        .clamp(1, n.max(1))
        .min(n)
}

/// Splits one cell's reports into the edge, high-interference and full
/// groups.
pub fn identify_groups(reports: &[&CsiReport], fraction: f64) -> Groups {
    let mut all: Vec<usize> = reports.iter().map(|r| r.ue).collect();
    all.sort_unstable();
    let mut edge: Vec<usize> = reports
        .iter()
        .filter(|r| r.rsrp_dbm < EDGE_RSRP_DBM)
        .map(|r| r.ue)
        .collect();
    edge.sort_unstable();
    let mut ranked: Vec<(f64, usize)> = reports.iter().map(|r| (r.i_uk(), r.ue)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let m = high_interference_count(reports.len(), fraction);
    Groups {
        edge,
        high_interference: ranked.into_iter().take(m).map(|(_, u)| u).collect(),
        all,
    }
}

/// Total reported interference per cell: the sum of `i_uk` over its UEs.
pub fn cell_interference(reports: &[&CsiReport], num_cells: usize) -> Vec<f64> {
    let mut out = vec![0.0; num_cells];
    for r in reports {
        if r.pci < num_cells {
            out[r.pci] += r.i_uk();
        }
    }
    out
}

/// The most interfered cell; ties go to the lowest PCI.
pub fn select_target_cell(interference: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &x) in interference.iter().enumerate() {
        if best.is_none_or(|b| x > interference[b]) {
            best = Some(k);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdpState {
    /// Mean CQI of the UEs outside the prioritized group.
    pub nu: f64,
    pub cqi_max: f64,
    pub interference: f64,
    /// Mean PRBs per UE over the cell's PRBs.
    pub psi: f64,
    pub throughput: f64,
    pub ues: f64,
    /// The group covered the whole cell, so `nu` is the mean over all UEs.
    pub nu_over_all: bool,
}

impl MdpState {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.nu,
            self.cqi_max,
            self.interference,
            self.psi,
            self.throughput,
            self.ues,
        ]
    }
}

/// Observation of one cell from its reports. `group` holds the prioritized
/// UE ids.
pub fn build_state(
    reports: &[&CsiReport],
    group: &[usize],
    sigma2: f64,
    num_prbs: usize,
    norm: &Normalization,
) -> Result<MdpState> {
    if reports.is_empty() {
        return Err(Error::State("cannot observe a cell without UEs".into()));
    }
    let n = reports.len() as f64;
    let cqi = |r: &&CsiReport| r.wb_cqi as f64 / MAX_CQI as f64;
    let others: Vec<&&CsiReport> = reports.iter().filter(|r| !group.contains(&r.ue)).collect();
    let nu_over_all = others.is_empty();
    let nu = if nu_over_all {
        reports.iter().map(cqi).sum::<f64>() / n
    } else {
        others.iter().map(|r| cqi(r)).sum::<f64>() / others.len() as f64
    };
    let cqi_max = reports.iter().map(cqi).fold(0.0, f64::max);
    let i_k: f64 = reports.iter().map(|r| r.i_uk()).sum();
    let prbs = reports.iter().map(|r| r.prbs as f64).sum::<f64>() / n;
    let thr = reports.iter().map(|r| r.thr_mbps).sum::<f64>() / n;
    Ok(MdpState {
        nu,
        cqi_max,
        interference: norm.interference(i_k, sigma2),
        psi: (prbs / num_prbs as f64).clamp(0.0, 1.0),
        throughput: (thr / norm.thr_cap_mbps).clamp(0.0, 1.0),
        ues: (n / norm.max_ues_per_cell).clamp(0.0, 1.0),
        nu_over_all,
    })
}

/// A decoded agent choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentAction {
    pub group: GroupKind,
    pub pmi_r1: usize,
    pub pmi_r2: usize,
}

impl AgentAction {
    /// Wideband assignments for the UEs in `members`, each at its reported
    /// rank.
    pub fn resolve(&self, members: &[usize], reports: &[&CsiReport]) -> Vec<Assignment> {
        members
            .iter()
            .filter_map(|u| reports.iter().find(|r| r.ue == *u))
            .map(|r| Assignment {
                ue: r.ue,
                ri: r.ri,
                pmi: match r.ri {
                    Rank::One => self.pmi_r1,
                    Rank::Two => self.pmi_r2,
                },
                subbands: SubbandScope::All,
            })
            .collect()
    }
}

/// Maps raw head outputs to an action. With two heads (plain A2C) the group
/// is always the whole cell; with three the first head picks the group.
pub fn decode_action(raw: &[usize], j1: usize, j2: usize) -> Result<AgentAction> {
    let (group, r1, r2) = match *raw {
        [g, a, b] => (
            *GroupKind::ALL.get(g).ok_or(Error::Index {
                what: "group",
                index: g,
                len: 3,
            })?,
            a,
            b,
        ),
        [a, b] => (GroupKind::All, a, b),
        _ => {
            return Err(Error::Domain(format!(
                "expected 2 or 3 action heads, got {}",
                raw.len()
            )));
        }
    };
    if r1 >= j1 {
        return Err(Error::Index {
            what: "rank-1 PMI",
            index: r1,
            len: j1,
        });
    }
    if r2 >= j2 {
        return Err(Error::Index {
            what: "rank-2 PMI",
            index: r2,
            len: j2,
        });
    }
    Ok(AgentAction {
        group,
        pmi_r1: r1,
        pmi_r2: r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub gamma_u: f64,
    pub gamma_target: f64,
    pub alpha: f64,
    /// Normalized interference cost of the selected UEs.
    pub interference_cost: f64,
    pub utilization: f64,
    pub util_target: f64,
    pub reward: f64,
    /// No UE was selected and the terms cover the whole cell.
    pub degenerate: bool,
    pub rejected: bool,
}

impl RewardBreakdown {
    pub fn from_terms(
        gamma_u: f64,
        interference_cost: f64,
        utilization: f64,
        k: &RewardConstants,
    ) -> Self {
        let mut b = Self {
            gamma_u,
            gamma_target: k.gamma_target,
            alpha: k.alpha,
            interference_cost,
            utilization,
            util_target: k.util_target,
            reward: 0.0,
            degenerate: false,
            rejected: false,
        };
        b.reward = b.recompute();
        b
    }

    pub fn recompute(&self) -> f64 {
        (self.gamma_u - self.gamma_target)
            - self.alpha * self.interference_cost
            - (self.utilization - self.util_target).abs()
    }

    pub fn rejected(k: &RewardConstants) -> Self {
        Self {
            reward: REJECTED_REWARD,
            rejected: true,
            ..Self::from_terms(0.0, 0.0, 0.0, k)
        }
    }
}

/// Scores the realized outcome of an action for the UEs in `selected` of
/// cell `cell`. An empty selection is scored over the whole cell.
pub fn compute_reward(
    ues: &[UeOutcome],
    selected: &[usize],
    cell: &CellOutcome,
    sigma2: f64,
    norm: &Normalization,
    k: &RewardConstants,
) -> Result<RewardBreakdown> {
    let degenerate = selected.is_empty();
    let members: &[usize] = if degenerate {
        &cell.interference.ues
    } else {
        selected
    };
    if members.is_empty() {
        return Err(Error::State(format!(
            "cell {} has no UEs to score",
            cell.pci
        )));
    }
    let n = members.len() as f64;
    let mut gamma = 0.0;
    let mut cost = 0.0;
    for &u in members {
        let o = ues.get(u).ok_or(Error::Index {
            what: "UE outcome",
            index: u,
            len: ues.len(),
        })?;
        gamma += cqi_to_se(o.wb_cqi)?;
        cost += norm.interference(o.i_uk, sigma2);
    }
    let mut b = RewardBreakdown::from_terms(gamma / n, cost / n, cell.utilization(), k);
    b.degenerate = degenerate;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Map;

    fn report(ue: usize, rsrp: f64, interf: f64, wb_cqi: u8) -> CsiReport {
        CsiReport {
            ue,
            pci: 0,
            tti: 1,
            ri: if ue.is_multiple_of(2) {
                Rank::One
            } else {
                Rank::Two
            },
            pmi: vec![0; 2],
            cqi: vec![wb_cqi; 2],
            wb_cqi,
            rsrp_dbm: rsrp,
            thr_mbps: 1.0,
            interf_mw: vec![interf],
            prbs: 0,
            extra: Map::new(),
        }
    }

    #[test]
    fn target_cell_ties_to_lowest_pci() {
        assert_eq!(select_target_cell(&[0.1, 0.5, 0.3]), Some(1));
        assert_eq!(select_target_cell(&[0.2, 0.2, 0.2]), Some(0));
        assert_eq!(select_target_cell(&[7.0]), Some(0));
        assert_eq!(select_target_cell(&[]), None);
    }

    #[test]
    fn group_sizes_and_order() {
        let rs: Vec<CsiReport> = (0..10)
            .map(|u| report(u, -90.0, [3.0, 1.0, 3.0][u % 3], 9))
            .collect();
        let refs: Vec<&CsiReport> = rs.iter().collect();
        let g = identify_groups(&refs, 0.2);
        assert!(g.edge.is_empty());
        assert_eq!(g.high_interference, [0, 2]);
        assert_eq!(g.all, (0..10).collect::<Vec<_>>());
        assert_eq!(high_interference_count(1, 0.2), 1);
        assert_eq!(high_interference_count(0, 0.2), 0);
    }

    #[test]
    fn state_endpoints() {
        let rs: Vec<CsiReport> = (0..10).map(|u| report(u, -90.0, 0.0, 15)).collect();
        let refs: Vec<&CsiReport> = rs.iter().collect();
        let s = build_state(&refs, &[], 1e-12, 52, &Normalization::default()).unwrap();
        assert_eq!(s.to_vec(), [1.0, 1.0, 0.0, 0.0, 1.0 / 50.0, 0.2]);
        assert!(build_state(&[], &[], 1e-12, 52, &Normalization::default()).is_err());
    }

    #[test]
    fn reward_anchors() {
        let k = RewardConstants::default();
        assert_eq!(RewardBreakdown::from_terms(2.5, 0.0, 0.85, &k).reward, 0.0);
        assert_eq!(RewardBreakdown::from_terms(3.5, 0.5, 0.85, &k).reward, 0.65);
        assert_eq!(RewardBreakdown::from_terms(2.0, 1.0, 1.0, &k).reward, -1.35);
    }

    #[test]
    fn action_decoding() {
        let a = decode_action(&[0, 5, 17], 64, 128).unwrap();
        assert_eq!(a.group, GroupKind::Edge);
        assert_eq!(
            decode_action(&[5, 17], 64, 128).unwrap().group,
            GroupKind::All
        );
        assert!(decode_action(&[3, 0, 0], 64, 128).is_err());
        assert!(decode_action(&[0, 64, 0], 64, 128).is_err());

        let rs: Vec<CsiReport> = (0..4).map(|u| report(u, -90.0, 0.0, 7)).collect();
        let refs: Vec<&CsiReport> = rs.iter().collect();
        let asg = a.resolve(&[1, 2], &refs);
        assert_eq!(asg.len(), 2);
        assert_eq!((asg[0].ue, asg[0].ri, asg[0].pmi), (1, Rank::Two, 17));
        assert_eq!((asg[1].ue, asg[1].ri, asg[1].pmi), (2, Rank::One, 5));
    }
}
