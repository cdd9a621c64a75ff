//! The multi-cell network as a per-TTI environment.
//!
//! Timeline of one TTI `t`:
//!
//! 1. [`Network::measure`] moves fading to `t`, lets every UE pick rank and
//!    PMIs on the new channel, and returns the CSI reports. Reports carry the
//!    link outcome realized at `t - 1`.
//! 2. [`Network::advance`] realizes TTI `t` with the assignment pending from
//!    the previous TTI (the UE selection of `t - 1` with the directives of
//!    `t - 1` applied), then forms the next pending assignment from the
//!    selection of `t` and the directives passed in now.
//!
//! A directive issued at `t` is therefore in force during TTI `t + 1`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bus::{ControlDirective, SubbandScope};
use crate::channel::{noise_power, FadingProcess, FadingState, NoiseModel, DEFAULT_RHO};
use crate::cmat::CMat;
use crate::codebook::{Codebook, CodebookConfig, Rank};
use crate::csi::{build_report, ue_select_pmi, CsiReport, Feedback, PmiSelection};
use crate::error::{Error, Result};
use crate::phy::{
    cqi_to_se, prbs_needed, schedule_prbs, se_to_cqi, shannon_se, sinr_post_selection, sinr_to_cqi,
    throughput, InterferenceRecord, NeighborView, PrbAllocation, PrbDemand, Transmission, TTI_S,
};
use crate::rng::Digest;
use crate::topology::{db_to_linear, Scenario, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Traffic {
    FullBuffer,
    /// Constant bit rate per UE.
    FixedRate {
        demand_mbps: f64,
    },
}

impl Default for Traffic {
    fn default() -> Self {
        Traffic::FixedRate { demand_mbps: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub codebook: CodebookConfig,
    /// AR(1) fading correlation between consecutive TTIs.
    pub rho: f64,
    pub rx_antennas: usize,
    pub traffic: Traffic,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            codebook: CodebookConfig::default(),
            rho: DEFAULT_RHO,
            rx_antennas: 2,
            traffic: Traffic::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.codebook.validate()?;
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!(
                "rho must lie in [0, 1] (got {})",
                self.rho
            )));
        }
        if self.rx_antennas == 0 {
            return Err(Error::Config("rx_antennas must be at least 1".into()));
        }
        if let Traffic::FixedRate { demand_mbps } = self.traffic {
            if !(demand_mbps >= 0.0) || !demand_mbps.is_finite() {
                return Err(Error::Config(
                    "demand_mbps must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Rank and per-subband PMIs a cell applies to one UE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UeAssignment {
    pub rank: Rank,
    pub pmi: Vec<usize>,
}

impl From<&PmiSelection> for UeAssignment {
    fn from(s: &PmiSelection) -> Self {
        Self {
            rank: s.ri,
            pmi: s.pmi.clone(),
        }
    }
}

/// Realized link outcome of one UE in one TTI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeOutcome {
    pub ue: usize,
    pub pci: usize,
    pub rank: Rank,
    pub pmi: Vec<usize>,
    pub cqi: Vec<u8>,
    pub wb_cqi: u8,
    /// Subband-averaged linear SNR and SINR.
    pub snr: f64,
    pub sinr: f64,
    /// `rank * log2(1 + snr)`.
    pub se: f64,
    /// `rank * mean_s cqi_to_se(cqi_s)`.
    pub realized_se: f64,
    pub thr_mbps: f64,
    pub prbs: usize,
    /// Interference per tracked neighbour, averaged over subbands.
    pub iota: Vec<f64>,
    pub i_uk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub pci: usize,
    pub allocation: PrbAllocation,
    pub interference: InterferenceRecord,
}

impl CellOutcome {
    pub fn utilization(&self) -> f64 {
        self.allocation.utilization()
    }
}

/// A directive that shaped a realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedDirective {
    pub pci: usize,
    pub issued_tti: u64,
    pub applied: usize,
    pub ignored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub tti: u64,
    pub ues: Vec<UeOutcome>,
    pub cells: Vec<CellOutcome>,
    pub directives: Vec<AppliedDirective>,
    /// Digest of every fading matrix drawn for this TTI.
    pub channel_digest: u64,
}

/// Outcome of applying one directive to a pending assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ApplyStats {
    pub applied: usize,
    pub ignored: usize,
}

/// Applies the valid assignments of `d` to `pending` (indexed by UE id).
///
/// An assignment is ignored when the UE is not attached to the directive's
/// cell, the PMI is outside the rank's codebook, a subband index is out of
/// range, or it changes the rank on only part of the band.
pub fn apply_directive(
    pending: &mut [UeAssignment],
    d: &ControlDirective,
    serving: &[usize],
    codebook: &Codebook,
    num_subbands: usize,
) -> ApplyStats {
    let mut stats = ApplyStats::default();
    for a in &d.assignments {
        let valid = a.ue < pending.len()
            && serving[a.ue] == d.pci
            && a.pmi < codebook.len(a.ri)
            && match &a.subbands {
                SubbandScope::All => true,
                SubbandScope::List(l) => !l.is_empty() && l.iter().all(|&s| s < num_subbands),
            }
            && (a.ri == pending[a.ue].rank || a.subbands.is_all(num_subbands));
        if !valid {
            stats.ignored += 1;
            continue;
        }
        let p = &mut pending[a.ue];
        p.rank = a.ri;
        for (s, j) in p.pmi.iter_mut().enumerate() {
            if a.subbands.covers(s) {
                *j = a.pmi;
            }
        }
        stats.applied += 1;
    }
    stats
}

/// The simulated network.
#[derive(Debug, Clone)]
pub struct Network {
    cfg: SimConfig,
    topo: Arc<Topology>,
    codebook: Arc<Codebook>,
    sigma2: f64,
    p_prb: f64,
    /// Per UE: serving cell followed by the tracked neighbours.
    tracked: Vec<Vec<usize>>,
    /// Linear large-scale gain per entry of `tracked`.
    gains: Vec<Vec<f64>>,
    fading: Option<FadingState>,
    tti: u64,
    selection: Vec<PmiSelection>,
    pending: Vec<UeAssignment>,
    pending_directives: Vec<AppliedDirective>,
    last: Option<Realization>,
}

impl Network {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let topo = Arc::new(Topology::build(&cfg.scenario)?);
        let codebook = Arc::new(Codebook::build(&cfg.codebook)?);
        Self::with_parts(cfg, topo, codebook)
    }

    /// Builds a network over an existing deployment and codebook.
    pub fn with_parts(
        cfg: SimConfig,
        topo: Arc<Topology>,
        codebook: Arc<Codebook>,
    ) -> Result<Self> {
        cfg.validate()?;
        if topo.scenario != cfg.scenario {
            return Err(Error::Config(
                "topology was built for a different scenario".into(),
            ));
        }
        let sc = &cfg.scenario;
        let sigma2 = noise_power(&NoiseModel::new(sc.noise_figure_db), 1);
        let p_prb = db_to_linear(sc.bs_power_dbm) / sc.num_prbs as f64;
        let tracked: Vec<Vec<usize>> = (0..topo.num_ues())
            .map(|u| {
                std::iter::once(topo.serving[u])
                    .chain(topo.neighbors[u].iter().copied())
                    .collect()
            })
            .collect();
        let gains = tracked
            .iter()
            .enumerate()
            .map(|(u, cells)| {
                cells
                    .iter()
                    .map(|&c| topo.link(u, c).gain_linear())
                    .collect()
            })
            .collect();
        Ok(Self {
            cfg,
            topo,
            codebook,
            sigma2,
            p_prb,
            tracked,
            gains,
            fading: None,
            tti: 0,
            selection: Vec::new(),
            pending: Vec::new(),
            pending_directives: Vec::new(),
            last: None,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topo
    }

    pub fn codebook(&self) -> &Arc<Codebook> {
        &self.codebook
    }

    /// Noise power per PRB, mW.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Transmit power per PRB, mW.
    pub fn p_prb(&self) -> f64 {
        self.p_prb
    }

    pub fn tti(&self) -> u64 {
        self.tti
    }

    pub fn last(&self) -> Option<&Realization> {
        self.last.as_ref()
    }

    pub fn selection(&self) -> &[PmiSelection] {
        &self.selection
    }

    pub fn pending(&self) -> &[UeAssignment] {
        &self.pending
    }

    /// Starts a new fading realization (`epoch`) at TTI 0. The UEs select on
    /// the TTI-0 channel and that selection is applied immediately.
    pub fn reset(&mut self, epoch: u64) -> Result<&Realization> {
        let n_sb = self.cfg.scenario.num_subbands;
        let process = FadingProcess::new(
            self.cfg.scenario.seed,
            epoch,
            self.cfg.rho,
            self.cfg.rx_antennas,
            self.cfg.codebook.ports(),
        );
        let links = self
            .tracked
            .iter()
            .enumerate()
            .flat_map(|(u, cells)| {
                cells
                    .iter()
                    .flat_map(move |&c| (0..n_sb).map(move |s| (u, c, s)))
            })
            .collect();
        self.fading = Some(FadingState::new(process, links));
        self.tti = 0;
        self.selection = self.select_all()?;
        self.pending = self.selection.iter().map(UeAssignment::from).collect();
        self.pending_directives.clear();
        let sched_se: Vec<f64> = self
            .selection
            .iter()
            .map(|s| s.ri.layers() as f64 * cqi_to_se(se_to_cqi(s.mean_layer_se())).unwrap_or(0.0))
            .collect();
        let r = self.realize(&sched_se)?;
        self.last = Some(r);
        Ok(self.last.as_ref().expect("just set"))
    }

    /// Moves to the next TTI and returns the CSI reports of every UE, in UE
    /// id order.
    pub fn measure(&mut self) -> Result<Vec<CsiReport>> {
        let fading = self
            .fading
            .as_mut()
            .ok_or_else(|| Error::State("network not reset".into()))?;
        fading.advance();
        self.tti += 1;
        self.selection = self.select_all()?;
        let last = self.last.as_ref().expect("reset realizes TTI 0");
        let n_sb = self.cfg.scenario.num_subbands;
        (0..self.topo.num_ues())
            .map(|u| {
                let o = &last.ues[u];
                let fb = Feedback {
                    cqi: o.cqi.clone(),
                    wb_cqi: o.wb_cqi,
                    thr_mbps: o.thr_mbps,
                    interf_mw: o.iota.clone(),
                    prbs: o.prbs,
                };
                let pci = self.topo.serving[u];
                build_report(
                    u,
                    pci,
                    self.tti,
                    &self.selection[u],
                    &fb,
                    self.topo.link(u, pci).rsrp_dbm,
                    n_sb,
                )
            })
            .collect()
    }

    /// Realizes the current TTI with the pending assignment, then forms the
    /// assignment for the next TTI from this TTI's selection and `directives`.
    pub fn advance(&mut self, directives: &[ControlDirective]) -> Result<&Realization> {
        if self.fading.is_none() {
            return Err(Error::State("network not reset".into()));
        }
        let last = self.last.as_ref().expect("reset realizes TTI 0");
        let sched_se: Vec<f64> = last
            .ues
            .iter()
            .zip(&self.pending)
            .map(|(o, p)| p.rank.layers() as f64 * cqi_to_se(o.wb_cqi).unwrap_or(0.0))
            .collect();
        let r = self.realize(&sched_se)?;
        self.last = Some(r);

        let n_sb = self.cfg.scenario.num_subbands;
        self.pending = self.selection.iter().map(UeAssignment::from).collect();
        self.pending_directives.clear();
        for d in directives {
            if d.tti != self.tti {
                log::debug!(
                    "ignoring stale directive for cell {} from TTI {}",
                    d.pci,
                    d.tti
                );
                continue;
            }
            let stats = apply_directive(
                &mut self.pending,
                d,
                &self.topo.serving,
                &self.codebook,
                n_sb,
            );
            self.pending_directives.push(AppliedDirective {
                pci: d.pci,
                issued_tti: d.tti,
                applied: stats.applied,
                ignored: stats.ignored,
            });
        }
        Ok(self.last.as_ref().expect("just set"))
    }

    fn select_all(&self) -> Result<Vec<PmiSelection>> {
        let fading = self.fading.as_ref().expect("fading initialized");
        let n_sb = self.cfg.scenario.num_subbands;
        (0..self.topo.num_ues())
            .map(|u| {
                let g = self.gains[u][0] * self.p_prb;
                let base = u * self.tracked[u].len() * n_sb;
                let hs: Vec<CMat> = (0..n_sb).map(|s| fading.matrix(base + s, g)).collect();
                ue_select_pmi(&hs, &self.codebook, self.sigma2)
            })
            .collect()
    }

    fn realize(&self, sched_se: &[f64]) -> Result<Realization> {
        let sc = &self.cfg.scenario;
        let fading = self.fading.as_ref().expect("fading initialized");
        let n_sb = sc.num_subbands;
        let num_cells = self.topo.num_cells();

        let mut digest = Digest::default();
        for i in 0..self.tracked.len() * self.tracked[0].len() * n_sb {
            for z in fading.entries(i) {
                digest.push_f64(z.re);
                digest.push_f64(z.im);
            }
        }

        let allocations: Vec<PrbAllocation> = (0..num_cells)
            .map(|c| {
                let demands: Vec<PrbDemand> = self.topo.attached[c]
                    .iter()
                    .map(|&u| match self.cfg.traffic {
                        Traffic::FullBuffer => PrbDemand::Unlimited,
                        Traffic::FixedRate { demand_mbps } => PrbDemand::Prbs(
                            prbs_needed(demand_mbps * 1e6 * TTI_S, sched_se[u]).unwrap_or(0),
                        ),
                    })
                    .collect();
                schedule_prbs(sc.num_prbs, &demands)
            })
            .collect();

        // Per cell and subband, the precoded transmissions and their PRB share.
        let mut prbs_in: Vec<Vec<usize>> = vec![vec![0; n_sb]; self.topo.num_ues()];
        let mut loads: Vec<Vec<Vec<Transmission>>> = Vec::with_capacity(num_cells);
        for (c, alloc) in allocations.iter().enumerate() {
            let mut cell_loads = Vec::with_capacity(n_sb);
            for s in 0..n_sb {
                let range = sc.subband_prbs(s);
                let size = range.len() as f64;
                let mut load = Vec::new();
                for (idx, &u) in self.topo.attached[c].iter().enumerate() {
                    let n = alloc.count_in(idx, range.clone());
                    if n == 0 {
                        continue;
                    }
                    prbs_in[u][s] = n;
                    let a = &self.pending[u];
                    load.push(Transmission {
                        precoder: self.codebook.get_pm(a.rank, a.pmi[s])?,
                        weight: n as f64 / size,
                    });
                }
                cell_loads.push(load);
            }
            loads.push(cell_loads);
        }

        let mut ues = Vec::with_capacity(self.topo.num_ues());
        for u in 0..self.topo.num_ues() {
            let cells = &self.tracked[u];
            let base = u * cells.len() * n_sb;
            let a = &self.pending[u];
            let layers = a.rank.layers() as f64;
            let mut iota = vec![0.0; cells.len() - 1];
            let (mut snr, mut sinr, mut layer_se_sum, mut thr) = (0.0, 0.0, 0.0, 0.0);
            let mut cqi = Vec::with_capacity(n_sb);
            for s in 0..n_sb {
                let h = fading.matrix(base + s, self.gains[u][0]);
                let nbr_h: Vec<CMat> = (1..cells.len())
                    .map(|k| fading.matrix(base + k * n_sb + s, self.gains[u][k]))
                    .collect();
                let views: Vec<NeighborView> = cells[1..]
                    .iter()
                    .zip(&nbr_h)
                    .map(|(&c, h)| NeighborView {
                        pci: c,
                        channel: h,
                        load: Some(&loads[c][s]),
                    })
                    .collect();
                let w = self.codebook.get_pm(a.rank, a.pmi[s])?;
                let r = sinr_post_selection(&h, w, self.p_prb, &views, self.sigma2)?;
                for (acc, x) in iota.iter_mut().zip(&r.iota) {
                    *acc += x;
                }
                let q = sinr_to_cqi(r.sinr)?;
                let se = cqi_to_se(q)?;
                snr += r.snr;
                sinr += r.sinr;
                layer_se_sum += se;
                thr += throughput(prbs_in[u][s], layers * se);
                cqi.push(q);
            }
            let nsb = n_sb as f64;
            for x in &mut iota {
                *x /= nsb;
            }
            let i_uk = iota.iter().sum();
            let (snr, sinr) = (snr / nsb, sinr / nsb);
            ues.push(UeOutcome {
                ue: u,
                pci: cells[0],
                rank: a.rank,
                pmi: a.pmi.clone(),
                wb_cqi: se_to_cqi(layer_se_sum / nsb),
                cqi,
                snr,
                sinr,
                se: shannon_se(a.rank.layers(), snr),
                realized_se: layers * layer_se_sum / nsb,
                thr_mbps: thr,
                prbs: prbs_in[u].iter().sum(),
                iota,
                i_uk,
            });
        }

        let cells = allocations
            .into_iter()
            .enumerate()
            .map(|(c, allocation)| {
                let members = self.topo.attached[c].clone();
                let iota = members.iter().map(|&u| ues[u].iota.clone()).collect();
                CellOutcome {
                    pci: c,
                    allocation,
                    interference: InterferenceRecord::from_components(members, iota),
                }
            })
            .collect();

        Ok(Realization {
            tti: self.tti,
            ues,
            cells,
            directives: self.pending_directives.clone(),
            channel_digest: digest.value(),
        })
    }
}
