//! Hexagonal multi-site layout, UE drop, and large-scale link budgets.
//!
//! Sites sit on a hexagonal grid (1, 7 or 19 sites) with three 120-degree
//! sectors each. Large-scale propagation follows the 3GPP urban-macro model:
//! distance-dependent LOS probability, LOS/NLOS pathloss, log-normal shadowing
//! and the parabolic sector antenna pattern. UEs are stationary, so every link
//! budget is computed once per scenario.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, TAG_LAYOUT, TAG_LINKS};

/// UEs whose RSRP falls below this level are edge-eligible.
pub const EDGE_RSRP_DBM: f64 = -100.0;

/// Number of strongest non-serving cells tracked as interferers per UE.
pub const TRACKED_NEIGHBORS: usize = 9;

pub const MIN_DISTANCE_M: f64 = 10.0;
pub const MAX_DISTANCE_M: f64 = 5000.0;

const SPEED_OF_LIGHT: f64 = 3.0e8;
const SECTOR_HPBW_DEG: f64 = 65.0;
const SECTOR_MAX_ATTENUATION_DB: f64 = 30.0;
const SHADOWING_LOS_DB: f64 = 4.0;
const SHADOWING_NLOS_DB: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
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
    pub seed: u64,
}

impl Default for Scenario {
    /// Desk-scale deployment: 7 sites, 21 cells, 210 UEs.
    fn default() -> Self {
        Self {
            num_sites: 7,
            sectors_per_site: 3,
            isd_m: 500.0,
            carrier_ghz: 3.7,
            bandwidth_mhz: 10.0,
            num_prbs: 52,
            num_subbands: 6,
            ues_per_cell: 10,
            bs_power_dbm: 43.0,
            bs_height_m: 25.0,
            ue_height_m: 1.5,
            noise_figure_db: 9.0,
            seed: 1,
        }
    }
}

impl Scenario {
    /// The full 19-site, 57-cell, 570-UE deployment.
    pub fn full_scale() -> Self {
        Self {
            num_sites: 19,
            ..Self::default()
        }
    }

    pub fn num_cells(&self) -> usize {
        self.num_sites * self.sectors_per_site
    }

    pub fn num_ues(&self) -> usize {
        self.num_cells() * self.ues_per_cell
    }

    /// PRBs per subband; the last subband takes the remainder.
    pub fn subband_size(&self) -> usize {
        self.num_prbs.div_ceil(self.num_subbands.max(1))
    }

    pub fn subband_of_prb(&self, prb: usize) -> usize {
        prb / self.subband_size()
    }

    pub fn subband_prbs(&self, subband: usize) -> std::ops::Range<usize> {
        let size = self.subband_size();
        let start = (subband * size).min(self.num_prbs);
        start..((subband + 1) * size).min(self.num_prbs)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.num_sites, 1 | 7 | 19) {
            return Err(Error::Config(format!(
                "num_sites must be 1, 7 or 19 (got {})",
                self.num_sites
            )));
        }
        if !matches!(self.sectors_per_site, 1 | 3) {
            return Err(Error::Config(format!(
                "sectors_per_site must be 1 or 3 (got {})",
                self.sectors_per_site
            )));
        }
        if !(self.isd_m > 0.0) {
            return Err(Error::Config("isd_m must be positive".into()));
        }
        if !(self.carrier_ghz > 0.0) || !(self.bandwidth_mhz > 0.0) {
            return Err(Error::Config(
                "carrier and bandwidth must be positive".into(),
            ));
        }
        if self.num_subbands == 0 || self.num_prbs < self.num_subbands {
            return Err(Error::Config(format!(
                "need num_prbs >= num_subbands >= 1 (got {} PRBs, {} subbands)",
                self.num_prbs, self.num_subbands
            )));
        }
        if (self.num_subbands - 1) * self.subband_size() >= self.num_prbs {
            return Err(Error::Config(format!(
                "{} PRBs cannot be split into {} non-empty subbands",
                self.num_prbs, self.num_subbands
            )));
        }
        if !(self.bs_height_m > self.ue_height_m) || !(self.ue_height_m > 0.0) {
            return Err(Error::Config(
                "antenna heights must satisfy bs > ue > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGeometry {
    pub pci: usize,
    pub site: usize,
    pub site_position: [f64; 2],
    pub boresight_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UePosition {
    pub id: usize,
    pub position: [f64; 2],
    /// Cell whose coverage area the UE was dropped into. The serving cell is
    /// chosen by RSRP and can differ.
    pub drop_cell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub cells: Vec<CellGeometry>,
    pub ues: Vec<UePosition>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub pathloss_db: f64,
    pub shadowing_db: f64,
    pub antenna_gain_db: f64,
    pub rsrp_dbm: f64,
    pub los: bool,
    pub is_serving: bool,
}

impl LinkBudget {
    /// Linear large-scale power gain of the link (pathloss, shadowing and
    /// antenna pattern combined).
    pub fn gain_linear(&self) -> f64 {
        db_to_linear(-(self.pathloss_db + self.shadowing_db) + self.antenna_gain_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Site centres on axial hex coordinates, ordered ring by ring.
fn site_positions(num_sites: usize, isd: f64) -> Vec<[f64; 2]> {
    let rings: i64 = match num_sites {
        1 => 0,
        7 => 1,
        _ => 2,
    };
    let mut coords: Vec<(i64, i64)> = Vec::new();
    for ring in 0..=rings {
        for q in -rings..=rings {
            for r in -rings..=rings {
                let s = -q - r;
                if q.abs().max(r.abs()).max(s.abs()) == ring {
                    coords.push((q, r));
                }
            }
        }
    }
    coords
        .into_iter()
        .map(|(q, r)| {
            let x = isd * (q as f64 + r as f64 / 2.0);
            let y = isd * (r as f64) * 3f64.sqrt() / 2.0;
            [x, y]
        })
        .collect()
}

fn sector_boresights(sectors: usize) -> Vec<f64> {
    match sectors {
        1 => vec![0.0],
        _ => vec![30.0, 150.0, 270.0],
    }
}

/// Is `p` (relative to the hexagon centre) inside a regular hexagon with
/// circumradius `radius` and one vertex at angle `vertex_deg`?
fn inside_hexagon(p: [f64; 2], radius: f64, vertex_deg: f64) -> bool {
    let apothem = radius * 3f64.sqrt() / 2.0;
    (0..3).all(|k| {
        let a = (vertex_deg + 30.0 + 60.0 * k as f64).to_radians();
        (p[0] * a.cos() + p[1] * a.sin()).abs() <= apothem
    })
}

/// Places sites and sectors, then drops `ues_per_cell` UEs uniformly in each
/// cell's hexagonal coverage area.
pub fn build_layout(scenario: &Scenario) -> Result<Layout> {
    scenario.validate()?;
    let sites = site_positions(scenario.num_sites, scenario.isd_m);
    let boresights = sector_boresights(scenario.sectors_per_site);

    let mut cells = Vec::with_capacity(scenario.num_cells());
    for (site, pos) in sites.iter().enumerate() {
        for &b in &boresights {
            cells.push(CellGeometry {
                pci: cells.len(),
                site,
                site_position: *pos,
                boresight_deg: b,
            });
        }
    }

    let mut rng = keyed_rng(scenario.seed, &[TAG_LAYOUT]);
    let mut ues = Vec::with_capacity(scenario.num_ues());
    for cell in &cells {
        // Clover-leaf sectors are hexagons of radius isd/3 with a vertex on the
        // site; an omni cell covers the full site hexagon.
        let (radius, centre, vertex) = if scenario.sectors_per_site == 1 {
            (scenario.isd_m / 3f64.sqrt(), cell.site_position, 30.0)
        } else {
            let r = scenario.isd_m / 3.0;
            let b = cell.boresight_deg.to_radians();
            (
                r,
                [
                    cell.site_position[0] + r * b.cos(),
                    cell.site_position[1] + r * b.sin(),
                ],
                cell.boresight_deg + 180.0,
            )
        };
        for _ in 0..scenario.ues_per_cell {
            let position = loop {
                let dx = rng.random_range(-radius..radius);
                let dy = rng.random_range(-radius..radius);
                if !inside_hexagon([dx, dy], radius, vertex) {
                    continue;
                }
                let p = [centre[0] + dx, centre[1] + dy];
                let d = (p[0] - cell.site_position[0]).hypot(p[1] - cell.site_position[1]);
                if d >= MIN_DISTANCE_M {
                    break p;
                }
            };
            ues.push(UePosition {
                id: ues.len(),
                position,
                drop_cell: cell.pci,
            });
        }
    }
    Ok(Layout { cells, ues })
}

/// UMa LOS probability for an outdoor UE at height `h_ut`.
pub fn los_probability_uma(d2d: f64, h_ut: f64) -> f64 {
    if d2d <= 18.0 {
        return 1.0;
    }
    let c = if h_ut <= 13.0 {
        0.0
    } else {
        ((h_ut - 13.0) / 10.0).powf(1.5)
    };
    (18.0 / d2d + (-d2d / 63.0).exp() * (1.0 - 18.0 / d2d))
        * (1.0 + c * 1.25 * (d2d / 100.0).powi(3) * (-d2d / 150.0).exp())
}

/// UMa pathloss in dB. `d2d` in metres, heights in metres, carrier in GHz.
pub fn pathloss_uma(d2d: f64, h_bs: f64, h_ut: f64, f_ghz: f64, los: bool) -> Result<f64> {
    if !(MIN_DISTANCE_M..=MAX_DISTANCE_M).contains(&d2d) {
        return Err(Error::Domain(format!(
            "UMa pathloss defined for 10 m <= d2D <= 5 km (got {d2d} m)"
        )));
    }
    let d3d = d2d.hypot(h_bs - h_ut);
    // Effective heights use an environment height of 1 m.
    let d_bp = 4.0 * (h_bs - 1.0) * (h_ut - 1.0) * f_ghz * 1e9 / SPEED_OF_LIGHT;
    let pl_los = if d2d <= d_bp {
        28.0 + 22.0 * d3d.log10() + 20.0 * f_ghz.log10()
    } else {
        28.0 + 40.0 * d3d.log10() + 20.0 * f_ghz.log10()
            - 9.0 * (d_bp * d_bp + (h_bs - h_ut).powi(2)).log10()
    };
    if los {
        Ok(pl_los)
    } else {
        let pl_nlos = 13.54 + 39.08 * d3d.log10() + 20.0 * f_ghz.log10() - 0.6 * (h_ut - 1.5);
        Ok(pl_los.max(pl_nlos))
    }
}

/// Horizontal parabolic sector pattern, in dB relative to boresight.
pub fn sector_gain_db(offset_deg: f64) -> f64 {
    let phi = wrap_degrees(offset_deg);
    -(12.0 * (phi / SECTOR_HPBW_DEG).powi(2)).min(SECTOR_MAX_ATTENUATION_DB)
}

fn wrap_degrees(a: f64) -> f64 {
    let mut x = (a + 180.0).rem_euclid(360.0) - 180.0;
    if x == -180.0 {
        x = 180.0;
    }
    x
}

pub fn rsrp(bs_power_dbm: f64, pathloss_db: f64, shadowing_db: f64, antenna_gain_db: f64) -> f64 {
    bs_power_dbm - pathloss_db - shadowing_db + antenna_gain_db
}

/// Index of the strongest entry; ties go to the lowest index (lowest PCI).
pub fn serving_cell(rsrps: &[f64]) -> usize {
    let mut best = 0;
    for (i, &r) in rsrps.iter().enumerate().skip(1) {
        if r > rsrps[best] {
            best = i;
        }
    }
    best
}

/// Cells ranked by descending RSRP with `exclude` removed, lowest PCI first
/// on ties.
pub fn ranked_neighbors(rsrps: &[f64], exclude: usize, limit: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rsrps.len()).filter(|&c| c != exclude).collect();
    order.sort_by(|&a, &b| rsrps[b].total_cmp(&rsrps[a]).then(a.cmp(&b)));
    order.truncate(limit);
    order
}

/// The immutable large-scale state of a deployment.
#[derive(Debug, Clone)]
pub struct Topology {
    pub scenario: Scenario,
    pub cells: Vec<CellGeometry>,
    pub ues: Vec<UePosition>,
    /// Link budgets, UE-major: `links[ue * num_cells + pci]`.
    links: Vec<LinkBudget>,
    pub serving: Vec<usize>,
    pub neighbors: Vec<Vec<usize>>,
    /// UE ids attached to each cell, ascending.
    pub attached: Vec<Vec<usize>>,
}

impl Topology {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        let layout = build_layout(scenario)?;
        let num_cells = layout.cells.len();
        let mut rng = keyed_rng(scenario.seed, &[TAG_LINKS]);
        let shadow_los = Normal::new(0.0, SHADOWING_LOS_DB).expect("valid sigma");
        let shadow_nlos = Normal::new(0.0, SHADOWING_NLOS_DB).expect("valid sigma");

        let mut links = Vec::with_capacity(layout.ues.len() * num_cells);
        let mut serving = Vec::with_capacity(layout.ues.len());
        let mut neighbors = Vec::with_capacity(layout.ues.len());
        for ue in &layout.ues {
            // LOS state and shadowing belong to the UE-site link and are shared
            // by the co-sited sectors.
            let mut site_state: Vec<Option<(bool, f64)>> = vec![None; scenario.num_sites];
            let mut ue_links = Vec::with_capacity(num_cells);
            for cell in &layout.cells {
                let dx = ue.position[0] - cell.site_position[0];
                let dy = ue.position[1] - cell.site_position[1];
                let d2d = dx.hypot(dy).max(MIN_DISTANCE_M);
                let (los, shadowing_db) = *site_state[cell.site].get_or_insert_with(|| {
                    let los = rng.random::<f64>() < los_probability_uma(d2d, scenario.ue_height_m);
                    let s = if los {
                        shadow_los.sample(&mut rng)
                    } else {
                        shadow_nlos.sample(&mut rng)
                    };
                    (los, s)
                });
                let pathloss_db = pathloss_uma(
                    d2d,
                    scenario.bs_height_m,
                    scenario.ue_height_m,
                    scenario.carrier_ghz,
                    los,
                )?;
                let antenna_gain_db = if scenario.sectors_per_site == 1 {
                    0.0
                } else {
                    sector_gain_db(dy.atan2(dx) * 180.0 / PI - cell.boresight_deg)
                };
                ue_links.push(LinkBudget {
                    pathloss_db,
                    shadowing_db,
                    antenna_gain_db,
                    rsrp_dbm: rsrp(
                        scenario.bs_power_dbm,
                        pathloss_db,
                        shadowing_db,
                        antenna_gain_db,
                    ),
                    los,
                    is_serving: false,
                });
            }
            let rsrps: Vec<f64> = ue_links.iter().map(|l| l.rsrp_dbm).collect();
            let s = serving_cell(&rsrps);
            ue_links[s].is_serving = true;
            serving.push(s);
            neighbors.push(ranked_neighbors(&rsrps, s, TRACKED_NEIGHBORS));
            links.extend(ue_links);
        }

        let mut attached = vec![Vec::new(); num_cells];
        for (ue, &s) in serving.iter().enumerate() {
            attached[s].push(ue);
        }

        Ok(Self {
            scenario: scenario.clone(),
            cells: layout.cells,
            ues: layout.ues,
            links,
            serving,
            neighbors,
            attached,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ues.len()
    }

    pub fn link(&self, ue: usize, pci: usize) -> &LinkBudget {
        &self.links[ue * self.cells.len() + pci]
    }

    pub fn ue_links(&self, ue: usize) -> &[LinkBudget] {
        let n = self.cells.len();
        &self.links[ue * n..(ue + 1) * n]
    }

    pub fn is_edge(&self, ue: usize) -> bool {
        self.link(ue, self.serving[ue]).rsrp_dbm < EDGE_RSRP_DBM
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        Scenario {
            num_sites: 1,
            ..Scenario::default()
        }
    }

    #[test]
    fn single_site_counts() {
        let layout = build_layout(&small()).unwrap();
        assert_eq!(layout.cells.len(), 3);
        assert_eq!(layout.ues.len(), 30);
    }

    #[test]
    fn full_scale_has_57_cells() {
        let layout = build_layout(&Scenario::full_scale()).unwrap();
        assert_eq!(layout.cells.len(), 57);
        let pcis: Vec<usize> = layout.cells.iter().map(|c| c.pci).collect();
        assert_eq!(pcis, (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_unsupported_site_counts() {
        for n in [0, 2, 3, 12, 37] {
            let s = Scenario {
                num_sites: n,
                ..Scenario::default()
            };
            assert!(matches!(build_layout(&s), Err(Error::Config(_))), "{n}");
        }
    }

    #[test]
    fn rejects_empty_trailing_subband() {
        let s = Scenario {
            num_prbs: 10,
            num_subbands: 6,
            ..Scenario::default()
        };
        assert!(s.validate().is_err());
        let ok = Scenario::default();
        let sizes: Vec<usize> = (0..6).map(|b| ok.subband_prbs(b).len()).collect();
        assert_eq!(sizes, vec![9, 9, 9, 9, 9, 7]);
    }

    #[test]
    fn layout_is_deterministic() {
        let a = build_layout(&Scenario::default()).unwrap();
        let b = build_layout(&Scenario::default()).unwrap();
        assert_eq!(a.ues, b.ues);
        let c = build_layout(&Scenario {
            seed: 99,
            ..Scenario::default()
        })
        .unwrap();
        assert_ne!(a.ues, c.ues);
    }

    #[test]
    fn sites_are_isd_apart() {
        let sites = site_positions(19, 500.0);
        assert_eq!(sites.len(), 19);
        for (i, a) in sites.iter().enumerate() {
            let nearest = sites
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
                .fold(f64::INFINITY, f64::min);
            assert!((nearest - 500.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sector_boresights_are_120_degrees_apart() {
        let layout = build_layout(&Scenario::default()).unwrap();
        for site in layout.cells.chunks(3) {
            for pair in site.windows(2) {
                assert_eq!(pair[1].boresight_deg - pair[0].boresight_deg, 120.0);
            }
        }
    }

    #[test]
    fn ues_fall_in_their_drop_sector() {
        let layout = build_layout(&Scenario::default()).unwrap();
        for ue in &layout.ues {
            let cell = &layout.cells[ue.drop_cell];
            let dx = ue.position[0] - cell.site_position[0];
            let dy = ue.position[1] - cell.site_position[1];
            let off = wrap_degrees(dy.atan2(dx).to_degrees() - cell.boresight_deg);
            assert!(
                off.abs() <= 60.0 + 1e-9,
                "ue {} off boresight by {off}",
                ue.id
            );
            assert!(dx.hypot(dy) >= MIN_DISTANCE_M);
        }
    }

    #[test]
    fn pathloss_los_hand_value() {
        let pl = pathloss_uma(500.0, 25.0, 1.5, 3.7, true).unwrap();
        // 28 + 22 log10(500.552) + 20 log10(3.7)
        assert!((pl - 98.76).abs() < 0.01, "{pl}");
    }

    #[test]
    fn pathloss_monotone_and_nlos_dominates() {
        let near = pathloss_uma(10.0, 25.0, 1.5, 3.7, true).unwrap();
        let far = pathloss_uma(500.0, 25.0, 1.5, 3.7, true).unwrap();
        assert!(near.is_finite() && near > 0.0 && near < far);
        for d in [10.0, 50.0, 300.0, 800.0, 4999.0] {
            let los = pathloss_uma(d, 25.0, 1.5, 3.7, true).unwrap();
            let nlos = pathloss_uma(d, 25.0, 1.5, 3.7, false).unwrap();
            assert!(nlos >= los);
        }
        assert!(pathloss_uma(9.9, 25.0, 1.5, 3.7, true).is_err());
        assert!(pathloss_uma(5000.1, 25.0, 1.5, 3.7, false).is_err());
    }

    #[test]
    fn pathloss_continuous_at_breakpoint() {
        let d_bp = 4.0 * 24.0 * 0.5 * 3.7e9 / SPEED_OF_LIGHT;
        let a = pathloss_uma(d_bp - 1e-6, 25.0, 1.5, 3.7, true).unwrap();
        let b = pathloss_uma(d_bp + 1e-6, 25.0, 1.5, 3.7, true).unwrap();
        assert!((a - b).abs() < 1e-3);
    }

    #[test]
    fn rsrp_identity_and_tie_break() {
        assert!((rsrp(43.0, 98.76, 0.0, 0.0) + 55.76).abs() < 1e-12);
        assert_eq!(serving_cell(&[-80.0, -70.0, -70.0]), 1);
        assert_eq!(serving_cell(&[-70.0, -70.0]), 0);
    }

    #[test]
    fn sector_pattern_limits() {
        assert_eq!(sector_gain_db(0.0), 0.0);
        assert!((sector_gain_db(32.5) + 3.0).abs() < 1e-12);
        assert_eq!(sector_gain_db(180.0), -30.0);
        assert_eq!(sector_gain_db(-400.0), sector_gain_db(-40.0));
    }

    #[test]
    fn topology_invariants() {
        let topo = Topology::build(&Scenario::default()).unwrap();
        let s = &topo.scenario;
        for ue in 0..topo.num_ues() {
            let links = topo.ue_links(ue);
            for l in links {
                assert_eq!(
                    l.rsrp_dbm,
                    rsrp(
                        s.bs_power_dbm,
                        l.pathloss_db,
                        l.shadowing_db,
                        l.antenna_gain_db
                    )
                );
            }
            let best = links
                .iter()
                .map(|l| l.rsrp_dbm)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(links[topo.serving[ue]].rsrp_dbm, best);
            assert_eq!(links.iter().filter(|l| l.is_serving).count(), 1);
            assert_eq!(topo.neighbors[ue].len(), TRACKED_NEIGHBORS);
            assert!(!topo.neighbors[ue].contains(&topo.serving[ue]));
        }
        let attached: usize = topo.attached.iter().map(Vec::len).sum();
        assert_eq!(attached, topo.num_ues());
    }

    #[test]
    fn edge_flag_follows_threshold() {
        let topo = Topology::build(&Scenario::default()).unwrap();
        for ue in 0..topo.num_ues() {
            let r = topo.link(ue, topo.serving[ue]).rsrp_dbm;
            assert_eq!(topo.is_edge(ue), r < EDGE_RSRP_DBM);
        }
    }
}
