//! Link evaluation: SNR and spectral efficiency, post-selection SINR with
//! neighbour interference, CQI mapping, PRB scheduling and throughput.

use serde::{Deserialize, Serialize};

use crate::cmat::CMat;
use crate::codebook::Rank;
use crate::error::{Error, Result};

/// Bandwidth of one PRB in MHz (12 subcarriers at 15 kHz).
pub const PRB_MHZ: f64 = 0.18;

/// One TTI in seconds.
pub const TTI_S: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modulation {
    Qpsk,
    Qam16,
    Qam64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqiEntry {
    pub cqi: u8,
    pub modulation: Modulation,
    /// Code rate times 1024.
    pub code_rate: u16,
    pub efficiency: f64,
}

const fn row(cqi: u8, modulation: Modulation, code_rate: u16, efficiency: f64) -> CqiEntry {
    CqiEntry {
        cqi,
        modulation,
        code_rate,
        efficiency,
    }
}

/// 4-bit CQI table (64QAM), indices 1 to 15.
pub const CQI_TABLE: [CqiEntry; 15] = [
    row(1, Modulation::Qpsk, 78, 0.1523),
    row(2, Modulation::Qpsk, 120, 0.2344),
    row(3, Modulation::Qpsk, 193, 0.3770),
    row(4, Modulation::Qpsk, 308, 0.6016),
    row(5, Modulation::Qpsk, 449, 0.8770),
    row(6, Modulation::Qpsk, 602, 1.1758),
    row(7, Modulation::Qam16, 378, 1.4766),
    row(8, Modulation::Qam16, 490, 1.9141),
    row(9, Modulation::Qam16, 616, 2.4063),
    row(10, Modulation::Qam64, 466, 2.7305),
    row(11, Modulation::Qam64, 567, 3.3223),
    row(12, Modulation::Qam64, 666, 3.9023),
    row(13, Modulation::Qam64, 772, 4.5234),
    row(14, Modulation::Qam64, 873, 5.1152),
    row(15, Modulation::Qam64, 948, 5.5547),
];

pub const MAX_CQI: u8 = 15;

/// Post-precoding SNR, `||H W||_F^2 / sigma^2`.
pub fn precoded_snr(h: &CMat, w: &CMat, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!(
            "noise power must be positive (got {sigma2})"
        )));
    }
    if h.cols() != w.rows() {
        return Err(Error::Domain(format!(
            "channel {:?} does not conform to precoder {:?}",
            h.shape(),
            w.shape()
        )));
    }
    Ok(h.product_frobenius_sqr(w) / sigma2)
}

/// `rank * log2(1 + snr)`.
pub fn shannon_se(rank: usize, snr: f64) -> f64 {
    rank as f64 * (1.0 + snr).log2()
}

/// Achievable rate `log2 det(I + (HW)^H (HW) / sigma^2)` from the Gram
/// quantities of the effective channel `HW`: its squared Frobenius norm and,
/// for rank 2, the determinant of its 2x2 Gram matrix.
///
/// For rank 1 this is exactly [`shannon_se`]. For rank 2 it equals
/// `2 log2(1 + snr/2)` when both layers are equally strong and drops to the
/// rank-1 value when the second layer vanishes.
pub fn capacity(rank: Rank, gain: f64, gram_det: f64, sigma2: f64) -> f64 {
    let x = gain / sigma2;
    match rank {
        Rank::One => (1.0 + x).log2(),
        Rank::Two => (1.0 + x + gram_det.max(0.0) / (sigma2 * sigma2)).log2(),
    }
}

/// Determinant of the Gram matrix of a two-column matrix.
pub fn gram_det(hw: &CMat) -> f64 {
    assert_eq!(hw.cols(), 2);
    let a: f64 = (0..hw.rows()).map(|r| hw.get(r, 0).norm_sqr()).sum();
    let b: f64 = (0..hw.rows()).map(|r| hw.get(r, 1).norm_sqr()).sum();
    (a * b - hw.column_inner(0, 1).norm_sqr()).max(0.0)
}

pub fn cqi_to_se(cqi: u8) -> Result<f64> {
    match cqi {
        0 => Ok(0.0),
        1..=MAX_CQI => Ok(CQI_TABLE[cqi as usize - 1].efficiency),
        _ => Err(Error::Domain(format!("CQI must lie in 0..=15 (got {cqi})"))),
    }
}

/// Largest CQI whose efficiency does not exceed `se`; 0 below CQI 1.
pub fn se_to_cqi(se: f64) -> u8 {
    CQI_TABLE
        .iter()
        .rev()
        .find(|e| e.efficiency <= se)
        .map_or(0, |e| e.cqi)
}

pub fn sinr_to_cqi(sinr: f64) -> Result<u8> {
    if !(sinr >= 0.0) {
        return Err(Error::Domain(format!(
            "SINR must be non-negative (got {sinr})"
        )));
    }
    Ok(se_to_cqi((1.0 + sinr).log2()))
}

/// Throughput in Mbit/s of `prbs` resource blocks at spectral efficiency `se`
/// over one TTI.
pub fn throughput(prbs: usize, se: f64) -> f64 {
    prbs as f64 * PRB_MHZ * se
}

/// A precoded transmission occupying a fraction of a subband.
#[derive(Debug, Clone, Copy)]
pub struct Transmission<'a> {
    pub precoder: &'a CMat,
    /// Share of the subband's PRBs carrying this transmission, in `[0, 1]`.
    pub weight: f64,
}

/// Received power from one cell's transmissions on a subband:
/// `sum_c weight_c * p_prb * ||H W_c||^2 / r_c`.
pub fn interference_term(h: &CMat, p_prb: f64, load: &[Transmission]) -> f64 {
    load.iter()
        .map(|t| t.weight * p_prb * h.product_frobenius_sqr(t.precoder) / t.precoder.cols() as f64)
        .sum()
}

/// A neighbour cell as seen from one UE on one subband.
#[derive(Debug, Clone, Copy)]
pub struct NeighborView<'a> {
    pub pci: usize,
    pub channel: &'a CMat,
    /// `None` when the neighbour has not committed its transmissions.
    pub load: Option<&'a [Transmission<'a>]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSinr {
    pub signal: f64,
    pub snr: f64,
    pub sinr: f64,
    /// Interference per neighbour, in the order given.
    pub iota: Vec<f64>,
}

pub fn sinr_post_selection(
    serving: &CMat,
    precoder: &CMat,
    p_prb: f64,
    neighbors: &[NeighborView],
    sigma2: f64,
) -> Result<SubbandSinr> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!(
            "noise power must be positive (got {sigma2})"
        )));
    }
    let signal = p_prb * serving.product_frobenius_sqr(precoder) / precoder.cols() as f64;
    let iota = neighbors
        .iter()
        .map(|n| {
            n.load
                .map(|load| interference_term(n.channel, p_prb, load))
                .ok_or_else(|| Error::State(format!("cell {} has no precoder commitment", n.pci)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = iota.iter().sum();
    Ok(SubbandSinr {
        signal,
        snr: signal / sigma2,
        sinr: signal / (total + sigma2),
        iota,
    })
}

/// Per-UE realized link quality for one TTI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    /// Wideband (subband-averaged) linear SNR.
    pub snr: f64,
    /// Wideband (subband-averaged) linear SINR.
    pub sinr: f64,
    /// `rank * log2(1 + snr)`.
    pub se: f64,
    pub cqi: u8,
    /// `rank * mean_s cqi_to_se(cqi_s)`.
    pub realized_se: f64,
    pub rank_used: Rank,
    pub pmi_used: Vec<usize>,
}

/// Interference bookkeeping for one cell in one TTI.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InterferenceRecord {
    pub ues: Vec<usize>,
    /// Per UE, one entry per tracked neighbour.
    pub iota: Vec<Vec<f64>>,
    /// Per UE, `sum` of its `iota` row.
    pub i_uk: Vec<f64>,
    /// `sum` of `i_uk`.
    pub i_k: f64,
}

impl InterferenceRecord {
    pub fn from_components(ues: Vec<usize>, iota: Vec<Vec<f64>>) -> Self {
        let i_uk: Vec<f64> = iota.iter().map(|row| row.iter().sum()).collect();
        let i_k = i_uk.iter().sum();
        Self {
            ues,
            iota,
            i_uk,
            i_k,
        }
    }

    /// Recomputes both aggregation levels and compares bit-for-bit.
    pub fn is_consistent(&self) -> bool {
        let i_uk_ok = self
            .iota
            .iter()
            .zip(&self.i_uk)
            .all(|(row, &s)| row.iter().sum::<f64>() == s);
        i_uk_ok && self.i_uk.len() == self.ues.len() && self.i_uk.iter().sum::<f64>() == self.i_k
    }
}

/// How many PRBs a UE asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrbDemand {
    Unlimited,
    Prbs(usize),
}

/// PRBs needed to carry `bits` in one TTI at spectral efficiency `se`.
/// `None` when the link cannot carry data.
pub fn prbs_needed(bits: f64, se: f64) -> Option<usize> {
    if !(se > 0.0) {
        return None;
    }
    if bits <= 0.0 {
        return Some(0);
    }
    Some((bits / (PRB_MHZ * 1e6 * TTI_S * se)).ceil() as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrbAllocation {
    pub num_prbs: usize,
    /// PRB count per UE, aligned with the demand list.
    pub per_ue: Vec<usize>,
    /// Owner (position in the demand list) of each PRB.
    pub owners: Vec<Option<usize>>,
    pub total_used: usize,
    /// Some demand could not be met.
    pub truncated: bool,
}

impl PrbAllocation {
    pub fn utilization(&self) -> f64 {
        if self.num_prbs == 0 {
            0.0
        } else {
            self.total_used as f64 / self.num_prbs as f64
        }
    }

    /// PRBs of UE `idx` that fall in `range`.
    pub fn count_in(&self, idx: usize, range: std::ops::Range<usize>) -> usize {
        self.owners[range]
            .iter()
            .filter(|o| **o == Some(idx))
            .count()
    }
}

/// Round-robin allocation: PRB 0 goes to the first UE with remaining demand,
/// PRB 1 to the next, and so on, cycling in list order.
pub fn schedule_prbs(num_prbs: usize, demands: &[PrbDemand]) -> PrbAllocation {
    let mut remaining: Vec<usize> = demands
        .iter()
        .map(|d| match d {
            PrbDemand::Unlimited => usize::MAX,
            PrbDemand::Prbs(n) => *n,
        })
        .collect();
    let mut per_ue = vec![0; demands.len()];
    let mut owners = vec![None; num_prbs];
    let mut cursor = 0;
    for slot in owners.iter_mut() {
        let Some(offset) = (0..demands.len()).find(|k| remaining[(cursor + k) % demands.len()] > 0)
        else {
            break;
        };
        let ue = (cursor + offset) % demands.len();
        *slot = Some(ue);
        per_ue[ue] += 1;
        remaining[ue] -= 1;
        cursor = ue + 1;
    }
    let total_used = per_ue.iter().sum();
    let truncated = demands
        .iter()
        .zip(&remaining)
        .any(|(d, &r)| matches!(d, PrbDemand::Prbs(_)) && r > 0);
    PrbAllocation {
        num_prbs,
        per_ue,
        owners,
        total_used,
        truncated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmat::C64;

    #[test]
    fn cqi_table_is_increasing() {
        for w in CQI_TABLE.windows(2) {
            assert!(w[0].efficiency < w[1].efficiency);
            assert_eq!(w[0].cqi + 1, w[1].cqi);
        }
        assert_eq!(cqi_to_se(15).unwrap(), 5.5547);
        assert_eq!(cqi_to_se(0).unwrap(), 0.0);
        assert!(matches!(cqi_to_se(16), Err(Error::Domain(_))));
    }

    #[test]
    fn cqi_mapping_endpoints() {
        assert_eq!(sinr_to_cqi(0.0).unwrap(), 0);
        assert_eq!(sinr_to_cqi(2f64.powf(5.5547) - 1.0).unwrap(), 15);
        assert_eq!(sinr_to_cqi(1e6).unwrap(), 15);
        assert!(sinr_to_cqi(-0.1).is_err());
        assert!(sinr_to_cqi(f64::NAN).is_err());
    }

    #[test]
    fn se_formula() {
        assert_eq!(shannon_se(1, 1.0), 1.0);
        assert_eq!(shannon_se(2, 3.0), 4.0);
        assert_eq!(shannon_se(1, 0.0), 0.0);
    }

    #[test]
    fn snr_of_zero_channel_and_noise_scaling() {
        let w = CMat::from_fn(8, 1, |r, _| C64::new(if r == 0 { 1.0 } else { 0.0 }, 0.0));
        assert_eq!(precoded_snr(&CMat::zeros(2, 8), &w, 1.0).unwrap(), 0.0);
        let h = CMat::from_fn(2, 8, |r, c| C64::new(if r == c { 1.0 } else { 0.0 }, 0.0));
        assert_eq!(precoded_snr(&h, &w, 1.0).unwrap(), 1.0);
        assert_eq!(precoded_snr(&h, &w, 4.0).unwrap(), 0.25);
        assert!(precoded_snr(&h, &w, 0.0).is_err());
    }

    #[test]
    fn capacity_reduces_to_shannon_rate_for_rank_one() {
        for g in [0.0, 0.3, 7.0] {
            assert_eq!(capacity(Rank::One, g, 0.0, 1.0), shannon_se(1, g));
        }
        let balanced = capacity(Rank::Two, 4.0, 4.0, 1.0);
        assert!((balanced - shannon_se(2, 2.0)).abs() < 1e-12);
    }

    #[test]
    fn single_neighbor_at_noise_level_halves_sinr() {
        let h = CMat::from_fn(2, 8, |r, c| C64::new(if r == c { 1.0 } else { 0.0 }, 0.0));
        let w = CMat::from_fn(8, 1, |r, _| C64::new(if r == 0 { 1.0 } else { 0.0 }, 0.0));
        let load = [Transmission {
            precoder: &w,
            weight: 1.0,
        }];
        let n = [NeighborView {
            pci: 1,
            channel: &h,
            load: Some(&load),
        }];
        let s = sinr_post_selection(&h, &w, 1.0, &n, 1.0).unwrap();
        assert_eq!(s.snr, 1.0);
        assert_eq!(s.sinr, 0.5);
        assert!((10.0 * (s.snr / s.sinr).log10() - 3.0103).abs() < 1e-4);

        let missing = [NeighborView {
            pci: 1,
            channel: &h,
            load: None,
        }];
        assert!(matches!(
            sinr_post_selection(&h, &w, 1.0, &missing, 1.0),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn full_buffer_round_robin() {
        let a = schedule_prbs(52, &[PrbDemand::Unlimited; 10]);
        let mut counts = a.per_ue.clone();
        counts.sort();
        assert_eq!(counts, [5, 5, 5, 5, 5, 5, 5, 5, 6, 6]);
        assert_eq!(a.per_ue[0], 6);
        assert_eq!(a.per_ue[1], 6);
        assert_eq!(a.utilization(), 1.0);
        assert!(!a.truncated);
        assert_eq!(a.owners[11], Some(1));
    }

    #[test]
    fn fixed_rate_edges() {
        let a = schedule_prbs(52, &[PrbDemand::Prbs(0); 4]);
        assert_eq!(a.utilization(), 0.0);
        let b = schedule_prbs(52, &[PrbDemand::Prbs(30), PrbDemand::Prbs(30)]);
        assert_eq!(b.utilization(), 1.0);
        assert!(b.truncated);
        assert_eq!(b.per_ue, [26, 26]);
        let c = schedule_prbs(
            10,
            &[PrbDemand::Prbs(1), PrbDemand::Prbs(4), PrbDemand::Prbs(2)],
        );
        assert_eq!(c.per_ue, [1, 4, 2]);
        assert_eq!(
            c.owners[..7],
            [
                Some(0),
                Some(1),
                Some(2),
                Some(1),
                Some(2),
                Some(1),
                Some(1)
            ]
        );
        assert_eq!(c.owners[7], None);
    }

    #[test]
    fn prbs_for_one_megabit() {
        assert_eq!(prbs_needed(1000.0, 5.5547), Some(2));
        assert_eq!(prbs_needed(1000.0, 2.0 * 5.5547), Some(1));
        assert_eq!(prbs_needed(1000.0, 1.0), Some(6));
        assert_eq!(prbs_needed(0.0, 1.0), Some(0));
        assert_eq!(prbs_needed(1000.0, 0.0), None);
    }

    #[test]
    fn throughput_values() {
        assert!((throughput(5, 5.5547) - 4.99923).abs() < 1e-9);
        assert_eq!(throughput(0, 5.5547), 0.0);
        assert_eq!(throughput(10, 2.0), 2.0 * throughput(5, 2.0));
    }

    #[test]
    fn interference_record_identities() {
        let r = InterferenceRecord::from_components(
            vec![3, 7],
            vec![vec![0.1, 0.2, 0.3], vec![1e-9, 2.5]],
        );
        assert!(r.is_consistent());
        assert_eq!(r.i_k, r.i_uk[0] + r.i_uk[1]);
    }
}
