//! UE-side CSI: rank and per-subband PMI selection, and the report sent to
//! the controller every TTI.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cmat::CMat;
use crate::codebook::{Codebook, CodebookGains, Rank};
use crate::error::{Error, Result};
use crate::phy::{capacity, MAX_CQI};

/// Outcome of the codebook search for one UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiSelection {
    pub ri: Rank,
    /// Chosen PMI per subband, within the rank-`ri` set.
    pub pmi: Vec<usize>,
    /// Achievable rate of the chosen entry per subband, bit/s/Hz.
    pub se: Vec<f64>,
    /// Sum over subbands of the best rate, for rank 1 and rank 2.
    pub wideband: [f64; 2],
}

impl PmiSelection {
    /// Mean achievable rate per layer, averaged over subbands.
    pub fn mean_layer_se(&self) -> f64 {
        if self.se.is_empty() {
            return 0.0;
        }
        self.se.iter().sum::<f64>() / (self.se.len() * self.ri.layers()) as f64
    }
}

/// Relative band within which candidate metrics count as tied. Some
/// entries are exactly equivalent for every channel (rank-2 pairs built from
/// one beam differ only by a column rotation), and rounding must not decide
/// between them.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// First index whose value lies within [`TIE_TOLERANCE`] of the maximum.
pub fn argmax_first(values: &[f64]) -> (usize, f64) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = max - TIE_TOLERANCE * max.abs();
    values
        .iter()
        .position(|&v| v >= floor)
        .map_or((0, f64::NEG_INFINITY), |j| (j, values[j]))
}

/// Chooses rank and PMIs from precomputed per-subband codebook gains.
pub fn select_from_gains(gains: &[CodebookGains], sigma2: f64) -> Result<PmiSelection> {
    if gains.is_empty() {
        return Err(Error::State(
            "PMI selection needs at least one subband".into(),
        ));
    }
    // Rates are increasing in the log argument, so the search runs on the
    // argument and takes the logarithm of the winner only.
    let per_rank = |rank: Rank| -> (Vec<usize>, Vec<f64>) {
        gains
            .iter()
            .map(|g| {
                let (j, _) = match rank {
                    Rank::One => argmax_first(&g.rank1),
                    Rank::Two => {
                        let metric: Vec<f64> = g
                            .rank2
                            .iter()
                            .zip(&g.rank2_gram_det)
                            .map(|(&x, &d)| x + d / sigma2)
                            .collect();
                        argmax_first(&metric)
                    }
                };
                let se = match rank {
                    Rank::One => capacity(Rank::One, g.rank1[j], 0.0, sigma2),
                    Rank::Two => capacity(Rank::Two, g.rank2[j], g.rank2_gram_det[j], sigma2),
                };
                (j, se)
            })
            .unzip()
    };
    let (pmi1, se1) = per_rank(Rank::One);
    let (pmi2, se2) = if gains[0].rank2.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        per_rank(Rank::Two)
    };
    let w1: f64 = se1.iter().sum();
    let w2: f64 = if se2.is_empty() {
        f64::NEG_INFINITY
    } else {
        se2.iter().sum()
    };
    let (ri, pmi, se) = if w2 > w1 {
        (Rank::Two, pmi2, se2)
    } else {
        (Rank::One, pmi1, se1)
    };
    Ok(PmiSelection {
        ri,
        pmi,
        se,
        wideband: [w1, w2.max(0.0)],
    })
}

/// Exhaustive search over both rank sets for every subband channel.
///
/// The channels are effective: transmit power per PRB is already folded in.
/// RI is wideband and picks the rank with the larger sum of per-subband best
/// rates; ties go to rank 1 and to the lowest PMI.
pub fn ue_select_pmi(channels: &[CMat], codebook: &Codebook, sigma2: f64) -> Result<PmiSelection> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!(
            "noise power must be positive (got {sigma2})"
        )));
    }
    let gains: Vec<CodebookGains> = channels.iter().map(|h| codebook.gains(h)).collect();
    select_from_gains(&gains, sigma2)
}

/// Link outcome of the previous TTI, as the UE reports it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Feedback {
    pub cqi: Vec<u8>,
    pub wb_cqi: u8,
    pub thr_mbps: f64,
    pub interf_mw: Vec<f64>,
    pub prbs: usize,
}

/// CSI indication for one UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiReport {
    pub ue: usize,
    pub pci: usize,
    pub tti: u64,
    pub ri: Rank,
    pub pmi: Vec<usize>,
    pub cqi: Vec<u8>,
    pub wb_cqi: u8,
    pub rsrp_dbm: f64,
    pub thr_mbps: f64,
    pub interf_mw: Vec<f64>,
    pub prbs: usize,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl CsiReport {
    /// Interference summed over the reported neighbours.
    pub fn i_uk(&self) -> f64 {
        self.interf_mw.iter().sum()
    }

    pub fn validate(&self, num_subbands: usize, codebook: &Codebook) -> Result<()> {
        if self.pmi.len() != num_subbands {
            return Err(Error::validation(
                "pmi",
                format!("expected {num_subbands} entries, got {}", self.pmi.len()),
            ));
        }
        if let Some(&j) = self.pmi.iter().find(|&&j| j >= codebook.len(self.ri)) {
            return Err(Error::validation(
                "pmi",
                format!("index {j} invalid for rank {}", self.ri.layers()),
            ));
        }
        if self.cqi.len() != num_subbands {
            return Err(Error::validation(
                "cqi",
                format!("expected {num_subbands} entries, got {}", self.cqi.len()),
            ));
        }
        if self.cqi.iter().chain([&self.wb_cqi]).any(|&c| c > MAX_CQI) {
            return Err(Error::validation("cqi", "CQI above 15"));
        }
        if !self.rsrp_dbm.is_finite() {
            return Err(Error::validation("rsrp_dbm", "not finite"));
        }
        if !(self.thr_mbps >= 0.0) || !self.thr_mbps.is_finite() {
            return Err(Error::validation(
                "thr_mbps",
                "must be finite and non-negative",
            ));
        }
        if self
            .interf_mw
            .iter()
            .any(|x| !(*x >= 0.0) || !x.is_finite())
        {
            return Err(Error::validation(
                "interf_mw",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Assembles a report from this TTI's selection and the previous TTI's link
/// outcome.
pub fn build_report(
    ue: usize,
    pci: usize,
    tti: u64,
    selection: &PmiSelection,
    feedback: &Feedback,
    rsrp_dbm: f64,
    num_subbands: usize,
) -> Result<CsiReport> {
    if selection.pmi.len() != num_subbands {
        return Err(Error::State(format!(
            "UE {ue}: selection covers {} of {num_subbands} subbands",
            selection.pmi.len()
        )));
    }
    if feedback.cqi.len() != num_subbands {
        return Err(Error::State(format!(
            "UE {ue}: feedback covers {} of {num_subbands} subbands",
            feedback.cqi.len()
        )));
    }
    Ok(CsiReport {
        ue,
        pci,
        tti,
        ri: selection.ri,
        pmi: selection.pmi.clone(),
        cqi: feedback.cqi.clone(),
        wb_cqi: feedback.wb_cqi,
        rsrp_dbm,
        thr_mbps: feedback.thr_mbps,
        interf_mw: feedback.interf_mw.clone(),
        prbs: feedback.prbs,
        extra: Map::new(),
    })
}
