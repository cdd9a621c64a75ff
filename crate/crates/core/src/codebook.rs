//! Type I single-panel codebook (codebook mode 1), ranks 1 and 2.
//!
//! Precoders are built from oversampled 2-D DFT beams `v_{l,m}` over a
//! cross-polarized `N1 x N2` array:
//!
//! ```text
//! rank 1:  W = 1/sqrt(2 N1 N2) [ v_{l,m}         ]
//!                              [ phi_n v_{l,m}   ]      phi_n = e^{j pi n / 2}, n = 0..3
//!
//! rank 2:  W = 1/sqrt(4 N1 N2) [ v_{l,m}        v_{l',m'}       ]
//!                              [ phi_n v_{l,m}  -phi_n v_{l',m'} ]   n = 0..1
//! ```
//!
//! with `(l', m') = (l + k1, m + k2)` and `(k1, k2)` taken from the `i_{1,3}`
//! offset table. PMIs are flat indices into the lexicographic enumeration
//! `(l, m, [i13,] n)`; [`Codebook::tuple`] recovers the `(i11, i12, i13, i2)`
//! form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cmat::{CMat, C64};
use crate::error::{Error, Result};
use crate::phy::gram_det;

/// Transmission rank (number of spatial layers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Rank {
    One,
    Two,
}

impl Rank {
    pub fn layers(self) -> usize {
        match self {
            Rank::One => 1,
            Rank::Two => 2,
        }
    }
}

impl TryFrom<u8> for Rank {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Rank::One),
            2 => Ok(Rank::Two),
            other => Err(format!("rank must be 1 or 2 (got {other})")),
        }
    }
}

impl From<Rank> for u8 {
    fn from(r: Rank) -> u8 {
        r.layers() as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookConfig {
    pub n1: usize,
    pub n2: usize,
    pub o1: usize,
    pub o2: usize,
}

impl Default for CodebookConfig {
    /// 8 ports: four horizontal elements per polarization.
    fn default() -> Self {
        Self {
            n1: 4,
            n2: 1,
            o1: 4,
            o2: 1,
        }
    }
}

/// `(N1, N2)` layouts with a single-panel Type I definition.
const SUPPORTED_LAYOUTS: [(usize, usize); 13] = [
    (2, 1),
    (2, 2),
    (4, 1),
    (3, 2),
    (6, 1),
    (4, 2),
    (8, 1),
    (4, 3),
    (6, 2),
    (12, 1),
    (4, 4),
    (8, 2),
    (16, 1),
];

impl CodebookConfig {
    pub fn ports(&self) -> usize {
        2 * self.n1 * self.n2
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_LAYOUTS.contains(&(self.n1, self.n2)) {
            return Err(Error::Config(format!(
                "unsupported antenna layout (N1, N2) = ({}, {})",
                self.n1, self.n2
            )));
        }
        if self.o1 == 0 || self.o2 == 0 {
            return Err(Error::Config("oversampling factors must be >= 1".into()));
        }
        if self.n2 == 1 && self.o2 != 1 {
            return Err(Error::Config("O2 must be 1 for a one-row array".into()));
        }
        Ok(())
    }

    fn beams_l(&self) -> usize {
        self.n1 * self.o1
    }

    fn beams_m(&self) -> usize {
        self.n2 * self.o2
    }

    /// `(k1, k2)` offsets indexed by `i13`.
    pub fn rank2_offsets(&self) -> Vec<(usize, usize)> {
        let (n1, n2, o1, o2) = (self.n1, self.n2, self.o1, self.o2);
        if n2 == 1 {
            if n1 == 2 {
                vec![(0, 0), (o1, 0)]
            } else {
                vec![(0, 0), (o1, 0), (2 * o1, 0), (3 * o1, 0)]
            }
        } else if n1 == n2 {
            vec![(0, 0), (o1, 0), (0, o2), (o1, o2)]
        } else {
            vec![(0, 0), (o1, 0), (0, o2), (2 * o1, 0)]
        }
    }
}

/// The `(i11, i12, i13, i2)` indices of a PMI. `i13` is 0 for rank 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmiTuple {
    pub i11: usize,
    pub i12: usize,
    pub i13: usize,
    pub i2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rank2Entry {
    beam: usize,
    offset_beam: usize,
    i13: usize,
    n: usize,
}

/// DFT beam structure retained for fast gain evaluation.
#[derive(Debug, Clone)]
struct BeamStructure {
    cfg: CodebookConfig,
    /// Unnormalized beams `v_{l,m}`, row-major by beam index
    /// `l * (N2 O2) + m`, `N1 N2` entries each.
    beams: Vec<C64>,
    rank1: Vec<(usize, usize)>,
    rank2: Vec<Rank2Entry>,
}

/// Squared Frobenius gains `||H W||_F^2` for every codebook entry, plus the
/// Gram determinant of `H W` for the rank-2 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookGains {
    pub rank1: Vec<f64>,
    pub rank2: Vec<f64>,
    pub rank2_gram_det: Vec<f64>,
}

impl CodebookGains {
    pub fn for_rank(&self, rank: Rank) -> &[f64] {
        match rank {
            Rank::One => &self.rank1,
            Rank::Two => &self.rank2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Codebook {
    ports: usize,
    rank1: Vec<CMat>,
    rank2: Vec<CMat>,
    structure: Option<BeamStructure>,
}

/// `e^{j pi n / 2}`, exact.
fn co_phase(n: usize) -> C64 {
    const PHASES: [C64; 4] = [
        C64::new(1.0, 0.0),
        C64::new(0.0, 1.0),
        C64::new(-1.0, 0.0),
        C64::new(0.0, -1.0),
    ];
    PHASES[n % 4]
}

impl Codebook {
    pub fn build(cfg: &CodebookConfig) -> Result<Self> {
        cfg.validate()?;
        let (n1, n2) = (cfg.n1, cfg.n2);
        let (bl, bm) = (cfg.beams_l(), cfg.beams_m());
        let half = n1 * n2;
        let ports = cfg.ports();

        let mut beams = Vec::with_capacity(bl * bm);
        for l in 0..bl {
            for m in 0..bm {
                let v: Vec<C64> = (0..n1)
                    .flat_map(|a| {
                        (0..n2).map(move |b| {
                            let phase = 2.0
                                * PI
                                * (l as f64 * a as f64 / (bl as f64)
                                    + m as f64 * b as f64 / (bm as f64));
                            C64::from_polar(1.0, phase)
                        })
                    })
                    .collect();
                beams.push(v);
            }
        }

        let s1 = 1.0 / ((2 * half) as f64).sqrt();
        let mut rank1 = Vec::with_capacity(bl * bm * 4);
        let mut rank1_idx = Vec::with_capacity(bl * bm * 4);
        for (b, v) in beams.iter().enumerate() {
            for n in 0..4 {
                let phi = co_phase(n);
                let w = CMat::from_fn(ports, 1, |r, _| {
                    if r < half {
                        v[r] * s1
                    } else {
                        phi * v[r - half] * s1
                    }
                });
                rank1.push(w);
                rank1_idx.push((b, n));
            }
        }

        let s2 = 1.0 / ((4 * half) as f64).sqrt();
        let offsets = cfg.rank2_offsets();
        let mut rank2 = Vec::new();
        let mut rank2_idx = Vec::new();
        for l in 0..bl {
            for m in 0..bm {
                let b = l * bm + m;
                for (i13, &(k1, k2)) in offsets.iter().enumerate() {
                    let b2 = ((l + k1) % bl) * bm + (m + k2) % bm;
                    for n in 0..2 {
                        let phi = co_phase(n);
                        let (v, u) = (&beams[b], &beams[b2]);
                        let w = CMat::from_fn(ports, 2, |r, c| match (r < half, c) {
                            (true, 0) => v[r] * s2,
                            (true, _) => u[r] * s2,
                            (false, 0) => phi * v[r - half] * s2,
                            (false, _) => -phi * u[r - half] * s2,
                        });
                        rank2.push(w);
                        rank2_idx.push(Rank2Entry {
                            beam: b,
                            offset_beam: b2,
                            i13,
                            n,
                        });
                    }
                }
            }
        }

        Ok(Self {
            ports,
            rank1,
            rank2,
            structure: Some(BeamStructure {
                cfg: *cfg,
                beams: beams.concat(),
                rank1: rank1_idx,
                rank2: rank2_idx,
            }),
        })
    }

    /// A codebook from explicit matrix lists (no DFT structure). Gains are
    /// evaluated by direct multiplication.
    pub fn from_matrices(rank1: Vec<CMat>, rank2: Vec<CMat>) -> Result<Self> {
        let ports = rank1
            .first()
            .or(rank2.first())
            .map(|w| w.rows())
            .ok_or_else(|| Error::Config("empty codebook".into()))?;
        let bad = rank1.iter().any(|w| w.shape() != (ports, 1))
            || rank2.iter().any(|w| w.shape() != (ports, 2));
        if bad {
            return Err(Error::Config("inconsistent precoder shapes".into()));
        }
        Ok(Self {
            ports,
            rank1,
            rank2,
            structure: None,
        })
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn len(&self, rank: Rank) -> usize {
        self.entries(rank).len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank1.is_empty() && self.rank2.is_empty()
    }

    pub fn entries(&self, rank: Rank) -> &[CMat] {
        match rank {
            Rank::One => &self.rank1,
            Rank::Two => &self.rank2,
        }
    }

    pub fn get_pm(&self, rank: Rank, j: usize) -> Result<&CMat> {
        let set = self.entries(rank);
        set.get(j).ok_or(Error::Index {
            what: match rank {
                Rank::One => "rank-1 codebook",
                Rank::Two => "rank-2 codebook",
            },
            index: j,
            len: set.len(),
        })
    }

    pub fn tuple(&self, rank: Rank, j: usize) -> Result<PmiTuple> {
        self.get_pm(rank, j)?;
        let st = self
            .structure
            .as_ref()
            .ok_or_else(|| Error::State("codebook has no DFT structure".into()))?;
        let bm = st.cfg.beams_m();
        Ok(match rank {
            Rank::One => {
                let (b, n) = st.rank1[j];
                PmiTuple {
                    i11: b / bm,
                    i12: b % bm,
                    i13: 0,
                    i2: n,
                }
            }
            Rank::Two => {
                let e = st.rank2[j];
                PmiTuple {
                    i11: e.beam / bm,
                    i12: e.beam % bm,
                    i13: e.i13,
                    i2: e.n,
                }
            }
        })
    }

    pub fn index_of(&self, rank: Rank, t: PmiTuple) -> Result<usize> {
        let st = self
            .structure
            .as_ref()
            .ok_or_else(|| Error::State("codebook has no DFT structure".into()))?;
        let (bl, bm) = (st.cfg.beams_l(), st.cfg.beams_m());
        let (n_i13, n_i2) = match rank {
            Rank::One => (1, 4),
            Rank::Two => (st.cfg.rank2_offsets().len(), 2),
        };
        if t.i11 >= bl || t.i12 >= bm || t.i13 >= n_i13 || t.i2 >= n_i2 {
            return Err(Error::Domain(format!("PMI tuple {t:?} out of range")));
        }
        Ok(((t.i11 * bm + t.i12) * n_i13 + t.i13) * n_i2 + t.i2)
    }

    /// `||H W||_F^2` for every entry of both ranks.
    ///
    /// With the DFT structure, each beam is projected through the two
    /// polarization halves of `H` once and all co-phasings are combined from
    /// those projections.
    pub fn gains(&self, h: &CMat) -> CodebookGains {
        assert_eq!(h.cols(), self.ports, "channel/codebook port mismatch");
        let Some(st) = &self.structure else {
            let rank2: Vec<CMat> = self.rank2.iter().map(|w| h.matmul(w)).collect();
            return CodebookGains {
                rank1: self
                    .rank1
                    .iter()
                    .map(|w| h.product_frobenius_sqr(w))
                    .collect(),
                rank2: rank2.iter().map(CMat::frobenius_sqr).collect(),
                rank2_gram_det: rank2.iter().map(gram_det).collect(),
            };
        };
        let nr = h.rows();
        let half = self.ports / 2;
        let nb = st.beams.len() / half;
        // a[b][r] = H_pol1 v_b, c[b][r] = H_pol2 v_b
        // comb[(b * 4 + n) * nr + r] = (H_pol1 v_b)_r + phi_n (H_pol2 v_b)_r
        let mut comb = vec![C64::new(0.0, 0.0); nb * 4 * nr];
        for (r, row) in h.as_slice().chunks_exact(self.ports).enumerate() {
            let (h1, h2) = row.split_at(half);
            for (b, v) in st.beams.chunks_exact(half).enumerate() {
                let mut x = C64::new(0.0, 0.0);
                let mut y = C64::new(0.0, 0.0);
                for ((p, q), w) in h1.iter().zip(h2).zip(v) {
                    x += p * w;
                    y += q * w;
                }
                // Co-phases 1, j, -1, -j.
                let jy = C64::new(-y.im, y.re);
                let base = b * 4 * nr + r;
                comb[base] = x + y;
                comb[base + nr] = x + jy;
                comb[base + 2 * nr] = x - y;
                comb[base + 3 * nr] = x - jy;
            }
        }
        let energy: Vec<f64> = comb
            .chunks_exact(nr)
            .map(|z| z.iter().map(|x| x.norm_sqr()).sum())
            .collect();
        let s1 = 1.0 / (2 * half) as f64;
        let s2 = 1.0 / (4 * half) as f64;
        let rank1 = st
            .rank1
            .iter()
            .map(|&(b, n)| energy[b * 4 + n] * s1)
            .collect();
        let mut rank2 = Vec::with_capacity(st.rank2.len());
        let mut rank2_gram_det = Vec::with_capacity(st.rank2.len());
        for e in &st.rank2 {
            // Second column uses -phi_n = phi_{n+2}.
            let (i, k) = (e.beam * 4 + e.n, e.offset_beam * 4 + e.n + 2);
            let (xx, yy) = (energy[i], energy[k]);
            let x = &comb[i * nr..(i + 1) * nr];
            let y = &comb[k * nr..(k + 1) * nr];
            let xy: C64 = x.iter().zip(y).map(|(p, q)| p.conj() * q).sum();
            rank2.push((xx + yy) * s2);
            rank2_gram_det.push(((xx * yy - xy.norm_sqr()) * s2 * s2).max(0.0));
        }
        CodebookGains {
            rank1,
            rank2,
            rank2_gram_det,
        }
    }
}
