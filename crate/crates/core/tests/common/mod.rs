//! Helpers shared by the integration tests.
#![allow(dead_code)]

use interpmi_core::cmat::{CMat, C64};
use interpmi_core::codebook::{Codebook, Rank};
use interpmi_core::harness::ExperimentConfig;
use rand::Rng;
use rand_distr::StandardNormal;

/// One site, three cells, four UEs each.
pub fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        num_sites: 1,
        ues_per_cell: 4,
        episodes: 4,
        eval_episodes: 2,
        ..ExperimentConfig::default()
    }
}

/// `rows x cols` matrix of i.i.d. CN(0, power) entries.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, power: f64) -> CMat {
    let s = (power / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// `log2 det(I + (HW)^H (HW) / sigma2)` computed directly from `HW`.
pub fn direct_capacity(h: &CMat, w: &CMat, sigma2: f64) -> f64 {
    let hw = h.matmul(w);
    let g = |a: usize, b: usize| -> C64 {
        (0..hw.rows())
            .map(|r| hw.get(r, a).conj() * hw.get(r, b))
            .sum()
    };
    match hw.cols() {
        1 => (1.0 + g(0, 0).re / sigma2).log2(),
        2 => {
            let (a, d, b) = (g(0, 0).re / sigma2, g(1, 1).re / sigma2, g(0, 1) / sigma2);
            ((1.0 + a) * (1.0 + d) - b.norm_sqr()).log2()
        }
        n => panic!("rank {n} not supported"),
    }
}

/// Exhaustive wideband search: per rank, the best entry of every subband;
/// the rank with the larger rate sum wins. Ties go to rank 1 and to the
/// lowest PMI, with rates within a relative 1e-10 counted as tied.
pub fn exhaustive_selection(channels: &[CMat], cb: &Codebook, sigma2: f64) -> (Rank, Vec<usize>) {
    let best = |rank: Rank| -> (f64, Vec<usize>) {
        let mut total = 0.0;
        let mut pmis = Vec::new();
        for h in channels {
            let caps: Vec<f64> = cb
                .entries(rank)
                .iter()
                .map(|w| direct_capacity(h, w, sigma2))
                .collect();
            let max = caps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let j = caps
                .iter()
                .position(|&c| c >= max - 1e-10 * max.abs())
                .unwrap();
            total += max;
            pmis.push(j);
        }
        (total, pmis)
    };
    let (s1, p1) = best(Rank::One);
    let (s2, p2) = best(Rank::Two);
    if s2 > s1 {
        (Rank::Two, p2)
    } else {
        (Rank::One, p1)
    }
}

/// Two-sided Welch t-test p-value.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    if a.len() < 2 || b.len() < 2 {
        return 1.0;
    }
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid degrees of freedom");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}
