//! Small-scale fading channels and receiver noise.
//!
//! Each (UE, cell, subband) link carries an `N_r x N_t` matrix of unit-variance
//! complex Gaussian entries that evolves as an AR(1) process across TTIs. The
//! innovation for a given step is drawn from a stream keyed by
//! `(seed, epoch, ue, cell, subband, tti)`, which makes every draw reproducible
//! without replaying the whole simulation.

use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::cmat::{CMat, C64};
use crate::rng::{keyed_fast_rng, TAG_FADING};

pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// 12 subcarriers at 15 kHz.
pub const PRB_BANDWIDTH_HZ: f64 = 180_000.0;

pub const DEFAULT_RHO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub thermal_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub prb_bandwidth_hz: f64,
}

impl NoiseModel {
    pub fn new(noise_figure_db: f64) -> Self {
        Self {
            thermal_density_dbm_hz: THERMAL_NOISE_DBM_PER_HZ,
            noise_figure_db,
            prb_bandwidth_hz: PRB_BANDWIDTH_HZ,
        }
    }

    pub fn power_dbm(&self, prbs: usize) -> f64 {
        self.power_dbm_hz(prbs as f64 * self.prb_bandwidth_hz)
    }

    pub fn power_dbm_hz(&self, bandwidth_hz: f64) -> f64 {
        self.thermal_density_dbm_hz + self.noise_figure_db + 10.0 * bandwidth_hz.log10()
    }
}

/// Noise power in mW over `prbs` resource blocks.
pub fn noise_power(noise: &NoiseModel, prbs: usize) -> f64 {
    10f64.powf(noise.power_dbm(prbs) / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub ue: usize,
    pub cell: usize,
    pub subband: usize,
    pub tti: u64,
    pub entries: CMat,
}

/// Parameters of the AR(1) Rayleigh process shared by all links.
///
/// `epoch` separates independent fading realizations (one per episode) over
/// the same large-scale deployment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingProcess {
    pub seed: u64,
    pub epoch: u64,
    pub rho: f64,
    pub n_r: usize,
    pub n_t: usize,
}

impl FadingProcess {
    pub fn new(seed: u64, epoch: u64, rho: f64, n_r: usize, n_t: usize) -> Self {
        assert!((0.0..=1.0).contains(&rho), "correlation must lie in [0, 1]");
        Self {
            seed,
            epoch,
            rho,
            n_r,
            n_t,
        }
    }

    fn rng(&self, ue: usize, cell: usize, subband: usize, tti: u64) -> Xoshiro256PlusPlus {
        keyed_fast_rng(
            self.seed,
            &[
                TAG_FADING,
                self.epoch,
                ue as u64,
                cell as u64,
                subband as u64,
                tti,
            ],
        )
    }

    /// Fills `out` with i.i.d. CN(0, 1) entries for the given key.
    pub fn innovation_into(
        &self,
        ue: usize,
        cell: usize,
        subband: usize,
        tti: u64,
        out: &mut [C64],
    ) {
        let mut rng = self.rng(ue, cell, subband, tti);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for z in out.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z = C64::new(re * s, im * s);
        }
    }

    pub fn innovation(&self, ue: usize, cell: usize, subband: usize, tti: u64) -> CMat {
        let mut data = vec![C64::new(0.0, 0.0); self.n_r * self.n_t];
        self.innovation_into(ue, cell, subband, tti, &mut data);
        CMat::from_vec(self.n_r, self.n_t, data)
    }

    /// One AR(1) step in place: `g <- rho * g + sqrt(1 - rho^2) * e(tti)`.
    pub fn step_into(
        &self,
        ue: usize,
        cell: usize,
        subband: usize,
        tti: u64,
        g: &mut [C64],
        scratch: &mut [C64],
    ) {
        if self.rho >= 1.0 {
            return;
        }
        self.innovation_into(ue, cell, subband, tti, scratch);
        let w = (1.0 - self.rho * self.rho).sqrt();
        for (x, e) in g.iter_mut().zip(scratch.iter()) {
            *x = *x * self.rho + *e * w;
        }
    }

    /// Unit-variance small-scale matrix at `tti`, replayed from `tti = 0`.
    pub fn small_scale(&self, ue: usize, cell: usize, subband: usize, tti: u64) -> CMat {
        let n = self.n_r * self.n_t;
        let mut g = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); n];
        self.innovation_into(ue, cell, subband, 0, &mut g);
        for t in 1..=tti {
            self.step_into(ue, cell, subband, t, &mut g, &mut scratch);
        }
        CMat::from_vec(self.n_r, self.n_t, g)
    }

    /// `H = sqrt(gain) * G` where `gain` is the linear large-scale gain.
    pub fn draw_channel(
        &self,
        gain_linear: f64,
        ue: usize,
        cell: usize,
        subband: usize,
        tti: u64,
    ) -> ChannelMatrix {
        let mut entries = self.small_scale(ue, cell, subband, tti);
        entries.scale(gain_linear.sqrt());
        ChannelMatrix {
            ue,
            cell,
            subband,
            tti,
            entries,
        }
    }
}

/// Incrementally advanced fading for a fixed set of links.
///
/// Produces exactly the matrices of [`FadingProcess::small_scale`] while doing
/// one AR(1) step per link per TTI.
#[derive(Debug, Clone)]
pub struct FadingState {
    process: FadingProcess,
    links: Vec<(usize, usize, usize)>,
    tti: u64,
    values: Vec<C64>,
    scratch: Vec<C64>,
}

impl FadingState {
    /// `links` lists `(ue, cell, subband)` keys; state starts at `tti = 0`.
    pub fn new(process: FadingProcess, links: Vec<(usize, usize, usize)>) -> Self {
        let n = process.n_r * process.n_t;
        let mut values = vec![C64::new(0.0, 0.0); links.len() * n];
        for (i, &(ue, cell, sb)) in links.iter().enumerate() {
            process.innovation_into(ue, cell, sb, 0, &mut values[i * n..(i + 1) * n]);
        }
        Self {
            process,
            links,
            tti: 0,
            values,
            scratch: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn tti(&self) -> u64 {
        self.tti
    }

    pub fn process(&self) -> &FadingProcess {
        &self.process
    }

    pub fn advance(&mut self) {
        self.tti += 1;
        let n = self.process.n_r * self.process.n_t;
        for (i, &(ue, cell, sb)) in self.links.iter().enumerate() {
            self.process.step_into(
                ue,
                cell,
                sb,
                self.tti,
                &mut self.values[i * n..(i + 1) * n],
                &mut self.scratch,
            );
        }
    }

    /// Small-scale entries of link `index` (position in the `links` list).
    pub fn entries(&self, index: usize) -> &[C64] {
        let n = self.process.n_r * self.process.n_t;
        &self.values[index * n..(index + 1) * n]
    }

    pub fn matrix(&self, index: usize, gain_linear: f64) -> CMat {
        let s = gain_linear.sqrt();
        let data = self.entries(index).iter().map(|z| z * s).collect();
        CMat::from_vec(self.process.n_r, self.process.n_t, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_floor_values() {
        let nm = NoiseModel::new(9.0);
        assert!(
            (nm.power_dbm(1) + 112.447).abs() < 1e-3,
            "{}",
            nm.power_dbm(1)
        );
        assert!((nm.power_dbm(2) - nm.power_dbm(1) - 3.0103).abs() < 1e-4);
        let bare = NoiseModel::new(0.0);
        assert_eq!(bare.power_dbm_hz(1.0), -174.0);
        let mw = noise_power(&nm, 1);
        assert!((10.0 * mw.log10() - nm.power_dbm(1)).abs() < 1e-9);
        assert!(mw > 0.0);
    }

    #[test]
    fn unit_correlation_freezes_channel() {
        let p = FadingProcess::new(3, 0, 1.0, 2, 8);
        let h0 = p.small_scale(1, 2, 0, 0);
        for t in [1, 5, 20] {
            assert_eq!(p.small_scale(1, 2, 0, t), h0);
        }
    }

    #[test]
    fn zero_gain_gives_zero_channel() {
        let p = FadingProcess::new(3, 0, 0.9, 2, 8);
        let h = p.draw_channel(0.0, 0, 0, 0, 4);
        assert_eq!(h.entries.shape(), (2, 8));
        assert_eq!(h.entries.frobenius_sqr(), 0.0);
    }

    #[test]
    fn draws_are_keyed() {
        let p = FadingProcess::new(3, 0, 0.9, 2, 8);
        assert_eq!(p.small_scale(4, 1, 2, 3), p.small_scale(4, 1, 2, 3));
        assert_ne!(p.small_scale(4, 1, 2, 3), p.small_scale(4, 1, 3, 3));
        let other_epoch = FadingProcess { epoch: 1, ..p };
        assert_ne!(
            p.small_scale(4, 1, 2, 3),
            other_epoch.small_scale(4, 1, 2, 3)
        );
    }

    #[test]
    fn incremental_state_matches_replay() {
        let p = FadingProcess::new(11, 2, 0.9, 2, 8);
        let links = vec![(0, 0, 0), (0, 3, 1), (5, 2, 4)];
        let mut st = FadingState::new(p, links.clone());
        for _ in 0..6 {
            st.advance();
        }
        for (i, &(ue, cell, sb)) in links.iter().enumerate() {
            let replay = p.small_scale(ue, cell, sb, 6);
            let inc = st.matrix(i, 1.0);
            assert!(replay.max_abs_diff(&inc) < 1e-12);
        }
    }
}
