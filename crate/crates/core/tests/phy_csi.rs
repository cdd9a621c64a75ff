mod common;

use interpmi_core::channel::FadingProcess;
use interpmi_core::cmat::{CMat, C64};
use interpmi_core::codebook::{Codebook, CodebookConfig, Rank};
use interpmi_core::csi::ue_select_pmi;
use interpmi_core::phy::{cqi_to_se, precoded_snr, shannon_se, sinr_to_cqi, CQI_TABLE};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn codebook() -> Codebook {
    Codebook::build(&CodebookConfig::default()).unwrap()
}

#[test]
fn multi_subband_selection_matches_exhaustive_search() {
    let cb = codebook();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let p = 10f64.powf(rng.random_range(-1.0..3.0));
        let hs: Vec<CMat> = (0..6)
            .map(|_| common::random_channel(&mut rng, 2, 8, p))
            .collect();
        let sel = ue_select_pmi(&hs, &cb, 1.0).unwrap();
        let (ri, pmi) = common::exhaustive_selection(&hs, &cb, 1.0);
        assert_eq!((sel.ri, &sel.pmi), (ri, &pmi));
        for (h, (&j, &se)) in hs.iter().zip(sel.pmi.iter().zip(&sel.se)) {
            let direct = common::direct_capacity(h, cb.get_pm(ri, j).unwrap(), 1.0);
            assert!((se - direct).abs() <= 1e-9 * direct.max(1.0));
        }
    }
}

#[test]
fn rank_one_channels_report_rank_one() {
    let cb = codebook();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let trials = 500;
    let mut ones = 0;
    for _ in 0..trials {
        let p = 10f64.powf(rng.random_range(0.0..3.0));
        let a = common::random_channel(&mut rng, 2, 1, 1.0);
        let b = common::random_channel(&mut rng, 1, 8, p);
        let h = a.matmul(&b);
        ones += usize::from(ue_select_pmi(&[h], &cb, 1.0).unwrap().ri == Rank::One);
    }
    assert!(ones * 100 >= trials * 95, "{ones}/{trials} rank-1 reports");
}

#[test]
fn rank_one_capacity_equals_single_layer_shannon_rate() {
    let cb = codebook();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let h = common::random_channel(&mut rng, 2, 8, 4.0);
    for w in cb.entries(Rank::One) {
        let snr = precoded_snr(&h, w, 0.5).unwrap();
        assert!((shannon_se(1, snr) - common::direct_capacity(&h, w, 0.5)).abs() < 1e-12);
    }
}

#[test]
fn cqi_table_matches_transcription() {
    let expected = [
        0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223,
        3.9023, 4.5234, 5.1152, 5.5547,
    ];
    let table: Vec<f64> = CQI_TABLE.iter().map(|e| e.efficiency).collect();
    assert_eq!(table, expected);
    assert_eq!(cqi_to_se(15).unwrap(), 5.5547);
    assert_eq!(cqi_to_se(0).unwrap(), 0.0);
    assert!(cqi_to_se(16).is_err());
}

#[test]
fn fading_has_unit_power_and_lag_one_correlation_rho() {
    let rho = 0.9;
    let f = FadingProcess::new(7, 0, rho, 2, 8);
    let (mut power, mut corr, mut n) = (0.0, C64::new(0.0, 0.0), 0.0);
    for ue in 0..200 {
        let mut prev = f.small_scale(ue, 0, 0, 0);
        for tti in 1..20 {
            let cur = f.small_scale(ue, 0, 0, tti);
            for (a, b) in prev.as_slice().iter().zip(cur.as_slice()) {
                power += b.norm_sqr();
                corr += a.conj() * b;
                n += 1.0;
            }
            prev = cur;
        }
    }
    let (power, corr) = (power / n, corr / n);
    // 60800 samples: standard errors are about 0.004.
    assert!((power - 1.0).abs() < 0.03, "power {power}");
    assert!(
        (corr.re - rho).abs() < 0.03 && corr.im.abs() < 0.03,
        "corr {corr}"
    );
}

#[test]
fn fading_entries_are_circular_gaussian() {
    let f = FadingProcess::new(8, 3, 0.0, 2, 8);
    let mut samples = Vec::new();
    for ue in 0..500 {
        samples.extend(f.small_scale(ue, 1, 2, 0).as_slice().iter().copied());
    }
    let n = samples.len() as f64;
    let mean: C64 = samples.iter().sum::<C64>() / n;
    let var_re = samples.iter().map(|z| z.re * z.re).sum::<f64>() / n;
    let var_im = samples.iter().map(|z| z.im * z.im).sum::<f64>() / n;
    let pseudo: C64 = samples.iter().map(|z| z * z).sum::<C64>() / n;
    assert!(mean.norm() < 0.05, "mean {mean}");
    assert!(
        (var_re - 0.5).abs() < 0.03 && (var_im - 0.5).abs() < 0.03,
        "{var_re} {var_im}"
    );
    assert!(pseudo.norm() < 0.05, "pseudo-covariance {pseudo}");
}

proptest! {
    #[test]
    fn cqi_mapping_never_overstates_capacity(x in 0.0f64..1e6) {
        let cqi = sinr_to_cqi(x).unwrap();
        prop_assert!(cqi_to_se(cqi).unwrap() <= (1.0 + x).log2());
        if cqi < 15 {
            prop_assert!(CQI_TABLE[cqi as usize].efficiency > (1.0 + x).log2());
        }
    }

    #[test]
    fn sinr_to_cqi_is_monotone(a in 0.0f64..1e4, b in 0.0f64..1e4) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(sinr_to_cqi(lo).unwrap() <= sinr_to_cqi(hi).unwrap());
    }
}
