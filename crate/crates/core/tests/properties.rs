//! Property tests over randomized inputs.

use num_complex::Complex64;
use pcsqam::constellation::{apply_maxwell_boltzmann, build_qam, ShapedConstellation};
use pcsqam::metrics::air_from_llrs;
use pcsqam::rxdsp::{bcjr_detect, estimate_preq_alpha, soft_demap, BcjrOptions, PartialResponseModel};
use pcsqam::shaping::{ccdm_decode, ccdm_encode, fec_margin, label_bits, rate_budget, Composition};
use proptest::prelude::*;

const ORDERS: [usize; 5] = [4, 16, 64, 256, 400];

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| Complex64::new(a, b)), n)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn shaped_probabilities_are_symmetric(oi in 0usize..5, nu in 0.0f64..3.0) {
        let c = build_qam(ORDERS[oi]).unwrap();
        let s = apply_maxwell_boltzmann(&c, nu).unwrap();
        let energy: f64 = s.points().iter().zip(s.probs()).map(|(p, q)| q * p.norm_sqr()).sum();
        prop_assert!((energy - 1.0).abs() < 1e-12);
        prop_assert!((s.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (i, p) in s.points().iter().enumerate() {
            for target in [-p, p.conj()] {
                let j = s.points().iter().position(|q| (q - target).norm() < 1e-9).unwrap();
                prop_assert!((s.probs()[i] - s.probs()[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ccdm_roundtrip(counts in prop::collection::vec(0usize..6, 2..6), seed in any::<u64>()) {
        prop_assume!(counts.iter().sum::<usize>() > 0);
        let comp = Composition::new(counts.clone());
        let bits: Vec<u8> = (0..comp.input_bits()).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        let seq = ccdm_encode(&bits, &comp).unwrap();
        let mut seen = vec![0; counts.len()];
        seq.iter().for_each(|&s| seen[s] += 1);
        prop_assert_eq!(&seen, &counts);
        prop_assert_eq!(ccdm_decode(&seq, &comp).unwrap(), bits);
    }

    #[test]
    fn rate_budget_monotonicity(rs in 10e9f64..200e9, h in 4.0f64..8.0, oh in 0.0f64..0.2) {
        let a = rate_budget(rs, h, 8, oh, None).unwrap().net_tbps;
        let doubled = rate_budget(2.0 * rs, h, 8, oh, None).unwrap().net_tbps;
        prop_assert!((doubled - 2.0 * a).abs() < 1e-9);
        prop_assert!(rate_budget(rs, h, 8, oh + 0.05, None).unwrap().net_tbps < a);
        prop_assert!(rate_budget(rs, h, 10, oh + 0.01, None).unwrap().net_tbps < a);
        prop_assert!(fec_margin(2.0, 1.5, 8) > fec_margin(2.0, 1.5, 10));
    }

    #[test]
    fn air_is_bounded(oi in 0usize..3, sigma2 in 0.001f64..2.0, y in complex_vec(256)) {
        let s = ShapedConstellation::uniform(&build_qam(ORDERS[oi]).unwrap());
        let tx: Vec<usize> = (0..y.len()).map(|k| (k * 7) % s.order()).collect();
        let llrs = soft_demap(&y, &s, sigma2).unwrap().with_bits(label_bits(&s, &tx)).unwrap();
        let air = air_from_llrs(&llrs, &s).unwrap();
        prop_assert!(air >= 0.0 && air <= s.entropy() + 1e-12);
    }

    #[test]
    fn bcjr_posteriors_sum_to_one(alpha in -0.9f64..0.9, sigma2 in 0.01f64..1.0, z in complex_vec(40)) {
        let s = ShapedConstellation::uniform(&build_qam(16).unwrap());
        let out = bcjr_detect(&z, &PartialResponseModel { alpha, sigma2 }, &s, BcjrOptions::default()).unwrap();
        for k in 0..z.len() {
            prop_assert!((out.posterior(k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn preq_alpha_is_scale_invariant(e in complex_vec(200), scale in 0.01f64..100.0) {
        let a = estimate_preq_alpha(&e).unwrap();
        let scaled: Vec<Complex64> = e.iter().map(|v| v * scale).collect();
        let b = estimate_preq_alpha(&scaled).unwrap();
        prop_assert!((a.alpha - b.alpha).abs() < 1e-9);
    }
}
