use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use bosonic::characterization::{fit_populations, sideband_signal, FitConfig, PopulationDistribution, SidebandKind, SidebandSignal};
use bosonic::fock::{amplitude_encode, hs_distance, inner_product, overlap_exact, MotionalState, RealFeatureVector};
use bosonic::pulse::{BeamSplitterSpec, CompositeState, Spin};
use bosonic::swap_test::{swap_probability_g, swap_test_exact};
use bosonic::synthesis::{synthesize, verify_schedule};

fn state(max_dim: usize) -> impl Strategy<Value = MotionalState> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..=max_dim)
        .prop_filter("non-zero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
        .prop_map(|v| MotionalState::new(v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap())
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pulses_preserve_norm(s in state(6), ops in prop::collection::vec((0usize..2, 0.0f64..TAU, 0.0f64..TAU), 1..12)) {
        let mut psi = CompositeState::product(Spin::G, &[&s]).unwrap();
        for (kind, angle, phase) in ops {
            psi = match kind {
                0 => psi.apply_carrier(angle, phase),
                _ => psi.apply_red_sideband(angle, phase, 0).unwrap(),
            };
        }
        prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cbs_angles_compose(a in state(3), b in state(3), t1 in 0.0..PI, t2 in 0.0..PI, psi in 0.0..TAU) {
        let start = CompositeState::product_padded(Spin::G, &[&a, &b], &[5, 5]).unwrap().apply_carrier(PI / 2.0, 0.3);
        let two = start
            .apply_cbs(&BeamSplitterSpec::new(t1, psi, (0, 1))).unwrap()
            .apply_cbs(&BeamSplitterSpec::new(t2, psi, (0, 1))).unwrap();
        let one = start.apply_cbs(&BeamSplitterSpec::new(t1 + t2, psi, (0, 1))).unwrap();
        prop_assert!(max_diff(two.amplitudes(), one.amplitudes()) < 1e-10);
    }

    #[test]
    fn cbs_conserves_pair_phonons(a in state(3), b in state(3), c in state(2), theta in 0.0..TAU, psi in 0.0..TAU) {
        let start = CompositeState::product_padded(Spin::G, &[&a, &b, &c], &[5, 5, 2]).unwrap().apply_carrier(1.1, 0.4);
        let out = start.apply_cbs(&BeamSplitterSpec::new(theta, psi, (0, 1))).unwrap();
        let before = start.pair_total_distribution(0, 1).unwrap();
        let after = out.pair_total_distribution(0, 1).unwrap();
        for (x, y) in before.iter().zip(&after) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert_eq!(start.mode_populations(2).unwrap().len(), out.mode_populations(2).unwrap().len());
    }

    #[test]
    fn encoding_is_scale_invariant(x in prop::collection::vec(-5.0f64..5.0, 1..8), scale in 0.01f64..100.0) {
        prop_assume!(x.iter().any(|v| v.abs() > 1e-3));
        let e1 = amplitude_encode(&RealFeatureVector::new(x.clone()).unwrap());
        let up: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let e2 = amplitude_encode(&RealFeatureVector::new(up).unwrap());
        prop_assert!(max_diff(e1.amplitudes(), e2.amplitudes()) < 1e-12);
        let down: Vec<f64> = x.iter().map(|v| -v * scale).collect();
        let e3 = amplitude_encode(&RealFeatureVector::new(down).unwrap());
        prop_assert!(max_diff(e1.amplitudes(), e3.amplitudes()) < 1e-12);
    }

    #[test]
    fn overlap_symmetric_and_phase_blind(a in state(7), b in state(7), phi in 0.0..TAU) {
        let o = overlap_exact(&a, &b);
        prop_assert!((o - overlap_exact(&b, &a)).abs() < 1e-14);
        let rotated = MotionalState::normalized_raw(a.amplitudes().iter().map(|c| c * C64::from_polar(1.0, phi)).collect()).unwrap();
        prop_assert!((overlap_exact(&rotated, &b) - o).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&o));
        prop_assert!((hs_distance(&a, &b) - (2.0 - 2.0 * o).max(0.0).sqrt()).abs() < 1e-12);
        let s1 = swap_test_exact(&a, &b).unwrap().estimate;
        let s2 = swap_test_exact(&b, &a).unwrap().estimate;
        prop_assert!((s1 - s2).abs() < 1e-10 && (s1 - o).abs() < 1e-9);
    }

    #[test]
    fn common_free_evolution_keeps_overlap(a in state(6), b in state(6), omega in 1e5f64..1e7, t in 0.0f64..1e-4) {
        let o = overlap_exact(&a, &b);
        let oe = overlap_exact(&a.free_evolve(omega, t), &b.free_evolve(omega, t));
        prop_assert!((o - oe).abs() < 1e-12);
        prop_assert!((inner_product(&a, &a.free_evolve(omega, 0.0)) - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn swap_test_ignores_spin_basis_phase(a in state(4), b in state(4), psi_s in 0.0..TAU) {
        let p0 = swap_probability_g(&a, &b, 0.0).unwrap();
        let p1 = swap_probability_g(&a, &b, psi_s).unwrap();
        prop_assert!((p0 - p1).abs() < 1e-10);
    }

    #[test]
    fn sideband_signal_in_unit_interval(w in prop::collection::vec(0.0f64..1.0, 7), gamma in 0.0f64..1e4, blue in any::<bool>()) {
        prop_assume!(w.iter().sum::<f64>() > 1e-3);
        let s: f64 = w.iter().sum();
        let p = PopulationDistribution::new(w.iter().map(|x| x / s).collect()).unwrap();
        let taus: Vec<f64> = (0..50).map(|i| i as f64 * 4e-6).collect();
        let kind = if blue { SidebandKind::Blue } else { SidebandKind::Red };
        let sig = sideband_signal(&p, TAU * 1e4, gamma, &taus, kind).unwrap();
        prop_assert!(sig.pe.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn fit_always_feasible(pe in prop::collection::vec(0.0f64..1.0, 40), blue in any::<bool>()) {
        let omega = TAU * 1e4;
        let taus: Vec<f64> = (0..40).map(|i| i as f64 * 3.0 * TAU / omega / 39.0).collect();
        let signal = SidebandSignal {
            taus,
            pe,
            kind: if blue { SidebandKind::Blue } else { SidebandKind::Red },
            omega_rsb: omega,
            gamma: 0.0,
            shots: None,
        };
        let fit = fit_populations(&signal, &FitConfig::fixed(omega, 0.0)).unwrap();
        let p = fit.populations.probabilities();
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn synthesis_round_trip(t in state(8)) {
        prop_assume!(t.dim() >= 2);
        let s = synthesize(&t).unwrap();
        prop_assert_eq!(s.pairs(), t.dim() - 1);
        let r = verify_schedule(&s, &t).unwrap();
        prop_assert!(r.prob_g >= 1.0 - 1e-9 && r.overlap >= 1.0 - 1e-9, "{:?}", r);
    }
}
