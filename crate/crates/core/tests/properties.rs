use proptest::prelude::*;
use qmf_core::amplify;
use qmf_core::bank::{waveform, ChirpParams};
use qmf_core::dsp::{self, Psd};
use qmf_core::qsim::{self, RegisterLayout, StateVector, StringOracleSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counting_distribution_is_normalised_and_mirror_symmetric(
        log_n in 2u32..20,
        frac in 0.0f64..1.0,
        p in 1u32..12,
    ) {
        let n = 1u64 << log_n;
        let r = ((n as f64 * frac) as u64).min(n);
        let dist = amplify::counting_distribution(n, r, p).unwrap();
        let probs = dist.probs();
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "sum {total}");
        let m = probs.len();
        for b in 1..m {
            prop_assert!((probs[b] - probs[m - b]).abs() < 1e-12);
        }
        prop_assert!(probs.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn estimate_stays_within_bank(log_n in 1u32..30, p in 1u32..16, b_frac in 0.0f64..1.0) {
        let n = 1u64 << log_n;
        let b = ((1u64 << p) as f64 * b_frac) as u64;
        let est = amplify::estimate_from_b(b, p, n).unwrap();
        prop_assert!(est.r_star <= n);
        prop_assert_eq!(est.detected(), b != 0);
        prop_assert_eq!(est.k_star.is_some(), b != 0);
    }

    #[test]
    fn normalisation_is_idempotent(f0 in 10.0f64..35.0, f1 in 0.0f64..25.0, phi0 in 0.0f64..6.0) {
        let fs = 128.0;
        let m = 256;
        let w = waveform(&ChirpParams { f0, f1, dur: 1.0, phi0 }, fs, m).unwrap();
        let psd = Psd::white(2.0 / fs, 1.0 / fs, m).unwrap();
        let once = dsp::normalize_template(&dsp::forward_fft(&w), &psd).unwrap();
        prop_assert!((dsp::template_energy(&once, &psd).unwrap() - 1.0).abs() < 1e-12);
        let twice = dsp::normalize_template(&once, &psd).unwrap();
        for (a, b) in once.bins().iter().zip(twice.bins()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn peak_snr_does_not_depend_on_signal_phase(f0 in 15.0f64..30.0, f1 in 0.0f64..20.0, phi in 0.0f64..std::f64::consts::TAU) {
        let fs = 128.0;
        let m = 256;
        let template = ChirpParams { f0, f1, dur: 1.0, phi0: 0.0 };
        let psd = Psd::white(2.0 / fs, 1.0 / fs, m).unwrap();
        let qc = dsp::complex_template(&template, fs, m, &psd).unwrap();
        let peak = |phi0: f64| {
            let h = waveform(&ChirpParams { phi0, ..template }, fs, m).unwrap();
            dsp::max_snr(&dsp::snr_series(&dsp::forward_fft(&h), &qc, &psd).unwrap()).0
        };
        let (base, shifted) = (peak(0.0), peak(phi));
        prop_assert!((shifted / base - 1.0).abs() < 1e-2, "{base} vs {shifted}");
    }

    #[test]
    fn grover_iterations_preserve_norm(bits in "[01]{2,6}", q_frac in 0.0f64..1.0, k in 0u32..6) {
        let q = ((bits.len() - 1) as f64 * q_frac) as usize;
        let spec = StringOracleSpec::parse(&bits, q).unwrap();
        let layout = RegisterLayout::new(spec.n(), 0);
        let mut state = qsim::init_state(&layout).unwrap();
        for _ in 0..k {
            qsim::grover_iteration(&mut state, &layout, &spec).unwrap();
        }
        prop_assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_qft_undoes_qft(re in prop::collection::vec(-1.0f64..1.0, 16), im in prop::collection::vec(-1.0f64..1.0, 16)) {
        let amps: Vec<_> = re.iter().zip(&im).map(|(&a, &b)| num_complex::Complex64::new(a, b)).collect();
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let amps: Vec<_> = amps.iter().map(|z| z / norm).collect();
        let mut state = StateVector::from_amplitudes(amps.clone()).unwrap();
        qsim::qft(&mut state, 0..4).unwrap();
        qsim::inverse_qft(&mut state, 0..4).unwrap();
        for (a, b) in state.amplitudes().iter().zip(&amps) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }
}
