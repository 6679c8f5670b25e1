use fbt_core::corpus;
use fbt_core::voice::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blobs(seed: u64, n: usize, centers: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|i| {
            let c = centers[i % centers.len()];
            vec![c.0 + unit.sample(&mut rng), c.1 + 0.5 * unit.sample(&mut rng)]
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn em_never_decreases_likelihood(seed in any::<u64>(), k in 1usize..=3) {
        let data = blobs(seed, 200, &[(-4.0, 0.0), (3.0, 2.0), (0.0, -5.0)]);
        let mut prev = f64::NEG_INFINITY;
        let mut ok = true;
        em_fit_observed(&data, k, &EmOptions { max_iters: 50, tol: 0.0, seed }, |s| {
            ok &= s.log_likelihood >= prev - 1e-9;
            ok &= (s.model.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
            ok &= s.responsibilities.iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prev = s.log_likelihood;
        })
        .unwrap();
        prop_assert!(ok);
    }

    #[test]
    fn log_sum_exp_matches_naive(v in proptest::collection::vec(-30.0f64..30.0, 1..20), shift in -600.0f64..600.0) {
        let naive = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((log_sum_exp(&v) - naive).abs() <= 1e-9);
        // shifting every term shifts the result without overflow
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        prop_assert!((log_sum_exp(&shifted) - naive - shift).abs() <= 1e-9 * (1.0 + shift.abs()));
    }

    #[test]
    fn power_spectrum_matches_naive_dft(seed in any::<u64>()) {
        let cfg = FeatureConfig::default();
        let fx = FeatureExtractor::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame: Vec<f64> = (0..cfg.frame_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = fx.power_spectrum(&frame);
        let n = cfg.frame_len as f64;
        for k in (0..=cfg.frame_len / 2).step_by(37) {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, x) in frame.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * k as f64 * t as f64 / n;
                re += x * a.cos();
                im += x * a.sin();
            }
            prop_assert!((fast[k] - (re * re + im * im)).abs() <= 1e-8 * (1.0 + fast[k]));
        }
    }
}

#[test]
fn dct_basis_is_orthonormal() {
    let g = dct_matrix(26, 26);
    for (i, a) in g.iter().enumerate() {
        for (j, b) in g.iter().enumerate() {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((dot - expected).abs() < 1e-12, "rows {i},{j}: {dot}");
        }
    }
}

#[test]
fn mel_scale_roundtrip() {
    for f in [0.0, 100.0, 700.0, 1000.0, 4000.0, 8000.0] {
        assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
    }
    assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.5);
}

#[test]
fn mfcc_shape_and_silence_floor() {
    let cfg = FeatureConfig::default();
    let fx = FeatureExtractor::new(&cfg).unwrap();
    let silent = AudioSignal::new(vec![0.0; 16_000], 16_000).unwrap();
    let m = fx.mfcc(&silent).unwrap();
    assert_eq!(m.len(), (16_000 - cfg.frame_len) / cfg.hop + 1);
    assert!(m.iter().all(|row| row.len() == cfg.n_mfcc));
    // all energies hit the floor, so only c0 is non-zero
    let c0 = LOG_FLOOR.ln() * (cfg.n_mels as f64).sqrt();
    assert!((m[0][0] - c0).abs() < 1e-9);
    assert!(m[0][1..].iter().all(|c| c.abs() < 1e-9));
}

#[test]
fn pure_tone_pitch() {
    let cfg = FeatureConfig::default();
    let frame: Vec<f64> = (0..cfg.frame_len).map(|n| (2.0 * std::f64::consts::PI * n as f64 / 80.0).sin()).collect();
    assert_eq!(pitch_period(&frame, &cfg), Some(80));
    assert_eq!(pitch_period(&vec![0.0; cfg.frame_len], &cfg), None);
}

#[test]
fn wav_roundtrip() {
    let sig = AudioSignal::new((0..1000).map(|i| ((i % 50) as f64 - 25.0) / 50.0).collect(), 16_000).unwrap();
    let back = AudioSignal::from_wav_bytes(&sig.to_wav_bytes()).unwrap();
    assert_eq!(back.sample_rate(), 16_000);
    for (a, b) in sig.samples().iter().zip(back.samples()) {
        assert!((a - b).abs() < 1.0 / 16_000.0);
    }
}

#[test]
fn synthetic_speakers_are_told_apart() {
    let cfg = FeatureConfig::default();
    let fx = FeatureExtractor::new(&cfg).unwrap();
    let users = corpus::generate(3, 5);
    let mut db = EnrollmentDb::in_memory();
    for (i, u) in users.iter().enumerate() {
        let e = enroll(&format!("user{i}"), &[u.registration_audio()], &cfg, &EnrollConfig::default()).unwrap();
        assert!(e.frames > 100);
        db.insert(e, false).unwrap();
    }
    for (i, u) in users.iter().enumerate() {
        let d = authenticate(&u.login_audio(0), &db, &fx, &AuthConfig { tau: f64::NEG_INFINITY, ..AuthConfig::default() }).unwrap();
        assert_eq!(d.best_user, format!("user{i}"), "scores {:?}", d.scores);
    }
}

#[test]
fn enrollment_db_persists_and_rejects_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = FeatureConfig::default();
    let u = &corpus::generate(1, 2)[0];
    let e = enroll("solo", &[u.registration_audio()], &cfg, &EnrollConfig::default()).unwrap();
    {
        let mut db = EnrollmentDb::open(dir.path()).unwrap();
        db.insert(e.clone(), false).unwrap();
        assert!(matches!(db.insert(e.clone(), false), Err(VoiceError::DuplicateUser(_))));
        db.insert(e.clone(), true).unwrap();
    }
    let db = EnrollmentDb::open(dir.path()).unwrap();
    assert_eq!(db.get("solo"), Some(&e));
}

#[test]
fn decide_uses_strict_threshold_and_argmax() {
    let scores = |a: f64, b: f64| [("a".to_string(), a), ("b".to_string(), b)].into_iter().collect();
    let d = decide(scores(-5.0, -2.0), -2.0).unwrap();
    assert_eq!(d.best_user, "b");
    assert_eq!(d.accepted_user, None);
    let d = decide(scores(-5.0, -1.9), -2.0).unwrap();
    assert_eq!(d.accepted_user.as_deref(), Some("b"));
    // ties go to the smaller id
    assert_eq!(decide(scores(1.0, 1.0), 0.0).unwrap().best_user, "a");
    assert!(decide(Default::default(), 0.0).is_err());
}

#[test]
fn mllr_scalar_doubling() {
    let model = GmmModel::new(vec![1.0], vec![vec![1.0]], vec![vec![1.0]]).unwrap();
    let out = adapt_mllr_features(&model, &[vec![1.0], vec![-1.0]]).unwrap();
    assert_eq!(out.model.means, vec![vec![2.0]]);
    assert_eq!(out.transform[(0, 0)], 2.0);
}

#[test]
fn bic_prefers_true_component_count() {
    let data = blobs(1, 600, &[(-6.0, 0.0), (6.0, 0.0)]);
    let sel = select_k(&data, &[1, 2, 3], Criterion::Bic, &EmOptions::default()).unwrap();
    assert_eq!(sel.k, 2);
    assert_eq!(sel.scores.len(), 3);
}
