use calibfuse_core::calibration::io::{read_samples, write_samples, CalibratorDocument};
use calibfuse_core::calibration::{
    bce_loss, dbs, expected_calibration_error, fit, reliability, FitOptions, Objective, SCORE_CLAMP,
};
use calibfuse_core::{CalibrationSample, Calibrator, CalibratorKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample_from(n: usize, seed: u64, truth: impl Fn(f64) -> f64) -> Vec<CalibrationSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let s: f64 = rng.random();
            CalibrationSample::new(s, rng.random::<f64>() < truth(s)).unwrap()
        })
        .collect()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    for kind in [CalibratorKind::Dbs, CalibratorKind::Platt, CalibratorKind::Temperature] {
        for point in 0..100 {
            let data: Vec<CalibrationSample> = (0..50)
                .map(|_| CalibrationSample::new(rng.random_range(0.01..0.99), rng.random_bool(0.5)).unwrap())
                .collect();
            let obj = Objective::new(kind, &data, SCORE_CLAMP).unwrap();
            let params: Vec<f64> = (0..kind.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, grad) = obj.evaluate(&params);
            for k in 0..params.len() {
                let mut up = params.clone();
                let mut down = params.clone();
                up[k] += h;
                down[k] -= h;
                let fd = (obj.loss(&up) - obj.loss(&down)) / (2.0 * h);
                let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-4, "{kind} point {point} param {k}: analytic {} vs fd {fd}", grad[k]);
            }
        }
    }
}

proptest! {
    #[test]
    fn dbs_is_monotone_and_doubly_bounded(a in 0.05..20.0f64, b in 0.05..20.0f64, s1 in 0.0..1.0f64, s2 in 0.0..1.0f64) {
        let c = Calibrator::dbs(a, b).unwrap();
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(c.apply(lo) <= c.apply(hi));
        prop_assert!((0.0..=1.0).contains(&c.apply(lo)));
        prop_assert_eq!(c.apply(0.0), 0.0);
        prop_assert_eq!(c.apply(1.0), 1.0);
    }

    #[test]
    fn dbs_is_strictly_increasing_inside(a in 0.2..5.0f64, b in 0.2..5.0f64, s in 0.05..0.94f64) {
        let c = Calibrator::dbs(a, b).unwrap();
        prop_assert!(c.apply(s) < c.apply(s + 1e-3));
    }

    #[test]
    fn dbs_preserves_ranks(a in 0.2..5.0f64, b in 0.2..5.0f64, ks in prop::collection::vec(1u32..1000, 1..40)) {
        let c = Calibrator::dbs(a, b).unwrap();
        let raw: Vec<f64> = ks.iter().map(|&k| k as f64 / 1000.0).collect();
        let cal = c.apply_all(&raw);
        let mut by_raw: Vec<usize> = (0..raw.len()).collect();
        by_raw.sort_by(|&i, &j| raw[i].total_cmp(&raw[j]));
        let mut by_cal: Vec<usize> = (0..raw.len()).collect();
        by_cal.sort_by(|&i, &j| cal[i].total_cmp(&cal[j]));
        prop_assert_eq!(by_raw, by_cal);
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                prop_assert_eq!(raw[i] == raw[j], cal[i] == cal[j]);
            }
        }
    }

    #[test]
    fn every_family_is_monotone(a in 0.05..10.0f64, b in -3.0..3.0f64, s1 in 0.0..1.0f64, s2 in 0.0..1.0f64) {
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        for c in [Calibrator::platt(a, b).unwrap(), Calibrator::temperature(a).unwrap(), Calibrator::identity()] {
            prop_assert!(c.apply(lo) <= c.apply(hi));
        }
    }
}

#[test]
fn family_contains_the_identity() {
    let c = Calibrator::dbs(1.0, 1.0).unwrap();
    for k in 0..=100 {
        let s = k as f64 / 100.0;
        assert!((c.apply(s) - s).abs() < 1e-15);
    }
}

#[test]
fn inverse_sigmoid_shape_at_point_four() {
    let c = |s: f64| dbs(s, 0.4, 0.4);
    let h = 1e-4;
    let grid: Vec<f64> = (1..1000).map(|k| k as f64 / 1000.0).filter(|s| *s > 2.0 * h && *s < 1.0 - 2.0 * h).collect();
    let curvature: Vec<f64> = grid.iter().map(|&s| c(s + h) - 2.0 * c(s) + c(s - h)).collect();
    let sign_changes = curvature.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count();
    assert_eq!(sign_changes, 1, "a single inflection");
    assert!(curvature[0] < 0.0, "concave first");
    assert!(*curvature.last().unwrap() > 0.0, "convex last");

    // bisection for the interior fixed point c(s) = s
    let (mut lo, mut hi) = (0.1, 0.9);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if c(mid) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let fixed = 0.5 * (lo + hi);
    for &s in &grid {
        if s < fixed - 1e-6 {
            assert!(c(s) > s, "above the diagonal below the fixed point at {s}");
        } else if s > fixed + 1e-6 {
            assert!(c(s) < s, "below the diagonal above the fixed point at {s}");
        }
    }
}

#[test]
fn recovers_a_known_dbs_truth() {
    // labels ~ Bernoulli(DBS(s; a*, b*))
    let (a_star, b_star): (f64, f64) = (0.6, 1.8);
    let data = sample_from(100_000, 17, |s| dbs(s, a_star, b_star));
    let fitted = fit(CalibratorKind::Dbs, &data, &FitOptions::default()).unwrap();
    let c = fitted.calibrator;
    assert!((c.a().ln() - a_star.ln()).abs() < 0.1, "a = {}", c.a());
    assert!((c.b().ln() - b_star.ln()).abs() < 0.1, "b = {}", c.b());
}

#[test]
fn calibrated_scores_have_small_ece() {
    let data = sample_from(100_000, 4, |s| s);
    let ece = expected_calibration_error(&data, &Calibrator::identity(), 10).unwrap();
    assert!(ece < 0.02, "{ece}");
}

#[test]
fn fitting_calibrated_data_stays_near_identity() {
    let train = sample_from(20_000, 5, |s| s);
    let test = sample_from(20_000, 6, |s| s);
    let fitted = fit(CalibratorKind::Dbs, &train, &FitOptions::default()).unwrap();
    let after = expected_calibration_error(&test, &fitted.calibrator, 10).unwrap();
    let before = expected_calibration_error(&test, &Calibrator::identity(), 10).unwrap();
    assert!((after - before).abs() < 0.02, "{before} vs {after}");
    assert!(fitted.calibrator.a().ln().abs() < 0.1 && fitted.calibrator.b().ln().abs() < 0.1);
}

#[test]
fn squared_miscalibration_is_corrected_on_held_out_data() {
    let train = sample_from(20_000, 7, |s| s * s);
    let test = sample_from(20_000, 8, |s| s * s);
    for kind in [CalibratorKind::Dbs, CalibratorKind::Platt] {
        let fitted = fit(kind, &train, &FitOptions::default()).unwrap();
        let after = expected_calibration_error(&test, &fitted.calibrator, 10).unwrap();
        let before = expected_calibration_error(&test, &Calibrator::identity(), 10).unwrap();
        assert!(after < before, "{kind}: {before} -> {after}");
        if kind == CalibratorKind::Dbs {
            for s in [0.1, 0.3, 0.5, 0.7, 0.9] {
                assert!(fitted.calibrator.apply(s) < s);
            }
        }
    }
}

#[test]
fn temperature_fit_keeps_zero_bias() {
    let data = sample_from(5_000, 9, |s| s * s);
    let fitted = fit(CalibratorKind::Temperature, &data, &FitOptions::default()).unwrap();
    assert_eq!(fitted.calibrator.b(), 0.0);
    assert!(bce_loss(&fitted.calibrator, &data).unwrap() <= bce_loss(&Calibrator::temperature(1.0).unwrap(), &data).unwrap());
}

#[test]
fn reliability_bins_account_for_every_sample() {
    let data = sample_from(10_000, 10, |s| s.sqrt());
    let cal = Calibrator::dbs(0.7, 1.3).unwrap();
    let d = reliability(&data, &cal, 15).unwrap();
    assert_eq!(d.bin_count.iter().sum::<usize>(), data.len());
    let weighted: f64 = (0..d.num_bins())
        .map(|k| d.bin_count[k] as f64 * (d.bin_confidence[k] - d.bin_accuracy[k]).abs())
        .sum::<f64>()
        / data.len() as f64;
    assert!((weighted - d.ece).abs() < 1e-12);
}

#[test]
fn samples_and_documents_round_trip() {
    let data = sample_from(100, 12, |s| s);
    let mut buf = Vec::new();
    write_samples(&mut buf, &data).unwrap();
    let back = read_samples(buf.as_slice()).unwrap();
    assert_eq!(back.len(), data.len());
    for (x, y) in data.iter().zip(&back) {
        assert_eq!(x.label, y.label);
        assert!((x.raw_score - y.raw_score).abs() <= 1e-8 * x.raw_score.abs());
    }

    let fitted = fit(CalibratorKind::Dbs, &data, &FitOptions::default()).unwrap();
    let doc = CalibratorDocument::from_fitted(&fitted);
    let parsed = CalibratorDocument::from_toml(&doc.to_toml()).unwrap();
    assert_eq!(parsed, doc);
    let c = parsed.calibrator().unwrap();
    assert!((c.apply(0.4) - fitted.calibrator.apply(0.4)).abs() < 1e-8);
}

#[test]
fn fit_ignores_sample_order() {
    use rand::seq::SliceRandom;
    let mut data = sample_from(5_000, 14, |s| s * s);
    let before = fit(CalibratorKind::Dbs, &data, &FitOptions::default()).unwrap();
    data.shuffle(&mut ChaCha8Rng::seed_from_u64(15));
    let after = fit(CalibratorKind::Dbs, &data, &FitOptions::default()).unwrap();
    assert_eq!(before, after);
}
