mod common;

use common::*;
use fabricore::assets;
use fabricore::retarget::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn bundled() -> DMatrix<f64> {
    read_dataset_csv(assets::HAND_DATASET).unwrap()
}

/// Eigenvalues of the `1/N` covariance from the singular values of the centred data.
fn svd_spectrum(data: &DMatrix<f64>) -> Vec<f64> {
    let mean = data.row_mean();
    let mut c = data.clone();
    for mut r in c.row_iter_mut() {
        r -= &mean;
    }
    let mut s: Vec<f64> = c.svd(false, false).singular_values.iter().map(|v| v * v / data.nrows() as f64).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

#[test]
fn bundled_basis_orthonormal_and_sorted() {
    let basis = PcaBasis::from_json_str(assets::HAND_BASIS).unwrap();
    let a = basis.components();
    assert!((a * a.transpose() - DMatrix::identity(5, 5)).amax() <= 1e-10);
    let ev = basis.eigenvalues();
    assert!(ev.iter().zip(ev.iter().skip(1)).all(|(x, y)| x >= y));
    assert!(ev.iter().all(|v| *v >= -1e-10));
}

#[test]
fn bundled_dataset_variance_ratio() {
    let fitted = fit_pca(&bundled(), 5).unwrap();
    assert!(fitted.explained_variance_ratio() >= 0.90);
    let shipped = PcaBasis::from_json_str(assets::HAND_BASIS).unwrap();
    assert!((fitted.components() - shipped.components()).amax() < 1e-9);
}

#[test]
fn reconstruction_error_is_discarded_spectrum() {
    let data = bundled();
    let spectrum = svd_spectrum(&data);
    for k in [1, 3, 5, 10] {
        let basis = fit_pca(&data, k).unwrap();
        let discarded: f64 = spectrum[k..].iter().sum();
        assert!((basis.reconstruction_error(&data) - discarded).abs() <= 1e-8, "k={k}");
    }
}

#[test]
fn collinear_samples_have_one_component() {
    let dir = DVector::from_fn(16, |i, _| (i as f64 + 1.0).sin()).normalize();
    let data = DMatrix::from_fn(50, 16, |r, c| 0.2 + (r as f64 - 25.0) * 0.01 * dir[c]);
    let basis = fit_pca(&data, 5).unwrap();
    assert!((basis.explained_variance_ratio() - 1.0).abs() < 1e-12);
    assert!((basis.components().row(0).transpose().dot(&dir).abs() - 1.0).abs() < 1e-10);
}

#[test]
fn isotropic_samples_spread_evenly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = DMatrix::from_fn(100_000, 16, |_, _| StandardNormal.sample(&mut rng));
    let ratio = fit_pca(&data, 5).unwrap().explained_variance_ratio();
    assert!((ratio - 5.0 / 16.0).abs() < 0.02, "ratio {ratio}");
}

#[test]
fn fit_rejects_bad_shapes() {
    assert!(fit_pca(&DMatrix::zeros(3, 16), 5).is_err());
    assert!(fit_pca(&DMatrix::zeros(10, 16), 0).is_err());
    assert!(fit_pca(&DMatrix::zeros(10, 4), 5).is_err());
}

#[test]
fn adam_finds_quadratic_minimum() {
    let cfg = AdamConfig { lr: 0.1, iterations: 500, ..Default::default() };
    let best = adam_minimize(|x: &[f64]| (x[0] - 3.0).powi(2), &[0.0], &cfg).unwrap();
    assert!((best.x[0] - 3.0).abs() < 1e-3);
    assert!(adam_minimize(|_: &[f64]| f64::NAN, &[0.0], &cfg).is_err());
}

#[test]
fn blend_endpoints() {
    assert_eq!(blend_factor(0, 2), 0.5);
    assert_eq!(blend_factor(1, 2), 0.0);
}

fn retarget_setup() -> (RetargetHand, RetargetConfig) {
    let cfg = RetargetConfig { adam: AdamConfig { iterations: 60, ..Default::default() }, ..Default::default() };
    (RetargetHand::new(hand(), &cfg).unwrap(), cfg)
}

#[test]
fn loss_endpoints() {
    let (hand, cfg) = retarget_setup();
    let q_free = DVector::from_element(16, 0.2);
    let x_r = hand.fingertips(&saturate(&q_free, hand.lower(), hand.upper()));
    let mut x_h = [0.0; 12];
    for i in 0..12 {
        x_h[i] = x_r[i] / cfg.scale;
    }
    let no_reg = RetargetConfig { lambda: 0.0, ..cfg.clone() };
    assert!(retarget_loss(&q_free, &x_h, 1.0, GripType::Power, &no_reg, &hand) < 1e-24);
    let focal = no_reg.focal(GripType::Power);
    let closure: f64 = (0..12).map(|i| (x_r[i] - focal[i % 3]).powi(2)).sum();
    let l0 = retarget_loss(&q_free, &x_h, 0.0, GripType::Power, &no_reg, &hand);
    assert!((l0 - closure).abs() < 1e-12);
}

#[test]
fn constant_trace_is_stable() {
    let (hand, _) = retarget_setup();
    let cfg = RetargetConfig::default();
    let tips = hand.fingertips(&DVector::from_element(16, 0.4));
    let mut p = [0.0; 12];
    for i in 0..12 {
        p[i] = tips[i] / cfg.scale;
    }
    // the blend still moves the optimum toward the closure target, so the
    // trace needs enough frames for that drift to be gradual
    let trace = HumanGraspTrace { grip_type: GripType::Precision, points: vec![p; 64] };
    let out = retarget_trace(&trace, &hand, &cfg).unwrap();
    let d: Vec<f64> = (1..out.nrows()).map(|r| (out.row(r) - out.row(r - 1)).amax()).collect();
    assert!(d.iter().all(|v| *v < 0.05));
}

#[test]
fn synthetic_traces_retarget_within_limits() {
    let (hand, cfg) = retarget_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let synth = synth::SynthConfig { traces_per_grip: 1, frames: 6, ..Default::default() };
    for trace in synth::synthetic_traces(&mut rng, &hand, &cfg, &synth) {
        let out = retarget_trace(&trace, &hand, &cfg).unwrap();
        for row in out.row_iter() {
            for j in 0..16 {
                assert!(row[j] > hand.lower()[j] && row[j] < hand.upper()[j]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn saturate_interior_and_monotone(q in sym_vec(16, 15.0), dq in unit_vec(16)) {
        let m = hand();
        let (lo, hi) = (m.lower_limits(), m.upper_limits());
        let q = DVector::from_column_slice(&q);
        let a = saturate(&q, lo, hi);
        let b = saturate(&(&q + DVector::from_column_slice(&dq)), lo, hi);
        for j in 0..16 {
            prop_assert!(a[j] >= lo[j] && a[j] <= hi[j]);
            prop_assert!(b[j] >= a[j]);
        }
    }

    #[test]
    fn saturate_strict_for_moderate_inputs(q in sym_vec(16, 5.0)) {
        let m = hand();
        let a = saturate(&DVector::from_column_slice(&q), m.lower_limits(), m.upper_limits());
        for j in 0..16 {
            prop_assert!(a[j] > m.lower_limits()[j] && a[j] < m.upper_limits()[j]);
        }
    }

    #[test]
    fn saturate_derivative_matches_differences(q in sym_vec(16, 3.0)) {
        let m = hand();
        let (lo, hi) = (m.lower_limits(), m.upper_limits());
        let q = DVector::from_column_slice(&q);
        let d = saturate_derivative(&q, lo, hi);
        let h = 1e-6;
        let fd = (saturate(&q.add_scalar(h), lo, hi) - saturate(&q.add_scalar(-h), lo, hi)) / (2.0 * h);
        prop_assert!((d - fd).amax() < 1e-8);
    }

    #[test]
    fn projection_never_adds_variance(rows in prop::collection::vec(sym_vec(16, 1.0), 8..40), k in 1usize..8) {
        let data = DMatrix::from_fn(rows.len(), 16, |r, c| rows[r][c]);
        let basis = fit_pca(&data, k).unwrap();
        let a = basis.components();
        prop_assert!((a * a.transpose() - DMatrix::identity(k, k)).amax() <= 1e-10);
        let total: f64 = svd_spectrum(&data).iter().sum();
        let mut projected = 0.0;
        for r in 0..data.nrows() {
            let x = data.row(r).transpose();
            projected += (basis.reconstruct(&basis.project(&x)) - basis.mean()).norm_squared();
        }
        prop_assert!(projected / data.nrows() as f64 <= total * (1.0 + 1e-12) + 1e-15);
    }
}
