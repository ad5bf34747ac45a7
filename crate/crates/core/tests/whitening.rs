//! Whitening operators checked against dense linear algebra and simulated
//! AR noise.

use prewhiten_core::arfit::{acf_series, from_reflection};
use prewhiten_core::design::{intercept_design, ColumnRole, Regressor};
use prewhiten_core::glm::fit_gls;
use prewhiten_core::linalg::lu_solve;
use prewhiten_core::sim::{gen_ar_series, gen_ar_series_rng};
use prewhiten_core::stats::{ljung_box, DofMode};
use prewhiten_core::whiten::{
    build_precision_with, build_whitener, spectral_root, whitener_for, PrecisionForm, RootMode, WhitenOptions,
};
use prewhiten_core::Matrix;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn random_ar3(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k: Vec<f64> = (0..3).map(|_| uniform(rng, -0.9, 0.9)).collect();
    from_reflection(&k)
}

#[test]
fn untruncated_root_squares_to_the_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let phi = random_ar3(&mut rng);
        let s = uniform(&mut rng, 0.5, 2.0);
        let (precision, _) = build_precision_with(&phi, s, 64, PrecisionForm::ArPolynomial, 1e-16);
        let w = spectral_root(&precision, RootMode::SymmetricRoot).unwrap();
        let dense = precision.to_dense();
        let err = w.matmul(&w).sub(&dense).frobenius_norm() / dense.frobenius_norm();
        assert!(err < 1e-8, "phi {phi:?}: relative error {err}");
    }
}

#[test]
fn gls_by_whitening_equals_dense_gls() {
    let n = 64;
    let task: Vec<f64> = (0..n).map(|i| if (i / 8) % 2 == 0 { 1.0 } else { 0.0 }).collect();
    let trend: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
    let x = intercept_design(
        n,
        vec![Regressor::new("task", ColumnRole::Task, task)],
        vec![],
        vec![],
        vec![Regressor::new("trend", ColumnRole::Drift, trend)],
    )
    .unwrap();
    let phi = [0.5, 0.3, 0.1];
    let y = gen_ar_series(&phi, 1.3, n, 8).unwrap();
    let options = WhitenOptions { keep_full: true, ..WhitenOptions::default() };
    let (w, _) = whitener_for(&phi, 1.3, n, options, 1e-16).unwrap();
    let fit = fit_gls(&Matrix::from_columns(n, &[y.clone()]), &x, &[w]).unwrap();

    // Oracle: β = (Xᵀ S⁻¹ X)⁻¹ Xᵀ S⁻¹ y with S⁻¹ formed densely.
    let (precision, _) = build_precision_with(&phi, 1.3, n, PrecisionForm::ArPolynomial, 1e-16);
    let sinv = precision.to_dense();
    let xm = x.matrix();
    let xt_sinv = xm.transpose().matmul(&sinv);
    let beta = lu_solve(&xt_sinv.matmul(xm), &xt_sinv.matvec(&y)).unwrap();
    for (k, b) in beta.iter().enumerate() {
        let got = fit.beta[(k, 0)];
        assert!((got - b).abs() <= 1e-8 * b.abs().max(1e-3), "β{k}: {got} vs {b}");
    }
}

#[test]
fn ar1_whitened_with_true_parameters_has_no_lag_one_correlation() {
    // Band truncation leaves a population lag-1 correlation of about 0.023,
    // so the estimate is pooled over ten series to keep the sampling error
    // (about 0.01 per series) well inside the tolerance.
    let n = 10_000;
    let (w, _) = whitener_for(&[0.5], 1.0, n, WhitenOptions::default(), 1e-16).unwrap();
    let r1: f64 = (0..10)
        .map(|seed| {
            let y = gen_ar_series(&[0.5], 1.0, n, 31 + seed).unwrap();
            acf_series(&w.apply_vec(&y), 1).unwrap().0[1]
        })
        .sum::<f64>()
        / 10.0;
    assert!(r1.abs() < 0.03, "lag-1 autocorrelation {r1}");
}

fn whiteness_pass_rate(phi: &[f64], options: WhitenOptions, reps: usize, seed: u64) -> f64 {
    let n = 1000;
    let (w, _) = whitener_for(phi, 1.0, n, options, 1e-16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let passed = (0..reps)
        .filter(|_| {
            let y = gen_ar_series_rng(phi, 1.0, n, &mut rng).unwrap();
            ljung_box(&w.apply_vec(&y), 20, DofMode::InterceptOnly).unwrap().pvalue >= 0.05
        })
        .count();
    passed as f64 / reps as f64
}

const TISSUE_MODELS: [&[f64]; 3] = [&[0.1], &[0.425, 0.25, 0.1], &[0.5, 0.3, 0.1]];

#[test]
fn exact_whitening_passes_ljung_box() {
    // The untruncated root is an exact whitener of the AR precision.
    let options = WhitenOptions { keep_full: true, ..WhitenOptions::default() };
    for (i, phi) in TISSUE_MODELS.iter().enumerate() {
        let rate = whiteness_pass_rate(phi, options, 100, 50 + i as u64);
        assert!(rate >= 0.9, "{phi:?}: pass rate {rate}");
    }
}

#[test]
#[ignore = "band truncation leaves measurable correlation for strongly autocorrelated models"]
fn banded_whitening_passes_ljung_box() {
    for (i, phi) in TISSUE_MODELS.iter().enumerate() {
        let rate = whiteness_pass_rate(phi, WhitenOptions::default(), 100, 50 + i as u64);
        assert!(rate >= 0.9, "{phi:?}: pass rate {rate}");
    }
}

#[test]
fn literal_band_overwhitens_ar1() {
    // The literal band acts like a much stronger AR(1) model, leaving a
    // negative lag-1 correlation of about −0.25 at φ = 0.5.
    let n = 1000;
    let options = WhitenOptions { form: PrecisionForm::Literal, ..WhitenOptions::default() };
    let (w, _) = whitener_for(&[0.5], 1.0, n, options, 1e-16).unwrap();
    let r1: f64 = (0..5)
        .map(|seed| {
            let y = gen_ar_series(&[0.5], 1.0, n, 77 + seed).unwrap();
            acf_series(&w.apply_vec(&y), 1).unwrap().0[1]
        })
        .sum::<f64>()
        / 5.0;
    assert!((r1 + 0.25).abs() < 0.05, "lag-1 autocorrelation {r1}");
}

#[test]
fn appendix_literal_root_is_the_precision_band() {
    let (p, _) = build_precision_with(&[0.3, 0.2], 1.0, 40, PrecisionForm::ArPolynomial, 1e-16);
    let w = build_whitener(&p, 2, RootMode::AppendixLiteral).unwrap();
    assert!(w.to_dense().sub(&p.to_dense()).max_abs() < 1e-12);
}
