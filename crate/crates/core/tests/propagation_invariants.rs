use std::f64::consts::PI;

use afc_core::propagation::{
    make_gaussian_pulse, propagate, transfer_function, TemporalField, TimeGrid,
};
use afc_core::spectral::{
    build_analytic_comb, CombSpec, OpticalDepthProfile, Provenance, SpectralGrid, ToothShape,
};
use num_complex::Complex64;
use proptest::prelude::*;

const FWHM: f64 = 8.7e-9;

fn comb_h(
    tau: f64,
    finesse: f64,
    peak: f64,
    background: f64,
    shape: ToothShape,
) -> afc_core::propagation::TransferFunction {
    let mut spec = CombSpec::single(1.0 / tau, finesse, peak, 200e6);
    spec.background_depth = background;
    spec.tooth_shape = shape;
    let grid =
        SpectralGrid::for_comb(0.0, spec.tooth_spacing, spec.comb_bandwidth, FWHM, 40.0).unwrap();
    transfer_function(&build_analytic_comb(&spec, &grid).unwrap())
}

fn pulse(center: f64, nbar: f64, phase: f64, end: f64) -> TemporalField {
    let grid = TimeGrid::covering(-3.0 * FWHM, end, FWHM / 10.0).unwrap();
    make_gaussian_pulse(FWHM, center, nbar, phase, &grid).unwrap()
}

fn max_abs_diff(a: &TemporalField, b: &TemporalField) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn max_abs(a: &TemporalField) -> f64 {
    a.samples().iter().map(|x| x.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn passivity(finesse in 1.2f64..6.0, peak in 0.0f64..4.0, bg_frac in 0.0f64..1.0, square in any::<bool>()) {
        let shape = if square { ToothShape::Square } else { ToothShape::Gaussian };
        let h = comb_h(300e-9, finesse, peak, peak * bg_frac, shape);
        let input = pulse(0.0, 1.0, 0.0, 400e-9);
        let out = propagate(&input, &h).unwrap();
        if peak == 0.0 {
            prop_assert!((out.energy() - input.energy()).abs() < 1e-9);
        } else {
            prop_assert!(out.energy() < input.energy());
        }
    }

    #[test]
    fn linearity(a_re in -2.0f64..2.0, a_im in -2.0f64..2.0, b_re in -2.0f64..2.0, b_im in -2.0f64..2.0) {
        let h = comb_h(300e-9, 2.5, 1.3, 0.0, ToothShape::Gaussian);
        let e1 = pulse(0.0, 1.0, 0.0, 400e-9);
        let e2 = pulse(40e-9, 0.5, 1.0, 400e-9);
        let (a, b) = (Complex64::new(a_re, a_im), Complex64::new(b_re, b_im));
        let lhs = propagate(&e1.combine(a, &e2, b).unwrap(), &h).unwrap();
        let rhs = propagate(&e1, &h).unwrap().combine(a, &propagate(&e2, &h).unwrap(), b).unwrap();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-10 * max_abs(&rhs));
    }

    #[test]
    fn global_phase_covariance(theta in -PI..PI) {
        let h = comb_h(500e-9, 2.0, 2.0, 0.1, ToothShape::Gaussian);
        let e = pulse(0.0, 1.0, 0.0, 600e-9);
        let c = Complex64::from_polar(1.0, theta);
        let out = propagate(&e, &h).unwrap();
        let rotated = propagate(&e.scaled(c), &h).unwrap();
        prop_assert!(max_abs_diff(&rotated, &out.scaled(c)) <= 1e-10 * max_abs(&out));
        for (x, y) in out.samples().iter().zip(rotated.samples()) {
            prop_assert!((x.norm_sqr() - y.norm_sqr()).abs() <= 1e-10 * max_abs(&out).powi(2));
        }
    }
}

#[test]
fn time_invariance() {
    let h = comb_h(300e-9, 2.5, 1.3, 0.0, ToothShape::Gaussian);
    let shift = 57;
    let dt = FWHM / 10.0;
    // Start far enough out that neither pulse is clipped by the grid.
    let grid = TimeGrid::covering(-10.0 * FWHM, 400e-9, dt).unwrap();
    let a = propagate(
        &make_gaussian_pulse(FWHM, 0.0, 1.0, 0.0, &grid).unwrap(),
        &h,
    )
    .unwrap();
    let b = propagate(
        &make_gaussian_pulse(FWHM, shift as f64 * dt, 1.0, 0.0, &grid).unwrap(),
        &h,
    )
    .unwrap();
    let n = a.len();
    let scale = max_abs(&a);
    for i in 0..n {
        let j = (i + shift) % n;
        assert!(
            (a.samples()[i] - b.samples()[j]).norm() <= 1e-9 * scale,
            "sample {i}"
        );
    }
}

#[test]
fn lorentzian_kramers_kronig() {
    let (d, gamma) = (1.0, 1e6);
    let grid = SpectralGrid::with_resolution(0.0, 4000.0 * gamma, gamma / 50.0).unwrap();
    let depth: Vec<f64> = grid
        .nodes()
        .map(|nu| d * gamma * gamma / (gamma * gamma + nu * nu))
        .collect();
    let h = transfer_function(
        &OpticalDepthProfile::new(grid.clone(), depth, Provenance::Analytic).unwrap(),
    );
    let phase = h.phase();
    let peak_phase = d / 4.0;
    let mut worst: f64 = 0.0;
    for (nu, p) in grid.nodes().zip(&phase) {
        if nu.abs() <= 20.0 * gamma {
            let analytic = 0.5 * d * gamma * nu / (gamma * gamma + nu * nu);
            worst = worst.max((p - analytic).abs());
        }
    }
    assert!(worst < 0.01 * peak_phase, "worst phase error {worst}");
}

#[test]
fn echo_timing_over_storage_times() {
    for k in 3..=12 {
        let tau = k as f64 * 100e-9;
        let h = comb_h(tau, 2.5, 1.3, 0.0, ToothShape::Gaussian);
        let out = propagate(&pulse(0.0, 1.0, 0.0, tau + 60e-9), &h).unwrap();
        let (_, centroid) = out.window(tau - 2.0 * FWHM, tau + 2.0 * FWHM);
        assert!(
            (centroid - tau).abs() < FWHM,
            "τ = {tau:e}: centroid {centroid:e}"
        );
    }
}
