use afc_core::detection::{
    calibrate_nbar, noise_per_retrieved_photon, sample_counts, sample_repetitions, DetectionChain,
};

#[test]
fn poisson_dispersion_is_unity() {
    for mean in [0.05, 1.0, 30.0] {
        let reps = sample_repetitions(&[mean], 100_000, 5).unwrap();
        let xs: Vec<f64> = reps.iter().map(|r| r[0] as f64).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let ratio = v / m;
        assert!((0.95..=1.05).contains(&ratio), "mean {mean}: {ratio}");
    }
}

#[test]
fn histogram_sums_match_repetitions() {
    let means = [0.3, 2.0];
    let h = sample_counts(&[(0.0, 1.0), (1.0, 2.0)], &means, 1000, 8).unwrap();
    let reps = sample_repetitions(&means, 1000, 8).unwrap();
    for b in 0..2 {
        assert_eq!(h.counts[b], reps.iter().map(|r| r[b]).sum::<u64>());
    }
}

#[test]
fn calibration_round_trip() {
    let chain = DetectionChain::default();
    let nbar = 0.45;
    let pulses = 1_000_000;
    let counts = nbar * chain.total_efficiency() * pulses as f64;
    let c = calibrate_nbar(counts, pulses, &chain).unwrap();
    assert!((c.mean_photon_number - nbar).abs() < 1e-10);
}

#[test]
fn noise_figure_falls_with_efficiency() {
    let mut prev = f64::INFINITY;
    for k in 1..=50 {
        let mu = noise_per_retrieved_photon(0.02, k as f64 / 50.0).unwrap();
        assert!(mu < prev);
        prev = mu;
    }
    assert!(noise_per_retrieved_photon(0.02, 0.0).is_err());
}

#[test]
fn fluorescence_suppression() {
    let chain = DetectionChain::default();
    let s = chain.fluorescence.suppression();
    assert!((s - (-15.0f64 / 2.85).exp()).abs() < 1e-12);
    assert!((s - 5.2e-3).abs() < 1e-4);
}
