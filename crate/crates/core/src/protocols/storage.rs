//! Single-pulse, pulse-train and broadband storage.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{config_hash, CombSource, DetectionSpec, DetectionSummary, EchoRecord, PulseSpec};
use crate::detection::{
    detected_mean, input_referenced, noise_per_retrieved_photon, sample_counts, Bin,
};
use crate::error::{AfcError, Result};
use crate::propagation::{
    make_gaussian_pulse, propagate, spectral_energy_fraction, transfer_function,
    transform_limited_bandwidth, TemporalField, TimeGrid, TransferFunction, WindowMeasurement,
};
use crate::spectral::{
    build_analytic_comb, burn_comb, CombSpec, OpticalDepthProfile, SpectralGrid, ToothShape,
    DEFAULT_POINTS_PER_PERIOD,
};

/// Single-pulse storage experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageConfig {
    pub comb: CombSource,
    pub pulse: PulseSpec,
    /// Half-width of every measurement window; defaults to 2× pulse FWHM.
    pub window_halfwidth: Option<f64>,
    /// Spectral grid points per tooth spacing.
    pub points_per_period: f64,
    pub detection: Option<DetectionSpec>,
}

impl StorageConfig {
    pub fn new(comb: CombSource, pulse: PulseSpec) -> Self {
        StorageConfig {
            comb,
            pulse,
            window_halfwidth: None,
            points_per_period: DEFAULT_POINTS_PER_PERIOD,
            detection: None,
        }
    }

    pub fn halfwidth(&self) -> f64 {
        self.window_halfwidth.unwrap_or(2.0 * self.pulse.fwhm)
    }
}

/// A train of equally spaced, identical pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodeConfig {
    pub storage: StorageConfig,
    pub n_modes: usize,
    pub mode_spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultimodeRecord {
    #[serde(flatten)]
    pub record: EchoRecord,
    pub mean_efficiency: f64,
    /// Largest over smallest per-mode efficiency.
    pub efficiency_spread: f64,
    /// Worst ratio of the intensity minimum between neighboring echoes to
    /// the smaller of their peaks.
    pub max_valley_ratio: f64,
    pub resolved: bool,
}

/// Fraction of the comb profile the echo windows must avoid touching.
pub(crate) const RESOLVED_VALLEY_RATIO: f64 = 0.1;

/// Absorption profile on a grid sized for the comb and the input pulse.
pub(crate) fn build_profile(
    comb: &CombSource,
    pulse_fwhm: f64,
    points_per_period: f64,
) -> Result<OpticalDepthProfile> {
    match comb {
        CombSource::Analytic(spec) => {
            spec.validate()?;
            let grid = SpectralGrid::for_comb(
                0.0,
                spec.finest_spacing(),
                spec.comb_bandwidth,
                pulse_fwhm,
                points_per_period,
            )?;
            build_analytic_comb(spec, &grid)
        }
        CombSource::Burned {
            initial_depth,
            burn,
        } => {
            burn.validate()?;
            if !(*initial_depth >= 0.0) {
                return Err(AfcError::InvalidSpec(format!(
                    "initial optical depth must be non-negative, got {initial_depth}"
                )));
            }
            let spacing = 1.0 / burn.pulse_spacing;
            let band = 2.0 * transform_limited_bandwidth(burn.pulse_fwhm)
                + 2.0 * burn.carrier_detuning.abs();
            let grid = SpectralGrid::for_comb(
                0.0,
                spacing,
                band.max(5.0 * spacing),
                pulse_fwhm,
                points_per_period,
            )?;
            burn_comb(&OpticalDepthProfile::flat(grid, *initial_depth)?, burn)
        }
    }
}

/// Energy and centroid in `[center − w, center + w]`.
fn measure(
    trace: &TemporalField,
    center: f64,
    halfwidth: f64,
    input_energy: f64,
) -> Result<WindowMeasurement> {
    let (start, end) = (center - halfwidth, center + halfwidth);
    if start < trace.t0() || end > trace.end() {
        return Err(AfcError::Window(format!(
            "window [{start:.3e}, {end:.3e}] s is outside the trace [{:.3e}, {:.3e}] s",
            trace.t0(),
            trace.end()
        )));
    }
    let (energy, centroid) = trace.window(start, end);
    Ok(WindowMeasurement {
        center,
        halfwidth,
        energy,
        efficiency: energy / input_energy,
        centroid,
    })
}

/// Sum of gaussian pulses on a grid from `−3·FWHM` to `end`.
pub(crate) fn pulse_train(
    pulse: &PulseSpec,
    centers: &[f64],
    phases: &[f64],
    end: f64,
) -> Result<TemporalField> {
    let grid = TimeGrid::covering(-3.0 * pulse.fwhm, end, pulse.fwhm / 10.0)?;
    let mut field = TemporalField::zeros(&grid);
    let one = Complex64::new(1.0, 0.0);
    for (&c, &phi) in centers.iter().zip(phases) {
        let p = make_gaussian_pulse(pulse.fwhm, c, pulse.mean_photon_number, phi, &grid)?;
        field = field.combine(one, &p, one)?;
    }
    Ok(field)
}

/// Propagates `input` and keeps the output up to the end of the input grid.
pub(crate) fn run(input: &TemporalField, h: &TransferFunction) -> Result<TemporalField> {
    Ok(propagate(input, h)?.truncated(input.end()))
}

/// Detected counts in `windows` and the noise figure of the echo windows.
pub(crate) fn detect(
    trace: &TemporalField,
    spec: &DetectionSpec,
    windows: &[WindowMeasurement],
    echo_windows: &[usize],
    mean_photon_number: f64,
    rng_seed: u64,
) -> Result<DetectionSummary> {
    spec.validate()?;
    let bins: Vec<Bin> = windows
        .iter()
        .map(|w| (w.center - w.halfwidth, w.center + w.halfwidth))
        .collect();
    let mean_counts = detected_mean(trace, &spec.chain, &bins);
    let noise_mean_counts: Vec<f64> = bins
        .iter()
        .map(|(a, b)| spec.chain.noise_mean(b - a))
        .collect();
    let histogram = sample_counts(&bins, &mean_counts, spec.repetitions, rng_seed)?;
    let noise_per_retrieved_photon = echo_windows
        .iter()
        .map(|&i| {
            let noise = input_referenced(noise_mean_counts[i], &spec.chain);
            noise_per_retrieved_photon(noise / mean_photon_number, windows[i].efficiency).ok()
        })
        .collect();
    Ok(DetectionSummary {
        chain_efficiency: spec.chain.total_efficiency(),
        mean_counts,
        noise_mean_counts,
        histogram,
        noise_per_retrieved_photon,
    })
}

fn check_storage(cfg: &StorageConfig) -> Result<()> {
    cfg.pulse.validate()?;
    let (tau, fwhm, w) = (cfg.comb.storage_time(), cfg.pulse.fwhm, cfg.halfwidth());
    if !(w > 0.0) {
        return Err(AfcError::Window(format!(
            "window half-width must be positive, got {w}"
        )));
    }
    if tau < 3.0 * fwhm {
        return Err(AfcError::Overlap(format!(
            "storage time {tau:.3e} s is shorter than 3 pulse widths ({:.3e} s); the echo merges with the leakage",
            3.0 * fwhm
        )));
    }
    if tau < 2.0 * w {
        return Err(AfcError::Overlap(format!(
            "echo window at {tau:.3e} s ± {w:.3e} s overlaps the leakage window"
        )));
    }
    if !(cfg.points_per_period >= crate::spectral::MIN_POINTS_PER_PERIOD) {
        return Err(AfcError::Resolution(format!(
            "points per period {} is below the minimum {}",
            cfg.points_per_period,
            crate::spectral::MIN_POINTS_PER_PERIOD
        )));
    }
    match &cfg.comb {
        CombSource::Analytic(spec) => spec.validate()?,
        CombSource::Burned { burn, .. } => burn.validate()?,
    }
    if let Some(d) = &cfg.detection {
        d.validate()?;
    }
    Ok(())
}

/// Warning text when the comb band is narrower than twice the pulse
/// spectrum.
fn clipping_warning(cfg: &StorageConfig) -> Option<String> {
    let CombSource::Analytic(spec) = &cfg.comb else {
        return None;
    };
    let bw = transform_limited_bandwidth(cfg.pulse.fwhm);
    (spec.comb_bandwidth < 2.0 * bw).then(|| {
        format!(
            "spectral clipping: comb bandwidth {:.3e} Hz is below twice the pulse bandwidth {:.3e} Hz",
            spec.comb_bandwidth, bw
        )
    })
}

/// Every precondition of [`afc_storage`] without simulating. Returns the
/// warnings a run would raise.
pub fn validate_storage(cfg: &StorageConfig) -> Result<Vec<String>> {
    check_storage(cfg)?;
    Ok(clipping_warning(cfg).into_iter().collect())
}

pub fn validate_multimode(cfg: &MultimodeConfig) -> Result<Vec<String>> {
    let warnings = validate_storage(&cfg.storage)?;
    let (tau, fwhm, w) = (
        cfg.storage.comb.storage_time(),
        cfg.storage.pulse.fwhm,
        cfg.storage.halfwidth(),
    );
    if cfg.n_modes == 0 {
        return Err(AfcError::InvalidSpec(
            "at least one mode is required".into(),
        ));
    }
    if cfg.n_modes > 1 {
        if !(cfg.mode_spacing >= 3.0 * fwhm) {
            return Err(AfcError::ModeOverlap(format!(
                "mode spacing {:.3e} s is below 3 pulse widths ({:.3e} s)",
                cfg.mode_spacing,
                3.0 * fwhm
            )));
        }
        if cfg.mode_spacing < 2.0 * w {
            return Err(AfcError::ModeOverlap(format!(
                "windows of ±{w:.3e} s overlap at mode spacing {:.3e} s",
                cfg.mode_spacing
            )));
        }
        let train = cfg.n_modes as f64 * cfg.mode_spacing;
        if !(train < tau) {
            return Err(AfcError::ModeOverlap(format!(
                "train of {} modes spans {train:.3e} s, not shorter than the storage time {tau:.3e} s",
                cfg.n_modes
            )));
        }
    }
    Ok(warnings)
}

fn store_train(cfg: &MultimodeConfig, hash: String) -> Result<(EchoRecord, Vec<f64>)> {
    let mut flags = validate_multimode(cfg)?;
    let s = &cfg.storage;
    let (tau, w) = (s.comb.storage_time(), s.halfwidth());
    let profile = build_profile(&s.comb, s.pulse.fwhm, s.points_per_period)?;
    let h = transfer_function(&profile);

    let centers: Vec<f64> = (0..cfg.n_modes)
        .map(|k| k as f64 * cfg.mode_spacing)
        .collect();
    let last_echo = tau + centers[centers.len() - 1];
    let input = pulse_train(
        &s.pulse,
        &centers,
        &vec![0.0; centers.len()],
        last_echo + w + 3.0 * s.pulse.fwhm,
    )?;
    let trace = run(&input, &h)?;

    let e_in = s.pulse.mean_photon_number;
    let leakage = centers
        .iter()
        .map(|&c| measure(&trace, c, w, e_in))
        .collect::<Result<Vec<_>>>()?;
    let windows = centers
        .iter()
        .map(|&c| measure(&trace, tau + c, w, e_in))
        .collect::<Result<Vec<_>>>()?;
    let leakage_fraction =
        leakage.iter().map(|l| l.energy).sum::<f64>() / (e_in * cfg.n_modes as f64);

    let detection = match &s.detection {
        Some(d) => {
            let all: Vec<WindowMeasurement> = leakage.iter().chain(&windows).cloned().collect();
            let echo_idx: Vec<usize> = (leakage.len()..all.len()).collect();
            Some(detect(&trace, d, &all, &echo_idx, e_in, d.rng_seed)?)
        }
        None => None,
    };
    if windows.iter().any(|m| m.efficiency > 1.0) {
        flags.push("echo efficiency above 1".into());
    }
    let abs2: Vec<f64> = trace.samples().iter().map(|c| c.norm_sqr()).collect();
    Ok((
        EchoRecord {
            trace,
            input_energy: e_in,
            leakage,
            leakage_fraction,
            windows,
            detection,
            config_hash: hash,
            flags,
        },
        abs2,
    ))
}

/// Stores one pulse centered at `t = 0` and measures the leakage at
/// `t = 0` and the echo at `τ = 1/Δ`.
pub fn afc_storage(cfg: &StorageConfig) -> Result<EchoRecord> {
    let mm = MultimodeConfig {
        storage: cfg.clone(),
        n_modes: 1,
        mode_spacing: 0.0,
    };
    Ok(store_train(&mm, config_hash(cfg))?.0)
}

/// Stores a train of `n_modes` pulses and measures one echo per mode at
/// `τ + k·spacing`.
pub fn multimode_storage(cfg: &MultimodeConfig) -> Result<MultimodeRecord> {
    let (record, abs2) = store_train(cfg, config_hash(cfg))?;
    let eff: Vec<f64> = record.windows.iter().map(|w| w.efficiency).collect();
    let mean_efficiency = eff.iter().sum::<f64>() / eff.len() as f64;
    let (lo, hi) = eff
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    let efficiency_spread = hi / lo;

    let trace = &record.trace;
    let index =
        |t: f64| (((t - trace.t0()) / trace.dt()).round().max(0.0) as usize).min(abs2.len() - 1);
    let peak_near = |c: f64| {
        let w = record.windows[0].halfwidth / 2.0;
        abs2[index(c - w)..=index(c + w)]
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    };
    let mut max_valley_ratio: f64 = 0.0;
    for pair in record.windows.windows(2) {
        let (a, b) = (pair[0].center, pair[1].center);
        let valley = abs2[index(a)..=index(b)]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let peak = peak_near(a).min(peak_near(b));
        max_valley_ratio = max_valley_ratio.max(if peak > 0.0 { valley / peak } else { 1.0 });
    }
    let resolved = max_valley_ratio < RESOLVED_VALLEY_RATIO;
    let mut record = record;
    if !resolved {
        record.flags.push(format!(
            "echoes not resolved: valley/peak ratio {max_valley_ratio:.3}"
        ));
    }
    Ok(MultimodeRecord {
        record,
        mean_efficiency,
        efficiency_spread,
        max_valley_ratio,
        resolved,
    })
}

/// Every precondition of [`broadband_storage`]: those of [`afc_storage`],
/// an analytic comb, and a comb at least twice as wide as the pulse
/// spectrum.
pub fn validate_broadband(cfg: &StorageConfig) -> Result<Vec<String>> {
    let CombSource::Analytic(spec) = &cfg.comb else {
        return Err(AfcError::InvalidSpec(
            "broadband storage needs an analytic comb".into(),
        ));
    };
    cfg.pulse.validate()?;
    let bw = transform_limited_bandwidth(cfg.pulse.fwhm);
    if spec.comb_bandwidth < 2.0 * bw {
        let grid = TimeGrid::covering(
            -4.0 * cfg.pulse.fwhm,
            4.0 * cfg.pulse.fwhm,
            cfg.pulse.fwhm / 10.0,
        )?;
        let p = make_gaussian_pulse(cfg.pulse.fwhm, 0.0, 1.0, 0.0, &grid)?;
        let half = spec.comb_bandwidth / 2.0;
        let clipped_fraction = 1.0 - spectral_energy_fraction(&p, -half, half)?;
        return Err(AfcError::SpectralClipping {
            clipped_fraction,
            message: format!(
                "comb bandwidth {:.3e} Hz is below twice the pulse bandwidth {:.3e} Hz",
                spec.comb_bandwidth, bw
            ),
        });
    }
    validate_storage(cfg)
}

/// [`afc_storage`] for pulses whose spectrum must fit inside the comb:
/// rejects combs narrower than twice the pulse bandwidth.
pub fn broadband_storage(cfg: &StorageConfig) -> Result<EchoRecord> {
    validate_broadband(cfg)?;
    afc_storage(cfg)
}

/// First-echo efficiency of the same comb extended over all detunings:
/// with `d(ν) = a₀ + 2Σ a_k cos(2πkν/Δ)`, exactly `a₁²·exp(−a₀)`,
/// independent of the pulse.
pub fn ideal_echo_efficiency(spec: &CombSpec) -> Result<f64> {
    spec.validate()?;
    if spec.superimposed.len() > 1 {
        return Err(AfcError::InvalidSpec(
            "ideal efficiency is defined for a single comb".into(),
        ));
    }
    let delta = spec.tooth_spacing;
    let gamma = spec.tooth_width();
    let contrast = spec.peak_depth - spec.background_depth;
    let shape: ToothShape = spec.tooth_shape;
    let reach = (shape.support() * gamma / delta).ceil() as i64 + 1;
    const N: usize = 1 << 14;
    let (mut a0, mut a1) = (0.0, 0.0);
    for i in 0..N {
        let x = (i as f64 / N as f64 - 0.5) * delta;
        let pattern: f64 = (-reach..=reach)
            .map(|k| shape.eval((x - k as f64 * delta) / gamma))
            .sum();
        let d = (spec.background_depth + contrast * pattern)
            .clamp(spec.background_depth, spec.peak_depth);
        a0 += d;
        a1 += d * (std::f64::consts::TAU * x / delta).cos();
    }
    a0 /= N as f64;
    a1 /= N as f64;
    Ok(a1 * a1 * (-a0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::theoretical_efficiency;

    fn cfg(tau: f64, bw: f64) -> StorageConfig {
        StorageConfig::new(
            CombSource::Analytic(CombSpec::single(1.0 / tau, 2.5, 1.3, bw)),
            PulseSpec {
                fwhm: 8.7e-9,
                mean_photon_number: 1.0,
            },
        )
    }

    #[test]
    fn ideal_efficiency_closed_form() {
        // Gaussian teeth: a₀ = (d/F)·√(π/(4 ln 2)), a₁ = a₀·exp(−π²/(4 ln2·F²)).
        let (d, f) = (1.3, 2.5);
        let ln2 = std::f64::consts::LN_2;
        let a0 = d / f * (std::f64::consts::PI / (4.0 * ln2)).sqrt();
        let a1 = a0 * (-std::f64::consts::PI.powi(2) / (4.0 * ln2 * f * f)).exp();
        let oracle = a1 * a1 * (-a0).exp();
        let got = ideal_echo_efficiency(&CombSpec::single(1.0 / 300e-9, f, d, 50e6)).unwrap();
        assert!((got / oracle - 1.0).abs() < 1e-9, "{got} vs {oracle}");
        assert!((oracle - 0.05639).abs() < 1e-5);
    }

    #[test]
    fn storage_echo_near_theory() {
        let r = afc_storage(&cfg(300e-9, 200e6)).unwrap();
        let theory = theoretical_efficiency(1.3, 2.5).unwrap();
        assert!(
            (r.efficiency() / theory - 1.0).abs() < 0.25,
            "{}",
            r.efficiency()
        );
        assert!((r.windows[0].centroid - 300e-9).abs() < 8.7e-9);
        assert!(r.leakage_fraction > 0.0 && r.leakage_fraction < 1.0);
        assert_eq!(r.config_hash.len(), 64);
    }

    #[test]
    fn flat_profile_has_no_echo() {
        let mut spec = CombSpec::single(1.0 / 300e-9, 2.5, 1.3, 50e6);
        spec.background_depth = 1.3;
        let mut c = cfg(300e-9, 50e6);
        c.comb = CombSource::Analytic(spec);
        let r = afc_storage(&c).unwrap();
        assert!(r.efficiency() < 1e-8, "{}", r.efficiency());
        assert!((r.leakage_fraction - (-1.3f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn short_storage_time_is_overlap() {
        assert!(matches!(
            afc_storage(&cfg(10e-9, 2e9)),
            Err(AfcError::Overlap(_))
        ));
    }

    #[test]
    fn single_mode_train_matches_storage() {
        let c = cfg(300e-9, 200e6);
        let one = afc_storage(&c).unwrap();
        let mm = multimode_storage(&MultimodeConfig {
            storage: c,
            n_modes: 1,
            mode_spacing: 40e-9,
        })
        .unwrap();
        assert_eq!(one.windows, mm.record.windows);
        assert_eq!(one.trace, mm.record.trace);
    }

    #[test]
    fn train_longer_than_storage_time() {
        let m = MultimodeConfig {
            storage: cfg(300e-9, 200e6),
            n_modes: 10,
            mode_spacing: 40e-9,
        };
        assert!(matches!(
            multimode_storage(&m),
            Err(AfcError::ModeOverlap(_))
        ));
    }

    #[test]
    fn narrow_comb_clips_broadband_pulse() {
        let mut c = cfg(300e-9, 50e6);
        c.pulse.fwhm = 200e-12;
        match broadband_storage(&c) {
            Err(AfcError::SpectralClipping {
                clipped_fraction, ..
            }) => {
                assert!(
                    clipped_fraction > 0.9 && clipped_fraction < 1.0,
                    "{clipped_fraction}"
                )
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(validate_storage(&c).unwrap().len(), 1);
    }

    #[test]
    fn detection_counts_are_seeded() {
        let mut c = cfg(300e-9, 200e6);
        c.detection = Some(DetectionSpec {
            chain: Default::default(),
            repetitions: 1000,
            rng_seed: 7,
        });
        let a = afc_storage(&c).unwrap();
        let b = afc_storage(&c).unwrap();
        let (da, db) = (a.detection.unwrap(), b.detection.unwrap());
        assert_eq!(da.histogram, db.histogram);
        let mu = da.noise_per_retrieved_photon[0].unwrap();
        assert!(mu > 0.0 && mu < 0.2, "{mu}");
    }
}
