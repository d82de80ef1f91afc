//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p afcsim --test acceptance`.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI, TAU};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use afc_core::analysis::lm::LeastSquaresProblem;
use afc_core::analysis::{
    fit_echo_decay, fit_fringe, theoretical_efficiency, EchoDecayModel, FringeModel,
};
use afc_core::detection::{
    calibrate_nbar, derive_seed, noise_per_retrieved_photon, sample_repetitions, DetectionChain,
};
use afc_core::propagation::{
    make_gaussian_pulse, propagate, spectral_fwhm, transfer_function, TemporalField, TimeGrid,
    TransferFunction,
};
use afc_core::protocols::{
    afc_storage, broadband_storage, mode_capacity, multimode_storage, time_bin_qubit, CombSource,
    FinesseModel, MultimodeConfig, PulseSpec, StorageConfig, TimeBinConfig,
};
use afc_core::spectral::{
    build_analytic_comb, burn_comb, BurnSequence, CombSpec, OpticalDepthProfile, Provenance,
    SpectralGrid,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

const FWHM: f64 = 8.7e-9;
const OD: f64 = 1.3;
const FINESSE: f64 = 2.5;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn pulse() -> PulseSpec {
    PulseSpec {
        fwhm: FWHM,
        mean_photon_number: 1.0,
    }
}

fn storage(tau: f64, finesse: f64) -> StorageConfig {
    StorageConfig::new(
        CombSource::Analytic(CombSpec::single(1.0 / tau, finesse, OD, 200e6)),
        pulse(),
    )
}

/// Echo efficiency of a gaussian-tooth comb seen by a narrowband pulse:
/// the first Fourier harmonic of `d/2` squared, times `exp(−mean d)`.
fn harmonic_oracle(od: f64, finesse: f64) -> f64 {
    let mean = od / finesse * (PI / (4.0 * LN_2)).sqrt();
    let first = mean * (-PI * PI / (4.0 * LN_2 * finesse * finesse)).exp();
    first * first * (-mean).exp()
}

fn closed_form_points() -> Check {
    let eta = theoretical_efficiency(1.3, 2.5).map_err(err)?;
    ensure(
        (0.050..=0.053).contains(&eta),
        format!("η(1.3, 2.5) = {eta}"),
    )?;
    let limit = theoretical_efficiency(200.0, 100.0).map_err(err)?;
    let target = 4.0 * (-2.0f64).exp();
    ensure(
        (limit - target).abs() <= 1e-3,
        format!("η(200, 100) = {limit}, 4e⁻² = {target}"),
    )?;
    Ok(format!("η(1.3, 2.5) = {eta:.4}, η(2F, F=100) = {limit:.4}"))
}

fn optimum_law() -> Check {
    let mut worst: f64 = 0.0;
    for f in [2.0, 2.5, 4.0, 8.0] {
        let eta = |od: f64| theoretical_efficiency(od, f).unwrap();
        // Golden-section search over a bracket well around 2F.
        let (mut a, mut b) = (0.1, 10.0 * f);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-10 * f {
            let (c, d) = (b - g * (b - a), a + g * (b - a));
            if eta(c) > eta(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let rel = ((a + b) / 2.0 / (2.0 * f) - 1.0).abs();
        worst = worst.max(rel);
    }
    ensure(worst < 1e-4, format!("worst relative offset {worst:e}"))?;
    Ok(format!("argmax OD = 2F, worst relative offset {worst:.1e}"))
}

fn simulation_vs_theory() -> Check {
    let tau = 300e-9;
    let coarse_cfg = storage(tau, FINESSE);
    let mut fine_cfg = coarse_cfg.clone();
    fine_cfg.points_per_period *= 2.0;
    let coarse = afc_storage(&coarse_cfg).map_err(err)?;
    let fine = afc_storage(&fine_cfg).map_err(err)?;
    let eta = coarse.efficiency();
    let theory = theoretical_efficiency(OD, FINESSE).map_err(err)?;
    let rel = eta / theory - 1.0;
    ensure(
        rel.abs() <= 0.25,
        format!("η = {eta}, closed form {theory}"),
    )?;
    let conv = fine.efficiency() / eta - 1.0;
    ensure(
        conv.abs() <= 0.05,
        format!("refined η = {}, coarse {eta}", fine.efficiency()),
    )?;
    let centroid = coarse.windows[0].centroid;
    ensure(
        (centroid - tau).abs() <= FWHM,
        format!("centroid {centroid:e} s"),
    )?;
    Ok(format!(
        "η = {eta:.5} vs {theory:.5} ({:+.1}%), refinement {:+.2e}, centroid {:.2} ns",
        100.0 * rel,
        conv,
        centroid * 1e9
    ))
}

fn storage_time_programmability() -> Check {
    let mut worst: f64 = 0.0;
    for k in 3..=12 {
        let tau = k as f64 * 100e-9;
        let rec = afc_storage(&storage(tau, FINESSE)).map_err(err)?;
        let off = (rec.windows[0].centroid - tau).abs();
        ensure(off <= FWHM, format!("τ = {tau:e}: centroid off by {off:e}"))?;
        worst = worst.max(off);
    }
    Ok(format!(
        "ten storage times, worst centroid offset {:.3} ns",
        worst * 1e9
    ))
}

fn time_bin_interference() -> Check {
    let balanced = time_bin_qubit(&TimeBinConfig::default()).map_err(err)?;
    let v = balanced.fit.visibility;
    ensure(v >= 0.99, format!("balanced visibility {v}"))?;

    let cfg = TimeBinConfig {
        target_ratio: 2.0,
        ..TimeBinConfig::default()
    };
    let skewed = time_bin_qubit(&cfg).map_err(err)?;
    let [e1, e2] = skewed.path_efficiencies;
    let oracle = 2.0 * (e1 * e2).sqrt() / (e1 + e2);
    let rel = skewed.fit.visibility / oracle - 1.0;
    ensure(
        rel.abs() <= 0.01,
        format!("V = {}, oracle {oracle}", skewed.fit.visibility),
    )?;
    let outer = balanced
        .outer_bin_variation
        .iter()
        .chain(&skewed.outer_bin_variation)
        .cloned()
        .fold(0.0, f64::max);
    ensure(outer < 1e-4, format!("outer-bin variation {outer:e}"))?;
    Ok(format!(
        "V = {v:.6}; ratio {:.3}: V = {:.5} vs {oracle:.5}; outer {outer:.1e}",
        e2 / e1,
        skewed.fit.visibility
    ))
}

fn multimode() -> Check {
    let tau = 1e-6;
    let finesse = FinesseModel::default().finesse_at(tau).map_err(err)?;
    let cfg = MultimodeConfig {
        storage: storage(tau, finesse),
        n_modes: 20,
        mode_spacing: 40e-9,
    };
    let rec = multimode_storage(&cfg).map_err(err)?;
    ensure(
        rec.record.windows.len() == 20,
        format!("{} echo windows", rec.record.windows.len()),
    )?;
    ensure(
        rec.max_valley_ratio < 0.1,
        format!("valley ratio {}", rec.max_valley_ratio),
    )?;
    ensure(
        rec.efficiency_spread <= 1.2,
        format!("spread {}", rec.efficiency_spread),
    )?;
    let cap = mode_capacity(tau, FWHM).map_err(err)?;
    ensure(
        cap.floor == 114 && cap.nearest == 115,
        format!("capacity {cap:?}"),
    )?;
    Ok(format!(
        "20 echoes, valley {:.1e}, spread {:.4}, capacity {}/{}",
        rec.max_valley_ratio, rec.efficiency_spread, cap.floor, cap.nearest
    ))
}

fn broadband() -> Check {
    let fwhm = 200e-12;
    let grid = TimeGrid::covering(-20.0 * fwhm, 20.0 * fwhm, fwhm / 20.0).map_err(err)?;
    let bw = spectral_fwhm(&make_gaussian_pulse(fwhm, 0.0, 1.0, 0.0, &grid).map_err(err)?)
        .map_err(err)?;
    ensure(
        (bw / 2.2e9 - 1.0).abs() <= 0.01,
        format!("spectral FWHM {bw:e} Hz"),
    )?;
    let cfg = StorageConfig::new(
        CombSource::Analytic(CombSpec::single(1.0 / 300e-9, FINESSE, OD, 10.0 * 2.2e9)),
        PulseSpec {
            fwhm,
            mean_photon_number: 1.0,
        },
    );
    let eta = broadband_storage(&cfg).map_err(err)?.efficiency();
    let ideal = harmonic_oracle(OD, FINESSE);
    let rel = eta / ideal - 1.0;
    ensure(rel.abs() <= 0.01, format!("η = {eta}, ideal {ideal}"))?;
    Ok(format!(
        "bandwidth {:.4} GHz, η = {eta:.6} vs ideal {ideal:.6}",
        bw / 1e9
    ))
}

fn echo_decay_fit() -> Check {
    let t2 = 90e-6;
    let delays: Vec<f64> = (1..=12).map(|k| 7e-6 * k as f64).collect();
    let curve = |x: f64| -> Vec<f64> {
        delays
            .iter()
            .map(|&t| 1e4 * (-2.0 * (2.0 * t / t2).powf(x)).exp())
            .collect()
    };
    let noise = Normal::new(0.0, 0.03).unwrap();
    let trials = 500;
    let mut hits = 0;
    for k in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(8, k));
        let x = rng.random_range(1.1..=1.6);
        let data: Vec<f64> = curve(x)
            .into_iter()
            .map(|i| i * (1.0 + noise.sample(&mut rng)))
            .collect();
        if let Ok(f) = fit_echo_decay(&delays, &data) {
            if (f.t2() - t2).abs() <= 4e-6 {
                hits += 1;
            }
        }
    }
    ensure(
        hits as f64 >= 0.9 * trials as f64,
        format!("{hits}/{trials} within 4 µs"),
    )?;
    let exact = fit_echo_decay(&delays, &curve(1.3)).map_err(err)?;
    let gamma = exact.homogeneous_linewidth_hz;
    ensure(
        (gamma / 1e3 * 100.0).round() == 354.0,
        format!("γ_h = {gamma} Hz"),
    )?;
    Ok(format!(
        "{hits}/{trials} within 4 µs, γ_h = {:.2} kHz",
        gamma / 1e3
    ))
}

fn detection_chain() -> Check {
    let chain = DetectionChain::default();
    let product = 0.05 * 0.40 * 0.60;
    let nbar = 0.37;
    let pulses = 2_000_000;
    let cal = calibrate_nbar(nbar * product * pulses as f64, pulses, &chain).map_err(err)?;
    let gap = (cal.mean_photon_number - nbar).abs();
    ensure(gap <= 1e-10, format!("round trip off by {gap:e}"))?;

    let mut worst: f64 = 0.0;
    for (i, mean) in [0.05, 1.0, 30.0].into_iter().enumerate() {
        let xs: Vec<f64> = sample_repetitions(&[mean], 100_000, derive_seed(9, i as u64))
            .map_err(err)?
            .iter()
            .map(|r| r[0] as f64)
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let ratio = v / m;
        ensure(
            (0.95..=1.05).contains(&ratio),
            format!("mean {mean}: dispersion {ratio}"),
        )?;
        worst = worst.max((ratio - 1.0).abs());
    }

    let s = chain.fluorescence.suppression();
    ensure((s - 5.2e-3).abs() <= 1e-4, format!("suppression {s:e}"))?;

    let mus: Vec<f64> = (1..=100)
        .map(|k| noise_per_retrieved_photon(0.01, k as f64 / 100.0))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    ensure(mus.windows(2).all(|w| w[1] < w[0]), "μ not decreasing in η")?;
    Ok(format!(
        "round trip {gap:.1e}, dispersion within {worst:.3}, suppression {s:.3e}"
    ))
}

fn comb_h(tau: f64, finesse: f64, peak: f64, background: f64) -> Result<TransferFunction, String> {
    let mut spec = CombSpec::single(1.0 / tau, finesse, peak, 200e6);
    spec.background_depth = background;
    let grid = SpectralGrid::for_comb(0.0, spec.tooth_spacing, spec.comb_bandwidth, FWHM, 40.0)
        .map_err(err)?;
    Ok(transfer_function(
        &build_analytic_comb(&spec, &grid).map_err(err)?,
    ))
}

fn input(
    center: f64,
    nbar: f64,
    phase: f64,
    start: f64,
    end: f64,
) -> Result<TemporalField, String> {
    let grid = TimeGrid::covering(start, end, FWHM / 10.0).map_err(err)?;
    make_gaussian_pulse(FWHM, center, nbar, phase, &grid).map_err(err)
}

fn max_abs(a: &TemporalField) -> f64 {
    a.samples().iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// `typical[k]` floors the finite-difference step so that parameters near
/// zero (a phase, say) are not stepped by less than rounding noise.
fn jacobian_gap<P: LeastSquaresProblem>(problem: &P, p: &[f64], typical: &[f64]) -> f64 {
    let j = problem.jacobian(p);
    let mut worst: f64 = 0.0;
    for k in 0..p.len() {
        let h = 1e-6 * p[k].abs().max(typical[k]);
        let (mut up, mut down) = (p.to_vec(), p.to_vec());
        up[k] += h;
        down[k] -= h;
        let (ru, rd) = (problem.residuals(&up), problem.residuals(&down));
        let scale = (0..ru.len())
            .map(|i| j[(i, k)].abs())
            .fold(1e-300, f64::max);
        for i in 0..ru.len() {
            worst = worst.max(((ru[i] - rd[i]) / (2.0 * h) - j[(i, k)]).abs() / scale);
        }
    }
    worst
}

fn invariant_suites() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    // Passivity over random combs, lossless when the medium is empty.
    for _ in 0..16 {
        let finesse = rng.random_range(1.2..6.0);
        let peak = rng.random_range(0.05..4.0);
        let bg = peak * rng.random_range(0.0..0.9);
        let e = input(0.0, 1.0, 0.0, -3.0 * FWHM, 400e-9)?;
        let out = propagate(&e, &comb_h(300e-9, finesse, peak, bg)?).map_err(err)?;
        ensure(out.energy() < e.energy(), "passivity violated")?;
    }
    let e = input(0.0, 1.0, 0.0, -3.0 * FWHM, 400e-9)?;
    let empty = propagate(&e, &comb_h(300e-9, 2.5, 0.0, 0.0)?).map_err(err)?;
    ensure(
        (empty.energy() - e.energy()).abs() < 1e-9,
        "empty medium is not lossless",
    )?;

    // Linearity.
    let h = comb_h(300e-9, FINESSE, OD, 0.0)?;
    let e1 = input(0.0, 1.0, 0.0, -3.0 * FWHM, 400e-9)?;
    let e2 = input(40e-9, 0.5, 1.0, -3.0 * FWHM, 400e-9)?;
    for _ in 0..8 {
        let a = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let b = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let lhs = propagate(&e1.combine(a, &e2, b).map_err(err)?, &h).map_err(err)?;
        let rhs = propagate(&e1, &h)
            .map_err(err)?
            .combine(a, &propagate(&e2, &h).map_err(err)?, b)
            .map_err(err)?;
        let gap = lhs
            .samples()
            .iter()
            .zip(rhs.samples())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        ensure(
            gap <= 1e-10 * max_abs(&rhs),
            format!("linearity gap {gap:e}"),
        )?;
    }

    // Time invariance as a circular shift.
    let shift = 57;
    let dt = FWHM / 10.0;
    let a = propagate(&input(0.0, 1.0, 0.0, -10.0 * FWHM, 400e-9)?, &h).map_err(err)?;
    let b = propagate(
        &input(shift as f64 * dt, 1.0, 0.0, -10.0 * FWHM, 400e-9)?,
        &h,
    )
    .map_err(err)?;
    let n = a.len();
    let scale = max_abs(&a);
    for i in 0..n {
        let gap = (a.samples()[i] - b.samples()[(i + shift) % n]).norm();
        ensure(gap <= 1e-9 * scale, format!("shift mismatch at sample {i}"))?;
    }

    // Lorentzian tooth against its analytic dispersive phase.
    let (d, gamma) = (1.0, 1e6);
    let grid = SpectralGrid::with_resolution(0.0, 4000.0 * gamma, gamma / 50.0).map_err(err)?;
    let depth: Vec<f64> = grid
        .nodes()
        .map(|nu| d * gamma * gamma / (gamma * gamma + nu * nu))
        .collect();
    let lorentz = transfer_function(
        &OpticalDepthProfile::new(grid.clone(), depth, Provenance::Analytic).map_err(err)?,
    );
    let kk = grid
        .nodes()
        .zip(lorentz.phase())
        .filter(|(nu, _)| nu.abs() <= 20.0 * gamma)
        .map(|(nu, p)| (p - 0.5 * d * gamma * nu / (gamma * gamma + nu * nu)).abs())
        .fold(0.0, f64::max);
    ensure(kk < 0.01 * d / 4.0, format!("phase error {kk:e}"))?;

    // Burning only removes absorption, more so with more exposure.
    let flat = OpticalDepthProfile::flat(
        SpectralGrid::with_resolution(0.0, 40e6, 1.0 / (8.0 * 300e-9) / 10.0).map_err(err)?,
        1.3,
    )
    .map_err(err)?;
    let mut prev = flat.clone();
    for strength in [0.1, 0.3, 1.0, 3.0] {
        let seq = BurnSequence {
            pulse_fwhm: 5e-9,
            pulse_spacing: 300e-9,
            pulses_per_train: 8,
            train_repetitions: 10,
            burn_strength: strength,
            carrier_detuning: 0.0,
        };
        let burned = burn_comb(&flat, &seq).map_err(err)?;
        let monotone = burned
            .depth()
            .iter()
            .zip(prev.depth())
            .all(|(x, y)| *x <= *y + 1e-12);
        ensure(
            monotone,
            format!("burn at strength {strength} added absorption"),
        )?;
        prev = burned;
    }

    // Fitter Jacobians against central differences.
    let delays: Vec<f64> = (1..=12).map(|k| 7e-6 * k as f64).collect();
    let data: Vec<f64> = delays
        .iter()
        .map(|&t| 1e4 * (-2.0 * (2.0 * t / 90e-6).powf(1.3)).exp())
        .collect();
    let decay = EchoDecayModel::new(&delays, &data);
    let phases: Vec<f64> = (0..12).map(|k| TAU * k as f64 / 12.0).collect();
    let counts: Vec<f64> = phases.iter().map(|p| 100.0 + 50.0 * p.sin()).collect();
    let sigmas: Vec<f64> = counts.iter().map(|c| c.sqrt()).collect();
    let fringe = FringeModel::new(&phases, &counts, &sigmas);
    let mut grad: f64 = 0.0;
    for _ in 0..32 {
        grad = grad.max(jacobian_gap(
            &decay,
            &[
                rng.random_range(0.0..10.0),
                rng.random_range(30e-6..300e-6),
                rng.random_range(1.0..2.5),
            ],
            &[1.0, 1e-5, 1.0],
        ));
        grad = grad.max(jacobian_gap(
            &fringe,
            &[
                rng.random_range(10.0..1e4),
                rng.random_range(-1e3..1e3),
                rng.random_range(-PI..PI),
            ],
            &[1.0, 1.0, 1.0],
        ));
    }
    ensure(grad < 1e-6, format!("Jacobian gap {grad:e}"))?;

    // The fringe fitter recovers a noiseless fringe exactly.
    let truth: Vec<f64> = phases
        .iter()
        .map(|p| 2000.0 * (1.0 + 0.966 * (p - 0.4).cos()))
        .collect();
    let v = fit_fringe(&phases, &truth, None).map_err(err)?.visibility;
    ensure(
        (v - 0.966).abs() < 1e-8,
        format!("noiseless fringe V = {v}"),
    )?;

    Ok(format!(
        "passivity, linearity, shift, KK {:.1e}, burning, Jacobian gap {grad:.1e}",
        kk / (d / 4.0)
    ))
}

fn payloads(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(err)? {
            let path = entry.map_err(err)?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "manifest.json") {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).map_err(err)?);
            }
        }
    }
    Ok(out)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_afcsim"))
            .args(["afc", "--seed", "7", "--out"])
            .arg(&out)
            .output()
            .map_err(err)?;
        ensure(
            status.status.success(),
            format!(
                "run {k} failed: {}",
                String::from_utf8_lossy(&status.stderr)
            ),
        )?;
        runs.push(payloads(&out)?);
    }
    ensure(!runs[0].is_empty(), "no output files")?;
    ensure(
        runs[0].keys().eq(runs[1].keys()),
        "runs emitted different file sets",
    )?;
    for (name, bytes) in &runs[0] {
        ensure(&runs[1][name] == bytes, format!("{name} differs"))?;
    }
    Ok(format!("{} files byte-identical", runs[0].len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (
            "closed-form efficiency points",
            Duration::from_secs(1),
            closed_form_points,
        ),
        ("optimum OD = 2F", Duration::from_secs(1), optimum_law),
        (
            "simulation vs closed form",
            Duration::from_secs(30),
            simulation_vs_theory,
        ),
        (
            "storage-time programmability",
            Duration::from_secs(120),
            storage_time_programmability,
        ),
        (
            "time-bin interference",
            Duration::from_secs(60),
            time_bin_interference,
        ),
        ("multimode storage", Duration::from_secs(60), multimode),
        ("broadband storage", Duration::from_secs(120), broadband),
        ("echo-decay fit", Duration::from_secs(60), echo_decay_fit),
        ("detection chain", Duration::from_secs(60), detection_chain),
        (
            "invariant suites",
            Duration::from_secs(300),
            invariant_suites,
        ),
        ("determinism", Duration::from_secs(300), determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(msg) if elapsed > limit => Err(format!("{msg}; took {elapsed:.2?} > {limit:?}")),
            other => other,
        };
        match result {
            Ok(msg) => println!("PASS {:>2} {name} [{elapsed:.2?}]: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{elapsed:.2?}]: {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
