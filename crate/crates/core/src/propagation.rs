//! Linear propagation of a pulse envelope through the ensemble.
//!
//! The medium acts as the filter `h(ν) = exp(−d(ν)/2 + iφ(ν))` where the
//! phase is the Hilbert transform of `d/2` (minimum phase). Re-emission
//! after `1/Δ` is the first harmonic of the comb in this filter.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{AfcError, Result};
use crate::fft;
use crate::spectral::{OpticalDepthProfile, SpectralGrid};
use crate::table::Table;

/// Minimum fraction of the input spectral energy that must lie on the
/// transfer-function grid.
pub const MIN_SPECTRAL_COVERAGE: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl TimeGrid {
    /// Smallest grid starting at `start` with step `dt` that reaches `end`.
    pub fn covering(start: f64, end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(end > start) {
            return Err(AfcError::InvalidSpec(format!(
                "time grid needs dt > 0 and end > start (dt={dt}, [{start}, {end}])"
            )));
        }
        let n = ((end - start) / dt).ceil() as usize + 1;
        Ok(TimeGrid { t0: start, dt, n })
    }

    pub fn span(&self) -> f64 {
        self.dt * self.n as f64
    }
}

/// Complex envelope in √photons/s, so that `Σ|E|²·dt` is a photon number.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalField {
    t0: f64,
    dt: f64,
    samples: Vec<Complex64>,
}

impl TemporalField {
    pub fn new(t0: f64, dt: f64, samples: Vec<Complex64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(AfcError::InvalidSpec(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if samples.is_empty() {
            return Err(AfcError::InvalidSpec(
                "field needs at least one sample".into(),
            ));
        }
        Ok(TemporalField { t0, dt, samples })
    }

    pub fn zeros(grid: &TimeGrid) -> Self {
        TemporalField {
            t0: grid.t0,
            dt: grid.dt,
            samples: vec![Complex64::new(0.0, 0.0); grid.n],
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.samples.len() - 1)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.dt
    }

    /// Energy and energy-weighted centroid of the samples in `[start, end]`.
    pub fn window(&self, start: f64, end: f64) -> (f64, f64) {
        let (mut e, mut te) = (0.0, 0.0);
        for (i, c) in self.samples.iter().enumerate() {
            let t = self.time(i);
            if t >= start && t <= end {
                let p = c.norm_sqr();
                e += p;
                te += p * t;
            }
        }
        let centroid = if e > 0.0 { te / e } else { 0.5 * (start + end) };
        (e * self.dt, centroid)
    }

    /// Sample-wise `a·self + b·other` on an identical grid.
    pub fn combine(
        &self,
        a: Complex64,
        other: &TemporalField,
        b: Complex64,
    ) -> Result<TemporalField> {
        if self.samples.len() != other.samples.len() || self.dt != other.dt || self.t0 != other.t0 {
            return Err(AfcError::InvalidSpec(
                "fields live on different time grids".into(),
            ));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(TemporalField {
            t0: self.t0,
            dt: self.dt,
            samples,
        })
    }

    /// The samples at times up to `end`.
    pub fn truncated(&self, end: f64) -> TemporalField {
        let n = (((end - self.t0) / self.dt).floor() as usize + 1).clamp(1, self.samples.len());
        TemporalField {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples[..n].to_vec(),
        }
    }

    pub fn scaled(&self, c: Complex64) -> TemporalField {
        TemporalField {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples.iter().map(|x| c * x).collect(),
        }
    }

    /// Columns `time_s, re, im, abs2`, restricted to `[start, end]`.
    pub fn to_table(&self, start: f64, end: f64) -> Table {
        let mut t = Table::new(["time_s", "re", "im", "abs2"]);
        for (i, c) in self.samples.iter().enumerate() {
            let time = self.time(i);
            if time >= start && time <= end {
                t.push(vec![
                    time.into(),
                    c.re.into(),
                    c.im.into(),
                    c.norm_sqr().into(),
                ]);
            }
        }
        t
    }
}

/// Spectral intensity FWHM of a transform-limited gaussian of temporal
/// intensity FWHM `fwhm`: `2 ln2 / (π·fwhm) ≈ 0.441/fwhm`.
pub fn transform_limited_bandwidth(fwhm: f64) -> f64 {
    2.0 * LN_2 / (PI * fwhm)
}

/// Gaussian pulse of intensity FWHM `fwhm` holding exactly `mean_photons`
/// photons on the grid, with uniform phase factor `exp(i·phase)`.
pub fn make_gaussian_pulse(
    fwhm: f64,
    center: f64,
    mean_photons: f64,
    phase: f64,
    grid: &TimeGrid,
) -> Result<TemporalField> {
    if !(fwhm > 0.0) {
        return Err(AfcError::InvalidSpec(format!(
            "pulse FWHM must be positive, got {fwhm}"
        )));
    }
    if !(mean_photons >= 0.0) {
        return Err(AfcError::InvalidSpec(format!(
            "mean photon number must be non-negative, got {mean_photons}"
        )));
    }
    if grid.dt > fwhm / 10.0 * (1.0 + 1e-12) {
        return Err(AfcError::Resolution(format!(
            "time step {:.3e} s exceeds FWHM/10 = {:.3e} s",
            grid.dt,
            fwhm / 10.0
        )));
    }
    let mut field = TemporalField::zeros(grid);
    if mean_photons == 0.0 {
        return Ok(field);
    }
    let k = 2.0 * LN_2 / (fwhm * fwhm);
    let mut norm = 0.0;
    for (i, s) in field.samples.iter_mut().enumerate() {
        let u = grid.t0 + i as f64 * grid.dt - center;
        let a = (-k * u * u).exp();
        norm += a * a;
        *s = Complex64::new(a, 0.0);
    }
    norm *= grid.dt;
    if !(norm > 0.0) {
        return Err(AfcError::Window("pulse lies outside the time grid".into()));
    }
    let scale = Complex64::from_polar((mean_photons / norm).sqrt(), phase);
    for s in field.samples.iter_mut() {
        *s *= scale;
    }
    Ok(field)
}

/// Measured spectral intensity FWHM of a field (zero-padded FFT and
/// half-maximum crossings with linear interpolation).
pub fn spectral_fwhm(field: &TemporalField) -> Result<f64> {
    let n = (8 * field.len()).max(1 << 16).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..field.len()].copy_from_slice(field.samples());
    fft::forward(&mut buf);
    // Reorder to ascending frequency.
    let half = n / 2;
    let power: Vec<f64> = (0..n).map(|j| buf[(j + half) % n].norm_sqr()).collect();
    let (ipk, &peak) = power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    if !(peak > 0.0) {
        return Err(AfcError::Analysis("field has no spectral content".into()));
    }
    let level = peak / 2.0;
    let df = 1.0 / (n as f64 * field.dt());
    let lo = (0..ipk).rev().find(|&j| power[j] < level);
    let hi = (ipk + 1..n).find(|&j| power[j] < level);
    match (lo, hi) {
        (Some(a), Some(b)) => {
            let xa = a as f64 + (level - power[a]) / (power[a + 1] - power[a]);
            let xb = (b - 1) as f64 + (power[b - 1] - level) / (power[b - 1] - power[b]);
            Ok((xb - xa) * df)
        }
        _ => Err(AfcError::Analysis(
            "spectrum does not fall to half maximum".into(),
        )),
    }
}

/// `h(ν) = exp(−d(ν)/2 + iφ(ν))` on the profile's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    grid: SpectralGrid,
    h: Vec<Complex64>,
}

impl TransferFunction {
    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.h
    }

    pub fn phase(&self) -> Vec<f64> {
        self.h.iter().map(|c| c.arg()).collect()
    }

    /// Cubic (Catmull-Rom) interpolation in the complex plane; edge values
    /// held outside.
    pub fn at(&self, nu: f64) -> Complex64 {
        let g = &self.grid;
        let x = (nu - g.start()) / g.resolution();
        if x <= 0.0 {
            return self.h[0];
        }
        let last = self.h.len() - 1;
        if x >= last as f64 {
            return self.h[last];
        }
        let i = x.floor() as usize;
        let u = x - i as f64;
        // Catmull-Rom cubic; linear interpolation leaves replicas of the
        // impulse response at multiples of 1/resolution that the FFT folds
        // back into the time window.
        let p = |k: isize| self.h[(i as isize + k).clamp(0, last as isize) as usize];
        let (u2, u3) = (u * u, u * u * u);
        p(-1) * (-0.5 * u3 + u2 - 0.5 * u)
            + p(0) * (1.5 * u3 - 2.5 * u2 + 1.0)
            + p(1) * (-1.5 * u3 + 2.0 * u2 + 0.5 * u)
            + p(2) * (0.5 * u3 - 0.5 * u2)
    }

    /// Columns `freq_Hz, abs, phase_rad`, restricted to `[lo, hi]`.
    pub fn to_table(&self, lo: f64, hi: f64) -> Table {
        let mut t = Table::new(["freq_Hz", "abs", "phase_rad"]);
        for (nu, h) in self.grid.nodes().zip(&self.h) {
            if nu >= lo && nu <= hi {
                t.push(vec![nu.into(), h.norm().into(), h.arg().into()]);
            }
        }
        t
    }
}

/// Minimum-phase transfer function of an optical-depth profile.
///
/// The half-depth is extended flat beyond both grid edges before the FFT
/// Hilbert transform so the periodic wrap lies far from the data.
pub fn transfer_function(profile: &OpticalDepthProfile) -> TransferFunction {
    let d = profile.depth();
    let n = d.len();
    let m = (2 * n).next_power_of_two();
    let left = (m - n) / 2;
    let mut ext = vec![d[0] / 2.0; m];
    for (i, v) in d.iter().enumerate() {
        ext[left + i] = v / 2.0;
    }
    for v in ext.iter_mut().skip(left + n) {
        *v = d[n - 1] / 2.0;
    }
    let phi = fft::hilbert(&ext);
    let h = d
        .iter()
        .enumerate()
        .map(|(i, &di)| Complex64::from_polar((-di / 2.0).exp(), phi[left + i]))
        .collect();
    TransferFunction {
        grid: profile.grid().clone(),
        h,
    }
}

/// Fraction of spectral energy in `[lo, hi]` for an FFT buffer; `None`
/// when the buffer is empty of energy.
fn band_fraction(spectrum: &[Complex64], dt: f64, lo: f64, hi: f64) -> Option<f64> {
    let n = spectrum.len();
    let total: f64 = spectrum.iter().map(|c| c.norm_sqr()).sum();
    if !(total > 0.0) {
        return None;
    }
    let inside: f64 = spectrum
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = fft::bin_frequency(*k, n, dt);
            f >= lo && f <= hi
        })
        .map(|(_, c)| c.norm_sqr())
        .sum();
    Some(inside / total)
}

/// Fraction of the field's spectral energy at detunings in `[lo, hi]`.
pub fn spectral_energy_fraction(field: &TemporalField, lo: f64, hi: f64) -> Result<f64> {
    let n = (4 * field.len()).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..field.len()].copy_from_slice(field.samples());
    fft::forward(&mut buf);
    band_fraction(&buf, field.dt(), lo, hi)
        .ok_or_else(|| AfcError::Domain("field carries no energy".into()))
}

/// Filters `input` through `h`: zero-pad to the next power of two of at
/// least four times the input length, multiply the spectrum, and return
/// the full padded output window starting at the input's `t0`.
pub fn propagate(input: &TemporalField, h: &TransferFunction) -> Result<TemporalField> {
    let n = (4 * input.len()).next_power_of_two();
    let dt = input.dt();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..input.len()].copy_from_slice(input.samples());
    fft::forward(&mut buf);

    if let Some(coverage) = band_fraction(&buf, dt, h.grid().start(), h.grid().end()) {
        if coverage < MIN_SPECTRAL_COVERAGE {
            return Err(AfcError::Span(format!(
                "only {:.4}% of the input spectrum lies within the {:.3e} Hz transfer-function grid",
                100.0 * coverage,
                h.grid().span()
            )));
        }
    }

    for (k, x) in buf.iter_mut().enumerate() {
        *x *= h.at(fft::bin_frequency(k, n, dt));
    }
    fft::inverse(&mut buf);
    TemporalField::new(input.t0(), dt, buf)
}

/// Energy, efficiency and centroid of one time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMeasurement {
    pub center: f64,
    pub halfwidth: f64,
    pub energy: f64,
    pub efficiency: f64,
    pub centroid: f64,
}

/// Fraction of `input_energy` found in `[τ − w, τ + w]`.
///
/// The input pulse is taken to be centered at `t = 0`; a window that
/// partially overlaps the leakage window `[−w, w]` is rejected, while
/// `τ = 0` measures the leakage itself.
pub fn echo_efficiency(
    trace: &TemporalField,
    tau: f64,
    halfwidth: f64,
    input_energy: f64,
) -> Result<WindowMeasurement> {
    if !(halfwidth > 0.0) {
        return Err(AfcError::Window(format!(
            "window half-width must be positive, got {halfwidth}"
        )));
    }
    if !(input_energy > 0.0) {
        return Err(AfcError::Window(format!(
            "input energy must be positive, got {input_energy}"
        )));
    }
    if tau != 0.0 && tau.abs() < 2.0 * halfwidth {
        return Err(AfcError::Window(format!(
            "echo window at {tau:.3e} s ± {halfwidth:.3e} s overlaps the leakage window at t = 0"
        )));
    }
    let (start, end) = (tau - halfwidth, tau + halfwidth);
    if start < trace.t0() || end > trace.end() {
        return Err(AfcError::Window(format!(
            "window [{start:.3e}, {end:.3e}] s is outside the trace [{:.3e}, {:.3e}] s",
            trace.t0(),
            trace.end()
        )));
    }
    let (energy, centroid) = trace.window(start, end);
    Ok(WindowMeasurement {
        center: tau,
        halfwidth,
        energy,
        efficiency: energy / input_energy,
        centroid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_analytic_comb, CombSpec};

    fn pulse(fwhm: f64, nbar: f64, end: f64) -> TemporalField {
        let grid = TimeGrid::covering(-3.0 * fwhm, end, fwhm / 10.0).unwrap();
        make_gaussian_pulse(fwhm, 0.0, nbar, 0.0, &grid).unwrap()
    }

    #[test]
    fn pulse_energy_and_bandwidth() {
        let p = pulse(8.7e-9, 1.0, 400e-9);
        assert!((p.energy() - 1.0).abs() < 1e-12);
        assert!((transform_limited_bandwidth(200e-12) - 2.2e9).abs() / 2.2e9 < 0.01);
        let bw = transform_limited_bandwidth(8.7e-9);
        assert!((bw - 50.7e6).abs() < 0.1e6, "{bw}");
        let measured = spectral_fwhm(&p).unwrap();
        assert!((measured - bw).abs() / bw < 1e-3, "{measured} vs {bw}");
    }

    #[test]
    fn zero_photons_gives_zero_field() {
        let p = pulse(8.7e-9, 0.0, 100e-9);
        assert!(p.samples().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn coarse_time_step_is_rejected() {
        let grid = TimeGrid::covering(0.0, 1e-6, 1e-9).unwrap();
        assert!(matches!(
            make_gaussian_pulse(8.7e-9, 0.0, 1.0, 0.0, &grid),
            Err(AfcError::Resolution(_))
        ));
    }

    #[test]
    fn flat_and_empty_media() {
        let grid = SpectralGrid::with_resolution(0.0, 2.3e9, 83e3).unwrap();
        let zero = transfer_function(&OpticalDepthProfile::flat(grid.clone(), 0.0).unwrap());
        assert!(zero
            .values()
            .iter()
            .all(|h| (h - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let od = 1.31;
        let flat = transfer_function(&OpticalDepthProfile::flat(grid, od).unwrap());
        for h in flat.values() {
            assert!((h.norm() - (-od / 2.0f64).exp()).abs() < 1e-14);
            assert!(h.arg().abs() < 1e-12);
        }

        let p = pulse(8.7e-9, 1.0, 400e-9);
        let out = propagate(&p, &zero).unwrap();
        assert!((out.energy() - p.energy()).abs() < 1e-12);
        let out = propagate(&p, &flat).unwrap();
        assert!(
            (out.energy() - (-od).exp()).abs() < 1e-9,
            "{}",
            out.energy()
        );
    }

    #[test]
    fn echo_appears_after_storage_time() {
        let spec = CombSpec::single(1.0 / 300e-9, 2.5, 1.3, 200e6);
        let grid =
            SpectralGrid::for_comb(0.0, spec.tooth_spacing, spec.comb_bandwidth, 8.7e-9, 40.0)
                .unwrap();
        let h = transfer_function(&build_analytic_comb(&spec, &grid).unwrap());
        let p = pulse(8.7e-9, 1.0, 300e-9 + 3.0 * 8.7e-9);
        let out = propagate(&p, &h).unwrap();
        let echo = echo_efficiency(&out, 300e-9, 17.4e-9, 1.0).unwrap();
        assert!((echo.centroid - 300e-9).abs() < 8.7e-9, "{echo:?}");
        assert!(
            echo.efficiency > 0.03 && echo.efficiency < 0.07,
            "{}",
            echo.efficiency
        );
    }

    #[test]
    fn output_is_causal() {
        let spec = CombSpec::single(1.0 / 300e-9, 2.5, 1.3, 200e6);
        let grid =
            SpectralGrid::for_comb(0.0, spec.tooth_spacing, spec.comb_bandwidth, 8.7e-9, 40.0)
                .unwrap();
        let h = transfer_function(&build_analytic_comb(&spec, &grid).unwrap());
        let tg = TimeGrid::covering(0.0, 700e-9, 0.87e-9).unwrap();
        let p = make_gaussian_pulse(8.7e-9, 200e-9, 1.0, 0.0, &tg).unwrap();
        let out = propagate(&p, &h).unwrap();
        let (before_in, _) = p.window(0.0, 150e-9);
        let (before_out, _) = out.window(0.0, 150e-9);
        assert!(before_in < 1e-12);
        // Anything here would be response arriving ahead of the input.
        assert!(before_out < 1e-6, "{before_out}");
    }

    #[test]
    fn window_rules() {
        let p = pulse(8.7e-9, 1.0, 400e-9);
        assert!(matches!(
            echo_efficiency(&p, 20e-9, 17.4e-9, 1.0),
            Err(AfcError::Window(_))
        ));
        assert!(matches!(
            echo_efficiency(&p, 1e-6, 17.4e-9, 1.0),
            Err(AfcError::Window(_))
        ));
        let zero = echo_efficiency(&p, 300e-9, 17.4e-9, 1.0).unwrap();
        assert_eq!(zero.efficiency, 0.0);
        let leak = echo_efficiency(&p, 0.0, 17.4e-9, 1.0).unwrap();
        // ±2 FWHM holds all but ~1e-5 of a gaussian pulse.
        assert!((leak.efficiency - 1.0).abs() < 1e-4, "{}", leak.efficiency);
    }

    #[test]
    fn narrow_grid_is_a_span_error() {
        let grid = SpectralGrid::with_resolution(0.0, 20e6, 83e3).unwrap();
        let h = transfer_function(&OpticalDepthProfile::flat(grid, 1.0).unwrap());
        let p = pulse(8.7e-9, 1.0, 100e-9);
        assert!(matches!(propagate(&p, &h), Err(AfcError::Span(_))));
    }
}
