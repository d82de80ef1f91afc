//! Spectral population of the ensemble: the detuning grid, optical-depth
//! profiles, analytic comb construction and spectral hole burning.
//!
//! Frequencies are ordinary frequencies in Hz, so a comb of tooth spacing
//! `Δ` stores light for `τ = 1/Δ`.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{AfcError, Result};
use crate::fft;
use crate::table::Table;

/// Finest admissible grid spacing relative to the comb tooth spacing.
pub const MIN_POINTS_PER_PERIOD: f64 = 20.0;
/// Default number of grid nodes per tooth spacing.
pub const DEFAULT_POINTS_PER_PERIOD: f64 = 40.0;

/// Uniform detuning axis `ν_k = center - span/2 + k·span/(n_points-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    center_frequency_offset: f64,
    span: f64,
    n_points: usize,
}

impl SpectralGrid {
    pub fn new(center_frequency_offset: f64, span: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(AfcError::InvalidSpec(format!(
                "spectral grid needs at least 2 points, got {n_points}"
            )));
        }
        if !(span > 0.0) || !span.is_finite() {
            return Err(AfcError::InvalidSpec(format!(
                "spectral span must be positive, got {span}"
            )));
        }
        if !center_frequency_offset.is_finite() {
            return Err(AfcError::InvalidSpec("grid center must be finite".into()));
        }
        Ok(SpectralGrid {
            center_frequency_offset,
            span,
            n_points,
        })
    }

    /// Grid with an odd number of nodes, a node exactly at the center, the
    /// given node spacing, and a span of at least `min_span`.
    pub fn with_resolution(center: f64, min_span: f64, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) || !(min_span > 0.0) {
            return Err(AfcError::InvalidSpec(format!(
                "grid resolution {resolution} and span {min_span} must be positive"
            )));
        }
        let half = (min_span / 2.0 / resolution).ceil().max(1.0) as usize;
        Self::new(center, 2.0 * half as f64 * resolution, 2 * half + 1)
    }

    /// Default grid for a comb: span `max(20/pulse_fwhm, 4·comb_bandwidth)`
    /// at `points_per_period` nodes per (smallest) tooth spacing.
    pub fn for_comb(
        center: f64,
        tooth_spacing: f64,
        comb_bandwidth: f64,
        pulse_fwhm: f64,
        points_per_period: f64,
    ) -> Result<Self> {
        if !(pulse_fwhm > 0.0) {
            return Err(AfcError::InvalidSpec("pulse FWHM must be positive".into()));
        }
        let span = (20.0 / pulse_fwhm).max(4.0 * comb_bandwidth);
        Self::with_resolution(center, span, tooth_spacing / points_per_period)
    }

    pub fn center(&self) -> f64 {
        self.center_frequency_offset
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn resolution(&self) -> f64 {
        self.span / (self.n_points - 1) as f64
    }

    pub fn start(&self) -> f64 {
        self.center_frequency_offset - self.span / 2.0
    }

    pub fn end(&self) -> f64 {
        self.center_frequency_offset + self.span / 2.0
    }

    pub fn node(&self, k: usize) -> f64 {
        self.start() + k as f64 * self.resolution()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |k| self.node(k))
    }

    /// Fails unless the node spacing is at most `spacing / 20`.
    pub fn check_resolves(&self, spacing: f64) -> Result<()> {
        let res = self.resolution();
        if res > spacing / MIN_POINTS_PER_PERIOD * (1.0 + 1e-9) {
            return Err(AfcError::Resolution(format!(
                "grid resolution {res:.4e} Hz is coarser than spacing/{MIN_POINTS_PER_PERIOD} = {:.4e} Hz",
                spacing / MIN_POINTS_PER_PERIOD
            )));
        }
        Ok(())
    }

    /// Fractional node position of `nu`, or `None` outside the grid.
    fn locate(&self, nu: f64) -> Option<(usize, f64)> {
        let x = (nu - self.start()) / self.resolution();
        if x < 0.0 || x > (self.n_points - 1) as f64 {
            return None;
        }
        let i = (x.floor() as usize).min(self.n_points - 2);
        Some((i, x - i as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Burned,
}

/// Optical depth `d(ν) = α(ν)·L` sampled on a [`SpectralGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalDepthProfile {
    grid: SpectralGrid,
    depth: Vec<f64>,
    provenance: Provenance,
}

impl OpticalDepthProfile {
    pub fn new(grid: SpectralGrid, depth: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if depth.len() != grid.len() {
            return Err(AfcError::InvalidSpec(format!(
                "profile has {} values for {} grid nodes",
                depth.len(),
                grid.len()
            )));
        }
        if let Some(bad) = depth.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
            return Err(AfcError::InvalidSpec(format!(
                "optical depth must be finite and non-negative, got {bad}"
            )));
        }
        Ok(OpticalDepthProfile {
            grid,
            depth,
            provenance,
        })
    }

    /// Un-burned line: constant depth over the whole grid.
    pub fn flat(grid: SpectralGrid, depth: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![depth; n], Provenance::Analytic)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn max_depth(&self) -> f64 {
        self.depth.iter().cloned().fold(0.0, f64::max)
    }

    /// Linear interpolation; the edge values are held outside the grid.
    pub fn depth_at(&self, nu: f64) -> f64 {
        match self.grid.locate(nu) {
            Some((i, frac)) => self.depth[i] * (1.0 - frac) + self.depth[i + 1] * frac,
            None if nu < self.grid.start() => self.depth[0],
            None => self.depth[self.depth.len() - 1],
        }
    }

    /// Two-column export restricted to `[lo, hi]`.
    pub fn to_table(&self, lo: f64, hi: f64) -> Table {
        let mut t = Table::new(["frequency_Hz", "optical_depth"]);
        for (nu, d) in self.grid.nodes().zip(&self.depth) {
            if nu >= lo && nu <= hi {
                t.push(vec![nu.into(), (*d).into()]);
            }
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ToothShape {
    #[default]
    Gaussian,
    Square,
}

impl ToothShape {
    /// Unit-peak tooth of unit FWHM (gaussian) or unit width (square).
    pub fn eval(self, x: f64) -> f64 {
        match self {
            ToothShape::Gaussian => (-4.0 * LN_2 * x * x).exp(),
            ToothShape::Square => {
                if x.abs() <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-extent, in tooth widths, beyond which the tooth is negligible.
    pub fn support(self) -> f64 {
        match self {
            ToothShape::Gaussian => 6.0,
            ToothShape::Square => 0.5,
        }
    }
}

/// One of several superimposed combs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubComb {
    pub tooth_spacing: f64,
    pub weight: f64,
}

/// Declarative target comb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    pub tooth_spacing: f64,
    pub finesse: f64,
    pub peak_depth: f64,
    pub background_depth: f64,
    pub tooth_shape: ToothShape,
    pub comb_bandwidth: f64,
    /// Superimposed combs; empty means a single comb of `tooth_spacing` with unit weight.
    #[serde(default)]
    pub superimposed: Vec<SubComb>,
}

impl CombSpec {
    pub fn single(tooth_spacing: f64, finesse: f64, peak_depth: f64, comb_bandwidth: f64) -> Self {
        CombSpec {
            tooth_spacing,
            finesse,
            peak_depth,
            background_depth: 0.0,
            tooth_shape: ToothShape::Gaussian,
            comb_bandwidth,
            superimposed: Vec::new(),
        }
    }

    pub fn storage_time(&self) -> f64 {
        1.0 / self.tooth_spacing
    }

    pub fn tooth_width(&self) -> f64 {
        self.tooth_spacing / self.finesse
    }

    /// Component combs, falling back to the primary spacing.
    pub fn components(&self) -> Vec<SubComb> {
        if self.superimposed.is_empty() {
            vec![SubComb {
                tooth_spacing: self.tooth_spacing,
                weight: 1.0,
            }]
        } else {
            self.superimposed.clone()
        }
    }

    /// Smallest tooth spacing among the components.
    pub fn finest_spacing(&self) -> f64 {
        self.components()
            .iter()
            .map(|c| c.tooth_spacing)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AfcError::InvalidSpec(m));
        if !(self.finesse > 1.0) {
            return bad(format!("finesse must exceed 1, got {}", self.finesse));
        }
        if !(self.background_depth >= 0.0) || !(self.peak_depth >= self.background_depth) {
            return bad(format!(
                "need 0 <= background depth ({}) <= peak depth ({})",
                self.background_depth, self.peak_depth
            ));
        }
        for c in self.components() {
            if !(c.tooth_spacing > 0.0) {
                return bad(format!(
                    "tooth spacing must be positive, got {}",
                    c.tooth_spacing
                ));
            }
            if !(c.weight >= 0.0) {
                return bad(format!(
                    "comb weight must be non-negative, got {}",
                    c.weight
                ));
            }
            if !(self.comb_bandwidth >= 5.0 * c.tooth_spacing * (1.0 - 1e-12)) {
                return bad(format!(
                    "comb bandwidth {:.4e} Hz is below 5 tooth spacings ({:.4e} Hz)",
                    self.comb_bandwidth,
                    5.0 * c.tooth_spacing
                ));
            }
        }
        Ok(())
    }
}

/// Builds `d(ν) = d₀ + (d_peak − d₀)·Σ T((ν − kΔ)/γ)` inside the comb band
/// and `d_peak` outside it. Superimposed combs add their weighted tooth
/// patterns before the result is clamped to `[d₀, d_peak]`.
pub fn build_analytic_comb(spec: &CombSpec, grid: &SpectralGrid) -> Result<OpticalDepthProfile> {
    spec.validate()?;
    let components = spec.components();
    for c in &components {
        grid.check_resolves(c.tooth_spacing)?;
    }
    let shape = spec.tooth_shape;
    let contrast = spec.peak_depth - spec.background_depth;
    let half_band = spec.comb_bandwidth / 2.0;
    let center = grid.center();

    let depth = grid
        .nodes()
        .map(|nu| {
            let x = nu - center;
            if x.abs() > half_band {
                return spec.peak_depth;
            }
            let pattern: f64 = components
                .iter()
                .map(|c| {
                    let gamma = c.tooth_spacing / spec.finesse;
                    let reach = (shape.support() * gamma / c.tooth_spacing).ceil() as i64 + 1;
                    let k0 = (x / c.tooth_spacing).round() as i64;
                    let teeth: f64 = (k0 - reach..=k0 + reach)
                        .map(|k| shape.eval((x - k as f64 * c.tooth_spacing) / gamma))
                        .sum();
                    c.weight * teeth
                })
                .sum();
            (spec.background_depth + contrast * pattern)
                .clamp(spec.background_depth, spec.peak_depth)
        })
        .collect();
    OpticalDepthProfile::new(grid.clone(), depth, Provenance::Analytic)
}

/// Physical burn-pulse train that carves a comb by spectral hole burning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnSequence {
    pub pulse_fwhm: f64,
    pub pulse_spacing: f64,
    pub pulses_per_train: usize,
    pub train_repetitions: usize,
    /// Saturation coefficient per repetition.
    pub burn_strength: f64,
    pub carrier_detuning: f64,
}

impl BurnSequence {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AfcError::InvalidSpec(m));
        if !(self.pulse_fwhm > 0.0) || !(self.pulse_spacing > 0.0) {
            return bad("burn pulse FWHM and spacing must be positive".into());
        }
        if self.pulses_per_train > 1 && self.pulse_fwhm >= self.pulse_spacing {
            return bad(format!(
                "burn pulse FWHM {:.3e} s must be shorter than the spacing {:.3e} s",
                self.pulse_fwhm, self.pulse_spacing
            ));
        }
        if self.pulses_per_train == 0 || self.train_repetitions == 0 {
            return bad("burn train needs at least one pulse and one repetition".into());
        }
        if !(self.burn_strength >= 0.0) || !self.burn_strength.is_finite() {
            return bad(format!(
                "burn strength must be non-negative, got {}",
                self.burn_strength
            ));
        }
        if !self.carrier_detuning.is_finite() {
            return bad("carrier detuning must be finite".into());
        }
        Ok(())
    }

    /// Total exposure `κ·R`.
    pub fn exposure(&self) -> f64 {
        self.burn_strength * self.train_repetitions as f64
    }
}

/// Unit-peak power spectral density of one burn train on the grid nodes,
/// computed by FFT of the sampled train envelope.
pub fn burn_train_psd(seq: &BurnSequence, grid: &SpectralGrid) -> Result<Vec<f64>> {
    seq.validate()?;
    let res = grid.resolution();
    let envelope_width = 2.0 * LN_2 / (std::f64::consts::PI * seq.pulse_fwhm);
    let fringe_width = if seq.pulses_per_train > 1 {
        1.0 / (seq.pulses_per_train as f64 * seq.pulse_spacing)
    } else {
        f64::INFINITY
    };
    if envelope_width.min(fringe_width) < res {
        return Err(AfcError::Resolution(format!(
            "burn spectrum feature width {:.4e} Hz is narrower than the grid resolution {res:.4e} Hz",
            envelope_width.min(fringe_width)
        )));
    }

    // Sample fast enough to cover every grid node after the carrier shift.
    let reach = (grid.start() - seq.carrier_detuning)
        .abs()
        .max((grid.end() - seq.carrier_detuning).abs());
    let dt = (seq.pulse_fwhm / 10.0).min(1.0 / (2.0 * reach * 1.05));
    let duration = (seq.pulses_per_train - 1) as f64 * seq.pulse_spacing + 8.0 * seq.pulse_fwhm;
    let n_train = (duration / dt).ceil() as usize + 1;
    let n_res = (4.0 / (res * dt)).ceil() as usize;
    let n_fft = n_train.max(n_res).next_power_of_two();

    let sigma_amp = seq.pulse_fwhm / (2.0 * (LN_2).sqrt());
    let t_first = 4.0 * seq.pulse_fwhm;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (i, v) in buf.iter_mut().take(n_train).enumerate() {
        let t = i as f64 * dt;
        let amp: f64 = (0..seq.pulses_per_train)
            .map(|p| {
                let u = (t - t_first - p as f64 * seq.pulse_spacing) / sigma_amp;
                (-0.5 * u * u).exp()
            })
            .sum();
        *v = Complex64::new(amp, 0.0);
    }
    fft::forward(&mut buf);
    let power: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
    let peak = power.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(AfcError::Analysis(
            "burn train has no spectral power".into(),
        ));
    }

    let df = 1.0 / (n_fft as f64 * dt);
    let lookup = |f: f64| -> f64 {
        let x = f / df;
        let lo = x.floor();
        let frac = x - lo;
        let at = |k: i64| power[k.rem_euclid(n_fft as i64) as usize];
        let lo = lo as i64;
        (at(lo) * (1.0 - frac) + at(lo + 1) * frac) / peak
    };
    Ok(grid
        .nodes()
        .map(|nu| lookup(nu - seq.carrier_detuning))
        .collect())
}

/// Saturating hole burning: `d_after = d_before · exp(−κ·R·P̂(ν))`.
pub fn burn_comb(initial: &OpticalDepthProfile, seq: &BurnSequence) -> Result<OpticalDepthProfile> {
    seq.validate()?;
    let exposure = seq.exposure();
    if exposure == 0.0 {
        return OpticalDepthProfile::new(
            initial.grid.clone(),
            initial.depth.clone(),
            Provenance::Burned,
        );
    }
    let psd = burn_train_psd(seq, &initial.grid)?;
    let depth = initial
        .depth
        .iter()
        .zip(&psd)
        .map(|(d, p)| d * (-exposure * p).exp())
        .collect();
    OpticalDepthProfile::new(initial.grid.clone(), depth, Provenance::Burned)
}

/// Half-contrast full width, in units of the spacing, of a unit-height
/// gaussian tooth lattice with FWHM `g` (also in units of the spacing),
/// clamped at unit depth the way [`build_analytic_comb`] clamps.
fn lattice_half_contrast_width(g: f64) -> f64 {
    let reach = (6.0 * g).ceil() as i64 + 2;
    let p = |x: f64| -> f64 {
        (-reach..=reach)
            .map(|k| ToothShape::Gaussian.eval((x - k as f64) / g))
            .sum::<f64>()
            .min(1.0)
    };
    let peak = p(0.0);
    let trough = p(0.5);
    let level = 0.5 * (peak + trough);
    let (mut lo, mut hi) = (0.0, 0.5);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if p(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + hi
}

/// Model-free finesse `Δ/w`, with `w` the half-contrast width per period.
///
/// Three periods around the grid center are examined. In each, the level
/// halfway between the period's maximum and minimum is found and `w` is the
/// total frequency measure above that level (linear interpolation between
/// nodes). For single-peaked teeth this is the half-contrast tooth width;
/// flat-topped burned teeth with side-lobe ripple are handled alike.
pub fn half_contrast_finesse(profile: &OpticalDepthProfile, spacing: f64) -> Result<f64> {
    let grid = profile.grid();
    let d = profile.depth();
    if !(spacing > 0.0) {
        return Err(AfcError::Analysis("tooth spacing must be positive".into()));
    }
    if grid.span() < 5.0 * spacing {
        return Err(AfcError::Analysis(format!(
            "profile spans {:.3e} Hz, fewer than 3 periods of {spacing:.3e} Hz around the teeth",
            grid.span()
        )));
    }
    if grid.resolution() > spacing / 8.0 {
        return Err(AfcError::Analysis(
            "grid too coarse to resolve teeth".into(),
        ));
    }
    let res = grid.resolution();
    let c = grid.center();
    let mut widths = Vec::with_capacity(3);
    for k in -1..=1 {
        let (lo, hi) = (
            c + (k as f64 - 0.5) * spacing,
            c + (k as f64 + 0.5) * spacing,
        );
        let first = ((lo - grid.start()) / res).floor() as usize;
        let last = (((hi - grid.start()) / res).ceil() as usize).min(d.len() - 1);
        let (mut peak, mut trough) = (f64::NEG_INFINITY, f64::INFINITY);
        for &v in &d[first..=last] {
            peak = peak.max(v);
            trough = trough.min(v);
        }
        let contrast = peak - trough;
        if !(contrast > 1e-9 * peak.abs().max(f64::MIN_POSITIVE)) {
            return Err(AfcError::Analysis("no periodic teeth detected".into()));
        }
        let level = trough + 0.5 * contrast;
        let mut width = 0.0;
        for j in first..last {
            let (a, b) = (grid.node(j), grid.node(j + 1));
            let (da, db) = (d[j] - level, d[j + 1] - level);
            // Sub-interval of [a, b] where the interpolant exceeds the level.
            let (s, e) = if da >= 0.0 && db >= 0.0 {
                (a, b)
            } else if da < 0.0 && db < 0.0 {
                continue;
            } else {
                let x = a + da / (da - db) * res;
                if da >= 0.0 {
                    (a, x)
                } else {
                    (x, b)
                }
            };
            width += (e.min(hi) - s.max(lo)).max(0.0);
        }
        widths.push(width);
    }
    Ok(3.0 * spacing / widths.iter().sum::<f64>())
}

/// Gaussian-tooth finesse `Δ/γ` measured from a profile.
///
/// Overlapping gaussian teeth narrow the half-contrast width, so the width
/// behind [`half_contrast_finesse`] is mapped back to the FWHM of the
/// gaussian tooth lattice of spacing `Δ` that has the same half-contrast
/// width.
pub fn effective_finesse(profile: &OpticalDepthProfile, spacing: f64) -> Result<f64> {
    let ratio = 1.0 / half_contrast_finesse(profile, spacing)?;

    // Invert the (monotone) lattice width map for the tooth FWHM.
    let (mut lo, mut hi) = (1e-4, 0.95);
    if ratio >= lattice_half_contrast_width(hi) {
        return Err(AfcError::Analysis(format!(
            "teeth overlap too strongly to measure (half-contrast width {ratio:.4} of the spacing)"
        )));
    }
    if ratio <= lattice_half_contrast_width(lo) {
        return Err(AfcError::Analysis(
            "teeth narrower than the grid can resolve".into(),
        ));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if lattice_half_contrast_width(mid) < ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(2.0 / (lo + hi))
}
