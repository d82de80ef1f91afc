//! Time-bin qubit storage on two superimposed combs.
//!
//! Early and late input pulses, separated by `τ₂ − τ₁`, each produce echoes
//! at `τ₁` and `τ₂`. The early-input/late-comb and late-input/early-comb
//! paths coincide in the central output bin and interfere; the outer bins
//! carry one path each. The relative phase is applied to the early pulse.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::storage::{build_profile, detect, pulse_train, run};
use super::{config_hash, fidelity_bound, CombSource, DetectionSpec, FidelityBound, PulseSpec};
use crate::analysis::{fit_fringe, two_path_visibility, visibility_from_extrema, FringeFit};
use crate::detection::{derive_seed, CountHistogram};
use crate::error::{AfcError, Result};
use crate::propagation::{TemporalField, TransferFunction, WindowMeasurement};
use crate::spectral::{CombSpec, SubComb, ToothShape, DEFAULT_POINTS_PER_PERIOD};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBinConfig {
    /// Storage times of the two combs, shorter first.
    pub storage_times: [f64; 2],
    pub finesse: f64,
    pub peak_depth: f64,
    pub background_depth: f64,
    pub tooth_shape: ToothShape,
    pub comb_bandwidth: f64,
    /// Fixed comb weights; `None` searches for weights giving `target_ratio`.
    pub weights: Option<[f64; 2]>,
    /// Wanted `η₂/η₁` between the two single-path echoes.
    pub target_ratio: f64,
    /// Each pulse carries half of `pulse.mean_photon_number`.
    pub pulse: PulseSpec,
    pub bin_separation: f64,
    pub phases: Vec<f64>,
    pub window_halfwidth: Option<f64>,
    pub points_per_period: f64,
    pub detection: Option<DetectionSpec>,
}

impl Default for TimeBinConfig {
    fn default() -> Self {
        TimeBinConfig {
            storage_times: [300e-9, 350e-9],
            finesse: 2.5,
            peak_depth: 1.3,
            background_depth: 0.0,
            tooth_shape: ToothShape::Gaussian,
            comb_bandwidth: 200e6,
            weights: None,
            target_ratio: 1.0,
            pulse: PulseSpec {
                fwhm: 8.7e-9,
                mean_photon_number: 0.9,
            },
            bin_separation: 50e-9,
            phases: (0..12).map(|k| TAU * k as f64 / 12.0).collect(),
            window_halfwidth: None,
            // Twice the usual density keeps interpolation replicas of the
            // response out of the outer bins.
            points_per_period: 2.0 * DEFAULT_POINTS_PER_PERIOD,
            detection: None,
        }
    }
}

impl TimeBinConfig {
    fn halfwidth(&self) -> f64 {
        self.window_halfwidth.unwrap_or(2.0 * self.pulse.fwhm)
    }

    fn comb(&self, weights: [f64; 2]) -> CombSpec {
        CombSpec {
            tooth_spacing: 1.0 / self.storage_times[0],
            finesse: self.finesse,
            peak_depth: self.peak_depth,
            background_depth: self.background_depth,
            tooth_shape: self.tooth_shape,
            comb_bandwidth: self.comb_bandwidth,
            superimposed: vec![
                SubComb {
                    tooth_spacing: 1.0 / self.storage_times[0],
                    weight: weights[0],
                },
                SubComb {
                    tooth_spacing: 1.0 / self.storage_times[1],
                    weight: weights[1],
                },
            ],
        }
    }

    /// Output bin centers: `τ₁`, `τ₂`, `τ₂ + separation`.
    pub fn bin_centers(&self) -> [f64; 3] {
        let [t1, t2] = self.storage_times;
        [t1, t2, t2 + self.bin_separation]
    }
}

pub fn validate_time_bin(cfg: &TimeBinConfig) -> Result<Vec<String>> {
    cfg.pulse.validate()?;
    let [t1, t2] = cfg.storage_times;
    let (fwhm, w, sep) = (cfg.pulse.fwhm, cfg.halfwidth(), cfg.bin_separation);
    if !(t1 > 0.0 && t2 > t1) {
        return Err(AfcError::InvalidSpec(format!(
            "storage times must satisfy 0 < τ1 < τ2, got {t1:.3e} and {t2:.3e}"
        )));
    }
    if !((sep - (t2 - t1)).abs() <= 1e-3 * sep) {
        return Err(AfcError::InvalidSpec(format!(
            "bin separation {sep:.3e} s must equal τ2 − τ1 = {:.3e} s for the paths to meet",
            t2 - t1
        )));
    }
    if sep < 3.0 * fwhm || sep < 2.0 * w {
        return Err(AfcError::Overlap(format!(
            "bins {sep:.3e} s apart overlap for pulses of {fwhm:.3e} s and windows of ±{w:.3e} s"
        )));
    }
    if t1 < 3.0 * fwhm || t1 < 2.0 * w + sep {
        return Err(AfcError::Overlap(format!(
            "storage time {t1:.3e} s does not separate the echoes from the input pulses"
        )));
    }
    if let Some(wt) = cfg.weights {
        if wt.iter().any(|x| !(*x >= 0.0)) || wt.iter().sum::<f64>() <= 0.0 {
            return Err(AfcError::InvalidSpec(
                "comb weights must be non-negative, not both zero".into(),
            ));
        }
    }
    if !(cfg.target_ratio > 0.0) || !cfg.target_ratio.is_finite() {
        return Err(AfcError::InvalidSpec(format!(
            "target ratio must be positive, got {}",
            cfg.target_ratio
        )));
    }
    if cfg.phases.len() < 5 {
        return Err(AfcError::InvalidSpec(format!(
            "need at least 5 phases, got {}",
            cfg.phases.len()
        )));
    }
    cfg.comb(cfg.weights.unwrap_or([0.5, 0.5])).validate()?;
    if let Some(d) = &cfg.detection {
        d.validate()?;
    }
    Ok(Vec::new())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeDataset {
    pub phases: Vec<f64>,
    pub bin_centers: [f64; 3],
    /// Output photon number per bin for each phase.
    pub energies: Vec<[f64; 3]>,
    /// Photon number of each input pulse.
    pub input_energy: f64,
    pub weights: [f64; 2],
    /// Single-path efficiencies `η₁`, `η₂` of the two combs.
    pub path_efficiencies: [f64; 2],
    pub fit: FringeFit,
    pub visibility_from_extrema: f64,
    pub two_path_visibility: f64,
    /// `(max − min)/mean` of each outer bin over the phase sweep.
    pub outer_bin_variation: [f64; 2],
    pub fidelity: FidelityBound,
    pub counts: Option<Vec<CountHistogram>>,
    pub count_fit: Option<FringeFit>,
    pub config_hash: String,
    pub flags: Vec<String>,
}

impl FringeDataset {
    /// Columns `phase_rad, early_bin, central_bin, late_bin`, plus the
    /// three count columns when counts were sampled.
    pub fn to_table(&self) -> Table {
        let mut cols = vec!["phase_rad", "early_bin", "central_bin", "late_bin"];
        if self.counts.is_some() {
            cols.extend(["early_counts", "central_counts", "late_counts"]);
        }
        let mut t = Table::new(cols);
        for (i, (&phi, e)) in self.phases.iter().zip(&self.energies).enumerate() {
            let mut row = vec![phi.into(), e[0].into(), e[1].into(), e[2].into()];
            if let Some(c) = &self.counts {
                row.extend(c[i].counts.iter().map(|&k| crate::table::Cell::from(k)));
            }
            t.push(row);
        }
        t
    }
}

struct Setup {
    h: TransferFunction,
    end: f64,
}

fn setup(cfg: &TimeBinConfig, weights: [f64; 2]) -> Result<Setup> {
    let comb = CombSource::Analytic(cfg.comb(weights));
    let profile = build_profile(&comb, cfg.pulse.fwhm, cfg.points_per_period)?;
    Ok(Setup {
        h: crate::propagation::transfer_function(&profile),
        end: cfg.bin_centers()[2] + cfg.halfwidth() + 3.0 * cfg.pulse.fwhm,
    })
}

fn half_pulse(cfg: &TimeBinConfig) -> PulseSpec {
    PulseSpec {
        fwhm: cfg.pulse.fwhm,
        mean_photon_number: cfg.pulse.mean_photon_number / 2.0,
    }
}

fn bins(trace: &TemporalField, cfg: &TimeBinConfig, e_in: f64) -> Vec<WindowMeasurement> {
    let w = cfg.halfwidth();
    cfg.bin_centers()
        .iter()
        .map(|&c| {
            let (energy, centroid) = trace.window(c - w, c + w);
            WindowMeasurement {
                center: c,
                halfwidth: w,
                energy,
                efficiency: energy / e_in,
                centroid,
            }
        })
        .collect()
}

/// `(η₁, η₂)` from the early pulse alone.
fn path_efficiencies(cfg: &TimeBinConfig, s: &Setup) -> Result<[f64; 2]> {
    let p = half_pulse(cfg);
    let out = run(&pulse_train(&p, &[0.0], &[0.0], s.end)?, &s.h)?;
    let b = bins(&out, cfg, p.mean_photon_number);
    Ok([b[0].efficiency, b[1].efficiency])
}

/// Weight share of the first comb giving `η₂/η₁ = target`, by bisection.
fn balance(cfg: &TimeBinConfig) -> Result<[f64; 2]> {
    let ratio = |share: f64| -> Result<f64> {
        let s = setup(cfg, [share, 1.0 - share])?;
        let [e1, e2] = path_efficiencies(cfg, &s)?;
        Ok(e2 / e1)
    };
    let (mut lo, mut hi) = (0.02, 0.98);
    let (rlo, rhi) = (ratio(lo)?, ratio(hi)?);
    if !(rlo >= cfg.target_ratio && cfg.target_ratio >= rhi) {
        return Err(AfcError::InvalidSpec(format!(
            "target ratio {} is outside the reachable range [{rhi:.4}, {rlo:.4}]",
            cfg.target_ratio
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let r = ratio(mid)?;
        if (r / cfg.target_ratio - 1.0).abs() < 1e-4 {
            return Ok([mid, 1.0 - mid]);
        }
        if r > cfg.target_ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    Ok([mid, 1.0 - mid])
}

fn qubit_trace(cfg: &TimeBinConfig, s: &Setup, phase: f64) -> Result<TemporalField> {
    let input = pulse_train(
        &half_pulse(cfg),
        &[0.0, cfg.bin_separation],
        &[phase, 0.0],
        s.end,
    )?;
    run(&input, &s.h)
}

/// Output trace of the dual comb for one relative phase.
pub fn time_bin_trace(cfg: &TimeBinConfig, weights: [f64; 2], phase: f64) -> Result<TemporalField> {
    validate_time_bin(cfg)?;
    qubit_trace(cfg, &setup(cfg, weights)?, phase)
}

/// Sweeps the relative phase and fits the central-bin fringe.
pub fn time_bin_qubit(cfg: &TimeBinConfig) -> Result<FringeDataset> {
    let mut flags = validate_time_bin(cfg)?;
    let weights = match cfg.weights {
        Some(w) => w,
        None => balance(cfg)?,
    };
    let s = setup(cfg, weights)?;
    let path = path_efficiencies(cfg, &s)?;
    let e_in = cfg.pulse.mean_photon_number / 2.0;

    let mut energies = Vec::with_capacity(cfg.phases.len());
    let mut counts = cfg.detection.as_ref().map(|_| Vec::new());
    for (k, &phi) in cfg.phases.iter().enumerate() {
        let trace = qubit_trace(cfg, &s, phi)?;
        let b = bins(&trace, cfg, e_in);
        energies.push([b[0].energy, b[1].energy, b[2].energy]);
        if let (Some(d), Some(c)) = (&cfg.detection, counts.as_mut()) {
            let seed = derive_seed(d.rng_seed, k as u64);
            c.push(detect(&trace, d, &b, &[1], e_in, seed)?.histogram);
        }
    }

    let central: Vec<f64> = energies.iter().map(|e| e[1]).collect();
    let fit = fit_fringe(&cfg.phases, &central, None)?;
    let (cmin, cmax) = central
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let variation = |i: usize| {
        let v: Vec<f64> = energies.iter().map(|e| e[i]).collect();
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        if mean > 0.0 {
            (hi - lo) / mean
        } else {
            0.0
        }
    };
    let outer = [variation(0), variation(2)];
    // Outer bins are single-path, so any phase dependence there is numerical.
    let noise = energies
        .iter()
        .flat_map(|e| [e[0], e[2]])
        .fold(0.0f64, f64::max)
        * outer[0].max(outer[1])
        + 1e-12 * cmax;
    if fit.fit.value("B") < 10.0 * noise {
        flags.push(format!(
            "central-bin fringe amplitude {:.3e} is within 10x of the numerical noise {noise:.3e}",
            fit.fit.value("B")
        ));
    }

    let count_fit = match &counts {
        Some(c) => {
            let central: Vec<f64> = c.iter().map(|h| h.counts[1] as f64).collect();
            let sigma: Vec<f64> = central.iter().map(|x| x.max(1.0).sqrt()).collect();
            Some(fit_fringe(&cfg.phases, &central, Some(&sigma))?)
        }
        None => None,
    };
    let visibility = fit.visibility;
    Ok(FringeDataset {
        phases: cfg.phases.clone(),
        bin_centers: cfg.bin_centers(),
        energies,
        input_energy: e_in,
        weights,
        path_efficiencies: path,
        visibility_from_extrema: visibility_from_extrema(cmax, cmin)?,
        two_path_visibility: two_path_visibility(path[0], path[1]),
        outer_bin_variation: outer,
        fidelity: fidelity_bound(visibility.min(1.0)),
        fit,
        counts,
        count_fit,
        config_hash: config_hash(cfg),
        flags,
    })
}
