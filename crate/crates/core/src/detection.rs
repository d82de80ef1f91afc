//! Measurement chain: facet coupling, gate and detector efficiencies,
//! fluorescence and dark-count noise, Poisson photon counting, photon-number
//! calibration and noise-per-retrieved-photon accounting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{AfcError, Result};
use crate::propagation::TemporalField;
use crate::table::Table;

/// Spontaneous-emission background left over from comb preparation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fluorescence {
    /// Excited-state fraction at the end of the burn (assumed saturated).
    pub excited_fraction_at_burn_end: f64,
    /// Optical lifetime T₁ (s).
    pub lifetime: f64,
    /// Wait between burn and probe (s).
    pub wait: f64,
    /// Emitters × collection into the guided mode.
    pub collection_factor: f64,
}

impl Default for Fluorescence {
    fn default() -> Self {
        Fluorescence {
            excited_fraction_at_burn_end: 0.5,
            lifetime: 2.85e-3,
            wait: 15e-3,
            collection_factor: 3.0e4,
        }
    }
}

impl Fluorescence {
    /// `exp(−wait/T₁)`.
    pub fn suppression(&self) -> f64 {
        (-self.wait / self.lifetime).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionChain {
    pub facet_coupling: f64,
    pub gate_transmission: f64,
    pub detector_efficiency: f64,
    /// Detector dark-count rate (counts/s).
    pub dark_rate: f64,
    pub fluorescence: Fluorescence,
}

impl Default for DetectionChain {
    fn default() -> Self {
        DetectionChain {
            facet_coupling: 0.05,
            gate_transmission: 0.40,
            detector_efficiency: 0.60,
            dark_rate: 0.0,
            fluorescence: Fluorescence::default(),
        }
    }
}

impl DetectionChain {
    /// Noise-free chain with the default efficiencies.
    pub fn noiseless() -> Self {
        DetectionChain {
            fluorescence: Fluorescence {
                excited_fraction_at_burn_end: 0.0,
                ..Fluorescence::default()
            },
            ..DetectionChain::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("facet_coupling", self.facet_coupling),
            ("gate_transmission", self.gate_transmission),
            ("detector_efficiency", self.detector_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(AfcError::InvalidSpec(format!(
                    "{name} must lie in (0, 1], got {v}"
                )));
            }
        }
        let f = &self.fluorescence;
        if !(self.dark_rate >= 0.0)
            || !(f.excited_fraction_at_burn_end >= 0.0 && f.excited_fraction_at_burn_end <= 1.0)
            || !(f.lifetime > 0.0)
            || !(f.wait >= 0.0)
            || !(f.collection_factor >= 0.0)
        {
            return Err(AfcError::InvalidSpec(
                "dark rate, fluorescence fraction, lifetime, wait and collection factor must be physical".into(),
            ));
        }
        Ok(())
    }

    /// Probability that a photon inside the device is counted.
    pub fn total_efficiency(&self) -> f64 {
        self.facet_coupling * self.gate_transmission * self.detector_efficiency
    }

    /// Mean background counts in a window of length `window` (s).
    pub fn noise_mean(&self, window: f64) -> f64 {
        fluorescence_noise_mean(self, window) + self.dark_rate * window
    }
}

/// Mean fluorescence counts detected in a window:
/// `p_e · exp(−wait/T₁) · collection · (window/T₁) · η_chain`.
pub fn fluorescence_noise_mean(chain: &DetectionChain, window: f64) -> f64 {
    let f = &chain.fluorescence;
    f.excited_fraction_at_burn_end
        * f.suppression()
        * f.collection_factor
        * (window / f.lifetime)
        * chain.total_efficiency()
}

/// Time bin `[start, end)`.
pub type Bin = (f64, f64);

/// Mean detected counts per bin for one shot of `trace`.
pub fn detected_mean(trace: &TemporalField, chain: &DetectionChain, bins: &[Bin]) -> Vec<f64> {
    let eta = chain.total_efficiency();
    bins.iter()
        .map(|&(start, end)| {
            let energy: f64 = trace
                .samples()
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    let t = trace.time(*i);
                    t >= start && t < end
                })
                .map(|(_, c)| c.norm_sqr())
                .sum::<f64>()
                * trace.dt();
            energy * eta + chain.noise_mean(end - start)
        })
        .collect()
}

/// Seed of the `run_index`-th run derived from a base seed.
pub fn derive_seed(base_seed: u64, run_index: u64) -> u64 {
    base_seed.wrapping_add(run_index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub bins: Vec<Bin>,
    pub counts: Vec<u64>,
    pub repetitions: u64,
    pub rng_seed: u64,
}

impl CountHistogram {
    /// Columns `bin_start_s, bin_end_s, counts`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["bin_start_s", "bin_end_s", "counts"]);
        for (&(a, b), &c) in self.bins.iter().zip(&self.counts) {
            t.push(vec![a.into(), b.into(), c.into()]);
        }
        t
    }
}

fn check_means(means: &[f64]) -> Result<()> {
    if let Some(m) = means.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
        return Err(AfcError::Domain(format!(
            "count means must be finite and non-negative, got {m}"
        )));
    }
    Ok(())
}

/// Calls `sink(bin, count)` for every bin of every repetition, in
/// repetition-major order, from one seeded stream.
fn draw(
    means: &[f64],
    repetitions: u64,
    rng_seed: u64,
    mut sink: impl FnMut(usize, u64),
) -> Result<()> {
    check_means(means)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let dists: Vec<Option<Poisson<f64>>> = means
        .iter()
        .map(|&m| if m > 0.0 { Poisson::new(m).ok() } else { None })
        .collect();
    for _ in 0..repetitions {
        for (b, d) in dists.iter().enumerate() {
            let k = match d {
                Some(d) => d.sample(&mut rng) as u64,
                None => 0,
            };
            sink(b, k);
        }
    }
    Ok(())
}

/// Independent Poisson draws per bin per repetition, summed over repetitions.
pub fn sample_counts(
    bins: &[Bin],
    means: &[f64],
    repetitions: u64,
    rng_seed: u64,
) -> Result<CountHistogram> {
    if bins.len() != means.len() {
        return Err(AfcError::InvalidSpec("one mean per bin required".into()));
    }
    let mut counts = vec![0u64; means.len()];
    draw(means, repetitions, rng_seed, |b, k| counts[b] += k)?;
    Ok(CountHistogram {
        bins: bins.to_vec(),
        counts,
        repetitions,
        rng_seed,
    })
}

/// Per-repetition counts (`result[rep][bin]`) from the same stream as
/// [`sample_counts`].
pub fn sample_repetitions(means: &[f64], repetitions: u64, rng_seed: u64) -> Result<Vec<Vec<u64>>> {
    let mut out = vec![vec![0u64; means.len()]; repetitions as usize];
    let mut rep = 0usize;
    let nb = means.len();
    let mut seen = 0usize;
    draw(means, repetitions, rng_seed, |b, k| {
        out[rep][b] = k;
        seen += 1;
        if seen == nb {
            seen = 0;
            rep += 1;
        }
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mean_photon_number: f64,
    pub low_statistics: bool,
}

/// Photon number inside the device inferred from detected counts:
/// `(counts / pulses) / (facet · gate · detector)`.
pub fn calibrate_nbar(
    total_counts: f64,
    n_pulses: u64,
    chain: &DetectionChain,
) -> Result<Calibration> {
    if n_pulses == 0 {
        return Err(AfcError::Domain("at least one pulse is required".into()));
    }
    if !(total_counts >= 0.0) {
        return Err(AfcError::Domain(format!(
            "counts must be non-negative, got {total_counts}"
        )));
    }
    Ok(Calibration {
        mean_photon_number: total_counts / n_pulses as f64 / chain.total_efficiency(),
        low_statistics: total_counts == 0.0,
    })
}

/// Detected counts referred back to photons at the device input.
pub fn input_referenced(counts_per_shot: f64, chain: &DetectionChain) -> f64 {
    counts_per_shot / chain.total_efficiency()
}

/// Noise added per retrieved photon, `μ = n/η`.
pub fn noise_per_retrieved_photon(noise_photons: f64, efficiency: f64) -> Result<f64> {
    if !(efficiency > 0.0) {
        return Err(AfcError::UndefinedNoise);
    }
    Ok(noise_photons / efficiency)
}

/// Beer-Lambert: `OD = −ln T`.
pub fn od_from_transmission(transmission: f64) -> Result<f64> {
    if !(transmission > 0.0 && transmission <= 1.0) {
        return Err(AfcError::Domain(format!(
            "transmission must lie in (0, 1], got {transmission}"
        )));
    }
    Ok(-transmission.ln())
}

pub fn transmission_from_od(od: f64) -> f64 {
    (-od).exp()
}
