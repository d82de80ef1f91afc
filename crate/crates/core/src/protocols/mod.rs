//! End-to-end storage experiments: single-pulse AFC storage, time-bin
//! qubits on dual combs, multimode pulse trains and broadband pulses.

mod finesse;
mod storage;
mod time_bin;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use finesse::FinesseModel;
pub use storage::{
    afc_storage, broadband_storage, ideal_echo_efficiency, multimode_storage, validate_broadband,
    validate_multimode, validate_storage, MultimodeConfig, MultimodeRecord, StorageConfig,
};
pub use time_bin::{
    time_bin_qubit, time_bin_trace, validate_time_bin, FringeDataset, TimeBinConfig,
};

use crate::detection::{CountHistogram, DetectionChain};
use crate::error::{AfcError, Result};
use crate::propagation::{TemporalField, WindowMeasurement};
use crate::spectral::{BurnSequence, CombSpec};

/// Where the absorption profile comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CombSource {
    Analytic(CombSpec),
    /// A flat profile of `initial_depth` carved by a burn sequence.
    Burned {
        initial_depth: f64,
        burn: BurnSequence,
    },
}

impl CombSource {
    pub fn storage_time(&self) -> f64 {
        match self {
            CombSource::Analytic(spec) => spec.storage_time(),
            CombSource::Burned { burn, .. } => burn.pulse_spacing,
        }
    }
}

/// Gaussian input pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub fwhm: f64,
    pub mean_photon_number: f64,
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm > 0.0) || !self.fwhm.is_finite() {
            return Err(AfcError::InvalidSpec(format!(
                "pulse FWHM must be positive, got {}",
                self.fwhm
            )));
        }
        if !(self.mean_photon_number > 0.0) || !self.mean_photon_number.is_finite() {
            return Err(AfcError::InvalidSpec(format!(
                "mean photon number must be positive, got {}",
                self.mean_photon_number
            )));
        }
        Ok(())
    }
}

/// Stochastic photon counting on top of a simulated trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSpec {
    pub chain: DetectionChain,
    pub repetitions: u64,
    pub rng_seed: u64,
}

impl DetectionSpec {
    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.repetitions == 0 {
            return Err(AfcError::InvalidSpec(
                "repetitions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Counts in each measurement window and the resulting noise figure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionSummary {
    pub chain_efficiency: f64,
    /// Mean detected counts per shot, signal plus background.
    pub mean_counts: Vec<f64>,
    /// Mean background counts per shot.
    pub noise_mean_counts: Vec<f64>,
    pub histogram: CountHistogram,
    /// `μ = n/η` for each echo window; `None` where nothing is retrieved.
    pub noise_per_retrieved_photon: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EchoRecord {
    #[serde(skip)]
    pub trace: TemporalField,
    /// Photon number of each input pulse.
    pub input_energy: f64,
    /// Transmitted (un-stored) light around each input pulse.
    pub leakage: Vec<WindowMeasurement>,
    /// Total leakage energy over total input energy.
    pub leakage_fraction: f64,
    /// Echo windows, in increasing time order.
    pub windows: Vec<WindowMeasurement>,
    pub detection: Option<DetectionSummary>,
    pub config_hash: String,
    pub flags: Vec<String>,
}

impl EchoRecord {
    /// Efficiency of the first echo window.
    pub fn efficiency(&self) -> f64 {
        self.windows[0].efficiency
    }

    pub fn mean_efficiency(&self) -> f64 {
        self.windows.iter().map(|w| w.efficiency).sum::<f64>() / self.windows.len() as f64
    }
}

/// Qubit-fidelity bounds derived from an interference visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityBound {
    /// Bound taken directly as the visibility.
    pub visibility_convention: f64,
    /// Equatorial-state fidelity `(1 + V)/2`.
    pub equatorial_convention: f64,
    pub visibility_exceeds_classical: bool,
    pub equatorial_exceeds_classical: bool,
}

pub const CLASSICAL_FIDELITY: f64 = 2.0 / 3.0;

pub fn fidelity_bound(visibility: f64) -> FidelityBound {
    let eq = (1.0 + visibility) / 2.0;
    FidelityBound {
        visibility_convention: visibility,
        equatorial_convention: eq,
        visibility_exceeds_classical: visibility > CLASSICAL_FIDELITY,
        equatorial_exceeds_classical: eq > CLASSICAL_FIDELITY,
    }
}

/// Number of pulses of duration `pulse_fwhm` that fit in `storage_time`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModeCapacity {
    pub floor: u64,
    pub nearest: u64,
}

pub fn mode_capacity(storage_time: f64, pulse_fwhm: f64) -> Result<ModeCapacity> {
    if !(storage_time > 0.0) || !(pulse_fwhm > 0.0) {
        return Err(AfcError::Domain(format!(
            "storage time and pulse width must be positive, got {storage_time} and {pulse_fwhm}"
        )));
    }
    let r = storage_time / pulse_fwhm;
    let nearest = r.round();
    // Ratios like 600 ns / 200 ps land a hair below the integer in binary.
    let floor = if (r - nearest).abs() <= 1e-9 * r {
        nearest
    } else {
        r.floor()
    };
    Ok(ModeCapacity {
        floor: floor as u64,
        nearest: nearest as u64,
    })
}

/// Hex SHA-256 of the canonical JSON encoding.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
