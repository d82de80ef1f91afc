//! Experiment configuration file.
//!
//! Every key carries its unit in its name (`_s`, `_hz`, `_rad`); plain
//! numbers are dimensionless. Omitted sections and keys take the defaults of
//! the reference experiment (OD 1.3, finesse 2.5, 8.7 ns pulses). Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use afc_core::detection::{DetectionChain, Fluorescence};
use afc_core::protocols::{
    CombSource, DetectionSpec, FinesseModel, MultimodeConfig, PulseSpec, StorageConfig,
    TimeBinConfig,
};
use afc_core::spectral::{BurnSequence, CombSpec, ToothShape, DEFAULT_POINTS_PER_PERIOD};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    /// Base RNG seed; `--seed` takes precedence.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub afc: AfcConfig,
    #[serde(default)]
    pub qubit: QubitConfig,
    #[serde(default)]
    pub multimode: MultimodeSection,
    #[serde(default)]
    pub broadband: BroadbandConfig,
    #[serde(default)]
    pub efficiency_table: EfficiencyTableConfig,
    #[serde(default)]
    pub fit_decay: Option<FitDecayConfig>,
    #[serde(default)]
    pub fit_fringe: Option<FitFringeConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            afc: AfcConfig::default(),
            qubit: QubitConfig::default(),
            multimode: MultimodeSection::default(),
            broadband: BroadbandConfig::default(),
            efficiency_table: EfficiencyTableConfig::default(),
            fit_decay: None,
            fit_fringe: None,
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub fwhm_s: f64,
    pub mean_photon_number: f64,
}

impl PulseConfig {
    fn to_core(&self) -> PulseSpec {
        PulseSpec {
            fwhm: self.fwhm_s,
            mean_photon_number: self.mean_photon_number,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub enabled: bool,
    pub repetitions: u64,
    pub facet_coupling: f64,
    pub gate_transmission: f64,
    pub detector_efficiency: f64,
    pub dark_rate_hz: f64,
    pub excited_fraction_at_burn_end: f64,
    pub fluorescence_lifetime_s: f64,
    pub wait_s: f64,
    pub collection_factor: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        let chain = DetectionChain::default();
        DetectionConfig {
            enabled: true,
            repetitions: 100_000,
            facet_coupling: chain.facet_coupling,
            gate_transmission: chain.gate_transmission,
            detector_efficiency: chain.detector_efficiency,
            dark_rate_hz: chain.dark_rate,
            excited_fraction_at_burn_end: chain.fluorescence.excited_fraction_at_burn_end,
            fluorescence_lifetime_s: chain.fluorescence.lifetime,
            wait_s: chain.fluorescence.wait,
            collection_factor: chain.fluorescence.collection_factor,
        }
    }
}

impl DetectionConfig {
    fn with_repetitions(repetitions: u64) -> Self {
        DetectionConfig {
            repetitions,
            ..DetectionConfig::default()
        }
    }

    fn to_core(&self, rng_seed: u64) -> Option<DetectionSpec> {
        self.enabled.then_some(DetectionSpec {
            chain: DetectionChain {
                facet_coupling: self.facet_coupling,
                gate_transmission: self.gate_transmission,
                detector_efficiency: self.detector_efficiency,
                dark_rate: self.dark_rate_hz,
                fluorescence: Fluorescence {
                    excited_fraction_at_burn_end: self.excited_fraction_at_burn_end,
                    lifetime: self.fluorescence_lifetime_s,
                    wait: self.wait_s,
                    collection_factor: self.collection_factor,
                },
            },
            repetitions: self.repetitions,
            rng_seed,
        })
    }
}

/// Finesse as a function of storage time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FinesseConfig {
    Constant {
        finesse: f64,
    },
    Table {
        storage_times_s: Vec<f64>,
        finesse: Vec<f64>,
    },
    PowerLaw {
        reference_storage_time_s: f64,
        reference_finesse: f64,
        exponent: f64,
    },
}

impl Default for FinesseConfig {
    fn default() -> Self {
        match FinesseModel::default() {
            FinesseModel::PowerLaw {
                reference_storage_time,
                reference_finesse,
                exponent,
            } => FinesseConfig::PowerLaw {
                reference_storage_time_s: reference_storage_time,
                reference_finesse,
                exponent,
            },
            _ => unreachable!("the default finesse model is a power law"),
        }
    }
}

impl FinesseConfig {
    pub fn to_core(&self) -> FinesseModel {
        match self.clone() {
            FinesseConfig::Constant { finesse } => FinesseModel::Constant { finesse },
            FinesseConfig::Table {
                storage_times_s,
                finesse,
            } => FinesseModel::Table {
                storage_times: storage_times_s,
                finesse,
            },
            FinesseConfig::PowerLaw {
                reference_storage_time_s,
                reference_finesse,
                exponent,
            } => FinesseModel::PowerLaw {
                reference_storage_time: reference_storage_time_s,
                reference_finesse,
                exponent,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CombSourceKind {
    Analytic,
    Burned,
}

/// Burn train for `comb_source = "burned"`; the pulse spacing is the
/// storage time of each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct BurnConfig {
    pub initial_depth: f64,
    pub pulse_fwhm_s: f64,
    pub pulses_per_train: usize,
    pub train_repetitions: usize,
    pub burn_strength: f64,
    pub carrier_detuning_hz: f64,
}

impl Default for BurnConfig {
    fn default() -> Self {
        BurnConfig {
            initial_depth: 1.3,
            pulse_fwhm_s: 5e-9,
            pulses_per_train: 8,
            train_repetitions: 10,
            burn_strength: 0.5,
            carrier_detuning_hz: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ShapeConfig {
    Gaussian,
    Square,
}

impl From<ShapeConfig> for ToothShape {
    fn from(s: ShapeConfig) -> Self {
        match s {
            ShapeConfig::Gaussian => ToothShape::Gaussian,
            ShapeConfig::Square => ToothShape::Square,
        }
    }
}

/// Single-pulse storage over a list of storage times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct AfcConfig {
    pub storage_times_s: Vec<f64>,
    pub finesse: FinesseConfig,
    pub peak_depth: f64,
    pub background_depth: f64,
    pub tooth_shape: ShapeConfig,
    pub comb_bandwidth_hz: f64,
    pub comb_source: CombSourceKind,
    pub burn: BurnConfig,
    pub pulse: PulseConfig,
    pub window_halfwidth_s: Option<f64>,
    pub points_per_period: f64,
    pub detection: DetectionConfig,
}

impl Default for AfcConfig {
    fn default() -> Self {
        AfcConfig {
            storage_times_s: (3..=12).map(|k| k as f64 * 1e-7).collect(),
            finesse: FinesseConfig::default(),
            peak_depth: 1.3,
            background_depth: 0.0,
            tooth_shape: ShapeConfig::Gaussian,
            comb_bandwidth_hz: 200e6,
            comb_source: CombSourceKind::Analytic,
            burn: BurnConfig::default(),
            pulse: PulseConfig {
                fwhm_s: 8.7e-9,
                mean_photon_number: 1.0,
            },
            window_halfwidth_s: None,
            points_per_period: DEFAULT_POINTS_PER_PERIOD,
            detection: DetectionConfig::default(),
        }
    }
}

impl AfcConfig {
    /// Storage config for one storage time.
    pub fn storage(&self, tau: f64, rng_seed: u64) -> Result<StorageConfig, CliError> {
        let comb = match self.comb_source {
            CombSourceKind::Analytic => {
                let finesse = self
                    .finesse
                    .to_core()
                    .finesse_at(tau)
                    .map_err(CliError::Invalid)?;
                CombSource::Analytic(CombSpec {
                    background_depth: self.background_depth,
                    tooth_shape: self.tooth_shape.into(),
                    ..CombSpec::single(1.0 / tau, finesse, self.peak_depth, self.comb_bandwidth_hz)
                })
            }
            CombSourceKind::Burned => CombSource::Burned {
                initial_depth: self.burn.initial_depth,
                burn: BurnSequence {
                    pulse_fwhm: self.burn.pulse_fwhm_s,
                    pulse_spacing: tau,
                    pulses_per_train: self.burn.pulses_per_train,
                    train_repetitions: self.burn.train_repetitions,
                    burn_strength: self.burn.burn_strength,
                    carrier_detuning: self.burn.carrier_detuning_hz,
                },
            },
        };
        Ok(StorageConfig {
            comb,
            pulse: self.pulse.to_core(),
            window_halfwidth: self.window_halfwidth_s,
            points_per_period: self.points_per_period,
            detection: self.detection.to_core(rng_seed),
        })
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.storage_times_s.is_empty() {
            return Err(CliError::config(
                "afc.storage_times_s",
                "at least one storage time is required",
            ));
        }
        Ok(())
    }
}

/// Time-bin qubit on two superimposed combs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct QubitConfig {
    pub storage_times_s: [f64; 2],
    pub finesse: f64,
    pub peak_depth: f64,
    pub background_depth: f64,
    pub tooth_shape: ShapeConfig,
    pub comb_bandwidth_hz: f64,
    /// Fixed comb weights; omitted means balance to `target_ratio`.
    pub weights: Option<[f64; 2]>,
    /// Requested late/early path efficiency ratio.
    pub target_ratio: f64,
    /// Total mean photon number, split evenly between the two time bins.
    pub pulse: PulseConfig,
    pub bin_separation_s: f64,
    pub phases_rad: Vec<f64>,
    pub window_halfwidth_s: Option<f64>,
    pub points_per_period: f64,
    pub detection: DetectionConfig,
}

impl Default for QubitConfig {
    fn default() -> Self {
        let d = TimeBinConfig::default();
        QubitConfig {
            storage_times_s: d.storage_times,
            finesse: d.finesse,
            peak_depth: d.peak_depth,
            background_depth: d.background_depth,
            tooth_shape: ShapeConfig::Gaussian,
            comb_bandwidth_hz: d.comb_bandwidth,
            weights: d.weights,
            target_ratio: d.target_ratio,
            pulse: PulseConfig {
                fwhm_s: d.pulse.fwhm,
                mean_photon_number: d.pulse.mean_photon_number,
            },
            bin_separation_s: d.bin_separation,
            phases_rad: d.phases,
            window_halfwidth_s: d.window_halfwidth,
            points_per_period: d.points_per_period,
            detection: DetectionConfig::with_repetitions(1_000_000),
        }
    }
}

impl QubitConfig {
    pub fn to_core(&self, rng_seed: u64) -> TimeBinConfig {
        TimeBinConfig {
            storage_times: self.storage_times_s,
            finesse: self.finesse,
            peak_depth: self.peak_depth,
            background_depth: self.background_depth,
            tooth_shape: self.tooth_shape.into(),
            comb_bandwidth: self.comb_bandwidth_hz,
            weights: self.weights,
            target_ratio: self.target_ratio,
            pulse: self.pulse.to_core(),
            bin_separation: self.bin_separation_s,
            phases: self.phases_rad.clone(),
            window_halfwidth: self.window_halfwidth_s,
            points_per_period: self.points_per_period,
            detection: self.detection.to_core(rng_seed),
        }
    }
}

/// Pulse train stored in one comb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct MultimodeSection {
    pub storage_time_s: f64,
    pub n_modes: usize,
    pub mode_spacing_s: f64,
    pub finesse: FinesseConfig,
    pub peak_depth: f64,
    pub background_depth: f64,
    pub tooth_shape: ShapeConfig,
    pub comb_bandwidth_hz: f64,
    pub pulse: PulseConfig,
    pub window_halfwidth_s: Option<f64>,
    pub points_per_period: f64,
    pub detection: DetectionConfig,
}

impl Default for MultimodeSection {
    fn default() -> Self {
        MultimodeSection {
            storage_time_s: 1e-6,
            n_modes: 20,
            mode_spacing_s: 40e-9,
            finesse: FinesseConfig::default(),
            peak_depth: 1.3,
            background_depth: 0.0,
            tooth_shape: ShapeConfig::Gaussian,
            comb_bandwidth_hz: 200e6,
            pulse: PulseConfig {
                fwhm_s: 8.7e-9,
                mean_photon_number: 1.0,
            },
            window_halfwidth_s: None,
            points_per_period: DEFAULT_POINTS_PER_PERIOD,
            detection: DetectionConfig::default(),
        }
    }
}

impl MultimodeSection {
    pub fn to_core(&self, rng_seed: u64) -> Result<MultimodeConfig, CliError> {
        let afc = AfcConfig {
            storage_times_s: vec![self.storage_time_s],
            finesse: self.finesse.clone(),
            peak_depth: self.peak_depth,
            background_depth: self.background_depth,
            tooth_shape: self.tooth_shape,
            comb_bandwidth_hz: self.comb_bandwidth_hz,
            comb_source: CombSourceKind::Analytic,
            burn: BurnConfig::default(),
            pulse: self.pulse.clone(),
            window_halfwidth_s: self.window_halfwidth_s,
            points_per_period: self.points_per_period,
            detection: self.detection.clone(),
        };
        Ok(MultimodeConfig {
            storage: afc.storage(self.storage_time_s, rng_seed)?,
            n_modes: self.n_modes,
            mode_spacing: self.mode_spacing_s,
        })
    }
}

/// Short-pulse storage in a wide comb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct BroadbandConfig {
    pub storage_time_s: f64,
    pub finesse: f64,
    pub peak_depth: f64,
    pub background_depth: f64,
    pub tooth_shape: ShapeConfig,
    pub comb_bandwidth_hz: f64,
    pub pulse: PulseConfig,
    /// Longest storage time used for the mode-capacity estimate.
    pub max_storage_time_s: f64,
    pub window_halfwidth_s: Option<f64>,
    pub points_per_period: f64,
    pub detection: DetectionConfig,
}

impl Default for BroadbandConfig {
    fn default() -> Self {
        BroadbandConfig {
            storage_time_s: 300e-9,
            finesse: 2.5,
            peak_depth: 1.3,
            background_depth: 0.0,
            tooth_shape: ShapeConfig::Gaussian,
            comb_bandwidth_hz: 22e9,
            pulse: PulseConfig {
                fwhm_s: 200e-12,
                mean_photon_number: 1.0,
            },
            max_storage_time_s: 600e-9,
            window_halfwidth_s: None,
            points_per_period: DEFAULT_POINTS_PER_PERIOD,
            detection: DetectionConfig::default(),
        }
    }
}

impl BroadbandConfig {
    pub fn comb(&self) -> CombSpec {
        CombSpec {
            background_depth: self.background_depth,
            tooth_shape: self.tooth_shape.into(),
            ..CombSpec::single(
                1.0 / self.storage_time_s,
                self.finesse,
                self.peak_depth,
                self.comb_bandwidth_hz,
            )
        }
    }

    pub fn to_core(&self, rng_seed: u64) -> StorageConfig {
        StorageConfig {
            comb: CombSource::Analytic(self.comb()),
            pulse: self.pulse.to_core(),
            window_halfwidth: self.window_halfwidth_s,
            points_per_period: self.points_per_period,
            detection: self.detection.to_core(rng_seed),
        }
    }
}

/// Closed-form efficiency over an OD × finesse grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct EfficiencyTableConfig {
    pub od_values: Vec<f64>,
    pub finesse_values: Vec<f64>,
}

impl Default for EfficiencyTableConfig {
    fn default() -> Self {
        EfficiencyTableConfig {
            od_values: (0..=120).map(|k| k as f64 / 10.0).collect(),
            finesse_values: (3..=16).map(|k| k as f64 / 2.0).collect(),
        }
    }
}

impl EfficiencyTableConfig {
    pub fn check(&self) -> Result<(), CliError> {
        if self.od_values.is_empty() {
            return Err(CliError::config(
                "efficiency_table.od_values",
                "list is empty",
            ));
        }
        if self.finesse_values.is_empty() {
            return Err(CliError::config(
                "efficiency_table.finesse_values",
                "list is empty",
            ));
        }
        Ok(())
    }
}

/// Echo intensities versus delay, read from CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FitDecayConfig {
    /// Relative paths are resolved against the config file's directory.
    pub data_csv: PathBuf,
    #[serde(default = "default_delay_column")]
    pub delay_column: String,
    #[serde(default = "default_intensity_column")]
    pub intensity_column: String,
}

fn default_delay_column() -> String {
    "delay_s".into()
}

fn default_intensity_column() -> String {
    "intensity".into()
}

/// Counts versus interferometer phase, read from CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FitFringeConfig {
    pub data_csv: PathBuf,
    #[serde(default = "default_phase_column")]
    pub phase_column: String,
    #[serde(default = "default_counts_column")]
    pub counts_column: String,
    /// Column of one-sigma count uncertainties; omitted means unweighted.
    #[serde(default)]
    pub uncertainty_column: Option<String>,
}

fn default_phase_column() -> String {
    "phase_rad".into()
}

fn default_counts_column() -> String {
    "counts".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SweepTarget {
    Afc,
    Qubit,
    Multimode,
    Broadband,
}

impl SweepTarget {
    pub fn section(self) -> &'static str {
        match self {
            SweepTarget::Afc => "afc",
            SweepTarget::Qubit => "qubit",
            SweepTarget::Multimode => "multimode",
            SweepTarget::Broadband => "broadband",
        }
    }
}

/// Repeats one experiment with a single scalar key replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: SweepTarget,
    /// Dotted key inside the experiment's section, e.g. `pulse.fwhm_s`.
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Parses a config, reporting the offending key path on failure.
pub fn parse(text: &str) -> Result<ConfigFile, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(&path, &e.into_inner().to_string())
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::config(
            "schema_version",
            &format!(
                "unsupported version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            ),
        ));
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse(&text)
}

/// Copy of `cfg` with `section.parameter` set to `value`.
pub fn with_parameter(
    cfg: &ConfigFile,
    section: &str,
    parameter: &str,
    value: f64,
) -> Result<ConfigFile, CliError> {
    let key = format!("{section}.{parameter}");
    let mut root = serde_json::to_value(cfg).expect("configs serialize");
    let mut node = root.get_mut(section).expect("sections always serialize");
    for part in parameter.split('.') {
        node = match node {
            serde_json::Value::Object(map) => map
                .get_mut(part)
                .ok_or_else(|| CliError::config(&key, "no such key"))?,
            serde_json::Value::Array(items) => {
                let i: usize = part
                    .parse()
                    .map_err(|_| CliError::config(&key, "array index expected"))?;
                items
                    .get_mut(i)
                    .ok_or_else(|| CliError::config(&key, "index out of range"))?
            }
            _ => return Err(CliError::config(&key, "not a nested key")),
        };
    }
    // Optional keys serialize as null; accept them as scalars too.
    if !(node.is_number() || node.is_null()) {
        return Err(CliError::config(
            &key,
            "only scalar numeric keys can be swept",
        ));
    }
    *node = if node.is_u64() && value >= 0.0 && value.fract() == 0.0 && value < u64::MAX as f64 {
        serde_json::Value::from(value as u64)
    } else {
        serde_json::Number::from_f64(value)
            .map(serde_json::Value::Number)
            .ok_or_else(|| CliError::config(&key, "sweep values must be finite"))?
    };
    parse(&serde_json::to_string(&root).expect("values serialize")).map_err(|e| match e {
        CliError::Config { path, message } => CliError::Config {
            path,
            message: format!("{message} (sweeping {key} = {value})"),
        },
        other => other,
    })
}
