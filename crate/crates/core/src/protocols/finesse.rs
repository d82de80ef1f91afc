//! Comb finesse as a function of storage time.
//!
//! Narrower tooth spacings burn less cleanly, so longer storage times come
//! with lower finesse. No physical law is assumed; the default is a power
//! law pinned to two efficiency points of the closed-form model.

use serde::{Deserialize, Serialize};

use crate::analysis::theoretical_efficiency;
use crate::error::{AfcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FinesseModel {
    Constant {
        finesse: f64,
    },
    /// Linear interpolation in storage time, held flat beyond the ends.
    Table {
        storage_times: Vec<f64>,
        finesse: Vec<f64>,
    },
    /// `F(τ) = F_ref · (τ/τ_ref)^(−exponent)`.
    PowerLaw {
        reference_storage_time: f64,
        reference_finesse: f64,
        exponent: f64,
    },
}

impl Default for FinesseModel {
    /// F = 2.5 at 300 ns, falling so that the closed-form efficiency at
    /// OD 1.3 drops by 0.7/2.9 between 300 ns and 1 µs.
    fn default() -> Self {
        FinesseModel::fitted_power_law(1.3, 300e-9, 2.5, 1e-6, 0.7 / 2.9)
            .expect("default model brackets")
    }
}

impl FinesseModel {
    /// Power law through `(τ_ref, F_ref)` whose closed-form efficiency at
    /// `od` falls by `efficiency_ratio` at `storage_time`.
    pub fn fitted_power_law(
        od: f64,
        reference_storage_time: f64,
        reference_finesse: f64,
        storage_time: f64,
        efficiency_ratio: f64,
    ) -> Result<Self> {
        if !(storage_time > reference_storage_time && reference_storage_time > 0.0) {
            return Err(AfcError::Domain(
                "need 0 < reference storage time < storage time".into(),
            ));
        }
        let eta_ref = theoretical_efficiency(od, reference_finesse)?;
        let ratio = |f: f64| theoretical_efficiency(od, f).map(|e| e / eta_ref);
        // The ratio grows with F on (1, F_ref] for the depths of interest.
        let (mut lo, mut hi) = (1.0 + 1e-9, reference_finesse);
        if !(ratio(lo)? < efficiency_ratio && efficiency_ratio <= ratio(hi)?) {
            return Err(AfcError::Domain(format!(
                "efficiency ratio {efficiency_ratio} is not reachable with finesse above 1"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid)? < efficiency_ratio {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let f = 0.5 * (lo + hi);
        Ok(FinesseModel::PowerLaw {
            reference_storage_time,
            reference_finesse,
            exponent: -(f / reference_finesse).ln() / (storage_time / reference_storage_time).ln(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FinesseModel::Constant { finesse } if !(*finesse > 1.0) => Err(AfcError::InvalidSpec(
                format!("finesse must exceed 1, got {finesse}"),
            )),
            FinesseModel::Table {
                storage_times,
                finesse,
            } => {
                if storage_times.is_empty() || storage_times.len() != finesse.len() {
                    return Err(AfcError::InvalidSpec(
                        "finesse table needs equally long, non-empty columns".into(),
                    ));
                }
                if storage_times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(AfcError::InvalidSpec(
                        "finesse table storage times must increase".into(),
                    ));
                }
                if finesse.iter().any(|f| !(*f > 1.0)) {
                    return Err(AfcError::InvalidSpec(
                        "finesse table values must exceed 1".into(),
                    ));
                }
                Ok(())
            }
            FinesseModel::PowerLaw {
                reference_storage_time,
                reference_finesse,
                exponent,
            } if !(*reference_storage_time > 0.0
                && *reference_finesse > 1.0
                && exponent.is_finite()) =>
            {
                Err(AfcError::InvalidSpec(
                    "power-law finesse needs a positive reference point and finite exponent".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn finesse_at(&self, storage_time: f64) -> Result<f64> {
        self.validate()?;
        let f = match self {
            FinesseModel::Constant { finesse } => *finesse,
            FinesseModel::Table {
                storage_times,
                finesse,
            } => {
                let n = storage_times.len();
                if storage_time <= storage_times[0] {
                    finesse[0]
                } else if storage_time >= storage_times[n - 1] {
                    finesse[n - 1]
                } else {
                    let i = storage_times.partition_point(|&t| t <= storage_time) - 1;
                    let u = (storage_time - storage_times[i])
                        / (storage_times[i + 1] - storage_times[i]);
                    finesse[i] + u * (finesse[i + 1] - finesse[i])
                }
            }
            FinesseModel::PowerLaw {
                reference_storage_time,
                reference_finesse,
                exponent,
            } => reference_finesse * (storage_time / reference_storage_time).powf(-exponent),
        };
        if !(f > 1.0) {
            return Err(AfcError::InvalidSpec(format!(
                "finesse model gives {f:.4} at {storage_time:.3e} s; it must exceed 1"
            )));
        }
        Ok(f)
    }
}
