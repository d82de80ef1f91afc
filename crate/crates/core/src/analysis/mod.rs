//! Closed-form AFC efficiency, visibility helpers and nonlinear fits.

mod decay;
mod fringe;
pub mod lm;

pub use decay::{fit_echo_decay, EchoDecayFit, EchoDecayModel};
pub use fringe::{fit_fringe, FringeFit, FringeModel};
pub use lm::{FitOptions, FitParameter, FitResult};

use crate::error::{AfcError, Result};

/// Forward-retrieval AFC efficiency
/// `η = (OD/F)² · exp(−7/F²) · exp(−OD/F)`.
pub fn theoretical_efficiency(od: f64, finesse: f64) -> Result<f64> {
    if !(finesse > 0.0) {
        return Err(AfcError::Domain(format!(
            "finesse must be positive, got {finesse}"
        )));
    }
    if !(od >= 0.0) {
        return Err(AfcError::Domain(format!(
            "optical depth must be non-negative, got {od}"
        )));
    }
    let x = od / finesse;
    Ok(x * x * (-7.0 / (finesse * finesse)).exp() * (-x).exp())
}

/// Optical depth maximizing [`theoretical_efficiency`] at fixed finesse.
pub fn optimal_od(finesse: f64) -> f64 {
    2.0 * finesse
}

/// Fringe contrast `(max − min)/(max + min)`.
pub fn visibility_from_extrema(max: f64, min: f64) -> Result<f64> {
    if !(max >= min && min >= 0.0) || !(max > 0.0) {
        return Err(AfcError::Domain(format!(
            "need max >= min >= 0 and max > 0, got max={max}, min={min}"
        )));
    }
    Ok((max - min) / (max + min))
}

/// Visibility expected from two interfering paths of efficiencies `η₁`, `η₂`.
pub fn two_path_visibility(eta1: f64, eta2: f64) -> f64 {
    2.0 * (eta1 * eta2).sqrt() / (eta1 + eta2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn efficiency_point_values() {
        let e = theoretical_efficiency(1.3, 2.5).unwrap();
        assert!((e - 0.0525).abs() < 5e-5, "{e}");
        assert_eq!(theoretical_efficiency(0.0, 3.0).unwrap(), 0.0);
        let e = theoretical_efficiency(200.0, 100.0).unwrap();
        assert!((e - 4.0 * (-2.0f64).exp() * (-7e-4f64).exp()).abs() < 1e-12);
        assert!((e - 0.5413).abs() < 1e-3);
        let e = theoretical_efficiency(8.0, 4.0).unwrap();
        assert!((e - 0.349).abs() < 1e-3, "{e}");
        assert!(theoretical_efficiency(1.0, 0.0).is_err());
    }

    #[test]
    fn optimum_is_a_local_maximum() {
        for f in [2.5, 4.0, 3.0, 1.5] {
            let od = optimal_od(f);
            let eps = 1e-3 * f;
            let at = theoretical_efficiency(od, f).unwrap();
            assert!(theoretical_efficiency(od + eps, f).unwrap() <= at);
            assert!(theoretical_efficiency(od - eps, f).unwrap() <= at);
        }
        assert_eq!(optimal_od(2.5), 5.0);
        assert_eq!(optimal_od(4.0), 8.0);
    }

    #[test]
    fn extrema_visibility() {
        assert!((visibility_from_extrema(196.6, 3.4).unwrap() - 0.966).abs() < 1e-12);
        assert_eq!(visibility_from_extrema(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(visibility_from_extrema(1.0, 0.0).unwrap(), 1.0);
        assert!(visibility_from_extrema(0.0, 0.0).is_err());
        assert!((two_path_visibility(1.0, 2.0) - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-15);
    }
}
