//! Sinusoidal fringe fit `A + B·cos(φ − φ₀)`.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use serde::Serialize;

use super::lm::{self, FitOptions, FitParameter, FitResult, LeastSquaresProblem};
use crate::error::{AfcError, Result};

/// Weighted residuals `(A + B·cos(φ − φ₀) − c)/σ`; parameters `(A, B, φ₀)`.
#[derive(Debug, Clone)]
pub struct FringeModel {
    phases: Vec<f64>,
    counts: Vec<f64>,
    sigmas: Vec<f64>,
}

impl FringeModel {
    pub fn new(phases: &[f64], counts: &[f64], sigmas: &[f64]) -> Self {
        FringeModel {
            phases: phases.to_vec(),
            counts: counts.to_vec(),
            sigmas: sigmas.to_vec(),
        }
    }

    pub fn eval(p: &[f64], phi: f64) -> f64 {
        p[0] + p[1] * (phi - p[2]).cos()
    }
}

impl LeastSquaresProblem for FringeModel {
    fn n_params(&self) -> usize {
        3
    }

    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        self.phases
            .iter()
            .zip(&self.counts)
            .zip(&self.sigmas)
            .map(|((&phi, &c), &s)| (Self::eval(p, phi) - c) / s)
            .collect()
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let m = self.phases.len();
        DMatrix::from_fn(m, 3, |i, k| {
            let u = self.phases[i] - p[2];
            let s = self.sigmas[i];
            match k {
                0 => 1.0 / s,
                1 => u.cos() / s,
                _ => p[1] * u.sin() / s,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeFit {
    #[serde(flatten)]
    pub fit: FitResult,
    pub visibility: f64,
    pub visibility_sigma: f64,
    pub phase_identifiable: bool,
}

fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y <= -PI {
        y + TAU
    } else {
        y
    }
}

/// Fits `A + B·cos(φ − φ₀)` and reports `V = |B|/A`.
///
/// With `uncertainties` the residuals are weighted by them and treated as
/// absolute; without, all points weigh equally and the parameter errors
/// are scaled by the reduced chi-square. The reported solution has
/// `B ≥ 0` and `φ₀ ∈ (−π, π]`.
pub fn fit_fringe(
    phases: &[f64],
    counts: &[f64],
    uncertainties: Option<&[f64]>,
) -> Result<FringeFit> {
    let n = phases.len();
    if counts.len() != n || uncertainties.is_some_and(|u| u.len() != n) {
        return Err(AfcError::Analysis(
            "phases, counts and uncertainties differ in length".into(),
        ));
    }
    if n < 5 {
        return Err(AfcError::Analysis(format!(
            "need at least 5 phase points, got {n}"
        )));
    }
    if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || phases.iter().any(|p| !p.is_finite())
    {
        return Err(AfcError::Analysis(
            "counts must be finite and non-negative".into(),
        ));
    }
    let (lo, hi) = phases
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| {
            (a.min(p), b.max(p))
        });
    // Evenly spaced samples cover a full period when n·step ≥ 2π.
    if (hi - lo) * n as f64 / ((n - 1) as f64) < TAU * (1.0 - 1e-9) {
        return Err(AfcError::Analysis(
            "phase points must span at least one period".into(),
        ));
    }
    let sigmas = match uncertainties {
        Some(u) => {
            if u.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(AfcError::Analysis("uncertainties must be positive".into()));
            }
            u.to_vec()
        }
        None => vec![1.0; n],
    };

    let mean = counts.iter().sum::<f64>() / n as f64;
    let (cmin, cmax) = counts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| {
            (a.min(c), b.max(c))
        });
    let (re, im) = phases
        .iter()
        .zip(counts)
        .fold((0.0, 0.0), |(re, im), (&p, &c)| {
            (re + c * p.cos(), im + c * p.sin())
        });
    let initial = [mean, (cmax - cmin) / 2.0, im.atan2(re)];

    let model = FringeModel::new(phases, counts, &sigmas);
    let opts = FitOptions {
        scale_by_reduced_chi2: uncertainties.is_none(),
        ..FitOptions::default()
    };
    let sol = lm::solve(&model, &initial, &opts);

    let (a, mut b, mut phi0) = (sol.params[0], sol.params[1], sol.params[2]);
    if b < 0.0 {
        b = -b;
        phi0 += PI;
    }
    phi0 = wrap_phase(phi0);

    let mut flags = Vec::new();
    let identifiable = b > 1e-9 * a.abs().max(f64::MIN_POSITIVE) && sol.sigmas[2].is_finite();
    if !identifiable {
        flags.push("phase unidentifiable: fringe amplitude is zero".to_string());
    }
    let visibility = if a > 0.0 { b / a } else { f64::NAN };
    if visibility > 1.0 {
        flags.push(format!("visibility {visibility:.6} exceeds 1"));
    }
    if !sol.converged {
        flags.push(format!(
            "not converged after {} iterations (gradient {:.3e})",
            sol.iterations, sol.gradient_norm
        ));
    }
    // Delta method on V = B/A with the A-B covariance.
    let c = &sol.covariance;
    let (ga, gb) = (-b / (a * a), 1.0 / a);
    let var_ab = if identifiable {
        c[(0, 1)] * sol.params[1].signum()
    } else {
        0.0
    };
    let var_v = ga * ga * c[(0, 0)] + gb * gb * c[(1, 1)] + 2.0 * ga * gb * var_ab;
    let visibility_sigma = var_v.max(0.0).sqrt();

    let names = ["A", "B", "phi0"];
    let values = [a, b, phi0];
    let parameters = (0..3)
        .map(|i| FitParameter {
            name: names[i].to_string(),
            value: values[i],
            sigma: if i == 2 && !identifiable {
                f64::INFINITY
            } else {
                sol.sigmas[i]
            },
        })
        .collect();
    Ok(FringeFit {
        fit: FitResult {
            parameters,
            residual_norm: sol.residual_norm,
            gradient_norm: sol.gradient_norm,
            converged: sol.converged,
            iterations: sol.iterations,
            flags,
        },
        visibility,
        visibility_sigma,
        phase_identifiable: identifiable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phases(n: usize) -> Vec<f64> {
        (0..n).map(|k| TAU * k as f64 / n as f64).collect()
    }

    #[test]
    fn exact_round_trip() {
        let ph = phases(12);
        let c: Vec<f64> = ph.iter().map(|&p| 100.0 + 96.6 * (p - 0.3).cos()).collect();
        let f = fit_fringe(&ph, &c, None).unwrap();
        assert!(f.fit.converged);
        assert!((f.visibility - 0.966).abs() < 1e-6, "{}", f.visibility);
        assert!((f.fit.value("phi0") - 0.3).abs() < 1e-6);
        assert!(f.fit.flags.is_empty());
    }

    #[test]
    fn negative_amplitude_is_normalized() {
        let ph = phases(9);
        let c: Vec<f64> = ph.iter().map(|&p| 50.0 + 20.0 * (p - 3.0).cos()).collect();
        let f = fit_fringe(&ph, &c, None).unwrap();
        assert!(f.fit.value("B") > 0.0);
        assert!((f.fit.value("phi0") - 3.0).abs() < 1e-6);
        assert!((f.visibility - 0.4).abs() < 1e-6);
    }

    #[test]
    fn flat_data_flags_phase() {
        let ph = phases(8);
        let f = fit_fringe(&ph, &[7.0; 8], None).unwrap();
        assert_eq!(f.visibility, 0.0);
        assert!(!f.phase_identifiable);
        assert!(f.fit.sigma("phi0").is_infinite());
        assert!(f.fit.flags.iter().any(|s| s.contains("unidentifiable")));
    }

    #[test]
    fn preconditions() {
        let ph = phases(4);
        assert!(fit_fringe(&ph, &[1.0; 4], None).is_err());
        let half: Vec<f64> = (0..8).map(|k| PI * k as f64 / 8.0).collect();
        assert!(fit_fringe(&half, &[1.0; 8], None).is_err());
        let mut c = vec![1.0; 8];
        c[2] = -1.0;
        assert!(fit_fringe(&phases(8), &c, None).is_err());
    }

    #[test]
    fn excess_visibility_is_flagged() {
        let ph = phases(10);
        let c: Vec<f64> = ph
            .iter()
            .map(|&p| (10.0 + 12.0 * p.cos()).max(0.0))
            .collect();
        let f = fit_fringe(&ph, &c, None).unwrap();
        assert!(f.visibility > 1.0);
        assert!(f.fit.flags.iter().any(|s| s.contains("exceeds 1")));
    }
}
