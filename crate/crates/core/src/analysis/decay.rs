//! Photon-echo decay fit `I(τ) = I₀ exp[−2(2τ/T₂)^x]`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use super::lm::{self, FitOptions, FitParameter, FitResult, LeastSquaresProblem};
use crate::error::{AfcError, Result};

/// Log-space residuals `ln I₀ − 2(2τ/T₂)^x − ln I`; parameters `(ln I₀, T₂, x)`
/// with `x ≥ 1`.
#[derive(Debug, Clone)]
pub struct EchoDecayModel {
    delays: Vec<f64>,
    log_intensities: Vec<f64>,
}

impl EchoDecayModel {
    pub fn new(delays: &[f64], intensities: &[f64]) -> Self {
        EchoDecayModel {
            delays: delays.to_vec(),
            log_intensities: intensities.iter().map(|i| i.ln()).collect(),
        }
    }

    /// `ln I(τ)` for parameters `(ln I₀, T₂, x)`.
    pub fn log_eval(p: &[f64], tau: f64) -> f64 {
        p[0] - 2.0 * (2.0 * tau / p[1]).powf(p[2])
    }
}

impl LeastSquaresProblem for EchoDecayModel {
    fn n_params(&self) -> usize {
        3
    }

    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        self.delays
            .iter()
            .zip(&self.log_intensities)
            .map(|(&t, &l)| Self::log_eval(p, t) - l)
            .collect()
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let (t2, x) = (p[1], p[2]);
        DMatrix::from_fn(self.delays.len(), 3, |i, k| {
            let u = 2.0 * self.delays[i] / t2;
            let ux = u.powf(x);
            match k {
                0 => 1.0,
                1 => 2.0 * x * ux / t2,
                _ => -2.0 * ux * u.ln(),
            }
        })
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![
            (f64::NEG_INFINITY, f64::INFINITY),
            (f64::MIN_POSITIVE, f64::INFINITY),
            (1.0, f64::INFINITY),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EchoDecayFit {
    /// Parameters `I0`, `T2_s` and `x`.
    #[serde(flatten)]
    pub fit: FitResult,
    pub homogeneous_linewidth_hz: f64,
    pub homogeneous_linewidth_sigma_hz: f64,
}

impl EchoDecayFit {
    pub fn t2(&self) -> f64 {
        self.fit.value("T2_s")
    }
}

/// Best `(ln I₀, T₂, x)` from a scan over `x` with linear least squares in
/// `(ln I₀, b)` for `ln I = ln I₀ − b·τ^x`.
fn initial_guess(delays: &[f64], logs: &[f64]) -> Option<[f64; 3]> {
    let mut best: Option<(f64, [f64; 3])> = None;
    for step in 0..=40 {
        let x = 1.0 + 0.05 * step as f64;
        // Scale τ to avoid tiny powers.
        let tmax = delays.iter().cloned().fold(0.0, f64::max);
        let u: Vec<f64> = delays.iter().map(|t| (t / tmax).powf(x)).collect();
        let n = u.len() as f64;
        let (su, sl) = (u.iter().sum::<f64>(), logs.iter().sum::<f64>());
        let suu = u.iter().map(|v| v * v).sum::<f64>();
        let sul = u.iter().zip(logs).map(|(v, l)| v * l).sum::<f64>();
        let det = n * suu - su * su;
        if det <= 0.0 {
            continue;
        }
        let slope = (n * sul - su * sl) / det;
        let a = (sl - slope * su) / n;
        let b = -slope;
        if b <= 0.0 {
            continue;
        }
        let sse: f64 = u
            .iter()
            .zip(logs)
            .map(|(v, l)| (a - b * v - l).powi(2))
            .sum();
        // b·(τ/tmax)^x = 2(2τ/T₂)^x  ⇒  T₂ = 2·tmax·(2/b)^{1/x}.
        let t2 = 2.0 * tmax * (2.0 / b).powf(1.0 / x);
        if best.is_none_or(|(e, _)| sse < e) {
            best = Some((sse, [a, t2, x]));
        }
    }
    best.map(|(_, p)| p)
}

/// Fits the echo decay in log-intensity space and reports `γ_h = 1/(πT₂)`.
pub fn fit_echo_decay(delays: &[f64], intensities: &[f64]) -> Result<EchoDecayFit> {
    let n = delays.len();
    if intensities.len() != n {
        return Err(AfcError::Analysis(
            "delays and intensities differ in length".into(),
        ));
    }
    if n < 6 {
        return Err(AfcError::Analysis(format!(
            "need at least 6 delay points, got {n}"
        )));
    }
    if delays.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(AfcError::Analysis("delays must be positive".into()));
    }
    if intensities.iter().any(|i| !(i.is_finite() && *i > 0.0)) {
        return Err(AfcError::Analysis("intensities must be positive".into()));
    }
    let (lo, hi) = intensities
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &i| {
            (a.min(i), b.max(i))
        });
    if lo == hi {
        return Err(AfcError::DegenerateData("all intensities are equal".into()));
    }
    if hi / lo < 10.0 {
        return Err(AfcError::DegenerateData(format!(
            "data span {:.2} decades of decay; at least one is needed",
            (hi / lo).log10()
        )));
    }

    let model = EchoDecayModel::new(delays, intensities);
    let initial = initial_guess(delays, &model.log_intensities)
        .ok_or_else(|| AfcError::DegenerateData("intensities do not decay with delay".into()))?;
    let sol = lm::solve(&model, &initial, &FitOptions::default());

    let (log_i0, t2, x) = (sol.params[0], sol.params[1], sol.params[2]);
    let i0 = log_i0.exp();
    let mut flags = Vec::new();
    if !sol.converged {
        flags.push(format!(
            "not converged after {} iterations (gradient {:.3e})",
            sol.iterations, sol.gradient_norm
        ));
    }
    if x <= 1.0 {
        flags.push("x at its lower bound of 1".to_string());
    }
    let parameters = vec![
        FitParameter {
            name: "I0".into(),
            value: i0,
            sigma: i0 * sol.sigmas[0],
        },
        FitParameter {
            name: "T2_s".into(),
            value: t2,
            sigma: sol.sigmas[1],
        },
        FitParameter {
            name: "x".into(),
            value: x,
            sigma: sol.sigmas[2],
        },
    ];
    Ok(EchoDecayFit {
        fit: FitResult {
            parameters,
            residual_norm: sol.residual_norm,
            gradient_norm: sol.gradient_norm,
            converged: sol.converged,
            iterations: sol.iterations,
            flags,
        },
        homogeneous_linewidth_hz: 1.0 / (PI * t2),
        homogeneous_linewidth_sigma_hz: sol.sigmas[1] / (PI * t2 * t2),
    })
}
