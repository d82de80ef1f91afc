//! Damped least squares (Levenberg-Marquardt) for small dense problems.
//!
//! Minimizes `½‖r(p)‖²` given residuals and an analytic Jacobian. The
//! damping is scaled by the diagonal of `JᵀJ`; it grows ×3 when a trial
//! step increases the cost and shrinks ×2 when a step is accepted.
//! Simple box bounds are enforced by projection.

use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeMap;
use serde::Serialize;

pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn residuals(&self, p: &[f64]) -> Vec<f64>;
    /// Row-major `m × n` Jacobian of the residuals.
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64>;
    /// Lower/upper bound for each parameter.
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY); self.n_params()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Largest admissible cosine between the residual vector and any
    /// Jacobian column (scale-free gradient test).
    pub gradient_tolerance: f64,
    /// Extra starts from perturbed initial guesses; the best fit wins.
    pub restarts: usize,
    /// Scale the covariance by the reduced chi-square. Disable when the
    /// residuals are already weighted by known absolute uncertainties.
    pub scale_by_reduced_chi2: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            restarts: 0,
            scale_by_reduced_chi2: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
}

impl Serialize for FitParameter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(2))?;
        m.serialize_entry("value", &self.value)?;
        m.serialize_entry("sigma", &self.sigma)?;
        m.end()
    }
}

/// Outcome of a fit. Serializes parameters as `name → {value, sigma}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    pub residual_norm: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub flags: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map(|p| p.value).unwrap_or(f64::NAN)
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.get(name).map(|p| p.sigma).unwrap_or(f64::NAN)
    }
}

impl Serialize for FitResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        struct Params<'a>(&'a [FitParameter]);
        impl Serialize for Params<'_> {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(self.0.len()))?;
                for p in self.0 {
                    m.serialize_entry(&p.name, p)?;
                }
                m.end()
            }
        }
        let mut m = s.serialize_map(Some(6))?;
        m.serialize_entry("parameters", &Params(&self.parameters))?;
        m.serialize_entry("residual_norm", &self.residual_norm)?;
        m.serialize_entry("gradient_norm", &self.gradient_norm)?;
        m.serialize_entry("converged", &self.converged)?;
        m.serialize_entry("iterations", &self.iterations)?;
        m.serialize_entry("flags", &self.flags)?;
        m.end()
    }
}

/// Raw solver output before parameters are named.
#[derive(Debug, Clone)]
pub struct Solution {
    pub params: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Parameter covariance; unidentifiable parameters carry an infinite
    /// variance and no correlations.
    pub covariance: DMatrix<f64>,
    pub residual_norm: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

fn project(p: &mut [f64], bounds: &[(f64, f64)]) {
    for (x, &(lo, hi)) in p.iter_mut().zip(bounds) {
        *x = x.clamp(lo, hi);
    }
}

/// Scale-free projected gradient: the largest `|J_iᵀr| / (‖J_i‖·‖r‖)`,
/// ignoring components that push against an active bound.
fn gradient_measure(j: &DMatrix<f64>, r: &DVector<f64>, p: &[f64], bounds: &[(f64, f64)]) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let g = j.transpose() * r;
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let (lo, hi) = bounds[i];
        // Descent direction is −g.
        if (p[i] <= lo && g[i] > 0.0) || (p[i] >= hi && g[i] < 0.0) {
            continue;
        }
        let cn = j.column(i).norm();
        if cn == 0.0 {
            continue;
        }
        worst = worst.max(g[i].abs() / (cn * rn));
    }
    worst
}

/// Covariance `s²·(JᵀJ)⁻¹`, with `s² = ‖r‖²/(m − n)` when scaling by the
/// reduced chi-square and 1 otherwise. Parameters with a vanishing
/// Jacobian column get an infinite variance.
fn covariance(j: &DMatrix<f64>, r: &DVector<f64>, scale_by_reduced_chi2: bool) -> DMatrix<f64> {
    let (m, n) = j.shape();
    let s2 = if scale_by_reduced_chi2 {
        r.norm_squared() / m.saturating_sub(n).max(1) as f64
    } else {
        1.0
    };
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        cov[(i, i)] = f64::INFINITY;
    }
    let max_col = (0..n).map(|i| j.column(i).norm()).fold(0.0, f64::max);
    let live: Vec<usize> = (0..n)
        .filter(|&i| j.column(i).norm() > 1e-12 * max_col)
        .collect();
    if live.is_empty() {
        return cov;
    }
    let sub = j.select_columns(&live);
    if let Some(inv) = (sub.transpose() * &sub).try_inverse() {
        for (a, &i) in live.iter().enumerate() {
            for (b, &k) in live.iter().enumerate() {
                cov[(i, k)] = s2 * inv[(a, b)];
            }
        }
    }
    cov
}

fn solve_once<P: LeastSquaresProblem>(problem: &P, initial: &[f64], opts: &FitOptions) -> Solution {
    let n = problem.n_params();
    let bounds = problem.bounds();
    let mut p = initial.to_vec();
    project(&mut p, &bounds);
    let mut r = DVector::from_vec(problem.residuals(&p));
    let mut c = cost(r.as_slice());
    let mut j = problem.jacobian(&p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut grad = gradient_measure(&j, &r, &p, &bounds);
    // Set when no damped step lowers the cost: stationary to working precision.
    let mut stalled = false;

    while iterations < opts.max_iterations && grad > opts.gradient_tolerance {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let max_diag = (0..n)
            .map(|i| jtj[(i, i)])
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut accepted = false;
        // Inner loop: raise damping until the cost decreases.
        for _ in 0..60 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * max_diag);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 3.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
            project(&mut trial, &bounds);
            let rt = problem.residuals(&trial);
            let ct = cost(&rt);
            if ct.is_finite() && ct < c {
                p = trial;
                r = DVector::from_vec(rt);
                c = ct;
                lambda = (lambda / 2.0).max(1e-15);
                accepted = true;
                break;
            }
            lambda *= 3.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !accepted {
            stalled = true;
            break;
        }
        j = problem.jacobian(&p);
        grad = gradient_measure(&j, &r, &p, &bounds);
    }

    let cov = covariance(&j, &r, opts.scale_by_reduced_chi2);
    Solution {
        sigmas: (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
        covariance: cov,
        params: p,
        residual_norm: r.norm(),
        gradient_norm: grad,
        converged: grad <= opts.gradient_tolerance || stalled,
        iterations,
    }
}

/// Runs the solver from `initial` plus `opts.restarts` deterministic
/// perturbations of it (±30 %) and keeps the lowest residual.
pub fn solve<P: LeastSquaresProblem>(problem: &P, initial: &[f64], opts: &FitOptions) -> Solution {
    let mut best = solve_once(problem, initial, opts);
    const FACTORS: [f64; 5] = [0.7, 1.3, 0.85, 1.15, 1.0];
    for k in 0..opts.restarts {
        let start: Vec<f64> = initial
            .iter()
            .enumerate()
            .map(|(i, x)| x * FACTORS[(k + i) % FACTORS.len()])
            .collect();
        let s = solve_once(problem, &start, opts);
        if s.residual_norm < best.residual_norm || (!best.converged && s.converged) {
            best = s;
        }
    }
    best
}
