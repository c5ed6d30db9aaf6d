//! Constrained sums of complex exponentials.
//!
//! Each motif is approximated by `yhat(t) = Re sum_k alpha_k exp(lambda_k t)`
//! subject to: every rate has negative real part, rates are pairwise
//! separated, the mode set is closed under conjugation (so `yhat` is real),
//! and `yhat(0) = 0`.
//!
//! Fitting uses variable projection: for fixed rates the coefficients are the
//! solution of a linear least-squares problem with the `yhat(0) = 0` equality
//! eliminated, and the rates follow a finite-difference descent step with
//! projection back into the feasible region. Rate initialization seeds the
//! imaginary parts at FFT-dominant frequencies of the motif and log-spaces
//! the real parts; restarts jitter that grid.
//!
//! Rates are additionally confined to a disk in the left half plane that
//! bounds the drift a forward-Euler integrator at the motif timestep
//! accumulates over one mode lifetime. This keeps the fitted model usable by
//! both the exact and the Euler integrators downstream.

use crate::error::{CoreError, Result};
use crate::linalg::C64;
use crate::motif::{Motif, MotifLibrary};
use crate::rng;
use ndarray::prelude::*;
use ndarray_linalg::LeastSquaresSvd;
use rand::Rng;
use rustfft::{num_complex::Complex as FftComplex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A K-mode complex-exponential approximation.
#[derive(Debug, Clone)]
pub struct ExpModes {
    pub lambdas: Vec<C64>,
    pub alphas: Vec<C64>,
}

impl ExpModes {
    pub fn k(&self) -> usize {
        self.lambdas.len()
    }

    /// `yhat(0) = sum_k alpha_k` (real by closure).
    pub fn y0(&self) -> f64 {
        self.alphas.iter().map(|a| a.re).sum()
    }

    /// Check stability, separation, conjugate closure, and the `yhat(0)`
    /// constraint.
    pub fn validate(&self, eps_sep: f64, y0_tol: f64) -> Result<()> {
        if self.lambdas.len() != self.alphas.len() {
            return Err(CoreError::validation("lambdas/alphas length mismatch"));
        }
        for l in &self.lambdas {
            if l.re >= 0.0 {
                return Err(CoreError::validation(format!(
                    "unstable mode {l}: real part must be negative"
                )));
            }
        }
        for i in 0..self.lambdas.len() {
            for j in (i + 1)..self.lambdas.len() {
                let d = (self.lambdas[i] - self.lambdas[j]).norm();
                if d < eps_sep {
                    return Err(CoreError::validation(format!(
                        "modes {i} and {j} are {d:.3e} apart, below separation {eps_sep:.3e}"
                    )));
                }
            }
        }
        // Conjugate closure: every non-real mode needs its mirror, with the
        // mirrored coefficient.
        let mut matched = vec![false; self.lambdas.len()];
        for i in 0..self.lambdas.len() {
            if matched[i] || self.lambdas[i].im == 0.0 {
                continue;
            }
            let conj = self.lambdas[i].conj();
            let partner = (0..self.lambdas.len()).find(|&j| {
                !matched[j]
                    && j != i
                    && (self.lambdas[j] - conj).norm() < 1e-12 * (1.0 + conj.norm())
                    && (self.alphas[j] - self.alphas[i].conj()).norm()
                        < 1e-9 * (1.0 + self.alphas[i].norm())
            });
            match partner {
                Some(j) => {
                    matched[i] = true;
                    matched[j] = true;
                }
                None => {
                    return Err(CoreError::validation(format!(
                        "mode {} lacks a conjugate partner",
                        self.lambdas[i]
                    )));
                }
            }
        }
        let y0 = self
            .alphas
            .iter()
            .fold(C64::new(0.0, 0.0), |acc, a| acc + a)
            .norm();
        if y0 > y0_tol {
            return Err(CoreError::validation(format!(
                "|yhat(0)| = {y0:.3e} exceeds tolerance {y0_tol:.3e}"
            )));
        }
        Ok(())
    }
}

/// Evaluate `Re sum_k alpha_k exp(lambda_k t)` on a time grid.
pub fn eval_modes(modes: &ExpModes, times: &[f64]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            modes
                .lambdas
                .iter()
                .zip(&modes.alphas)
                .map(|(l, a)| (a * (l * t).exp()).re)
                .sum()
        })
        .collect()
}

/// Fit constraints and optimizer budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConstraints {
    /// Mode count.
    pub k: usize,
    /// Number of real modes; the rest form conjugate pairs. `None` uses all
    /// pairs for even `k` and one real mode for odd `k`.
    pub n_real: Option<usize>,
    /// Minimum pairwise distance between rates.
    pub eps_sep: f64,
    /// Coefficient magnitude cap, relative to `max|y|`.
    pub alpha_max_rel: f64,
    /// Tolerance on `|yhat(0)|`.
    pub y0_tol: f64,
    /// Slowest admissible decay: `Re lambda <= -re_min`.
    pub re_min: f64,
    /// Fastest admissible decay from the initialization grid.
    pub re_max: f64,
    /// Timestep of the forward-Euler integrator the rates must respect.
    /// `None` lifts the drift-disk restriction.
    pub euler_dt: Option<f64>,
    /// Per-lifetime Euler drift bound defining the disk radius.
    pub euler_drift_max: f64,
    pub restarts: usize,
    pub max_iters: usize,
    /// Seed for restart jitter.
    pub seed: u64,
}

impl Default for FitConstraints {
    fn default() -> Self {
        FitConstraints {
            k: 10,
            n_real: None,
            eps_sep: 1e-3,
            alpha_max_rel: 1e3,
            y0_tol: 1e-6,
            re_min: 1e-3,
            re_max: 2.0,
            euler_dt: Some(0.1),
            euler_drift_max: 0.35,
            restarts: 4,
            max_iters: 160,
            seed: 0,
        }
    }
}

impl FitConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.eps_sep <= 0.0 || self.y0_tol <= 0.0 || self.alpha_max_rel <= 0.0 {
            return Err(CoreError::validation("tolerances must be positive"));
        }
        if self.re_min <= 0.0 || self.re_max <= self.re_min {
            return Err(CoreError::validation("need 0 < re_min < re_max"));
        }
        let n_real = self.n_real.unwrap_or(self.k % 2);
        if n_real > self.k || (self.k - n_real) % 2 != 0 {
            return Err(CoreError::validation(format!(
                "cannot split k = {} into {} real modes plus conjugate pairs",
                self.k, n_real
            )));
        }
        Ok(())
    }

    fn n_pairs(&self) -> usize {
        (self.k - self.n_real.unwrap_or(self.k % 2)) / 2
    }

    fn n_reals(&self) -> usize {
        self.n_real.unwrap_or(self.k % 2)
    }
}

/// Fit outcome bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub rmse: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Set when no restart converged and the best iterate is returned as-is.
    pub degraded: bool,
}

// ---------------------------------------------------------------------------
// Internal rate parameterization: conjugate pairs (a +- i b) and real rates.

#[derive(Debug, Clone)]
struct RateSet {
    /// `(a, b)` per pair, `b > 0`.
    pairs: Vec<(f64, f64)>,
    /// `a` per real mode.
    reals: Vec<f64>,
}

impl RateSet {
    fn n_params(&self) -> usize {
        2 * self.pairs.len() + self.reals.len()
    }

    fn to_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for &(a, b) in &self.pairs {
            p.push(a);
            p.push(b);
        }
        p.extend_from_slice(&self.reals);
        p
    }

    fn from_params(&self, p: &[f64]) -> RateSet {
        let mut pairs = Vec::with_capacity(self.pairs.len());
        for i in 0..self.pairs.len() {
            pairs.push((p[2 * i], p[2 * i + 1]));
        }
        let reals = p[2 * self.pairs.len()..].to_vec();
        RateSet { pairs, reals }
    }

    /// All K rates, pairs expanded as `(a + ib, a - ib)`.
    fn lambdas(&self) -> Vec<C64> {
        let mut out = Vec::new();
        for &(a, b) in &self.pairs {
            out.push(C64::new(a, b));
            out.push(C64::new(a, -b));
        }
        for &a in &self.reals {
            out.push(C64::new(a, 0.0));
        }
        out
    }
}

/// Project rates into the feasible region: the Euler drift disk, the decay
/// band, minimum oscillation frequency, and pairwise separation.
fn project(mut rs: RateSet, c: &FitConstraints) -> RateSet {
    let b_min = c.eps_sep;
    let clamp_one = |a: f64, b: f64| -> (f64, f64) {
        let mut a = a.clamp(-c.re_max, -c.re_min);
        let mut b = b;
        if let Some(dt) = c.euler_dt {
            // Disk centered at -r0 with radius r0 bounds the per-lifetime
            // Euler drift |lambda|^2 dt / (2 |Re lambda|).
            let r0 = c.euler_drift_max / dt;
            let dx = a + r0;
            let dist = (dx * dx + b * b).sqrt();
            if dist > r0 {
                let scale = r0 / dist;
                a = -r0 + dx * scale;
                b *= scale;
                a = a.clamp(-c.re_max, -c.re_min);
            }
        }
        (a, b)
    };

    for i in 0..rs.pairs.len() {
        let (a, b) = rs.pairs[i];
        let (a, b) = clamp_one(a, b.abs().max(b_min));
        rs.pairs[i] = (a, b.max(b_min));
    }
    for i in 0..rs.reals.len() {
        let (a, _) = clamp_one(rs.reals[i], 0.0);
        rs.reals[i] = a;
    }

    // Repel rates closer than eps_sep. A few sweeps suffice; each sweep
    // nudges offenders apart symmetrically and re-clamps.
    for _ in 0..4 {
        let mut moved = false;
        for i in 0..rs.pairs.len() {
            for j in (i + 1)..rs.pairs.len() {
                let (ai, bi) = rs.pairs[i];
                let (aj, bj) = rs.pairs[j];
                // Compare against both the partner and its conjugate.
                let d_direct = ((ai - aj).powi(2) + (bi - bj).powi(2)).sqrt();
                if d_direct < c.eps_sep {
                    let push = 0.6 * (c.eps_sep - d_direct) + 1e-12;
                    rs.pairs[i].1 = bi + push;
                    rs.pairs[j].1 = (bj - push).max(b_min);
                    moved = true;
                }
            }
        }
        for i in 0..rs.reals.len() {
            for j in (i + 1)..rs.reals.len() {
                let d = (rs.reals[i] - rs.reals[j]).abs();
                if d < c.eps_sep {
                    let push = 0.6 * (c.eps_sep - d) + 1e-12;
                    if rs.reals[i] <= rs.reals[j] {
                        rs.reals[i] -= push;
                        rs.reals[j] += push;
                    } else {
                        rs.reals[i] += push;
                        rs.reals[j] -= push;
                    }
                    rs.reals[i] = rs.reals[i].clamp(-c.re_max, -c.re_min);
                    rs.reals[j] = rs.reals[j].clamp(-c.re_max, -c.re_min);
                    moved = true;
                }
            }
        }
        // Real modes vs pairs: the vertical distance to the pair is at least
        // b >= eps_sep already, so only identical-frequency collisions with
        // b < eps_sep could occur, which the b_min clamp rules out.
        if !moved {
            break;
        }
    }
    rs
}

/// Coefficients and fit quality for fixed rates: solve the constrained
/// least-squares problem and report `(objective, mse, alphas)`.
struct ProjectedFit {
    objective: f64,
    mse: f64,
    alphas: Vec<C64>,
}

fn solve_coefficients(
    rs: &RateSet,
    times: &[f64],
    y: &[f64],
    alpha_max: f64,
    penalty_weight: f64,
) -> ProjectedFit {
    let t_len = times.len();
    let n_pairs = rs.pairs.len();
    let n_reals = rs.reals.len();
    // Real basis: per pair a cosine and a sine column, then one column per
    // real rate. yhat(0) = sum of cosine and real coefficients = 0.
    let n_cols = 2 * n_pairs + n_reals;
    let mut basis = Array2::<f64>::zeros((t_len, n_cols));
    for (p, &(a, b)) in rs.pairs.iter().enumerate() {
        for (i, &t) in times.iter().enumerate() {
            let e = (a * t).exp();
            basis[(i, 2 * p)] = e * (b * t).cos();
            basis[(i, 2 * p + 1)] = e * (b * t).sin();
        }
    }
    for (r, &a) in rs.reals.iter().enumerate() {
        for (i, &t) in times.iter().enumerate() {
            basis[(i, 2 * n_pairs + r)] = (a * t).exp();
        }
    }

    // Columns participating in the yhat(0) = 0 constraint.
    let constrained: Vec<usize> = (0..n_pairs)
        .map(|p| 2 * p)
        .chain((0..n_reals).map(|r| 2 * n_pairs + r))
        .collect();
    let free: Vec<usize> = (0..n_pairs).map(|p| 2 * p + 1).collect();

    let coeffs = if constrained.len() <= 1 {
        // The constraint forces the lone constrained coefficient to zero.
        let mut coeffs = vec![0.0; n_cols];
        if !free.is_empty() {
            let mut a_red = Array2::<f64>::zeros((t_len, free.len()));
            for (k, &j) in free.iter().enumerate() {
                a_red.column_mut(k).assign(&basis.column(j));
            }
            let rhs = Array1::from_vec(y.to_vec());
            if let Ok(sol) = a_red.least_squares(&rhs) {
                for (k, &j) in free.iter().enumerate() {
                    coeffs[j] = sol.solution[k];
                }
            }
        }
        coeffs
    } else {
        // Eliminate the largest-norm constrained column.
        let pivot_pos = constrained
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| {
                let na = basis.column(a).dot(&basis.column(a));
                let nb = basis.column(b).dot(&basis.column(b));
                na.partial_cmp(&nb).unwrap()
            })
            .map(|(k, _)| k)
            .unwrap();
        let pivot = constrained[pivot_pos];
        let reduced_cols: Vec<usize> = constrained
            .iter()
            .copied()
            .filter(|&j| j != pivot)
            .chain(free.iter().copied())
            .collect();
        let mut a_red = Array2::<f64>::zeros((t_len, reduced_cols.len()));
        let pivot_col = basis.column(pivot).to_owned();
        for (k, &j) in reduced_cols.iter().enumerate() {
            if constrained.contains(&j) {
                let diff = &basis.column(j) - &pivot_col;
                a_red.column_mut(k).assign(&diff);
            } else {
                a_red.column_mut(k).assign(&basis.column(j));
            }
        }
        let rhs = Array1::from_vec(y.to_vec());
        let mut coeffs = vec![0.0; n_cols];
        if let Ok(sol) = a_red.least_squares(&rhs) {
            for (k, &j) in reduced_cols.iter().enumerate() {
                coeffs[j] = sol.solution[k];
            }
            coeffs[pivot] = -constrained
                .iter()
                .filter(|&&j| j != pivot)
                .map(|&j| coeffs[j])
                .sum::<f64>();
        }
        coeffs
    };

    let fitted = basis.dot(&Array1::from_vec(coeffs.clone()));
    let mse = fitted
        .iter()
        .zip(y)
        .map(|(f, v)| (f - v).powi(2))
        .sum::<f64>()
        / t_len as f64;

    // Complex coefficients: pair (c, d) -> alpha = (c - i d)/2 on a + ib and
    // its conjugate on a - ib.
    let mut alphas = Vec::with_capacity(2 * n_pairs + n_reals);
    for p in 0..n_pairs {
        let c = coeffs[2 * p];
        let d = coeffs[2 * p + 1];
        alphas.push(C64::new(c / 2.0, -d / 2.0));
        alphas.push(C64::new(c / 2.0, d / 2.0));
    }
    for r in 0..n_reals {
        alphas.push(C64::new(coeffs[2 * n_pairs + r], 0.0));
    }

    let overshoot: f64 = alphas
        .iter()
        .map(|a| ((a.norm() - alpha_max).max(0.0) / alpha_max).powi(2))
        .sum();
    ProjectedFit {
        objective: mse + penalty_weight * overshoot,
        mse,
        alphas,
    }
}

/// Dominant angular frequencies of `y`, strongest first, merged within two
/// FFT bins.
fn dominant_frequencies(y: &[f64], dt: f64, count: usize) -> Vec<f64> {
    let n = y.len();
    let mut buf: Vec<FftComplex<f64>> = y.iter().map(|&v| FftComplex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let d_omega = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    let mut bins: Vec<(usize, f64)> = (1..n / 2).map(|m| (m, buf[m].norm())).collect();
    bins.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut freqs: Vec<f64> = Vec::new();
    for (m, _) in bins {
        let omega = m as f64 * d_omega;
        if freqs.iter().all(|&w| (w - omega).abs() > 2.0 * d_omega) {
            freqs.push(omega);
            if freqs.len() == count {
                break;
            }
        }
    }
    // Flat spectra fall back to a log grid.
    let mut fill = 0;
    while freqs.len() < count {
        fill += 1;
        freqs.push(0.1 * 1.6f64.powi(fill));
    }
    freqs
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo * hi).sqrt()];
    }
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn initial_rates(motif: &Motif, c: &FitConstraints) -> RateSet {
    let n_pairs = c.n_pairs();
    let n_reals = c.n_reals();
    let freqs = dominant_frequencies(&motif.samples, motif.dt, n_pairs.max(1));
    let decays = log_spaced(0.05, c.re_max.min(2.0), n_pairs.max(1));
    let pairs = (0..n_pairs)
        .map(|i| (-decays[i % decays.len()], freqs[i].max(c.eps_sep)))
        .collect();
    let reals = log_spaced(0.05, c.re_max.min(2.0), n_reals.max(1))
        .into_iter()
        .take(n_reals)
        .map(|d| -d)
        .collect();
    project(RateSet { pairs, reals }, c)
}

/// Fit `k` modes to a motif. Deterministic given `constraints.seed`.
pub fn fit_exponentials(motif: &Motif, constraints: &FitConstraints) -> Result<(ExpModes, FitDiagnostics)> {
    fit_with_warm_start(motif, constraints, None)
}

/// Fit with an optional warm start: previous modes are kept as the seed and
/// fresh grid modes fill up the remaining count. The returned fit never has
/// a higher objective than its initialization.
pub fn fit_with_warm_start(
    motif: &Motif,
    constraints: &FitConstraints,
    warm: Option<&ExpModes>,
) -> Result<(ExpModes, FitDiagnostics)> {
    constraints.validate()?;
    if motif.samples.is_empty() {
        return Err(CoreError::validation("motif has no samples"));
    }
    let times = motif.times();
    let y = &motif.samples;
    let max_abs = motif.max_abs();

    if max_abs == 0.0 {
        // Zero target: zero coefficients on a default stable rate grid.
        let rs = initial_rates(motif, constraints);
        let lambdas = rs.lambdas();
        let alphas = vec![C64::new(0.0, 0.0); lambdas.len()];
        let modes = ExpModes { lambdas, alphas };
        modes.validate(constraints.eps_sep, constraints.y0_tol)?;
        return Ok((
            modes,
            FitDiagnostics {
                rmse: 0.0,
                iterations: 0,
                restarts: 0,
                converged: true,
                degraded: false,
            },
        ));
    }
    if constraints.k < 2 {
        return Err(CoreError::Infeasible(format!(
            "k = {} cannot represent a nonzero motif with yhat(0) = 0",
            constraints.k
        )));
    }

    let alpha_max = constraints.alpha_max_rel * max_abs;
    let penalty_weight = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let evaluate = |rs: &RateSet| solve_coefficients(rs, &times, y, alpha_max, penalty_weight);

    let base_init = match warm {
        Some(prev) => warm_start_rates(prev, motif, constraints)?,
        None => initial_rates(motif, constraints),
    };

    let mut best: Option<(RateSet, ProjectedFit)> = None;
    let mut total_iters = 0usize;
    let mut any_converged = false;

    for restart in 0..constraints.restarts.max(1) {
        let mut rng = rng::stream(constraints.seed, "expfit-restart", restart as u64);
        let mut rs = if restart == 0 {
            base_init.clone()
        } else {
            let jittered = RateSet {
                pairs: base_init
                    .pairs
                    .iter()
                    .map(|&(a, b)| {
                        let ja: f64 = rng.sample(rand_distr::StandardNormal);
                        let jb: f64 = rng.sample(rand_distr::StandardNormal);
                        (a * (0.35 * ja).exp(), b * (0.25 * jb).exp())
                    })
                    .collect(),
                reals: base_init
                    .reals
                    .iter()
                    .map(|&a| {
                        let ja: f64 = rng.sample(rand_distr::StandardNormal);
                        a * (0.35 * ja).exp()
                    })
                    .collect(),
            };
            project(jittered, constraints)
        };

        let mut fit = evaluate(&rs);
        let mut step = 0.05;
        let mut converged = false;
        for _ in 0..constraints.max_iters {
            total_iters += 1;
            let params = rs.to_params();
            // Forward differences on the projected objective.
            let mut grad = vec![0.0; params.len()];
            for i in 0..params.len() {
                let h = 1e-6 * params[i].abs().max(1e-3);
                let mut bumped = params.clone();
                bumped[i] += h;
                let rs_b = project(rs.from_params(&bumped), constraints);
                let f_b = evaluate(&rs_b);
                grad[i] = (f_b.objective - fit.objective) / h;
            }
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < 1e-12 {
                converged = true;
                break;
            }
            let mut accepted = false;
            for _ in 0..24 {
                let trial: Vec<f64> = params
                    .iter()
                    .zip(&grad)
                    .map(|(p, g)| p - step * g / gnorm)
                    .collect();
                let rs_t = project(rs.from_params(&trial), constraints);
                let fit_t = evaluate(&rs_t);
                if fit_t.objective < fit.objective - 1e-14 {
                    let rel = (fit.objective - fit_t.objective) / fit.objective.max(1e-300);
                    rs = rs_t;
                    fit = fit_t;
                    step = (step * 1.4).min(0.5);
                    accepted = true;
                    if rel < 1e-9 {
                        converged = true;
                    }
                    break;
                }
                step *= 0.5;
                if step < 1e-10 {
                    break;
                }
            }
            if !accepted {
                converged = true;
                break;
            }
            if converged {
                break;
            }
        }
        any_converged |= converged;
        if best.as_ref().map_or(true, |(_, b)| fit.objective < b.objective) {
            best = Some((rs, fit));
        }
    }

    let (rs, fit) = best.unwrap();
    let modes = ExpModes {
        lambdas: rs.lambdas(),
        alphas: fit.alphas,
    };
    modes.validate(constraints.eps_sep, constraints.y0_tol)?;
    Ok((
        modes,
        FitDiagnostics {
            rmse: fit.mse.sqrt(),
            iterations: total_iters,
            restarts: constraints.restarts.max(1),
            converged: any_converged,
            degraded: !any_converged,
        },
    ))
}

/// Rebuild a `RateSet` from stored modes and top up with grid rates.
fn warm_start_rates(prev: &ExpModes, motif: &Motif, c: &FitConstraints) -> Result<RateSet> {
    prev.validate(c.eps_sep, f64::INFINITY)?;
    let mut pairs = Vec::new();
    let mut reals = Vec::new();
    let mut seen = vec![false; prev.lambdas.len()];
    for (i, l) in prev.lambdas.iter().enumerate() {
        if seen[i] {
            continue;
        }
        if l.im == 0.0 {
            reals.push(l.re);
            seen[i] = true;
        } else if l.im > 0.0 {
            pairs.push((l.re, l.im));
            seen[i] = true;
            if let Some(j) = prev
                .lambdas
                .iter()
                .enumerate()
                .position(|(j, m)| !seen[j] && (m - l.conj()).norm() < 1e-12 * (1.0 + l.norm()))
            {
                seen[j] = true;
            }
        } else {
            pairs.push((l.re, -l.im));
            seen[i] = true;
            if let Some(j) = prev
                .lambdas
                .iter()
                .enumerate()
                .position(|(j, m)| !seen[j] && (m - l.conj()).norm() < 1e-12 * (1.0 + l.norm()))
            {
                seen[j] = true;
            }
        }
    }
    let want_pairs = c.n_pairs();
    let want_reals = c.n_reals();
    if pairs.len() > want_pairs || reals.len() > want_reals {
        return Err(CoreError::validation(
            "warm start has more modes than the requested composition",
        ));
    }
    let grid = initial_rates(motif, c);
    // Fill missing pairs with unused grid entries, nudged off existing ones.
    for (a, b) in grid.pairs {
        if pairs.len() == want_pairs {
            break;
        }
        if pairs
            .iter()
            .all(|&(pa, pb)| ((pa - a).powi(2) + (pb - b).powi(2)).sqrt() > 4.0 * c.eps_sep)
        {
            pairs.push((a, b));
        }
    }
    let mut shift = 1;
    while pairs.len() < want_pairs {
        let (a, b) = pairs[pairs.len() % pairs.len().max(1)];
        pairs.push((a, b + shift as f64 * 0.37 + 5.0 * c.eps_sep));
        shift += 1;
    }
    for a in grid.reals {
        if reals.len() == want_reals {
            break;
        }
        if reals.iter().all(|&r| (r - a).abs() > 4.0 * c.eps_sep) {
            reals.push(a);
        }
    }
    let mut shift = 1;
    while reals.len() < want_reals {
        reals.push(-0.05 - shift as f64 * 0.11);
        shift += 1;
    }
    Ok(project(RateSet { pairs, reals }, c))
}

/// Per-motif fit results keyed by motif id.
#[derive(Debug, Clone)]
pub struct LibraryFit {
    pub motif_id: usize,
    pub modes: ExpModes,
    pub diagnostics: FitDiagnostics,
}

/// Fit every motif in a library. Per-motif failures carry the motif id.
pub fn fit_library(lib: &MotifLibrary, constraints: &FitConstraints) -> Result<Vec<LibraryFit>> {
    let mut out = Vec::with_capacity(lib.len());
    for entry in &lib.motifs {
        let motif = lib.motif(entry.id).unwrap();
        let mut c = constraints.clone();
        c.seed = rng::derive_seed(constraints.seed, "expfit-motif", entry.id as u64);
        let (modes, diagnostics) = fit_exponentials(&motif, &c).map_err(|e| {
            CoreError::validation(format!("fit of motif {} failed: {e}", entry.id))
        })?;
        out.push(LibraryFit {
            motif_id: entry.id,
            modes,
            diagnostics,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Modes file

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModesRecord {
    pub motif_id: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub lambdas: Vec<[f64; 2]>,
    pub alphas: Vec<[f64; 2]>,
    pub rmse: f64,
    pub converged: bool,
    pub degraded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModesFile {
    pub version: u32,
    pub fits: Vec<ModesRecord>,
}

impl From<&LibraryFit> for ModesRecord {
    fn from(fit: &LibraryFit) -> Self {
        ModesRecord {
            motif_id: fit.motif_id,
            k: fit.modes.k(),
            lambdas: fit.modes.lambdas.iter().map(|z| [z.re, z.im]).collect(),
            alphas: fit.modes.alphas.iter().map(|z| [z.re, z.im]).collect(),
            rmse: fit.diagnostics.rmse,
            converged: fit.diagnostics.converged,
            degraded: fit.diagnostics.degraded,
        }
    }
}

impl ModesRecord {
    pub fn modes(&self) -> ExpModes {
        ExpModes {
            lambdas: self.lambdas.iter().map(|p| C64::new(p[0], p[1])).collect(),
            alphas: self.alphas.iter().map(|p| C64::new(p[0], p[1])).collect(),
        }
    }
}

pub fn save_modes(fits: &[LibraryFit], path: impl AsRef<Path>) -> Result<()> {
    let file = ModesFile {
        version: crate::motif::FORMAT_VERSION,
        fits: fits.iter().map(ModesRecord::from).collect(),
    };
    let out = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(out), &file)?;
    Ok(())
}

pub fn load_modes(path: impl AsRef<Path>) -> Result<ModesFile> {
    let file = std::fs::File::open(path)?;
    let modes: ModesFile = serde_json::from_reader(std::io::BufReader::new(file))?;
    Ok(modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motif::{generate_motif, MotifSpec};
    use approx::assert_abs_diff_eq;

    fn synthetic_motif(f: impl Fn(f64) -> f64, n: usize, dt: f64) -> Motif {
        Motif {
            id: 0,
            dt,
            samples: (0..n).map(|i| f(i as f64 * dt)).collect(),
        }
    }

    #[test]
    fn eval_modes_analytic_identity() {
        // lambda = -1 +- i with alpha = -+ i/2 gives exp(-t) sin(t).
        let modes = ExpModes {
            lambdas: vec![C64::new(-1.0, 1.0), C64::new(-1.0, -1.0)],
            alphas: vec![C64::new(0.0, -0.5), C64::new(0.0, 0.5)],
        };
        modes.validate(1e-3, 1e-9).unwrap();
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let vals = eval_modes(&modes, &times);
        for (&t, &v) in times.iter().zip(&vals) {
            assert_abs_diff_eq!(v, (-t).exp() * t.sin(), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn eval_modes_zero_alphas() {
        let modes = ExpModes {
            lambdas: vec![C64::new(-1.0, 2.0), C64::new(-1.0, -2.0)],
            alphas: vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        };
        let times = [0.0, 1.0, 2.0];
        assert!(eval_modes(&modes, &times).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_modes_is_linear_in_alphas() {
        let lambdas = vec![C64::new(-0.5, 1.5), C64::new(-0.5, -1.5)];
        let a1 = vec![C64::new(1.0, -0.7), C64::new(1.0, 0.7)];
        let a2 = vec![C64::new(-0.3, 0.2), C64::new(-0.3, -0.2)];
        let sum: Vec<C64> = a1.iter().zip(&a2).map(|(x, y)| x + y).collect();
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.07).collect();
        let e1 = eval_modes(
            &ExpModes { lambdas: lambdas.clone(), alphas: a1 },
            &times,
        );
        let e2 = eval_modes(
            &ExpModes { lambdas: lambdas.clone(), alphas: a2 },
            &times,
        );
        let es = eval_modes(&ExpModes { lambdas, alphas: sum }, &times);
        for i in 0..times.len() {
            let expect = e1[i] + e2[i];
            assert!((es[i] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn recovers_two_real_exponentials() {
        // Ground truth y = exp(-t) - exp(-2t): lambdas {-1, -2}, alphas {1, -1}.
        let motif = synthetic_motif(|t| (-t).exp() - (-2.0 * t).exp(), 400, 0.05);
        let constraints = FitConstraints {
            k: 2,
            n_real: Some(2),
            euler_dt: None,
            re_max: 4.0,
            restarts: 6,
            max_iters: 400,
            ..FitConstraints::default()
        };
        let (modes, diag) = fit_exponentials(&motif, &constraints).unwrap();
        let mut rates: Vec<f64> = modes.lambdas.iter().map(|l| l.re).collect();
        rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            (rates[0] + 2.0).abs() < 1e-4 * 2.0 && (rates[1] + 1.0).abs() < 1e-4,
            "recovered rates {rates:?}, rmse {}",
            diag.rmse
        );
        let mut amps: Vec<f64> = modes.alphas.iter().map(|a| a.re).collect();
        amps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((amps[0] + 1.0).abs() < 1e-4 && (amps[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn zero_motif_fits_to_zero() {
        let motif = synthetic_motif(|_| 0.0, 100, 0.1);
        let (modes, diag) = fit_exponentials(&motif, &FitConstraints::default()).unwrap();
        assert_eq!(diag.rmse, 0.0);
        assert!(modes.alphas.iter().all(|a| a.norm() == 0.0));
        modes.validate(1e-3, 1e-6).unwrap();
    }

    #[test]
    fn k_too_small_for_nonzero_motif_errors() {
        let motif = synthetic_motif(|t| t.sin(), 100, 0.1);
        let constraints = FitConstraints {
            k: 1,
            n_real: Some(1),
            ..FitConstraints::default()
        };
        assert!(matches!(
            fit_exponentials(&motif, &constraints),
            Err(CoreError::Infeasible(_))
        ));
    }

    #[test]
    fn fitted_modes_satisfy_invariants_and_match_stored_rmse() {
        let spec = MotifSpec { seed: 5, ..MotifSpec::default() };
        let motif = generate_motif(2, &spec).unwrap();
        let constraints = FitConstraints { restarts: 2, max_iters: 60, ..FitConstraints::default() };
        let (modes, diag) = fit_exponentials(&motif, &constraints).unwrap();
        modes.validate(constraints.eps_sep, constraints.y0_tol).unwrap();
        let fitted = eval_modes(&modes, &motif.times());
        let mse = fitted
            .iter()
            .zip(&motif.samples)
            .map(|(f, y)| (f - y).powi(2))
            .sum::<f64>()
            / fitted.len() as f64;
        assert_abs_diff_eq!(mse.sqrt(), diag.rmse, epsilon = 1e-9);
        // The fit must beat the trivial zero prediction.
        let zero_mse = motif.samples.iter().map(|y| y * y).sum::<f64>() / fitted.len() as f64;
        assert!(mse < zero_mse, "mse {mse} vs zero-prediction {zero_mse}");
    }

    #[test]
    fn nested_fits_do_not_regress() {
        let spec = MotifSpec { seed: 9, ..MotifSpec::default() };
        let motif = generate_motif(0, &spec).unwrap();
        let mut prev: Option<ExpModes> = None;
        let mut last_rmse = f64::INFINITY;
        for k in [2usize, 4, 6, 8, 10] {
            let constraints = FitConstraints {
                k,
                n_real: Some(0),
                restarts: 1,
                max_iters: 60,
                ..FitConstraints::default()
            };
            let (modes, diag) =
                fit_with_warm_start(&motif, &constraints, prev.as_ref()).unwrap();
            assert!(
                diag.rmse <= last_rmse + 1e-9,
                "k={k}: rmse {} regressed from {last_rmse}",
                diag.rmse
            );
            last_rmse = diag.rmse;
            prev = Some(modes);
        }
    }

    #[test]
    fn fit_library_maps_ids_and_propagates_failures() {
        let lib = crate::motif::generate_library(2, 3, &MotifSpec::default()).unwrap();
        let constraints = FitConstraints { restarts: 1, max_iters: 30, ..FitConstraints::default() };
        let fits = fit_library(&lib, &constraints).unwrap();
        assert_eq!(fits.len(), 2);
        assert_eq!(fits[0].motif_id, 0);
        assert_eq!(fits[1].motif_id, 1);

        let bad = FitConstraints { k: 1, n_real: Some(1), ..constraints };
        let err = fit_library(&lib, &bad).unwrap_err();
        assert!(err.to_string().contains("motif 0"), "{err}");
    }

    #[test]
    fn modes_file_round_trip() {
        let lib = crate::motif::generate_library(1, 8, &MotifSpec::default()).unwrap();
        let constraints = FitConstraints { restarts: 1, max_iters: 20, ..FitConstraints::default() };
        let fits = fit_library(&lib, &constraints).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("modes.json");
        save_modes(&fits, &path).unwrap();
        let loaded = load_modes(&path).unwrap();
        assert_eq!(loaded.fits.len(), 1);
        let round = loaded.fits[0].modes();
        for (a, b) in round.lambdas.iter().zip(&fits[0].modes.lambdas) {
            assert_eq!(a, b);
        }
        for (a, b) in round.alphas.iter().zip(&fits[0].modes.alphas) {
            assert_eq!(a, b);
        }
    }
}
