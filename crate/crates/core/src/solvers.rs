//! Bregman proximal gradient iterations, with and without extrapolation.
//!
//! [`bpge_solve`] runs
//!
//! ```text
//! y^k     = x^k + β_k (x^k - x^{k-1})
//! x^{k+1} = argmin_u { g(u) + <grad f(y^k), u - y^k> + D_h(u, y^k) / λ }
//! ```
//!
//! where `β_k` comes from [`line_search_beta`]: the first `β` in
//! `β₀, ηβ₀, η²β₀, …` with `D_h(x^k, y^k) <= ρ C D_h(x^{k-1}, x^k)` and
//! `C = λ⁻¹ / (λ⁻¹ + μ)`. [`bpg_solve`] is the same loop with `β_k ≡ 0`.
//! Under the Euclidean kernel the two reduce to PGe and PG.
//!
//! Every iteration is recorded in an [`IterationRecord`] so the descent of
//! `H_k = Ψ(x^k) + M D_h(x^{k-1}, x^k)` and the `O(1/K)` bound on
//! `min_k D_h(x^{k-1}, x^k)` can be checked after the fact.

use std::time::Instant;

use ndarray::{Array1, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{EuclideanKernel, Kernel};
use crate::problems::{CompositeObjective, NonsmoothTerm, SmoothTerm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    /// Initial trial `β₀ ∈ [0, 1)`.
    pub beta0: f64,
    /// Shrink factor `η ∈ (0, 1)`.
    pub eta: f64,
    /// Acceptance fraction `ρ ∈ (0, 1)`.
    pub rho: f64,
    /// Shrinks tried before falling back to `β = 0`.
    pub max_shrinks: u32,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            beta0: 0.99,
            eta: 0.5,
            rho: 0.99,
            max_shrinks: 60,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta0) {
            return Err(Error::InvalidConfig(format!(
                "beta0 must lie in [0, 1), got {}",
                self.beta0
            )));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eta must lie in (0, 1), got {}",
                self.eta
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        if self.max_shrinks == 0 {
            return Err(Error::InvalidConfig("max_shrinks must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitMode {
    /// `‖x^k - x^{k-1}‖ / max(1, ‖x^k‖) <= tol`
    #[serde(rename = "iterate", alias = "iterate_relative")]
    IterateRelative,
    /// `|Ψ(x^k) - Ψ(x^{k-1})| / max(1, |Ψ(x^k)|) <= tol`
    #[serde(rename = "objective", alias = "objective_relative")]
    ObjectiveRelative,
}

impl std::fmt::Display for ExitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExitMode::IterateRelative => "iterate",
            ExitMode::ObjectiveRelative => "objective",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Fixed step size `λ`, at most `1/L`.
    pub lambda: f64,
    pub line_search: LineSearchConfig,
    pub tol: f64,
    pub k_max: usize,
    pub exit_mode: ExitMode,
    /// Weight `M` of the Lyapunov sequence; `None` means `1/λ`.
    pub lyapunov_m: Option<f64>,
    /// Keep every iterate `x^0, …, x^n` in the result.
    pub keep_iterates: bool,
}

impl SolverConfig {
    pub const DEFAULT_TOL: f64 = 1e-6;
    pub const DEFAULT_K_MAX: usize = 5000;

    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            line_search: LineSearchConfig::default(),
            tol: Self::DEFAULT_TOL,
            k_max: Self::DEFAULT_K_MAX,
            exit_mode: ExitMode::IterateRelative,
            lyapunov_m: None,
            keep_iterates: false,
        }
    }

    pub fn lyapunov_weight(&self) -> f64 {
        self.lyapunov_m.unwrap_or(1.0 / self.lambda)
    }

    /// Checks the parameter window against the smad constant `L`.
    pub fn validate(&self, smad_constant: f64) -> Result<()> {
        self.line_search.validate()?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.lambda * smad_constant > 1.0 + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "lambda = {} exceeds 1/L = {}",
                self.lambda,
                1.0 / smad_constant
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be positive".into()));
        }
        let inv = 1.0 / self.lambda;
        let m = self.lyapunov_weight();
        let slack = 1e-12 * inv;
        if !(m >= self.line_search.rho * inv - slack && m <= inv + slack) {
            return Err(Error::InvalidConfig(format!(
                "Lyapunov weight M = {m} must lie in [rho/lambda, 1/lambda] = [{}, {inv}]",
                self.line_search.rho * inv
            )));
        }
        Ok(())
    }
}

/// One step of a run, describing `x^k` for `k >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `Ψ(x^k)`
    pub psi: f64,
    /// `D_h(x^{k-1}, x^k)`
    pub dh_step: f64,
    /// `Ψ(x^k) + M D_h(x^{k-1}, x^k)`
    pub lyapunov: f64,
    /// Extrapolation `β_{k-1}` used to form `y^{k-1}`.
    pub beta_accepted: f64,
    pub shrink_count: u32,
    /// The line search exhausted its shrinks and used `β = 0`.
    pub beta_fallback: bool,
    /// `‖grad f(x^k) - grad f(y^{k-1}) - (grad h(x^k) - grad h(y^{k-1})) / λ‖`,
    /// the norm of an element of `∂Ψ(x^k)`.
    pub residual: f64,
    /// Seconds since the start of the solve.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Tolerance,
    MaxIterations,
    NumericalFailure,
}

impl std::fmt::Display for ExitReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExitReason::Tolerance => "tolerance",
            ExitReason::MaxIterations => "max_iterations",
            ExitReason::NumericalFailure => "numerical_failure",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub x_final: Array1<f64>,
    /// `Ψ(x^0)`, which is also `H_0`.
    pub psi_initial: f64,
    pub psi_final: f64,
    pub iterations: usize,
    pub exit_reason: ExitReason,
    pub failure: Option<String>,
    pub trace: Vec<IterationRecord>,
    /// `x^0, …, x^n` when requested via [`SolverConfig::keep_iterates`].
    #[serde(skip)]
    pub iterates: Option<Vec<Array1<f64>>>,
    pub lambda: f64,
    pub rho: f64,
    /// `C = λ⁻¹ / (λ⁻¹ + μ)` used by the line search.
    pub line_search_constant: f64,
    pub lyapunov_m: f64,
}

/// Result of one call to [`line_search_beta`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub beta: f64,
    pub shrinks: u32,
    /// No trial passed within `max_shrinks`; `β = 0` was returned.
    pub fallback: bool,
}

/// `C = λ⁻¹ / (λ⁻¹ + μ)`.
pub fn line_search_constant(lambda: f64, mu: f64) -> f64 {
    let inv = 1.0 / lambda;
    inv / (inv + mu)
}

fn extrapolate(x_prev: ArrayView1<f64>, x_curr: ArrayView1<f64>, beta: f64) -> Array1<f64> {
    if beta == 0.0 {
        return x_curr.to_owned();
    }
    let mut y = x_curr.to_owned();
    Zip::from(&mut y)
        .and(&x_prev)
        .for_each(|yi, &p| *yi += beta * (*yi - p));
    y
}

/// Backtracking search for the extrapolation weight.
///
/// Tries `β₀ η^j` for `j = 0, 1, …, max_shrinks` and returns the first trial
/// whose extrapolated point `x_curr + β (x_curr - x_prev)` is in `int dom h`
/// and satisfies `D_h(x_curr, trial) <= ρ C D_h(x_prev, x_curr)`. A trial
/// outside the domain counts as a failed test.
pub fn line_search_beta<K: Kernel + ?Sized>(
    kernel: &K,
    x_prev: ArrayView1<f64>,
    x_curr: ArrayView1<f64>,
    cfg: &LineSearchConfig,
    c_k: f64,
) -> Result<LineSearchOutcome> {
    let threshold = cfg.rho * c_k * kernel.bregman(x_prev, x_curr)?;
    let mut beta = cfg.beta0;
    for shrinks in 0..=cfg.max_shrinks {
        let trial = extrapolate(x_prev, x_curr, beta);
        if kernel.in_interior_domain(trial.view()) {
            if let Ok(d) = kernel.bregman(x_curr, trial.view()) {
                if d <= threshold {
                    return Ok(LineSearchOutcome {
                        beta,
                        shrinks,
                        fallback: false,
                    });
                }
            }
        }
        beta *= cfg.eta;
    }
    Ok(LineSearchOutcome {
        beta: 0.0,
        shrinks: cfg.max_shrinks,
        fallback: true,
    })
}

fn norm(x: ArrayView1<f64>) -> f64 {
    x.dot(&x).sqrt()
}

fn diff_norm(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    Zip::from(&a)
        .and(&b)
        .fold(0.0, |acc, &u, &v| acc + (u - v) * (u - v))
        .sqrt()
}

/// BPGe: Bregman proximal gradient with line-searched extrapolation.
pub fn bpge_solve<K, F, G>(
    obj: &CompositeObjective<K, F, G>,
    x0: ArrayView1<f64>,
    cfg: &SolverConfig,
) -> Result<SolveResult>
where
    K: Kernel,
    F: SmoothTerm,
    G: NonsmoothTerm,
{
    run(obj, x0, cfg, true)
}

/// BPG: the same iteration with `β_k ≡ 0` and no line search.
pub fn bpg_solve<K, F, G>(
    obj: &CompositeObjective<K, F, G>,
    x0: ArrayView1<f64>,
    cfg: &SolverConfig,
) -> Result<SolveResult>
where
    K: Kernel,
    F: SmoothTerm,
    G: NonsmoothTerm,
{
    run(obj, x0, cfg, false)
}

/// PGe: [`bpge_solve`] under the Euclidean kernel.
pub fn pge_solve<F: SmoothTerm, G: NonsmoothTerm>(
    obj: &CompositeObjective<EuclideanKernel, F, G>,
    x0: ArrayView1<f64>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run(obj, x0, cfg, true)
}

/// PG: [`bpg_solve`] under the Euclidean kernel.
pub fn pg_solve<F: SmoothTerm, G: NonsmoothTerm>(
    obj: &CompositeObjective<EuclideanKernel, F, G>,
    x0: ArrayView1<f64>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run(obj, x0, cfg, false)
}

fn run<K, F, G>(
    obj: &CompositeObjective<K, F, G>,
    x0: ArrayView1<f64>,
    cfg: &SolverConfig,
    with_extrapolation: bool,
) -> Result<SolveResult>
where
    K: Kernel,
    F: SmoothTerm,
    G: NonsmoothTerm,
{
    cfg.validate(obj.smad_constant())?;
    let psi_initial = obj.value(x0)?;
    if !psi_initial.is_finite() {
        return Err(Error::Domain(
            "objective is not finite at the starting point".into(),
        ));
    }
    let start = Instant::now();
    let lambda = cfg.lambda;
    let inv_lambda = 1.0 / lambda;
    let c_k = line_search_constant(lambda, obj.weak_convexity_constant());
    let m = cfg.lyapunov_weight();
    let kernel = &obj.kernel;

    let mut x_prev = x0.to_owned();
    let mut x = x0.to_owned();
    let mut psi = psi_initial;
    let mut trace = Vec::with_capacity(cfg.k_max.min(1 << 16));
    let mut iterates = cfg.keep_iterates.then(|| vec![x0.to_owned()]);
    let mut exit_reason = ExitReason::MaxIterations;
    let mut failure = None;

    for k in 1..=cfg.k_max {
        let step = (|| -> Result<(Array1<f64>, IterationRecord)> {
            let ls = if with_extrapolation {
                line_search_beta(kernel, x_prev.view(), x.view(), &cfg.line_search, c_k)?
            } else {
                LineSearchOutcome {
                    beta: 0.0,
                    shrinks: 0,
                    fallback: false,
                }
            };
            if ls.fallback {
                log::warn!("line search fell back to beta = 0 at iteration {k}");
            }
            let y = extrapolate(x_prev.view(), x.view(), ls.beta);
            let grad_y = obj.smooth.gradient(y.view())?;
            let x_next = obj
                .nonsmooth
                .prox(kernel, y.view(), grad_y.view(), lambda)?;
            if !kernel.in_interior_domain(x_next.view()) {
                return Err(Error::NumericalFailure(format!(
                    "proximal step left the interior of the {} kernel domain",
                    kernel.name()
                )));
            }
            let (f_next, grad_next) = obj.smooth.value_and_gradient(x_next.view())?;
            let psi_next = f_next + obj.nonsmooth.value(x_next.view());
            let dh_step = kernel.bregman(x.view(), x_next.view())?;
            let gh_next = kernel.gradient(x_next.view())?;
            let gh_y = kernel.gradient(y.view())?;
            let residual = Zip::from(&grad_next)
                .and(&grad_y)
                .and(&gh_next)
                .and(&gh_y)
                .fold(0.0, |acc, &a, &b, &c, &d| {
                    let r = a - b - inv_lambda * (c - d);
                    acc + r * r
                })
                .sqrt();
            if !(psi_next.is_finite() && residual.is_finite()) {
                return Err(Error::NumericalFailure(format!(
                    "non-finite state at iteration {k}"
                )));
            }
            let record = IterationRecord {
                k,
                psi: psi_next,
                dh_step,
                lyapunov: psi_next + m * dh_step,
                beta_accepted: ls.beta,
                shrink_count: ls.shrinks,
                beta_fallback: ls.fallback,
                residual,
                wall_time: start.elapsed().as_secs_f64(),
            };
            Ok((x_next, record))
        })();

        let (x_next, record) = match step {
            Ok(v) => v,
            Err(Error::NumericalFailure(msg)) | Err(Error::Domain(msg)) => {
                log::debug!("iteration {k} failed: {msg}");
                exit_reason = ExitReason::NumericalFailure;
                failure = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        };

        let converged = match cfg.exit_mode {
            ExitMode::IterateRelative => {
                diff_norm(x_next.view(), x.view()) / norm(x_next.view()).max(1.0) <= cfg.tol
            }
            ExitMode::ObjectiveRelative => {
                (record.psi - psi).abs() / record.psi.abs().max(1.0) <= cfg.tol
            }
        };
        psi = record.psi;
        trace.push(record);
        if let Some(its) = iterates.as_mut() {
            its.push(x_next.clone());
        }
        x_prev = std::mem::replace(&mut x, x_next);
        if converged {
            exit_reason = ExitReason::Tolerance;
            break;
        }
    }

    Ok(SolveResult {
        x_final: x,
        psi_initial,
        psi_final: psi,
        iterations: trace.len(),
        exit_reason,
        failure,
        trace,
        iterates,
        lambda,
        rho: cfg.line_search.rho,
        line_search_constant: c_k,
        lyapunov_m: m,
    })
}

/// Worst-case check of the `O(1/K)` bound
/// `min_{1<=k<=K} D_h(x^{k-1}, x^k) <= (H_1 - H_{K+1}) / (K (λ⁻¹ - ρ λ⁻¹))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateReport {
    /// Number of `K` values checked.
    pub checked: usize,
    /// `max_K (min_k D_h - bound_K)`; nonpositive when the bound holds.
    pub max_slack: f64,
    pub violations: usize,
}

impl RateReport {
    pub const ABSOLUTE_SLACK: f64 = 1e-10;

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks the sublinear rate bound at every `K` available in `trace`, for a
/// run with fixed `λ` and `M = λ⁻¹`.
pub fn sublinear_rate_check(trace: &[IterationRecord], lambda: f64, rho: f64) -> RateReport {
    let denom_unit = (1.0 - rho) / lambda;
    let mut report = RateReport {
        checked: 0,
        max_slack: f64::NEG_INFINITY,
        violations: 0,
    };
    let Some(first) = trace.first() else {
        return report;
    };
    let h1 = first.lyapunov;
    let mut running_min = f64::INFINITY;
    for big_k in 1..trace.len() {
        running_min = running_min.min(trace[big_k - 1].dh_step);
        let bound = (h1 - trace[big_k].lyapunov) / (big_k as f64 * denom_unit);
        let slack = running_min - bound;
        report.checked += 1;
        report.max_slack = report.max_slack.max(slack);
        if slack > RateReport::ABSOLUTE_SLACK {
            report.violations += 1;
        }
    }
    report
}

/// Largest relative increase of the Lyapunov sequence `H_0 = Ψ(x^0), H_1, …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovReport {
    /// `max_k (H_{k+1} - H_k) / max(1, |H_k|)`.
    pub worst_relative_increase: f64,
    pub violations: usize,
}

impl LyapunovReport {
    pub const RELATIVE_SLACK: f64 = 1e-10;

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

impl SolveResult {
    pub fn lyapunov_check(&self) -> LyapunovReport {
        let mut report = LyapunovReport {
            worst_relative_increase: f64::NEG_INFINITY,
            violations: 0,
        };
        let mut prev = self.psi_initial;
        for rec in &self.trace {
            let rel = (rec.lyapunov - prev) / prev.abs().max(1.0);
            report.worst_relative_increase = report.worst_relative_increase.max(rel);
            if rel > LyapunovReport::RELATIVE_SLACK {
                report.violations += 1;
            }
            prev = rec.lyapunov;
        }
        report
    }

    pub fn rate_check(&self) -> RateReport {
        sublinear_rate_check(&self.trace, self.lambda, self.rho)
    }

    /// Number of line-search fallbacks to `β = 0`.
    pub fn fallback_count(&self) -> usize {
        self.trace.iter().filter(|r| r.beta_fallback).count()
    }

    /// Re-evaluates the acceptance inequality for every recorded `β_k`.
    /// Returns the number of iterations where it fails, or `None` when the
    /// iterates were not kept.
    pub fn recheck_line_search<K: Kernel + ?Sized>(&self, kernel: &K) -> Option<Result<usize>> {
        let its = self.iterates.as_ref()?;
        let check = || -> Result<usize> {
            let mut bad = 0;
            for (idx, rec) in self.trace.iter().enumerate() {
                // record k used x^{k-1} and x^{k-2} (with x^{-1} = x^0)
                let x_curr = &its[idx];
                let x_prev = if idx == 0 { &its[0] } else { &its[idx - 1] };
                let y = extrapolate(x_prev.view(), x_curr.view(), rec.beta_accepted);
                let lhs = kernel.bregman(x_curr.view(), y.view())?;
                let rhs = self.rho
                    * self.line_search_constant
                    * kernel.bregman(x_prev.view(), x_curr.view())?;
                if lhs > rhs {
                    bad += 1;
                }
            }
            Ok(bad)
        };
        Some(check())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::BurgKernel;
    use crate::problems::{L1Term, ZeroTerm};
    use ndarray::{array, Array2};

    /// `f(x) = ½‖Bx - c‖²`
    struct LeastSquares {
        b: Array2<f64>,
        c: Array1<f64>,
        lipschitz: f64,
    }

    impl LeastSquares {
        fn new(b: Array2<f64>, c: Array1<f64>) -> Self {
            // Frobenius norm squared bounds the spectral norm squared
            let lipschitz = b.iter().map(|v| v * v).sum();
            Self { b, c, lipschitz }
        }
    }

    impl SmoothTerm for LeastSquares {
        fn dim(&self) -> usize {
            self.b.ncols()
        }
        fn value(&self, x: ArrayView1<f64>) -> Result<f64> {
            let r = self.b.dot(&x) - &self.c;
            Ok(0.5 * r.dot(&r))
        }
        fn gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
            let r = self.b.dot(&x) - &self.c;
            Ok(self.b.t().dot(&r))
        }
        fn smad_constant(&self) -> f64 {
            self.lipschitz
        }
        fn weak_convexity_constant(&self) -> f64 {
            0.0
        }
    }

    fn ls_problem() -> CompositeObjective<EuclideanKernel, LeastSquares, ZeroTerm> {
        let b = array![[1.0, 0.5], [0.2, 2.0], [0.3, -0.4]];
        let c = array![1.0, -1.0, 0.5];
        CompositeObjective::new(EuclideanKernel::new(2), LeastSquares::new(b, c), ZeroTerm).unwrap()
    }

    #[test]
    fn line_search_equal_points_accepts_beta0() {
        let k = BurgKernel::new(2);
        let x = array![1.0, 2.0];
        let out =
            line_search_beta(&k, x.view(), x.view(), &LineSearchConfig::default(), 1.0).unwrap();
        assert_eq!(
            out,
            LineSearchOutcome {
                beta: 0.99,
                shrinks: 0,
                fallback: false
            }
        );
    }

    #[test]
    fn euclidean_line_search_accepts_below_sqrt_rho() {
        let k = EuclideanKernel::new(3);
        let cfg = LineSearchConfig {
            beta0: 0.9,
            rho: 0.81 + 1e-9,
            ..Default::default()
        };
        let out = line_search_beta(
            &k,
            array![0.0, 1.0, 2.0].view(),
            array![1.0, -1.0, 0.5].view(),
            &cfg,
            1.0,
        )
        .unwrap();
        assert_eq!((out.beta, out.shrinks), (0.9, 0));
        // just above sqrt(rho): one shrink
        let cfg = LineSearchConfig {
            beta0: 0.95,
            rho: 0.81,
            ..Default::default()
        };
        let out = line_search_beta(
            &k,
            array![0.0, 1.0, 2.0].view(),
            array![1.0, -1.0, 0.5].view(),
            &cfg,
            1.0,
        )
        .unwrap();
        assert_eq!((out.beta, out.shrinks), (0.475, 1));
    }

    #[test]
    fn burg_line_search_scalar() {
        let k = BurgKernel::new(1);
        let cfg = LineSearchConfig::default();
        let out = line_search_beta(&k, array![2.0].view(), array![1.0].view(), &cfg, 1.0).unwrap();
        // direct evaluation of both sides
        let rhs = 0.99 * (2.0 - 2.0_f64.ln() - 1.0);
        let lhs = |b: f64| {
            let t = 1.0 - b;
            1.0 / t - (1.0 / t).ln() - 1.0
        };
        let mut beta = 0.99;
        let mut shrinks = 0;
        while lhs(beta) > rhs {
            beta *= 0.5;
            shrinks += 1;
        }
        assert_eq!((out.beta, out.shrinks), (beta, shrinks));
        assert!(lhs(out.beta) <= rhs);
    }

    #[test]
    fn line_search_treats_domain_exit_as_failure() {
        let k = BurgKernel::new(1);
        // beta0 = 0.9 would put the trial at 1 - 0.9 * 9 < 0
        let cfg = LineSearchConfig {
            beta0: 0.9,
            ..Default::default()
        };
        let out = line_search_beta(&k, array![10.0].view(), array![1.0].view(), &cfg, 1.0).unwrap();
        assert!(out.shrinks >= 1);
        assert!(1.0 + out.beta * (1.0 - 10.0) > 0.0);
    }

    #[test]
    fn fallback_after_max_shrinks() {
        let k = EuclideanKernel::new(1);
        let cfg = LineSearchConfig {
            beta0: 0.99,
            eta: 0.99,
            rho: 0.01,
            max_shrinks: 3,
        };
        let out = line_search_beta(&k, array![0.0].view(), array![1.0].view(), &cfg, 1.0).unwrap();
        assert_eq!(
            out,
            LineSearchOutcome {
                beta: 0.0,
                shrinks: 3,
                fallback: true
            }
        );
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.5).validate(2.0).is_ok());
        assert!(SolverConfig::new(0.6).validate(2.0).is_err());
        let mut cfg = SolverConfig::new(0.5);
        cfg.lyapunov_m = Some(1.0);
        assert!(cfg.validate(2.0).is_err());
        cfg.lyapunov_m = Some(1.99);
        assert!(cfg.validate(2.0).is_ok());
        cfg.line_search.beta0 = 1.0;
        assert!(cfg.validate(2.0).is_err());
        let mut cfg = SolverConfig::new(0.5);
        cfg.line_search.rho = 1.0;
        assert!(cfg.validate(2.0).is_err());
    }

    #[test]
    fn bpg_is_gradient_descent_for_least_squares() {
        let obj = ls_problem();
        let lambda = 1.0 / obj.smad_constant();
        let mut cfg = SolverConfig::new(lambda);
        cfg.k_max = 50;
        cfg.tol = 1e-300;
        cfg.keep_iterates = true;
        let res = bpg_solve(&obj, array![0.0, 0.0].view(), &cfg).unwrap();
        let its = res.iterates.as_ref().unwrap();
        let mut x = array![0.0, 0.0];
        for it in its.iter().skip(1) {
            let g = obj.smooth.gradient(x.view()).unwrap();
            x = &x - &(g * lambda);
            assert!((&x - it).iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn extrapolation_off_matches_bpg_bitwise() {
        let obj = ls_problem();
        let mut cfg = SolverConfig::new(1.0 / obj.smad_constant());
        cfg.line_search.beta0 = 0.0;
        let a = bpge_solve(&obj, array![0.3, -0.2].view(), &cfg).unwrap();
        let b = bpg_solve(&obj, array![0.3, -0.2].view(), &cfg).unwrap();
        assert_eq!(a.iterations, b.iterations);
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_eq!(
                (ra.psi, ra.dh_step, ra.residual),
                (rb.psi, rb.dh_step, rb.residual)
            );
        }
        assert_eq!(a.x_final, b.x_final);
    }

    #[test]
    fn euclidean_l1_run_descends_and_converges() {
        let b = array![
            [1.0, 0.5, 0.0],
            [0.2, 2.0, 1.0],
            [0.3, -0.4, 0.7],
            [1.0, 1.0, 1.0]
        ];
        let c = array![1.0, -1.0, 0.5, 0.2];
        let obj = CompositeObjective::new(
            EuclideanKernel::new(3),
            LeastSquares::new(b, c),
            L1Term::new(0.1),
        )
        .unwrap();
        let cfg = SolverConfig::new(1.0 / obj.smad_constant());
        let res = pge_solve(&obj, Array1::zeros(3).view(), &cfg).unwrap();
        assert_eq!(res.exit_reason, ExitReason::Tolerance);
        assert!(res.lyapunov_check().passed());
        assert!(res.rate_check().passed());
        let plain = pg_solve(&obj, Array1::zeros(3).view(), &cfg).unwrap();
        assert!((plain.psi_final - res.psi_final).abs() < 1e-5);
    }

    #[test]
    fn numerical_failure_is_reported_not_raised() {
        // λ = 1/L but L understated so the Burg step leaves the domain
        struct Steep;
        impl SmoothTerm for Steep {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: ArrayView1<f64>) -> Result<f64> {
                Ok(-100.0 * x[0])
            }
            fn gradient(&self, _x: ArrayView1<f64>) -> Result<Array1<f64>> {
                Ok(array![-100.0])
            }
            fn smad_constant(&self) -> f64 {
                1.0
            }
            fn weak_convexity_constant(&self) -> f64 {
                0.0
            }
        }
        let obj = CompositeObjective::new(BurgKernel::new(1), Steep, ZeroTerm).unwrap();
        let res = bpg_solve(&obj, array![1.0].view(), &SolverConfig::new(1.0)).unwrap();
        assert_eq!(res.exit_reason, ExitReason::NumericalFailure);
        assert!(res.failure.is_some());
        assert!(res.trace.is_empty());
    }

    #[test]
    fn start_outside_domain_is_an_error() {
        struct Flat;
        impl SmoothTerm for Flat {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, _x: ArrayView1<f64>) -> Result<f64> {
                Ok(0.0)
            }
            fn gradient(&self, _x: ArrayView1<f64>) -> Result<Array1<f64>> {
                Ok(array![0.0])
            }
            fn smad_constant(&self) -> f64 {
                1.0
            }
            fn weak_convexity_constant(&self) -> f64 {
                0.0
            }
        }
        let obj = CompositeObjective::new(BurgKernel::new(1), Flat, ZeroTerm).unwrap();
        let r = bpge_solve(&obj, array![-1.0].view(), &SolverConfig::new(1.0));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn rate_check_single_step() {
        let rec = |k, lyapunov, dh_step| IterationRecord {
            k,
            psi: lyapunov,
            dh_step,
            lyapunov,
            beta_accepted: 0.0,
            shrink_count: 0,
            beta_fallback: false,
            residual: 0.0,
            wall_time: 0.0,
        };
        // K = 1: dh_1 <= (H_1 - H_2) / (λ⁻¹ (1 - ρ)) with λ = 1, ρ = 0.5
        let ok = [rec(1, 3.0, 1.0), rec(2, 2.0, 0.1)];
        let r = sublinear_rate_check(&ok, 1.0, 0.5);
        assert_eq!(r.checked, 1);
        assert!(r.passed());
        assert!((r.max_slack - (1.0 - 2.0)).abs() < 1e-15);
        let bad = [rec(1, 3.0, 1.0), rec(2, 2.9, 0.1)];
        assert!(!sublinear_rate_check(&bad, 1.0, 0.5).passed());
    }
}
