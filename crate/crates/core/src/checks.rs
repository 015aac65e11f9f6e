//! Invariant suite run by `bregopt check`.
//!
//! Each check samples the instance at seeded random points and reports a
//! pass/fail verdict with the worst observed discrepancy.

use std::fmt;

use ndarray::{Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::harness::Instance;
use crate::kernels::{Kernel, SampleDomain};
use crate::problems::{check_smad, CompositeObjective, NonsmoothTerm, SmoothTerm};
use crate::solvers::{bpg_solve, bpge_solve, LineSearchConfig, SolverConfig};

pub const SMAD_SAMPLES: usize = 1000;
pub const GRADIENT_POINTS: usize = 100;
pub const GRADIENT_TOL: f64 = 1e-5;
pub const PROX_POINTS: usize = 50;
pub const PROX_ARG_TOL: f64 = 1e-5;
pub const PROX_VALUE_TOL: f64 = 1e-8;
/// Largest dimension for which the prox is compared against a grid search.
pub const GRID_MAX_DIM: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|c| c.passed)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.items {
            writeln!(
                f,
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Runs every check against `instance`; `seed` drives the sample points.
pub fn run_checks(instance: &Instance, seed: u64) -> Result<CheckReport> {
    match instance {
        Instance::Plip(p) => suite(&p.objective(), p.initial_point(), seed),
        Instance::Qip(q) => suite(&q.objective(), q.initial_point(), seed),
    }
}

fn suite<K, F, G>(
    obj: &CompositeObjective<K, F, G>,
    x0: Array1<f64>,
    seed: u64,
) -> Result<CheckReport>
where
    K: Kernel + SampleDomain + Clone,
    F: SmoothTerm + Clone,
    G: NonsmoothTerm + Clone,
{
    let mut items = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = 1.0 / obj.smad_constant();

    let smad = check_smad(obj, SMAD_SAMPLES, seed)?;
    items.push(CheckItem {
        name: "smad_envelope",
        passed: smad.passed(),
        detail: format!(
            "{} pairs, worst upper {:.3e}, worst lower {:.3e}",
            smad.samples, smad.worst_upper, smad.worst_lower
        ),
    });

    let mut worst_grad = 0.0f64;
    for _ in 0..GRADIENT_POINTS {
        let x = obj.kernel.sample_interior(&mut rng);
        worst_grad = worst_grad.max(gradient_error(&obj.smooth, x.view())?);
    }
    items.push(CheckItem {
        name: "gradient_finite_difference",
        passed: worst_grad < GRADIENT_TOL,
        detail: format!("{GRADIENT_POINTS} points, worst relative error {worst_grad:.3e}"),
    });

    let mut worst_local = f64::NEG_INFINITY;
    let mut worst_arg = 0.0f64;
    let mut worst_val = 0.0f64;
    for _ in 0..PROX_POINTS {
        let y = obj.kernel.sample_interior(&mut rng);
        let grad = obj.smooth.gradient(y.view())?;
        let u = obj.prox_gradient_step(y.view(), lambda)?;
        let phi =
            |v: &[f64]| obj.subproblem_value(ArrayView1::from(v), y.view(), grad.view(), lambda);
        worst_local = worst_local.max(local_optimality_gap(&phi, u.as_slice().unwrap()));
        if obj.dim() <= GRID_MAX_DIM {
            let (g, gv) = grid_minimize(&phi, y.as_slice().unwrap(), u.as_slice().unwrap());
            let uv = phi(u.as_slice().unwrap());
            let arg = u
                .iter()
                .zip(&g)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst_arg = worst_arg.max(arg);
            worst_val = worst_val.max((uv - gv) / (1.0 + gv.abs()));
        }
    }
    items.push(CheckItem {
        name: "prox_local_optimality",
        passed: worst_local <= 0.0,
        detail: format!("{PROX_POINTS} subproblems, worst decrease {worst_local:.3e}"),
    });
    if obj.dim() <= GRID_MAX_DIM {
        items.push(CheckItem {
            name: "prox_grid_oracle",
            passed: worst_arg <= PROX_ARG_TOL && worst_val <= PROX_VALUE_TOL,
            detail: format!(
                "{PROX_POINTS} subproblems, argument gap {worst_arg:.3e}, value gap {worst_val:.3e}"
            ),
        });
    }

    let cfg = SolverConfig {
        k_max: 500,
        keep_iterates: true,
        ..SolverConfig::new(lambda)
    };
    let run = bpge_solve(obj, x0.view(), &cfg)?;
    let lyap = run.lyapunov_check();
    items.push(CheckItem {
        name: "lyapunov_nonincreasing",
        passed: lyap.passed(),
        detail: format!(
            "{} iterations ({}), worst relative increase {:.3e}",
            run.iterations, run.exit_reason, lyap.worst_relative_increase
        ),
    });
    let rate = run.rate_check();
    items.push(CheckItem {
        name: "sublinear_rate_bound",
        passed: rate.passed(),
        detail: format!(
            "{} prefixes, largest slack {:.3e}",
            rate.checked, rate.max_slack
        ),
    });
    let recheck = run
        .recheck_line_search(&obj.kernel)
        .transpose()?
        .unwrap_or(0);
    items.push(CheckItem {
        name: "line_search_acceptance",
        passed: recheck == 0,
        detail: format!(
            "{recheck} accepted steps violate the test, {} fallbacks",
            run.fallback_count()
        ),
    });

    let plain = SolverConfig {
        k_max: 100,
        line_search: LineSearchConfig {
            beta0: 0.0,
            ..LineSearchConfig::default()
        },
        ..SolverConfig::new(lambda)
    };
    let a = bpge_solve(obj, x0.view(), &plain)?;
    let b = bpg_solve(obj, x0.view(), &plain)?;
    let same = a.iterations == b.iterations
        && a.x_final
            .iter()
            .zip(&b.x_final)
            .all(|(p, q)| p.to_bits() == q.to_bits());
    items.push(CheckItem {
        name: "zero_extrapolation_is_bpg",
        passed: same,
        detail: format!("{} vs {} iterations", a.iterations, b.iterations),
    });

    Ok(CheckReport { items })
}

/// `‖g_fd - ∇f‖ / (1 + ‖∇f‖)` with central differences.
fn gradient_error<F: SmoothTerm>(f: &F, x: ArrayView1<f64>) -> Result<f64> {
    let g = f.gradient(x)?;
    let mut p = x.to_owned();
    let mut err = 0.0;
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1e-2);
        p[j] = x[j] + h;
        let up = f.value(p.view())?;
        p[j] = x[j] - h;
        let down = f.value(p.view())?;
        p[j] = x[j];
        err += ((up - down) / (2.0 * h) - g[j]).powi(2);
    }
    let norm = g.dot(&g).sqrt();
    Ok(err.sqrt() / (1.0 + norm))
}

/// Largest relative decrease of `phi` found by coordinate perturbations of
/// `u`; nonpositive at a minimizer.
fn local_optimality_gap(phi: &impl Fn(&[f64]) -> f64, u: &[f64]) -> f64 {
    let base = phi(u);
    let mut p = u.to_vec();
    let mut worst = f64::NEG_INFINITY;
    for j in 0..u.len() {
        for rel in [1e-3, 1e-5] {
            for sign in [-1.0, 1.0] {
                p[j] = u[j] + sign * rel * u[j].abs().max(1.0);
                let v = phi(&p);
                if v.is_finite() {
                    worst = worst.max((base - v) / (1.0 + base.abs()) - 1e-12);
                }
            }
            p[j] = u[j];
        }
    }
    worst
}

/// Minimizes `phi` by repeatedly refined grids over a box around `center`
/// large enough to contain `hint`. Returns the best point and its value.
fn grid_minimize(phi: &impl Fn(&[f64]) -> f64, center: &[f64], hint: &[f64]) -> (Vec<f64>, f64) {
    const POINTS: usize = 21;
    let d = center.len();
    let spread = center
        .iter()
        .zip(hint)
        .map(|(c, h)| (c - h).abs())
        .fold(0.0, f64::max);
    let mut radius = 2.0 * spread + 1.0;
    let mut best = center.to_vec();
    let mut best_val = phi(&best);
    let mut origin = center.to_vec();
    for _ in 0..24 {
        let step = 2.0 * radius / (POINTS - 1) as f64;
        let mut idx = vec![0usize; d];
        let mut p = vec![0.0; d];
        loop {
            for j in 0..d {
                p[j] = origin[j] - radius + step * idx[j] as f64;
            }
            let v = phi(&p);
            if v < best_val {
                best_val = v;
                best.copy_from_slice(&p);
            }
            let mut j = 0;
            while j < d {
                idx[j] += 1;
                if idx[j] < POINTS {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == d {
                break;
            }
        }
        origin.copy_from_slice(&best);
        radius = 2.0 * step;
    }
    (best, best_val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_instance, ProblemKind};

    #[test]
    fn grid_finds_quadratic_minimum() {
        let phi = |v: &[f64]| (v[0] - 0.3).powi(2) + 2.0 * (v[1] + 1.7).powi(2);
        let (x, val) = grid_minimize(&phi, &[0.0, 0.0], &[1.0, -1.0]);
        assert!((x[0] - 0.3).abs() < 1e-9 && (x[1] + 1.7).abs() < 1e-9);
        assert!(val < 1e-16);
    }

    #[test]
    fn local_gap_detects_a_wrong_point() {
        let phi = |v: &[f64]| (v[0] - 1.0).powi(2);
        assert!(local_optimality_gap(&phi, &[1.0]) <= 0.0);
        assert!(local_optimality_gap(&phi, &[1.1]) > 0.0);
    }

    #[test]
    fn suite_passes_on_small_instances() {
        for problem in [ProblemKind::Plip, ProblemKind::Qip] {
            let inst = generate_instance(problem, 30, 3, 9).unwrap();
            let report = run_checks(&inst, 4).unwrap();
            assert!(report.passed(), "{problem}\n{report}");
            assert!(report.items.iter().any(|c| c.name == "prox_grid_oracle"));
        }
    }
}
