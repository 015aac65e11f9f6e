//! Composite objectives `Ψ = f + g`.
//!
//! `f` is a [`SmoothTerm`] carrying its smooth-adaptable constant `L` and its
//! relative weak convexity constant `μ` with respect to the kernel; `g` is a
//! [`NonsmoothTerm`] providing the Bregman proximal gradient map
//!
//! ```text
//! T_λ(y) = argmin_u { g(u) + <grad f(y), u - y> + D_h(u, y) / λ }.
//! ```

use ndarray::{Array1, ArrayView1, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::kernels::{Kernel, SampleDomain};

/// Componentwise `sign(z_j) * max(|z_j| - tau, 0)`.
pub fn soft_threshold(z: ArrayView1<f64>, tau: f64) -> Array1<f64> {
    debug_assert!(tau >= 0.0);
    z.mapv(|v| v.signum() * (v.abs() - tau).max(0.0))
}

/// Differentiable part `f` of the objective.
pub trait SmoothTerm: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: ArrayView1<f64>) -> Result<f64>;

    fn gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>>;

    fn value_and_gradient(&self, x: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        Ok((self.value(x)?, self.gradient(x)?))
    }

    /// `L` such that `Lh - f` and `Lh + f` are convex.
    fn smad_constant(&self) -> f64;

    /// `μ >= 0` such that `f + μh` is convex.
    fn weak_convexity_constant(&self) -> f64;
}

/// Nonsmooth part `g` of the objective together with its Bregman proximal map.
pub trait NonsmoothTerm: Send + Sync {
    fn value(&self, x: ArrayView1<f64>) -> f64;

    /// A point of `T_step(y)` given `grad = grad f(y)`.
    fn prox<K: Kernel + ?Sized>(
        &self,
        kernel: &K,
        y: ArrayView1<f64>,
        grad: ArrayView1<f64>,
        step: f64,
    ) -> Result<Array1<f64>>;
}

/// `g ≡ 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroTerm;

impl NonsmoothTerm for ZeroTerm {
    fn value(&self, _x: ArrayView1<f64>) -> f64 {
        0.0
    }

    fn prox<K: Kernel + ?Sized>(
        &self,
        kernel: &K,
        y: ArrayView1<f64>,
        grad: ArrayView1<f64>,
        step: f64,
    ) -> Result<Array1<f64>> {
        kernel.mirror_step(y, grad, step)
    }
}

/// `g(x) = weight * ‖x‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Term {
    pub weight: f64,
}

impl L1Term {
    pub fn new(weight: f64) -> Self {
        Self { weight }
    }
}

impl NonsmoothTerm for L1Term {
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        self.weight * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox<K: Kernel + ?Sized>(
        &self,
        kernel: &K,
        y: ArrayView1<f64>,
        grad: ArrayView1<f64>,
        step: f64,
    ) -> Result<Array1<f64>> {
        kernel.l1_mirror_step(y, grad, step, self.weight)
    }
}

/// `Ψ = f + g` under the geometry of `kernel`.
#[derive(Debug, Clone)]
pub struct CompositeObjective<K, F, G> {
    pub kernel: K,
    pub smooth: F,
    pub nonsmooth: G,
}

impl<K: Kernel, F: SmoothTerm, G: NonsmoothTerm> CompositeObjective<K, F, G> {
    pub fn new(kernel: K, smooth: F, nonsmooth: G) -> Result<Self> {
        check_dim(kernel.dim(), smooth.dim())?;
        let (l, mu) = (smooth.smad_constant(), smooth.weak_convexity_constant());
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "smad constant must be positive, got {l}"
            )));
        }
        if !(mu >= 0.0 && mu <= l) {
            return Err(Error::InvalidConfig(format!(
                "weak convexity constant {mu} must lie in [0, L = {l}]"
            )));
        }
        Ok(Self {
            kernel,
            smooth,
            nonsmooth,
        })
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn smad_constant(&self) -> f64 {
        self.smooth.smad_constant()
    }

    pub fn weak_convexity_constant(&self) -> f64 {
        self.smooth.weak_convexity_constant()
    }

    /// `Ψ(x) = f(x) + g(x)` for `x` in `int dom h`.
    pub fn value(&self, x: ArrayView1<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if !self.kernel.in_interior_domain(x) {
            return Err(Error::Domain(format!(
                "point is outside the interior of the {} kernel domain",
                self.kernel.name()
            )));
        }
        Ok(self.smooth.value(x)? + self.nonsmooth.value(x))
    }

    /// `T_step(y)` computed from a fresh gradient of `f` at `y`.
    pub fn prox_gradient_step(&self, y: ArrayView1<f64>, step: f64) -> Result<Array1<f64>> {
        let grad = self.smooth.gradient(y)?;
        self.nonsmooth.prox(&self.kernel, y, grad.view(), step)
    }

    /// `g(u) + <grad, u - y> + D_h(u, y) / step`, the function minimized by the
    /// proximal map. `+∞` outside the kernel domain.
    pub fn subproblem_value(
        &self,
        u: ArrayView1<f64>,
        y: ArrayView1<f64>,
        grad: ArrayView1<f64>,
        step: f64,
    ) -> f64 {
        if !self.kernel.in_interior_domain(u) {
            return f64::INFINITY;
        }
        let linear: f64 = Zip::from(&grad)
            .and(&u)
            .and(&y)
            .fold(0.0, |acc, &g, &a, &b| acc + g * (a - b));
        match self.kernel.bregman(u, y) {
            Ok(d) => self.nonsmooth.value(u) + linear + d / step,
            Err(_) => f64::INFINITY,
        }
    }
}

/// `Ψ(x)`; free-function form of [`CompositeObjective::value`].
pub fn objective_value<K: Kernel, F: SmoothTerm, G: NonsmoothTerm>(
    obj: &CompositeObjective<K, F, G>,
    x: ArrayView1<f64>,
) -> Result<f64> {
    obj.value(x)
}

/// Outcome of sampling the two Bregman envelopes
/// `-μ D_h(x,y) <= f(x) - f(y) - <grad f(y), x - y> <= L D_h(x,y)`.
#[derive(Debug, Clone, Serialize)]
pub struct SmadReport {
    pub samples: usize,
    pub smad_constant: f64,
    pub weak_convexity_constant: f64,
    /// Largest `(|gap| - L D) / (1 + |f(x)|)` seen.
    pub worst_upper: f64,
    /// Largest `(-μ D - gap) / (1 + |f(x)|)` seen.
    pub worst_lower: f64,
    pub upper_failures: usize,
    pub lower_failures: usize,
}

impl SmadReport {
    pub const RELATIVE_SLACK: f64 = 1e-8;

    pub fn passed(&self) -> bool {
        self.upper_failures == 0 && self.lower_failures == 0
    }
}

/// Sampling check of the `L`-smad and `μ`-relative weak convexity envelopes.
///
/// This is a regression guard, not a certificate.
pub fn check_smad<K, F, G>(
    obj: &CompositeObjective<K, F, G>,
    samples: usize,
    rng_seed: u64,
) -> Result<SmadReport>
where
    K: Kernel + SampleDomain,
    F: SmoothTerm,
    G: NonsmoothTerm,
{
    check_smad_with_constants(
        obj,
        obj.smad_constant(),
        obj.weak_convexity_constant(),
        samples,
        rng_seed,
    )
}

/// [`check_smad`] with explicitly supplied constants.
pub fn check_smad_with_constants<K, F, G>(
    obj: &CompositeObjective<K, F, G>,
    smad_constant: f64,
    weak_convexity_constant: f64,
    samples: usize,
    rng_seed: u64,
) -> Result<SmadReport>
where
    K: Kernel + SampleDomain,
    F: SmoothTerm,
    G: NonsmoothTerm,
{
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut report = SmadReport {
        samples,
        smad_constant,
        weak_convexity_constant,
        worst_upper: f64::NEG_INFINITY,
        worst_lower: f64::NEG_INFINITY,
        upper_failures: 0,
        lower_failures: 0,
    };
    for _ in 0..samples {
        let x = obj.kernel.sample_interior(&mut rng);
        let y = obj.kernel.sample_interior(&mut rng);
        let fx = obj.smooth.value(x.view())?;
        let (fy, gy) = obj.smooth.value_and_gradient(y.view())?;
        let inner: f64 = Zip::from(&gy)
            .and(&x)
            .and(&y)
            .fold(0.0, |acc, &g, &a, &b| acc + g * (a - b));
        let gap = fx - fy - inner;
        let dist = obj.kernel.bregman(x.view(), y.view())?;
        let scale = 1.0 + fx.abs();
        let upper = (gap.abs() - smad_constant * dist) / scale;
        let lower = (-weak_convexity_constant * dist - gap) / scale;
        report.worst_upper = report.worst_upper.max(upper);
        report.worst_lower = report.worst_lower.max(lower);
        if upper > SmadReport::RELATIVE_SLACK {
            report.upper_failures += 1;
        }
        if lower > SmadReport::RELATIVE_SLACK {
            report.lower_failures += 1;
        }
    }
    Ok(report)
}
