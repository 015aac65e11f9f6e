//! Kernel generating distances and their Bregman distances.
//!
//! A kernel `h` is a convex function, differentiable on the interior of its
//! domain, inducing the Bregman distance
//!
//! ```text
//! D_h(x, y) = h(x) - h(y) - <grad h(y), x - y>
//! ```
//!
//! Three kernels are provided: the Euclidean energy `½‖x‖²`, Burg's entropy
//! `-Σ log x_j` on the positive orthant, and the quartic kernel
//! `¼‖x‖⁴ + ½‖x‖²`. Each one overrides [`Kernel::bregman`] with a
//! cancellation-free expression; the generic definition is kept as
//! [`bregman_by_definition`] for cross-checking.

use ndarray::{Array1, ArrayView1, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::problems::soft_threshold;

/// Slack below zero that is attributed to rounding and clamped away.
pub const BREGMAN_NEGATIVE_SLACK: f64 = 1e-12;

/// A kernel generating distance `h`.
pub trait Kernel: Send + Sync {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    /// `true` when `x` lies in `int dom h`.
    fn in_interior_domain(&self, x: ArrayView1<f64>) -> bool;

    fn value(&self, x: ArrayView1<f64>) -> Result<f64>;

    fn gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>>;

    /// The map `(grad h)^{-1}`.
    fn inverse_gradient(&self, z: ArrayView1<f64>) -> Result<Array1<f64>>;

    /// Bregman distance `D_h(x, y)`, clamped at zero within
    /// [`BREGMAN_NEGATIVE_SLACK`].
    fn bregman(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        clamp_bregman(bregman_by_definition(self, x, y)?)
    }

    /// Unregularized Bregman gradient step: the point `u` solving
    /// `grad h(u) = grad h(y) - step * direction`.
    fn mirror_step(
        &self,
        y: ArrayView1<f64>,
        direction: ArrayView1<f64>,
        step: f64,
    ) -> Result<Array1<f64>> {
        check_dim(self.dim(), direction.len())?;
        let mut target = self.gradient(y)?;
        target.scaled_add(-step, &direction);
        self.inverse_gradient(target.view())
    }

    /// Bregman gradient step followed by an ℓ1 penalty of the given weight:
    /// the minimizer of `weight‖u‖₁ + <direction, u> + D_h(u, y) / step`.
    ///
    /// The default is exact for kernels whose gradient keeps the sign pattern
    /// of its argument coordinatewise (radial kernels such as the Euclidean
    /// and quartic ones).
    fn l1_mirror_step(
        &self,
        y: ArrayView1<f64>,
        direction: ArrayView1<f64>,
        step: f64,
        weight: f64,
    ) -> Result<Array1<f64>> {
        check_dim(self.dim(), direction.len())?;
        let mut target = self.gradient(y)?;
        target.scaled_add(-step, &direction);
        let shrunk = soft_threshold(target.view(), step * weight);
        self.inverse_gradient(shrunk.view())
    }
}

/// Draws random points from `int dom h`, used by the sampling checks.
pub trait SampleDomain {
    fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64>;
}

/// `h(x) - h(y) - <grad h(y), x - y>` evaluated literally, without clamping.
pub fn bregman_by_definition<K: Kernel + ?Sized>(
    kernel: &K,
    x: ArrayView1<f64>,
    y: ArrayView1<f64>,
) -> Result<f64> {
    check_dim(kernel.dim(), x.len())?;
    check_dim(kernel.dim(), y.len())?;
    let grad_y = kernel.gradient(y)?;
    let hx = kernel.value(x)?;
    let hy = kernel.value(y)?;
    let inner: f64 = Zip::from(&grad_y)
        .and(&x)
        .and(&y)
        .fold(0.0, |acc, &g, &xi, &yi| acc + g * (xi - yi));
    Ok(hx - hy - inner)
}

/// Residual of the three point identity
/// `D(x,z) - D(x,y) - D(y,z) - <grad h(y) - grad h(z), x - y>`; zero up to rounding.
pub fn three_point_identity_residual<K: Kernel + ?Sized>(
    kernel: &K,
    x: ArrayView1<f64>,
    y: ArrayView1<f64>,
    z: ArrayView1<f64>,
) -> Result<f64> {
    let gy = kernel.gradient(y)?;
    let gz = kernel.gradient(z)?;
    let inner: f64 = Zip::from(&gy)
        .and(&gz)
        .and(&x)
        .and(&y)
        .fold(0.0, |acc, &a, &b, &xi, &yi| acc + (a - b) * (xi - yi));
    Ok(kernel.bregman(x, z)? - kernel.bregman(x, y)? - kernel.bregman(y, z)? - inner)
}

pub(crate) fn clamp_bregman(raw: f64) -> Result<f64> {
    if !raw.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "non-finite Bregman distance {raw}"
        )));
    }
    if raw >= 0.0 {
        Ok(raw)
    } else if raw >= -BREGMAN_NEGATIVE_SLACK {
        Ok(0.0)
    } else {
        Err(Error::NumericalFailure(format!(
            "Bregman distance {raw:e} is negative beyond rounding slack"
        )))
    }
}

/// Unique real root `r >= 0` of `r³ + r = norm_v`.
///
/// Newton's method safeguarded by a bisection bracket `[0, max(1, norm_v)]`.
/// The residual reaches `1e-12 * max(1, norm_v)`, or the limit of `f64`
/// resolution when that is coarser.
pub fn cubic_root_scale(norm_v: f64) -> f64 {
    assert!(
        norm_v >= 0.0 && norm_v.is_finite(),
        "cubic_root_scale needs a finite nonnegative input, got {norm_v}"
    );
    if norm_v == 0.0 {
        return 0.0;
    }
    let residual = |r: f64| r * r * r + r - norm_v;
    let mut lo = 0.0_f64;
    let mut hi = norm_v.max(1.0);
    let mut r = if norm_v < 1.0 { norm_v } else { norm_v.cbrt() };
    let tol = 1e-12 * norm_v.max(1.0);
    let mut best = (r, f64::INFINITY);
    for _ in 0..200 {
        let f = residual(r);
        if f.abs() < best.1 {
            best = (r, f.abs());
        }
        if f == 0.0 {
            return r;
        }
        if f > 0.0 {
            hi = hi.min(r);
        } else {
            lo = lo.max(r);
        }
        let mut next = r - f / (3.0 * r * r + 1.0);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        // stop once the iterate stalls at f64 resolution, after reaching tolerance
        if next == r || (f.abs() <= tol && (next - r).abs() <= 4.0 * f64::EPSILON * r) {
            break;
        }
        r = next;
    }
    best.0
}

fn squared_norm(x: ArrayView1<f64>) -> f64 {
    x.dot(&x)
}

/// `h(x) = ½‖x‖²` on all of `ℝᵈ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EuclideanKernel {
    dim: usize,
}

impl EuclideanKernel {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Kernel for EuclideanKernel {
    fn name(&self) -> &'static str {
        "euclidean"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn in_interior_domain(&self, x: ArrayView1<f64>) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.is_finite())
    }

    fn value(&self, x: ArrayView1<f64>) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(0.5 * squared_norm(x))
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(x.to_owned())
    }

    fn inverse_gradient(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim(self.dim, z.len())?;
        Ok(z.to_owned())
    }

    fn bregman(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, y.len())?;
        let sq: f64 = Zip::from(&x)
            .and(&y)
            .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
        clamp_bregman(0.5 * sq)
    }

    fn mirror_step(
        &self,
        y: ArrayView1<f64>,
        direction: ArrayView1<f64>,
        step: f64,
    ) -> Result<Array1<f64>> {
        check_dim(self.dim, y.len())?;
        check_dim(self.dim, direction.len())?;
        let mut out = y.to_owned();
        out.scaled_add(-step, &direction);
        Ok(out)
    }
}

impl SampleDomain for EuclideanKernel {
    fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64> {
        let scale = rng.random_range(0.1..3.0);
        Array1::from_shape_fn(self.dim, |_| {
            scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        })
    }
}

/// Burg's entropy `h(x) = -Σ log x_j` on the open positive orthant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BurgKernel {
    dim: usize,
}

impl BurgKernel {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    fn require_positive(&self, x: ArrayView1<f64>, what: &str) -> Result<()> {
        check_dim(self.dim, x.len())?;
        match x.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            Some(j) => Err(Error::Domain(format!(
                "Burg kernel needs {what} > 0, component {j} is {}",
                x[j]
            ))),
            None => Ok(()),
        }
    }
}

/// `t - log(1 + t)`, accurate for small `|t|`.
pub(crate) fn burg_term(t: f64) -> f64 {
    if t.abs() < 1e-2 {
        // alternating series t²/2 - t³/3 + t⁴/4 - ...
        let mut sum = 0.0;
        let mut power = t * t;
        for n in 2..12 {
            let term = power / n as f64;
            sum += if n % 2 == 0 { term } else { -term };
            power *= t;
        }
        sum
    } else {
        t - t.ln_1p()
    }
}

impl Kernel for BurgKernel {
    fn name(&self) -> &'static str {
        "burg"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn in_interior_domain(&self, x: ArrayView1<f64>) -> bool {
        x.len() == self.dim && x.iter().all(|&v| v > 0.0 && v.is_finite())
    }

    fn value(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.require_positive(x, "x")?;
        Ok(-x.iter().map(|v| v.ln()).sum::<f64>())
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.require_positive(x, "x")?;
        Ok(x.mapv(|v| -1.0 / v))
    }

    fn inverse_gradient(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim(self.dim, z.len())?;
        if let Some(j) = z.iter().position(|&v| !(v < 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!(
                "Burg gradient range is the negative orthant, component {j} is {}",
                z[j]
            )));
        }
        Ok(z.mapv(|v| -1.0 / v))
    }

    /// `Σ { x_j/y_j - log(x_j/y_j) - 1 }`.
    fn bregman(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        self.require_positive(x, "x")?;
        self.require_positive(y, "y")?;
        let sum = Zip::from(&x)
            .and(&y)
            .fold(0.0, |acc, &a, &b| acc + burg_term((a - b) / b));
        clamp_bregman(sum)
    }

    /// `u_j = y_j / (1 + step * y_j * direction_j)`; every denominator must be positive.
    fn mirror_step(
        &self,
        y: ArrayView1<f64>,
        direction: ArrayView1<f64>,
        step: f64,
    ) -> Result<Array1<f64>> {
        self.require_positive(y, "y")?;
        check_dim(self.dim, direction.len())?;
        let mut out = Array1::zeros(self.dim);
        for (j, ((o, &yj), &gj)) in out.iter_mut().zip(&y).zip(&direction).enumerate() {
            let denom = 1.0 + step * yj * gj;
            if !(denom > 0.0 && denom.is_finite()) {
                return Err(Error::NumericalFailure(format!(
                    "Burg mirror step denominator {denom:e} at component {j} is not positive"
                )));
            }
            *o = yj / denom;
        }
        Ok(out)
    }

    /// On the positive orthant `‖u‖₁ = Σ u_j`, so the penalty is a constant shift
    /// of the gradient target.
    fn l1_mirror_step(
        &self,
        y: ArrayView1<f64>,
        direction: ArrayView1<f64>,
        step: f64,
        weight: f64,
    ) -> Result<Array1<f64>> {
        let shifted = direction.mapv(|g| g + weight);
        self.mirror_step(y, shifted.view(), step)
    }
}

impl SampleDomain for BurgKernel {
    fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64> {
        Array1::from_shape_fn(self.dim, |_| (rng.random_range(-2.5..1.5_f64)).exp())
    }
}

/// `h(x) = ¼‖x‖⁴ + ½‖x‖²` on all of `ℝᵈ`, with `grad h(x) = (‖x‖² + 1) x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuarticKernel {
    dim: usize,
}

impl QuarticKernel {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Kernel for QuarticKernel {
    fn name(&self) -> &'static str {
        "quartic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn in_interior_domain(&self, x: ArrayView1<f64>) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.is_finite())
    }

    fn value(&self, x: ArrayView1<f64>) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let sq = squared_norm(x);
        Ok(0.25 * sq * sq + 0.5 * sq)
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim(self.dim, x.len())?;
        let scale = squared_norm(x) + 1.0;
        Ok(x.mapv(|v| scale * v))
    }

    /// `z / (r² + 1)` where `r = ‖x‖` solves `r³ + r = ‖z‖`.
    fn inverse_gradient(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim(self.dim, z.len())?;
        let norm = squared_norm(z).sqrt();
        if !norm.is_finite() {
            return Err(Error::NumericalFailure(
                "non-finite quartic gradient target".into(),
            ));
        }
        let r = cubic_root_scale(norm);
        Ok(z.mapv(|v| v / (r * r + 1.0)))
    }

    /// With `δ = x - y`:
    /// `D = ½‖δ‖² + (<y,δ> + ½‖δ‖²)² + ½‖y‖²‖δ‖²`, a sum of nonnegative terms.
    fn bregman(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, y.len())?;
        let (yd, dd, yy) = Zip::from(&x)
            .and(&y)
            .fold((0.0, 0.0, 0.0), |(yd, dd, yy), &a, &b| {
                let delta = a - b;
                (yd + b * delta, dd + delta * delta, yy + b * b)
            });
        let half_gap = yd + 0.5 * dd;
        clamp_bregman(0.5 * dd + half_gap * half_gap + 0.5 * yy * dd)
    }
}

impl SampleDomain for QuarticKernel {
    fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64> {
        let scale = rng.random_range(0.05..2.0);
        Array1::from_shape_fn(self.dim, |_| {
            scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `alpha * ½‖x‖² + beta * (¼‖x‖⁴ + ½‖x‖²)`, only used to check linear additivity.
    struct Blend {
        alpha: f64,
        beta: f64,
        euclid: EuclideanKernel,
        quartic: QuarticKernel,
    }

    impl Kernel for Blend {
        fn name(&self) -> &'static str {
            "blend"
        }
        fn dim(&self) -> usize {
            self.euclid.dim()
        }
        fn in_interior_domain(&self, x: ArrayView1<f64>) -> bool {
            self.euclid.in_interior_domain(x)
        }
        fn value(&self, x: ArrayView1<f64>) -> Result<f64> {
            Ok(self.alpha * self.euclid.value(x)? + self.beta * self.quartic.value(x)?)
        }
        fn gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
            Ok(self.euclid.gradient(x)? * self.alpha + self.quartic.gradient(x)? * self.beta)
        }
        fn inverse_gradient(&self, _z: ArrayView1<f64>) -> Result<Array1<f64>> {
            Err(Error::Domain(
                "blend kernel has no closed-form inverse gradient".into(),
            ))
        }
    }

    fn fd_gradient<K: Kernel>(k: &K, x: &Array1<f64>) -> Array1<f64> {
        Array1::from_shape_fn(x.len(), |j| {
            let h = 1e-6 * x[j].abs().max(1e-3);
            let mut p = x.clone();
            let mut m = x.clone();
            p[j] += h;
            m[j] -= h;
            (k.value(p.view()).unwrap() - k.value(m.view()).unwrap()) / (2.0 * h)
        })
    }

    fn rel_err(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        let diff = (a - b).mapv(|v| v * v).sum().sqrt();
        diff / b.mapv(|v| v * v).sum().sqrt().max(1e-8)
    }

    #[test]
    fn euclidean_unit_step() {
        let k = EuclideanKernel::new(2);
        let d = k
            .bregman(array![1.0, 0.0].view(), array![0.0, 0.0].view())
            .unwrap();
        assert_eq!(d, 0.5);
    }

    #[test]
    fn burg_self_distance_is_zero() {
        let k = BurgKernel::new(2);
        let x = array![3.7, 0.2];
        assert_eq!(k.bregman(x.view(), x.view()).unwrap(), 0.0);
    }

    #[test]
    fn burg_scalar_value() {
        let k = BurgKernel::new(1);
        let d = k.bregman(array![2.0].view(), array![1.0].view()).unwrap();
        let expected = 2.0 - 2.0_f64.ln() - 1.0;
        assert_abs_diff_eq!(d, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 0.306853, epsilon = 1e-6);
        let literal = bregman_by_definition(&k, array![2.0].view(), array![1.0].view()).unwrap();
        assert_abs_diff_eq!(d, literal, epsilon = 1e-14);
    }

    #[test]
    fn burg_rejects_nonpositive() {
        let k = BurgKernel::new(2);
        let err = k.bregman(array![1.0, 0.0].view(), array![1.0, 1.0].view());
        assert!(matches!(err, Err(Error::Domain(_))));
        let err = k.bregman(array![1.0, 1.0].view(), array![-1.0, 1.0].view());
        assert!(matches!(err, Err(Error::Domain(_))));
        assert!(matches!(
            k.value(array![f64::NAN, 1.0].view()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn inverse_gradient_examples() {
        let e = EuclideanKernel::new(2);
        assert_eq!(
            e.inverse_gradient(array![4.0, -1.0].view()).unwrap(),
            array![4.0, -1.0]
        );
        let b = BurgKernel::new(1);
        let y = b.inverse_gradient(array![-0.5].view()).unwrap();
        assert_eq!(y, array![2.0]);
        assert_eq!(b.gradient(y.view()).unwrap(), array![-0.5]);
        assert!(matches!(
            b.inverse_gradient(array![0.5].view()),
            Err(Error::Domain(_))
        ));
        let q = QuarticKernel::new(3);
        assert_eq!(
            q.inverse_gradient(Array1::zeros(3).view()).unwrap(),
            Array1::<f64>::zeros(3)
        );
    }

    #[test]
    fn three_point_fixed_burg_triple() {
        let k = BurgKernel::new(2);
        let r = three_point_identity_residual(
            &k,
            array![1.0, 2.0].view(),
            array![2.0, 1.0].view(),
            array![1.0, 1.0].view(),
        )
        .unwrap();
        assert!(r.abs() < 1e-10, "{r}");
    }

    #[test]
    fn cubic_root_examples() {
        assert_eq!(cubic_root_scale(0.0), 0.0);
        assert_abs_diff_eq!(cubic_root_scale(2.0), 1.0, epsilon = 1e-14);
        // bisection oracle
        let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid * mid + mid > 10.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let r = cubic_root_scale(10.0);
        assert_abs_diff_eq!(r, lo, epsilon = 1e-12);
        assert!((r * r * r + r - 10.0).abs() <= 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e = EuclideanKernel::new(4);
        let b = BurgKernel::new(4);
        let q = QuarticKernel::new(4);
        for _ in 0..100 {
            let x = e.sample_interior(&mut rng);
            assert!(rel_err(&fd_gradient(&e, &x), &e.gradient(x.view()).unwrap()) < 1e-5);
            let x = b.sample_interior(&mut rng);
            assert!(rel_err(&fd_gradient(&b, &x), &b.gradient(x.view()).unwrap()) < 1e-5);
            let x = q.sample_interior(&mut rng);
            assert!(rel_err(&fd_gradient(&q, &x), &q.gradient(x.view()).unwrap()) < 1e-5);
        }
    }

    fn check_kernel_pair<K: Kernel + SampleDomain>(k: &K, rng: &mut ChaCha8Rng) {
        let x = k.sample_interior(rng);
        let y = k.sample_interior(rng);
        let z = k.sample_interior(rng);
        let raw = bregman_by_definition(k, x.view(), y.view()).unwrap();
        let closed = k.bregman(x.view(), y.view()).unwrap();
        let scale = 1.0 + k.value(x.view()).unwrap().abs() + k.value(y.view()).unwrap().abs();
        assert!(raw >= -1e-12 * scale, "negative raw distance {raw}");
        assert!(closed >= 0.0);
        assert!((raw - closed).abs() <= 1e-12 * scale, "{raw} vs {closed}");
        let res = three_point_identity_residual(k, x.view(), y.view(), z.view()).unwrap();
        let tp_scale = 1.0 + k.bregman(x.view(), z.view()).unwrap();
        assert!(res.abs() < 1e-10 * tp_scale, "three point residual {res}");
        let back = k
            .inverse_gradient(k.gradient(y.view()).unwrap().view())
            .unwrap();
        let norm_y = y.dot(&y).sqrt();
        let err = (&back - &y).mapv(|v| v * v).sum().sqrt() / norm_y.max(1.0);
        assert!(err < 1e-9, "round trip error {err}");
    }

    #[test]
    fn random_pairs_all_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [1, 2, 5] {
            for _ in 0..1000 {
                check_kernel_pair(&EuclideanKernel::new(d), &mut rng);
                check_kernel_pair(&BurgKernel::new(d), &mut rng);
                check_kernel_pair(&QuarticKernel::new(d), &mut rng);
            }
        }
    }

    #[test]
    fn three_point_quartic_unit_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = QuarticKernel::new(3);
        for _ in 0..1000 {
            let pts: Vec<Array1<f64>> = (0..3)
                .map(|_| {
                    let v = Array1::from_shape_fn(3, |_| rng.random_range(-1.0f64..1.0));
                    let n = v.dot(&v).sqrt();
                    if n > 1.0 {
                        v / n
                    } else {
                        v
                    }
                })
                .collect();
            let r = three_point_identity_residual(&q, pts[0].view(), pts[1].view(), pts[2].view())
                .unwrap();
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn linear_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (alpha, beta) = (0.7, 2.5);
        let blend = Blend {
            alpha,
            beta,
            euclid: EuclideanKernel::new(3),
            quartic: QuarticKernel::new(3),
        };
        for _ in 0..200 {
            let x = blend.quartic.sample_interior(&mut rng);
            let y = blend.quartic.sample_interior(&mut rng);
            let combined = blend.bregman(x.view(), y.view()).unwrap();
            let parts = alpha * blend.euclid.bregman(x.view(), y.view()).unwrap()
                + beta * blend.quartic.bregman(x.view(), y.view()).unwrap();
            assert!((combined - parts).abs() <= 1e-10 * (1.0 + parts));
        }
    }

    #[test]
    fn clamp_policy() {
        assert_eq!(clamp_bregman(-5e-13).unwrap(), 0.0);
        assert!(clamp_bregman(-1e-9).is_err());
        assert!(clamp_bregman(f64::NAN).is_err());
    }

    #[test]
    fn burg_mirror_step_rejects_bad_denominator() {
        let k = BurgKernel::new(1);
        let r = k.mirror_step(array![1.0].view(), array![-2.0].view(), 1.0);
        assert!(matches!(r, Err(Error::NumericalFailure(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn small_distance_means_close_points(
            x in proptest::collection::vec(-3.0..3.0_f64, 3),
            y in proptest::collection::vec(-3.0..3.0_f64, 3),
        ) {
            let x = Array1::from(x);
            let y = Array1::from(y);
            let q = QuarticKernel::new(3);
            let e = EuclideanKernel::new(3);
            let gap = (&x - &y).mapv(|v| v * v).sum().sqrt();
            for d in [q.bregman(x.view(), y.view()).unwrap(), e.bregman(x.view(), y.view()).unwrap()] {
                prop_assert!(d >= 0.0);
                if d < 1e-14 {
                    prop_assert!(gap < 1e-6);
                }
            }
            let bx = x.mapv(f64::exp);
            let by = y.mapv(f64::exp);
            let b = BurgKernel::new(3);
            let d = b.bregman(bx.view(), by.view()).unwrap();
            prop_assert!(d >= 0.0);
            if d < 1e-14 {
                prop_assert!((&bx - &by).mapv(|v| v * v).sum().sqrt() < 1e-6);
            }
        }

        #[test]
        fn quartic_round_trip(y in proptest::collection::vec(-50.0..50.0_f64, 1..6)) {
            let y = Array1::from(y);
            let q = QuarticKernel::new(y.len());
            let back = q.inverse_gradient(q.gradient(y.view()).unwrap().view()).unwrap();
            let err = (&back - &y).mapv(|v| v * v).sum().sqrt() / y.dot(&y).sqrt().max(1.0);
            prop_assert!(err < 1e-9);
        }
    }
}
