//! Poisson linear inverse problems: `min_x KL(b, Ax)` over the positive
//! orthant, solved under Burg's entropy geometry.
//!
//! `(KL(b, A·), h)` is `L`-smad with `L = ‖b‖₁` and the data term is convex,
//! so `μ = 0`.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{burg_term, BurgKernel, Kernel};
use crate::problems::{CompositeObjective, SmoothTerm, ZeroTerm};

/// Instance `{A, b}` with positive `A` and nonnegative, nonzero `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlipInstance {
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    pub x_true: Array1<f64>,
    /// Regularization weight of the general model; the unregularized
    /// problem (`g ≡ 0`) is the only one solved, so this stays `0`.
    pub theta: f64,
}

pub type PlipObjective = CompositeObjective<BurgKernel, PlipInstance, ZeroTerm>;

#[derive(Serialize, Deserialize)]
struct PlipWire {
    m: usize,
    d: usize,
    seed: u64,
    #[serde(rename = "A")]
    a: Vec<f64>,
    b: Vec<f64>,
    x_true: Vec<f64>,
}

impl PlipInstance {
    /// Builds an instance, checking shapes and positivity.
    pub fn new(a: Array2<f64>, b: Array1<f64>, x_true: Array1<f64>, seed: u64) -> Result<Self> {
        let (m, d) = a.dim();
        if m == 0 || d == 0 {
            return Err(Error::InvalidConfig("PLIP needs m, d >= 1".into()));
        }
        check_dim(m, b.len())?;
        check_dim(d, x_true.len())?;
        if a.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig(
                "PLIP matrix entries must be positive".into(),
            ));
        }
        if b.iter().any(|&v| !(v >= 0.0 && v.is_finite())) || b.sum() <= 0.0 {
            return Err(Error::InvalidConfig(
                "PLIP data must be nonnegative and nonzero".into(),
            ));
        }
        Ok(Self {
            m,
            d,
            seed,
            a,
            b,
            x_true,
            theta: 0.0,
        })
    }

    /// Random instance: `A` and `x_true` uniform on `(0, 1]`, `b = A x_true`,
    /// or a Poisson draw around it when `poisson_noise` is set.
    pub fn generate(m: usize, d: usize, seed: u64, poisson_noise: bool) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidConfig("PLIP needs m, d >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::from_shape_fn((m, d), |_| 1.0 - rng.random::<f64>());
        for j in 0..d {
            while a.column(j).iter().all(|&v| v < 1e-12) {
                a.column_mut(j).mapv_inplace(|_| 1.0 - rng.random::<f64>());
            }
        }
        let x_true = Array1::from_shape_fn(d, |_| 1.0 - rng.random::<f64>());
        let mut b = a.dot(&x_true);
        if poisson_noise {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
            noise_rng.set_stream(2);
            b.mapv_inplace(|mean| {
                Poisson::new(mean)
                    .map(|p| p.sample(&mut noise_rng))
                    .unwrap_or(mean)
            });
            if b.sum() <= 0.0 {
                b[0] = 1.0;
            }
        }
        Self::new(a, b, x_true, seed)
    }

    /// Deterministic starting point, entrywise uniform on `[0.5, 1.5)`.
    pub fn initial_point(&self) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        Array1::from_shape_fn(self.d, |_| rng.random_range(0.5..1.5))
    }

    pub fn objective(&self) -> PlipObjective {
        CompositeObjective::new(BurgKernel::new(self.d), self.clone(), ZeroTerm)
            .expect("validated PLIP instance")
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = PlipWire {
            m: self.m,
            d: self.d,
            seed: self.seed,
            a: self.a.iter().copied().collect(),
            b: self.b.to_vec(),
            x_true: self.x_true.to_vec(),
        };
        Ok(serde_json::to_string(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: PlipWire = serde_json::from_str(text)?;
        check_dim(wire.m * wire.d, wire.a.len())?;
        let a = Array2::from_shape_vec((wire.m, wire.d), wire.a)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Self::new(
            a,
            Array1::from(wire.b),
            Array1::from(wire.x_true),
            wire.seed,
        )
    }

    fn require_positive(&self, x: ArrayView1<f64>) -> Result<()> {
        check_dim(self.d, x.len())?;
        match x.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            Some(j) => Err(Error::Domain(format!(
                "PLIP needs x > 0, component {j} is {}",
                x[j]
            ))),
            None => Ok(()),
        }
    }

    fn kl_from_forward(&self, ax: &Array1<f64>) -> f64 {
        // b log(b/Ax) + Ax - b = b (t - log(1 + t)) with t = (Ax - b)/b
        Zip::from(&self.b).and(ax).fold(0.0, |acc, &bi, &ai| {
            if bi == 0.0 {
                acc + ai
            } else {
                acc + bi * burg_term((ai - bi) / bi)
            }
        })
    }

    fn gradient_from_forward(&self, ax: &Array1<f64>) -> Array1<f64> {
        let weights = Zip::from(&self.b)
            .and(ax)
            .map_collect(|&bi, &ai| 1.0 - bi / ai);
        self.a.t().dot(&weights)
    }
}

/// `Σ_i { b_i log(b_i / (Ax)_i) + (Ax)_i - b_i }`.
pub fn kl_value(inst: &PlipInstance, x: ArrayView1<f64>) -> Result<f64> {
    inst.require_positive(x)?;
    Ok(inst.kl_from_forward(&inst.a.dot(&x)))
}

/// `Aᵀ(1 - b ⊘ Ax)`.
pub fn kl_gradient(inst: &PlipInstance, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    inst.require_positive(x)?;
    Ok(inst.gradient_from_forward(&inst.a.dot(&x)))
}

/// Bregman proximal gradient step with `g ≡ 0` under Burg's entropy:
/// `x_j = y_j / (1 + λ y_j grad_j)`. A nonpositive denominator is a
/// numerical failure.
pub fn plip_prox(
    inst: &PlipInstance,
    y: ArrayView1<f64>,
    grad: ArrayView1<f64>,
    lambda: f64,
) -> Result<Array1<f64>> {
    BurgKernel::new(inst.d).mirror_step(y, grad, lambda)
}

impl SmoothTerm for PlipInstance {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: ArrayView1<f64>) -> Result<f64> {
        kl_value(self, x)
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        kl_gradient(self, x)
    }

    fn value_and_gradient(&self, x: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        self.require_positive(x)?;
        let ax = self.a.dot(&x);
        Ok((self.kl_from_forward(&ax), self.gradient_from_forward(&ax)))
    }

    /// `‖b‖₁`
    fn smad_constant(&self) -> f64 {
        self.b.iter().map(|v| v.abs()).sum()
    }

    fn weak_convexity_constant(&self) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn scalar() -> PlipInstance {
        PlipInstance::new(array![[1.0]], array![1.0], array![1.0], 0).unwrap()
    }

    #[test]
    fn kl_scalar_example() {
        let inst = scalar();
        let v = kl_value(&inst, array![2.0].view()).unwrap();
        // brute-force scalar formula
        let direct = 1.0 * (1.0_f64 / 2.0).ln() + 2.0 - 1.0;
        assert_abs_diff_eq!(v, direct, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.30685, epsilon = 1e-5);
        assert_eq!(kl_gradient(&inst, array![2.0].view()).unwrap(), array![0.5]);
    }

    #[test]
    fn exact_data_is_a_minimizer() {
        let inst = PlipInstance::generate(30, 4, 9, false).unwrap();
        let v = kl_value(&inst, inst.x_true.view()).unwrap();
        assert!(v.abs() < 1e-12);
        let g = kl_gradient(&inst, inst.x_true.view()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn rejects_nonpositive_points() {
        let inst = scalar();
        assert!(matches!(
            kl_value(&inst, array![0.0].view()),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            kl_gradient(&inst, array![-1.0].view()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn prox_examples() {
        let inst = PlipInstance::new(array![[1.0]], array![1.0], array![1.0], 0).unwrap();
        let x = plip_prox(&inst, array![1.0].view(), array![0.5].view(), 1.0).unwrap();
        assert_abs_diff_eq!(x[0], 2.0 / 3.0, epsilon = 1e-15);
        let y = array![0.7];
        assert_eq!(
            plip_prox(&inst, y.view(), array![0.0].view(), 1.0).unwrap(),
            y
        );
        let bad = plip_prox(&inst, array![1.0].view(), array![-2.0].view(), 1.0);
        assert!(matches!(bad, Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn prox_satisfies_mirror_equation() {
        let inst = PlipInstance::generate(40, 6, 1, false).unwrap();
        let lambda = 1.0 / inst.smad_constant();
        let y = inst.initial_point();
        let g = kl_gradient(&inst, y.view()).unwrap();
        let x = plip_prox(&inst, y.view(), g.view(), lambda).unwrap();
        let k = BurgKernel::new(inst.d);
        let res = k.gradient(x.view()).unwrap() - k.gradient(y.view()).unwrap() + &(g * lambda);
        assert!(res.iter().all(|v| v.abs() < 1e-10));
        assert!(x.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn generation_bounds_and_determinism() {
        let a = PlipInstance::generate(50, 5, 3, false).unwrap();
        assert!(a.a.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(a.b.iter().all(|&v| v > 0.0));
        let b = PlipInstance::generate(50, 5, 3, false).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let x0 = a.initial_point();
        assert!(x0.iter().all(|&v| (0.5..1.5).contains(&v)));
        assert_eq!(x0, b.initial_point());
    }

    #[test]
    fn json_round_trip() {
        let inst = PlipInstance::generate(7, 3, 21, true).unwrap();
        let text = inst.to_json().unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["A"].as_array().unwrap().len(), 21);
        assert_eq!(parsed["A"][1].as_f64().unwrap(), inst.a[[0, 1]]);
        assert_eq!(PlipInstance::from_json(&text).unwrap(), inst);
    }

    #[test]
    fn noisy_data_keeps_kl_nonnegative() {
        let inst = PlipInstance::generate(60, 4, 5, true).unwrap();
        for s in [0.1, 1.0, 3.0] {
            let x = Array1::from_elem(4, s);
            assert!(kl_value(&inst, x.view()).unwrap() >= -1e-12);
        }
    }
}
