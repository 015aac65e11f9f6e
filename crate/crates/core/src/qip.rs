//! Sparse quadratic inverse problems with rank-1 measurements
//! `A_i = a_i a_iᵀ`:
//!
//! ```text
//! min_x  ¼ Σ_i (<a_i, x>² - b_i)² + θ ‖x‖₁
//! ```
//!
//! solved under the quartic kernel `h(x) = ¼‖x‖⁴ + ½‖x‖²`. With
//! `‖A_i‖ = ‖a_i‖²`, the data term is `L`-smad for
//! `L = Σ (3‖a_i‖⁴ + ‖a_i‖²|b_i|)` and `μ`-weakly convex relative to `h` for
//! `μ = Σ ‖a_i‖²|b_i|`.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{Kernel, QuarticKernel};
use crate::problems::{CompositeObjective, L1Term, SmoothTerm};

pub use crate::kernels::cubic_root_scale;
pub use crate::problems::soft_threshold;

/// Fraction of nonzero entries in generated ground truths.
pub const SPARSITY: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct QipInstance {
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub theta: f64,
    /// Row `i` is the measurement vector `a_i`.
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    pub x_true: Array1<f64>,
    smad_constant: f64,
    weak_convexity_constant: f64,
}

pub type QipObjective = CompositeObjective<QuarticKernel, QipInstance, L1Term>;

#[derive(Serialize, Deserialize)]
struct QipWire {
    m: usize,
    d: usize,
    seed: u64,
    theta: f64,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    x_true: Vec<f64>,
}

/// Number of nonzeros in a generated ground truth of dimension `d`.
pub fn support_size(d: usize) -> usize {
    ((SPARSITY * d as f64).ceil() as usize).clamp(1, d)
}

impl QipInstance {
    pub fn new(
        a: Array2<f64>,
        b: Array1<f64>,
        x_true: Array1<f64>,
        theta: f64,
        seed: u64,
    ) -> Result<Self> {
        let (m, d) = a.dim();
        if m == 0 || d == 0 {
            return Err(Error::InvalidConfig("QIP needs m, d >= 1".into()));
        }
        check_dim(m, b.len())?;
        check_dim(d, x_true.len())?;
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "theta must be nonnegative, got {theta}"
            )));
        }
        let row_sq = a.map_axis(Axis(1), |row| row.dot(&row));
        let smad_constant = Zip::from(&row_sq)
            .and(&b)
            .fold(0.0, |acc, &n2, &bi| acc + 3.0 * n2 * n2 + n2 * bi.abs());
        let weak_convexity_constant = Zip::from(&row_sq)
            .and(&b)
            .fold(0.0, |acc, &n2, &bi| acc + n2 * bi.abs());
        Ok(Self {
            m,
            d,
            seed,
            theta,
            a,
            b,
            x_true,
            smad_constant,
            weak_convexity_constant,
        })
    }

    /// Random instance: Gaussian `a_i`, a ground truth with `⌈0.05 d⌉`
    /// Gaussian nonzeros at uniformly drawn positions, and
    /// `b_i = <a_i, x_true>²` plus optional Gaussian noise.
    pub fn generate(m: usize, d: usize, seed: u64, theta: f64, noise_std: f64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidConfig("QIP needs m, d >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((m, d), |_| StandardNormal.sample(&mut rng));
        let mut x_true = Array1::zeros(d);
        for j in rand::seq::index::sample(&mut rng, d, support_size(d)) {
            let mut v: f64 = StandardNormal.sample(&mut rng);
            while v == 0.0 {
                v = StandardNormal.sample(&mut rng);
            }
            x_true[j] = v;
        }
        let mut b = a.dot(&x_true).mapv(|v| v * v);
        if noise_std > 0.0 {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
            noise_rng.set_stream(2);
            let normal =
                Normal::new(0.0, noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            b.mapv_inplace(|v| v + normal.sample(&mut noise_rng));
        }
        Self::new(a, b, x_true, theta, seed)
    }

    /// Deterministic unit-norm Gaussian starting point.
    pub fn initial_point(&self) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        loop {
            let v: Array1<f64> = Array1::from_shape_fn(self.d, |_| StandardNormal.sample(&mut rng));
            let n = v.dot(&v).sqrt();
            if n > 0.0 {
                return v / n;
            }
        }
    }

    pub fn objective(&self) -> QipObjective {
        CompositeObjective::new(
            QuarticKernel::new(self.d),
            self.clone(),
            L1Term::new(self.theta),
        )
        .expect("validated QIP instance")
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = QipWire {
            m: self.m,
            d: self.d,
            seed: self.seed,
            theta: self.theta,
            a: self.a.outer_iter().map(|r| r.to_vec()).collect(),
            b: self.b.to_vec(),
            x_true: self.x_true.to_vec(),
        };
        Ok(serde_json::to_string(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: QipWire = serde_json::from_str(text)?;
        check_dim(wire.m, wire.a.len())?;
        let mut flat = Vec::with_capacity(wire.m * wire.d);
        for row in &wire.a {
            check_dim(wire.d, row.len())?;
            flat.extend_from_slice(row);
        }
        let a = Array2::from_shape_vec((wire.m, wire.d), flat)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Self::new(
            a,
            Array1::from(wire.b),
            Array1::from(wire.x_true),
            wire.theta,
            wire.seed,
        )
    }

    /// Returns `(<a_i, x>)_i` and `(<a_i, x>² - b_i)_i`.
    fn forward(&self, x: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        check_dim(self.d, x.len())?;
        let ax = self.a.dot(&x);
        let resid = Zip::from(&ax)
            .and(&self.b)
            .map_collect(|&v, &bi| v * v - bi);
        Ok((ax, resid))
    }
}

/// `¼ Σ (<a_i, x>² - b_i)² + θ ‖x‖₁`.
pub fn qip_value(inst: &QipInstance, x: ArrayView1<f64>) -> Result<f64> {
    let f = inst.value(x)?;
    Ok(f + inst.theta * x.iter().map(|v| v.abs()).sum::<f64>())
}

/// Gradient of the data term, `Σ (<a_i, x>² - b_i) <a_i, x> a_i`.
pub fn qip_gradient(inst: &QipInstance, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    inst.gradient(x)
}

/// Closed-form step `argmin_u θ‖u‖₁ + <grad, u - y> + D_h(u, y) / λ`:
/// `c = grad h(y) - λ grad`, `v = soft_threshold(c, λθ)`,
/// `u = v / (r² + 1)` with `r³ + r = ‖v‖`.
pub fn qip_prox(
    inst: &QipInstance,
    y: ArrayView1<f64>,
    grad: ArrayView1<f64>,
    lambda: f64,
) -> Result<Array1<f64>> {
    check_dim(inst.d, grad.len())?;
    let mut c = QuarticKernel::new(inst.d).gradient(y)?;
    c.scaled_add(-lambda, &grad);
    let v = soft_threshold(c.view(), lambda * inst.theta);
    let r = cubic_root_scale(v.dot(&v).sqrt());
    Ok(v / (r * r + 1.0))
}

impl SmoothTerm for QipInstance {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: ArrayView1<f64>) -> Result<f64> {
        let (_, resid) = self.forward(x)?;
        Ok(0.25 * resid.dot(&resid))
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.value_and_gradient(x)?.1)
    }

    fn value_and_gradient(&self, x: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        let (ax, resid) = self.forward(x)?;
        let weights = &resid * &ax;
        Ok((0.25 * resid.dot(&resid), self.a.t().dot(&weights)))
    }

    fn smad_constant(&self) -> f64 {
        self.smad_constant
    }

    fn weak_convexity_constant(&self) -> f64 {
        self.weak_convexity_constant
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn scalar(theta: f64) -> QipInstance {
        QipInstance::new(array![[1.0]], array![1.0], array![1.0], theta, 0).unwrap()
    }

    #[test]
    fn value_examples() {
        let inst = scalar(1.0);
        assert_eq!(qip_value(&inst, array![2.0].view()).unwrap(), 4.25);
        assert_eq!(
            qip_gradient(&inst, array![2.0].view()).unwrap(),
            array![6.0]
        );
        let gen = QipInstance::generate(30, 8, 4, 1.0, 0.0).unwrap();
        let zero = Array1::zeros(8);
        let expected = 0.25 * gen.b.iter().map(|v| v * v).sum::<f64>();
        assert!((qip_value(&gen, zero.view()).unwrap() - expected).abs() < 1e-12 * expected);
        assert!(qip_gradient(&gen, zero.view())
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let exact = QipInstance {
            theta: 0.0,
            ..gen.clone()
        };
        assert!(qip_value(&exact, gen.x_true.view()).unwrap().abs() < 1e-20);
    }

    #[test]
    fn constants_match_rank_one_norms() {
        let inst = QipInstance::new(
            array![[1.0, 2.0], [0.0, -1.0]],
            array![3.0, -2.0],
            array![0.0, 0.0],
            1.0,
            0,
        )
        .unwrap();
        // ‖a_1‖² = 5, ‖a_2‖² = 1
        assert_eq!(inst.smad_constant(), 3.0 * 25.0 + 5.0 * 3.0 + 3.0 + 2.0);
        assert_eq!(inst.weak_convexity_constant(), 15.0 + 2.0);
    }

    #[test]
    fn generation_sparsity_and_consistency() {
        let inst = QipInstance::generate(100, 20, 7, 1.0, 0.0).unwrap();
        assert_eq!(inst.x_true.iter().filter(|&&v| v != 0.0).count(), 1);
        let big = QipInstance::generate(10, 50, 7, 1.0, 0.0).unwrap();
        assert_eq!(big.x_true.iter().filter(|&&v| v != 0.0).count(), 3);
        for (row, &bi) in inst.a.outer_iter().zip(&inst.b) {
            let v = row.dot(&inst.x_true);
            assert!((v * v - bi).abs() <= 1e-12 * (1.0 + bi));
        }
        assert!(inst.weak_convexity_constant() <= inst.smad_constant());
        let x0 = inst.initial_point();
        assert!((x0.dot(&x0) - 1.0).abs() < 1e-14);
        assert_eq!(inst, QipInstance::generate(100, 20, 7, 1.0, 0.0).unwrap());
    }

    #[test]
    fn cubic_examples() {
        assert_eq!(cubic_root_scale(0.0), 0.0);
        assert!((cubic_root_scale(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prox_fixed_point_and_zero() {
        let inst =
            QipInstance::new(array![[1.0, 0.0]], array![1.0], array![1.0, 0.0], 0.0, 0).unwrap();
        let y = array![0.3, -1.2];
        let x = qip_prox(&inst, y.view(), array![0.0, 0.0].view(), 0.1).unwrap();
        assert!((&x - &y).iter().all(|v| v.abs() < 1e-13));
        // everything inside the threshold
        let inst = QipInstance {
            theta: 10.0,
            ..inst
        };
        let x = qip_prox(
            &inst,
            array![0.1, -0.1].view(),
            array![0.0, 0.0].view(),
            1.0,
        )
        .unwrap();
        assert_eq!(x, array![0.0, 0.0]);
    }

    #[test]
    fn prox_first_order_inclusion_and_norm() {
        let inst = QipInstance::generate(20, 6, 11, 1.0, 0.0).unwrap();
        let lambda = 1.0 / inst.smad_constant();
        let k = QuarticKernel::new(6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let y = Array1::from_shape_fn(6, |_| rng.random_range(-1.5..1.5));
            let g = qip_gradient(&inst, y.view()).unwrap();
            let x = qip_prox(&inst, y.view(), g.view(), lambda * 50.0).unwrap();
            let mut c = k.gradient(y.view()).unwrap();
            c.scaled_add(-lambda * 50.0, &g);
            let tau = lambda * 50.0 * inst.theta;
            let scale = x.dot(&x) + 1.0;
            for j in 0..6 {
                if x[j] != 0.0 {
                    assert!((scale * x[j] + tau * x[j].signum() - c[j]).abs() < 1e-9);
                } else {
                    assert!(c[j].abs() <= tau + 1e-9);
                }
            }
            let v = soft_threshold(c.view(), tau);
            assert!((x.dot(&x).sqrt() - cubic_root_scale(v.dot(&v).sqrt())).abs() < 1e-12);
            // the generic kernel route gives the same point
            let generic = inst
                .objective()
                .prox_gradient_step(y.view(), lambda * 50.0)
                .unwrap();
            assert!((&generic - &x).iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn json_round_trip() {
        let inst = QipInstance::generate(5, 3, 2, 0.5, 0.1).unwrap();
        let text = inst.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["a"].as_array().unwrap().len(), 5);
        assert_eq!(v["a"][0].as_array().unwrap().len(), 3);
        assert_eq!(QipInstance::from_json(&text).unwrap(), inst);
    }
}
