//! Tables of real moments `m_α = ∫ x^α f dx` and their exact transformation
//! under rigid motions.

use serde::{Deserialize, Serialize};

use crate::geometry::RigidMotion;
use crate::multi_index::{all3, binomial, idx3, len3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    max_order: usize,
    values: Vec<f64>,
}

impl MomentTable {
    pub fn zeros(max_order: usize) -> Self {
        Self {
            max_order,
            values: vec![0.0; len3(max_order)],
        }
    }

    pub fn from_values(max_order: usize, values: Vec<f64>) -> Option<Self> {
        (values.len() == len3(max_order)).then_some(Self { max_order, values })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        if i + j + k > self.max_order {
            return 0.0;
        }
        self.values[idx3(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        assert!(i + j + k <= self.max_order, "multi-index beyond table order");
        self.values[idx3(i, j, k)] = value;
    }

    pub fn mass(&self) -> f64 {
        self.get(0, 0, 0)
    }

    pub fn centroid(&self) -> [f64; 3] {
        let m = self.mass();
        [
            self.get(1, 0, 0) / m,
            self.get(0, 1, 0) / m,
            self.get(0, 0, 1) / m,
        ]
    }

    /// Second-moment matrix Λ.
    pub fn lambda(&self) -> [[f64; 3]; 3] {
        let g = |i, j, k| self.get(i, j, k);
        [
            [g(2, 0, 0), g(1, 1, 0), g(1, 0, 1)],
            [g(1, 1, 0), g(0, 2, 0), g(0, 1, 1)],
            [g(1, 0, 1), g(0, 1, 1), g(0, 0, 2)],
        ]
    }

    pub fn truncated(&self, order: usize) -> Self {
        let order = order.min(self.max_order);
        Self {
            max_order: order,
            values: self.values[..len3(order)].to_vec(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        all3(self.max_order).map(move |(i, j, k)| ((i, j, k), self.values[idx3(i, j, k)]))
    }

    /// Moments of the mirror image `x ↦ f(x₁, x₂, −x₃)`.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for (i, j, k) in all3(self.max_order) {
            if k % 2 == 1 {
                out.values[idx3(i, j, k)] = -self.values[idx3(i, j, k)];
            }
        }
        out
    }

    /// Moments of `g·f` where `(g·f)(x) = f(g⁻¹x)`, i.e.
    /// `m'_α = ∫ (R y + t)^α f(y) dy`, by exact multinomial expansion.
    pub fn transformed(&self, motion: &RigidMotion) -> Self {
        let order = self.max_order;
        let r = motion.rotation.matrix();
        let t = motion.translation;
        // powers[d][n] = ((R y + t)_d)^n as a polynomial in y
        let powers: Vec<Vec<Poly3>> = (0..3)
            .map(|d| {
                let lin = Poly3::affine(order, t[d], r[d]);
                let mut v = vec![Poly3::one(order)];
                for n in 1..=order {
                    let next = v[n - 1].mul(&lin);
                    v.push(next);
                }
                v
            })
            .collect();
        let mut out = Self::zeros(order);
        for (i, j, k) in all3(order) {
            let p = powers[0][i].mul(&powers[1][j]).mul(&powers[2][k]);
            let value: f64 = p
                .coeffs
                .iter()
                .zip(&self.values)
                .map(|(c, m)| c * m)
                .sum();
            out.values[idx3(i, j, k)] = value;
        }
        out
    }

    /// Moments of `f(· − shift)`, via the binomial theorem (cheaper than the
    /// general transformation and exact for pure translations).
    pub fn translated(&self, shift: [f64; 3]) -> Self {
        let order = self.max_order;
        let mut out = Self::zeros(order);
        for (i, j, k) in all3(order) {
            let mut acc = 0.0;
            for a in 0..=i {
                for b in 0..=j {
                    for c in 0..=k {
                        acc += binomial(i, a)
                            * binomial(j, b)
                            * binomial(k, c)
                            * shift[0].powi((i - a) as i32)
                            * shift[1].powi((j - b) as i32)
                            * shift[2].powi((k - c) as i32)
                            * self.get(a, b, c);
                    }
                }
            }
            out.values[idx3(i, j, k)] = acc;
        }
        out
    }

    /// Largest moment magnitude of each total order.
    pub fn order_scales(&self) -> Vec<f64> {
        let mut scales = vec![0.0f64; self.max_order + 1];
        for ((i, j, k), v) in self.iter() {
            let n = i + j + k;
            scales[n] = scales[n].max(v.abs());
        }
        scales
    }
}

/// Dense real polynomial in three variables, truncated at a total order.
#[derive(Debug, Clone)]
struct Poly3 {
    order: usize,
    coeffs: Vec<f64>,
}

impl Poly3 {
    fn one(order: usize) -> Self {
        let mut coeffs = vec![0.0; len3(order)];
        coeffs[0] = 1.0;
        Self { order, coeffs }
    }

    fn affine(order: usize, constant: f64, linear: [f64; 3]) -> Self {
        let mut p = Self::one(order);
        p.coeffs[0] = constant;
        if order >= 1 {
            p.coeffs[idx3(1, 0, 0)] = linear[0];
            p.coeffs[idx3(0, 1, 0)] = linear[1];
            p.coeffs[idx3(0, 0, 1)] = linear[2];
        }
        p
    }

    fn mul(&self, other: &Self) -> Self {
        let order = self.order;
        let mut out = vec![0.0; len3(order)];
        for (a, b, c) in all3(order) {
            let x = self.coeffs[idx3(a, b, c)];
            if x == 0.0 {
                continue;
            }
            let rem = order - (a + b + c);
            for (d, e, f) in all3(rem) {
                out[idx3(a + d, b + e, c + f)] += x * other.coeffs[idx3(d, e, f)];
            }
        }
        Self { order, coeffs: out }
    }
}
