//! Rotations, rigid motions and the canonical gauge.
//!
//! Rigid motions act on functions by `((R, c)·f)(x) = f(R⁻¹(x − c))`:
//! rotation first, then translation.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::MomentTable;

/// Minimum relative gap between the eigenvalues of Λ.
pub const EIGEN_GAP_TOLERANCE: f64 = 1e-6;
/// Minimum size of `|m₃₀₀|`, `|m₂₁₀|` relative to `m₀₀₀ (λ_max / m₀₀₀)^{3/2}`.
pub const THIRD_MOMENT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("moment table of order {0} is too short; order 3 is required")]
    OrderTooLow(usize),
    #[error("matrix is not a rotation (defect {defect:.3e}, det {det})")]
    NotARotation { defect: f64, det: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn of(x: f64) -> Self {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Rotation {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Accepts a matrix whose columns are orthonormal and determinant is +1,
    /// both to 1e-12.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        let r = Self { m };
        let defect = r.orthonormality_defect();
        let det = r.det();
        if defect > 1e-12 || (det - 1.0).abs() > 1e-12 {
            return Err(GeometryError::NotARotation { defect, det });
        }
        Ok(r)
    }

    /// Rotation of a (not necessarily normalized, nonzero) quaternion `w + xi + yj + zk`.
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        let [w, x, y, z] = q.map(|c| c / n);
        Self {
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - z * w),
                    2.0 * (x * z + y * w),
                ],
                [
                    2.0 * (x * y + z * w),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - x * w),
                ],
                [
                    2.0 * (x * z - y * w),
                    2.0 * (y * z + x * w),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        }
    }

    /// Right-handed rotation by `angle` about a coordinate axis (0, 1 or 2).
    pub fn about_axis(axis: usize, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        let mut m = [[0.0; 3]; 3];
        m[axis][axis] = 1.0;
        m[a][a] = c;
        m[a][b] = -s;
        m[b][a] = s;
        m[b][b] = c;
        Self { m }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn inverse(&self) -> Self {
        let m = self.m;
        Self {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Rotation) -> Self {
        Self {
            m: mat_mul(&self.m, &other.m),
        }
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        mat_vec(&self.m, v)
    }

    pub fn det(&self) -> f64 {
        det3(&self.m)
    }

    /// Max-entry deviation of `RᵀR` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let rtr = mat_mul(&self.inverse().m, &self.m);
        let mut worst = 0.0f64;
        for (i, row) in rtr.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }

    /// Frobenius distance between two matrices.
    pub fn distance(&self, other: &Rotation) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += (self.m[i][j] - other.m[i][j]).powi(2);
            }
        }
        acc.sqrt()
    }

    /// `O R O` with `O = diag(1, 1, −1)`.
    pub fn mirror_conjugate(&self) -> Self {
        let mut m = self.m;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if (i == 2) != (j == 2) {
                    *v = -*v;
                }
            }
        }
        Self { m }
    }
}

pub(crate) fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub(crate) fn mat_vec(a: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion {
    pub rotation: Rotation,
    pub translation: [f64; 3],
}

impl RigidMotion {
    pub fn new(rotation: Rotation, translation: [f64; 3]) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), [0.0; 3])
    }

    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let r = self.rotation.apply(x);
        [
            r[0] + self.translation[0],
            r[1] + self.translation[1],
            r[2] + self.translation[2],
        ]
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidMotion) -> Self {
        Self::new(
            self.rotation.compose(&other.rotation),
            self.apply(other.translation),
        )
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        let t = inv.apply(self.translation);
        Self::new(inv, [-t[0], -t[1], -t[2]])
    }
}

/// A member `R_{S₁,θ}` of the one-parameter family that minimizes the
/// ξ₁² data coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyRotation {
    pub s1: Sign,
    pub theta: f64,
}

impl FamilyRotation {
    pub fn new(s1: Sign, theta: f64) -> Self {
        Self {
            s1,
            theta: theta.rem_euclid(std::f64::consts::TAU),
        }
    }

    pub fn rotation(&self) -> Rotation {
        family_rotation(self.s1, self.theta)
    }
}

/// The rotation `R` whose inverse is
///
/// ```text
///          ⎡ 1   0      0   ⎤
///   R⁻¹ =  ⎢ 0  cos θ −sin θ⎥         (s1 = +1)
///          ⎣ 0  sin θ  cos θ⎦
/// ```
///
/// For `s1 = −1` the inverse is `diag(−1,1,1) · Rx(θ) · diag(1,1,−1)`,
/// which keeps the first column `(−1, 0, 0)` and determinant +1.
pub fn family_rotation(s1: Sign, theta: f64) -> Rotation {
    let (s, c) = theta.sin_cos();
    let inv = match s1 {
        Sign::Plus => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        Sign::Minus => [[-1.0, 0.0, 0.0], [0.0, c, s], [0.0, s, -c]],
    };
    Rotation { m: inv }.inverse()
}

/// Haar-distributed rotations from normalized Gaussian quaternions.
pub fn sample_rotations(count: usize, seed: u64) -> Vec<Rotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            Rotation::from_quaternion(q)
        })
        .collect()
}

/// Centroid and principal axes of a moment table.
#[derive(Debug, Clone)]
pub struct PrincipalFrame {
    pub centroid: [f64; 3],
    /// Eigenvalues of the centered Λ, descending.
    pub eigenvalues: [f64; 3],
    /// Rows are the matching unit eigenvectors; determinant +1.
    pub axes: Rotation,
    /// Centered moments expressed in the principal axes.
    pub diagonal_table: MomentTable,
}

pub fn principal_frame(moments: &MomentTable) -> PrincipalFrame {
    let centroid = moments.centroid();
    let centered = moments.translated([-centroid[0], -centroid[1], -centroid[2]]);
    let l = centered.lambda();
    let eig = SymmetricEigen::new(Matrix3::from_fn(|i, j| l[i][j]));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.map(|i| eig.eigenvalues[i]);
    let mut rows = [[0.0; 3]; 3];
    for (r, &col) in order.iter().enumerate() {
        for d in 0..3 {
            rows[r][d] = eig.eigenvectors[(d, col)];
        }
    }
    if det3(&rows) < 0.0 {
        rows[2] = rows[2].map(|v| -v);
    }
    let axes = Rotation { m: rows };
    let motion = RigidMotion::new(axes, axes.apply(centroid).map(|v| -v));
    PrincipalFrame {
        centroid,
        eigenvalues,
        axes,
        diagonal_table: moments.transformed(&motion),
    }
}

/// Brings a moment table into the canonical gauge: centroid at the origin,
/// Λ diagonal with `m₂₀₀ > m₀₂₀ > m₀₀₂`, and `m₃₀₀, m₂₁₀ > 0`.
///
/// Returns the rigid motion `g` with `g·f` canonical together with the
/// moments of `g·f`.
pub fn canonicalize(moments: &MomentTable) -> Result<(RigidMotion, MomentTable), GeometryError> {
    if moments.max_order() < 3 {
        return Err(GeometryError::OrderTooLow(moments.max_order()));
    }
    let frame = principal_frame(moments);
    let [l1, l2, l3] = frame.eigenvalues;
    let scale = l1.abs().max(f64::MIN_POSITIVE);
    if (l1 - l2) / scale < EIGEN_GAP_TOLERANCE || (l2 - l3) / scale < EIGEN_GAP_TOLERANCE {
        return Err(GeometryError::AssumptionViolated(format!(
            "Λ eigenvalues not separated: {l1:.6e}, {l2:.6e}, {l3:.6e}"
        )));
    }
    let d = &frame.diagonal_table;
    let mass = d.mass();
    let third_scale = mass * (l1 / mass).powf(1.5);
    let m300 = d.get(3, 0, 0);
    let m210 = d.get(2, 1, 0);
    if m300.abs() < THIRD_MOMENT_TOLERANCE * third_scale
        || m210.abs() < THIRD_MOMENT_TOLERANCE * third_scale
    {
        return Err(GeometryError::AssumptionViolated(format!(
            "third moments vanish in the principal frame: m300={m300:.3e}, m210={m210:.3e}"
        )));
    }
    let s1 = Sign::of(m300).value();
    let s2 = Sign::of(m210).value();
    let flip = [[s1, 0.0, 0.0], [0.0, s2, 0.0], [0.0, 0.0, s1 * s2]];
    let rotation = Rotation {
        m: mat_mul(&flip, &frame.axes.m),
    };
    let motion = RigidMotion::new(rotation, rotation.apply(frame.centroid).map(|v| -v));
    let table = moments.transformed(&motion);
    Ok((motion, table))
}
