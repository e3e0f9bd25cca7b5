//! Dense truncated power series in two and three variables with complex
//! coefficients, and the Taylor expansion of the data function built from
//! them.

use num_complex::Complex;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::geometry::{Rotation, Sign};
use crate::multi_index::{all2, all3, idx2, idx3, len2, len3, order2};
use crate::optics::OpticsConfig;
use crate::real::{cexp, Real};

/// Inner series passed to [`compose3in2`] must have a constant term below this.
pub const CONSTANT_TERM_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("series orders differ: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },
    #[error("inner series has a nonzero constant term ({magnitude:.3e})")]
    NonzeroConstantTerm { magnitude: f64 },
    #[error("axial offset c3 = {c3} does not match the configured c0 = {c0}")]
    AxialOffsetMismatch { c3: f64, c0: f64 },
    #[error("coefficient table has order {have}, {need} required")]
    InsufficientOrder { have: usize, need: usize },
}

fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// `Σ c_ij ξ₁^i ξ₂^j` for `i + j ≤ order`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries2<T: Real = f64> {
    order: usize,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> TruncatedSeries2<T> {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            coeffs: vec![czero(); len2(order)],
        }
    }

    pub fn constant(order: usize, value: Complex<T>) -> Self {
        let mut s = Self::zeros(order);
        s.coeffs[0] = value;
        s
    }

    pub fn one(order: usize) -> Self {
        Self::constant(order, Complex::one())
    }

    pub fn monomial(order: usize, i: usize, j: usize, value: Complex<T>) -> Self {
        let mut s = Self::zeros(order);
        if i + j <= order {
            s.coeffs[idx2(i, j)] = value;
        }
        s
    }

    /// The coordinate function ξ₁ (`axis = 0`) or ξ₂ (`axis = 1`).
    pub fn variable(order: usize, axis: usize) -> Self {
        let (i, j) = if axis == 0 { (1, 0) } else { (0, 1) };
        Self::monomial(order, i, j, Complex::one())
    }

    pub fn from_coeffs(order: usize, coeffs: Vec<Complex<T>>) -> Option<Self> {
        (coeffs.len() == len2(order)).then_some(Self { order, coeffs })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize) -> Complex<T> {
        if i + j > self.order {
            return czero();
        }
        self.coeffs[idx2(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Complex<T>) {
        assert!(i + j <= self.order, "monomial beyond truncation order");
        self.coeffs[idx2(i, j)] = value;
    }

    pub fn constant_term(&self) -> Complex<T> {
        self.coeffs[0]
    }

    /// Same series at a different truncation order (drops or zero-pads).
    pub fn with_order(&self, order: usize) -> Self {
        let mut s = Self::zeros(order);
        let n = len2(order.min(self.order));
        s.coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        s
    }

    fn check(&self, other: &Self) -> Result<(), SeriesError> {
        if self.order != other.order {
            return Err(SeriesError::OrderMismatch {
                left: self.order,
                right: other.order,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        Ok(self.add_unchecked(other))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| *a - *b)
            .collect();
        Ok(Self {
            order: self.order,
            coeffs,
        })
    }

    /// Cauchy product truncated at the common order.
    pub fn mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        Ok(self.mul_unchecked(other))
    }

    pub fn scale(&self, factor: Complex<T>) -> Self {
        Self {
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| *c * factor).collect(),
        }
    }

    pub(crate) fn add_unchecked(&self, other: &Self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| *a + *b)
            .collect();
        Self {
            order: self.order,
            coeffs,
        }
    }

    pub(crate) fn mul_unchecked(&self, other: &Self) -> Self {
        let order = self.order;
        let mut out = vec![czero::<T>(); len2(order)];
        for (a, b) in all2(order) {
            let x = self.coeffs[idx2(a, b)];
            if x.is_zero() {
                continue;
            }
            for (d, e) in all2(order - a - b) {
                let y = other.coeffs[idx2(d, e)];
                out[idx2(a + d, b + e)] = out[idx2(a + d, b + e)] + x * y;
            }
        }
        Self { order, coeffs: out }
    }

    /// Truncated `exp(self)`, from the recurrence `n E_n = Σ_m m φ_m E_{n−m}`
    /// on homogeneous parts (the Euler-operator form of `E' = φ'E`).
    pub fn exp(&self) -> Self {
        let order = self.order;
        let mut e = vec![czero::<T>(); len2(order)];
        e[0] = cexp(self.coeffs[0]);
        for n in 1..=order {
            for m in 1..=n {
                let weight = T::from_usize(m);
                for (i, j) in order2(m) {
                    let phi = self.coeffs[idx2(i, j)];
                    if phi.is_zero() {
                        continue;
                    }
                    let phi = phi * weight;
                    for (p, q) in order2(n - m) {
                        let k = idx2(i + p, j + q);
                        e[k] = e[k] + phi * e[idx2(p, q)];
                    }
                }
            }
            let inv = T::one() / T::from_usize(n);
            for (i, j) in order2(n) {
                let k = idx2(i, j);
                e[k] = e[k] * inv;
            }
        }
        Self { order, coeffs: e }
    }

    pub fn eval(&self, xi: [T; 2]) -> Complex<T> {
        // Horner in ξ₂ inside Horner in ξ₁
        let mut acc = czero::<T>();
        for i in (0..=self.order).rev() {
            let mut inner = czero::<T>();
            for j in (0..=(self.order - i)).rev() {
                inner = inner * xi[1] + self.coeffs[idx2(i, j)];
            }
            acc = acc * xi[0] + inner;
        }
        acc
    }

    /// Homogeneous part of degree `n` as a new series.
    pub fn homogeneous(&self, n: usize) -> Self {
        let mut s = Self::zeros(self.order);
        if n <= self.order {
            for (i, j) in order2(n) {
                s.coeffs[idx2(i, j)] = self.coeffs[idx2(i, j)];
            }
        }
        s
    }

    pub fn map<U: Real>(&self, f: impl Fn(Complex<T>) -> Complex<U>) -> TruncatedSeries2<U> {
        TruncatedSeries2 {
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| f(*c)).collect(),
        }
    }
}

/// `Σ a_ijk ζ₁^i ζ₂^j ζ₃^k` for `i + j + k ≤ order`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries3<T: Real = f64> {
    order: usize,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> TruncatedSeries3<T> {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            coeffs: vec![czero(); len3(order)],
        }
    }

    pub fn from_coeffs(order: usize, coeffs: Vec<Complex<T>>) -> Option<Self> {
        (coeffs.len() == len3(order)).then_some(Self { order, coeffs })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize, k: usize) -> Complex<T> {
        if i + j + k > self.order {
            return czero();
        }
        self.coeffs[idx3(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: Complex<T>) {
        assert!(i + j + k <= self.order, "monomial beyond truncation order");
        self.coeffs[idx3(i, j, k)] = value;
    }

    pub fn with_order(&self, order: usize) -> Self {
        let mut s = Self::zeros(order);
        let n = len3(order.min(self.order));
        s.coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        s
    }

    /// Zeroes every coefficient of total order `>= from`.
    pub fn zero_from_order(&mut self, from: usize) {
        let start = if from == 0 { 0 } else { len3(from - 1) };
        for c in self.coeffs.iter_mut().skip(start) {
            *c = czero();
        }
    }

    pub fn eval(&self, zeta: [T; 3]) -> Complex<T> {
        let mut acc = czero::<T>();
        for (i, j, k) in all3(self.order) {
            let c = self.coeffs[idx3(i, j, k)];
            if c.is_zero() {
                continue;
            }
            let mono = powi(zeta[0], i) * powi(zeta[1], j) * powi(zeta[2], k);
            acc = acc + c * mono;
        }
        acc
    }
}

fn powi<T: Real>(x: T, n: usize) -> T {
    (0..n).fold(T::one(), |acc, _| acc * x)
}

/// Coefficients of `Σ a_ijk inner1^i inner2^j inner3^k`, truncated at the
/// inner order. Terms of `outer` beyond that order cannot contribute.
pub fn compose3in2<T: Real>(
    outer: &TruncatedSeries3<T>,
    inner1: &TruncatedSeries2<T>,
    inner2: &TruncatedSeries2<T>,
    inner3: &TruncatedSeries2<T>,
) -> Result<TruncatedSeries2<T>, SeriesError> {
    inner1.check(inner2)?;
    inner1.check(inner3)?;
    for s in [inner1, inner2, inner3] {
        let c = s.constant_term();
        let magnitude = (c.re.to_f64().powi(2) + c.im.to_f64().powi(2)).sqrt();
        if magnitude > CONSTANT_TERM_TOLERANCE {
            return Err(SeriesError::NonzeroConstantTerm { magnitude });
        }
    }
    let order = inner1.order;
    let top = order.min(outer.order);
    let powers = |s: &TruncatedSeries2<T>| {
        let mut v = vec![TruncatedSeries2::one(order)];
        for n in 1..=top {
            let next = v[n - 1].mul_unchecked(s);
            v.push(next);
        }
        v
    };
    let p1 = powers(inner1);
    let p2 = powers(inner2);
    let p3 = powers(inner3);
    let mut out = TruncatedSeries2::zeros(order);
    for i in 0..=top {
        for j in 0..=(top - i) {
            // q = Σ_k a_ijk inner3^k
            let mut q = TruncatedSeries2::zeros(order);
            let mut any = false;
            for k in 0..=(top - i - j) {
                let a = outer.coeffs[idx3(i, j, k)];
                if a.is_zero() {
                    continue;
                }
                any = true;
                for (c, p) in q.coeffs.iter_mut().zip(&p3[k].coeffs) {
                    *c = *c + a * *p;
                }
            }
            if !any {
                continue;
            }
            let term = p1[i].mul_unchecked(&p2[j]).mul_unchecked(&q);
            out = out.add_unchecked(&term);
        }
    }
    Ok(out)
}

/// `|ξ|² = ξ₁² + ξ₂²`.
fn radius_squared<T: Real>(order: usize) -> TruncatedSeries2<T> {
    let mut s = TruncatedSeries2::zeros(order);
    if order >= 2 {
        s.set(2, 0, Complex::one());
        s.set(0, 2, Complex::one());
    }
    s
}

/// `γ₃(ξ) = k − √(k² − |ξ|²) = −k Σ_{n≥1} C(1/2, n) (−|ξ|²/k²)^n`.
pub fn gamma3_series<T: Real>(k: T, order: usize) -> TruncatedSeries2<T> {
    let mut out = TruncatedSeries2::zeros(order);
    let mut binom = T::one(); // C(1/2, n)
    let half = T::from_f64(0.5);
    let inv_k2 = T::one() / (k * k);
    let mut k_power = k; // k · k^{-2n}
    for n in 1..=(order / 2) {
        binom = binom * (half - T::from_usize(n - 1)) / T::from_usize(n);
        k_power = k_power * inv_k2;
        let sign = if n % 2 == 0 { T::one() } else { -T::one() };
        // coefficient of |ξ|^{2n}
        let g = -(binom * sign * k_power);
        for p in 0..=n {
            let c = g * T::from_f64(crate::multi_index::binomial(n, p));
            out.set(2 * p, 2 * (n - p), Complex::new(c, T::zero()));
        }
    }
    out
}

/// Truncated `exp(±i(χ − c₀γ₃))` with `χ = a|ξ|² + b|ξ|⁴`.
pub fn phase_series<T: Real>(optics: &OpticsConfig, hemisphere: Sign, order: usize) -> TruncatedSeries2<T> {
    let s = radius_squared::<T>(order);
    let s2 = s.mul_unchecked(&s);
    let a = T::from_f64(optics.a());
    let b = T::from_f64(optics.b());
    let c0 = T::from_f64(optics.c0);
    let g3 = gamma3_series(T::from_f64(optics.k), order);
    let sign = T::from_f64(hemisphere.value());
    let mut exponent = TruncatedSeries2::zeros(order);
    for (n, v) in exponent.coeffs.iter_mut().enumerate() {
        let psi = s.coeffs[n].re * a + s2.coeffs[n].re * b - g3.coeffs[n].re * c0;
        *v = Complex::new(T::zero(), sign * psi);
    }
    exponent.exp()
}

/// `exp(i (k₁ξ₁ + k₂ξ₂))`.
pub fn plane_wave_series<T: Real>(order: usize, wave: [T; 2]) -> TruncatedSeries2<T> {
    let mut e = TruncatedSeries2::zeros(order);
    if order >= 1 {
        e.set(1, 0, Complex::new(T::zero(), wave[0]));
        e.set(0, 1, Complex::new(T::zero(), wave[1]));
    }
    e.exp()
}

/// Components of `R⁻¹γ^±(ξ)` as series in ξ.
pub fn rotated_lift_series<T: Real>(
    rotation: &Rotation,
    k: T,
    hemisphere: Sign,
    order: usize,
) -> [TruncatedSeries2<T>; 3] {
    let inv = rotation.inverse().matrix();
    let g3 = gamma3_series(k, order);
    let sign = T::from_f64(hemisphere.value());
    std::array::from_fn(|d| {
        let mut s = g3.scale(Complex::new(sign * T::from_f64(inv[d][2]), T::zero()));
        if order >= 1 {
            s.set(1, 0, Complex::new(T::from_f64(inv[d][0]), T::zero()));
            s.set(0, 1, Complex::new(T::from_f64(inv[d][1]), T::zero()));
        }
        s
    })
}

/// Taylor coefficients to `order` of
/// `h⁽¹⁾_{R,c}(ξ) = e^{−i(c₁,c₂)·ξ} [z e^{iχ}e^{−ic₀γ₃} f̂(R⁻¹γ⁺) + z̄ e^{−iχ}e^{ic₀γ₃} f̂(R⁻¹γ⁻)]`
/// with `z = Q − i`, given the Taylor table `ahat` of f̂ at the origin.
pub fn data_series<T: Real>(
    ahat: &TruncatedSeries3<T>,
    rotation: &Rotation,
    translation: [f64; 3],
    optics: &OpticsConfig,
    order: usize,
) -> Result<TruncatedSeries2<T>, SeriesError> {
    let tol = 1e-12 * optics.c0.abs().max(1.0);
    if (translation[2] - optics.c0).abs() > tol {
        return Err(SeriesError::AxialOffsetMismatch {
            c3: translation[2],
            c0: optics.c0,
        });
    }
    if ahat.order() < order {
        return Err(SeriesError::InsufficientOrder {
            have: ahat.order(),
            need: order,
        });
    }
    let k = T::from_f64(optics.k);
    let q = T::from_f64(optics.q);
    let z = Complex::new(q, -T::one());
    let mut h = TruncatedSeries2::zeros(order);
    for (hemisphere, weight) in [(Sign::Plus, z), (Sign::Minus, z.conj())] {
        let [l1, l2, l3] = rotated_lift_series(rotation, k, hemisphere, order);
        let fhat = compose3in2(ahat, &l1, &l2, &l3)?;
        let phase = phase_series::<T>(optics, hemisphere, order);
        h = h.add_unchecked(&phase.mul_unchecked(&fhat).scale(weight));
    }
    if translation[0] != 0.0 || translation[1] != 0.0 {
        let shift = plane_wave_series(
            order,
            [T::from_f64(-translation[0]), T::from_f64(-translation[1])],
        );
        h = shift.mul_unchecked(&h);
    }
    Ok(h)
}
