//! Scalar abstraction for the forward path.
//!
//! Everything that evaluates the data function (series arithmetic, the
//! Gaussian-mixture transform, the pointwise Born model) is generic over
//! [`Real`]. Production code runs in `f64`; convergence studies that need
//! more than sixteen digits of dynamic range instantiate the same code with
//! the double-double type [`Dd`].

use std::fmt::Debug;
use std::ops::Neg;

use num_complex::Complex;
use num_traits::{Num, One, Zero};
use twofloat::TwoFloat;

/// Double-double scalar (about 32 significant digits).
///
/// Addition, subtraction and multiplication are delegated to `twofloat`;
/// its quotient is only double-accurate, so division is refined here.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Dd(pub TwoFloat);

impl Dd {
    pub fn hi(self) -> f64 {
        self.0.hi()
    }

    pub fn lo(self) -> f64 {
        self.0.lo()
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd(TwoFloat::from(x))
    }
}

macro_rules! dd_binop {
    ($tr:ident, $method:ident, $op:tt) => {
        impl std::ops::$tr for Dd {
            type Output = Dd;
            #[inline]
            fn $method(self, rhs: Dd) -> Dd {
                Dd(self.0 $op rhs.0)
            }
        }
    };
}
dd_binop!(Add, add, +);
dd_binop!(Sub, sub, -);
dd_binop!(Mul, mul, *);

impl std::ops::Div for Dd {
    type Output = Dd;
    fn div(self, rhs: Dd) -> Dd {
        // long division: three f64 quotient digits
        let b = rhs.0;
        let q1 = self.0.hi() / b.hi();
        let r = self.0 - b * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b * q2;
        let q3 = r.hi() / b.hi();
        Dd(TwoFloat::new_add(q1, q2) + q3)
    }
}

impl std::ops::Rem for Dd {
    type Output = Dd;
    fn rem(self, rhs: Dd) -> Dd {
        let q = (self / rhs).0;
        let t = TwoFloat::from(q.hi().trunc()) + q.lo().trunc();
        Dd(self.0 - rhs.0 * t)
    }
}

impl std::ops::Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd(-self.0)
    }
}

impl Zero for Dd {
    fn zero() -> Self {
        Dd(TwoFloat::from(0.0))
    }
    fn is_zero(&self) -> bool {
        self.0.hi() == 0.0 && self.0.lo() == 0.0
    }
}

impl One for Dd {
    fn one() -> Self {
        Dd(TwoFloat::from(1.0))
    }
}

impl Num for Dd {
    type FromStrRadixErr = std::num::ParseFloatError;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        debug_assert_eq!(radix, 10);
        s.parse::<f64>().map(Dd::from)
    }
}

pub trait Real:
    Copy + Debug + Send + Sync + PartialOrd + Num + Neg<Output = Self> + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn sin_cos(self) -> (Self, Self);

    fn abs(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

// The transcendental functions shipped with `twofloat` are only accurate to
// double precision, so the ones below are evaluated with its (exact)
// arithmetic: argument halving, a short Taylor series and repeated squaring.
const DD_REDUCED: f64 = 1.0 / 1024.0;
const DD_TERMS: usize = 12;

impl Real for Dd {
    fn from_f64(x: f64) -> Self {
        Dd::from(x)
    }

    fn to_f64(self) -> f64 {
        self.hi() + self.lo()
    }

    fn sqrt(self) -> Self {
        let hi = self.hi();
        if hi <= 0.0 {
            return Dd::zero();
        }
        let y = Dd::from(hi.sqrt());
        // one Newton step doubles the number of correct digits
        y + (self - y * y) / (y + y)
    }

    fn exp(self) -> Self {
        if self.hi() < -745.0 {
            return Dd::zero();
        }
        let half = Dd::from(0.5);
        let mut r = self;
        let mut halvings = 0;
        while r.hi().abs() > DD_REDUCED {
            r = r * half;
            halvings += 1;
        }
        let mut term = Dd::one();
        let mut sum = term;
        for n in 1..=DD_TERMS {
            term = term * r / Dd::from(n as f64);
            sum = sum + term;
        }
        for _ in 0..halvings {
            sum = sum * sum;
        }
        sum
    }

    fn sin_cos(self) -> (Self, Self) {
        let tau = Dd(twofloat::consts::TAU);
        let turns = (self.hi() / tau.hi()).round();
        let mut r = self - tau * Dd::from(turns);
        let half = Dd::from(0.5);
        let mut halvings = 0;
        while r.hi().abs() > DD_REDUCED {
            r = r * half;
            halvings += 1;
        }
        let r2 = r * r;
        // sin r = r - r^3/3! + ..., cos r = 1 - r^2/2! + ...
        let mut s_term = r;
        let mut sin = r;
        let mut c_term = Dd::one();
        let mut cos = c_term;
        for n in 1..=DD_TERMS / 2 {
            let n = n as f64;
            s_term = -(s_term * r2 / Dd::from((2.0 * n) * (2.0 * n + 1.0)));
            c_term = -(c_term * r2 / Dd::from((2.0 * n - 1.0) * (2.0 * n)));
            sin = sin + s_term;
            cos = cos + c_term;
        }
        for _ in 0..halvings {
            let s2 = sin * cos;
            let c2 = cos * cos - sin * sin;
            sin = s2 + s2;
            cos = c2;
        }
        (sin, cos)
    }
}

/// `exp` of a complex argument.
pub fn cexp<T: Real>(z: Complex<T>) -> Complex<T> {
    let m = z.re.exp();
    let (s, c) = z.im.sin_cos();
    Complex::new(m * c, m * s)
}

/// Unit phasor `exp(i phase)`.
pub fn cis<T: Real>(phase: T) -> Complex<T> {
    let (s, c) = phase.sin_cos();
    Complex::new(c, s)
}

pub fn cabs<T: Real>(z: Complex<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}

pub fn cmul_real<T: Real>(z: Complex<T>, r: T) -> Complex<T> {
    Complex::new(z.re * r, z.im * r)
}

pub fn to_f64_complex<T: Real>(z: Complex<T>) -> Complex<f64> {
    Complex::new(z.re.to_f64(), z.im.to_f64())
}

pub fn from_f64_complex<T: Real>(z: Complex<f64>) -> Complex<T> {
    Complex::new(T::from_f64(z.re), T::from_f64(z.im))
}
