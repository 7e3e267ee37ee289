//! Double-double arithmetic (about 106 significand bits).
//!
//! Used wherever a residual has to be resolved below the `f64` rounding
//! floor, e.g. measuring truncation orders of operator series at tiny
//! parameter values. The transcendental functions follow the classic
//! QD-library reductions: `exp` by ln 2 and a power-of-two halving, `ln` by
//! one Newton step on `exp`, `sin`/`cos` by reduction modulo pi/2 and Taylor
//! sums.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Default, PartialEq)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

// hi/lo splits of the constants, written out in full
#[allow(clippy::approx_constant, clippy::excessive_precision)]
impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    pub const PI: Dd = Dd {
        hi: 3.141_592_653_589_793_116e0,
        lo: 1.224_646_799_147_353_207e-16,
    };
    pub const TWO_PI: Dd = Dd {
        hi: 6.283_185_307_179_586_232e0,
        lo: 2.449_293_598_294_706_414e-16,
    };
    pub const FRAC_PI_2: Dd = Dd {
        hi: 1.570_796_326_794_896_558e0,
        lo: 6.123_233_995_736_766_036e-17,
    };
    pub const LN_2: Dd = Dd {
        hi: 6.931_471_805_599_452_862e-1,
        lo: 2.319_046_813_846_299_558e-17,
    };
    /// Relative rounding unit, 2^-104.
    pub const EPSILON: f64 = 4.930_380_657_631_324e-32;

    pub const fn from_parts(hi: f64, lo: f64) -> Self {
        Dd { hi, lo }
    }

    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    fn mul_f64(self, b: f64) -> Self {
        let (p, mut e) = two_prod(self.hi, b);
        e += self.lo * b;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    fn square(self) -> Self {
        self * self
    }

    pub fn recip(self) -> Self {
        Dd::ONE / self
    }

    pub fn round(self) -> Self {
        let hi = self.hi.round();
        if hi == self.hi {
            // hi already integral; round the tail.
            let lo = self.lo.round();
            let (hi, lo) = quick_two_sum(hi, lo);
            Dd { hi, lo }
        } else if (hi - self.hi).abs() == 0.5 && self.lo != 0.0 {
            // tie broken by the tail
            if self.lo > 0.0 && hi < self.hi {
                Dd::new(hi + 1.0)
            } else if self.lo < 0.0 && hi > self.hi {
                Dd::new(hi - 1.0)
            } else {
                Dd::new(hi)
            }
        } else {
            Dd::new(hi)
        }
    }

    pub fn sqrt(self) -> Self {
        if self.hi == 0.0 {
            return Dd::ZERO;
        }
        if self.hi < 0.0 {
            return Dd::new(f64::NAN);
        }
        let x = 1.0 / self.hi.sqrt();
        let ax = self.hi * x;
        let (s, e) = two_sum(ax, (self - Dd::new(ax).square()).hi * (x * 0.5));
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Dd::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        if self.hi == 0.0 && self.lo == 0.0 {
            return Dd::ONE;
        }
        const HALVINGS: i32 = 9;
        let m = (self.hi / Dd::LN_2.hi + 0.5).floor();
        let r = (self - Dd::LN_2.mul_f64(m)).ldexp(-HALVINGS);
        // expm1 on the reduced argument, |r| < 2^-10
        let mut term = r;
        let mut sum = r;
        for n in 2..=12 {
            term = term * r / Dd::new(n as f64);
            sum += term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..HALVINGS {
            sum = sum.mul_f64(2.0) + sum.square();
        }
        (sum + Dd::ONE).ldexp(m as i32)
    }

    pub fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::new(f64::NAN);
        }
        if self.hi == 1.0 && self.lo == 0.0 {
            return Dd::ZERO;
        }
        let x = Dd::new(self.hi.ln());
        x + self * (-x).exp() - Dd::ONE
    }

    fn sin_taylor(x: Dd) -> Dd {
        let x2 = x.square();
        let mut term = x;
        let mut sum = x;
        let mut k = 1.0;
        for _ in 0..20 {
            term = -(term * x2) / Dd::new((k + 1.0) * (k + 2.0));
            k += 2.0;
            sum += term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        sum
    }

    fn cos_taylor(x: Dd) -> Dd {
        let x2 = x.square();
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        let mut k = 0.0;
        for _ in 0..20 {
            term = -(term * x2) / Dd::new((k + 1.0) * (k + 2.0));
            k += 2.0;
            sum += term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        sum
    }

    /// Returns `(quadrant mod 4, reduced argument in [-pi/4, pi/4])`.
    fn reduce_quadrant(self) -> (i64, Dd) {
        let z = (self / Dd::TWO_PI).round();
        let r = self - Dd::TWO_PI * z;
        let j = (r.hi / Dd::FRAC_PI_2.hi).round();
        let t = r - Dd::FRAC_PI_2.mul_f64(j);
        ((j as i64).rem_euclid(4), t)
    }

    pub fn sin(self) -> Self {
        if self.hi == 0.0 {
            return Dd::ZERO;
        }
        let (q, t) = self.reduce_quadrant();
        match q {
            0 => Dd::sin_taylor(t),
            1 => Dd::cos_taylor(t),
            2 => -Dd::sin_taylor(t),
            _ => -Dd::cos_taylor(t),
        }
    }

    pub fn cos(self) -> Self {
        if self.hi == 0.0 {
            return Dd::ONE;
        }
        let (q, t) = self.reduce_quadrant();
        match q {
            0 => Dd::cos_taylor(t),
            1 => -Dd::sin_taylor(t),
            2 => -Dd::cos_taylor(t),
            _ => Dd::sin_taylor(t),
        }
    }

    pub fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dd::ONE;
        }
        let mut base = self;
        let mut e = n.unsigned_abs();
        let mut acc = Dd::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base = base.square();
            e >>= 1;
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::new(x)
    }
}

impl fmt::Debug for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dd({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            o => o,
        }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let e = e + t;
        let (s, e) = quick_two_sum(s, e);
        let e = e + f;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

macro_rules! assign_op {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr for Dd {
            fn $m(&mut self, rhs: Dd) {
                *self = *self $op rhs;
            }
        }
    };
}
assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);
