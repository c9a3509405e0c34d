//! Double-double arithmetic (~32 significant digits).
//!
//! A value is the unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`. Only the
//! handful of operations needed by the extended-precision echo path are
//! provided: the four arithmetic operations, `sqrt`, `exp`, `ln` and `sin_cos`.
//! Transcendentals are accurate to a few units of 1e-32 relative for the
//! argument ranges used here (|x| up to ~1e4 for `sin_cos`).
#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

#[derive(Clone, Copy, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const PI: Dd = Dd { hi: std::f64::consts::PI, lo: 1.224646799147353207e-16 };
const TWO_PI: Dd = Dd { hi: std::f64::consts::TAU, lo: 2.449293598294706414e-16 };
const HALF_PI: Dd = Dd { hi: std::f64::consts::FRAC_PI_2, lo: 6.123233995736766036e-17 };
// third components of 2π and π/2, for argument reduction beyond Dd accuracy
const TWO_PI_3: f64 = -5.989539619436679332e-33;
const HALF_PI_3: f64 = -1.497384904859169833e-33;
const LN_2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.319046813846299558e-17 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    pub const PI: Dd = PI;

    #[inline]
    pub const fn new(hi: f64, lo: f64) -> Self {
        Dd { hi, lo }
    }

    #[inline]
    pub fn from_sum(a: f64, b: f64) -> Self {
        let (hi, lo) = two_sum(a, b);
        Dd { hi, lo }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.hi == 0.0
    }

    #[inline]
    pub fn sqr(self) -> Self {
        self * self
    }

    /// Multiplies by `2^exp` exactly.
    #[inline]
    pub fn ldexp(self, exp: i32) -> Self {
        let f = 2f64.powi(exp);
        Dd { hi: self.hi * f, lo: self.lo * f }
    }

    /// Rounds to the nearest integer (half away from zero).
    pub fn round(self) -> Self {
        let hi = self.hi.round();
        if hi == self.hi {
            let lo = self.lo.round();
            let (h, l) = quick_two_sum(hi, lo);
            Dd { hi: h, lo: l }
        } else if (hi - self.hi).abs() == 0.5 && self.lo != 0.0 {
            // hi sits exactly on a half-integer; lo decides the direction
            let down = self.hi.floor();
            if self.lo > 0.0 {
                Dd::new(down + 1.0, 0.0)
            } else {
                Dd::new(down, 0.0)
            }
        } else {
            Dd::new(hi, 0.0)
        }
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 { Dd::ZERO } else { Dd::new(f64::NAN, f64::NAN) };
        }
        let q = self.hi.sqrt();
        let (p, e) = two_prod(q, q);
        let r = (self - Dd::new(p, e)).to_f64() / (2.0 * q);
        Dd::from_sum(q, r)
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.7 {
            return Dd::new(f64::INFINITY, 0.0);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        if self.is_zero() {
            return Dd::ONE;
        }
        // x = k ln2 + r, then r is scaled down by 2^-10 so the series converges fast
        let k = (self.hi / LN_2.hi).round();
        let r = (self - LN_2 * k).ldexp(-10);
        // expm1(r) by Taylor series
        let mut term = r;
        let mut sum = r;
        let mut n = 1.0;
        loop {
            n += 1.0;
            term = term * r / n;
            sum += term;
            if term.hi.abs() <= 1e-36 * sum.hi.abs().max(1e-300) {
                break;
            }
        }
        // (1 + y)^2 - 1 = 2y + y^2, kept in expm1 form to avoid cancellation
        for _ in 0..10 {
            sum = sum.ldexp(1) + sum.sqr();
        }
        (sum + Dd::ONE).ldexp(k as i32)
    }

    pub fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 { Dd::new(f64::NEG_INFINITY, 0.0) } else { Dd::new(f64::NAN, f64::NAN) };
        }
        // one Newton step on exp(y) = x doubles the f64 starting accuracy
        let y = Dd::new(self.hi.ln(), 0.0);
        let y = y + self * (-y).exp() - Dd::ONE;
        y + self * (-y).exp() - Dd::ONE
    }

    /// Simultaneous sine and cosine.
    pub fn sin_cos(self) -> (Self, Self) {
        if self.is_zero() {
            return (Dd::ZERO, Dd::ONE);
        }
        let k = (self / TWO_PI).round();
        let r = reduce(self, k.hi, TWO_PI, TWO_PI_3);
        let j = (r / HALF_PI).round();
        let r = reduce(r, j.hi, HALF_PI, HALF_PI_3);
        let (s, c) = sin_cos_taylor(r);
        match (j.to_f64() as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }
}

/// `x − k (c + c3)` with every partial product of the integer `k` kept exactly.
fn reduce(x: Dd, k: f64, c: Dd, c3: f64) -> Dd {
    let (p1, e1) = two_prod(c.hi, k);
    let (p2, e2) = two_prod(c.lo, k);
    x - Dd::new(p1, 0.0) - Dd::new(e1, 0.0) - Dd::new(p2, 0.0) - Dd::from(e2 + c3 * k)
}

/// Taylor series valid for |x| <= pi/4.
fn sin_cos_taylor(x: Dd) -> (Dd, Dd) {
    let x2 = x.sqr();
    let mut sin = x;
    let mut term = x;
    let mut n = 1.0;
    loop {
        term = -(term * x2) / ((n + 1.0) * (n + 2.0));
        n += 2.0;
        sin += term;
        if term.hi.abs() <= 1e-35 {
            break;
        }
    }
    let mut cos = Dd::ONE;
    let mut term = Dd::ONE;
    let mut n = 0.0;
    loop {
        term = -(term * x2) / ((n + 1.0) * (n + 2.0));
        n += 2.0;
        cos += term;
        if term.hi.abs() <= 1e-35 {
            break;
        }
    }
    (sin, cos)
}

impl From<f64> for Dd {
    #[inline]
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }
}

impl From<usize> for Dd {
    #[inline]
    fn from(x: usize) -> Self {
        let hi = x as f64;
        // exact for x < 2^53; the remainder covers larger values
        let lo = (x as i128 - hi as i128) as f64;
        Dd::from_sum(hi, lo)
    }
}

impl fmt::Debug for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dd({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f64(), f)
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: f64) -> Dd {
        let (s1, s2) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s1, s2 + self.lo);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Sub<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: f64) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, b.hi);
        let p2 = p2 + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: f64) -> Dd {
        let (p1, p2) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p1, p2 + self.lo * b);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * q1;
        let q2 = r.hi / b.hi;
        let r = r - b * q2;
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + q3
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn div(self, b: f64) -> Dd {
        self / Dd::from(b)
    }
}

impl AddAssign for Dd {
    #[inline]
    fn add_assign(&mut self, b: Dd) {
        *self = *self + b;
    }
}

impl SubAssign for Dd {
    #[inline]
    fn sub_assign(&mut self, b: Dd) {
        *self = *self - b;
    }
}

impl MulAssign for Dd {
    #[inline]
    fn mul_assign(&mut self, b: Dd) {
        *self = *self * b;
    }
}

/// Complex number over [`Dd`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DdComplex {
    pub re: Dd,
    pub im: Dd,
}

impl DdComplex {
    pub const ZERO: DdComplex = DdComplex { re: Dd::ZERO, im: Dd::ZERO };
    pub const ONE: DdComplex = DdComplex { re: Dd::ONE, im: Dd::ZERO };

    #[inline]
    pub fn new(re: Dd, im: Dd) -> Self {
        DdComplex { re, im }
    }

    /// `exp(-i * phase)`.
    pub fn unit_phase_neg(phase: Dd) -> Self {
        let (s, c) = phase.sin_cos();
        DdComplex { re: c, im: -s }
    }

    #[inline]
    pub fn scale(self, k: Dd) -> Self {
        DdComplex { re: self.re * k, im: self.im * k }
    }

    /// `ln |z|^2` evaluated without forming `|z|^2` when it would underflow.
    pub fn ln_norm_sqr(self) -> f64 {
        let a = self.re.to_f64().abs();
        let b = self.im.to_f64().abs();
        let (big, small) = if a >= b { (a, b) } else { (b, a) };
        if big == 0.0 {
            return f64::NEG_INFINITY;
        }
        let q = small / big;
        2.0 * big.ln() + q.mul_add(q, 0.0).ln_1p()
    }
}

impl Add for DdComplex {
    type Output = DdComplex;
    #[inline]
    fn add(self, b: DdComplex) -> DdComplex {
        DdComplex { re: self.re + b.re, im: self.im + b.im }
    }
}

impl AddAssign for DdComplex {
    #[inline]
    fn add_assign(&mut self, b: DdComplex) {
        self.re += b.re;
        self.im += b.im;
    }
}

impl Mul for DdComplex {
    type Output = DdComplex;
    #[inline]
    fn mul(self, b: DdComplex) -> DdComplex {
        DdComplex { re: self.re * b.re - self.im * b.im, im: self.re * b.im + self.im * b.re }
    }
}

/// Scalar operations shared by `f64` and [`Dd`], so that state construction
/// can run at either precision.
pub trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn abs(self) -> Self;
    fn ldexp(self, exp: i32) -> Self;
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
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn ldexp(self, exp: i32) -> Self {
        self * 2f64.powi(exp)
    }
}

impl Real for Dd {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Dd::from(x)
    }
    #[inline]
    fn to_f64(self) -> f64 {
        Dd::to_f64(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        Dd::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        Dd::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        Dd::ln(self)
    }
    #[inline]
    fn abs(self) -> Self {
        Dd::abs(self)
    }
    #[inline]
    fn ldexp(self, exp: i32) -> Self {
        Dd::ldexp(self, exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference digits computed with mpmath at 50 decimal places.

    /// Parses a plain decimal literal digit by digit in Dd arithmetic.
    fn parse(lit: &str) -> Dd {
        let (neg, body) = match lit.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, lit),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        let mut v = Dd::ZERO;
        for ch in int.chars().chain(frac.chars()) {
            v = v * 10.0 + f64::from(ch.to_digit(10).unwrap());
        }
        let mut scale = Dd::ONE;
        for _ in 0..frac.len() {
            scale = scale * 10.0;
        }
        let v = v / scale;
        if neg {
            -v
        } else {
            v
        }
    }

    #[test]
    fn sqrt_two() {
        let r = Dd::from(2.0).sqrt();
        let reference = parse("1.4142135623730950488016887242096980785696");
        assert!((r - reference).to_f64().abs() < 1e-31, "{r:?}");
    }

    #[test]
    fn product_identities() {
        let third = Dd::ONE / Dd::from(3.0);
        let back = third * 3.0;
        assert!((back - Dd::ONE).to_f64().abs() < 1e-32);
        let x = Dd::from(0.1) + Dd::new(0.0, 1e-20);
        let y = x * x / x;
        assert!((y - x).to_f64().abs() < 1e-32);
    }

    #[test]
    fn exp_ln_roundtrip() {
        for &x in &[-30.5, -1.0, 1e-8, 0.0550194, 0.5, 3.0, 40.0] {
            let v = Dd::from(x);
            let r = v.exp().ln();
            assert!((r - v).to_f64().abs() <= 1e-30 * x.abs().max(1.0), "{x}: {r:?}");
        }
    }

    #[test]
    fn exp_reference_value() {
        // exp(0.0550194) where 0.0550194 is the nearest double
        let e = Dd::from(0.0550194).exp();
        let expected_hi = 1.05656111176224;
        assert!((e.hi - expected_hi).abs() < 1e-14);
        // compare against e^x = sum x^n/n! evaluated independently in Dd
        let x = Dd::from(0.0550194);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..40 {
            term = term * x / (n as f64);
            sum += term;
        }
        assert!((sum - e).to_f64().abs() < 1e-31);
    }

    #[test]
    fn ln_reference_value() {
        // ln(1 - 1/5.0625) = -0.2200618847768016549267341728985966...
        let l = (Dd::ONE - Dd::ONE / Dd::from(5.0625)).ln();
        let reference = parse("-0.2200618847768016549267341728985966");
        assert!((l - reference).to_f64().abs() < 1e-31, "{l:?}");
    }

    #[test]
    fn sin_cos_pythagoras_and_shifts() {
        for &x in &[0.3, 1.0, 2.5, 10.0, 1234.567, -4000.25] {
            let (s, c) = Dd::from(x).sin_cos();
            let one = s * s + c * c;
            assert!((one - Dd::ONE).to_f64().abs() < 1e-30, "{x}");
            assert!((s.to_f64() - x.sin()).abs() < 1e-12);
            assert!((c.to_f64() - x.cos()).abs() < 1e-12);
        }
        // sin(pi) in Dd vanishes to the residual of the Dd representation of pi
        let (s, _) = PI.sin_cos();
        assert!(s.to_f64().abs() < 1e-31);
    }

    #[test]
    fn sin_cos_reference_digits() {
        // mpmath: sin(1234.567) = 0.07883098473740241080772282185807683
        let (s, c) = Dd::from(1234.567).sin_cos();
        let s_ref = parse("0.07883098473740241080772282185807683");
        let c_ref = parse("-0.9968879956370883234251738095198958");
        assert!((s - s_ref).to_f64().abs() < 1e-30, "{s:?}");
        assert!((c - c_ref).to_f64().abs() < 1e-30, "{c:?}");
    }

    #[test]
    fn round_half_integers() {
        assert_eq!(Dd::from(2.5).round().to_f64(), 3.0);
        assert_eq!(Dd::new(2.5, -1e-20).round().to_f64(), 2.0);
        assert_eq!(Dd::new(-1.2, 0.0).round().to_f64(), -1.0);
    }

    #[test]
    fn ln_norm_sqr_tiny_values() {
        let z = DdComplex::new(Dd::from(3e-200), Dd::from(4e-200));
        let expected = 2.0 * (5e-200f64).ln();
        assert!((z.ln_norm_sqr() - expected).abs() < 1e-12);
        assert_eq!(DdComplex::ZERO.ln_norm_sqr(), f64::NEG_INFINITY);
    }
}
