//! Configurable-precision real arithmetic.
//!
//! Every numerical routine in the crate is generic over [`Real`]. Two
//! implementations exist: native `f64` and [`DoubleDouble`], an unevaluated
//! sum of two `f64` values carrying roughly 106 mantissa bits (31 significant
//! decimal digits). A [`PrecisionContext`] selects one of them for a whole run.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalarError {
    #[error("precision of {0} digits is below the supported minimum of 10")]
    TooFewDigits(u32),
    #[error("precision of {0} digits exceeds the supported maximum of 31")]
    TooManyDigits(u32),
    #[error("cannot parse {0:?} as a decimal number")]
    Parse(String),
}

/// Real-number arithmetic used by the integrators.
pub trait Real:
    Copy
    + fmt::Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
{
    /// Significant decimal digits the representation guarantees.
    const DIGITS: u32;

    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
    /// Unit roundoff of the representation.
    fn epsilon() -> Self;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn is_finite(self) -> bool;

    fn zero() -> Self {
        Self::of(0.0)
    }

    fn one() -> Self {
        Self::of(1.0)
    }

    fn recip(self) -> Self {
        Self::one() / self
    }

    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { self.recip() } else { self };
        let mut e = n.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// Decimal scientific notation with `digits` significant digits.
    fn to_sci(self, digits: usize) -> String;

    fn parse_sci(s: &str) -> Result<Self, ScalarError>;
}

impl Real for f64 {
    const DIGITS: u32 = 16;

    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn epsilon() -> Self {
        f64::EPSILON
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }

    fn to_sci(self, digits: usize) -> String {
        format!("{:.*e}", digits.max(1) - 1, self)
    }

    fn parse_sci(s: &str) -> Result<Self, ScalarError> {
        s.trim().parse::<f64>().map_err(|_| ScalarError::Parse(s.to_string()))
    }
}

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

/// Double-double number `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    pub const PI: DoubleDouble = DoubleDouble {
        hi: std::f64::consts::PI,
        lo: 1.224_646_799_147_353_2e-16,
    };
    const FRAC_PI_2: DoubleDouble = DoubleDouble {
        hi: std::f64::consts::FRAC_PI_2,
        lo: 6.123_233_995_736_766e-17,
    };

    pub const fn from_parts(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Self { hi, lo }
    }

    fn floor(self) -> Self {
        let hi = self.hi.floor();
        if hi == self.hi {
            let (hi, lo) = quick_two_sum(hi, self.lo.floor());
            Self { hi, lo }
        } else {
            Self { hi, lo: 0.0 }
        }
    }

    fn round(self) -> Self {
        (self + 0.5).floor()
    }

    /// Taylor series of sin and cos for |x| <= pi/4.
    fn sin_cos_reduced(x: Self) -> (Self, Self) {
        let x2 = x * x;
        let tiny = 1e-34;
        let mut term = x;
        let mut sin = x;
        let mut k = 1.0;
        while term.hi.abs() > tiny {
            term = -term * x2 / ((2.0 * k) * (2.0 * k + 1.0));
            sin += term;
            k += 1.0;
        }
        let mut term = Self::of(1.0);
        let mut cos = term;
        let mut k = 1.0;
        while term.hi.abs() > tiny {
            term = -term * x2 / ((2.0 * k - 1.0) * (2.0 * k));
            cos += term;
            k += 1.0;
        }
        (sin, cos)
    }

    fn sin_cos(self) -> (Self, Self) {
        if !self.hi.is_finite() {
            return (Self::of(f64::NAN), Self::of(f64::NAN));
        }
        let quadrant = (self / Self::FRAC_PI_2).round();
        let r = self - quadrant * Self::FRAC_PI_2;
        let (s, c) = Self::sin_cos_reduced(r);
        match (quadrant.hi.rem_euclid(4.0)) as i64 {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }

    fn pow10(e: i32) -> Self {
        Self::of(10.0).powi(e)
    }
}

impl fmt::Debug for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sci(32))
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = f.precision().map(|p| p + 1).unwrap_or(Self::DIGITS as usize);
        write!(f, "{}", self.to_sci(digits))
    }
}

impl FromStr for DoubleDouble {
    type Err = ScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_sci(s)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::of(q3)
    }
}

impl Add<f64> for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, b: f64) -> Self {
        let (s, e) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        Self { hi, lo }
    }
}

impl Sub<f64> for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, b: f64) -> Self {
        self + (-b)
    }
}

impl Mul<f64> for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, b: f64) -> Self {
        self.mul_f64(b)
    }
}

impl Div<f64> for DoubleDouble {
    type Output = Self;
    fn div(self, b: f64) -> Self {
        let q1 = self.hi / b;
        let (p, e) = two_prod(q1, b);
        let (s, t) = two_sum(self.hi, -p);
        let q2 = (s + (t - e + self.lo)) / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo }
    }
}

macro_rules! assign_ops {
    ($($trait:ident $method:ident $op:tt),*) => {
        $(impl $trait for DoubleDouble {
            #[inline]
            fn $method(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        })*
    };
}

assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /);

impl Sum for DoubleDouble {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

impl Real for DoubleDouble {
    const DIGITS: u32 = 31;

    #[inline]
    fn of(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn epsilon() -> Self {
        // 2^-104
        Self::of(4.930_380_657_631_324e-32)
    }

    #[inline]
    fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 {
                Self::default()
            } else {
                Self::of(f64::NAN)
            };
        }
        let x = 1.0 / self.hi.sqrt();
        let ax = self.hi * x;
        let (p, e) = two_prod(ax, ax);
        let corr = ((self - Self { hi: p, lo: e }).hi) * (x * 0.5);
        let y = Self::of(ax) + corr;
        // one Newton step in full precision
        y + (self - y * y) / (y * 2.0)
    }

    fn sin(self) -> Self {
        self.sin_cos().0
    }

    fn cos(self) -> Self {
        self.sin_cos().1
    }

    #[inline]
    fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    fn to_sci(self, digits: usize) -> String {
        let digits = digits.max(1);
        if !self.is_finite() {
            return format!("{}", self.hi);
        }
        if self.hi == 0.0 {
            return format!("{:.*e}", digits - 1, 0.0);
        }
        let negative = self.hi < 0.0;
        let x = self.abs();
        let mut exp10 = x.hi.log10().floor() as i32;
        let mut y = x / Self::pow10(exp10);
        if y.hi >= 10.0 {
            y = y / 10.0;
            exp10 += 1;
        } else if y.hi < 1.0 {
            y = y * 10.0;
            exp10 -= 1;
        }
        // one guard digit for rounding
        let mut ds: Vec<u8> = Vec::with_capacity(digits + 1);
        for _ in 0..=digits {
            let d = y.hi.floor().clamp(0.0, 9.0);
            ds.push(d as u8);
            y = (y - d) * 10.0;
            if y.hi < 0.0 {
                y = Self::default();
            }
        }
        let guard = ds.pop().unwrap_or(0);
        if guard >= 5 {
            let mut i = ds.len();
            loop {
                if i == 0 {
                    ds.insert(0, 1);
                    ds.pop();
                    exp10 += 1;
                    break;
                }
                i -= 1;
                if ds[i] == 9 {
                    ds[i] = 0;
                } else {
                    ds[i] += 1;
                    break;
                }
            }
        }
        let mut out = String::with_capacity(digits + 8);
        if negative {
            out.push('-');
        }
        out.push((b'0' + ds[0]) as char);
        if ds.len() > 1 {
            out.push('.');
            for d in &ds[1..] {
                out.push((b'0' + d) as char);
            }
        }
        out.push('e');
        out.push_str(&exp10.to_string());
        out
    }

    fn parse_sci(s: &str) -> Result<Self, ScalarError> {
        let err = || ScalarError::Parse(s.to_string());
        let t = s.trim();
        let (negative, body) = match t.as_bytes().first() {
            Some(b'-') => (true, &t[1..]),
            Some(b'+') => (false, &t[1..]),
            _ => (false, t),
        };
        let (mantissa, exponent) = match body.find(['e', 'E']) {
            Some(i) => (&body[..i], body[i + 1..].parse::<i32>().map_err(|_| err())?),
            None => (body, 0),
        };
        if mantissa.is_empty() {
            return Err(err());
        }
        let mut acc = Self::default();
        let mut frac_digits = 0i32;
        let mut seen_dot = false;
        let mut any_digit = false;
        for c in mantissa.chars() {
            match c {
                '0'..='9' => {
                    acc = acc * 10.0 + f64::from(c as u8 - b'0');
                    any_digit = true;
                    if seen_dot {
                        frac_digits += 1;
                    }
                }
                '.' if !seen_dot => seen_dot = true,
                _ => return Err(err()),
            }
        }
        if !any_digit {
            return Err(err());
        }
        let e = exponent - frac_digits;
        let value = if e >= 0 {
            acc * Self::pow10(e)
        } else {
            acc / Self::pow10(-e)
        };
        Ok(if negative { -value } else { value })
    }
}

/// Which concrete arithmetic a precision context runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arithmetic {
    Double,
    DoubleDouble,
}

/// Per-run precision setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrecisionContext {
    digits: u32,
}

impl PrecisionContext {
    pub const MIN_DIGITS: u32 = 10;
    pub const MAX_DIGITS: u32 = DoubleDouble::DIGITS;

    pub fn new(digits: u32) -> Result<Self, ScalarError> {
        if digits < Self::MIN_DIGITS {
            Err(ScalarError::TooFewDigits(digits))
        } else if digits > Self::MAX_DIGITS {
            Err(ScalarError::TooManyDigits(digits))
        } else {
            Ok(Self { digits })
        }
    }

    pub fn double() -> Self {
        Self { digits: 16 }
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn arithmetic(&self) -> Arithmetic {
        if self.digits <= <f64 as Real>::DIGITS {
            Arithmetic::Double
        } else {
            Arithmetic::DoubleDouble
        }
    }

    pub fn is_extended(&self) -> bool {
        self.arithmetic() == Arithmetic::DoubleDouble
    }

    /// Default Newton tolerance for runs in this context.
    pub fn default_tol(&self) -> f64 {
        match self.arithmetic() {
            Arithmetic::Double => 1e-12,
            Arithmetic::DoubleDouble => 1e-17,
        }
    }

    /// Serializes `x` with this context's number of significant digits.
    pub fn format<S: Real>(&self, x: S) -> String {
        x.to_sci(self.digits as usize)
    }
}

impl Default for PrecisionContext {
    fn default() -> Self {
        Self::double()
    }
}

/// Builds a precision context carrying at least `digits` significant digits.
pub fn with_precision(digits: u32) -> Result<PrecisionContext, ScalarError> {
    PrecisionContext::new(digits)
}

/// Converts a slice between scalar types through `f64`-exact parts.
pub fn convert_slice<A: Real, B: Real>(xs: &[A]) -> Vec<B> {
    xs.iter().map(|&x| convert::<A, B>(x)).collect()
}

/// Converts between scalar types; exact from `f64` upward, rounding downward.
pub fn convert<A: Real, B: Real>(x: A) -> B {
    let hi = x.as_f64();
    let lo = (x - A::of(hi)).as_f64();
    B::of(hi) + B::of(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    type Dd = DoubleDouble;

    fn rel(a: Dd, b: Dd) -> f64 {
        ((a - b) / b).abs().as_f64()
    }

    #[test]
    fn digits_below_ten_rejected() {
        assert_eq!(with_precision(9), Err(ScalarError::TooFewDigits(9)));
        assert!(with_precision(32).is_err());
    }

    #[test]
    fn sixteen_digits_is_native_double() {
        let ctx = with_precision(16).unwrap();
        assert_eq!(ctx.arithmetic(), Arithmetic::Double);
        assert_eq!(ctx.default_tol(), 1e-12);
    }

    #[test]
    fn eighteen_digits_is_extended() {
        let ctx = with_precision(18).unwrap();
        assert_eq!(ctx.arithmetic(), Arithmetic::DoubleDouble);
        const { assert!(Dd::DIGITS >= 18) };
        assert_eq!(ctx.default_tol(), 1e-17);
    }

    #[test]
    fn third_round_trips_at_eighteen_digits() {
        let ctx = with_precision(18).unwrap();
        let third = Dd::one() / Dd::of(3.0);
        let text = ctx.format(third);
        assert_eq!(text, "3.33333333333333333e-1");
        let back: Dd = Dd::parse_sci(&text).unwrap();
        assert_eq!(ctx.format(back), text);
        assert!(rel(back, third) < 1e-18);
    }

    #[test]
    fn division_is_double_double_accurate() {
        let third = Dd::one() / Dd::of(3.0);
        let err = (third * 3.0 - 1.0).abs().as_f64();
        assert!(err < 1e-31, "{err}");
        let x = Dd::of(7.0) / Dd::of(3.0);
        assert!(((x * Dd::of(3.0)) - 7.0).abs().as_f64() < 1e-30);
    }

    #[test]
    fn sqrt_is_accurate() {
        for v in [2.0, 0.09, 1.7e5, 3.3e-7] {
            let x = Dd::of(v);
            let r = x.sqrt();
            assert!(rel(r * r, x) < 1e-31, "{v}");
        }
    }

    #[test]
    fn trig_identity_and_reference_values() {
        for v in [0.5, -1.3, 2.9, 10.0, 100.25] {
            let x = Dd::of(v);
            let (s, c) = (x.sin(), x.cos());
            assert!((s * s + c * c - 1.0).abs().as_f64() < 1e-30);
            assert!((s.as_f64() - v.sin()).abs() < 1e-15);
        }
        // sin(pi/6) = 1/2
        let s = (Dd::PI / 6.0).sin();
        assert!((s - 0.5).abs().as_f64() < 1e-31);
    }

    #[test]
    fn formatting_matches_native_for_doubles() {
        let ctx = PrecisionContext::double();
        assert_eq!(ctx.format(0.1f64), "1.000000000000000e-1");
        assert_eq!(Dd::of(0.125).to_sci(4), "1.250e-1");
        assert_eq!(Dd::of(-2.5e10).to_sci(3), "-2.50e10");
        assert_eq!(Dd::of(9.9999).to_sci(3), "1.00e1");
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(Dd::parse_sci("abc").is_err());
        assert!(Dd::parse_sci("1.2.3").is_err());
        assert!(f64::parse_sci("x1").is_err());
        assert_eq!(Dd::parse_sci("-2.5e-3").unwrap().as_f64(), -2.5e-3);
    }

    #[test]
    fn repeated_evaluation_is_bit_identical() {
        let f = |x: Dd| (x * x + Dd::of(3.0)).sqrt() / (x - 0.25) + x.sin();
        let a = f(Dd::of(1.7));
        let b = f(Dd::of(1.7));
        assert_eq!(a.hi(), b.hi());
        assert_eq!(a.lo(), b.lo());
    }

    #[test]
    fn comparisons_use_both_parts() {
        let a = Dd::new(1.0, 1e-20);
        let b = Dd::of(1.0);
        assert!(a > b);
        assert_eq!((b - a).abs(), a - b);
    }
}
