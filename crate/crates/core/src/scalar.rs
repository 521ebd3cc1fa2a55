//! Scalar abstraction over the two arithmetic modes.
//!
//! * [`Rat`] (arbitrary-precision rationals) — the exact mode. Mandatory
//!   for identity checks; all dyadic coefficients (powers of two) stay
//!   exact, and divisions by arbitrary rationals stay exact too.
//! * `f64` — the plain float mode.
//! * [`WideFloat`] — binary floating point with an `i64` exponent. The
//!   orbit pipelines manipulate coordinates as small as `2^-20000`, far
//!   below the `f64` underflow threshold; `WideFloat` keeps the usual
//!   53-bit mantissa but never under- or overflows at these scales.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational, the exact arithmetic mode.
pub type Rat = num_rational::BigRational;

/// Common scalar interface for exact-rational and floating-point modes.
pub trait Scalar:
    Clone
    + fmt::Debug
    + fmt::Display
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// True when arithmetic is exact (no rounding).
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn from_i64(n: i64) -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    /// Exact power of two, `2^e` (e may be negative).
    fn pow2(e: i64) -> Self;
    /// Exact conversion from an `f64` (every finite `f64` is dyadic).
    fn from_f64(x: f64) -> Self;
    fn from_rat(r: &Rat) -> Self;
    fn abs(&self) -> Self;
    fn to_f64(&self) -> f64;
    /// Representation size in bits; 0 for fixed-size scalars. Used by the
    /// exact-mode growth guard.
    fn bit_size(&self) -> usize {
        0
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn from_i64(n: i64) -> Self {
        n as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn pow2(e: i64) -> Self {
        (e as f64).exp2()
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_rat(r: &Rat) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for Rat {
    const EXACT: bool = true;

    fn zero() -> Self {
        <Rat as Zero>::zero()
    }
    fn one() -> Self {
        <Rat as One>::one()
    }
    fn is_zero(&self) -> bool {
        <Rat as Zero>::is_zero(self)
    }
    fn from_i64(n: i64) -> Self {
        Rat::from_integer(BigInt::from(n))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Rat::new(BigInt::from(num), BigInt::from(den))
    }
    fn pow2(e: i64) -> Self {
        let one = BigInt::one();
        if e >= 0 {
            Rat::from_integer(one << e as usize)
        } else {
            Rat::new(one.clone(), one << (-e) as usize)
        }
    }
    fn from_f64(x: f64) -> Self {
        Rat::from_float(x).expect("finite f64")
    }
    fn from_rat(r: &Rat) -> Self {
        r.clone()
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn bit_size(&self) -> usize {
        (self.numer().bits() + self.denom().bits()) as usize
    }
}

/// Binary float with an `i64` exponent: value = `m * 2^e` with
/// `|m| ∈ [1, 2)` (or `m == 0`). Same 53-bit precision as `f64`, but the
/// exponent range covers the `2^±10^18` scales an orbit truncated at a few
/// tens of thousands of coordinates produces.
#[derive(Clone, Copy, Debug)]
pub struct WideFloat {
    m: f64,
    e: i64,
}

const EXP_MASK: u64 = 0x7ff << 52;
const BIAS: i64 = 1023;
/// Beyond this exponent gap the smaller addend is below one ulp of the
/// larger and cannot affect the 53-bit sum.
const ALIGN_LIMIT: i64 = 128;

fn exp2i(e: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + BIAS) as u64) << 52)
}

impl WideFloat {
    pub const ZERO: WideFloat = WideFloat { m: 0.0, e: 0 };

    /// Normalizes `m * 2^e` so that `|m| ∈ [1, 2)`.
    pub fn new(m: f64, e: i64) -> Self {
        if m == 0.0 {
            return Self::ZERO;
        }
        assert!(m.is_finite(), "non-finite mantissa");
        let bits = m.to_bits();
        let biased = ((bits & EXP_MASK) >> 52) as i64;
        if biased == 0 {
            // Subnormal input: rescale into the normal range first.
            return Self::new(m * exp2i(200), e - 200);
        }
        let shift = biased - BIAS;
        let mant = f64::from_bits((bits & !EXP_MASK) | ((BIAS as u64) << 52));
        WideFloat { m: mant, e: e + shift }
    }

    pub fn is_zero(&self) -> bool {
        self.m == 0.0
    }

    /// Base-2 logarithm of the absolute value (`None` for zero).
    pub fn log2_abs(&self) -> Option<f64> {
        if self.is_zero() {
            None
        } else {
            Some(self.e as f64 + self.m.abs().log2())
        }
    }

    fn add_impl(self, rhs: Self) -> Self {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.e >= rhs.e { (self, rhs) } else { (rhs, self) };
        let d = big.e - small.e;
        if d > ALIGN_LIMIT {
            return big;
        }
        Self::new(big.m + small.m * exp2i(-d), big.e)
    }
}

impl Add for WideFloat {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.add_impl(rhs)
    }
}

impl Sub for WideFloat {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.add_impl(-rhs)
    }
}

impl Mul for WideFloat {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            return Self::ZERO;
        }
        Self::new(self.m * rhs.m, self.e + rhs.e)
    }
}

impl Div for WideFloat {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        assert!(!rhs.is_zero(), "division by zero");
        if self.is_zero() {
            return Self::ZERO;
        }
        Self::new(self.m / rhs.m, self.e - rhs.e)
    }
}

impl Neg for WideFloat {
    type Output = Self;
    fn neg(self) -> Self {
        WideFloat { m: -self.m, e: self.e }
    }
}

impl PartialEq for WideFloat {
    fn eq(&self, other: &Self) -> bool {
        (*self - *other).is_zero()
    }
}

impl PartialOrd for WideFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let d = *self - *other;
        d.m.partial_cmp(&0.0)
    }
}

impl fmt::Display for WideFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            write!(f, "0")
        } else if (-900..900).contains(&self.e) {
            write!(f, "{}", self.to_f64())
        } else {
            write!(f, "{}*2^{}", self.m, self.e)
        }
    }
}

impl Scalar for WideFloat {
    const EXACT: bool = false;

    fn zero() -> Self {
        Self::ZERO
    }
    fn one() -> Self {
        WideFloat { m: 1.0, e: 0 }
    }
    fn is_zero(&self) -> bool {
        WideFloat::is_zero(self)
    }
    fn from_i64(n: i64) -> Self {
        Self::new(n as f64, 0)
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }
    fn pow2(e: i64) -> Self {
        WideFloat { m: 1.0, e }
    }
    fn from_f64(x: f64) -> Self {
        Self::new(x, 0)
    }
    fn from_rat(r: &Rat) -> Self {
        // Split off the power-of-two scale so huge exponents survive the
        // conversion through f64.
        let (n_bits, d_bits) = (r.numer().bits() as i64, r.denom().bits() as i64);
        let shift = n_bits - d_bits;
        let scaled = if shift >= 0 {
            Rat::new(r.numer().clone(), r.denom().clone() << shift as usize)
        } else {
            Rat::new(r.numer().clone() << (-shift) as usize, r.denom().clone())
        };
        Self::new(ToPrimitive::to_f64(&scaled).unwrap_or(0.0), shift)
    }
    fn abs(&self) -> Self {
        WideFloat { m: self.m.abs(), e: self.e }
    }
    fn to_f64(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else if self.e > 1023 {
            f64::INFINITY * self.m.signum()
        } else if self.e < -1060 {
            0.0
        } else {
            // Splitting the scale keeps values just above the subnormal
            // threshold representable.
            self.m * exp2i(self.e.clamp(-600, 600)) * exp2i(self.e - self.e.clamp(-600, 600))
        }
    }
}

/// Writes a rational as `(numerator, log2_denominator)` with the smallest
/// non-negative `log2_denominator`, or `None` when the value is not dyadic.
/// This is the exact-coefficient export form for operators whose entries
/// are signed powers of two times integers.
pub fn to_dyadic_parts(r: &Rat) -> Option<(BigInt, u32)> {
    let den = r.denom();
    // power of two iff exactly one bit set
    if den.magnitude().count_ones() != 1 {
        return None;
    }
    Some((r.numer().clone(), (den.bits() - 1) as u32))
}
