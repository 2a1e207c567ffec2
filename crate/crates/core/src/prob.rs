//! Exact probability arithmetic.
//!
//! All weights inside the engine are arbitrary-precision rationals; floats
//! only appear when values cross the public boundary (reports, CSV output,
//! sampling).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub type Prob = BigRational;

pub fn zero() -> Prob {
    Prob::zero()
}

pub fn one() -> Prob {
    Prob::one()
}

pub fn ratio(num: u64, den: u64) -> Prob {
    Prob::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: u64) -> Prob {
    Prob::from_integer(BigInt::from(n))
}

/// Rational value of the shortest decimal that round-trips to `x`, so that
/// `0.1` becomes exactly 1/10. `None` for non-finite input.
pub fn from_f64(x: f64) -> Option<Prob> {
    if !x.is_finite() {
        return None;
    }
    let text = format!("{x:e}");
    let (mantissa, exp) = text.split_once('e')?;
    let exp: i32 = exp.parse().ok()?;
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (-1, m),
        None => (1, mantissa),
    };
    let (int_part, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits: BigInt = format!("{int_part}{frac}").parse().ok()?;
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10u32);
    let value = if scale >= 0 {
        Prob::from_integer(digits * ten.pow(scale as u32))
    } else {
        Prob::new(digits, ten.pow((-scale) as u32))
    };
    Some(value * Prob::from_integer(BigInt::from(sign)))
}

pub fn to_f64(p: &Prob) -> f64 {
    if let Some(f) = p.to_f64() {
        if f.is_finite() {
            return f;
        }
    }
    // Very large numerator/denominator pairs: scale down before converting.
    let (n, d) = (p.numer(), p.denom());
    let shift = n.bits().max(d.bits()).saturating_sub(1000);
    let n = n >> shift;
    let d = d >> shift;
    n.to_f64().unwrap_or(0.0) / d.to_f64().unwrap_or(1.0)
}

pub fn pow(base: &Prob, exp: u32) -> Prob {
    let mut acc = one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// `n! / (n-k)!`, zero when `k > n`.
pub fn falling(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    (n - k + 1..=n).fold(BigInt::one(), |acc, x| acc * x)
}

pub fn factorial(n: u64) -> BigInt {
    falling(n, n)
}

pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    falling(n, k) / factorial(k)
}

pub fn from_int(n: BigInt) -> Prob {
    Prob::from_integer(n)
}
