//! Exact rational helpers and fractional-linear (Möbius) maps on `[0, 1]`.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::Error;

/// Canonical scalar for all deterministic computation.
pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Parses `"p/q"`, integers and decimal literals (`"0.45"`, `"-1.25e-3"`)
/// into an exact rational.
pub fn parse_rational(text: &str) -> Result<Q, Error> {
    let s = text.trim();
    let bad = || Error::Parse(format!("not a rational literal: {text:?}"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Q::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i64 = s[pos + 1..].parse().map_err(|_| bad())?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let joined = format!("{int_part}{frac_part}");
    let mut numer: BigInt = if joined.is_empty() { BigInt::zero() } else { joined.parse().map_err(|_| bad())? };
    if neg {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i64;
    let ten = BigInt::from(10u32);
    let value = if scale >= 0 {
        Q::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Q::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(value)
}

/// Exact rational for the shortest decimal that round-trips `x`.
pub fn from_f64_decimal(x: f64) -> Result<Q, Error> {
    if !x.is_finite() {
        return Err(Error::Parse(format!("non-finite value {x}")));
    }
    parse_rational(&format!("{x:e}"))
}

/// Rounds `x` to the nearest multiple of `2^-bits` when its denominator is
/// wider than `bits` bits; otherwise returns it untouched.
pub fn round_dyadic(x: &Q, bits: u32) -> Q {
    if x.denom().bits() <= bits as u64 {
        return x.clone();
    }
    let scale = BigInt::one() << bits;
    let scaled = x * Q::from_integer(scale.clone());
    let two = BigInt::from(2);
    let n = (scaled.numer() * &two + scaled.denom()).div_floor(&(scaled.denom() * &two));
    Q::new(n, scale)
}

/// Floor/ceil of `x` on the grid `2^-bits`.
pub fn floor_dyadic(x: &Q, bits: u32) -> Q {
    let scale = BigInt::one() << bits;
    let n = (x.numer() * &scale).div_floor(x.denom());
    Q::new(n, scale)
}

pub fn ceil_dyadic(x: &Q, bits: u32) -> Q {
    let scale = BigInt::one() << bits;
    let n = (x.numer() * &scale).div_ceil(x.denom());
    Q::new(n, scale)
}

/// `10^-k` as a rational.
pub fn ten_pow_neg(k: u32) -> Q {
    Q::new(BigInt::one(), num_traits::pow(BigInt::from(10u32), k as usize))
}

/// Decimal expansion of `x` truncated (toward zero) to `digits` places.
pub fn decimal_string(x: &Q, digits: usize) -> String {
    let neg = x.is_negative();
    let a = x.abs();
    let scale = num_traits::pow(BigInt::from(10u32), digits);
    let n = (a.numer() * &scale) / a.denom();
    let (int_part, frac_part) = n.div_rem(&scale);
    let mut frac = frac_part.to_string();
    while frac.len() < digits {
        frac.insert(0, '0');
    }
    let sign = if neg && !n.is_zero() { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac}")
    }
}

pub fn min_q<'a>(a: &'a Q, b: &'a Q) -> &'a Q {
    if a <= b {
        a
    } else {
        b
    }
}

pub fn max_q<'a>(a: &'a Q, b: &'a Q) -> &'a Q {
    if a >= b {
        a
    } else {
        b
    }
}

/// `x ↦ (a x + b) / (c x + d)` with integer coefficients.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Mobius {
    pub a: BigInt,
    pub b: BigInt,
    pub c: BigInt,
    pub d: BigInt,
}

impl Mobius {
    pub fn identity() -> Self {
        Self { a: BigInt::one(), b: BigInt::zero(), c: BigInt::zero(), d: BigInt::one() }
    }

    /// Builds a map from rational coefficients, clearing denominators.
    pub fn from_rationals(a: &Q, b: &Q, c: &Q, d: &Q) -> Self {
        let l = [a, b, c, d].iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
        let scale = |v: &Q| v.numer() * (&l / v.denom());
        Self { a: scale(a), b: scale(b), c: scale(c), d: scale(d) }.reduced()
    }

    fn reduced(mut self) -> Self {
        let g = self.a.gcd(&self.b).gcd(&self.c).gcd(&self.d);
        if !g.is_zero() && !g.is_one() {
            self.a /= &g;
            self.b /= &g;
            self.c /= &g;
            self.d /= &g;
        }
        self
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Mobius) -> Mobius {
        Mobius {
            a: &self.a * &inner.a + &self.b * &inner.c,
            b: &self.a * &inner.b + &self.b * &inner.d,
            c: &self.c * &inner.a + &self.d * &inner.c,
            d: &self.c * &inner.b + &self.d * &inner.d,
        }
        .reduced()
    }

    pub fn eval(&self, x: &Q) -> Q {
        let (n, m) = (x.numer(), x.denom());
        let num = &self.a * n + &self.b * m;
        let den = &self.c * n + &self.d * m;
        Q::new(num, den)
    }

    pub fn determinant(&self) -> BigInt {
        &self.a * &self.d - &self.b * &self.c
    }

    pub fn derivative(&self, x: &Q) -> Q {
        let den = Q::from_integer(self.c.clone()) * x + Q::from_integer(self.d.clone());
        Q::from_integer(self.determinant()) / (&den * &den)
    }

    /// Inverse map (defined on the image).
    pub fn inverse(&self) -> Mobius {
        Mobius { a: self.d.clone(), b: -self.b.clone(), c: -self.c.clone(), d: self.a.clone() }.reduced()
    }

    /// Sign of `M(x) - x` (ignoring points where the denominator vanishes).
    pub fn fixed_point_sign(&self, x: &Q) -> Ordering {
        let (n, m) = (x.numer(), x.denom());
        // M(x) - x = (a n m + b m² - c n² - d n m) / (m (c n + d m))
        let top = &self.a * n * m + &self.b * m * m - &self.c * n * n - &self.d * n * m;
        let bottom = &self.c * n + &self.d * m;
        let sign = |v: &BigInt| match v.sign() {
            Sign::Minus => -1i8,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        };
        (sign(&top) * sign(&bottom)).cmp(&0)
    }

    /// Fixed points that are rational: roots of `c x² + (d − a) x − b`
    /// when the discriminant is a perfect square.
    pub fn rational_fixed_points(&self) -> Vec<Q> {
        let diff = &self.d - &self.a;
        if self.c.is_zero() {
            if diff.is_zero() {
                return Vec::new();
            }
            return vec![Q::new(self.b.clone(), diff)];
        }
        let disc = &diff * &diff + BigInt::from(4) * &self.b * &self.c;
        if disc.sign() == Sign::Minus {
            return Vec::new();
        }
        let root = disc.sqrt();
        if &root * &root != disc {
            return Vec::new();
        }
        let two_c = BigInt::from(2) * &self.c;
        let mut out = vec![Q::new(-&diff + &root, two_c.clone()), Q::new(-&diff - &root, two_c)];
        out.dedup();
        out
    }

    pub fn is_increasing(&self) -> bool {
        self.determinant().sign() == Sign::Plus
    }

    /// Denominator `c x + d` is nonzero with constant sign on `[lo, hi]`.
    pub fn pole_free_on(&self, lo: &Q, hi: &Q) -> bool {
        let den = |x: &Q| Q::from_integer(self.c.clone()) * x + Q::from_integer(self.d.clone());
        let (a, b) = (den(lo), den(hi));
        !a.is_zero() && !b.is_zero() && a.is_positive() == b.is_positive()
    }
}

impl fmt::Display for Mobius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} x + {}) / ({} x + {})", self.a, self.b, self.c, self.d)
    }
}

/// A closed rational enclosure `[lo, hi]` of the fixed point of `map` found
/// by bisection on `M(x) - x`, which must change sign on `[lo, hi]`.
pub fn bisect_fixed_point(map: &Mobius, lo: &Q, hi: &Q, width: &Q) -> Option<(Q, Q)> {
    let mut lo = lo.clone();
    let mut hi = hi.clone();
    let s_lo = map.fixed_point_sign(&lo);
    let s_hi = map.fixed_point_sign(&hi);
    if s_lo == Ordering::Equal {
        return Some((lo.clone(), lo));
    }
    if s_hi == Ordering::Equal {
        return Some((hi.clone(), hi));
    }
    if let Some(x) = map.rational_fixed_points().into_iter().find(|x| &lo <= x && x <= &hi && map.pole_free_on(x, x)) {
        return Some((x.clone(), x));
    }
    if s_lo == s_hi {
        return None;
    }
    let two = qi(2);
    while &hi - &lo > *width {
        let mid = (&lo + &hi) / &two;
        match map.fixed_point_sign(&mid) {
            Ordering::Equal => return Some((mid.clone(), mid)),
            s if s == s_lo => lo = mid,
            _ => hi = mid,
        }
    }
    Some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_literals_exactly() {
        assert_eq!(parse_rational("0.45").unwrap(), q(9, 20));
        assert_eq!(parse_rational("7/14").unwrap(), q(1, 2));
        assert_eq!(parse_rational("-1.5e-3").unwrap(), q(-3, 2000));
        assert_eq!(parse_rational("3").unwrap(), qi(3));
        assert_eq!(parse_rational(".5").unwrap(), q(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert_eq!(from_f64_decimal(0.45).unwrap(), q(9, 20));
    }

    #[test]
    fn mobius_composition_matches_pointwise() {
        let f = Mobius::from_rationals(&q(1, 2), &q(1, 3), &q(1, 5), &qi(1));
        let g = Mobius::from_rationals(&qi(-1), &qi(1), &q(2, 7), &qi(3));
        let x = q(3, 11);
        assert_eq!(f.compose(&g).eval(&x), f.eval(&g.eval(&x)));
        assert_eq!(f.inverse().eval(&f.eval(&x)), x);
    }

    #[test]
    fn dyadic_rounding() {
        let x = q(1, 3);
        let r = round_dyadic(&x, 10);
        assert!((&r - &x).abs() <= q(1, 2048));
        assert!(floor_dyadic(&x, 10) <= x && ceil_dyadic(&x, 10) >= x);
        assert_eq!(round_dyadic(&q(1, 4), 10), q(1, 4));
    }

    #[test]
    fn decimal_expansion() {
        assert_eq!(decimal_string(&q(2, 3), 5), "0.66666");
        assert_eq!(decimal_string(&q(-5, 4), 2), "-1.25");
    }
}
