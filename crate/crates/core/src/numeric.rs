//! Exact rational helpers: parsing and formatting, dyadic rounding, certified
//! roots, logarithms and exponentials with outward-rounded rational bounds.
//!
//! Nothing in here touches floating point. Every bound is a pair of exact
//! rationals that brackets the true real value.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse rational from {input:?}: {reason}")]
pub struct ParseRationalError {
    pub input: String,
    pub reason: &'static str,
}

fn parse_err(input: &str, reason: &'static str) -> ParseRationalError {
    ParseRationalError { input: input.to_string(), reason }
}

/// Parses `"p/q"`, a plain integer, or a finite decimal such as `"-1.25"`.
/// Decimals are converted exactly.
pub fn parse_rational(input: &str) -> Result<BigRational, ParseRationalError> {
    let s = input.trim();
    if s.is_empty() {
        return Err(parse_err(input, "empty string"));
    }
    if let Some((num, den)) = s.split_once('/') {
        let num = BigInt::from_str(num.trim()).map_err(|_| parse_err(input, "bad numerator"))?;
        let den = BigInt::from_str(den.trim()).map_err(|_| parse_err(input, "bad denominator"))?;
        if den.is_zero() {
            return Err(parse_err(input, "zero denominator"));
        }
        return Ok(BigRational::new(num, den));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let negative = int_part.starts_with('-');
        let int_digits = int_part.trim_start_matches(['-', '+']);
        if frac_part.is_empty() && int_digits.is_empty() {
            return Err(parse_err(input, "no digits"));
        }
        if !int_digits.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(parse_err(input, "bad decimal digit"));
        }
        let digits = format!("{int_digits}{frac_part}");
        let mantissa = if digits.is_empty() {
            BigInt::zero()
        } else {
            BigInt::from_str(&digits).map_err(|_| parse_err(input, "bad decimal"))?
        };
        let scale = num_traits::pow(BigInt::from(10u32), frac_part.len());
        let value = BigRational::new(mantissa, scale);
        return Ok(if negative { -value } else { value });
    }
    let n = BigInt::from_str(s).map_err(|_| parse_err(input, "not a rational"))?;
    Ok(BigRational::from_integer(n))
}

/// Canonical `"p/q"` rendering (always with a denominator).
pub fn format_rational(x: &BigRational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// Decimal rendering truncated toward zero after `digits` fractional digits.
pub fn to_decimal_string(x: &BigRational, digits: usize) -> String {
    let negative = x.is_negative();
    let abs = x.abs();
    let scale = num_traits::pow(BigInt::from(10u32), digits);
    let scaled = (abs.numer() * &scale) / abs.denom();
    let (int_part, frac_part) = scaled.div_rem(&scale);
    let sign = if negative && !scaled.is_zero() { "-" } else { "" };
    if digits == 0 {
        return format!("{sign}{int_part}");
    }
    format!("{sign}{int_part}.{:0>width$}", frac_part.to_string(), width = digits)
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn pow2(k: u32) -> BigInt {
    BigInt::one() << k
}

/// `floor(x * 2^bits) / 2^bits`
pub fn floor_dyadic(x: &BigRational, bits: u32) -> BigRational {
    BigRational::new(floor_scaled(x, bits), pow2(bits))
}

/// `ceil(x * 2^bits) / 2^bits`
pub fn ceil_dyadic(x: &BigRational, bits: u32) -> BigRational {
    BigRational::new(ceil_scaled(x, bits), pow2(bits))
}

fn floor_scaled(x: &BigRational, bits: u32) -> BigInt {
    (x.numer() << bits).div_floor(x.denom())
}

fn ceil_scaled(x: &BigRational, bits: u32) -> BigInt {
    -((-(x.numer() << bits)).div_floor(x.denom()))
}

/// Closed rational interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: BigRational,
    pub hi: BigRational,
}

impl Interval {
    pub fn new(lo: BigRational, hi: BigRational) -> Self {
        debug_assert!(lo <= hi, "inverted interval");
        Interval { lo, hi }
    }

    pub fn point(x: BigRational) -> Self {
        Interval { lo: x.clone(), hi: x }
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &BigRational) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn add(&self, other: &Interval) -> Interval {
        Interval::new(&self.lo + &other.lo, &self.hi + &other.hi)
    }

    pub fn neg(&self) -> Interval {
        Interval::new(-&self.hi, -&self.lo)
    }

    pub fn scale(&self, k: &BigRational) -> Interval {
        if k.is_negative() {
            Interval::new(&self.hi * k, &self.lo * k)
        } else {
            Interval::new(&self.lo * k, &self.hi * k)
        }
    }

    /// Product of two intervals with non-negative endpoints.
    pub fn mul_nonneg(&self, other: &Interval) -> Interval {
        debug_assert!(!self.lo.is_negative() && !other.lo.is_negative());
        Interval::new(&self.lo * &other.lo, &self.hi * &other.hi)
    }

    /// Quotient of two intervals with non-negative numerator and positive denominator.
    pub fn div_pos(&self, other: &Interval) -> Interval {
        debug_assert!(!self.lo.is_negative() && other.lo.is_positive());
        Interval::new(&self.lo / &other.hi, &self.hi / &other.lo)
    }

    /// Reciprocal of a positive interval.
    pub fn recip_pos(&self) -> Interval {
        debug_assert!(self.lo.is_positive());
        Interval::new(self.hi.recip(), self.lo.recip())
    }

    /// Widens both endpoints outward to dyadic rationals with `bits` fractional bits.
    pub fn round_outward(&self, bits: u32) -> Interval {
        Interval::new(floor_dyadic(&self.lo, bits), ceil_dyadic(&self.hi, bits))
    }

    /// Three-way comparison against a threshold; `None` when the interval straddles it.
    pub fn cmp_value(&self, t: &BigRational) -> Option<Ordering> {
        if &self.lo > t {
            Some(Ordering::Greater)
        } else if &self.hi < t {
            Some(Ordering::Less)
        } else if self.is_exact() {
            Some(Ordering::Equal)
        } else {
            None
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", format_rational(&self.lo), format_rational(&self.hi))
    }
}

/// Exact `q`-th root of a non-negative rational, if numerator and denominator
/// are both perfect `q`-th powers.
pub fn exact_root(x: &BigRational, q: u32) -> Option<BigRational> {
    if x.is_negative() || q == 0 {
        return None;
    }
    let n = x.numer().magnitude();
    let d = x.denom().magnitude();
    let rn = n.nth_root(q);
    let rd = d.nth_root(q);
    if num_traits::pow(rn.clone(), q as usize) == *n && num_traits::pow(rd.clone(), q as usize) == *d {
        Some(BigRational::new(BigInt::from(rn), BigInt::from(rd)))
    } else {
        None
    }
}

/// Certified bracket of `x^(1/q)` for `x >= 0`: exact when possible, otherwise
/// two dyadics `2^-bits` apart.
pub fn root_bounds(x: &BigRational, q: u32, bits: u32) -> Interval {
    assert!(!x.is_negative(), "root of negative rational");
    assert!(q >= 1, "zeroth root");
    if let Some(r) = exact_root(x, q) {
        return Interval::point(r);
    }
    // floor(x * 2^(q*bits)) then integer root; t^q <= x 2^(q bits) < (t+1)^q.
    let scaled = floor_scaled(x, q * bits);
    let t = scaled.magnitude().nth_root(q);
    let t = BigInt::from(t);
    let den = pow2(bits);
    Interval::new(
        BigRational::new(t.clone(), den.clone()),
        BigRational::new(t + 1, den),
    )
}

/// Enclosure of `sqrt(n)` with width below `2^-bits` (a point when `n` is a square).
pub fn sqrt_bounds(n: u64, bits: u32) -> Interval {
    root_bounds(&BigRational::from_integer(BigInt::from(n)), 2, bits)
}

fn bit_len(x: &BigInt) -> u64 {
    x.magnitude().bits()
}

fn div_round(num: &BigInt, den: &BigInt, up: bool) -> BigInt {
    if up {
        -((-num).div_floor(den))
    } else {
        num.div_floor(den)
    }
}

/// Fixed-point bound (scale `2^s`) on `atanh(t)` for rational `0 <= t <= 1/3`.
/// `up` selects the upper bound, otherwise the lower bound.
fn atanh_fixed(t: &BigRational, s: u32, up: bool) -> BigInt {
    debug_assert!(!t.is_negative() && *t <= rat(1, 3));
    let t_fixed = if up { ceil_scaled(t, s) } else { floor_scaled(t, s) };
    let one = pow2(s);
    let t2 = div_round(&(&t_fixed * &t_fixed), &one, up);
    let mut power = t_fixed;
    let mut sum = BigInt::zero();
    let mut k: u64 = 0;
    loop {
        sum += div_round(&power, &BigInt::from(2 * k + 1), up);
        if up {
            if power <= BigInt::one() {
                // tail <= power * t^2 / ((2k+3)(1 - t^2)) <= power
                sum += 1;
                break;
            }
        } else if power.is_zero() {
            break;
        }
        power = div_round(&(&power * &t2), &one, up);
        k += 1;
    }
    sum
}

/// Fixed-point bounds on `ln 2`, scale `2^s`.
fn ln2_fixed(s: u32) -> (BigInt, BigInt) {
    let third = rat(1, 3);
    (atanh_fixed(&third, s, false) << 1, atanh_fixed(&third, s, true) << 1)
}

/// Certified enclosure of `ln 2` with width at most `2^-bits`.
pub fn ln2_bounds(bits: u32) -> Interval {
    let s = bits + 8;
    let (lo, hi) = ln2_fixed(s);
    Interval::new(BigRational::new(lo, pow2(s)), BigRational::new(hi, pow2(s)))
}

/// Certified enclosure of `ln x` for rational `x > 0` with width at most `2^-bits`.
pub fn ln_bounds(x: &BigRational, bits: u32) -> Interval {
    assert!(x.is_positive(), "logarithm of non-positive rational");
    if x.is_one() {
        return Interval::point(BigRational::zero());
    }
    // x = 2^e * y with y in [1, 2)
    let mut e: i64 = bit_len(x.numer()) as i64 - bit_len(x.denom()) as i64;
    let mut y = if e >= 0 {
        x / BigRational::from_integer(pow2(e as u32))
    } else {
        x * BigRational::from_integer(pow2((-e) as u32))
    };
    let two = int(2);
    while y < BigRational::one() {
        y *= &two;
        e -= 1;
    }
    while y >= two {
        y /= &two;
        e += 1;
    }
    let t = (&y - BigRational::one()) / (&y + BigRational::one());
    let e_abs = e.unsigned_abs();
    let s = bits + 16 + (64 - e_abs.leading_zeros());
    let (l2_lo, l2_hi) = ln2_fixed(s);
    let at_lo = atanh_fixed(&t, s, false) << 1;
    let at_hi = atanh_fixed(&t, s, true) << 1;
    let e_big = BigInt::from(e);
    let (lo, hi) = if e >= 0 {
        (&e_big * &l2_lo + at_lo, &e_big * &l2_hi + at_hi)
    } else {
        (&e_big * &l2_hi + at_lo, &e_big * &l2_lo + at_hi)
    };
    let den = pow2(s);
    Interval::new(BigRational::new(lo, den.clone()), BigRational::new(hi, den))
}

/// Fixed-point bound on `e^y` for `0 <= y <= 1/2`, scale `2^s`.
fn exp_small_fixed(y: &BigRational, s: u32, up: bool) -> BigInt {
    let y_fixed = if up { ceil_scaled(y, s) } else { floor_scaled(y, s) };
    let one = pow2(s);
    let mut term = one.clone();
    let mut sum = BigInt::zero();
    let mut k: u64 = 0;
    loop {
        sum += &term;
        if up {
            if term <= BigInt::one() && k > 0 {
                // tail <= term * y/(k+1) / (1 - y/(k+2)) <= term
                sum += 1;
                break;
            }
        } else if term.is_zero() {
            break;
        }
        k += 1;
        term = div_round(&(&term * &y_fixed), &(&one * BigInt::from(k)), up);
    }
    sum
}

/// Certified enclosure of `e^x` for rational `x` with width at most `2^-bits`.
pub fn exp_bounds(x: &BigRational, bits: u32) -> Interval {
    if x.is_zero() {
        return Interval::point(BigRational::one());
    }
    let abs = x.abs();
    // halve until |x| / 2^r <= 1/2
    let mut r: u32 = 0;
    let half = rat(1, 2);
    let mut y = abs.clone();
    while y > half {
        y /= int(2);
        r += 1;
    }
    let magnitude_bits = abs.ceil().to_integer().to_u64().unwrap_or(u64::MAX).min(1 << 20) as u32;
    let mut s = bits + 24 + 2 * r + 2 * magnitude_bits;
    loop {
        let one = pow2(s);
        let mut lo = exp_small_fixed(&y, s, false);
        let mut hi = exp_small_fixed(&y, s, true);
        for _ in 0..r {
            lo = (&lo * &lo).div_floor(&one);
            hi = div_round(&(&hi * &hi), &one, true);
        }
        let den = pow2(s);
        let pos = Interval::new(BigRational::new(lo, den.clone()), BigRational::new(hi, den));
        let out = if x.is_negative() { pos.recip_pos() } else { pos };
        if out.width() <= BigRational::new(BigInt::one(), pow2(bits)) {
            return out;
        }
        s += 32;
    }
}

/// `log2` of a positive integer as a certified interval of width at most `2^-bits`.
pub fn log2_bounds(n: &BigRational, bits: u32) -> Interval {
    let ln_n = ln_bounds(n, bits + 8);
    if ln_n.is_exact() {
        return ln_n;
    }
    let ln2 = ln2_bounds(bits + 8 + bit_len(&n.ceil().to_integer()) as u32);
    if ln_n.lo.is_negative() {
        // log2 of n < 1: negate the positive case
        return ln_n.neg().div_pos(&ln2).neg();
    }
    ln_n.div_pos(&ln2)
}

pub fn big_uint_to_rational(x: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from_biguint(Sign::Plus, x.clone()))
}

/// Serde adapters that render rationals as `"p/q"` strings.
pub mod rational_str {
    use super::{format_rational, parse_rational};
    use num_rational::BigRational;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &BigRational, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_rational(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_rational(&s).map_err(de::Error::custom)
    }
}

pub mod rational_vec {
    use super::{format_rational, parse_rational};
    use num_rational::BigRational;
    use serde::{de, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[BigRational], serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&format_rational(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<BigRational>, D::Error> {
        let raw = Vec::<String>::deserialize(deserializer)?;
        raw.iter()
            .map(|s| parse_rational(s).map_err(de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("-7").unwrap(), int(-7));
        assert_eq!(parse_rational("1.25").unwrap(), rat(5, 4));
        assert_eq!(parse_rational("-0.5").unwrap(), rat(-1, 2));
        assert_eq!(parse_rational(".5").unwrap(), rat(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
        assert_eq!(format_rational(&int(2)), "2/1");
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(to_decimal_string(&rat(1, 3), 4), "0.3333");
        assert_eq!(to_decimal_string(&rat(-5, 4), 3), "-1.250");
        assert_eq!(to_decimal_string(&rat(3, 2), 0), "1");
    }

    #[test]
    fn roots_exact_and_bracketed() {
        assert_eq!(root_bounds(&rat(1, 576), 2, 10), Interval::point(rat(1, 24)));
        let r = root_bounds(&int(2), 2, 30);
        assert!(&r.lo * &r.lo < int(2) && &r.hi * &r.hi > int(2));
        assert_eq!(r.width(), BigRational::new(BigInt::one(), pow2(30)));
        let c = root_bounds(&rat(1, 3), 3, 20);
        assert!(num_traits::pow(c.lo.clone(), 3) <= rat(1, 3));
        assert!(num_traits::pow(c.hi.clone(), 3) >= rat(1, 3));
    }

    #[test]
    fn ln_brackets_float_reference() {
        for (n, d) in [(1, 2), (3, 1), (1, 1152), (7, 5), (1000, 1), (2, 1)] {
            let x = rat(n, d);
            let b = ln_bounds(&x, 40);
            let reference = (n as f64 / d as f64).ln();
            let lo = b.lo.to_f64().unwrap();
            let hi = b.hi.to_f64().unwrap();
            assert!(lo <= reference + 1e-12 && reference - 1e-12 <= hi, "{n}/{d}: {lo} {hi}");
            assert!(b.width() <= BigRational::new(BigInt::one(), pow2(40)));
        }
    }

    #[test]
    fn ln2_known_digits() {
        let b = ln2_bounds(60);
        let known = parse_rational("0.69314718055994530941").unwrap();
        let eps = parse_rational("0.00000000000000000001").unwrap();
        assert!(b.lo <= &known + &eps && &known - &eps <= b.hi);
    }

    #[test]
    fn exp_brackets_float_reference() {
        for (n, d) in [(1, 1), (-1, 1), (3, 2), (-3, 1), (1, 3), (10, 1)] {
            let x = rat(n, d);
            let b = exp_bounds(&x, 30);
            let reference = (n as f64 / d as f64).exp();
            let rel = 1e-9 * reference.max(1.0);
            assert!(b.lo.to_f64().unwrap() <= reference + rel);
            assert!(b.hi.to_f64().unwrap() >= reference - rel);
            assert!(b.width() <= BigRational::new(BigInt::one(), pow2(30)));
        }
    }

    #[test]
    fn log2_of_nine() {
        let b = log2_bounds(&int(9), 20);
        assert!(b.lo > parse_rational("3.1699").unwrap());
        assert!(b.hi < parse_rational("3.1700").unwrap());
    }

    #[test]
    fn dyadic_rounding_directions() {
        let x = rat(1, 3);
        assert!(floor_dyadic(&x, 8) <= x && x <= ceil_dyadic(&x, 8));
        let y = rat(-1, 3);
        assert!(floor_dyadic(&y, 8) <= y && y <= ceil_dyadic(&y, 8));
        assert_eq!(floor_dyadic(&rat(1, 4), 8), rat(1, 4));
    }
}
