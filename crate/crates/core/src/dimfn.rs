//! Dimension functions `h` with certified evaluation.
//!
//! Two parametric families are supported: `x^s` and `x^s * (-ln x)`. Both have
//! `h(x) / x^d` non-increasing on their domain whenever `h` is dominated by
//! `x^d`, which is what lets a single check at a level stand in for every
//! deeper level.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use thiserror::Error;

use crate::numeric::{self, format_rational, ln2_bounds, ln_bounds, parse_rational, root_bounds, Interval};

/// Largest internal precision tried before a log-family comparison gives up.
pub const PRECISION_CAP: u32 = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DimFnError {
    #[error("exponent must be positive, got {0}")]
    RejectNonPositive(String),
    #[error("{family} with exponent {s} is not dominated by x^{d}")]
    RejectNotDominated { family: &'static str, s: String, d: u32 },
    #[error("argument {r} outside (0, {cap}]")]
    OutOfDomain { r: String, cap: String },
    #[error("comparison of h({r}) against {threshold} undecided at precision cap")]
    Undecidable { r: String, threshold: String },
    #[error("bad dimension-function spec {0:?}")]
    BadSpec(String),
}

impl DimFnError {
    pub fn kind(&self) -> &'static str {
        match self {
            DimFnError::RejectNonPositive(_) => "RejectNonPositive",
            DimFnError::RejectNotDominated { .. } => "RejectNotDominated",
            DimFnError::OutOfDomain { .. } => "OutOfDomain",
            DimFnError::Undecidable { .. } => "Undecidable",
            DimFnError::BadSpec(_) => "BadSpec",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `h(x) = x^s`
    Power,
    /// `h(x) = x^s * (-ln x)`
    PowerLog,
}

impl Family {
    fn tag(self) -> &'static str {
        match self {
            Family::Power => "pow",
            Family::PowerLog => "powlog",
        }
    }
}

/// Family and exponent, before binding to an ambient dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimFnSpec {
    pub family: Family,
    pub s: BigRational,
}

impl FromStr for DimFnSpec {
    type Err = DimFnError;

    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let (tag, exponent) = input
            .trim()
            .split_once(':')
            .ok_or_else(|| DimFnError::BadSpec(input.to_string()))?;
        let family = match tag {
            "pow" => Family::Power,
            "powlog" => Family::PowerLog,
            _ => return Err(DimFnError::BadSpec(input.to_string())),
        };
        let s = parse_rational(exponent).map_err(|_| DimFnError::BadSpec(input.to_string()))?;
        Ok(DimFnSpec { family, s })
    }
}

impl fmt::Display for DimFnSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family.tag(), format_rational(&self.s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionFunction {
    family: Family,
    s_num: u32,
    s_den: u32,
    d: u32,
    domain_cap: BigRational,
}

/// Builds `h` for ambient dimension `d`, rejecting anything not dominated by `x^d`.
pub fn make_dimfn(family: Family, s: &BigRational, d: u32) -> Result<DimensionFunction, DimFnError> {
    assert!(d >= 1, "ambient dimension must be positive");
    if !s.is_positive() {
        return Err(DimFnError::RejectNonPositive(format_rational(s)));
    }
    let d_rat = BigRational::from_integer(BigInt::from(d));
    let dominated = match family {
        Family::Power => *s < d_rat,
        Family::PowerLog => *s <= d_rat,
    };
    if !dominated {
        return Err(DimFnError::RejectNotDominated {
            family: family.tag(),
            s: format_rational(s),
            d,
        });
    }
    let s_num = s.numer().to_u32().ok_or_else(|| DimFnError::BadSpec(format_rational(s)))?;
    let s_den = s.denom().to_u32().ok_or_else(|| DimFnError::BadSpec(format_rational(s)))?;
    let domain_cap = match family {
        Family::Power => BigRational::one(),
        Family::PowerLog => powlog_cap(s),
    };
    Ok(DimensionFunction { family, s_num, s_den, d, domain_cap })
}

/// `-x^s ln x` increases on `(0, e^{-1/s})`; return `min(1/2, 2^-t)` with
/// `t` the least integer such that `t ln 2 >= 1/s`, certified via a lower bound on `ln 2`.
fn powlog_cap(s: &BigRational) -> BigRational {
    let ln2 = ln2_bounds(40);
    let t = (s * &ln2.lo).recip().ceil().to_integer().to_u32().unwrap_or(u32::MAX).max(1);
    BigRational::new(BigInt::one(), numeric::pow2(t))
}

impl DimensionFunction {
    pub fn parse(spec: &str, d: u32) -> Result<Self, DimFnError> {
        let spec: DimFnSpec = spec.parse()?;
        make_dimfn(spec.family, &spec.s, d)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn exponent(&self) -> BigRational {
        BigRational::new(BigInt::from(self.s_num), BigInt::from(self.s_den))
    }

    pub fn dimension(&self) -> u32 {
        self.d
    }

    pub fn domain_cap(&self) -> &BigRational {
        &self.domain_cap
    }

    pub fn spec_string(&self) -> String {
        DimFnSpec { family: self.family, s: self.exponent() }.to_string()
    }

    fn check_domain(&self, r: &BigRational) -> Result<(), DimFnError> {
        if !r.is_positive() || *r > self.domain_cap {
            return Err(DimFnError::OutOfDomain {
                r: format_rational(r),
                cap: format_rational(&self.domain_cap),
            });
        }
        Ok(())
    }

    pub fn in_domain(&self, r: &BigRational) -> bool {
        self.check_domain(r).is_ok()
    }

    /// `r^s` bracket at the given internal precision.
    fn power_part(&self, r: &BigRational, bits: u32) -> Interval {
        root_bounds(&num_traits::pow(r.clone(), self.s_num as usize), self.s_den, bits)
    }

    /// `lo <= h(r) <= hi` with `hi - lo <= 2^-precision`.
    pub fn eval_bounds(&self, r: &BigRational, precision: u32) -> Result<Interval, DimFnError> {
        self.check_domain(r)?;
        Ok(self.formula_bounds(r, precision))
    }

    /// Evaluates the defining formula on `(0, 1)` (`(0, 1]` for the power
    /// family), ignoring the monotone domain cap.
    pub fn formula_bounds(&self, r: &BigRational, precision: u32) -> Interval {
        assert!(r.is_positive(), "formula needs r > 0");
        assert!(
            *r < BigRational::one() || (self.family == Family::Power && r.is_one()),
            "formula needs r < 1"
        );
        match self.family {
            Family::Power => self.power_part(r, precision),
            Family::PowerLog => {
                let target = BigRational::new(BigInt::one(), numeric::pow2(precision));
                let mut bits = precision + 8;
                loop {
                    let pw = self.power_part(r, bits);
                    let neg_ln = ln_bounds(r, bits).neg();
                    let h = pw.mul_nonneg(&neg_ln);
                    if h.width() <= target {
                        return h;
                    }
                    bits += 16;
                }
            }
        }
    }

    /// Certified `h(r) >= value`.
    pub fn h_ge(&self, r: &BigRational, value: &BigRational) -> Result<bool, DimFnError> {
        self.check_domain(r)?;
        if !value.is_positive() {
            return Ok(true);
        }
        match self.family {
            Family::Power => {
                // r^(p/q) >= v  <=>  r^p >= v^q
                let lhs = num_traits::pow(r.clone(), self.s_num as usize);
                let rhs = num_traits::pow(value.clone(), self.s_den as usize);
                Ok(lhs >= rhs)
            }
            Family::PowerLog => self.decide(r, value, |bits| self.eval_bounds(r, bits)),
        }
    }

    /// Certified `h(r) / r^d >= threshold`.
    ///
    /// Exact for the power family. For the log family precision is raised
    /// until the comparison is decided or [`PRECISION_CAP`] is reached, in
    /// which case `Undecidable` is returned and callers must read it as false.
    pub fn ratio_ge(&self, r: &BigRational, threshold: &BigRational) -> Result<bool, DimFnError> {
        self.check_domain(r)?;
        if !threshold.is_positive() {
            return Ok(true);
        }
        // h(r)/r^d = (1/r)^((dq - p)/q) [* (-ln r)]
        let exp_num = self.d * self.s_den - self.s_num;
        let inv = r.recip();
        match self.family {
            Family::Power => {
                let lhs = num_traits::pow(inv, exp_num as usize);
                let rhs = num_traits::pow(threshold.clone(), self.s_den as usize);
                Ok(lhs >= rhs)
            }
            Family::PowerLog => {
                let base = num_traits::pow(inv, exp_num as usize);
                self.decide(r, threshold, |bits| {
                    let growth = root_bounds(&base, self.s_den, bits);
                    Ok(growth.mul_nonneg(&ln_bounds(r, bits).neg()))
                })
            }
        }
    }

    fn decide<F>(&self, r: &BigRational, threshold: &BigRational, mut bounds: F) -> Result<bool, DimFnError>
    where
        F: FnMut(u32) -> Result<Interval, DimFnError>,
    {
        let mut bits = 32;
        while bits <= PRECISION_CAP {
            let iv = bounds(bits)?;
            match iv.cmp_value(threshold) {
                Some(Ordering::Less) => return Ok(false),
                Some(_) => return Ok(true),
                None => {
                    if iv.lo >= *threshold {
                        return Ok(true);
                    }
                }
            }
            bits *= 2;
        }
        Err(DimFnError::Undecidable {
            r: format_rational(r),
            threshold: format_rational(threshold),
        })
    }
}

impl fmt::Display for DimensionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{int, rat};

    fn pow_half() -> DimensionFunction {
        make_dimfn(Family::Power, &rat(1, 2), 1).unwrap()
    }

    #[test]
    fn construction_rules() {
        assert!(make_dimfn(Family::Power, &rat(1, 2), 1).is_ok());
        assert!(matches!(
            make_dimfn(Family::Power, &int(1), 1),
            Err(DimFnError::RejectNotDominated { .. })
        ));
        assert!(matches!(
            make_dimfn(Family::Power, &int(0), 1),
            Err(DimFnError::RejectNonPositive(_))
        ));
        let full = make_dimfn(Family::PowerLog, &int(2), 2).unwrap();
        assert_eq!(full.domain_cap(), &rat(1, 2));
        assert!(make_dimfn(Family::PowerLog, &int(3), 2).is_err());
    }

    #[test]
    fn powlog_cap_below_turning_point() {
        // -x ln x turns at 1/e ~ 0.3679; the cap must sit below it
        let h = make_dimfn(Family::PowerLog, &int(1), 1).unwrap();
        assert_eq!(h.domain_cap(), &rat(1, 4));
        let h = make_dimfn(Family::PowerLog, &rat(1, 2), 1).unwrap();
        assert_eq!(h.domain_cap(), &rat(1, 8));
    }

    #[test]
    fn spec_strings() {
        let h = DimensionFunction::parse("pow:1/2", 1).unwrap();
        assert_eq!(h.spec_string(), "pow:1/2");
        let h = DimensionFunction::parse("powlog:2/1", 2).unwrap();
        assert_eq!(h.family(), Family::PowerLog);
        assert_eq!(h.to_string(), "powlog:2/1");
        assert!(DimensionFunction::parse("sqrt:1/2", 1).is_err());
        assert!(DimensionFunction::parse("pow", 1).is_err());
    }

    #[test]
    fn exact_power_values() {
        let h = pow_half();
        assert_eq!(h.eval_bounds(&rat(1, 4), 10).unwrap(), Interval::point(rat(1, 2)));
        assert_eq!(h.eval_bounds(&rat(1, 576), 10).unwrap(), Interval::point(rat(1, 24)));
        assert!(matches!(h.eval_bounds(&int(2), 10), Err(DimFnError::OutOfDomain { .. })));
        assert!(matches!(h.eval_bounds(&int(0), 10), Err(DimFnError::OutOfDomain { .. })));
    }

    #[test]
    fn powlog_at_inverse_e() {
        // -(1/e) ln(1/e) = 1/e; r is a 16-digit rational approximation of 1/e
        let h = make_dimfn(Family::PowerLog, &int(1), 1).unwrap();
        let r = rat(3678794411714423, 10000000000000000);
        assert!(matches!(h.eval_bounds(&r, 20), Err(DimFnError::OutOfDomain { .. })));
        let b = h.formula_bounds(&r, 20);
        let inv_e = std::f64::consts::E.recip();
        assert!(b.lo.to_f64().unwrap() <= inv_e + 1e-12);
        assert!(b.hi.to_f64().unwrap() >= inv_e - 1e-12);
        assert!(b.width() <= rat(1, 1 << 20));
    }

    #[test]
    fn ratio_examples() {
        let h = pow_half();
        assert!(h.ratio_ge(&rat(1, 576), &int(18)).unwrap());
        assert!(!h.ratio_ge(&rat(1, 288), &int(18)).unwrap());
        assert!(h.ratio_ge(&rat(1, 3), &int(0)).unwrap());
    }

    #[test]
    fn powlog_ratio_decides() {
        let h = make_dimfn(Family::PowerLog, &int(1), 1).unwrap();
        // ratio = -ln r; -ln(1/1024) = 6.93...
        assert!(h.ratio_ge(&rat(1, 1024), &rat(69, 10)).unwrap());
        assert!(!h.ratio_ge(&rat(1, 1024), &int(7)).unwrap());
    }
}
