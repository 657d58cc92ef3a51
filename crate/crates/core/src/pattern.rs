//! Linear patterns and their normal form.
//!
//! A pattern is a linear form `psi(x_1, ..., x_m) = sum b[l][v] * x_l[v]` on
//! `m` points of `R^d`. Normalizing permutes the blocks and rescales so that
//! one coefficient of the last block is exactly `1` and every nonzero
//! coefficient has magnitude at least `1`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::numeric::{format_rational, rat};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("all coefficients vanish")]
    ZeroPattern,
    #[error("pattern arity must be at least 2, got {0}")]
    ArityTooSmall(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("ambient dimension must be positive")]
    ZeroDimension,
}

impl PatternError {
    pub fn kind(&self) -> &'static str {
        match self {
            PatternError::ZeroPattern => "ZeroPattern",
            PatternError::ArityTooSmall(_) => "ArityTooSmall",
            PatternError::DimensionMismatch { .. } => "DimensionMismatch",
            PatternError::ZeroDimension => "ZeroDimension",
        }
    }
}

/// Coefficient matrix of a linear form on `(R^d)^m`, stored row-major
/// (block `l` outer, coordinate `v` inner).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinearPattern {
    d: usize,
    m: usize,
    coeffs: Vec<BigRational>,
}

impl LinearPattern {
    pub fn new(d: usize, blocks: Vec<Vec<BigRational>>) -> Result<Self, PatternError> {
        if d == 0 {
            return Err(PatternError::ZeroDimension);
        }
        let m = blocks.len();
        if m < 2 {
            return Err(PatternError::ArityTooSmall(m));
        }
        let mut coeffs = Vec::with_capacity(m * d);
        for block in blocks {
            if block.len() != d {
                return Err(PatternError::DimensionMismatch { expected: d, got: block.len() });
            }
            coeffs.extend(block);
        }
        if coeffs.iter().all(Zero::is_zero) {
            return Err(PatternError::ZeroPattern);
        }
        Ok(LinearPattern { d, m, coeffs })
    }

    /// Convenience constructor for `d = 1` from small integers ratios `(num, den)`.
    pub fn scalar(coeffs: &[(i64, i64)]) -> Result<Self, PatternError> {
        LinearPattern::new(1, coeffs.iter().map(|&(n, q)| vec![rat(n, q)]).collect())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn arity(&self) -> usize {
        self.m
    }

    pub fn coeff(&self, block: usize, coord: usize) -> &BigRational {
        &self.coeffs[block * self.d + coord]
    }

    pub fn block(&self, block: usize) -> &[BigRational] {
        &self.coeffs[block * self.d..(block + 1) * self.d]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[BigRational]> {
        self.coeffs.chunks(self.d)
    }

    /// `sum_v b[block][v] * x[v]`
    pub fn block_value(&self, block: usize, x: &[BigRational]) -> BigRational {
        self.block(block).iter().zip(x).map(|(b, xv)| b * xv).sum()
    }

    /// Exact value of the form at `m` points.
    pub fn eval<P: AsRef<[BigRational]>>(&self, points: &[P]) -> Result<BigRational, PatternError> {
        if points.len() != self.m {
            return Err(PatternError::DimensionMismatch { expected: self.m, got: points.len() });
        }
        let mut total = BigRational::zero();
        for (l, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != self.d {
                return Err(PatternError::DimensionMismatch { expected: self.d, got: p.len() });
            }
            total += self.block_value(l, p);
        }
        Ok(total)
    }

    /// Half the L1 norm of the coefficients, i.e. `max |psi|` over `[-1/2, 1/2]^{md}`.
    pub fn half_l1(&self) -> BigRational {
        self.coeffs.iter().map(|b| b.abs()).sum::<BigRational>() / BigRational::from_integer(BigInt::from(2))
    }

    pub fn describe(&self) -> String {
        let rows: Vec<String> = self
            .blocks()
            .map(|b| b.iter().map(format_rational).collect::<Vec<_>>().join(","))
            .collect();
        format!("[{}]", rows.join(" | "))
    }
}

/// A pattern in normal form plus the constants the construction needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedPattern {
    pub original: LinearPattern,
    /// Coefficients after permuting blocks and scaling.
    pub base: LinearPattern,
    /// Normalized block `p` holds original block `perm[p]`.
    pub perm: Vec<usize>,
    pub scale: BigRational,
    /// Coordinate of the last block whose coefficient is `1`.
    pub pivot: usize,
    pub c: BigRational,
    /// `lambda[l*d + v] = 1/|b[l][v]|`, or `1` where `b[l][v] = 0`.
    pub lambda: Vec<BigRational>,
    pub max_lambda: BigRational,
}

/// Moves the block holding the smallest nonzero coefficient (first in
/// lexicographic order on ties) to the last position and divides by that
/// coefficient.
pub fn normalize(p: &LinearPattern) -> Result<NormalizedPattern, PatternError> {
    let (d, m) = (p.d, p.m);
    let mut best: Option<(usize, usize)> = None;
    for l in 0..m {
        for v in 0..d {
            let b = p.coeff(l, v);
            if b.is_zero() {
                continue;
            }
            match best {
                Some((bl, bv)) if p.coeff(bl, bv).abs() <= b.abs() => {}
                _ => best = Some((l, v)),
            }
        }
    }
    let (star, pivot) = best.ok_or(PatternError::ZeroPattern)?;
    let mut perm: Vec<usize> = (0..m).collect();
    perm.swap(star, m - 1);
    let scale = p.coeff(star, pivot).recip();
    let blocks: Vec<Vec<BigRational>> = perm
        .iter()
        .map(|&src| p.block(src).iter().map(|b| b * &scale).collect())
        .collect();
    let base = LinearPattern::new(d, blocks)?;
    debug_assert!(base.coeff(m - 1, pivot).is_one());
    let lambda: Vec<BigRational> = base
        .coeffs
        .iter()
        .map(|b| if b.is_zero() { BigRational::one() } else { b.abs().recip() })
        .collect();
    let max_lambda = lambda.iter().max().cloned().unwrap_or_else(BigRational::one);
    let c = base.half_l1();
    Ok(NormalizedPattern {
        original: p.clone(),
        base,
        perm,
        scale,
        pivot,
        c,
        lambda,
        max_lambda,
    })
}

impl NormalizedPattern {
    pub fn dim(&self) -> usize {
        self.base.d
    }

    pub fn arity(&self) -> usize {
        self.base.m
    }

    pub fn lambda_at(&self, block: usize, coord: usize) -> &BigRational {
        &self.lambda[block * self.base.d + coord]
    }

    /// `1/2` on the pivot coordinate of the last block, `0` elsewhere.
    pub fn shift(&self, block: usize, coord: usize) -> BigRational {
        if block + 1 == self.base.m && coord == self.pivot {
            rat(1, 2)
        } else {
            BigRational::zero()
        }
    }

    /// Lattice map for block `block`: `(lambda[block][v] * z[v])_v`, shifted by
    /// half a unit along the pivot for the last block.
    pub fn phi(&self, block: usize, z: &[BigInt]) -> Vec<BigRational> {
        assert!(block < self.base.m, "block index out of range");
        assert_eq!(z.len(), self.base.d, "lattice point has wrong dimension");
        (0..self.base.d)
            .map(|v| self.lambda_at(block, v) * BigRational::from_integer(z[v].clone()) + self.shift(block, v))
            .collect()
    }

    pub fn eval<P: AsRef<[BigRational]>>(&self, points: &[P]) -> Result<BigRational, PatternError> {
        self.base.eval(points)
    }

    /// Reorders points given in the original block order into normalized order.
    pub fn permute_points<T: Clone>(&self, original_order: &[T]) -> Vec<T> {
        self.perm.iter().map(|&src| original_order[src].clone()).collect()
    }

    /// Inverse of [`NormalizedPattern::permute_points`].
    pub fn permute_back<T: Clone>(&self, normalized_order: &[T]) -> Vec<T> {
        let mut out = normalized_order.to_vec();
        for (p, &src) in self.perm.iter().enumerate() {
            out[src] = normalized_order[p].clone();
        }
        out
    }
}

/// Outcome of the exhaustive lattice scan behind [`key_inequality_check`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyInequalityReport {
    pub tuples: u64,
    pub violations: u64,
    pub min_abs: BigRational,
    /// Every scanned value lies in `Z + 1/2`.
    pub half_integer_residues: bool,
}

/// Scans every integer tuple with coordinates in `[-bound, bound]`.
pub fn key_inequality_scan(np: &NormalizedPattern, bound: i64) -> KeyInequalityReport {
    let (d, m) = (np.dim(), np.arity());
    let n = d * m;
    let mut z = vec![-bound; n];
    let half = rat(1, 2);
    let mut report = KeyInequalityReport {
        tuples: 0,
        violations: 0,
        min_abs: BigRational::from_integer(BigInt::from(i64::MAX)),
        half_integer_residues: true,
    };
    loop {
        let points: Vec<Vec<BigRational>> = (0..m)
            .map(|l| {
                let zl: Vec<BigInt> = z[l * d..(l + 1) * d].iter().map(|&k| BigInt::from(k)).collect();
                np.phi(l, &zl)
            })
            .collect();
        let value = np.eval(&points).expect("shapes agree by construction");
        let abs = value.abs();
        report.tuples += 1;
        if abs < half {
            report.violations += 1;
        }
        if !(&value - &half).is_integer() {
            report.half_integer_residues = false;
        }
        if abs < report.min_abs {
            report.min_abs = abs;
        }
        // odometer
        let mut i = 0;
        loop {
            if i == n {
                return report;
            }
            if z[i] < bound {
                z[i] += 1;
                break;
            }
            z[i] = -bound;
            i += 1;
        }
    }
}

/// True iff `|psi(phi^1(z_1), ..., phi^m(z_m))| >= 1/2` for every integer tuple
/// with all coordinates in `[-bound, bound]`.
pub fn key_inequality_check(np: &NormalizedPattern, bound: i64) -> bool {
    key_inequality_scan(np, bound).violations == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::int;

    fn ap() -> LinearPattern {
        LinearPattern::scalar(&[(1, 1), (-2, 1), (1, 1)]).unwrap()
    }

    fn quotient2() -> LinearPattern {
        LinearPattern::scalar(&[(2, 1), (-1, 1)]).unwrap()
    }

    #[test]
    fn normalize_ap() {
        let np = normalize(&ap()).unwrap();
        assert_eq!(np.pivot, 0);
        assert_eq!(np.scale, int(1));
        assert_eq!(np.c, int(2));
        assert_eq!(np.lambda, vec![int(1), rat(1, 2), int(1)]);
        assert_eq!(np.max_lambda, int(1));
    }

    #[test]
    fn normalize_quotient() {
        let np = normalize(&quotient2()).unwrap();
        assert_eq!(np.scale, int(-1));
        assert_eq!(np.base.block(0), &[int(-2)]);
        assert_eq!(np.base.block(1), &[int(1)]);
        assert_eq!(np.c, rat(3, 2));
        assert_eq!(np.lambda, vec![rat(1, 2), int(1)]);
        assert_eq!(np.perm, vec![0, 1]);
    }

    #[test]
    fn normalize_moves_smallest_block_last() {
        let p = LinearPattern::scalar(&[(1, 2), (3, 1), (-4, 1)]).unwrap();
        let np = normalize(&p).unwrap();
        assert_eq!(np.perm, vec![2, 1, 0]);
        assert_eq!(np.scale, int(2));
        assert_eq!(np.base.block(2), &[int(1)]);
        assert_eq!(np.base.block(0), &[int(-8)]);
    }

    #[test]
    fn zero_and_shape_errors() {
        assert_eq!(LinearPattern::scalar(&[(0, 1), (0, 1)]), Err(PatternError::ZeroPattern));
        assert_eq!(LinearPattern::scalar(&[(1, 1)]), Err(PatternError::ArityTooSmall(1)));
        assert!(matches!(
            LinearPattern::new(2, vec![vec![int(1)], vec![int(1), int(2)]]),
            Err(PatternError::DimensionMismatch { .. })
        ));
        let p = ap();
        assert!(p.eval(&[vec![int(1)], vec![int(1)]]).is_err());
        assert!(p.eval(&[vec![int(1)], vec![int(1), int(1)], vec![int(2)]]).is_err());
    }

    #[test]
    fn phi_examples() {
        let np = normalize(&ap()).unwrap();
        assert_eq!(np.phi(1, &[BigInt::from(6)]), vec![int(3)]);
        assert_eq!(np.phi(2, &[BigInt::from(73)]), vec![rat(147, 2)]);
        assert_eq!(np.phi(0, &[BigInt::from(0)]), vec![int(0)]);
    }

    #[test]
    fn eval_examples() {
        let p = ap();
        assert_eq!(p.eval(&[vec![int(1)], vec![rat(5, 4)], vec![rat(3, 2)]]).unwrap(), int(0));
        assert_eq!(p.eval(&[vec![int(1)], vec![int(1)], vec![int(2)]]).unwrap(), int(1));
        let q = normalize(&quotient2()).unwrap();
        assert_eq!(q.eval(&[vec![int(1)], vec![int(2)]]).unwrap(), int(0));
    }

    #[test]
    fn key_inequality_small_cases() {
        let np = normalize(&ap()).unwrap();
        let r = key_inequality_scan(&np, 5);
        assert_eq!(r.tuples, 11u64.pow(3));
        assert_eq!(r.violations, 0);
        assert_eq!(r.min_abs, rat(1, 2));
        assert!(r.half_integer_residues);
        let q = normalize(&quotient2()).unwrap();
        assert!(key_inequality_check(&q, 5));
        let zero = vec![BigInt::from(0)];
        let pts: Vec<_> = (0..3).map(|l| np.phi(l, &zero)).collect();
        assert_eq!(np.eval(&pts).unwrap().abs(), rat(1, 2));
    }

    #[test]
    fn key_inequality_with_zero_coefficients() {
        // d = 2 with zeros: lambda = 1 there, values still in Z + 1/2
        let p = LinearPattern::new(
            2,
            vec![vec![int(1), int(0)], vec![int(-1), int(0)], vec![int(0), rat(3, 2)]],
        )
        .unwrap();
        let np = normalize(&p).unwrap();
        let r = key_inequality_scan(&np, 2);
        assert_eq!(r.violations, 0);
        assert!(r.half_integer_residues);
    }
}
