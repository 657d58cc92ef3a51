//! Level schedule: the integers `beta_i`, the avoidance levels `M_i`, and the
//! fair enumeration of same-level cube tuples that decides which tuple is
//! handled at each avoidance level.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimfn::{DimFnError, DimensionFunction};
use crate::engine::CubeAddress;
use crate::numeric::{int, pow2, rat, sqrt_bounds, Interval};
use crate::pattern::NormalizedPattern;

/// Fractional bits of the rational enclosure of `sqrt(d)`.
pub const SQRT_BITS: u32 = 24;

/// Dovetail slots examined for one entry before giving up.
pub const MAX_SLOT_SCAN: u64 = 1 << 22;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("no admissible avoidance level at or below the level cap {cap}")]
    ScheduleOverflow { cap: usize },
    #[error("no admissible tuple found within {scanned} enumeration slots")]
    Starved { scanned: u64 },
    #[error("invalid schedule: {0}")]
    Invalid(String),
    #[error(transparent)]
    DimFn(#[from] DimFnError),
}

impl ScheduleError {
    pub fn kind(&self) -> &'static str {
        match self {
            ScheduleError::ScheduleOverflow { .. } => "ScheduleOverflow",
            ScheduleError::Starved { .. } => "Starved",
            ScheduleError::Invalid(_) => "InvalidSchedule",
            ScheduleError::DimFn(e) => e.kind(),
        }
    }
}

/// Rational enclosure of `sqrt(d)`, exact for perfect squares.
pub fn sqrt_d(d: usize) -> Interval {
    sqrt_bounds(d as u64, SQRT_BITS)
}

/// Smallest integer `beta >= m` with `beta/2 >= max_lambda * 2c * sqrt(d) + sqrt(d)/2`,
/// evaluated with the upper bound on `sqrt(d)`.
pub fn compute_beta(np: &NormalizedPattern, sqrt_hi: &BigRational) -> u64 {
    let need = sqrt_hi * (int(4) * &np.c * &np.max_lambda + int(1));
    let ball = need.ceil().to_integer().to_u64().expect("beta fits in u64");
    ball.max(np.arity() as u64)
}

/// `beta/2 >= max_lambda * 2c * sqrt_hi + sqrt_hi/2`
pub fn beta_fits(np: &NormalizedPattern, beta: u64, sqrt_hi: &BigRational) -> bool {
    let lhs = rat(beta as i64, 2);
    let rhs = &np.max_lambda * int(2) * &np.c * sqrt_hi + sqrt_hi * rat(1, 2);
    beta >= np.arity() as u64 && lhs >= rhs
}

/// `2^{i d} * (beta_1 ... beta_i)^d` for `i = betas.len()`.
pub fn ratio_threshold(d: usize, betas: &[u64]) -> BigRational {
    let prod: BigInt = betas.iter().map(|&b| BigInt::from(b)).product();
    let i = betas.len() as u32;
    BigRational::from_integer(pow2(i * d as u32) * num_traits::pow(prod, d))
}

/// `2^-k / prod(beta_j for M_j <= k)`
pub fn delta_at(k: usize, levels: &[usize], betas: &[u64]) -> BigRational {
    let prod: BigInt = levels
        .iter()
        .zip(betas)
        .filter(|(&m, _)| m <= k)
        .map(|(_, &b)| BigInt::from(b))
        .product();
    BigRational::new(BigInt::one(), pow2(k as u32) * prod)
}

/// Number of avoidance levels `<= k`.
pub fn avoidance_levels_upto(k: usize, levels: &[usize]) -> usize {
    levels.iter().filter(|&&m| m <= k).count()
}

/// Checks the ratio condition `h(sqrt(d) delta_k) / (sqrt(d) delta_k)^d >= threshold`
/// at the over-approximated argument `sqrt_hi * delta_k`.
pub fn ratio_holds(
    h: &DimensionFunction,
    sqrt_hi: &BigRational,
    delta: &BigRational,
    threshold: &BigRational,
) -> Result<bool, ScheduleError> {
    let arg = sqrt_hi * delta;
    if !h.in_domain(&arg) {
        return Ok(false);
    }
    match h.ratio_ge(&arg, threshold) {
        Ok(v) => Ok(v),
        Err(DimFnError::Undecidable { .. }) => Ok(false),
        Err(e) => Err(e.into()),
    }
}

/// Smallest `k >= min_k` satisfying the ratio condition for step `i = betas.len()`,
/// where `delta_k` already includes every beta in `betas`.
pub fn next_level(
    h: &DimensionFunction,
    d: usize,
    sqrt_hi: &BigRational,
    min_k: usize,
    betas: &[u64],
    cap: usize,
) -> Result<usize, ScheduleError> {
    let threshold = ratio_threshold(d, betas);
    let prod: BigInt = betas.iter().map(|&b| BigInt::from(b)).product();
    let mut k = min_k;
    while k <= cap {
        let delta = BigRational::new(BigInt::one(), pow2(k as u32) * &prod);
        if ratio_holds(h, sqrt_hi, &delta, &threshold)? {
            return Ok(k);
        }
        k += 1;
    }
    Err(ScheduleError::ScheduleOverflow { cap })
}

/// Greedy minimal levels `M_1 < M_2 < ...` for a fixed list of betas.
pub fn compute_levels(
    h: &DimensionFunction,
    betas: &[u64],
    d: usize,
    count: usize,
    cap: usize,
) -> Result<Vec<usize>, ScheduleError> {
    assert!(count >= 1 && count <= betas.len(), "need one beta per level");
    let sqrt_hi = sqrt_d(d).hi;
    let mut levels: Vec<usize> = Vec::with_capacity(count);
    for i in 0..count {
        let min_k = levels.last().map_or(2, |&m| m + 2);
        levels.push(next_level(h, d, &sqrt_hi, min_k, &betas[..=i], cap)?);
    }
    Ok(levels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelInfo {
    pub k: usize,
    pub delta: BigRational,
    pub count: BigUint,
}

/// Exact side lengths `delta_k` and cube counts `N_k` for `0 <= k <= depth`.
pub fn level_profile(d: usize, levels: &[usize], betas: &[u64], depth: usize) -> Vec<LevelInfo> {
    (0..=depth)
        .map(|k| {
            let j = avoidance_levels_upto(k, levels);
            LevelInfo {
                k,
                delta: delta_at(k, levels, betas),
                count: BigUint::one() << (d * (k - j)),
            }
        })
        .collect()
}

/// `2^{d (level - #M_j <= level)}`, saturating.
pub fn count_at_level(d: usize, levels: &[usize], level: usize) -> u128 {
    let bits = d * (level - avoidance_levels_upto(level, levels));
    if bits >= 127 {
        u128::MAX
    } else {
        1u128 << bits
    }
}

/// Resolved schedule constants for the processed steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleParams {
    pub betas: Vec<u64>,
    pub levels: Vec<usize>,
    pub sqrt_d: Interval,
}

impl ScheduleParams {
    /// Checks the structural invariants: `beta_i` fits the pattern of step
    /// `i`, levels are spaced by at least two, and the ratio condition holds
    /// at every `M_i`.
    pub fn validate(
        &self,
        h: &DimensionFunction,
        d: usize,
        step_patterns: &[&NormalizedPattern],
    ) -> Result<(), ScheduleError> {
        if self.betas.len() != self.levels.len() || self.levels.len() != step_patterns.len() {
            return Err(ScheduleError::Invalid("betas, levels and entries disagree in length".into()));
        }
        for (i, (&beta, np)) in self.betas.iter().zip(step_patterns).enumerate() {
            if !beta_fits(np, beta, &self.sqrt_d.hi) {
                return Err(ScheduleError::Invalid(format!("beta_{} = {beta} violates the ball bound", i + 1)));
            }
        }
        let mut prev: Option<usize> = None;
        for (i, &m) in self.levels.iter().enumerate() {
            let ok = match prev {
                None => m >= 2,
                Some(p) => m >= p + 2,
            };
            if !ok {
                return Err(ScheduleError::Invalid(format!("M_{} = {m} violates spacing", i + 1)));
            }
            prev = Some(m);
            let delta = delta_at(m, &self.levels, &self.betas);
            let threshold = ratio_threshold(d, &self.betas[..=i]);
            if !ratio_holds(h, &self.sqrt_d.hi, &delta, &threshold)? {
                return Err(ScheduleError::Invalid(format!("ratio condition fails at M_{} = {m}", i + 1)));
            }
        }
        Ok(())
    }
}

/// One step of the schedule: at level `m_level`, the descendants of the
/// tuple members (all at `level`) are placed on the lattice of `pattern_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub i: usize,
    pub pattern_id: usize,
    pub level: usize,
    #[serde(with = "address_list")]
    pub tuple: Vec<CubeAddress>,
    #[serde(rename = "M_i")]
    pub m_level: usize,
    #[serde(rename = "beta_i")]
    pub beta: u64,
}

mod address_list {
    use crate::engine::CubeAddress;
    use serde::{de, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(tuple: &[CubeAddress], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(tuple.len()))?;
        for a in tuple {
            seq.serialize_element(&a.digit_string())?;
        }
        seq.end()
    }

    /// Addresses come back without their level; the entry's `level` field is
    /// applied by [`super::ScheduleEntry::resolve_levels`].
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CubeAddress>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| CubeAddress::parse_digits(s).map_err(de::Error::custom))
            .collect()
    }
}

impl ScheduleEntry {
    pub fn resolve_levels(&mut self) {
        for a in &mut self.tuple {
            a.level = self.level;
        }
    }

    /// Tuple members are pairwise distinct, share the entry level, and sit at
    /// least two levels below the avoidance level.
    pub fn check_invariants(&self) -> Result<(), ScheduleError> {
        if self.level + 2 > self.m_level {
            return Err(ScheduleError::Invalid(format!(
                "entry {}: tuple level {} too close to M_i = {}",
                self.i, self.level, self.m_level
            )));
        }
        for (a, x) in self.tuple.iter().enumerate() {
            if x.level != self.level {
                return Err(ScheduleError::Invalid(format!("entry {}: mixed tuple levels", self.i)));
            }
            if self.tuple[..a].iter().any(|y| y.digits == x.digits) {
                return Err(ScheduleError::Invalid(format!("entry {}: repeated address", self.i)));
            }
        }
        Ok(())
    }
}

/// Position in the dovetail order: `weight = cycle + level + rank`, pattern innermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub weight: u64,
    pub cycle: u64,
    pub level: u64,
    pub pattern: usize,
}

impl Slot {
    pub fn rank(&self) -> u64 {
        self.weight - self.cycle - self.level
    }
}

fn triangular(n: u64) -> u64 {
    n * (n + 1) / 2
}

/// Raw position of `(cycle, pattern, level, rank)` in the dovetail order with
/// `patterns` patterns. Every combination has a finite position, and for
/// each fixed `(pattern, level, rank)` there is one position per cycle.
pub fn slot_position(patterns: usize, cycle: u64, pattern: usize, level: u64, rank: u64) -> u64 {
    let p = patterns as u64;
    let w = cycle + level + rank;
    // (cycle, level) pairs with cycle + level <= weight, in lexicographic order
    let before_weight: u64 = (0..w).map(|x| triangular(x + 1)).sum();
    let before_cycle: u64 = (0..cycle).map(|c| w - c + 1).sum();
    p * (before_weight + before_cycle + level) + pattern as u64
}

/// Falling factorial `n (n-1) ... (n-k+1)`, saturating.
pub fn ordered_tuples(n: u128, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for t in 0..k as u128 {
        if t >= n {
            return 0;
        }
        acc = acc.saturating_mul(n - t);
    }
    acc
}

/// The `rank`-th ordered `k`-tuple of distinct indices from `[0, n)` in
/// lexicographic order.
pub fn unrank_tuple(mut rank: u128, n: u128, k: usize) -> Option<Vec<u64>> {
    if rank >= ordered_tuples(n, k) {
        return None;
    }
    let mut chosen: Vec<u64> = Vec::with_capacity(k);
    for t in 0..k {
        let block = ordered_tuples(n - t as u128 - 1, k - t - 1);
        let choice = (rank / block) as u64;
        rank %= block;
        let mut used: Vec<u64> = chosen.clone();
        used.sort_unstable();
        let mut value = choice;
        for u in used {
            if u <= value {
                value += 1;
            }
        }
        chosen.push(value);
    }
    Some(chosen)
}

/// Stateful cursor over the dovetail order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleEnumerator {
    patterns: usize,
    cursor: Slot,
    position: u64,
}

impl TupleEnumerator {
    pub fn new(patterns: usize) -> Self {
        assert!(patterns >= 1, "need at least one pattern");
        TupleEnumerator {
            patterns,
            cursor: Slot { weight: 0, cycle: 0, level: 0, pattern: 0 },
            position: 0,
        }
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    /// Returns the current raw slot and advances.
    pub fn next_slot(&mut self) -> Slot {
        let out = self.cursor;
        let c = &mut self.cursor;
        c.pattern += 1;
        if c.pattern == self.patterns {
            c.pattern = 0;
            c.level += 1;
            if c.level > c.weight - c.cycle {
                c.level = 0;
                c.cycle += 1;
                if c.cycle > c.weight {
                    c.cycle = 0;
                    c.weight += 1;
                }
            }
        }
        self.position += 1;
        out
    }

    /// Next slot whose tuple exists: the level has at least `arity(pattern)`
    /// cubes and the rank is in range. `count_at` gives the cube count per level.
    pub fn next_admissible<A, C>(&mut self, arity: A, count_at: C) -> Result<(Slot, Vec<u64>), ScheduleError>
    where
        A: Fn(usize) -> usize,
        C: Fn(usize) -> u128,
    {
        for _ in 0..MAX_SLOT_SCAN {
            let slot = self.next_slot();
            let n = count_at(slot.level as usize);
            if let Some(t) = unrank_tuple(slot.rank() as u128, n, arity(slot.pattern)) {
                return Ok((slot, t));
            }
        }
        Err(ScheduleError::Starved { scanned: MAX_SLOT_SCAN })
    }
}

/// Plans schedule entries one at a time: picks the next admissible tuple,
/// sizes `beta_i` from its pattern, then the smallest admissible `M_i`.
#[derive(Debug, Clone)]
pub struct Planner {
    d: usize,
    h: DimensionFunction,
    sqrt: Interval,
    pattern_betas: Vec<u64>,
    arities: Vec<usize>,
    enumerator: TupleEnumerator,
    levels: Vec<usize>,
    betas: Vec<u64>,
    level_cap: usize,
}

impl Planner {
    pub fn new(d: usize, h: DimensionFunction, patterns: &[NormalizedPattern], level_cap: usize) -> Self {
        let sqrt = sqrt_d(d);
        Planner {
            d,
            h,
            pattern_betas: patterns.iter().map(|np| compute_beta(np, &sqrt.hi)).collect(),
            arities: patterns.iter().map(NormalizedPattern::arity).collect(),
            enumerator: TupleEnumerator::new(patterns.len()),
            sqrt,
            levels: Vec::new(),
            betas: Vec::new(),
            level_cap,
        }
    }

    pub fn sqrt_d(&self) -> &Interval {
        &self.sqrt
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn betas(&self) -> &[u64] {
        &self.betas
    }

    pub fn pattern_beta(&self, pattern_id: usize) -> u64 {
        self.pattern_betas[pattern_id]
    }

    /// Cube count at level `level`, assuming no avoidance level is added at or below it.
    pub fn count_at(&self, level: usize) -> u128 {
        count_at_level(self.d, &self.levels, level)
    }

    pub fn plan_next(&mut self) -> Result<ScheduleEntry, ScheduleError> {
        let last = self.levels.last().copied();
        let (slot, tuple) = {
            let arities = &self.arities;
            let levels = &self.levels;
            let d = self.d;
            // any later M_i lands at least two levels above the chosen tuple
            // level, so counts computed from the current levels are final
            self.enumerator
                .next_admissible(|p| arities[p], |level| count_at_level(d, levels, level))?
        };
        let level = slot.level as usize;
        let beta = self.pattern_betas[slot.pattern];
        let mut betas = self.betas.clone();
        betas.push(beta);
        let min_k = [2, last.map_or(0, |m| m + 2), level + 2].into_iter().max().unwrap_or(2);
        let m_level = next_level(&self.h, self.d, &self.sqrt.hi, min_k, &betas, self.level_cap)?;
        let j = avoidance_levels_upto(level, &self.levels);
        let digits = level - j;
        self.levels.push(m_level);
        self.betas.push(beta);
        Ok(ScheduleEntry {
            i: self.levels.len(),
            pattern_id: slot.pattern,
            level,
            tuple: tuple
                .into_iter()
                .map(|index| CubeAddress::from_index(level, digits, index, self.d))
                .collect(),
            m_level,
            beta,
        })
    }
}
