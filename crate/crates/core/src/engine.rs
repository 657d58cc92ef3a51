//! Nested cube construction `E_0 ⊇ E_1 ⊇ ...` in exact rational geometry.
//!
//! Ordinary levels split every cube dyadically. At an avoidance level `M_i`
//! every cube gets a single child: descendants of the scheduled tuple are
//! snapped onto the lattice of the scheduled pattern, everything else keeps
//! the child anchored at its lower corner.
//!
//! Cubes are stored per level in address order, so a cube's address is its
//! position: at a split level child `a * 2^d + digit` descends from parent
//! `a`, and at an avoidance level the child keeps its parent's index.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::dimfn::{DimFnError, DimensionFunction};
use crate::numeric::{int, rat, Interval};
use crate::pattern::{normalize, LinearPattern, NormalizedPattern, PatternError};
use crate::schedule::{
    self, avoidance_levels_upto, delta_at, ratio_holds, ratio_threshold, Planner, ScheduleEntry, ScheduleError,
    ScheduleParams,
};

/// Default ceiling on construction depth; `LACUNA_LEVEL_CAP` overrides it in the CLI.
pub const DEFAULT_LEVEL_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("at least one pattern is required")]
    NoPatterns,
    #[error("pattern {pattern} has dimension {got}, expected {expected}")]
    DimensionMismatch { pattern: usize, expected: usize, got: usize },
    #[error("lattice cube at level {level}, index {index} does not fit its parent: {reason}")]
    PlacementFailure { level: usize, index: u64, reason: String },
    #[error("ratio condition fails at built level {level}")]
    RatioViolated { level: usize },
    #[error("structure check failed at level {level}, index {index}: {reason}")]
    Structure { level: usize, index: u64, reason: String },
    #[error("schedule entry {i} does not match the replayed schedule")]
    ScheduleMismatch { i: usize },
    #[error("address space exhausted at level {level}")]
    AddressOverflow { level: usize },
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    DimFn(#[from] DimFnError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

impl EngineError {
    pub fn kind(&self) -> &'static str {
        match self {
            EngineError::NoPatterns => "NoPatterns",
            EngineError::DimensionMismatch { .. } => "DimensionMismatch",
            EngineError::PlacementFailure { .. } => "PlacementFailure",
            EngineError::RatioViolated { .. } => "RatioViolated",
            EngineError::Structure { .. } => "StructureViolated",
            EngineError::ScheduleMismatch { .. } => "ScheduleMismatch",
            EngineError::AddressOverflow { .. } => "AddressOverflow",
            EngineError::Pattern(e) => e.kind(),
            EngineError::DimFn(e) => e.kind(),
            EngineError::Schedule(e) => e.kind(),
        }
    }
}

/// Path of branch digits (each in `[0, 2^d)`) from the root; avoidance
/// levels add no digit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CubeAddress {
    pub level: usize,
    pub digits: Vec<u8>,
}

impl CubeAddress {
    pub fn root() -> Self {
        CubeAddress { level: 0, digits: Vec::new() }
    }

    pub fn from_index(level: usize, ndigits: usize, index: u64, d: usize) -> Self {
        let mask = (1u64 << d) - 1;
        let digits = (0..ndigits)
            .rev()
            .map(|t| ((index >> (d * t)) & mask) as u8)
            .collect();
        CubeAddress { level, digits }
    }

    pub fn index(&self, d: usize) -> u64 {
        self.digits.iter().fold(0u64, |acc, &g| (acc << d) | g as u64)
    }

    /// One hex character per digit, or dot-separated decimals when a digit exceeds 15.
    pub fn digit_string(&self) -> String {
        if self.digits.iter().all(|&g| g < 16) {
            self.digits.iter().map(|&g| char::from_digit(g as u32, 16).unwrap_or('?')).collect()
        } else {
            self.digits.iter().map(u8::to_string).collect::<Vec<_>>().join(".")
        }
    }

    /// Inverse of [`CubeAddress::digit_string`]; the level is left at zero.
    pub fn parse_digits(s: &str) -> Result<Self, String> {
        let digits = if s.contains('.') {
            s.split('.')
                .map(|t| t.parse::<u8>().map_err(|_| format!("bad address digit {t:?}")))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            s.chars()
                .map(|ch| ch.to_digit(16).map(|g| g as u8).ok_or_else(|| format!("bad address digit {ch:?}")))
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(CubeAddress { level: 0, digits })
    }

    pub fn is_ancestor_of(&self, other: &CubeAddress) -> bool {
        self.level <= other.level && other.digits.starts_with(&self.digits)
    }
}

impl fmt::Display for CubeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}:{}", self.level, self.digit_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cube {
    pub address: CubeAddress,
    pub lower: Vec<BigRational>,
    pub side: BigRational,
}

impl Cube {
    pub fn center(&self) -> Vec<BigRational> {
        let half = &self.side / int(2);
        self.lower.iter().map(|x| x + &half).collect()
    }

    pub fn contains_cube(&self, other: &Cube) -> bool {
        self.lower
            .iter()
            .zip(&other.lower)
            .all(|(a, b)| b >= a && b + &other.side <= a + &self.side)
    }

    pub fn contains_point(&self, p: &[BigRational]) -> bool {
        self.lower.iter().zip(p).all(|(a, x)| x >= a && *x <= a + &self.side)
    }
}

/// All cubes of one level, stored by address index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level {
    pub k: usize,
    pub side: BigRational,
    /// Address length of cubes at this level.
    pub digits: usize,
    /// Lower corners, `d` coordinates per cube, in address order.
    pub lowers: Vec<BigRational>,
}

impl Level {
    pub fn len(&self, d: usize) -> usize {
        self.lowers.len() / d
    }

    pub fn is_empty(&self) -> bool {
        self.lowers.is_empty()
    }

    pub fn lower(&self, index: usize, d: usize) -> &[BigRational] {
        &self.lowers[index * d..(index + 1) * d]
    }

    pub fn cube(&self, index: usize, d: usize) -> Cube {
        Cube {
            address: CubeAddress::from_index(self.k, self.digits, index as u64, d),
            lower: self.lower(index, d).to_vec(),
            side: self.side.clone(),
        }
    }

    pub fn center(&self, index: usize, d: usize) -> Vec<BigRational> {
        let half = &self.side / int(2);
        self.lower(index, d).iter().map(|x| x + &half).collect()
    }
}

/// Result of a lattice placement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub lower: Vec<BigRational>,
    /// Integer lattice point `z` with child center `delta * 4c * phi(z)`.
    pub z: Vec<BigInt>,
}

/// Snaps a child of side `delta` inside `parent` onto `delta * (4c phi^block(Z^d) + [-1/2,1/2]^d)`.
///
/// Rounds the rescaled parent center to the nearest lattice point along each
/// axis (ties go up), then checks the distance bound and containment exactly.
pub fn place_on_lattice(
    parent: &Cube,
    np: &NormalizedPattern,
    block: usize,
    delta: &BigRational,
    sqrt_hi: &BigRational,
) -> Result<Placement, EngineError> {
    let d = np.dim();
    let four_c = int(4) * &np.c;
    let half = rat(1, 2);
    let mut lower = Vec::with_capacity(d);
    let mut z = Vec::with_capacity(d);
    let mut dist2 = BigRational::zero();
    let fail = |reason: String| EngineError::PlacementFailure {
        level: parent.address.level + 1,
        index: 0,
        reason,
    };
    for v in 0..d {
        let x = (&parent.lower[v] + &parent.side * &half) / delta;
        let offset = &four_c * np.shift(block, v);
        let unit = &four_c * np.lambda_at(block, v);
        let zv = ((&x - &offset) / &unit + &half).floor().to_integer();
        let center = &unit * BigRational::from_integer(zv.clone()) + &offset;
        let diff = &x - &center;
        dist2 += &diff * &diff;
        lower.push(delta * (&center - &half));
        z.push(zv);
    }
    let bound = &np.max_lambda * int(2) * &np.c * sqrt_hi;
    if dist2 > &bound * &bound {
        return Err(fail("rescaled center too far from the lattice".into()));
    }
    let child = Cube { address: parent.address.clone(), lower: lower.clone(), side: delta.clone() };
    if !parent.contains_cube(&child) {
        return Err(fail("child leaves parent".into()));
    }
    Ok(Placement { lower, z })
}

/// Recovers `z` from a child's center if it lies exactly on the lattice of `block`.
pub fn lattice_point(
    np: &NormalizedPattern,
    block: usize,
    center: &[BigRational],
    delta: &BigRational,
) -> Option<Vec<BigInt>> {
    let four_c = int(4) * &np.c;
    (0..np.dim())
        .map(|v| {
            let scaled = &center[v] / delta;
            let offset = &four_c * np.shift(block, v);
            let unit = &four_c * np.lambda_at(block, v);
            let q = (scaled - offset) / unit;
            q.is_integer().then(|| q.to_integer())
        })
        .collect()
}

/// Construction state: inputs, schedule, and every built level.
#[derive(Debug, Clone)]
pub struct ConstructionState {
    d: usize,
    h: DimensionFunction,
    patterns: Vec<LinearPattern>,
    normalized: Vec<NormalizedPattern>,
    planner: Planner,
    pending: Option<ScheduleEntry>,
    /// Next planned avoidance level lies beyond the level cap.
    exhausted: bool,
    entries: Vec<ScheduleEntry>,
    levels: Vec<Level>,
    level_cap: usize,
}

/// Starts a construction at `E_0 = [1,2]^d`.
pub fn init(
    d: usize,
    patterns: Vec<LinearPattern>,
    h: DimensionFunction,
    level_cap: usize,
) -> Result<ConstructionState, EngineError> {
    if patterns.is_empty() {
        return Err(EngineError::NoPatterns);
    }
    for (i, p) in patterns.iter().enumerate() {
        if p.dim() != d {
            return Err(EngineError::DimensionMismatch { pattern: i, expected: d, got: p.dim() });
        }
    }
    if h.dimension() as usize != d {
        return Err(EngineError::DimensionMismatch { pattern: usize::MAX, expected: d, got: h.dimension() as usize });
    }
    let normalized = patterns.iter().map(normalize).collect::<Result<Vec<_>, _>>()?;
    let planner = Planner::new(d, h.clone(), &normalized, level_cap);
    let root = Level { k: 0, side: BigRational::one(), digits: 0, lowers: vec![int(1); d] };
    Ok(ConstructionState {
        d,
        h,
        patterns,
        normalized,
        planner,
        pending: None,
        exhausted: false,
        entries: Vec::new(),
        levels: vec![root],
        level_cap,
    })
}

impl ConstructionState {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn dimfn(&self) -> &DimensionFunction {
        &self.h
    }

    pub fn patterns(&self) -> &[LinearPattern] {
        &self.patterns
    }

    pub fn normalized(&self) -> &[NormalizedPattern] {
        &self.normalized
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level_cap(&self) -> usize {
        self.level_cap
    }

    pub fn level(&self, k: usize) -> &Level {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Processed schedule entries, in order.
    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn sqrt_d(&self) -> &Interval {
        self.planner.sqrt_d()
    }

    pub fn avoidance_levels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.m_level).collect()
    }

    pub fn betas(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.beta).collect()
    }

    pub fn params(&self) -> ScheduleParams {
        ScheduleParams { betas: self.betas(), levels: self.avoidance_levels(), sqrt_d: self.sqrt_d().clone() }
    }

    pub fn delta(&self, k: usize) -> BigRational {
        delta_at(k, &self.avoidance_levels(), &self.betas())
    }

    pub fn cube(&self, address: &CubeAddress) -> Option<Cube> {
        let level = self.levels.get(address.level)?;
        let index = address.index(self.d) as usize;
        (address.digits.len() == level.digits && index < level.len(self.d)).then(|| level.cube(index, self.d))
    }

    /// Index range at level `k` of the descendants of `address`.
    pub fn descendant_range(&self, address: &CubeAddress, k: usize) -> std::ops::Range<usize> {
        let level = &self.levels[k];
        let shift = self.d * (level.digits - address.digits.len());
        let base = (address.index(self.d) as usize) << shift;
        base..base + (1usize << shift)
    }

    fn ensure_pending(&mut self) -> Result<(), EngineError> {
        if self.pending.is_none() && !self.exhausted {
            match self.planner.plan_next() {
                Ok(entry) => self.pending = Some(entry),
                Err(ScheduleError::ScheduleOverflow { .. }) => self.exhausted = true,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    /// The next planned (not yet processed) entry, if it lies within the cap.
    pub fn pending_entry(&mut self) -> Result<Option<&ScheduleEntry>, EngineError> {
        self.ensure_pending()?;
        Ok(self.pending.as_ref())
    }

    /// Builds level `depth + 1`.
    pub fn advance_level(&mut self) -> Result<(), EngineError> {
        let k = self.depth() + 1;
        if k > self.level_cap {
            return Err(ScheduleError::ScheduleOverflow { cap: self.level_cap }.into());
        }
        self.ensure_pending()?;
        let is_avoidance = self.pending.as_ref().is_some_and(|e| e.m_level == k);
        let level = if is_avoidance {
            let entry = self.pending.take().expect("checked above");
            let level = self.avoidance_level(k, &entry)?;
            self.entries.push(entry);
            level
        } else {
            self.split_level(k)?
        };
        self.levels.push(level);
        self.recheck_ratio(k)
    }

    fn split_level(&self, k: usize) -> Result<Level, EngineError> {
        let d = self.d;
        let parent = &self.levels[k - 1];
        let digits = parent.digits + 1;
        if d * digits > 63 {
            return Err(EngineError::AddressOverflow { level: k });
        }
        let side = &parent.side / int(2);
        let n = parent.len(d);
        let mut lowers = Vec::with_capacity(n * (d << d));
        for a in 0..n {
            let pl = parent.lower(a, d);
            for digit in 0..(1usize << d) {
                for (v, x) in pl.iter().enumerate() {
                    if digit >> v & 1 == 1 {
                        lowers.push(x + &side);
                    } else {
                        lowers.push(x.clone());
                    }
                }
            }
        }
        Ok(Level { k, side, digits, lowers })
    }

    fn avoidance_level(&self, k: usize, entry: &ScheduleEntry) -> Result<Level, EngineError> {
        let d = self.d;
        let np = &self.normalized[entry.pattern_id];
        let parent = &self.levels[k - 1];
        let mut betas = self.betas();
        betas.push(entry.beta);
        let mut levels = self.avoidance_levels();
        levels.push(k);
        let side = delta_at(k, &levels, &betas);
        let shift = d * (parent.digits - self.levels[entry.level].digits);
        let members: HashMap<u64, usize> =
            entry.tuple.iter().enumerate().map(|(l, a)| (a.index(d), l)).collect();
        let sqrt_hi = &self.sqrt_d().hi;
        let n = parent.len(d);
        let mut lowers = Vec::with_capacity(n * d);
        for a in 0..n {
            match members.get(&((a as u64) >> shift)) {
                Some(&block) => {
                    let cube = parent.cube(a, d);
                    let placed = place_on_lattice(&cube, np, block, &side, sqrt_hi).map_err(|e| match e {
                        EngineError::PlacementFailure { reason, .. } => {
                            EngineError::PlacementFailure { level: k, index: a as u64, reason }
                        }
                        other => other,
                    })?;
                    lowers.extend(placed.lower);
                }
                None => lowers.extend_from_slice(parent.lower(a, d)),
            }
        }
        Ok(Level { k, side, digits: parent.digits, lowers })
    }

    /// Re-verifies the ratio condition of the latest step at a freshly built level.
    fn recheck_ratio(&self, k: usize) -> Result<(), EngineError> {
        let levels = self.avoidance_levels();
        let j = avoidance_levels_upto(k, &levels);
        if j == 0 {
            return Ok(());
        }
        let betas = self.betas();
        let threshold = ratio_threshold(self.d, &betas[..j]);
        let delta = delta_at(k, &levels, &betas);
        if !ratio_holds(&self.h, &self.sqrt_d().hi, &delta, &threshold)? {
            return Err(EngineError::RatioViolated { level: k });
        }
        Ok(())
    }

    /// Advances until `depth` levels exist.
    pub fn build(mut self, depth: usize) -> Result<ConstructionState, EngineError> {
        if depth > self.level_cap {
            return Err(ScheduleError::ScheduleOverflow { cap: self.level_cap }.into());
        }
        while self.depth() < depth {
            self.advance_level()?;
        }
        Ok(self)
    }

    /// Rebuilds a state from stored parts: the schedule is replayed from the
    /// inputs and must agree with `entries`; cube geometry is taken as given.
    pub fn from_parts(
        d: usize,
        patterns: Vec<LinearPattern>,
        h: DimensionFunction,
        level_cap: usize,
        entries: Vec<ScheduleEntry>,
        levels: Vec<Level>,
    ) -> Result<ConstructionState, EngineError> {
        let mut state = init(d, patterns, h, level_cap)?;
        let depth = levels.len().saturating_sub(1);
        for stored in &entries {
            state.ensure_pending()?;
            match state.pending.take() {
                Some(planned) if planned == *stored && planned.m_level <= depth => state.entries.push(planned),
                _ => return Err(EngineError::ScheduleMismatch { i: stored.i }),
            }
        }
        // an unprocessed step must not have been due inside the stored depth
        state.ensure_pending()?;
        if let Some(next) = &state.pending {
            if next.m_level <= depth {
                return Err(EngineError::ScheduleMismatch { i: next.i });
            }
        }
        state.levels = levels;
        Ok(state)
    }

    /// Checks counts, side lengths, exact dyadic tiling at split levels, and
    /// single-child containment at avoidance levels. Together these give
    /// nestedness and disjoint interiors within each level.
    pub fn verify_structure(&self) -> Result<StructureReport, EngineError> {
        let d = self.d;
        let levels = self.avoidance_levels();
        let betas = self.betas();
        let bad = |level: usize, index: usize, reason: &str| EngineError::Structure {
            level,
            index: index as u64,
            reason: reason.to_string(),
        };
        let profile = schedule::level_profile(d, &levels, &betas, self.depth());
        let root = &self.levels[0];
        if root.lowers != vec![int(1); d] || !root.side.is_one() {
            return Err(bad(0, 0, "level 0 is not [1,2]^d"));
        }
        let mut cubes = 1usize;
        for (k, info) in profile.iter().enumerate().skip(1) {
            let level = &self.levels[k];
            let parent = &self.levels[k - 1];
            if level.k != k {
                return Err(bad(k, 0, "level index mismatch"));
            }
            if !level.lowers.len().is_multiple_of(d) || num_bigint::BigUint::from(level.len(d)) != info.count {
                return Err(bad(k, 0, "cube count differs from N_k"));
            }
            if level.side != info.delta {
                return Err(bad(k, 0, "side length differs from delta_k"));
            }
            let is_avoidance = levels.contains(&k);
            let expected_digits = k - avoidance_levels_upto(k, &levels);
            if level.digits != expected_digits {
                return Err(bad(k, 0, "address length mismatch"));
            }
            for i in 0..level.len(d) {
                let child = level.lower(i, d);
                if is_avoidance {
                    let pc = parent.cube(i, d);
                    let cc = Cube { address: pc.address.clone(), lower: child.to_vec(), side: level.side.clone() };
                    if !pc.contains_cube(&cc) {
                        return Err(bad(k, i, "child not contained in parent"));
                    }
                } else {
                    let a = i >> d;
                    let digit = i & ((1 << d) - 1);
                    let pl = parent.lower(a, d);
                    for v in 0..d {
                        let expect = if digit >> v & 1 == 1 { &pl[v] + &level.side } else { pl[v].clone() };
                        if child[v] != expect {
                            return Err(bad(k, i, "child is not the dyadic sub-cube of its parent"));
                        }
                    }
                }
            }
            cubes += level.len(d);
        }
        Ok(StructureReport { depth: self.depth(), cubes })
    }

    /// Cubes of the deepest level in address order.
    pub fn leaves(&self) -> Vec<Cube> {
        let level = &self.levels[self.depth()];
        (0..level.len(self.d)).map(|i| level.cube(i, self.d)).collect()
    }

    pub fn leaf_centers(&self) -> Vec<Vec<BigRational>> {
        let level = &self.levels[self.depth()];
        (0..level.len(self.d)).map(|i| level.center(i, self.d)).collect()
    }

    /// Test hook for mutation checks: overwrite one lower corner.
    pub fn overwrite_lower(&mut self, k: usize, index: usize, lower: Vec<BigRational>) {
        let d = self.d;
        self.levels[k].lowers[index * d..(index + 1) * d].clone_from_slice(&lower);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureReport {
    pub depth: usize,
    pub cubes: usize,
}
