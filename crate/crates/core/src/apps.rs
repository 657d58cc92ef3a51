//! Pattern families for the applications: quotient, difference, plane, ratio,
//! parallelogram, trapezoid and similar-triplet avoidance.

use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::certify::{certify_all_gaps, certify_measure, CertifyError, GapCertificate, MeasureCertificate};
use crate::dimfn::{DimFnError, DimensionFunction};
use crate::engine::{init, ConstructionState, EngineError};
use crate::numeric::{exp_bounds, format_rational, int, ln_bounds, parse_rational, rat, Interval};
use crate::pattern::{LinearPattern, PatternError};

pub type Gaussian = Complex<BigRational>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AppError {
    #[error("quotient value 1 is not allowed")]
    RejectUnit,
    #[error("ratio {0} must exceed 1")]
    RejectRange(String),
    #[error("difference target must be nonzero")]
    RejectZero,
    #[error("every output row is zero")]
    AllRowsZero,
    #[error("triplet entries must be pairwise distinct")]
    DegenerateTriplet,
    #[error("enclosure radius {radius} leaves no margin in entry {entry}")]
    EnclosureTooWide { entry: usize, radius: String },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    DimFn(#[from] DimFnError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

impl AppError {
    pub fn kind(&self) -> &'static str {
        match self {
            AppError::RejectUnit => "RejectUnit",
            AppError::RejectRange(_) => "RejectRange",
            AppError::RejectZero => "RejectZero",
            AppError::AllRowsZero => "AllRowsZero",
            AppError::DegenerateTriplet => "DegenerateTriplet",
            AppError::EnclosureTooWide { .. } => "EnclosureTooWide",
            AppError::BadParams(_) => "BadParams",
            AppError::Pattern(e) => e.kind(),
            AppError::DimFn(e) => e.kind(),
            AppError::Engine(e) => e.kind(),
            AppError::Certify(e) => e.kind(),
        }
    }
}

/// `a x - y` for each `a`: no pair with `y / x = a`.
pub fn quotient_patterns(values: &[BigRational]) -> Result<Vec<LinearPattern>, AppError> {
    values
        .iter()
        .map(|a| {
            if a.is_one() {
                return Err(AppError::RejectUnit);
            }
            Ok(LinearPattern::new(1, vec![vec![a.clone()], vec![-BigRational::one()]])?)
        })
        .collect()
}

/// `a x + b y + c z` for each plane through the origin.
pub fn plane_patterns(planes: &[[BigRational; 3]]) -> Result<Vec<LinearPattern>, AppError> {
    planes
        .iter()
        .map(|p| Ok(LinearPattern::new(1, p.iter().map(|c| vec![c.clone()]).collect())?))
        .collect()
}

/// `x - alpha y + (alpha - 1) z`: no triple with `(z - x)/(z - y) = alpha`.
pub fn ratio_patterns(alphas: &[BigRational]) -> Result<Vec<LinearPattern>, AppError> {
    alphas
        .iter()
        .map(|a| {
            if *a <= BigRational::one() {
                return Err(AppError::RejectRange(format_rational(a)));
            }
            let row = [BigRational::one(), -a.clone(), a - BigRational::one()];
            Ok(LinearPattern::new(1, row.into_iter().map(|c| vec![c]).collect())?)
        })
        .collect()
}

/// One scalar pattern per nonzero row of a vector-valued form. Each row lists
/// `m * d` coefficients, block-major.
pub fn split_vector_pattern(d: usize, m: usize, rows: &[Vec<BigRational>]) -> Result<Vec<LinearPattern>, AppError> {
    let mut out = Vec::new();
    for row in rows {
        if row.len() != m * d {
            return Err(AppError::BadParams(format!("row has {} coefficients, expected {}", row.len(), m * d)));
        }
        if row.iter().all(Zero::is_zero) {
            continue;
        }
        out.push(LinearPattern::new(d, row.chunks(d).map(<[BigRational]>::to_vec).collect())?);
    }
    if out.is_empty() {
        return Err(AppError::AllRowsZero);
    }
    Ok(out)
}

/// Rows `sum_l w_l x_{l,v}` for every coordinate `v`.
fn coordinatewise(d: usize, weights: &[BigRational]) -> Vec<Vec<BigRational>> {
    (0..d)
        .map(|v| {
            weights
                .iter()
                .flat_map(|w| (0..d).map(move |u| if u == v { w.clone() } else { BigRational::zero() }))
                .collect()
        })
        .collect()
}

/// Vertices `x1, x2, x3, x4` (in order) of a parallelogram satisfy `x1 - x2 + x3 - x4 = 0`.
pub fn parallelogram_patterns(d: usize) -> Result<Vec<LinearPattern>, AppError> {
    let w = [int(1), int(-1), int(1), int(-1)];
    split_vector_pattern(d, 4, &coordinatewise(d, &w))
}

/// `x1 - x2 - alpha (x3 - x4)` per coordinate: parallel sides in proportion `alpha`.
pub fn trapezoid_patterns(d: usize, alphas: &[BigRational]) -> Result<Vec<LinearPattern>, AppError> {
    let mut out = Vec::new();
    for a in alphas {
        if a.is_zero() {
            return Err(AppError::BadParams("trapezoid proportion must be nonzero".into()));
        }
        let w = [int(1), int(-1), -a.clone(), a.clone()];
        out.extend(split_vector_pattern(d, 4, &coordinatewise(d, &w))?);
    }
    Ok(out)
}

/// Real and imaginary rows of `x - alpha y + (alpha - 1) z` with
/// `alpha = (z0 - x0)/(z0 - y0)`, over `C = R^2`.
pub fn complex_triplet_patterns(triplets: &[[Gaussian; 3]]) -> Result<Vec<LinearPattern>, AppError> {
    let mut out = Vec::new();
    for [x, y, z] in triplets {
        if x == y || y == z || x == z {
            return Err(AppError::DegenerateTriplet);
        }
        let alpha = (z - x) / (z - y);
        let one = Gaussian::new(BigRational::one(), BigRational::zero());
        let coeffs = [one.clone(), -alpha.clone(), alpha - one];
        // (p + qi)(u + iv) = (pu - qv) + i(qu + pv)
        let real: Vec<BigRational> = coeffs.iter().flat_map(|g| [g.re.clone(), -g.im.clone()]).collect();
        let imag: Vec<BigRational> = coeffs.iter().flat_map(|g| [g.im.clone(), g.re.clone()]).collect();
        out.extend(split_vector_pattern(2, 3, &[real, imag])?);
    }
    Ok(out)
}

/// A difference to avoid in `log E`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DifferenceTarget {
    /// A rational difference `t != 0`, avoided through an enclosure of `e^t`.
    Rational(BigRational),
    /// `ln a` for rational `a > 0`, avoided exactly through the quotient `a`.
    LogOf(BigRational),
}

impl DifferenceTarget {
    /// `t` as rational, or `ln:a`.
    pub fn parse(s: &str) -> Result<Self, AppError> {
        let bad = |e: String| AppError::BadParams(e);
        let target = match s.trim().strip_prefix("ln:") {
            Some(a) => DifferenceTarget::LogOf(parse_rational(a).map_err(|e| bad(e.to_string()))?),
            None => DifferenceTarget::Rational(parse_rational(s).map_err(|e| bad(e.to_string()))?),
        };
        match &target {
            DifferenceTarget::Rational(t) if t.is_zero() => Err(AppError::RejectZero),
            DifferenceTarget::LogOf(a) if !a.is_positive() => Err(AppError::BadParams("ln of non-positive".into())),
            DifferenceTarget::LogOf(a) if a.is_one() => Err(AppError::RejectZero),
            _ => Ok(target),
        }
    }

    /// Enclosure of the quotient `e^t`; exact for `ln a`.
    pub fn quotient(&self, bits: u32) -> Interval {
        match self {
            DifferenceTarget::Rational(t) => exp_bounds(t, bits),
            DifferenceTarget::LogOf(a) => Interval::point(a.clone()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DifferenceTarget::Rational(t) => format_rational(t),
            DifferenceTarget::LogOf(a) => format!("ln:{}", format_rational(a)),
        }
    }
}

/// Quotient patterns at the enclosure midpoints, with their radii.
pub fn difference_patterns(
    targets: &[DifferenceTarget],
    bits: u32,
) -> Result<(Vec<LinearPattern>, Vec<BigRational>), AppError> {
    let mut mids = Vec::new();
    let mut radii = Vec::new();
    for t in targets {
        let q = t.quotient(bits);
        let mid = (&q.lo + &q.hi) / int(2);
        radii.push(&q.hi - &mid);
        mids.push(mid);
    }
    Ok((quotient_patterns(&mids)?, radii))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifferenceMargin {
    pub entry: usize,
    pub target: String,
    /// Lower bound on `|a x - y|` for every `a` in the enclosure.
    #[serde(with = "crate::numeric::rational_str")]
    pub margin: BigRational,
}

/// Log-transformed leaves and the certified margins of a difference build.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifferenceReport {
    pub margins: Vec<DifferenceMargin>,
    /// Enclosures of `ln(center)` per deepest-level cube.
    pub points: Vec<Interval>,
    /// `1/2 <= |ln y - ln x| / |y - x| <= 1` on `[1, 2]`.
    pub lipschitz: (BigRational, BigRational),
}

/// Turns the gap certificates of a quotient build into margins valid for the
/// whole enclosure: `|a' x - y| >= gap/|scale| - r x >= gap/|scale| - 2r`.
pub fn difference_margins(
    state: &ConstructionState,
    gaps: &[GapCertificate],
    targets: &[DifferenceTarget],
    radii: &[BigRational],
    bits: u32,
) -> Result<DifferenceReport, AppError> {
    let mut margins = Vec::new();
    for g in gaps {
        let np = &state.normalized()[g.pattern_id];
        let gap_orig = &g.gap / np.scale.abs();
        let r = &radii[g.pattern_id];
        let margin = gap_orig - int(2) * r;
        if !margin.is_positive() {
            return Err(AppError::EnclosureTooWide { entry: g.entry, radius: format_rational(r) });
        }
        margins.push(DifferenceMargin { entry: g.entry, target: targets[g.pattern_id].label(), margin });
    }
    let points = state
        .leaf_centers()
        .iter()
        .map(|c| ln_bounds(&c[0], bits).round_outward(bits + 2))
        .collect();
    Ok(DifferenceReport { margins, points, lipschitz: (rat(1, 2), int(1)) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppKind {
    Quotients,
    Differences,
    Planes,
    Ratios,
    Parallelogram,
    Trapezoids,
    ComplexTriplets,
    VectorSplit,
}

/// Application run description, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppSpec {
    pub kind: AppKind,
    #[serde(default)]
    pub params: Value,
    pub h: String,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Bits for enclosures in the difference application.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<u32>,
}

pub const DEFAULT_DIFFERENCE_BITS: u32 = 96;

fn rational_of(v: &Value) -> Result<BigRational, AppError> {
    match v {
        Value::String(s) => parse_rational(s).map_err(|e| AppError::BadParams(e.to_string())),
        Value::Number(n) => parse_rational(&n.to_string()).map_err(|e| AppError::BadParams(e.to_string())),
        other => Err(AppError::BadParams(format!("expected a rational, got {other}"))),
    }
}

fn list_of(v: &Value) -> Result<&Vec<Value>, AppError> {
    v.as_array().ok_or_else(|| AppError::BadParams(format!("expected a list, got {v}")))
}

fn rationals_of(v: &Value) -> Result<Vec<BigRational>, AppError> {
    list_of(v)?.iter().map(rational_of).collect()
}

fn gaussian_of(v: &Value) -> Result<Gaussian, AppError> {
    match v {
        Value::Array(parts) if parts.len() == 2 => Ok(Gaussian::new(rational_of(&parts[0])?, rational_of(&parts[1])?)),
        other => Ok(Gaussian::new(rational_of(other)?, BigRational::zero())),
    }
}

impl AppSpec {
    pub fn dim(&self) -> usize {
        match self.kind {
            AppKind::Quotients | AppKind::Differences | AppKind::Planes | AppKind::Ratios => 1,
            AppKind::ComplexTriplets => 2,
            AppKind::Parallelogram | AppKind::Trapezoids => self.d.unwrap_or(2),
            AppKind::VectorSplit => self.d.or_else(|| self.params.get("d")?.as_u64().map(|d| d as usize)).unwrap_or(1),
        }
    }

    pub fn bits(&self) -> u32 {
        self.precision.unwrap_or(DEFAULT_DIFFERENCE_BITS)
    }

    pub fn difference_targets(&self) -> Result<Vec<DifferenceTarget>, AppError> {
        list_of(&self.params)?
            .iter()
            .map(|v| match v {
                Value::String(s) => DifferenceTarget::parse(s),
                other => DifferenceTarget::parse(&other.to_string()),
            })
            .collect()
    }

    pub fn patterns(&self) -> Result<Vec<LinearPattern>, AppError> {
        let p = &self.params;
        match self.kind {
            AppKind::Quotients => quotient_patterns(&rationals_of(p)?),
            AppKind::Differences => Ok(difference_patterns(&self.difference_targets()?, self.bits())?.0),
            AppKind::Planes => {
                let planes = list_of(p)?
                    .iter()
                    .map(|row| {
                        let r = rationals_of(row)?;
                        <[BigRational; 3]>::try_from(r).map_err(|_| AppError::BadParams("plane needs 3 coefficients".into()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                plane_patterns(&planes)
            }
            AppKind::Ratios => ratio_patterns(&rationals_of(p)?),
            AppKind::Parallelogram => parallelogram_patterns(self.dim()),
            AppKind::Trapezoids => trapezoid_patterns(self.dim(), &rationals_of(p)?),
            AppKind::ComplexTriplets => {
                let triplets = list_of(p)?
                    .iter()
                    .map(|t| {
                        let g = list_of(t)?.iter().map(gaussian_of).collect::<Result<Vec<_>, _>>()?;
                        <[Gaussian; 3]>::try_from(g).map_err(|_| AppError::BadParams("triplet needs 3 points".into()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                complex_triplet_patterns(&triplets)
            }
            AppKind::VectorSplit => {
                let m = p.get("m").and_then(Value::as_u64).ok_or_else(|| AppError::BadParams("missing m".into()))?;
                let rows = p
                    .get("rows")
                    .ok_or_else(|| AppError::BadParams("missing rows".into()))
                    .and_then(list_of)?
                    .iter()
                    .map(rationals_of)
                    .collect::<Result<Vec<_>, _>>()?;
                split_vector_pattern(self.dim(), m as usize, &rows)
            }
        }
    }
}

/// Everything produced by one application run.
#[derive(Debug, Clone)]
pub struct AppRun {
    pub state: ConstructionState,
    pub gaps: Vec<GapCertificate>,
    /// Absent when the build stops before the first avoidance level.
    pub measure: Option<MeasureCertificate>,
    pub differences: Option<DifferenceReport>,
}

pub fn run_app(spec: &AppSpec, level_cap: usize) -> Result<AppRun, AppError> {
    let d = spec.dim();
    let h = DimensionFunction::parse(&spec.h, d as u32)?;
    let patterns = spec.patterns()?;
    let state = init(d, patterns, h, level_cap)?.build(spec.depth)?;
    state.verify_structure()?;
    let gaps = certify_all_gaps(&state)?;
    let measure = match certify_measure(&state) {
        Ok(m) => Some(m),
        Err(CertifyError::EntryNotProcessed { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let differences = if spec.kind == AppKind::Differences {
        let targets = spec.difference_targets()?;
        let (_, radii) = difference_patterns(&targets, spec.bits())?;
        Some(difference_margins(&state, &gaps, &targets, &radii, spec.bits())?)
    } else {
        None
    };
    Ok(AppRun { state, gaps, measure, differences })
}
