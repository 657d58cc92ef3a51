//! File formats: pattern files, tree files, certificates, schedule logs and
//! point exports. Every certified quantity is written as an exact `p/q` string.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{GapCertificate, MeasureCertificate, OracleReport};
use crate::dimfn::{DimFnError, DimensionFunction};
use crate::engine::{ConstructionState, CubeAddress, EngineError, Level};
use crate::numeric::{parse_rational, rational_vec, to_decimal_string};
use crate::pattern::{LinearPattern, PatternError};
use crate::schedule::ScheduleEntry;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("export needs d <= 2, got d = {0}")]
    UnsupportedDimension(usize),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    DimFn(#[from] DimFnError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl IoError {
    pub fn kind(&self) -> &'static str {
        match self {
            IoError::Json(_) => "MalformedJson",
            IoError::Format(_) => "MalformedFile",
            IoError::UnsupportedDimension(_) => "UnsupportedDimension",
            IoError::Pattern(e) => e.kind(),
            IoError::DimFn(e) => e.kind(),
            IoError::Engine(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternRecord {
    pub m: usize,
    pub coeffs: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternFile {
    pub d: usize,
    pub patterns: Vec<PatternRecord>,
}

impl PatternFile {
    pub fn from_patterns(d: usize, patterns: &[LinearPattern]) -> Self {
        let patterns = patterns
            .iter()
            .map(|p| PatternRecord {
                m: p.arity(),
                coeffs: p.blocks().map(|b| b.iter().map(crate::numeric::format_rational).collect()).collect(),
            })
            .collect();
        PatternFile { d, patterns }
    }

    pub fn to_patterns(&self) -> Result<Vec<LinearPattern>, IoError> {
        self.patterns
            .iter()
            .map(|rec| {
                if rec.coeffs.len() != rec.m {
                    return Err(IoError::Format(format!("pattern declares m = {} but has {} blocks", rec.m, rec.coeffs.len())));
                }
                let blocks = rec
                    .coeffs
                    .iter()
                    .map(|b| {
                        b.iter()
                            .map(|s| parse_rational(s).map_err(|e| IoError::Format(e.to_string())))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(LinearPattern::new(self.d, blocks)?)
            })
            .collect()
    }
}

pub fn read_pattern_file(text: &str) -> Result<(usize, Vec<LinearPattern>), IoError> {
    let file: PatternFile = serde_json::from_str(text)?;
    let patterns = file.to_patterns()?;
    Ok((file.d, patterns))
}

pub fn write_pattern_file(d: usize, patterns: &[LinearPattern]) -> String {
    to_pretty(&PatternFile::from_patterns(d, patterns))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeRecord {
    pub addr: String,
    #[serde(with = "rational_vec")]
    pub lower: Vec<BigRational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeFile {
    pub d: usize,
    pub h: String,
    pub depth: usize,
    pub betas: Vec<u64>,
    #[serde(rename = "levels_M")]
    pub levels_m: Vec<usize>,
    pub schedule: Vec<ScheduleEntry>,
    pub cubes: BTreeMap<usize, Vec<CubeRecord>>,
    pub patterns: Vec<PatternRecord>,
}

impl TreeFile {
    pub fn from_state(state: &ConstructionState) -> Self {
        let d = state.dim();
        let cubes = state
            .levels()
            .iter()
            .map(|level| {
                let records = (0..level.len(d))
                    .map(|i| CubeRecord {
                        addr: CubeAddress::from_index(level.k, level.digits, i as u64, d).digit_string(),
                        lower: level.lower(i, d).to_vec(),
                    })
                    .collect();
                (level.k, records)
            })
            .collect();
        TreeFile {
            d,
            h: state.dimfn().spec_string(),
            depth: state.depth(),
            betas: state.betas(),
            levels_m: state.avoidance_levels(),
            schedule: state.entries().to_vec(),
            cubes,
            patterns: PatternFile::from_patterns(d, state.patterns()).patterns,
        }
    }

    /// Rebuilds the state, replaying the schedule from the stored inputs.
    pub fn to_state(&self, level_cap: usize) -> Result<ConstructionState, IoError> {
        let d = self.d;
        if d == 0 {
            return Err(IoError::Format("d must be positive".into()));
        }
        let h = DimensionFunction::parse(&self.h, d as u32)?;
        let patterns = PatternFile { d, patterns: self.patterns.clone() }.to_patterns()?;
        let mut entries = self.schedule.clone();
        for e in &mut entries {
            e.resolve_levels();
        }
        if self.cubes.len() != self.depth + 1 || self.cubes.keys().copied().ne(0..=self.depth) {
            return Err(IoError::Format("cube levels must run from 0 to depth".into()));
        }
        let mut levels = Vec::with_capacity(self.depth + 1);
        let mut digits = 0usize;
        let mut side = BigRational::from_integer(1.into());
        let m_levels: Vec<usize> = entries.iter().map(|e| e.m_level).collect();
        for (&k, records) in &self.cubes {
            if k > 0 {
                if !m_levels.contains(&k) {
                    digits += 1;
                }
                side = crate::schedule::delta_at(k, &m_levels, &entries.iter().map(|e| e.beta).collect::<Vec<_>>());
            }
            let mut lowers = Vec::with_capacity(records.len() * d);
            for (i, rec) in records.iter().enumerate() {
                let addr = CubeAddress::parse_digits(&rec.addr).map_err(IoError::Format)?;
                if addr.digits.len() != digits || addr.index(d) != i as u64 || rec.lower.len() != d {
                    return Err(IoError::Format(format!("cube {} at level {k} is out of order or malformed", rec.addr)));
                }
                lowers.extend(rec.lower.iter().cloned());
            }
            levels.push(Level { k, side: side.clone(), digits, lowers });
        }
        let state = ConstructionState::from_parts(d, patterns, h, level_cap, entries, levels)?;
        if state.betas() != self.betas || state.avoidance_levels() != self.levels_m {
            return Err(IoError::Format("betas or levels_M disagree with the schedule".into()));
        }
        Ok(state)
    }
}

pub fn write_tree(state: &ConstructionState) -> String {
    to_pretty(&TreeFile::from_state(state))
}

pub fn read_tree(text: &str, level_cap: usize) -> Result<ConstructionState, IoError> {
    let tree: TreeFile = serde_json::from_str(text)?;
    tree.to_state(level_cap)
}

/// One JSON record per processed entry.
pub fn write_schedule_log(entries: &[ScheduleEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("entries serialize") + "\n")
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRun {
    pub entry: usize,
    pub tuples_checked: String,
    pub instances: usize,
}

impl OracleRun {
    pub fn new(entry: usize, report: &OracleReport) -> Self {
        OracleRun { entry, tuples_checked: report.tuples_checked.to_string(), instances: report.instances.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub gaps: Vec<GapCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureCertificate>,
    pub oracle_runs: Vec<OracleRun>,
}

pub fn write_certificates(file: &CertificateFile) -> String {
    to_pretty(file)
}

/// Leaf centers as decimals, truncated to `digits` places.
pub fn write_centers_csv(state: &ConstructionState, digits: usize) -> String {
    let d = state.dim();
    let mut out = (0..d).map(|v| format!("x{v}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for c in state.leaf_centers() {
        out.push_str(&c.iter().map(|x| to_decimal_string(x, digits)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Leaf centers as exact `p/q` values, one point per line.
pub fn write_points_csv(points: &[Vec<BigRational>]) -> String {
    points
        .iter()
        .map(|p| p.iter().map(crate::numeric::format_rational).collect::<Vec<_>>().join(",") + "\n")
        .collect()
}

/// Reads exact points; blank lines and lines starting with `#` or a letter are skipped.
pub fn read_points_csv(text: &str) -> Result<Vec<Vec<BigRational>>, IoError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with(|c: char| c.is_ascii_alphabetic()))
        .map(|l| {
            l.split(',')
                .map(|t| parse_rational(t.trim()).map_err(|e| IoError::Format(e.to_string())))
                .collect()
        })
        .collect()
}

const SVG_SIZE: f64 = 800.0;
const SVG_ROW: f64 = 14.0;

/// Cube outlines per level. In `d = 1` each level is a row of intervals; in
/// `d = 2` all levels are overlaid, deeper levels drawn thinner.
pub fn write_svg(state: &ConstructionState) -> Result<String, IoError> {
    let d = state.dim();
    if d > 2 {
        return Err(IoError::UnsupportedDimension(d));
    }
    let f = |x: &BigRational| {
        use num_traits::ToPrimitive;
        x.to_f64().unwrap_or(f64::NAN)
    };
    let depth = state.depth();
    let height = if d == 1 { SVG_ROW * (depth + 1) as f64 } else { SVG_SIZE };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{height}" viewBox="0 0 {SVG_SIZE} {height}">"#
    );
    for level in state.levels() {
        let stroke = 1.0 / (1.0 + level.k as f64 * 0.25);
        let _ = writeln!(out, r#"<g id="level-{}" fill="none" stroke="black" stroke-width="{stroke:.3}">"#, level.k);
        let side = f(&level.side) * SVG_SIZE;
        for i in 0..level.len(d) {
            let lower = level.lower(i, d);
            let x = (f(&lower[0]) - 1.0) * SVG_SIZE;
            let (y, h) = if d == 1 {
                (SVG_ROW * level.k as f64 + 2.0, SVG_ROW - 4.0)
            } else {
                (SVG_SIZE - (f(&lower[1]) - 1.0) * SVG_SIZE - side, side)
            };
            let _ = writeln!(out, r#"<rect x="{x:.6}" y="{y:.6}" width="{side:.6}" height="{h:.6}"/>"#);
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimfn::{make_dimfn, Family};
    use crate::engine::init;
    use crate::numeric::{int, rat};

    fn ap_build(depth: usize) -> ConstructionState {
        let h = make_dimfn(Family::Power, &rat(1, 2), 1).unwrap();
        init(1, vec![LinearPattern::scalar(&[(1, 1), (-2, 1), (1, 1)]).unwrap()], h, 64)
            .unwrap()
            .build(depth)
            .unwrap()
    }

    #[test]
    fn pattern_file_parses() {
        let text = r#"{"d":1,"patterns":[{"m":3,"coeffs":[["1"],["-2"],["1/1"]]}]}"#;
        let (d, ps) = read_pattern_file(text).unwrap();
        assert_eq!(d, 1);
        assert_eq!(ps[0], LinearPattern::scalar(&[(1, 1), (-2, 1), (1, 1)]).unwrap());
        let bad = r#"{"d":1,"patterns":[{"m":2,"coeffs":[["1"],["-2"],["1"]]}]}"#;
        assert!(matches!(read_pattern_file(bad), Err(IoError::Format(_))));
    }

    #[test]
    fn tree_reload_is_identical() {
        let s = ap_build(7);
        let text = write_tree(&s);
        assert!(text.contains("\"levels_M\""));
        let back = read_tree(&text, 64).unwrap();
        assert_eq!(write_tree(&back), text);
        back.verify_structure().unwrap();
    }

    #[test]
    fn tree_rejects_foreign_schedule() {
        let s = ap_build(7);
        let mut tree = TreeFile::from_state(&s);
        tree.schedule[0].tuple.swap(0, 1);
        assert!(matches!(tree.to_state(64), Err(IoError::Engine(EngineError::ScheduleMismatch { .. }))));
    }

    #[test]
    fn exports() {
        let s = ap_build(7);
        let csv = write_centers_csv(&s, 8);
        assert_eq!(csv.lines().count(), 65);
        let pts = read_points_csv(&write_points_csv(&s.leaf_centers())).unwrap();
        assert_eq!(pts, s.leaf_centers());
        let svg = write_svg(&s).unwrap();
        assert_eq!(svg.matches("<rect").count(), (0..=7).map(|k| s.level(k).len(1)).sum::<usize>());
        assert_eq!(read_points_csv("x0\n1/2\n\n# c\n3").unwrap(), vec![vec![rat(1, 2)], vec![int(3)]]);
    }

    #[test]
    fn svg_dimension_limit() {
        let h = make_dimfn(Family::Power, &int(1), 3).unwrap();
        let p = LinearPattern::new(3, vec![vec![int(1), int(0), int(0)], vec![int(-1), int(0), int(0)]]).unwrap();
        let s = init(3, vec![p], h, 64).unwrap();
        assert!(matches!(write_svg(&s), Err(IoError::UnsupportedDimension(3))));
    }
}
