//! Prediction sets: unions of closed intervals, finite label sets, and the
//! two degenerate cases.
//!
//! The textual form is `[lo,hi];[lo,hi]` for interval unions, `{0,2,5}` for
//! label sets, and `ENTIRE` / `EMPTY` for the degenerate regions. Endpoints
//! use shortest round-trip decimals, so parsing the text gives back the
//! same bits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModselError, Result};
use crate::pwl::tol_eq;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredictionRegion {
    IntervalUnion(Vec<Interval>),
    LabelSet(Vec<usize>),
    EntireSpace,
    Empty,
}

impl PredictionRegion {
    /// Sorts and merges intervals; intervals closer than the equality
    /// tolerance are fused. Reversed or NaN intervals are dropped.
    pub fn from_intervals(mut intervals: Vec<Interval>) -> Self {
        intervals.retain(|iv| iv.lo <= iv.hi);
        if intervals
            .iter()
            .any(|iv| iv.lo == f64::NEG_INFINITY && iv.hi == f64::INFINITY)
        {
            return Self::EntireSpace;
        }
        if intervals.is_empty() {
            return Self::Empty;
        }
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.lo <= last.hi + tol_eq(last.hi) => {
                    if iv.hi > last.hi {
                        last.hi = iv.hi;
                    }
                }
                _ => merged.push(iv),
            }
        }
        if merged.len() == 1 && merged[0].lo == f64::NEG_INFINITY && merged[0].hi == f64::INFINITY {
            return Self::EntireSpace;
        }
        Self::IntervalUnion(merged)
    }

    pub fn from_labels(mut labels: Vec<usize>) -> Self {
        labels.sort_unstable();
        labels.dedup();
        if labels.is_empty() {
            Self::Empty
        } else {
            Self::LabelSet(labels)
        }
    }

    pub fn intervals(&self) -> &[Interval] {
        match self {
            Self::IntervalUnion(v) => v,
            _ => &[],
        }
    }

    /// Lebesgue measure or cardinality; `+inf` for the entire space.
    pub fn measure(&self) -> f64 {
        match self {
            Self::IntervalUnion(v) => v.iter().map(Interval::width).sum(),
            Self::LabelSet(l) => l.len() as f64,
            Self::EntireSpace => f64::INFINITY,
            Self::Empty => 0.0,
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        match self {
            Self::IntervalUnion(v) => v.iter().any(|iv| iv.lo <= y && y <= iv.hi),
            Self::LabelSet(_) => false,
            Self::EntireSpace => true,
            Self::Empty => false,
        }
    }

    pub fn contains_label(&self, label: usize) -> bool {
        match self {
            Self::LabelSet(l) => l.binary_search(&label).is_ok(),
            Self::EntireSpace => true,
            _ => false,
        }
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        use PredictionRegion::*;
        Ok(match (self, other) {
            (EntireSpace, _) | (_, EntireSpace) => EntireSpace,
            (Empty, x) | (x, Empty) => x.clone(),
            (IntervalUnion(a), IntervalUnion(b)) => {
                Self::from_intervals(a.iter().chain(b.iter()).copied().collect())
            }
            (LabelSet(a), LabelSet(b)) => {
                Self::from_labels(a.iter().chain(b.iter()).copied().collect())
            }
            _ => return Err(ModselError::MixedRegions),
        })
    }

    /// Intersection with one closed interval (continuous regions only).
    pub fn intersect_interval(&self, window: Interval) -> Self {
        match self {
            Self::EntireSpace => Self::from_intervals(vec![window]),
            Self::IntervalUnion(v) => Self::from_intervals(
                v.iter()
                    .map(|iv| Interval::new(iv.lo.max(window.lo), iv.hi.min(window.hi)))
                    .collect(),
            ),
            Self::Empty => Self::Empty,
            Self::LabelSet(_) => self.clone(),
        }
    }

    /// Convex hull of a continuous region.
    pub fn hull(&self) -> Option<Interval> {
        match self {
            Self::IntervalUnion(v) => Some(Interval::new(v[0].lo, v[v.len() - 1].hi)),
            Self::EntireSpace => Some(Interval::new(f64::NEG_INFINITY, f64::INFINITY)),
            _ => None,
        }
    }

    /// Measure of `self \ other`.
    pub fn measure_outside(&self, other: &Self) -> Result<f64> {
        use PredictionRegion::*;
        Ok(match (self, other) {
            (Empty, _) => 0.0,
            (_, EntireSpace) => 0.0,
            (EntireSpace, _) => f64::INFINITY,
            (x, Empty) => x.measure(),
            (IntervalUnion(a), IntervalUnion(b)) => {
                let inter: f64 = a
                    .iter()
                    .flat_map(|x| {
                        b.iter()
                            .map(move |y| (x.hi.min(y.hi) - x.lo.max(y.lo)).max(0.0))
                    })
                    .sum();
                (self.measure() - inter).max(0.0)
            }
            (LabelSet(a), LabelSet(_)) => a.iter().filter(|l| !other.contains_label(**l)).count() as f64,
            _ => return Err(ModselError::MixedRegions),
        })
    }

    /// Measure (or cardinality) of the symmetric difference.
    pub fn symmetric_difference_measure(&self, other: &Self) -> Result<f64> {
        if matches!((self, other), (Self::EntireSpace, Self::EntireSpace)) {
            return Ok(0.0);
        }
        Ok(self.measure_outside(other)? + other.measure_outside(self)?)
    }

    pub fn is_subset_of(&self, other: &Self, tol: f64) -> Result<bool> {
        Ok(self.measure_outside(other)? <= tol)
    }
}

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "INF".to_string()
    } else if v == f64::NEG_INFINITY {
        "-INF".to_string()
    } else {
        format!("{v:?}")
    }
}

/// Parses a number in the shortest round-trip form, accepting `INF` / `-INF`.
pub fn parse_num(s: &str) -> Option<f64> {
    match s.trim() {
        "INF" | "inf" | "+INF" => Some(f64::INFINITY),
        "-INF" | "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// Formats a number the way regions and reports serialize it.
pub fn format_num(v: f64) -> String {
    fmt_num(v)
}

impl fmt::Display for PredictionRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EntireSpace => f.write_str("ENTIRE"),
            Self::Empty => f.write_str("EMPTY"),
            Self::IntervalUnion(v) => {
                let parts: Vec<String> = v
                    .iter()
                    .map(|iv| format!("[{},{}]", fmt_num(iv.lo), fmt_num(iv.hi)))
                    .collect();
                f.write_str(&parts.join(";"))
            }
            Self::LabelSet(l) => {
                let parts: Vec<String> = l.iter().map(usize::to_string).collect();
                write!(f, "{{{}}}", parts.join(","))
            }
        }
    }
}

impl FromStr for PredictionRegion {
    type Err = ModselError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || ModselError::RegionParse(s.to_string());
        match t {
            "ENTIRE" => return Ok(Self::EntireSpace),
            "EMPTY" => return Ok(Self::Empty),
            _ => {}
        }
        if let Some(inner) = t.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
            let labels = inner
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            return Ok(Self::from_labels(labels));
        }
        let mut out = Vec::new();
        for part in t.split(';') {
            let inner = part
                .trim()
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(bad)?;
            let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
            let lo = parse_num(lo).ok_or_else(bad)?;
            let hi = parse_num(hi).ok_or_else(bad)?;
            if lo > hi {
                return Err(bad());
            }
            out.push(Interval::new(lo, hi));
        }
        // Text produced by Display is already merged; keep it verbatim.
        Ok(Self::IntervalUnion(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_and_measure() {
        let r = PredictionRegion::from_intervals(vec![
            Interval::new(1.0, 2.0),
            Interval::new(-0.5, 0.5),
            Interval::new(1.5, 3.0),
        ]);
        assert_eq!(r.intervals(), &[Interval::new(-0.5, 0.5), Interval::new(1.0, 3.0)]);
        assert_eq!(r.measure(), 3.0);
        assert!(r.contains(2.5));
        assert!(!r.contains(0.75));
        assert_eq!(PredictionRegion::from_intervals(vec![]), PredictionRegion::Empty);
    }

    #[test]
    fn display_and_parse() {
        let r = PredictionRegion::from_intervals(vec![
            Interval::new(-0.5, 0.5),
            Interval::new(1.0, 2.0),
        ]);
        assert_eq!(r.to_string(), "[-0.5,0.5];[1.0,2.0]");
        assert_eq!("[-0.5,0.5];[1.0,2.0]".parse::<PredictionRegion>().unwrap(), r);
        assert_eq!(PredictionRegion::EntireSpace.to_string(), "ENTIRE");
        assert_eq!("EMPTY".parse::<PredictionRegion>().unwrap(), PredictionRegion::Empty);
        let l = PredictionRegion::from_labels(vec![3, 0, 1]);
        assert_eq!(l.to_string(), "{0,1,3}");
        assert_eq!("{0,1,3}".parse::<PredictionRegion>().unwrap(), l);
        assert!("[1,0]".parse::<PredictionRegion>().is_err());
        assert!("nonsense".parse::<PredictionRegion>().is_err());
    }

    #[test]
    fn difference_measures() {
        let a = PredictionRegion::from_intervals(vec![Interval::new(0.0, 1.0)]);
        let b = PredictionRegion::from_intervals(vec![Interval::new(0.0, 2.0)]);
        assert_eq!(a.symmetric_difference_measure(&a).unwrap(), 0.0);
        assert_eq!(a.symmetric_difference_measure(&b).unwrap(), 1.0);
        assert!(a.is_subset_of(&b, 0.0).unwrap());
        assert!(!b.is_subset_of(&a, 0.5).unwrap());
        let x = PredictionRegion::from_labels(vec![0, 1]);
        let y = PredictionRegion::from_labels(vec![1, 2]);
        assert_eq!(x.symmetric_difference_measure(&y).unwrap(), 2.0);
        assert_eq!(a.symmetric_difference_measure(&x), Err(ModselError::MixedRegions));
        assert_eq!(
            PredictionRegion::EntireSpace.symmetric_difference_measure(&a).unwrap(),
            f64::INFINITY
        );
    }
}
