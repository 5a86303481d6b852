use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite union of closed intervals, kept sorted and disjoint.
///
/// On the unit circle the intervals are argument ranges inside `[0, 2π]`;
/// an arc through angle zero is stored as two pieces, one starting at `0`
/// and one ending at `2π`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct SupportSet {
    intervals: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for SupportSet {
    type Error = Error;

    fn try_from(intervals: Vec<(f64, f64)>) -> Result<Self> {
        SupportSet::from_intervals(intervals)
    }
}

impl From<SupportSet> for Vec<(f64, f64)> {
    fn from(s: SupportSet) -> Self {
        s.intervals
    }
}

impl SupportSet {
    pub fn empty() -> Self {
        SupportSet::default()
    }

    /// Builds a set from arbitrary intervals, merging any that overlap or touch.
    pub fn from_intervals(intervals: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut v: Vec<(f64, f64)> = intervals.into_iter().collect();
        for &(lo, hi) in &v {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::precondition(format!("invalid interval [{lo}, {hi}]")));
            }
        }
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(SupportSet { intervals: merge_sorted(v) })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::from_intervals([(lo, hi)])
    }

    pub fn points(points: impl IntoIterator<Item = f64>) -> Result<Self> {
        Self::from_intervals(points.into_iter().map(|p| (p, p)))
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn lo(&self) -> Option<f64> {
        self.intervals.first().map(|i| i.0)
    }

    pub fn hi(&self) -> Option<f64> {
        self.intervals.last().map(|i| i.1)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= x && x <= hi)
    }

    /// Euclidean distance to the set; `+∞` for the empty set.
    pub fn distance(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(lo, hi)| {
                if x < lo {
                    lo - x
                } else if x > hi {
                    x - hi
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `E + (-eps, eps)`, with overlapping pieces merged.
    pub fn fattened(&self, eps: f64) -> SupportSet {
        let eps = eps.max(0.0);
        let v = self.intervals.iter().map(|&(lo, hi)| (lo - eps, hi + eps)).collect();
        SupportSet { intervals: merge_sorted(v) }
    }

    pub fn union(&self, other: &SupportSet) -> SupportSet {
        let mut v = self.intervals.clone();
        v.extend_from_slice(&other.intervals);
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        SupportSet { intervals: merge_sorted(v) }
    }

    pub fn shifted(&self, c: f64) -> SupportSet {
        SupportSet {
            intervals: self.intervals.iter().map(|&(lo, hi)| (lo + c, hi + c)).collect(),
        }
    }

    /// Open gaps of the set inside `[lo, hi]`, in increasing order.
    pub fn gaps_within(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut cursor = lo;
        for &(a, b) in &self.intervals {
            if b < lo {
                continue;
            }
            if a > hi {
                break;
            }
            if a > cursor {
                out.push((cursor, a.min(hi)));
            }
            cursor = cursor.max(b);
        }
        if cursor < hi {
            out.push((cursor, hi));
        }
        out
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|&(lo, hi)| hi - lo).sum()
    }

    /// Distance along the circle between an angle and the set of arcs.
    pub fn circular_distance(&self, phi: f64) -> f64 {
        let phi = phi.rem_euclid(TAU);
        self.intervals
            .iter()
            .map(|&(lo, hi)| {
                if lo <= phi && phi <= hi {
                    0.0
                } else {
                    angle_gap(phi, lo).min(angle_gap(phi, hi))
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains_circular(&self, phi: f64) -> bool {
        self.circular_distance(phi) == 0.0
    }

    /// Arc fattening on the circle. Pieces are wrapped back into `[0, 2π]`.
    pub fn fattened_circular(&self, eps: f64) -> SupportSet {
        let eps = eps.max(0.0);
        let mut v = Vec::new();
        for &(lo, hi) in &self.intervals {
            let (a, b) = (lo - eps, hi + eps);
            if b - a >= TAU {
                return SupportSet { intervals: vec![(0.0, TAU)] };
            }
            if a < 0.0 {
                v.push((0.0, b));
                v.push((a + TAU, TAU));
            } else if b > TAU {
                v.push((a, TAU));
                v.push((0.0, b - TAU));
            } else {
                v.push((a, b));
            }
        }
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        SupportSet { intervals: merge_sorted(v) }
    }

    /// Complementary arcs on the circle as `(start, end)` argument pairs with
    /// `start < end`; an arc through angle zero has `end > 2π`.
    pub fn gaps_circular(&self) -> Vec<(f64, f64)> {
        if self.intervals.is_empty() {
            return vec![(0.0, TAU)];
        }
        let mut out = Vec::new();
        for w in self.intervals.windows(2) {
            if w[1].0 > w[0].1 {
                out.push((w[0].1, w[1].0));
            }
        }
        let first = self.intervals[0];
        let last = self.intervals[self.intervals.len() - 1];
        let wrap = (last.1, first.0 + TAU);
        if wrap.1 > wrap.0 {
            out.push(wrap);
        }
        out
    }
}

/// Unsigned angular difference in `[0, π]`.
pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn merge_sorted(v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (lo, hi) in v {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}
