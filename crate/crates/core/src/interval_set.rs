//! Compact subsets of the real line stored as finite unions of closed intervals.
//!
//! Every [`CompactSet`] is kept in canonical form: parts sorted, pairwise
//! disjoint, and separated by gaps wider than [`MERGE_EPS`] (relative to the
//! magnitude of the set). All arithmetic is Minkowski arithmetic.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Relative gap below which neighbouring parts are merged.
pub const MERGE_EPS: f64 = 1e-12;

/// Absolute slack used by [`CompactSet::subset_leq`].
pub const CONTAINMENT_EPS: f64 = 1e-9;

/// A closed bounded interval `[lo, hi]`, possibly degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Convex compact sets are exactly the closed intervals.
pub type ConvexCompact = Interval;

impl Interval {
    /// Creates `[lo, hi]`. Endpoint order is normalized.
    pub fn new(a: f64, b: f64) -> Interval {
        debug_assert!(a.is_finite() && b.is_finite());
        if a <= b {
            Interval { lo: a, hi: b }
        } else {
            Interval { lo: b, hi: a }
        }
    }

    pub fn point(x: f64) -> Interval {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn add(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo + other.lo,
            hi: self.hi + other.hi,
        }
    }

    /// Element-wise difference `{a - b}`, which widens rather than cancels.
    pub fn sub(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo - other.hi,
            hi: self.hi - other.lo,
        }
    }

    pub fn scale(self, k: f64) -> Interval {
        if k >= 0.0 {
            Interval {
                lo: k * self.lo,
                hi: k * self.hi,
            }
        } else {
            Interval {
                lo: k * self.hi,
                hi: k * self.lo,
            }
        }
    }

    pub fn translate(self, c: f64) -> Interval {
        Interval {
            lo: self.lo + c,
            hi: self.hi + c,
        }
    }

    /// Hausdorff distance between two intervals.
    pub fn hausdorff(&self, other: &Interval) -> f64 {
        (self.lo - other.lo).abs().max((self.hi - other.hi).abs())
    }

    /// Linear blend `(1-w)·self + w·other` of the endpoints.
    pub fn lerp(&self, other: &Interval, w: f64) -> Interval {
        Interval {
            lo: self.lo + w * (other.lo - self.lo),
            hi: self.hi + w * (other.hi - self.hi),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// A non-empty compact subset of ℝ in canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSet {
    parts: Vec<Interval>,
}

impl From<Interval> for CompactSet {
    fn from(i: Interval) -> Self {
        CompactSet { parts: vec![i] }
    }
}

impl CompactSet {
    /// Builds a canonical set from arbitrary (possibly overlapping) intervals.
    ///
    /// Returns `None` for an empty input.
    pub fn from_intervals(mut parts: Vec<Interval>) -> Option<CompactSet> {
        if parts.is_empty() {
            return None;
        }
        parts.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let magnitude = parts
            .iter()
            .fold(1.0_f64, |m, p| m.max(p.lo.abs()).max(p.hi.abs()));
        let eps = MERGE_EPS * magnitude;
        let mut out: Vec<Interval> = Vec::with_capacity(parts.len());
        for p in parts {
            match out.last_mut() {
                Some(last) if p.lo - last.hi <= eps => {
                    last.hi = last.hi.max(p.hi);
                }
                _ => out.push(p),
            }
        }
        Some(CompactSet { parts: out })
    }

    pub fn interval(lo: f64, hi: f64) -> CompactSet {
        Interval::new(lo, hi).into()
    }

    pub fn point(x: f64) -> CompactSet {
        Interval::point(x).into()
    }

    pub fn zero() -> CompactSet {
        CompactSet::point(0.0)
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn is_convex(&self) -> bool {
        self.parts.len() == 1
    }

    /// The single interval of a convex set.
    pub fn as_interval(&self) -> Option<Interval> {
        if self.is_convex() {
            Some(self.parts[0])
        } else {
            None
        }
    }

    pub fn min(&self) -> f64 {
        self.parts[0].lo
    }

    pub fn max(&self) -> f64 {
        self.parts[self.parts.len() - 1].hi
    }

    pub fn hull(&self) -> Interval {
        Interval {
            lo: self.min(),
            hi: self.max(),
        }
    }

    /// True when the set is a single point up to `tol`.
    pub fn is_singleton(&self, tol: f64) -> bool {
        self.diameter() <= tol
    }

    /// `{x + y : x ∈ self, y ∈ other}`.
    pub fn minkowski_sum(&self, other: &CompactSet) -> CompactSet {
        if let (Some(a), Some(b)) = (self.as_interval(), other.as_interval()) {
            return a.add(b).into();
        }
        let mut sums = Vec::with_capacity(self.parts.len() * other.parts.len());
        for a in &self.parts {
            for b in &other.parts {
                sums.push(a.add(*b));
            }
        }
        CompactSet::from_intervals(sums).expect("non-empty operands")
    }

    /// `{k·x : x ∈ self}`; a negative factor reverses the order of parts.
    pub fn scale(&self, k: f64) -> CompactSet {
        if k == 0.0 {
            return CompactSet::zero();
        }
        let mut parts: Vec<Interval> = self.parts.iter().map(|p| p.scale(k)).collect();
        if k < 0.0 {
            parts.reverse();
        }
        CompactSet::from_intervals(parts).expect("non-empty set")
    }

    /// `{x - y : x ∈ self, y ∈ other}`.
    pub fn set_difference(&self, other: &CompactSet) -> CompactSet {
        self.minkowski_sum(&other.scale(-1.0))
    }

    pub fn translate(&self, c: f64) -> CompactSet {
        CompactSet {
            parts: self.parts.iter().map(|p| p.translate(c)).collect(),
        }
    }

    pub fn diameter(&self) -> f64 {
        self.max() - self.min()
    }

    /// Hausdorff distance to `{0}`.
    pub fn norm_to_zero(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    /// Distance from a point to the set.
    pub fn distance_to_point(&self, x: f64) -> f64 {
        let idx = self.parts.partition_point(|p| p.hi < x);
        let mut best = f64::INFINITY;
        if let Some(p) = self.parts.get(idx) {
            if p.lo <= x {
                return 0.0;
            }
            best = p.lo - x;
        }
        if idx > 0 {
            best = best.min(x - self.parts[idx - 1].hi);
        }
        best
    }

    /// `sup_{x ∈ self} dist(x, other)`.
    fn directed_hausdorff(&self, other: &CompactSet) -> f64 {
        // dist(·, other) is piecewise linear; on each part of `self` its maximum
        // sits at a part endpoint or at the midpoint of a gap of `other`.
        let mut worst = 0.0_f64;
        for p in &self.parts {
            worst = worst
                .max(other.distance_to_point(p.lo))
                .max(other.distance_to_point(p.hi));
        }
        for gap in other.parts.windows(2) {
            let mid = 0.5 * (gap[0].hi + gap[1].lo);
            if self.parts.iter().any(|p| p.contains(mid)) {
                worst = worst.max(0.5 * (gap[1].lo - gap[0].hi));
            }
        }
        worst
    }

    /// Exact Hausdorff distance.
    pub fn hausdorff_distance(&self, other: &CompactSet) -> f64 {
        if let (Some(a), Some(b)) = (self.as_interval(), other.as_interval()) {
            return a.hausdorff(&b);
        }
        self.directed_hausdorff(other)
            .max(other.directed_hausdorff(self))
    }

    /// Set inclusion `self ⊆ other` with [`CONTAINMENT_EPS`] slack.
    pub fn subset_leq(&self, other: &CompactSet) -> bool {
        self.subset_leq_with(other, CONTAINMENT_EPS)
    }

    pub fn subset_leq_with(&self, other: &CompactSet, slack: f64) -> bool {
        self.parts.iter().all(|p| {
            other
                .parts
                .iter()
                .any(|q| q.lo - slack <= p.lo && p.hi <= q.hi + slack)
        })
    }
}

impl fmt::Display for CompactSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                f.write_str(" ∪ ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}
