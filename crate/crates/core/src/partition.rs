//! Countable partitions of `[t_1, t_inf]` accumulating at `t_inf`, and the
//! affine contractions `ζ_n` mapping the whole interval onto `[t_n, t_{n+1}]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of retained maps.
pub const DEFAULT_TRUNCATION: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("node indices start at 1")]
    IndexZero,
    #[error("{t} lies outside {domain}")]
    OutOfDomain { t: f64, domain: String },
    #[error("t = t_inf has no cell; use the limit equation")]
    AtInfinityNode,
    #[error("invalid partition: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// Halving gaps: `t_n = t_inf - (t_inf - t_1) 2^{1-n}`.
    Dyadic,
    /// `t_n = t_inf - (t_inf - t_1) r^{n-1}`.
    Geometric { ratio: f64 },
    /// Explicit leading nodes `t_1 < … < t_m < t_inf`, continued geometrically
    /// towards `t_inf` with the given ratio.
    ExplicitPrefix { nodes: Vec<f64>, tail_ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `ζ_n(t_1) = t_n`, `ζ_n(t_inf) = t_{n+1}`.
    #[default]
    Increasing,
    /// `ζ_n(t_1) = t_{n+1}`, `ζ_n(t_inf) = t_n`.
    Decreasing,
}

/// Node index, with a sentinel for the accumulation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeIndex {
    Finite(usize),
    Infinity,
}

impl From<usize> for NodeIndex {
    fn from(n: usize) -> Self {
        NodeIndex::Finite(n)
    }
}

/// One of the maps `ζ_n(t) = intercept + slope·t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub n: usize,
    /// Contraction ratio `a_n`, always positive.
    pub ratio: f64,
    pub orientation: Orientation,
    /// Start of the image cell (`t_n`).
    pub cell_lo: f64,
    /// End of the image cell (`t_{n+1}`).
    pub cell_hi: f64,
    t1: f64,
    t_inf: f64,
}

impl AffineMap {
    pub fn slope(&self) -> f64 {
        match self.orientation {
            Orientation::Increasing => self.ratio,
            Orientation::Decreasing => -self.ratio,
        }
    }

    pub fn intercept(&self) -> f64 {
        match self.orientation {
            Orientation::Increasing => self.cell_lo - self.ratio * self.t1,
            Orientation::Decreasing => self.cell_hi + self.ratio * self.t1,
        }
    }

    /// `ζ_n(t)`; pinned to the exact cell endpoints at `t_1` and `t_inf`.
    pub fn apply(&self, t: f64) -> f64 {
        let (at_t1, at_inf) = match self.orientation {
            Orientation::Increasing => (self.cell_lo, self.cell_hi),
            Orientation::Decreasing => (self.cell_hi, self.cell_lo),
        };
        if t == self.t1 {
            return at_t1;
        }
        if t == self.t_inf {
            return at_inf;
        }
        let x = match self.orientation {
            Orientation::Increasing => self.cell_lo + self.ratio * (t - self.t1),
            Orientation::Decreasing => self.cell_hi - self.ratio * (t - self.t1),
        };
        x.clamp(self.cell_lo, self.cell_hi)
    }

    /// `ζ_n^{-1}(x)` for `x` in the cell; pinned at the cell endpoints.
    pub fn invert(&self, x: f64) -> f64 {
        let (lo_pre, hi_pre) = match self.orientation {
            Orientation::Increasing => (self.t1, self.t_inf),
            Orientation::Decreasing => (self.t_inf, self.t1),
        };
        if x == self.cell_lo {
            return lo_pre;
        }
        if x == self.cell_hi {
            return hi_pre;
        }
        let t = match self.orientation {
            Orientation::Increasing => self.t1 + (x - self.cell_lo) / self.ratio,
            Orientation::Decreasing => self.t1 + (self.cell_hi - x) / self.ratio,
        };
        t.clamp(self.t1, self.t_inf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    t1: f64,
    t_inf: f64,
    family: Family,
    truncation: usize,
    #[serde(default)]
    orientation: Orientation,
    /// Per-map orientation overrides; maps not listed use `orientation`.
    #[serde(default)]
    overrides: BTreeMap<usize, Orientation>,
}

impl Partition {
    pub fn new(
        t1: f64,
        t_inf: f64,
        family: Family,
        truncation: usize,
    ) -> Result<Self, PartitionError> {
        if !(t1.is_finite() && t_inf.is_finite() && t1 < t_inf) {
            return Err(PartitionError::Invalid(format!(
                "need finite t1 < t_inf, got [{t1}, {t_inf}]"
            )));
        }
        if truncation == 0 {
            return Err(PartitionError::Invalid(
                "truncation must be positive".into(),
            ));
        }
        match &family {
            Family::Dyadic => {}
            Family::Geometric { ratio } => check_ratio(*ratio)?,
            Family::ExplicitPrefix { nodes, tail_ratio } => {
                check_ratio(*tail_ratio)?;
                if nodes.is_empty() || nodes[0] != t1 {
                    return Err(PartitionError::Invalid(
                        "explicit nodes must start at t1".into(),
                    ));
                }
                if nodes.windows(2).any(|w| !(w[0] < w[1])) || *nodes.last().unwrap() >= t_inf {
                    return Err(PartitionError::Invalid(
                        "explicit nodes must increase strictly and stay below t_inf".into(),
                    ));
                }
            }
        }
        Ok(Partition {
            t1,
            t_inf,
            family,
            truncation,
            orientation: Orientation::Increasing,
            overrides: BTreeMap::new(),
        })
    }

    /// Dyadic partition of `[0, 1]` with `N` retained maps.
    pub fn dyadic_unit(truncation: usize) -> Partition {
        Partition::new(0.0, 1.0, Family::Dyadic, truncation).expect("valid dyadic partition")
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_override(mut self, n: usize, orientation: Orientation) -> Self {
        self.overrides.insert(n, orientation);
        self
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn t_inf(&self) -> f64 {
        self.t_inf
    }

    pub fn length(&self) -> f64 {
        self.t_inf - self.t1
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Orientation used by the maps beyond every override; it decides the
    /// limit taken at `t_inf`.
    pub fn tail_orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn orientation_of(&self, n: usize) -> Orientation {
        self.overrides.get(&n).copied().unwrap_or(self.orientation)
    }

    /// `t_n`, or `t_inf` for the sentinel.
    pub fn node(&self, n: impl Into<NodeIndex>) -> Result<f64, PartitionError> {
        match n.into() {
            NodeIndex::Infinity => Ok(self.t_inf),
            NodeIndex::Finite(0) => Err(PartitionError::IndexZero),
            NodeIndex::Finite(n) => Ok(self.node_unchecked(n)),
        }
    }

    fn node_unchecked(&self, n: usize) -> f64 {
        if n == 1 {
            return self.t1;
        }
        match &self.family {
            Family::Dyadic => self.geometric_node(self.t1, 0.5, n - 1),
            Family::Geometric { ratio } => self.geometric_node(self.t1, *ratio, n - 1),
            Family::ExplicitPrefix { nodes, tail_ratio } => {
                if n <= nodes.len() {
                    nodes[n - 1]
                } else {
                    self.geometric_node(*nodes.last().unwrap(), *tail_ratio, n - nodes.len())
                }
            }
        }
    }

    /// `t_inf - (t_inf - from)·r^k`.
    fn geometric_node(&self, from: f64, r: f64, k: usize) -> f64 {
        let x = self.t_inf - (self.t_inf - from) * r.powi(k as i32);
        x.min(self.t_inf)
    }

    /// Contraction ratio `a_n = (t_{n+1} - t_n) / (t_inf - t_1)`.
    pub fn ratio(&self, n: usize) -> Result<f64, PartitionError> {
        if n == 0 {
            return Err(PartitionError::IndexZero);
        }
        let r = match &self.family {
            Family::Dyadic => 0.5_f64.powi(n as i32),
            Family::Geometric { ratio } => (1.0 - ratio) * ratio.powi(n as i32 - 1),
            Family::ExplicitPrefix { .. } => {
                (self.node_unchecked(n + 1) - self.node_unchecked(n)) / self.length()
            }
        };
        Ok(r)
    }

    pub fn map(&self, n: usize) -> Result<AffineMap, PartitionError> {
        let ratio = self.ratio(n)?;
        Ok(AffineMap {
            n,
            ratio,
            orientation: self.orientation_of(n),
            cell_lo: self.node_unchecked(n),
            cell_hi: self.node_unchecked(n + 1),
            t1: self.t1,
            t_inf: self.t_inf,
        })
    }

    fn check_domain(&self, t: f64) -> Result<(), PartitionError> {
        if t >= self.t1 && t <= self.t_inf {
            Ok(())
        } else {
            Err(PartitionError::OutOfDomain {
                t,
                domain: format!("[{}, {}]", self.t1, self.t_inf),
            })
        }
    }

    /// `ζ_n(t)`.
    pub fn zeta(&self, n: usize, t: f64) -> Result<f64, PartitionError> {
        self.check_domain(t)?;
        Ok(self.map(n)?.apply(t))
    }

    /// `ζ_n^{-1}(x)` for `x ∈ [t_n, t_{n+1}]`.
    pub fn zeta_inv(&self, n: usize, x: f64) -> Result<f64, PartitionError> {
        let m = self.map(n)?;
        if !(x >= m.cell_lo && x <= m.cell_hi) {
            return Err(PartitionError::OutOfDomain {
                t: x,
                domain: format!("[{}, {}]", m.cell_lo, m.cell_hi),
            });
        }
        Ok(m.invert(x))
    }

    /// Index `n` with `t ∈ [t_n, t_{n+1}]`. Interior nodes belong to the cell
    /// on their left; `t_1` belongs to the first cell.
    pub fn locate(&self, t: f64) -> Result<usize, PartitionError> {
        self.check_domain(t)?;
        if t == self.t_inf {
            return Err(PartitionError::AtInfinityNode);
        }
        if t == self.t1 {
            return Ok(1);
        }
        let guess = match &self.family {
            Family::Dyadic => self.geometric_guess(self.t1, 0.5, t),
            Family::Geometric { ratio } => self.geometric_guess(self.t1, *ratio, t),
            Family::ExplicitPrefix { nodes, tail_ratio } => {
                let last = *nodes.last().unwrap();
                if t <= last {
                    // first node >= t is t_{n+1}
                    nodes.partition_point(|&x| x < t).max(1)
                } else {
                    nodes.len() - 1 + self.geometric_guess(last, *tail_ratio, t)
                }
            }
        };
        // neighbour check against rounding in the logarithm
        let mut n = guess.max(1);
        while n > 1 && t <= self.node_unchecked(n) {
            n -= 1;
        }
        while t > self.node_unchecked(n + 1) {
            n += 1;
        }
        Ok(n)
    }

    /// Cell index counted from `from` for a geometric run of ratio `r`.
    fn geometric_guess(&self, from: f64, r: f64, t: f64) -> usize {
        let frac = (self.t_inf - t) / (self.t_inf - from);
        let x = frac.ln() / r.ln();
        if x.is_finite() && x > 0.0 {
            (x.ceil() as usize).max(1)
        } else {
            1
        }
    }

    /// The points `ζ_{i_1} ∘ … ∘ ζ_{i_d}(s)` for depths `d ≤ depth`, indices
    /// `≤ index_cap`, and `s` among `t_1..t_{index_cap}` and `t_inf`.
    /// Sorted and deduplicated.
    pub fn dense_points(&self, depth: usize, index_cap: usize) -> Vec<f64> {
        let maps: Vec<AffineMap> = (1..=index_cap)
            .map(|n| self.map(n).expect("positive index"))
            .collect();
        let mut level: Vec<f64> = (1..=index_cap.max(1))
            .map(|n| self.node_unchecked(n))
            .chain(std::iter::once(self.t_inf))
            .collect();
        let mut all = level.clone();
        for _ in 0..depth {
            let next: Vec<f64> = maps
                .iter()
                .flat_map(|m| level.iter().map(move |&s| m.apply(s)))
                .collect();
            all.extend_from_slice(&next);
            level = next;
            level.sort_by(f64::total_cmp);
            level.dedup();
        }
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

fn check_ratio(r: f64) -> Result<(), PartitionError> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(PartitionError::Invalid(format!("ratio {r} not in (0,1)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_nodes() {
        let p = Partition::dyadic_unit(24);
        assert_eq!(p.node(1).unwrap(), 0.0);
        assert_eq!(p.node(2).unwrap(), 0.5);
        assert_eq!(p.node(3).unwrap(), 0.75);
        assert_eq!(p.node(NodeIndex::Infinity).unwrap(), 1.0);
        assert_eq!(p.node(0), Err(PartitionError::IndexZero));
        for n in 1..40 {
            assert_eq!(p.node(n).unwrap(), 1.0 - 2f64.powi(1 - n as i32));
        }
    }

    #[test]
    fn zeta_examples() {
        let p = Partition::dyadic_unit(24);
        assert_eq!(p.zeta(2, 0.0).unwrap(), 0.5);
        assert_eq!(p.zeta(2, 1.0).unwrap(), 0.75);
        assert_eq!(p.zeta(1, 0.5).unwrap(), 0.25);
        assert!(matches!(
            p.zeta(1, 1.5),
            Err(PartitionError::OutOfDomain { .. })
        ));
        assert!(matches!(
            p.zeta_inv(1, 0.7),
            Err(PartitionError::OutOfDomain { .. })
        ));
        let d = p.clone().with_override(2, Orientation::Decreasing);
        assert_eq!(d.zeta(2, 0.0).unwrap(), 0.75);
        assert_eq!(d.zeta(2, 1.0).unwrap(), 0.5);
        assert_eq!(d.zeta_inv(2, 0.625).unwrap(), 0.5);
    }

    #[test]
    fn zeta_inverse_round_trip() {
        let p = Partition::new(-1.0, 2.0, Family::Geometric { ratio: 0.7 }, 24)
            .unwrap()
            .with_override(3, Orientation::Decreasing);
        for n in 1..30 {
            for k in 0..=50 {
                let t = -1.0 + 3.0 * k as f64 / 50.0;
                let back = p.zeta_inv(n, p.zeta(n, t).unwrap()).unwrap();
                let tol = 1e-14 / p.ratio(n).unwrap() * 4.0;
                assert!(
                    (back - t).abs() <= tol.max(1e-14),
                    "n={n} t={t} back={back}"
                );
            }
        }
    }

    #[test]
    fn dyadic_ratios() {
        let p = Partition::dyadic_unit(24);
        for n in 1..50 {
            let a = p.ratio(n).unwrap();
            assert!((a - 2f64.powi(-(n as i32))).abs() <= 1e-14);
            let gap = (p.node(n + 1).unwrap() - p.node(n).unwrap()) / p.length();
            assert!((a - gap).abs() <= 1e-14);
        }
    }

    #[test]
    fn locate_examples() {
        let p = Partition::dyadic_unit(24);
        assert_eq!(p.locate(0.6).unwrap(), 2);
        assert_eq!(p.locate(0.5).unwrap(), 1);
        assert_eq!(p.locate(0.0).unwrap(), 1);
        assert_eq!(p.locate(1.0 - 2f64.powi(-20)).unwrap(), 20);
        assert_eq!(p.locate(1.0), Err(PartitionError::AtInfinityNode));
        assert!(p.locate(-0.1).is_err());
    }

    #[test]
    fn locate_agrees_with_scan() {
        let families = [
            Family::Dyadic,
            Family::Geometric { ratio: 0.3 },
            Family::Geometric { ratio: 0.9 },
            Family::ExplicitPrefix {
                nodes: vec![0.0, 0.1, 0.15, 0.6],
                tail_ratio: 0.5,
            },
        ];
        for fam in families {
            let p = Partition::new(0.0, 1.0, fam, 24).unwrap();
            for k in 0..2000 {
                let t = (k as f64 / 2000.0).powf(0.3);
                if t >= 1.0 {
                    continue;
                }
                let n = p.locate(t).unwrap();
                let mut scan = 1;
                while t > p.node(scan + 1).unwrap() {
                    scan += 1;
                }
                assert_eq!(n, scan, "t = {t}");
            }
        }
    }

    #[test]
    fn cells_tile_the_interval() {
        let p = Partition::new(0.0, 1.0, Family::Geometric { ratio: 0.6 }, 24).unwrap();
        let m = 30;
        let total: f64 = (1..=m).map(|n| p.ratio(n).unwrap()).sum::<f64>() * p.length();
        assert!((total - (p.node(m + 1).unwrap() - p.node(1).unwrap())).abs() < 1e-14);
        for n in 1..m {
            let a = p.map(n).unwrap();
            let b = p.map(n + 1).unwrap();
            assert_eq!(a.cell_hi, b.cell_lo);
            assert!(a.cell_lo < a.cell_hi);
        }
    }

    #[test]
    fn dense_points_examples() {
        let p = Partition::dyadic_unit(24);
        let d0 = p.dense_points(0, 3);
        assert_eq!(d0, vec![0.0, 0.5, 0.75, 1.0]);
        let d1 = p.dense_points(1, 2);
        assert_eq!(d1, vec![0.0, 0.25, 0.5, 0.625, 0.75, 1.0]);
        assert!(p.dense_points(1, 3).contains(&0.375));
        assert!(d1.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dense_points_mesh_shrinks_geometrically() {
        let p = Partition::dyadic_unit(24);
        let m = 8;
        let mesh = |pts: &[f64]| {
            let end = p.node(m + 1).unwrap();
            pts.iter()
                .copied()
                .filter(|&x| x <= end)
                .collect::<Vec<_>>()
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(0.0, f64::max)
        };
        let max_gap = 0.5; // largest node gap t_2 - t_1
        for k in 0..4 {
            let g = mesh(&p.dense_points(k, m));
            assert!(
                g <= 0.5f64.powi(k as i32) * max_gap + 1e-15,
                "k={k} gap={g}"
            );
        }
    }
}
