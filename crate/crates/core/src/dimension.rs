//! Hausdorff-dimension bounds from Moran equations `Σ r_i^s = 1`, and a box
//! counting estimator for point clouds.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::cifs_graph::GraphCloud;
use crate::partition::{Partition, PartitionError};

pub const DEFAULT_K_MAX: usize = 64;
pub const DEFAULT_STALL_TOL: f64 = 1e-9;
pub const DEFAULT_MORAN_TOL: f64 = 1e-14;
/// Number of trailing terms inspected for the tail of the upper series.
pub const TAIL_WINDOW: usize = 8;
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DimensionError {
    #[error("ratio {value} at index {index} is not in (0,1)")]
    DegenerateSequence { index: usize, value: f64 },
    #[error("need at least {needed} ratios, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("s_{k} = {value} is below the previous term {previous}")]
    MonotonicityViolation { k: usize, value: f64, previous: f64 },
    #[error("need at least 3 scales, got {0}")]
    TooFewScales(usize),
    #[error("scale {0} is not positive")]
    InvalidScale(f64),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// Which bi-Lipschitz constant of the maps `G_i` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// `b_i = min{|α|, a_i}`
    Lower,
    /// `c_i = max{|α|, a_i}`
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RatioSequence {
    FromSystem {
        bound: Bound,
        alpha: f64,
        partition: Partition,
    },
    Explicit(Vec<f64>),
}

impl RatioSequence {
    pub fn from_system(bound: Bound, alpha: f64, partition: &Partition) -> Self {
        RatioSequence::FromSystem {
            bound,
            alpha,
            partition: partition.clone(),
        }
    }

    /// The first `k` terms, or fewer for a shorter explicit list.
    pub fn prefix(&self, k: usize) -> Result<Vec<f64>, DimensionError> {
        let values: Vec<f64> = match self {
            RatioSequence::Explicit(v) => v.iter().copied().take(k).collect(),
            RatioSequence::FromSystem {
                bound,
                alpha,
                partition,
            } => (1..=k)
                .map(|i| {
                    partition.ratio(i).map(|a| match bound {
                        Bound::Lower => a.min(alpha.abs()),
                        Bound::Upper => a.max(alpha.abs()),
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        for (i, &value) in values.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(DimensionError::DegenerateSequence {
                    index: i + 1,
                    value,
                });
            }
        }
        Ok(values)
    }
}

fn moran_sum(b: &[f64], s: f64) -> f64 {
    b.iter().map(|x| x.powf(s)).sum()
}

/// Decreasing root of `f` by bisection, with `f(0) > 0`.
fn bisect_root(f: impl Fn(f64) -> f64, tol: f64) -> f64 {
    let mut hi = 1.0;
    while f(hi) >= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let v = f(mid);
        if v.abs() <= tol {
            return mid;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// The root `s` of `Σ_{i≤k} b_i^s = 1`.
pub fn moran_solve_finite(b: &[f64], tol: f64) -> Result<f64, DimensionError> {
    if b.len() < 2 {
        return Err(DimensionError::TooShort {
            needed: 2,
            got: b.len(),
        });
    }
    if let Some((i, &value)) = b
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && **v < 1.0))
    {
        return Err(DimensionError::DegenerateSequence {
            index: i + 1,
            value,
        });
    }
    Ok(bisect_root(|s| moran_sum(b, s) - 1.0, tol))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerReport {
    pub s_star: f64,
    pub s_k: Vec<f64>,
    /// Successive terms stopped moving by more than the stall tolerance.
    pub stalled: bool,
}

/// `s_* = sup_k s_k` from the finite Moran equations `k = 2, 3, ...`.
pub fn s_star(
    b: &RatioSequence,
    k_max: usize,
    stall_tol: f64,
) -> Result<LowerReport, DimensionError> {
    let values = b.prefix(k_max)?;
    if values.len() < 2 {
        return Err(DimensionError::TooShort {
            needed: 2,
            got: values.len(),
        });
    }
    let mut s_k: Vec<f64> = Vec::new();
    let mut stalled = false;
    for k in 2..=values.len() {
        let s = moran_solve_finite(&values[..k], DEFAULT_MORAN_TOL)?;
        if let Some(&previous) = s_k.last() {
            if s < previous - MONOTONE_SLACK {
                return Err(DimensionError::MonotonicityViolation {
                    k,
                    value: s,
                    previous,
                });
            }
            s_k.push(s);
            if s - previous < stall_tol {
                stalled = true;
                break;
            }
        } else {
            s_k.push(s);
        }
    }
    Ok(LowerReport {
        s_star: *s_k.last().expect("k = 2 is always solved"),
        s_k,
        stalled,
    })
}

/// Upper bound `s^*`, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpperBound {
    Finite(f64),
    Infinite,
}

impl UpperBound {
    pub fn value(self) -> f64 {
        match self {
            UpperBound::Finite(v) => v,
            UpperBound::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for UpperBound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            UpperBound::Finite(v) => s.serialize_f64(*v),
            UpperBound::Infinite => s.serialize_str("inf"),
        }
    }
}

/// `max{inf{s : Σ_i c_i^s ≤ 1}, 1}`.
///
/// The terms beyond `k_max` are bounded by a geometric series whose ratio is
/// the largest successive ratio among the last [`TAIL_WINDOW`] terms. If those
/// terms stop decreasing the series diverges for every `s`.
pub fn s_upper(c: &RatioSequence, k_max: usize, tol: f64) -> Result<UpperBound, DimensionError> {
    let values = c.prefix(k_max)?;
    if values.len() <= TAIL_WINDOW {
        return Err(DimensionError::TooShort {
            needed: TAIL_WINDOW + 1,
            got: values.len(),
        });
    }
    let tail = &values[values.len() - TAIL_WINDOW - 1..];
    let ratio = tail.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    if ratio >= 1.0 {
        return Ok(UpperBound::Infinite);
    }
    let last = *values.last().expect("non-empty");
    let series = |s: f64| {
        let r = ratio.powf(s);
        moran_sum(&values, s) + last.powf(s) * r / (1.0 - r) - 1.0
    };
    let root = bisect_root(series, tol);
    Ok(UpperBound::Finite(root.max(1.0)))
}

/// Slope of `log N(δ)` against `log(1/δ)`, where `N(δ)` counts the `δ`-grid
/// cells met by the vertical segments `{t} × [lo, hi]` of the cloud.
pub fn box_count_estimate(cloud: &GraphCloud, scales: &[f64]) -> Result<f64, DimensionError> {
    if scales.len() < 3 {
        return Err(DimensionError::TooFewScales(scales.len()));
    }
    let mut xs = Vec::with_capacity(scales.len());
    let mut ys = Vec::with_capacity(scales.len());
    for &delta in scales {
        if !(delta > 0.0) {
            return Err(DimensionError::InvalidScale(delta));
        }
        xs.push((1.0 / delta).ln());
        ys.push((count_boxes(cloud, delta) as f64).ln());
    }
    Ok(least_squares_slope(&xs, &ys))
}

fn count_boxes(cloud: &GraphCloud, delta: f64) -> u64 {
    let mut columns: BTreeMap<i64, Vec<(i64, i64)>> = BTreeMap::new();
    for p in cloud.points() {
        let col = (p.t / delta).floor() as i64;
        let rows = (
            (p.s.lo / delta).floor() as i64,
            (p.s.hi / delta).floor() as i64,
        );
        columns.entry(col).or_default().push(rows);
    }
    columns
        .into_values()
        .map(|mut ranges| {
            ranges.sort_unstable();
            let mut count = 0u64;
            let (mut start, mut end) = ranges[0];
            for &(a, b) in &ranges[1..] {
                if a > end + 1 {
                    count += (end - start + 1) as u64;
                    start = a;
                    end = b;
                } else {
                    end = end.max(b);
                }
            }
            count + (end - start + 1) as u64
        })
        .sum()
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Dyadic scales `2^{-from}, ..., 2^{-to}`.
pub fn dyadic_scales(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 0.5f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    pub s_star: f64,
    pub s_k: Vec<f64>,
    pub s_upper: UpperBound,
    pub box_estimate: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cifs_graph::GraphPoint;
    use crate::interval_set::Interval;

    fn geometric(base: f64, k: usize) -> RatioSequence {
        RatioSequence::Explicit((1..=k).map(|i| base.powi(-(i as i32))).collect())
    }

    #[test]
    fn finite_moran_examples() {
        let golden = ((1.0 + 5f64.sqrt()) / 2.0).log2();
        assert!((moran_solve_finite(&[0.5, 0.25], 1e-14).unwrap() - golden).abs() < 1e-12);
        assert!((moran_solve_finite(&[0.5, 0.5], 1e-14).unwrap() - 1.0).abs() < 1e-12);
        let s = moran_solve_finite(&[0.9, 0.9], 1e-14).unwrap();
        assert!((s - 2f64.ln() / (1.0 / 0.9f64).ln()).abs() < 1e-10);
        assert!((moran_sum(&[0.9, 0.9], s) - 1.0).abs() <= 1e-10);
        assert!(matches!(
            moran_solve_finite(&[0.5, 1.0], 1e-14),
            Err(DimensionError::DegenerateSequence { index: 2, .. })
        ));
        assert!(moran_solve_finite(&[0.5], 1e-14).is_err());
    }

    #[test]
    fn geometric_lower_bound() {
        let r = s_star(&geometric(2.0, 64), 64, 1e-9).unwrap();
        assert!((r.s_star - 1.0).abs() <= 1e-6);
        assert!(r.stalled);
        assert!(r.s_k.windows(2).all(|w| w[0] <= w[1]));
        let r40 = s_star(&geometric(2.0, 40), 40, 0.0).unwrap();
        assert!((r40.s_star - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn constant_ratios_do_not_stall() {
        let c = 0.5;
        let r = s_star(&RatioSequence::Explicit(vec![c; 64]), 64, 1e-9).unwrap();
        assert!(!r.stalled);
        for (k, s) in (2..).zip(&r.s_k) {
            let exact = (k as f64).ln() / (1.0 / c).ln();
            assert!((s - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn stop_at_two() {
        let r = s_star(&RatioSequence::Explicit(vec![0.5, 0.25]), 64, 1e-9).unwrap();
        assert_eq!(r.s_k.len(), 1);
        assert!((r.s_star - 0.694242).abs() < 1e-6);
    }

    #[test]
    fn upper_bounds() {
        assert!((s_upper(&geometric(2.0, 64), 64, 1e-14).unwrap().value() - 1.0).abs() < 1e-9);
        let root = s_upper(&geometric(3.0, 30), 30, 1e-14).unwrap();
        assert_eq!(root, UpperBound::Finite(1.0));
        let p = Partition::dyadic_unit(24);
        let c = RatioSequence::from_system(Bound::Upper, 0.5, &p);
        assert_eq!(s_upper(&c, 64, 1e-14).unwrap(), UpperBound::Infinite);
        assert_eq!(
            serde_json::to_string(&UpperBound::Infinite).unwrap(),
            "\"inf\""
        );
        assert_eq!(
            serde_json::to_string(&UpperBound::Finite(1.5)).unwrap(),
            "1.5"
        );
    }

    #[test]
    fn upper_bound_tail_is_exact_for_geometric_series() {
        // Σ_i 3^{-is} = 1 at s = log_3 2, below the floor of one
        let values: Vec<f64> = (1..=30).map(|i| 3f64.powi(-i)).collect();
        let ratio: f64 = 1.0 / 3.0;
        let last = values[29];
        let s: f64 = 2f64.ln() / 3f64.ln();
        let r = ratio.powf(s);
        let total = moran_sum(&values, s) + last.powf(s) * r / (1.0 - r);
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn system_sequences() {
        let p = Partition::dyadic_unit(24);
        let b = RatioSequence::from_system(Bound::Lower, 0.3, &p)
            .prefix(4)
            .unwrap();
        assert_eq!(b, vec![0.3, 0.25, 0.125, 0.0625]);
        assert!(RatioSequence::from_system(Bound::Lower, 0.0, &p)
            .prefix(4)
            .is_err());
    }

    fn cloud(f: impl Fn(f64) -> (f64, f64), n: usize) -> GraphCloud {
        GraphCloud::new(
            (0..n)
                .map(|k| {
                    let t = k as f64 / (n - 1) as f64;
                    let (lo, hi) = f(t);
                    GraphPoint::new(t, Interval::new(lo, hi))
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn box_counting() {
        let scales = dyadic_scales(4, 10);
        let band =
            box_count_estimate(&cloud(|t| (t * t + 1.0, t * t + 2.0), 8193), &scales).unwrap();
        assert!((band - 2.0).abs() < 0.1, "{band}");
        let line = box_count_estimate(&cloud(|_| (1.0, 1.0), 8193), &scales).unwrap();
        assert!((line - 1.0).abs() < 0.1, "{line}");
        assert!(matches!(
            box_count_estimate(&cloud(|_| (1.0, 1.0), 9), &scales[..2]),
            Err(DimensionError::TooFewScales(2))
        ));
    }

    #[test]
    fn single_point_has_dimension_zero() {
        let c = GraphCloud::new(vec![GraphPoint::new(0.3, Interval::point(0.7))]).unwrap();
        assert_eq!(box_count_estimate(&c, &dyadic_scales(2, 8)).unwrap(), 0.0);
    }
}
