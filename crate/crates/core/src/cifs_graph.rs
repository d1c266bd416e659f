//! The countable IFS `{G_j}` on `I × K_c(ℝ)` whose attractor is the graph of
//! `Φ^α`, with
//! `G_j(t, S) = (ζ_j(t), αS + Φ(ζ_j(t)) - αB(t))`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::interval_set::{CompactSet, Interval};
use crate::partition::PartitionError;
use crate::rb_fractal::{FractalError, FractalFunction, FractalSystem};
use crate::set_function::SetFunctionError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("map index {index} outside 1..={truncation}")]
    IndexBeyondTruncation { index: usize, truncation: usize },
    #[error("value at t = {t} is not an interval")]
    NonConvexValue { t: f64 },
    #[error("empty cloud")]
    EmptyCloud,
    #[error(transparent)]
    Fractal(#[from] FractalError),
    #[error(transparent)]
    SetFunction(#[from] SetFunctionError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphPoint {
    pub t: f64,
    pub s: Interval,
}

impl GraphPoint {
    pub fn new(t: f64, s: Interval) -> Self {
        GraphPoint { t, s }
    }

    fn from_set(t: f64, s: &CompactSet) -> Result<Self, GraphError> {
        s.as_interval()
            .map(|s| GraphPoint { t, s })
            .ok_or(GraphError::NonConvexValue { t })
    }

    /// The point `(t, Φ^α(t))` on the graph.
    pub fn on_graph(ff: &FractalFunction, t: f64) -> Result<Self, GraphError> {
        Self::from_set(t, &ff.eval(t)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphCloud {
    points: Vec<GraphPoint>,
}

impl GraphCloud {
    pub fn new(points: Vec<GraphPoint>) -> Result<Self, GraphError> {
        if points.is_empty() {
            return Err(GraphError::EmptyCloud);
        }
        Ok(GraphCloud { points })
    }

    /// `size` equally spaced parameters across the whole domain.
    pub fn sample(ff: &FractalFunction, size: usize) -> Result<Self, GraphError> {
        let p = ff.system.partition();
        let (a, b) = (p.t1(), p.t_inf());
        let n = size.max(2);
        let points = (0..n)
            .into_par_iter()
            .map(|k| {
                let t = if k == n - 1 {
                    b
                } else {
                    a + (b - a) * k as f64 / (n - 1) as f64
                };
                GraphPoint::on_graph(ff, t)
            })
            .collect::<Result<Vec<_>, _>>()?;
        GraphCloud::new(points)
    }

    pub fn points(&self) -> &[GraphPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `t,lower,upper` per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,lower,upper\n");
        for p in &self.points {
            writeln!(out, "{},{},{}", p.t, p.s.lo, p.s.hi).expect("write to string");
        }
        out
    }
}

/// `|t - w| + H_d(S_1, S_2)`.
pub fn graph_metric(x: &GraphPoint, y: &GraphPoint) -> f64 {
    (x.t - y.t).abs() + x.s.hausdorff(&y.s)
}

/// `|t - w| + H_d(S_1 + Φ^α(w), S_2 + Φ^α(t))`.
pub fn d_metric(x: &GraphPoint, y: &GraphPoint, ff: &FractalFunction) -> Result<f64, GraphError> {
    let fx = ff.eval(x.t)?;
    let fy = ff.eval(y.t)?;
    Ok(d_metric_with(x, y, &fx, &fy))
}

fn d_metric_with(x: &GraphPoint, y: &GraphPoint, fx: &CompactSet, fy: &CompactSet) -> f64 {
    let left = CompactSet::from(x.s).minkowski_sum(fy);
    let right = CompactSet::from(y.s).minkowski_sum(fx);
    (x.t - y.t).abs() + left.hausdorff_distance(&right)
}

/// `G_j(x)` for `1 ≤ j ≤ N`.
pub fn apply_g(sys: &FractalSystem, j: usize, x: &GraphPoint) -> Result<GraphPoint, GraphError> {
    let p = sys.partition();
    if j == 0 || j > p.truncation() {
        return Err(GraphError::IndexBeyondTruncation {
            index: j,
            truncation: p.truncation(),
        });
    }
    let t = p.zeta(j, x.t)?;
    let value = sys.combine(
        &sys.phi().evaluate(t)?,
        &x.s.into(),
        &sys.base().evaluate(x.t)?,
    );
    GraphPoint::from_set(t, &value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub pairs: usize,
    pub max_ratio: f64,
    /// Largest `ratio - max{|α|, a_j}` seen; non-positive when the bound holds.
    pub max_excess: f64,
    pub pass: bool,
}

/// Empirical Lipschitz ratios of every `G_j` in the D metric over random pairs.
pub fn verify_contraction(
    sys: &FractalSystem,
    ff: &FractalFunction,
    pairs: usize,
    seed: u64,
) -> Result<ContractionReport, GraphError> {
    let p = sys.partition();
    let n = p.truncation();
    let bounds: Vec<f64> = (1..=n)
        .map(|j| p.ratio(j).map(|a| a.max(sys.alpha().abs())))
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_point = |rng: &mut ChaCha8Rng| {
        let t = rng.gen_range(p.t1()..p.t_inf());
        let lo = rng.gen_range(-2.0..2.0);
        GraphPoint::new(t, Interval::new(lo, lo + rng.gen_range(0.0..1.0)))
    };
    let samples: Vec<(GraphPoint, GraphPoint)> = (0..pairs)
        .map(|_| (random_point(&mut rng), random_point(&mut rng)))
        .collect();
    let (max_ratio, max_excess) = samples
        .par_iter()
        .map(|(x, y)| -> Result<(f64, f64), GraphError> {
            let (fx, fy) = (ff.eval(x.t)?, ff.eval(y.t)?);
            let before = d_metric_with(x, y, &fx, &fy);
            if before == 0.0 {
                return Ok((0.0, f64::NEG_INFINITY));
            }
            let mut worst = (0.0_f64, f64::NEG_INFINITY);
            for (j, bound) in (1..=n).zip(&bounds) {
                let (gx, gy) = (apply_g(sys, j, x)?, apply_g(sys, j, y)?);
                let after = d_metric_with(
                    &gx,
                    &gy,
                    &image_value(sys, &gx, &fx, x.t)?,
                    &image_value(sys, &gy, &fy, y.t)?,
                );
                let ratio = after / before;
                worst = (worst.0.max(ratio), worst.1.max(ratio - bound));
            }
            Ok(worst)
        })
        .try_reduce(
            || (0.0, f64::NEG_INFINITY),
            |a, b| Ok((a.0.max(b.0), a.1.max(b.1))),
        )?;
    Ok(ContractionReport {
        pairs,
        max_ratio,
        max_excess,
        pass: max_excess <= 1e-9,
    })
}

/// `Φ^α(ζ_j(t))` from `Φ^α(t)` through the functional equation, which avoids
/// inverting the strongly contracting `ζ_j` in floating point.
fn image_value(
    sys: &FractalSystem,
    image: &GraphPoint,
    value: &CompactSet,
    t: f64,
) -> Result<CompactSet, GraphError> {
    Ok(sys.combine(
        &sys.phi().evaluate(image.t)?,
        value,
        &sys.base().evaluate(t)?,
    ))
}

/// Graph-metric Hausdorff distance between two clouds.
pub fn cloud_hausdorff(a: &[GraphPoint], b: &[GraphPoint]) -> f64 {
    directed(a, b).max(directed(b, a))
}

fn directed(from: &[GraphPoint], to: &[GraphPoint]) -> f64 {
    let mut sorted = to.to_vec();
    sorted.sort_by(|x, y| x.t.total_cmp(&y.t));
    from.par_iter()
        .map(|x| nearest(x, &sorted))
        .reduce(|| 0.0, f64::max)
}

/// Distance from `x` to a cloud sorted by `t`, sweeping outwards from `x.t`.
pub fn nearest(x: &GraphPoint, sorted: &[GraphPoint]) -> f64 {
    let start = sorted.partition_point(|y| y.t < x.t);
    let mut best = f64::INFINITY;
    for y in &sorted[start..] {
        if y.t - x.t >= best {
            break;
        }
        best = best.min(graph_metric(x, y));
    }
    for y in sorted[..start].iter().rev() {
        if x.t - y.t >= best {
            break;
        }
        best = best.min(graph_metric(x, y));
    }
    best
}

/// Hausdorff distance between the part of `cloud` covered by the chosen maps
/// and the union of its images under them.
pub fn cloud_defect(
    sys: &FractalSystem,
    cloud: &GraphCloud,
    maps: &[usize],
) -> Result<f64, GraphError> {
    let p = sys.partition();
    let top = maps.iter().copied().max().unwrap_or(0);
    let lo = maps.iter().copied().min().unwrap_or(1);
    let (a, b) = (p.node(lo)?, p.node(top + 1)?);
    let restricted: Vec<GraphPoint> = cloud
        .points
        .iter()
        .copied()
        .filter(|x| x.t >= a && x.t <= b)
        .collect();
    let images = maps
        .par_iter()
        .flat_map_iter(|&j| cloud.points.iter().map(move |x| apply_g(sys, j, x)))
        .collect::<Result<Vec<_>, _>>()?;
    if restricted.is_empty() || images.is_empty() {
        return Err(GraphError::EmptyCloud);
    }
    Ok(cloud_hausdorff(&restricted, &images))
}

/// Defect of `graph = ∪_{j≤N} G_j(graph)` on a uniform cloud of `cloud_size`
/// graph points, away from the limit point at `t_inf`.
pub fn attractor_defect(
    sys: &FractalSystem,
    ff: &FractalFunction,
    cloud_size: usize,
) -> Result<f64, GraphError> {
    let cloud = GraphCloud::sample(ff, cloud_size)?;
    let maps: Vec<usize> = (1..=sys.partition().truncation()).collect();
    cloud_defect(sys, &cloud, &maps)
}
