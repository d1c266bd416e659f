//! Grid-sampled set-valued maps `I → K(ℝ)`.
//!
//! A [`SetFunction`] stores one canonical [`CompactSet`] per grid point and
//! interpolates endpoints linearly in between. Parts are matched by index;
//! when neighbouring values have different part counts the convex hulls are
//! interpolated instead.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::func_expr::{Expr, ExprError};
use crate::interval_set::{CompactSet, Interval, CONTAINMENT_EPS};
use crate::partition::Partition;

/// Default number of uniform grid points.
pub const DEFAULT_GRID_SIZE: usize = 4097;

/// Tolerance on `h(t_1) = h(t_inf) = 1` and on the endpoint condition.
pub const ENDPOINT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetFunctionError {
    #[error("{t} lies outside the grid [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("functions are defined on different domains")]
    DomainMismatch,
    #[error("lower envelope exceeds upper envelope at t = {t}")]
    EnvelopeCrossing { t: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("endpoint hypothesis violated: {0}")]
    EndpointHypothesisViolated(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Strictly increasing sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn from_points(points: Vec<f64>) -> Result<Grid, SetFunctionError> {
        if points.len() < 2 {
            return Err(SetFunctionError::InvalidGrid(
                "need at least two points".into(),
            ));
        }
        if points.iter().any(|x| !x.is_finite()) || points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SetFunctionError::InvalidGrid(
                "points must be finite and strictly increasing".into(),
            ));
        }
        Ok(Grid { points })
    }

    /// `grid_size` uniform points on `[t_1, t_inf]` merged with the nodes
    /// `t_1..t_{N+1}`. Uniform points closer than `1e-13·|I|` to a node are
    /// replaced by the node.
    pub fn for_partition(p: &Partition, grid_size: usize) -> Result<Grid, SetFunctionError> {
        if grid_size < 2 {
            return Err(SetFunctionError::InvalidGrid(
                "grid_size must be at least 2".into(),
            ));
        }
        let (t1, t_inf) = (p.t1(), p.t_inf());
        let len = t_inf - t1;
        let nodes: Vec<f64> = (1..=p.truncation() + 1)
            .map(|n| p.node(n).expect("positive index"))
            .collect();
        let tol = 1e-13 * len;
        let mut pts: Vec<f64> = (0..grid_size)
            .map(|i| {
                if i == grid_size - 1 {
                    t_inf
                } else {
                    t1 + len * (i as f64) / ((grid_size - 1) as f64)
                }
            })
            .filter(|&x| {
                let k = nodes.partition_point(|&n| n < x);
                let near = |j: usize| nodes.get(j).is_some_and(|&n| (n - x).abs() <= tol);
                !(near(k) || (k > 0 && near(k - 1)))
            })
            .collect();
        pts.extend_from_slice(&nodes);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        Grid::from_points(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Largest spacing between neighbouring points.
    pub fn max_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Interpolation stencil for `t`.
    pub fn stencil(&self, t: f64) -> Result<Stencil, SetFunctionError> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(SetFunctionError::OutOfDomain {
                t,
                lo: self.start(),
                hi: self.end(),
            });
        }
        let i = self.points.partition_point(|&x| x < t);
        if self.points[i] == t {
            return Ok(Stencil::Exact(i));
        }
        let (a, b) = (self.points[i - 1], self.points[i]);
        Ok(Stencil::Between(i - 1, (t - a) / (b - a)))
    }
}

/// Where a point sits relative to the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stencil {
    Exact(usize),
    /// Cell `i` (between points `i` and `i+1`) with weight on point `i+1`.
    Between(usize, f64),
}

fn interpolate(a: &CompactSet, b: &CompactSet, w: f64) -> CompactSet {
    if let (Some(x), Some(y)) = (a.as_interval(), b.as_interval()) {
        return x.lerp(&y, w).into();
    }
    if a.parts().len() == b.parts().len() {
        let parts = a
            .parts()
            .iter()
            .zip(b.parts())
            .map(|(x, y)| x.lerp(y, w))
            .collect();
        return CompactSet::from_intervals(parts).expect("non-empty");
    }
    a.hull().lerp(&b.hull(), w).into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetFunction {
    grid: Arc<Grid>,
    values: Vec<CompactSet>,
    modulus: f64,
}

impl SetFunction {
    pub fn from_values(grid: Arc<Grid>, values: Vec<CompactSet>) -> Result<Self, SetFunctionError> {
        if values.len() != grid.len() {
            return Err(SetFunctionError::InvalidGrid(format!(
                "{} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        let modulus = grid
            .points()
            .windows(2)
            .zip(values.windows(2))
            .map(|(g, v)| v[0].hausdorff_distance(&v[1]) / (g[1] - g[0]))
            .fold(0.0, f64::max);
        Ok(SetFunction {
            grid,
            values,
            modulus,
        })
    }

    pub fn from_fn<F>(grid: Arc<Grid>, f: F) -> Self
    where
        F: Fn(f64) -> CompactSet + Sync,
    {
        let values = grid.points().par_iter().map(|&t| f(t)).collect();
        SetFunction::from_values(grid, values).expect("one value per grid point")
    }

    pub fn try_from_fn<F>(grid: Arc<Grid>, f: F) -> Result<Self, SetFunctionError>
    where
        F: Fn(f64) -> Result<CompactSet, SetFunctionError> + Sync,
    {
        let values = grid
            .points()
            .par_iter()
            .map(|&t| f(t))
            .collect::<Result<Vec<_>, _>>()?;
        SetFunction::from_values(grid, values)
    }

    /// Convex-valued map `t ↦ [lower(t), upper(t)]` on the partition's grid.
    pub fn from_envelopes(
        lower: &Expr,
        upper: &Expr,
        grid_size: usize,
        p: &Partition,
    ) -> Result<Self, SetFunctionError> {
        let grid = Arc::new(Grid::for_partition(p, grid_size)?);
        Self::from_envelopes_on(lower, upper, grid)
    }

    pub fn from_envelopes_on(
        lower: &Expr,
        upper: &Expr,
        grid: Arc<Grid>,
    ) -> Result<Self, SetFunctionError> {
        Self::try_from_fn(grid, |t| {
            let (lo, hi) = (lower.eval(t)?, upper.eval(t)?);
            if lo > hi + 1e-12 * lo.abs().max(hi.abs()).max(1.0) {
                return Err(SetFunctionError::EnvelopeCrossing { t });
            }
            Ok(CompactSet::interval(lo, hi.max(lo)))
        })
    }

    pub fn constant(grid: Arc<Grid>, value: CompactSet) -> Self {
        let values = vec![value; grid.len()];
        SetFunction::from_values(grid, values).expect("matching lengths")
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[CompactSet] {
        &self.values
    }

    /// Largest `H_d(v_i, v_{i+1}) / (g_{i+1} - g_i)` over neighbouring samples.
    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.grid.start(), self.grid.end())
    }

    pub fn is_convex_valued(&self) -> bool {
        self.values.iter().all(CompactSet::is_convex)
    }

    pub fn evaluate(&self, t: f64) -> Result<CompactSet, SetFunctionError> {
        Ok(self.at(self.grid.stencil(t)?))
    }

    pub fn at(&self, s: Stencil) -> CompactSet {
        match s {
            Stencil::Exact(i) => self.values[i].clone(),
            Stencil::Between(i, w) => interpolate(&self.values[i], &self.values[i + 1], w),
        }
    }

    /// Same grid (by identity or by value).
    pub fn same_grid(&self, other: &SetFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    /// `sup_t H_d(f(t), g(t))` over the union of both grids.
    pub fn sup_metric(&self, other: &SetFunction) -> Result<f64, SetFunctionError> {
        if self.domain() != other.domain() {
            return Err(SetFunctionError::DomainMismatch);
        }
        if self.same_grid(other) {
            return Ok(self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(a, b)| a.hausdorff_distance(b))
                .reduce(|| 0.0, f64::max));
        }
        let mut pts: Vec<f64> = self
            .grid
            .points()
            .iter()
            .chain(other.grid.points())
            .copied()
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts.par_iter()
            .map(|&t| -> Result<f64, SetFunctionError> {
                Ok(self.evaluate(t)?.hausdorff_distance(&other.evaluate(t)?))
            })
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }

    /// `f(t) ⊆ g(t)` at every supplied point, with the default containment slack.
    pub fn leq(&self, other: &SetFunction, points: &[f64]) -> Result<bool, SetFunctionError> {
        self.leq_with(other, points, CONTAINMENT_EPS)
    }

    pub fn leq_with(
        &self,
        other: &SetFunction,
        points: &[f64],
        slack: f64,
    ) -> Result<bool, SetFunctionError> {
        for &t in points {
            if !self
                .evaluate(t)?
                .subset_leq_with(&other.evaluate(t)?, slack)
            {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `sup_t H_d(f(t), {0})`.
    pub fn norm_inf(&self) -> f64 {
        self.values
            .iter()
            .map(CompactSet::norm_to_zero)
            .fold(0.0, f64::max)
    }

    /// Pointwise map over grid values, keeping the grid.
    pub fn map<F>(&self, f: F) -> SetFunction
    where
        F: Fn(f64, &CompactSet) -> CompactSet + Sync,
    {
        let values = self
            .grid
            .points()
            .par_iter()
            .zip(self.values.par_iter())
            .map(|(&t, v)| f(t, v))
            .collect();
        SetFunction::from_values(self.grid.clone(), values).expect("same length")
    }

    /// `t ↦ f(t) + {c}`.
    pub fn translate(&self, c: f64) -> SetFunction {
        self.map(|_, v| v.translate(c))
    }

    pub fn first(&self) -> &CompactSet {
        &self.values[0]
    }

    pub fn last(&self) -> &CompactSet {
        &self.values[self.values.len() - 1]
    }

    /// The base function
    /// `B(t) = h(t)Φ(t) + (t - t_1)(Φ(t_inf) - Φ(t_1)) + (t_inf - t)(Φ(t_1) - Φ(t))`.
    ///
    /// Fails unless `h(t_1) = h(t_inf) = 1` and the result satisfies
    /// `B(t_1) - Φ(t_1) = B(t_inf) - Φ(t_inf)`.
    pub fn base_function(
        phi: &SetFunction,
        h: &Expr,
        p: &Partition,
    ) -> Result<Self, SetFunctionError> {
        let (t1, t_inf) = (p.t1(), p.t_inf());
        if phi.domain() != (t1, t_inf) {
            return Err(SetFunctionError::DomainMismatch);
        }
        for t in [t1, t_inf] {
            let v = h.eval(t)?;
            if (v - 1.0).abs() > ENDPOINT_TOL {
                return Err(SetFunctionError::EndpointHypothesisViolated(format!(
                    "h({t}) = {v}, expected 1"
                )));
            }
        }
        let phi1 = phi.first().clone();
        let phi_inf = phi.last().clone();
        let spread = phi_inf.set_difference(&phi1);
        let base = phi
            .grid
            .points()
            .par_iter()
            .zip(phi.values.par_iter())
            .map(|(&t, v)| -> Result<CompactSet, SetFunctionError> {
                Ok(v.scale(h.eval(t)?)
                    .minkowski_sum(&spread.scale(t - t1))
                    .minkowski_sum(&phi1.set_difference(v).scale(t_inf - t)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let base = SetFunction::from_values(phi.grid.clone(), base)?;
        check_endpoint_condition(phi, &base)?;
        Ok(base)
    }

    /// CSV dump: `t,lower,upper` when every value is an interval, otherwise
    /// `t,part_index,lower,upper` with one row per part.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.is_convex_valued() {
            out.push_str("t,lower,upper\n");
            for (t, v) in self.grid.points().iter().zip(&self.values) {
                let _ = writeln!(out, "{},{},{}", t, v.min(), v.max());
            }
        } else {
            out.push_str("t,part_index,lower,upper\n");
            for (t, v) in self.grid.points().iter().zip(&self.values) {
                for (k, p) in v.parts().iter().enumerate() {
                    let _ = writeln!(out, "{},{},{},{}", t, k, p.lo, p.hi);
                }
            }
        }
        out
    }

    /// Convex hulls of the values.
    pub fn hulls(&self) -> Vec<Interval> {
        self.values.iter().map(CompactSet::hull).collect()
    }
}

/// `H_d(B(t_1) - Φ(t_1), B(t_inf) - Φ(t_inf))`.
pub fn endpoint_defect(phi: &SetFunction, base: &SetFunction) -> f64 {
    let left = base.first().set_difference(phi.first());
    let right = base.last().set_difference(phi.last());
    left.hausdorff_distance(&right)
}

pub fn check_endpoint_condition(
    phi: &SetFunction,
    base: &SetFunction,
) -> Result<(), SetFunctionError> {
    let defect = endpoint_defect(phi, base);
    if defect > ENDPOINT_TOL {
        return Err(SetFunctionError::EndpointHypothesisViolated(format!(
            "B(t1) - Phi(t1) = {} but B(t_inf) - Phi(t_inf) = {} (H_d = {defect:e})",
            base.first().set_difference(phi.first()),
            base.last().set_difference(phi.last()),
        )));
    }
    Ok(())
}
