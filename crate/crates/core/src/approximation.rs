//! How far `Φ^α` strays from its seed, and inclusion monotonicity of the
//! fractal operator.

use serde::Serialize;
use thiserror::Error;

use crate::interval_set::CompactSet;
use crate::partition::Partition;
use crate::rb_fractal::{FractalError, FractalSystem};
use crate::set_function::{SetFunction, SetFunctionError};

/// Containment slack used by the order check.
pub const ORDER_SLACK: f64 = 1e-6;
pub const ORDER_DEPTH: usize = 3;
pub const ORDER_INDEX_CAP: usize = 8;

/// Additive slack on the error bound.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error(transparent)]
    Fractal(#[from] FractalError),
    #[error(transparent)]
    SetFunction(#[from] SetFunctionError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    /// `𝔡_C(Φ^α, Φ)`
    pub measured: f64,
    pub bound: f64,
    pub alpha: f64,
    /// `‖Φ - B‖_∞`
    pub phi_minus_b: f64,
    /// `‖Φ‖_∞`
    pub phi_norm: f64,
    pub pass: bool,
    pub points_checked: usize,
}

/// `|α|/(1-|α|)·‖Φ-B‖_∞ + 2|α|/(1-|α|)·‖Φ‖_∞`.
pub fn error_bound(sys: &FractalSystem) -> f64 {
    let phi_minus_b = sys
        .phi()
        .sup_metric(sys.base())
        .expect("system functions share a grid");
    bound_formula(sys.alpha(), phi_minus_b, sys.phi().norm_inf())
}

fn bound_formula(alpha: f64, phi_minus_b: f64, phi_norm: f64) -> f64 {
    let a = alpha.abs();
    let k = a / (1.0 - a);
    k * phi_minus_b + 2.0 * k * phi_norm
}

/// Computes `Φ^α` and compares both sides of the bound.
pub fn check_error(sys: &FractalSystem, tol: f64) -> Result<ErrorReport, ApproxError> {
    let ff = sys.fixed_point(tol)?;
    let measured = ff.result.sup_metric(sys.phi())?;
    let phi_minus_b = sys.phi().sup_metric(sys.base())?;
    let phi_norm = sys.phi().norm_inf();
    let bound = bound_formula(sys.alpha(), phi_minus_b, phi_norm);
    Ok(ErrorReport {
        measured,
        bound,
        alpha: sys.alpha(),
        phi_minus_b,
        phi_norm,
        pass: measured <= bound + BOUND_SLACK,
        points_checked: sys.grid().len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderReport {
    pub pass: bool,
    pub points_checked: usize,
    /// Largest amount by which `Φ^α(t)` sticks out of `𝒰^α(t)`.
    pub worst_excess: f64,
}

/// A seed together with its base function.
#[derive(Debug, Clone, Copy)]
pub struct Seeded<'a> {
    pub phi: &'a SetFunction,
    pub base: &'a SetFunction,
}

/// Checks `Φ^α ⊆ 𝒰^α` on the dense orbit set of the partition.
///
/// Requires `Φ ⊆ 𝒰`, `B_Φ ⊆ B_𝒰`, single-valued endpoint values and bases
/// that agree with their seeds at `t_1` and `t_inf`.
pub fn check_order_preservation(
    lower: Seeded<'_>,
    upper: Seeded<'_>,
    alpha: f64,
    p: &Partition,
    depth: usize,
    index_cap: usize,
    tol: f64,
) -> Result<OrderReport, ApproxError> {
    let points = p.dense_points(depth, index_cap);
    let violated = |what: &str| Err(ApproxError::HypothesisViolated(what.to_string()));
    if !lower.phi.leq_with(upper.phi, &points, ORDER_SLACK)? {
        return violated("seed functions are not ordered");
    }
    if !lower.base.leq_with(upper.base, &points, ORDER_SLACK)? {
        return violated("base functions are not ordered");
    }
    for (name, s) in [("lower", lower), ("upper", upper)] {
        let ends = [
            (s.phi.first(), s.base.first()),
            (s.phi.last(), s.base.last()),
        ];
        for (phi_end, base_end) in ends {
            if !phi_end.is_singleton(1e-12) {
                return violated(&format!("{name} seed is set-valued at an endpoint"));
            }
            if phi_end.hausdorff_distance(base_end) > 1e-9 {
                return violated(&format!("{name} base differs from its seed at an endpoint"));
            }
        }
    }
    let lo = FractalSystem::new(lower.phi.clone(), lower.base.clone(), alpha, p.clone())?
        .fixed_point(tol)?;
    let hi = FractalSystem::new(upper.phi.clone(), upper.base.clone(), alpha, p.clone())?
        .fixed_point(tol)?;
    let mut worst: f64 = 0.0;
    for &t in &points {
        worst = worst.max(excess(&lo.eval(t)?, &hi.eval(t)?));
    }
    Ok(OrderReport {
        pass: worst <= ORDER_SLACK,
        points_checked: points.len(),
        worst_excess: worst,
    })
}

/// Smallest slack making `a ⊆ b` hold part by part.
fn excess(a: &CompactSet, b: &CompactSet) -> f64 {
    a.parts()
        .iter()
        .map(|p| {
            b.parts()
                .iter()
                .map(|q| (q.lo - p.lo).max(p.hi - q.hi).max(0.0))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}
