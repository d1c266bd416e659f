//! The Read-Bajraktarević operator and its fixed point `Φ^α`.
//!
//! For `t ∈ I_n` the operator is
//! `(φU)(t) = Φ(t) + α[U(ζ_n^{-1}(t)) - B(ζ_n^{-1}(t))]`. At `t_inf` the limit
//! over the nodes collapses to a single preimage: `ζ_n^{-1}(t_n)` is `t_1` for
//! increasing maps and `t_inf` for decreasing ones, and `Φ(t_n) → Φ(t_inf)`.
//! The tail orientation of the partition picks which.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::func_expr::Expr;
use crate::interval_set::CompactSet;
use crate::partition::{Orientation, Partition, PartitionError};
use crate::set_function::{
    check_endpoint_condition, endpoint_defect, Grid, SetFunction, SetFunctionError, Stencil,
};

/// Default stopping tolerance on successive iterates.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Single-valued / equal-endpoint tolerance for the interpolating regime.
pub const SINGLETON_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FractalError {
    #[error("scaling factor must satisfy |alpha| < 1, got {0}")]
    InvalidAlpha(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("function is not sampled on the system grid")]
    GridMisaligned,
    #[error(
        "no convergence after {iterations} iterations (last step {last_step:e}, target {target:e})"
    )]
    NoConvergence {
        iterations: usize,
        last_step: f64,
        target: f64,
    },
    #[error(transparent)]
    SetFunction(#[from] SetFunctionError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// Precomputed preimage data for one grid point.
#[derive(Debug, Clone)]
struct PointPlan {
    phi: CompactSet,
    pre: Stencil,
    base_at_pre: CompactSet,
}

/// The data `(Φ, B, α, ϑ)` defining the operator.
#[derive(Debug, Clone)]
pub struct FractalSystem {
    phi: SetFunction,
    base: SetFunction,
    alpha: f64,
    partition: Partition,
    plan: Arc<Vec<PointPlan>>,
}

impl FractalSystem {
    pub fn new(
        phi: SetFunction,
        base: SetFunction,
        alpha: f64,
        partition: Partition,
    ) -> Result<Self, FractalError> {
        if !(alpha.abs() < 1.0) {
            return Err(FractalError::InvalidAlpha(alpha));
        }
        if !phi.same_grid(&base) {
            return Err(FractalError::GridMisaligned);
        }
        if phi.domain() != (partition.t1(), partition.t_inf()) {
            return Err(SetFunctionError::DomainMismatch.into());
        }
        check_endpoint_condition(&phi, &base)?;
        let plan = build_plan(&phi, &base, &partition)?;
        Ok(FractalSystem {
            phi,
            base,
            alpha,
            partition,
            plan: Arc::new(plan),
        })
    }

    pub fn phi(&self) -> &SetFunction {
        &self.phi
    }

    pub fn base(&self) -> &SetFunction {
        &self.base
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.phi.grid()
    }

    /// `Φ` and `B` are single-valued and agree at `t_1` and at `t_inf`.
    pub fn is_interpolating(&self) -> bool {
        let ends = [
            (self.phi.first(), self.base.first()),
            (self.phi.last(), self.base.last()),
        ];
        ends.iter().all(|(p, b)| {
            p.is_singleton(SINGLETON_TOL)
                && b.is_singleton(SINGLETON_TOL)
                && p.hausdorff_distance(b) <= SINGLETON_TOL
        })
    }

    /// `H_d(B(t_1) - Φ(t_1), B(t_inf) - Φ(t_inf))`.
    pub fn endpoint_defect(&self) -> f64 {
        endpoint_defect(&self.phi, &self.base)
    }

    /// One application of the operator to `u`.
    pub fn apply_rb(&self, u: &SetFunction) -> Result<SetFunction, FractalError> {
        if !u.same_grid(&self.phi) {
            return Err(FractalError::GridMisaligned);
        }
        let alpha = self.alpha;
        let values = self
            .plan
            .par_iter()
            .map(|pp| {
                let inner = u.at(pp.pre);
                step(&pp.phi, alpha, &inner, &pp.base_at_pre)
            })
            .collect();
        Ok(SetFunction::from_values(self.grid().clone(), values)?)
    }

    /// Iterates from `U_0 = Φ`.
    pub fn fixed_point(&self, tol: f64) -> Result<FractalFunction, FractalError> {
        self.fixed_point_from(&self.phi, tol)
    }

    /// Iterates `U_{k+1} = φU_k` until `𝔡_C(U_{k+1}, U_k) ≤ tol(1 - |α|)`.
    pub fn fixed_point_from(
        &self,
        start: &SetFunction,
        tol: f64,
    ) -> Result<FractalFunction, FractalError> {
        if !(tol > 0.0) {
            return Err(FractalError::InvalidTolerance(tol));
        }
        let a = self.alpha.abs();
        let target = tol * (1.0 - a);
        let mut current = start.clone();
        let mut next = self.apply_rb(&current)?;
        let mut step_size = next.sup_metric(&current)?;
        let mut iterations = 1;
        let k_max = if step_size <= target || a == 0.0 {
            1
        } else {
            // a-priori bound from the geometric decay of successive steps
            ((target / step_size).ln() / a.ln()).ceil() as usize + 2
        };
        while step_size > target {
            if iterations >= k_max {
                return Err(FractalError::NoConvergence {
                    iterations,
                    last_step: step_size,
                    target,
                });
            }
            current = next;
            next = self.apply_rb(&current)?;
            step_size = next.sup_metric(&current)?;
            iterations += 1;
        }
        let mut ff = FractalFunction {
            result: next,
            system: self.clone(),
            residual: 0.0,
            iterations,
        };
        ff.residual = ff.self_residual();
        Ok(ff)
    }

    /// Point preimage used by the self-referential equation: `ζ_n^{-1}(t)` for
    /// `t ∈ I_n`, and the limiting preimage at `t_inf`.
    pub fn preimage(&self, t: f64) -> Result<f64, FractalError> {
        preimage(&self.partition, t)
    }

    /// `G_j`-style one-step update `Φ(t) + α[S - B(s)]` used by the CIFS.
    pub fn combine(
        &self,
        phi_t: &CompactSet,
        inner: &CompactSet,
        base_s: &CompactSet,
    ) -> CompactSet {
        step(phi_t, self.alpha, inner, base_s)
    }
}

fn step(phi_t: &CompactSet, alpha: f64, inner: &CompactSet, base_s: &CompactSet) -> CompactSet {
    if alpha == 0.0 {
        return phi_t.clone();
    }
    if let (Some(p), Some(u), Some(b)) = (
        phi_t.as_interval(),
        inner.as_interval(),
        base_s.as_interval(),
    ) {
        return p.add(u.sub(b).scale(alpha)).into();
    }
    phi_t.minkowski_sum(&inner.set_difference(base_s).scale(alpha))
}

fn preimage(p: &Partition, t: f64) -> Result<f64, FractalError> {
    if t == p.t_inf() {
        return Ok(match p.tail_orientation() {
            Orientation::Increasing => p.t1(),
            Orientation::Decreasing => p.t_inf(),
        });
    }
    let n = p.locate(t)?;
    Ok(p.map(n)?.invert(t))
}

fn build_plan(
    phi: &SetFunction,
    base: &SetFunction,
    p: &Partition,
) -> Result<Vec<PointPlan>, FractalError> {
    let grid = phi.grid();
    grid.points()
        .par_iter()
        .zip(phi.values().par_iter())
        .map(|(&t, v)| {
            let s = preimage(p, t)?;
            let pre = grid.stencil(s)?;
            Ok(PointPlan {
                phi: v.clone(),
                pre,
                base_at_pre: base.at(pre),
            })
        })
        .collect()
}

/// The computed fixed point together with its diagnostics.
#[derive(Debug, Clone)]
pub struct FractalFunction {
    pub result: SetFunction,
    pub system: FractalSystem,
    pub residual: f64,
    pub iterations: usize,
}

impl FractalFunction {
    /// Sup over grid points `t < t_inf` of the self-referential defect.
    pub fn self_residual(&self) -> f64 {
        residual_of(&self.system, &self.result).expect("result lives on the system grid")
    }

    pub fn alpha(&self) -> f64 {
        self.system.alpha
    }

    /// Recursion depth used by [`FractalFunction::eval`].
    pub fn eval_depth(&self) -> usize {
        let a = self.system.alpha.abs();
        if a == 0.0 {
            0
        } else {
            ((1e-17_f64.ln() / a.ln()).ceil() as usize).min(400)
        }
    }

    /// `Φ^α(t)` off the grid.
    ///
    /// Unrolls the self-referential equation along the preimage orbit of `t`
    /// and only interpolates the stored samples at the bottom, so the
    /// interpolation error enters with weight `|α|^depth`.
    pub fn eval(&self, t: f64) -> Result<CompactSet, FractalError> {
        let sys = &self.system;
        let depth = self.eval_depth();
        let mut orbit = Vec::with_capacity(depth + 1);
        orbit.push(t);
        for k in 0..depth {
            let s = sys.preimage(orbit[k])?;
            orbit.push(s);
        }
        let mut value = self.result.evaluate(orbit[depth])?;
        for k in (0..depth).rev() {
            let phi_t = sys.phi.evaluate(orbit[k])?;
            let base_s = sys.base.evaluate(orbit[k + 1])?;
            value = step(&phi_t, sys.alpha, &value, &base_s);
        }
        Ok(value)
    }

    /// Grid interpolation of the stored samples.
    pub fn evaluate_grid(&self, t: f64) -> Result<CompactSet, FractalError> {
        Ok(self.result.evaluate(t)?)
    }

    /// `H_d(Φ^α(t_1) - B(t_1), Φ^α(t_inf) - B(t_inf))`.
    pub fn endpoint_class_defect(&self) -> f64 {
        endpoint_defect(&self.result, &self.system.base)
    }

    /// Largest `H_d(Φ^α(t_i), Φ(t_i))` over the retained nodes `t_1..t_{N+1}`
    /// and `t_inf`.
    pub fn node_interpolation_defect(&self) -> f64 {
        let p = &self.system.partition;
        (1..=p.truncation() + 1)
            .map(|n| p.node(n).expect("positive index"))
            .chain(std::iter::once(p.t_inf()))
            .map(|t| {
                let a = self.result.evaluate(t).expect("node on grid");
                let b = self.system.phi.evaluate(t).expect("node on grid");
                a.hausdorff_distance(&b)
            })
            .fold(0.0, f64::max)
    }
}

/// Self-referential defect of an arbitrary function on the system grid.
pub fn residual_of(sys: &FractalSystem, u: &SetFunction) -> Result<f64, FractalError> {
    let image = sys.apply_rb(u)?;
    let n = u.values().len();
    Ok(u.values()[..n - 1]
        .par_iter()
        .zip(image.values()[..n - 1].par_iter())
        .map(|(a, b)| a.hausdorff_distance(b))
        .reduce(|| 0.0, f64::max))
}

/// How the base function of a system is obtained from the seed `Φ`.
#[derive(Debug, Clone)]
pub enum BaseSpec {
    /// The built-in construction with weight `h`.
    Example(Expr),
    /// A fixed base function.
    Fixed(SetFunction),
}

/// Everything but the seed: the data of the operator `𝔉^α_B`.
#[derive(Debug, Clone)]
pub struct FractalTemplate {
    pub alpha: f64,
    pub partition: Partition,
    pub base: BaseSpec,
    pub tol: f64,
}

impl FractalTemplate {
    pub fn system_for(&self, phi: &SetFunction) -> Result<FractalSystem, FractalError> {
        let base = match &self.base {
            BaseSpec::Example(h) => SetFunction::base_function(phi, h, &self.partition)?,
            BaseSpec::Fixed(b) => b.clone(),
        };
        FractalSystem::new(phi.clone(), base, self.alpha, self.partition.clone())
    }

    /// `𝔉^α_B(Φ) = Φ^α`.
    pub fn fractal_operator(&self, phi: &SetFunction) -> Result<FractalFunction, FractalError> {
        self.system_for(phi)?.fixed_point(self.tol)
    }

    /// Lipschitz bound of the operator: `𝔡_C(𝔉Φ, 𝔉Ψ) ≤ 𝔡_C(Φ, Ψ)/(1 - |α|)`.
    pub fn continuity_bound(&self, input_distance: f64) -> f64 {
        input_distance / (1.0 - self.alpha.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval_set::Interval;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn expr(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn band_system(alpha: f64, grid: usize) -> FractalSystem {
        let p = Partition::dyadic_unit(24);
        let phi = SetFunction::from_envelopes(&expr("t^2+1"), &expr("t^2+2"), grid, &p).unwrap();
        let base =
            SetFunction::from_envelopes_on(&expr("t^3+1"), &expr("t^3+2"), phi.grid().clone())
                .unwrap();
        FractalSystem::new(phi, base, alpha, p).unwrap()
    }

    fn random_function(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> SetFunction {
        let values = (0..grid.len())
            .map(|_| {
                let lo: f64 = rng.gen_range(-2.0..2.0);
                CompactSet::interval(lo, lo + rng.gen_range(0.0..1.0))
            })
            .collect();
        SetFunction::from_values(grid.clone(), values).unwrap()
    }

    #[test]
    fn rejects_bad_alpha_and_endpoints() {
        let p = Partition::dyadic_unit(8);
        let phi = SetFunction::from_envelopes(&expr("t^2+1"), &expr("t^2+2"), 33, &p).unwrap();
        assert!(matches!(
            FractalSystem::new(phi.clone(), phi.clone(), 1.0, p.clone()),
            Err(FractalError::InvalidAlpha(_))
        ));
        let bad = SetFunction::from_envelopes_on(&expr("t+1"), &expr("3*t+2"), phi.grid().clone())
            .unwrap();
        assert!(matches!(
            FractalSystem::new(phi, bad, 0.5, p),
            Err(FractalError::SetFunction(
                SetFunctionError::EndpointHypothesisViolated(_)
            ))
        ));
    }

    #[test]
    fn zero_alpha_returns_seed() {
        let sys = band_system(0.0, 257);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_function(sys.grid(), &mut rng);
        assert_eq!(sys.apply_rb(&u).unwrap(), *sys.phi());
        let ff = sys.fixed_point(1e-10).unwrap();
        assert_eq!(ff.iterations, 1);
        assert_eq!(ff.result, *sys.phi());
        assert_eq!(ff.residual, 0.0);
        assert_eq!(ff.eval(0.3).unwrap(), sys.phi().evaluate(0.3).unwrap());
    }

    #[test]
    fn apply_to_seed_matches_direct_substitution() {
        let sys = band_system(-0.4, 257);
        let image = sys.apply_rb(sys.phi()).unwrap();
        let p = sys.partition();
        for (i, &t) in sys.grid().points().iter().enumerate() {
            let s = if t == 1.0 {
                0.0
            } else {
                p.zeta_inv(p.locate(t).unwrap(), t).unwrap()
            };
            let expected = sys.phi().evaluate(t).unwrap().minkowski_sum(
                &sys.phi()
                    .evaluate(s)
                    .unwrap()
                    .set_difference(&sys.base().evaluate(s).unwrap())
                    .scale(-0.4),
            );
            assert!(image.values()[i].hausdorff_distance(&expected) < 1e-14);
        }
    }

    #[test]
    fn contraction_on_random_pairs() {
        let sys = band_system(0.5, 257);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let u = random_function(sys.grid(), &mut rng);
            let v = random_function(sys.grid(), &mut rng);
            let before = u.sup_metric(&v).unwrap();
            let after = sys
                .apply_rb(&u)
                .unwrap()
                .sup_metric(&sys.apply_rb(&v).unwrap())
                .unwrap();
            assert!(after <= 0.5 * before + 1e-12);
        }
    }

    #[test]
    fn fixed_point_converges() {
        let sys = band_system(0.5, 1025);
        let ff = sys.fixed_point(1e-10).unwrap();
        assert!(ff.residual <= 1e-8);
        assert!(ff.iterations <= 40, "iterations = {}", ff.iterations);
        assert!(ff.endpoint_class_defect() <= 1e-7);
        // unique fixed point regardless of the starting function
        let from_base = sys.fixed_point_from(sys.base(), 1e-10).unwrap();
        assert!(ff.result.sup_metric(&from_base.result).unwrap() <= 2e-10);
    }

    #[test]
    fn residual_decays_along_iterates() {
        let sys = band_system(0.5, 257);
        let mut u = sys.phi().clone();
        let mut residuals = vec![];
        for _ in 0..6 {
            u = sys.apply_rb(&u).unwrap();
            residuals.push(residual_of(&sys, &u).unwrap());
        }
        assert!(residuals[0] > residuals[4]);
    }

    #[test]
    fn rejects_non_positive_tolerance() {
        let sys = band_system(0.9, 129);
        assert!(matches!(
            sys.fixed_point(-1.0),
            Err(FractalError::InvalidTolerance(_))
        ));
        assert!(matches!(
            sys.fixed_point(0.0),
            Err(FractalError::InvalidTolerance(_))
        ));
    }

    #[test]
    fn interpolating_regime_keeps_nodes() {
        let p = Partition::dyadic_unit(24);
        let phi = SetFunction::from_envelopes(&expr("t - t*(1-t)"), &expr("t + t*(1-t)"), 1025, &p)
            .unwrap();
        let base = SetFunction::from_envelopes_on(
            &expr("t^2"),
            &expr("t^2 + 2*t*(1-t)"),
            phi.grid().clone(),
        )
        .unwrap();
        let sys = FractalSystem::new(phi, base, 0.6, p).unwrap();
        assert!(sys.is_interpolating());
        let ff = sys.fixed_point(1e-10).unwrap();
        assert!(ff.node_interpolation_defect() <= 1e-7);
    }

    #[test]
    fn recursive_eval_satisfies_the_equation_off_grid() {
        let sys = band_system(0.5, 513);
        let ff = sys.fixed_point(1e-12).unwrap();
        let p = sys.partition();
        for k in 0..200 {
            let t = (k as f64 + 0.37) / 200.0;
            let n = p.locate(t).unwrap();
            let s = p.zeta_inv(n, t).unwrap();
            let rhs = sys.combine(
                &sys.phi().evaluate(t).unwrap(),
                &ff.eval(s).unwrap(),
                &sys.base().evaluate(s).unwrap(),
            );
            assert!(ff.eval(t).unwrap().hausdorff_distance(&rhs) < 1e-12);
        }
        // on the grid, recursion and stored samples agree up to the tolerance
        for &t in sys.grid().points().iter().step_by(37) {
            let d = ff
                .eval(t)
                .unwrap()
                .hausdorff_distance(&ff.evaluate_grid(t).unwrap());
            assert!(d < 1e-9, "t={t} d={d}");
        }
    }

    #[test]
    fn fractal_operator_is_lipschitz() {
        let sys = band_system(0.5, 257);
        let template = FractalTemplate {
            alpha: 0.5,
            partition: sys.partition().clone(),
            base: BaseSpec::Fixed(sys.base().clone()),
            tol: 1e-10,
        };
        let f0 = template.fractal_operator(sys.phi()).unwrap();
        for eps in [1e-3, 1e-2] {
            let f1 = template
                .fractal_operator(&sys.phi().translate(eps))
                .unwrap();
            let d = f1.result.sup_metric(&f0.result).unwrap();
            assert!(d <= template.continuity_bound(eps) + 1e-9);
            assert!(d >= eps);
        }
        let zero = FractalTemplate {
            alpha: 0.0,
            ..template
        };
        assert_eq!(zero.fractal_operator(sys.phi()).unwrap().result, *sys.phi());
    }

    #[test]
    fn non_convex_seed_is_supported() {
        let p = Partition::dyadic_unit(6);
        let grid = Arc::new(Grid::for_partition(&p, 65).unwrap());
        let phi = SetFunction::from_fn(grid.clone(), |t| {
            CompactSet::from_intervals(vec![
                Interval::new(0.0, 0.1),
                Interval::new(1.0 + t * (1.0 - t), 1.2 + t * (1.0 - t)),
            ])
            .unwrap()
        });
        let base = phi.translate(0.25);
        let sys = FractalSystem::new(phi, base, 0.2, p).unwrap();
        let ff = sys.fixed_point(1e-10).unwrap();
        assert!(ff.residual <= 1e-10);
    }
}
