//! Chaos-game sampling of the invariant measure `μ_p = Σ p_i μ_p∘G_i^{-1}`
//! and an exact Monge-Kantorovich distance between empirical measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cifs_graph::{apply_g, graph_metric, nearest, GraphCloud, GraphError, GraphPoint};
use crate::interval_set::CompactSet;
use crate::partition::{Partition, PartitionError};
use crate::rb_fractal::{FractalFunction, FractalSystem};

/// Largest sample size accepted by [`mk_distance`].
pub const MAX_ASSIGNMENT: usize = 1024;
pub const DEFAULT_BURN_IN: usize = 100;
/// Name of the generator behind every seeded draw.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.3)";

/// Seed offset separating independent runs derived from one user seed.
const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("measures have {0} and {1} atoms")]
    SizeMismatch(usize, usize),
    #[error("{0} atoms exceed the exact assignment limit of {MAX_ASSIGNMENT}")]
    TooLarge(usize),
    #[error("at least one atom is required")]
    Empty,
    #[error("{len} weights but the system has {truncation} maps")]
    LengthMismatch { len: usize, truncation: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// Weights `p_1..p_N`, normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityVector {
    weights: Vec<f64>,
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl ProbabilityVector {
    /// Renormalizes strictly positive weights.
    pub fn new(weights: Vec<f64>) -> Result<Self, MeasureError> {
        if weights.is_empty() {
            return Err(MeasureError::InvalidProbabilities("no weights".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(MeasureError::InvalidProbabilities(format!(
                "weight {w} is not positive"
            )));
        }
        Ok(Self::normalized(weights))
    }

    /// `p_i ∝ a_i` over the retained cells.
    pub fn proportional(p: &Partition) -> Result<Self, MeasureError> {
        let w = (1..=p.truncation())
            .map(|n| p.ratio(n))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(w)
    }

    /// All mass on map `index` (1-based). Only meant for probing the Dirac limit.
    pub fn degenerate(len: usize, index: usize) -> Result<Self, MeasureError> {
        if index == 0 || index > len {
            return Err(MeasureError::InvalidProbabilities(format!(
                "index {index} outside 1..={len}"
            )));
        }
        let mut w = vec![0.0; len];
        w[index - 1] = 1.0;
        Ok(Self::normalized(w))
    }

    fn normalized(weights: Vec<f64>) -> Self {
        let total = neumaier_sum(&weights);
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = Neumaier::default();
        for w in &weights {
            acc.add(*w);
            cdf.push(acc.value());
        }
        *cdf.last_mut().expect("non-empty") = 1.0;
        ProbabilityVector { weights, cdf }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Inverse-CDF draw of a 1-based map index.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
            + 1
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    xs.iter().for_each(|x| acc.add(*x));
    acc.value()
}

/// Uniformly weighted atoms produced by one chaos-game run.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub atoms: GraphCloud,
    pub seed: u64,
    pub burn_in: usize,
}

impl EmpiricalMeasure {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// `n` atoms of the orbit started at `(t_1, Φ^α(t_1))`, after discarding
/// `burn_in` steps.
pub fn chaos_game(
    sys: &FractalSystem,
    ff: &FractalFunction,
    p: &ProbabilityVector,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<EmpiricalMeasure, MeasureError> {
    let start = GraphPoint::on_graph(ff, sys.partition().t1())?;
    chaos_game_from(sys, start, p, n, burn_in, seed)
}

pub fn chaos_game_from(
    sys: &FractalSystem,
    start: GraphPoint,
    p: &ProbabilityVector,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<EmpiricalMeasure, MeasureError> {
    check_len(sys, p)?;
    if n == 0 {
        return Err(MeasureError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = start;
    let mut atoms = Vec::with_capacity(n);
    for k in 0..burn_in + n {
        x = apply_g(sys, p.draw(&mut rng), &x)?;
        if k >= burn_in {
            atoms.push(x);
        }
    }
    Ok(EmpiricalMeasure {
        atoms: GraphCloud::new(atoms)?,
        seed,
        burn_in,
    })
}

fn check_len(sys: &FractalSystem, p: &ProbabilityVector) -> Result<(), MeasureError> {
    let truncation = sys.partition().truncation();
    if p.len() != truncation {
        return Err(MeasureError::LengthMismatch {
            len: p.len(),
            truncation,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportReport {
    pub fraction: f64,
    pub eps: f64,
    pub atoms: usize,
    /// Largest distance from an atom to the graph.
    pub max_distance: f64,
}

/// Fraction of atoms within `eps` of the graph of `Φ^α`.
///
/// Each atom `(t, S)` is compared with graph points sampled on a uniform
/// parameter grid of `cloud_size` points and with `(t, Φ^α(t))` itself.
pub fn support_check(
    m: &EmpiricalMeasure,
    ff: &FractalFunction,
    eps: f64,
    cloud_size: usize,
) -> Result<SupportReport, MeasureError> {
    let cloud = GraphCloud::sample(ff, cloud_size)?;
    let distances = m
        .atoms
        .points()
        .par_iter()
        .map(|x| -> Result<f64, MeasureError> {
            let own = graph_metric(x, &GraphPoint::on_graph(ff, x.t)?);
            Ok(own.min(nearest(x, cloud.points())))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let inside = distances.iter().filter(|d| **d <= eps).count();
    Ok(SupportReport {
        fraction: inside as f64 / distances.len() as f64,
        eps,
        atoms: distances.len(),
        max_distance: distances.iter().copied().fold(0.0, f64::max),
    })
}

/// Ground metric for optimal transport.
#[derive(Debug, Clone, Copy)]
pub enum GroundMetric<'a> {
    Graph,
    D(&'a FractalFunction),
}

/// Exact `W_1` between two uniform empirical measures of equal size.
pub fn mk_distance(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    metric: GroundMetric<'_>,
) -> Result<f64, MeasureError> {
    mk_distance_points(a.atoms.points(), b.atoms.points(), metric)
}

pub fn mk_distance_points(
    a: &[GraphPoint],
    b: &[GraphPoint],
    metric: GroundMetric<'_>,
) -> Result<f64, MeasureError> {
    if a.len() != b.len() {
        return Err(MeasureError::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MeasureError::Empty);
    }
    if a.len() > MAX_ASSIGNMENT {
        return Err(MeasureError::TooLarge(a.len()));
    }
    let cost: Vec<Vec<f64>> = match metric {
        GroundMetric::Graph => a
            .par_iter()
            .map(|x| b.iter().map(|y| graph_metric(x, y)).collect())
            .collect(),
        GroundMetric::D(ff) => {
            let fa = values_on_graph(ff, a)?;
            let fb = values_on_graph(ff, b)?;
            a.par_iter()
                .zip(&fa)
                .map(|(x, fx)| {
                    b.iter()
                        .zip(&fb)
                        .map(|(y, fy)| d_cost(x, y, fx, fy))
                        .collect()
                })
                .collect()
        }
    };
    let matching = assignment(&cost);
    let total: f64 = matching.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(total / a.len() as f64)
}

fn values_on_graph(
    ff: &FractalFunction,
    xs: &[GraphPoint],
) -> Result<Vec<CompactSet>, MeasureError> {
    xs.par_iter()
        .map(|x| ff.eval(x.t).map_err(|e| MeasureError::Graph(e.into())))
        .collect()
}

fn d_cost(x: &GraphPoint, y: &GraphPoint, fx: &CompactSet, fy: &CompactSet) -> f64 {
    let left = CompactSet::from(x.s).minkowski_sum(fy);
    let right = CompactSet::from(y.s).minkowski_sum(fx);
    (x.t - y.t).abs() + left.hausdorff_distance(&right)
}

/// Minimum-cost perfect matching of a square matrix (Hungarian method with
/// potentials). Returns the column assigned to each row.
pub fn assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    col_of
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfSimilarityReport {
    /// `d_MK(m, Σ p_i m∘G_i^{-1})` estimated by resampling.
    pub defect: f64,
    /// `d_MK` between two runs with independent seeds.
    pub baseline: f64,
    pub n: usize,
    pub seed: u64,
}

/// Pushes a resample of a chaos-game measure through randomly chosen maps and
/// compares it with the original.
pub fn self_similarity_defect(
    sys: &FractalSystem,
    ff: &FractalFunction,
    p: &ProbabilityVector,
    n: usize,
    seed: u64,
) -> Result<f64, MeasureError> {
    let m = chaos_game(sys, ff, p, n, DEFAULT_BURN_IN, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(SEED_STRIDE));
    let atoms = m.atoms.points();
    let pushed = (0..n)
        .map(|_| {
            let x = atoms[rng.gen_range(0..atoms.len())];
            apply_g(sys, p.draw(&mut rng), &x)
        })
        .collect::<Result<Vec<_>, _>>()?;
    mk_distance_points(atoms, &pushed, GroundMetric::Graph)
}

/// `d_MK` between chaos-game runs seeded independently from `seed`.
pub fn two_seed_baseline(
    sys: &FractalSystem,
    ff: &FractalFunction,
    p: &ProbabilityVector,
    n: usize,
    seed: u64,
) -> Result<f64, MeasureError> {
    let a = chaos_game(sys, ff, p, n, DEFAULT_BURN_IN, seed)?;
    let b = chaos_game(
        sys,
        ff,
        p,
        n,
        DEFAULT_BURN_IN,
        seed.wrapping_add(SEED_STRIDE.wrapping_mul(2)),
    )?;
    mk_distance(&a, &b, GroundMetric::Graph)
}

pub fn self_similarity_report(
    sys: &FractalSystem,
    ff: &FractalFunction,
    p: &ProbabilityVector,
    n: usize,
    seed: u64,
) -> Result<SelfSimilarityReport, MeasureError> {
    Ok(SelfSimilarityReport {
        defect: self_similarity_defect(sys, ff, p, n, seed)?,
        baseline: two_seed_baseline(sys, ff, p, n, seed)?,
        n,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func_expr::Expr;
    use crate::interval_set::Interval;
    use crate::set_function::SetFunction;

    fn expr(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn system(alpha: f64, lower: &str, upper: &str) -> (FractalSystem, FractalFunction) {
        let p = Partition::dyadic_unit(12);
        let phi = SetFunction::from_envelopes(&expr(lower), &expr(upper), 513, &p).unwrap();
        let base = if lower == "t^2+1" {
            SetFunction::from_envelopes_on(&expr("t^3+1"), &expr("t^3+2"), phi.grid().clone())
                .unwrap()
        } else {
            phi.clone()
        };
        let sys = FractalSystem::new(phi, base, alpha, p).unwrap();
        let ff = sys.fixed_point(1e-12).unwrap();
        (sys, ff)
    }

    fn pt(t: f64, lo: f64, hi: f64) -> GraphPoint {
        GraphPoint::new(t, Interval::new(lo, hi))
    }

    #[test]
    fn proportional_weights() {
        let pv = ProbabilityVector::proportional(&Partition::dyadic_unit(24)).unwrap();
        assert_eq!(pv.len(), 24);
        assert!(pv.weights().iter().all(|w| *w > 0.0));
        assert!((neumaier_sum(pv.weights()) - 1.0).abs() <= 1e-15);
        assert!((pv.weights()[0] / pv.weights()[1] - 2.0).abs() < 1e-12);
        assert!(ProbabilityVector::new(vec![0.5, 0.0]).is_err());
    }

    #[test]
    fn draws_follow_weights() {
        let pv = ProbabilityVector::new(vec![1.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hits = (0..40_000).filter(|_| pv.draw(&mut rng) == 2).count();
        assert!((hits as f64 / 40_000.0 - 0.75).abs() < 0.01);
        let d = ProbabilityVector::degenerate(4, 3).unwrap();
        assert!((0..100).all(|_| d.draw(&mut rng) == 3));
    }

    #[test]
    fn same_seed_same_atoms() {
        let (sys, ff) = system(0.5, "t^2+1", "t^2+2");
        let pv = ProbabilityVector::proportional(sys.partition()).unwrap();
        let a = chaos_game(&sys, &ff, &pv, 300, 10, 9).unwrap();
        let b = chaos_game(&sys, &ff, &pv, 300, 10, 9).unwrap();
        let c = chaos_game(&sys, &ff, &pv, 300, 10, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.atoms, c.atoms);
    }

    #[test]
    fn dirac_collapse() {
        let (sys, ff) = system(0.5, "t^2+1", "t^2+2");
        let pv = ProbabilityVector::degenerate(12, 1).unwrap();
        let m = chaos_game_from(&sys, pt(0.7, -4.0, 9.0), &pv, 50, 100, 1).unwrap();
        let fixed = GraphPoint::on_graph(&ff, 0.0).unwrap();
        assert!(m
            .atoms
            .points()
            .iter()
            .all(|x| graph_metric(x, &fixed) < 1e-12));
    }

    #[test]
    fn zero_alpha_atoms_lie_on_seed() {
        let (sys, ff) = system(0.0, "sin(3*t)", "sin(3*t) + 1");
        let pv = ProbabilityVector::proportional(sys.partition()).unwrap();
        let m = chaos_game(&sys, &ff, &pv, 500, 0, 2).unwrap();
        let r = support_check(&m, &ff, 2.0 * sys.grid().max_gap(), 257).unwrap();
        assert_eq!(r.fraction, 1.0);
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..=6 {
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.gen_range(0.0..10.0)).collect())
                .collect();
            let m = assignment(&cost);
            let got: f64 = m.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            let best = permutations(n)
                .iter()
                .map(|perm| {
                    perm.iter()
                        .enumerate()
                        .map(|(i, &j)| cost[i][j])
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((got - best).abs() < 1e-12, "n={n}");
        }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = vec![];
        for perm in permutations(n - 1) {
            for k in 0..=perm.len() {
                let mut p = perm.clone();
                p.insert(k, n - 1);
                out.push(p);
            }
        }
        out
    }

    fn measure(points: Vec<GraphPoint>) -> EmpiricalMeasure {
        EmpiricalMeasure {
            atoms: GraphCloud::new(points).unwrap(),
            seed: 0,
            burn_in: 0,
        }
    }

    #[test]
    fn mk_examples() {
        let (sys, ff) = system(0.5, "t^2+1", "t^2+2");
        let pv = ProbabilityVector::proportional(sys.partition()).unwrap();
        let m = chaos_game(&sys, &ff, &pv, 64, 10, 3).unwrap();
        assert_eq!(mk_distance(&m, &m, GroundMetric::Graph).unwrap(), 0.0);
        assert!(mk_distance(&m, &m, GroundMetric::D(&ff)).unwrap() < 1e-12);
        let shifted = measure(
            m.atoms
                .points()
                .iter()
                .map(|x| GraphPoint::new(x.t, x.s.translate(0.3)))
                .collect(),
        );
        let d = mk_distance(&m, &shifted, GroundMetric::Graph).unwrap();
        assert!((d - 0.3).abs() < 1e-12);
        let small = measure(vec![pt(0.0, 0.0, 1.0)]);
        assert!(matches!(
            mk_distance(&m, &small, GroundMetric::Graph),
            Err(MeasureError::SizeMismatch(64, 1))
        ));
        let big = measure(vec![pt(0.0, 0.0, 1.0); MAX_ASSIGNMENT + 1]);
        assert!(matches!(
            mk_distance(&big, &big, GroundMetric::Graph),
            Err(MeasureError::TooLarge(_))
        ));
    }

    #[test]
    fn constant_seed_has_no_self_similarity_defect() {
        let (sys, ff) = system(0.0, "1", "2");
        let pv = ProbabilityVector::proportional(sys.partition()).unwrap();
        let d = self_similarity_defect(&sys, &ff, &pv, 128, 4).unwrap();
        // atoms differ only in t, so the defect is a transport cost along the line
        assert!(d < 0.05, "{d}");
    }
}
