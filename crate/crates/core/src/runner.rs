//! The `build`, `verify`, `chaos`, `dims` and `render` pipelines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::approximation::{self, check_order_preservation, Seeded};
use crate::cifs_graph::{self, GraphCloud};
use crate::config::{Config, ConfigError};
use crate::dimension::{self, Bound, DimensionReport, RatioSequence};
use crate::interval_set::{CompactSet, Interval};
use crate::invariant_measure::{self, EmpiricalMeasure, GENERATOR};
use crate::rb_fractal::{FractalError, FractalFunction, FractalSystem};
use crate::set_function::{SetFunction, SetFunctionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Build,
    Verify,
    Chaos,
    Dims,
    Render,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Hypothesis(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Hypothesis(_) => 2,
            RunError::Numerical(_) | RunError::Verification(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> RunError {
    RunError::Numerical(e.to_string())
}

fn from_fractal(e: FractalError) -> RunError {
    match e {
        FractalError::SetFunction(SetFunctionError::EndpointHypothesisViolated(msg)) => {
            RunError::Hypothesis(format!("endpoint hypothesis violated: {msg}"))
        }
        FractalError::NoConvergence { .. } => numerical(e),
        other => RunError::Config(ConfigError::Invalid(other.to_string())),
    }
}

/// Seed, fractal system and its fixed point for a configuration.
pub struct Pipeline {
    pub config: Config,
    pub phi: SetFunction,
    pub system: FractalSystem,
    pub ff: FractalFunction,
}

impl Pipeline {
    pub fn new(config: &Config) -> Result<Pipeline, RunError> {
        config.validate()?;
        let phi = config.seed_function()?;
        let template = config.template(&phi)?;
        let system = template.system_for(&phi).map_err(from_fractal)?;
        let ff = system.fixed_point(config.tolerance).map_err(from_fractal)?;
        Ok(Pipeline {
            config: config.clone(),
            phi,
            system,
            ff,
        })
    }

    fn chaos(&self, n: usize, seed: u64) -> Result<EmpiricalMeasure, RunError> {
        let p = self.config.probabilities()?;
        invariant_measure::chaos_game(
            &self.system,
            &self.ff,
            &p,
            n,
            self.config.measure.burn_in,
            seed,
        )
        .map_err(numerical)
    }
}

pub fn run(command: Command, config: &Config, out: &Path) -> Result<(), RunError> {
    fs::create_dir_all(out)?;
    if command == Command::Verify {
        return verify(config, out);
    }
    let pipe = Pipeline::new(config)?;
    match command {
        Command::Build => build(&pipe, out),
        Command::Chaos => chaos(&pipe, out),
        Command::Dims => dims(&pipe, out),
        Command::Render => render(&pipe, out),
        Command::Verify => unreachable!("handled above"),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).map_err(numerical)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn build(pipe: &Pipeline, out: &Path) -> Result<(), RunError> {
    let ff = &pipe.ff;
    fs::write(out.join("phi_alpha.csv"), ff.result.to_csv())?;
    let meta = json!({
        "config": pipe.config,
        "iterations": ff.iterations,
        "residual": ff.residual,
        "tolerance": pipe.config.tolerance,
        "grid_points": ff.result.grid().len(),
        "endpoint_defect": ff.endpoint_class_defect(),
        "interpolating": pipe.system.is_interpolating(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_json(&out.join("metadata.json"), &meta)?;
    if ff.residual > pipe.config.tolerance {
        return Err(numerical(format!(
            "residual {:e} exceeds tolerance {:e}",
            ff.residual, pipe.config.tolerance
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    /// `"pass"`, `"fail"` or `"skipped"`.
    pub status: &'static str,
    pub value: Value,
    pub threshold: Value,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, pass: bool, value: Value, threshold: Value) -> Check {
        Check {
            name,
            status: if pass { "pass" } else { "fail" },
            value,
            threshold,
            detail: String::new(),
        }
    }

    fn skipped(name: &'static str, detail: &str) -> Check {
        Check {
            name,
            status: "skipped",
            value: Value::Null,
            threshold: Value::Null,
            detail: detail.to_string(),
        }
    }

    fn detail(mut self, detail: impl Into<String>) -> Check {
        self.detail = detail.into();
        self
    }
}

fn verify(config: &Config, out: &Path) -> Result<(), RunError> {
    let path = out.join("verification.json");
    let pipe = match Pipeline::new(config) {
        Ok(p) => p,
        Err(e @ RunError::Hypothesis(_)) => {
            write_json(
                &path,
                &json!({
                    "pass": false,
                    "error": {"kind": "EndpointHypothesisViolated", "message": e.to_string()},
                    "checks": [],
                }),
            )?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let checks = run_checks(&pipe)?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.status == "fail")
        .map(|c| c.name)
        .collect();
    write_json(&path, &json!({"pass": failed.is_empty(), "checks": checks}))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(RunError::Verification(failed.join(", ")))
    }
}

/// Every invariant suite, in a fixed order.
pub fn run_checks(pipe: &Pipeline) -> Result<Vec<Check>, RunError> {
    let cfg = &pipe.config;
    let vc = &cfg.verify;
    let sys = &pipe.system;
    let ff = &pipe.ff;
    let a = cfg.alpha.abs();
    let mut checks = Vec::new();

    let excess = rb_contraction_excess(sys, vc.rb_pairs, vc.seed).map_err(numerical)?;
    checks.push(
        Check::new("rb_contraction", excess <= 1e-9, json!(excess), json!(1e-9)).detail(format!(
            "max of d(φU,φV) - |α| d(U,V) over {} random pairs",
            vc.rb_pairs
        )),
    );

    let residual_limit = 100.0 * cfg.tolerance;
    checks.push(
        Check::new(
            "fixed_point_residual",
            ff.residual <= residual_limit,
            json!(ff.residual),
            json!(residual_limit),
        )
        .detail(format!("{} iterations", ff.iterations)),
    );

    let endpoint = ff.endpoint_class_defect();
    checks.push(Check::new(
        "endpoint_condition",
        endpoint <= 1e-7,
        json!(endpoint),
        json!(1e-7),
    ));

    if sys.is_interpolating() {
        let d = ff.node_interpolation_defect();
        checks.push(Check::new(
            "node_interpolation",
            d <= 1e-7,
            json!(d),
            json!(1e-7),
        ));
    } else {
        checks.push(Check::skipped(
            "node_interpolation",
            "seed and base are not single-valued and equal at the ends",
        ));
    }

    let report = approximation::check_error(sys, cfg.tolerance).map_err(numerical)?;
    checks.push(
        Check::new(
            "error_bound",
            report.pass,
            json!(report.measured),
            json!(report.bound),
        )
        .detail(format!("{} points", report.points_checked)),
    );

    let template = cfg.template(&pipe.phi)?;
    let mut worst = f64::NEG_INFINITY;
    for &eps in &vc.continuity_eps {
        let moved = template
            .fractal_operator(&pipe.phi.translate(eps))
            .map_err(from_fractal)?;
        let d = moved.result.sup_metric(&ff.result).map_err(numerical)?;
        worst = worst.max(d - template.continuity_bound(eps));
    }
    checks.push(
        Check::new(
            "operator_continuity",
            worst <= 1e-9,
            json!(worst),
            json!(1e-9),
        )
        .detail("max of d(FΦ_ε, FΦ) - ε/(1-|α|)"),
    );

    checks.push(order_check(pipe)?);

    let c = cifs_graph::verify_contraction(sys, ff, vc.cifs_pairs, vc.seed).map_err(numerical)?;
    checks.push(
        Check::new("cifs_contraction", c.pass, json!(c.max_excess), json!(1e-9))
            .detail(format!("max ratio {} over {} pairs", c.max_ratio, c.pairs)),
    );

    let defect = cifs_graph::attractor_defect(sys, ff, vc.attractor_cloud).map_err(numerical)?;
    checks.push(
        Check::new(
            "attractor_defect",
            defect <= vc.attractor_tol,
            json!(defect),
            json!(vc.attractor_tol),
        )
        .detail(format!("cloud of {} graph points", vc.attractor_cloud)),
    );

    let m = pipe.chaos(cfg.measure.n, cfg.measure.seed)?;
    let s = invariant_measure::support_check(
        &m,
        ff,
        cfg.measure.support_eps,
        cfg.measure.support_cloud,
    )
    .map_err(numerical)?;
    checks.push(
        Check::new(
            "measure_support",
            s.fraction >= 0.999,
            json!(s.fraction),
            json!(0.999),
        )
        .detail(format!("eps {} over {} atoms", s.eps, s.atoms)),
    );

    let p = cfg.probabilities()?;
    let ss = invariant_measure::self_similarity_report(
        sys,
        ff,
        &p,
        cfg.measure.transport_n,
        cfg.measure.seed,
    )
    .map_err(numerical)?;
    checks.push(
        Check::new(
            "measure_self_similarity",
            ss.defect <= 2.0 * ss.baseline,
            json!(ss.defect),
            json!(2.0 * ss.baseline),
        )
        .detail("twice the distance between two independent runs"),
    );

    let lower = RatioSequence::from_system(Bound::Lower, cfg.alpha, sys.partition());
    match dimension::s_star(&lower, cfg.dimension.k_max, cfg.dimension.stall_tol) {
        Ok(r) => checks.push(Check::new(
            "moran_monotone",
            true,
            json!(r.s_star),
            Value::Null,
        )),
        Err(dimension::DimensionError::DegenerateSequence { .. }) if a == 0.0 => checks.push(
            Check::skipped("moran_monotone", "alpha = 0 gives zero lower ratios"),
        ),
        Err(e) => checks.push(
            Check::new("moran_monotone", false, Value::Null, Value::Null).detail(e.to_string()),
        ),
    }
    Ok(checks)
}

fn rb_contraction_excess(
    sys: &FractalSystem,
    pairs: usize,
    seed: u64,
) -> Result<f64, FractalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = sys.grid().clone();
    let random = |rng: &mut ChaCha8Rng| {
        let values = (0..grid.len())
            .map(|_| {
                let lo: f64 = rng.gen_range(-2.0..2.0);
                CompactSet::interval(lo, lo + rng.gen_range(0.0..1.0))
            })
            .collect();
        SetFunction::from_values(grid.clone(), values)
    };
    let a = sys.alpha().abs();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let u = random(&mut rng)?;
        let v = random(&mut rng)?;
        let before = u.sup_metric(&v)?;
        let after = sys.apply_rb(&u)?.sup_metric(&sys.apply_rb(&v)?)?;
        worst = worst.max(after - a * before);
    }
    Ok(worst)
}

/// Widens the seed and its base by a bump vanishing at both ends and checks
/// that the fractal functions stay nested.
fn order_check(pipe: &Pipeline) -> Result<Check, RunError> {
    let sys = &pipe.system;
    let (phi, base) = (sys.phi(), sys.base());
    let single = |s: &CompactSet| s.is_singleton(1e-12);
    let ends_match = phi.first().hausdorff_distance(base.first()) <= 1e-9
        && phi.last().hausdorff_distance(base.last()) <= 1e-9;
    if !(single(phi.first()) && single(phi.last()) && ends_match) {
        return Ok(Check::skipped(
            "order_preservation",
            "needs single-valued seed values matched by the base at both ends",
        ));
    }
    let p = sys.partition();
    let (t1, t_inf, width) = (p.t1(), p.t_inf(), pipe.config.verify.order_width);
    let widen = |f: &SetFunction| {
        let values = f
            .grid()
            .points()
            .iter()
            .zip(f.values())
            .map(|(&t, s)| {
                let w = width * (t - t1) * (t_inf - t) / (t_inf - t1).powi(2);
                s.minkowski_sum(&Interval::new(-w, w).into())
            })
            .collect();
        SetFunction::from_values(f.grid().clone(), values)
    };
    let (u, bu) = (
        widen(phi).map_err(numerical)?,
        widen(base).map_err(numerical)?,
    );
    let r = check_order_preservation(
        Seeded { phi, base },
        Seeded { phi: &u, base: &bu },
        sys.alpha(),
        p,
        approximation::ORDER_DEPTH,
        approximation::ORDER_INDEX_CAP,
        pipe.config.tolerance,
    )
    .map_err(numerical)?;
    Ok(Check::new(
        "order_preservation",
        r.pass,
        json!(r.worst_excess),
        json!(approximation::ORDER_SLACK),
    )
    .detail(format!("{} points", r.points_checked)))
}

fn chaos(pipe: &Pipeline, out: &Path) -> Result<(), RunError> {
    let cfg = &pipe.config;
    let m = pipe.chaos(cfg.measure.n, cfg.measure.seed)?;
    fs::write(out.join("atoms.csv"), m.atoms.to_csv())?;
    let p_spec = serde_json::to_value(&cfg.measure.p).map_err(numerical)?;
    write_json(
        &out.join("measure.json"),
        &json!({
            "seed": m.seed,
            "n": m.len(),
            "burn_in": m.burn_in,
            "p_spec": p_spec,
            "generator": GENERATOR,
        }),
    )?;
    let p = cfg.probabilities()?;
    let support = invariant_measure::support_check(
        &m,
        &pipe.ff,
        cfg.measure.support_eps,
        cfg.measure.support_cloud,
    )
    .map_err(numerical)?;
    let ss = invariant_measure::self_similarity_report(
        &pipe.system,
        &pipe.ff,
        &p,
        cfg.measure.transport_n,
        cfg.measure.seed,
    )
    .map_err(numerical)?;
    write_json(
        &out.join("defect.json"),
        &json!({"support": support, "self_similarity": ss}),
    )
}

pub fn dimension_report(pipe: &Pipeline) -> Result<DimensionReport, RunError> {
    let cfg = &pipe.config;
    let p = pipe.system.partition();
    let k_max = cfg.dimension.k_max;
    let (s_star, s_k) = if cfg.alpha == 0.0 {
        (0.0, Vec::new())
    } else {
        let lower = RatioSequence::from_system(Bound::Lower, cfg.alpha, p);
        let r = dimension::s_star(&lower, k_max, cfg.dimension.stall_tol).map_err(numerical)?;
        (r.s_star, r.s_k)
    };
    let upper = RatioSequence::from_system(Bound::Upper, cfg.alpha, p);
    let s_upper =
        dimension::s_upper(&upper, k_max, dimension::DEFAULT_MORAN_TOL).map_err(numerical)?;
    let cloud = GraphCloud::sample(&pipe.ff, cfg.dimension.cloud_size).map_err(numerical)?;
    let box_estimate =
        dimension::box_count_estimate(&cloud, &cfg.dimension.scales).map_err(numerical)?;
    Ok(DimensionReport {
        s_star,
        s_k,
        s_upper,
        box_estimate: Some(box_estimate),
    })
}

fn dims(pipe: &Pipeline, out: &Path) -> Result<(), RunError> {
    write_json(&out.join("dimension.json"), &dimension_report(pipe)?)
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 500.0;
const SVG_MARGIN: f64 = 40.0;
const SVG_MAX_ATOMS: usize = 4000;

fn render(pipe: &Pipeline, out: &Path) -> Result<(), RunError> {
    let cfg = &pipe.config;
    let m = pipe.chaos(cfg.measure.n.min(SVG_MAX_ATOMS), cfg.measure.seed)?;
    fs::write(
        out.join("graph.svg"),
        svg(&pipe.ff.result, m.atoms.points()),
    )?;
    Ok(())
}

/// Band between the hull envelopes of `f`, with atoms drawn as vertical ticks.
pub fn svg(f: &SetFunction, atoms: &[cifs_graph::GraphPoint]) -> String {
    let hulls = f.hulls();
    let ts = f.grid().points();
    let (t0, t1) = (ts[0], ts[ts.len() - 1]);
    let lo = hulls
        .iter()
        .map(|h| h.lo)
        .chain(atoms.iter().map(|a| a.s.lo))
        .fold(f64::INFINITY, f64::min);
    let hi = hulls
        .iter()
        .map(|h| h.hi)
        .chain(atoms.iter().map(|a| a.s.hi))
        .fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.05 * (hi - lo).max(1e-12);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |t: f64| SVG_MARGIN + (t - t0) / (t1 - t0) * (SVG_W - 2.0 * SVG_MARGIN);
    let y = |v: f64| SVG_H - SVG_MARGIN - (v - lo) / (hi - lo) * (SVG_H - 2.0 * SVG_MARGIN);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let mut points = String::new();
    for (t, h) in ts.iter().zip(&hulls) {
        write!(points, "{:.2},{:.2} ", x(*t), y(h.hi)).unwrap();
    }
    for (t, h) in ts.iter().zip(&hulls).rev() {
        write!(points, "{:.2},{:.2} ", x(*t), y(h.lo)).unwrap();
    }
    writeln!(
        s,
        r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.6" stroke="#3182bd" stroke-width="0.5"/>"##,
        points.trim_end()
    )
    .unwrap();
    writeln!(
        s,
        r##"<g stroke="#de2d26" stroke-opacity="0.35" stroke-width="0.6">"##
    )
    .unwrap();
    for a in atoms {
        let (px, y0, y1) = (x(a.t), y(a.s.lo), y(a.s.hi));
        writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}"/>"#,
            y1.min(y0 - 0.5)
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}"/></g>"#,
        m = SVG_MARGIN,
        b = SVG_H - SVG_MARGIN,
        r = SVG_W - SVG_MARGIN
    )
    .unwrap();
    writeln!(
        s,
        r#"<g font-family="sans-serif" font-size="12"><text x="{m}" y="{ty}">{t0}</text><text x="{r}" y="{ty}" text-anchor="end">{t1}</text><text x="4" y="{yl:.2}">{lo:.3}</text><text x="4" y="{yh:.2}">{hi:.3}</text></g>"#,
        m = SVG_MARGIN,
        r = SVG_W - SVG_MARGIN,
        ty = SVG_H - SVG_MARGIN + 16.0,
        yl = y(lo),
        yh = y(hi) + 12.0,
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}
