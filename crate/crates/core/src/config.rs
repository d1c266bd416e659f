//! JSON configuration of the command-line pipeline.
//!
//! Every field has a default, so `{}` is a valid configuration describing the
//! band example `Φ(t) = [t²+1, t²+2]` on the dyadic partition of `[0, 1]`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimension::{dyadic_scales, DEFAULT_K_MAX, DEFAULT_STALL_TOL};
use crate::func_expr::{Expr, ExprError};
use crate::invariant_measure::{ProbabilityVector, DEFAULT_BURN_IN};
use crate::partition::{Family, Orientation, Partition};
use crate::rb_fractal::{BaseSpec, FractalTemplate, DEFAULT_TOLERANCE};
use crate::set_function::{Grid, SetFunction, DEFAULT_GRID_SIZE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid expression `{field}`: {source}")]
    Expression { field: String, source: ExprError },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub interval: [f64; 2],
    pub partition: PartitionConfig,
    pub alpha: f64,
    pub phi: EnvelopeConfig,
    /// Weight of the built-in base construction.
    pub h: String,
    pub base: BaseConfig,
    pub grid_size: usize,
    pub tolerance: f64,
    pub measure: MeasureConfig,
    pub dimension: DimensionConfig,
    pub verify: VerifyConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            interval: [0.0, 1.0],
            partition: PartitionConfig::default(),
            alpha: 0.5,
            phi: EnvelopeConfig {
                lower: "t^2+1".into(),
                upper: "t^2+2".into(),
            },
            h: "1".into(),
            base: BaseConfig {
                kind: BaseKind::Explicit,
                lower: Some("t^3+1".into()),
                upper: Some("t^3+2".into()),
            },
            grid_size: DEFAULT_GRID_SIZE,
            tolerance: DEFAULT_TOLERANCE,
            measure: MeasureConfig::default(),
            dimension: DimensionConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Dyadic,
    Geometric,
    ExplicitPrefix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub family: FamilyName,
    /// Ratio of the geometric family, or of the tail after explicit nodes.
    pub ratio: Option<f64>,
    pub nodes: Option<Vec<f64>>,
    /// Number of retained maps.
    #[serde(rename = "N")]
    pub n: usize,
    pub orientation: Orientation,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            family: FamilyName::Dyadic,
            ratio: None,
            nodes: None,
            n: 24,
            orientation: Orientation::Increasing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub lower: String,
    pub upper: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Example,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    pub kind: BaseKind,
    #[serde(default)]
    pub lower: Option<String>,
    #[serde(default)]
    pub upper: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    /// Only `"proportional"` is accepted.
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub p: WeightSpec,
    pub n: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Atoms per measure in the transport comparisons.
    pub transport_n: usize,
    pub support_eps: f64,
    pub support_cloud: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            p: WeightSpec::Named("proportional".into()),
            n: 20_000,
            burn_in: DEFAULT_BURN_IN,
            seed: 42,
            transport_n: 512,
            support_eps: 1e-3,
            support_cloud: 4097,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimensionConfig {
    pub k_max: usize,
    pub stall_tol: f64,
    pub scales: Vec<f64>,
    /// Graph samples fed to the box counter.
    pub cloud_size: usize,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        DimensionConfig {
            k_max: DEFAULT_K_MAX,
            stall_tol: DEFAULT_STALL_TOL,
            scales: dyadic_scales(4, 10),
            cloud_size: 8193,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub rb_pairs: usize,
    pub cifs_pairs: usize,
    pub continuity_eps: Vec<f64>,
    pub attractor_cloud: usize,
    pub attractor_tol: f64,
    pub order_width: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 7,
            rb_pairs: 100,
            cifs_pairs: 2000,
            continuity_eps: vec![1e-3, 1e-2],
            attractor_cloud: 4096,
            attractor_tol: 1e-3,
            order_width: 0.1,
        }
    }
}

fn parse(field: &str, text: &str) -> Result<Expr, ConfigError> {
    Expr::parse(text).map_err(|source| ConfigError::Expression {
        field: field.to_string(),
        source,
    })
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let config: Config = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that can be checked without sampling functions.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha.abs() < 1.0) {
            return invalid(format!(
                "alpha must satisfy |alpha| < 1, got {}",
                self.alpha
            ));
        }
        if !(self.tolerance > 0.0) {
            return invalid("tolerance must be positive");
        }
        if self.grid_size < 2 {
            return invalid("grid_size must be at least 2");
        }
        self.partition()?;
        self.expressions()?;
        if self.measure.n == 0 || self.measure.transport_n == 0 {
            return invalid("measure sizes must be positive");
        }
        self.probabilities()?;
        if self.dimension.k_max < 2 {
            return invalid("dimension.k_max must be at least 2");
        }
        Ok(())
    }

    pub fn partition(&self) -> Result<Partition, ConfigError> {
        let [t1, t_inf] = self.interval;
        let pc = &self.partition;
        let family = match pc.family {
            FamilyName::Dyadic => Family::Dyadic,
            FamilyName::Geometric => Family::Geometric {
                ratio: pc
                    .ratio
                    .ok_or_else(|| ConfigError::Invalid("geometric family needs `ratio`".into()))?,
            },
            FamilyName::ExplicitPrefix => Family::ExplicitPrefix {
                nodes: pc.nodes.clone().ok_or_else(|| {
                    ConfigError::Invalid("explicit_prefix family needs `nodes`".into())
                })?,
                tail_ratio: pc.ratio.ok_or_else(|| {
                    ConfigError::Invalid("explicit_prefix family needs `ratio`".into())
                })?,
            },
        };
        Partition::new(t1, t_inf, family, pc.n)
            .map(|p| p.with_orientation(pc.orientation))
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    fn expressions(&self) -> Result<(Expr, Expr, BaseExprs), ConfigError> {
        let lower = parse("phi.lower", &self.phi.lower)?;
        let upper = parse("phi.upper", &self.phi.upper)?;
        let base = match self.base.kind {
            BaseKind::Example => BaseExprs::Example(parse("h", &self.h)?),
            BaseKind::Explicit => {
                let (Some(lo), Some(hi)) = (&self.base.lower, &self.base.upper) else {
                    return invalid("explicit base needs `lower` and `upper`");
                };
                BaseExprs::Explicit(parse("base.lower", lo)?, parse("base.upper", hi)?)
            }
        };
        Ok((lower, upper, base))
    }

    pub fn probabilities(&self) -> Result<ProbabilityVector, ConfigError> {
        let n = self.partition.n;
        let p = match &self.measure.p {
            WeightSpec::Named(name) if name == "proportional" => {
                ProbabilityVector::proportional(&self.partition()?)
            }
            WeightSpec::Named(name) => return invalid(format!("unknown weight scheme `{name}`")),
            WeightSpec::Explicit(w) if w.len() != n => {
                return invalid(format!("measure.p has {} weights but N = {n}", w.len()))
            }
            WeightSpec::Explicit(w) => ProbabilityVector::new(w.clone()),
        };
        p.map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Samples the seed on the grid adapted to the partition.
    pub fn seed_function(&self) -> Result<SetFunction, ConfigError> {
        let p = self.partition()?;
        let (lower, upper, _) = self.expressions()?;
        let grid = Arc::new(Grid::for_partition(&p, self.grid_size).map_err(sample_error)?);
        SetFunction::from_envelopes_on(&lower, &upper, grid).map_err(sample_error)
    }

    /// Everything needed to map a seed to its fractal function.
    pub fn template(&self, phi: &SetFunction) -> Result<FractalTemplate, ConfigError> {
        let (_, _, base) = self.expressions()?;
        let base = match base {
            BaseExprs::Example(h) => BaseSpec::Example(h),
            BaseExprs::Explicit(lo, hi) => BaseSpec::Fixed(
                SetFunction::from_envelopes_on(&lo, &hi, phi.grid().clone())
                    .map_err(sample_error)?,
            ),
        };
        Ok(FractalTemplate {
            alpha: self.alpha,
            partition: self.partition()?,
            base,
            tol: self.tolerance,
        })
    }
}

enum BaseExprs {
    Example(Expr),
    Explicit(Expr, Expr),
}

fn sample_error(e: crate::set_function::SetFunctionError) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}
