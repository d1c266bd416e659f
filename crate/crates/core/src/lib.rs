//! Set-valued α-fractal functions on countable partitions.
//!
//! The crate builds the fixed point `Φ^α` of a Read-Bajraktarević operator
//! acting on functions with compact values in `ℝ`, and exposes the
//! surrounding machinery: the graph as the attractor of a countable iterated
//! function system, an invariant measure sampled by the chaos game, and
//! dimension bounds from the Moran equation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod approximation;
pub mod cifs_graph;
pub mod config;
pub mod dimension;
pub mod func_expr;
pub mod interval_set;
pub mod invariant_measure;
pub mod partition;
pub mod rb_fractal;
pub mod runner;
pub mod set_function;

pub use func_expr::Expr;
pub use interval_set::{CompactSet, Interval};
pub use partition::{Family, Orientation, Partition};
pub use rb_fractal::{FractalFunction, FractalSystem};
pub use set_function::{Grid, SetFunction};
