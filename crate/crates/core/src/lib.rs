//! Pareto-efficient points of multi-objective convex polynomial problems.
//!
//! The multi-objective problem is scalarized by the hybrid method (weighted sum
//! plus `f_j(x) ≤ f_j(z)` bounds), the scalar problem is relaxed to a moment
//! SDP (two relaxation families), and a flat-truncation rank test decides when
//! the relaxation is exact so that the minimizer can be read off the moments.

pub mod certificate;
pub mod error;
pub mod io;
pub mod moments;
pub mod pareto;
pub mod poly;
pub mod relax;
pub mod sdp;

pub use error::{Error, Result};
pub use moments::{dirac_moments, localization_matrix, moment_matrix, MomentVector, MonomialBasis};

pub use poly::{is_positive_definite, weighted_sum, Exponent, MooProblem, Polynomial};
pub use pareto::{run_sweep, solve_hybrid, EfficientPoint, SweepConfig, SweepResult, Tolerances, ZSource};
pub use relax::{Family, HybridProblem, Relaxation};
