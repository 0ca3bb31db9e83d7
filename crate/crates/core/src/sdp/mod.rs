//! Linear objectives over block-diagonal PSD constraints in moment form.
//!
//! An [`SdpInstance`] minimizes `cᵀy + c₀` subject to affine symmetric blocks
//! `A₀ + Σ yᵢ Aᵢ ⪰ 0`, affine scalar inequalities `a₀ + aᵀy ≤ 0`, and pinned
//! entries `y_j = v_j`. [`solve`] runs a primal-dual interior-point method and
//! returns both the moment vector and the PSD multipliers of every block.

mod dump;
mod instance;
mod solver;

pub use dump::{read_dump, write_dump};
pub use instance::{AffineForm, BlockEntry, PsdBlock, SdpInstance};
pub use solver::{
    certify_weak_duality, solve, DualityReport, InfeasibilityRay, SdpSolution, SolveStatus,
    SolverOptions,
};
