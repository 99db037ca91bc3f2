//! Block preconditioners for three-field (displacement, Darcy velocity,
//! pressure) poromechanics.
//!
//! ```
//! use erpf_core::{assemble_three_field, bicgstab, rpf_setup, GridSpec, MaterialParams, RpfConfig};
//!
//! # fn main() -> erpf_core::Result<()> {
//! let mat = MaterialParams::default();
//! let (sys, rhs) = assemble_three_field(&GridSpec::mandel(10), &mat, 1e3 * 900.0, 1.0)?;
//! let prec = rpf_setup(&sys, &RpfConfig::default())?;
//! let (_x, report) = bicgstab(&sys, &prec, &rhs.to_flat(), 1e-6, 1000)?;
//! assert!(report.converged());
//! # Ok(())
//! # }
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN
pub mod block;
pub mod erpf;
pub mod error;
pub mod factor;
pub mod harness;
pub mod io;
pub mod krylov;
pub mod mandel;
pub mod mm;
pub mod rpf;
pub mod sparse;
pub mod spectral;
#[doc(hidden)]
pub mod testing;

pub use block::{BlockVector, ThreeFieldSystem};
pub use erpf::{select_variant, AugmentedBlockContext, SelectedVariant, SideSolver};
pub use error::{Error, Result};
pub use factor::{ApproxInverse, InnerSolver, SolverKind};
pub use harness::write_outputs;
pub use harness::{
    run_case, run_sweep, BenchCase, CaseResult, CaseStatus, ProblemSource, SummaryRow, SweepConfig,
};
pub use io::{load_block_system, save_block_system, BlockMetadata, BlockSystemFiles};
pub use krylov::{bicgstab, LinearOperator, SolveReport, SolveStatus};
pub use mandel::{assemble_three_field, GridSpec, MaterialParams};
pub use rpf::{
    rpf_setup, time_step_for_ratio, BoundSide, InnerPolicy, RpfConfig, RpfOperator, Variant,
};
pub use sparse::{DenseMatrix, SparseMatrix};
pub use spectral::{
    augmented_spectrum_bound, generalized_eigs, iteration_matrix_radius, singular_values,
    trace_objective_scan, EigenReport, TraceModel,
};
