//! Fixtures shared by the kernel benchmarks.

use erpf_core::{
    assemble_three_field, BlockVector, GridSpec, MaterialParams, RpfConfig, RpfOperator,
    ThreeFieldSystem,
};

/// Mandel system at `a_over_h` and Δt = `dt_over_tc`·t_c, with its load vector.
pub fn mandel(a_over_h: usize, dt_over_tc: f64) -> (ThreeFieldSystem, BlockVector) {
    let mat = MaterialParams::default();
    assemble_three_field(
        &GridSpec::mandel(a_over_h),
        &mat,
        dt_over_tc * mat.consolidation_time,
        1.0,
    )
    .expect("valid Mandel parameters")
}

/// Preconditioner for `sys` with the given configuration.
pub fn preconditioner(sys: &ThreeFieldSystem, cfg: &RpfConfig) -> RpfOperator {
    erpf_core::rpf_setup(sys, cfg).expect("setup succeeds on Mandel systems")
}

/// Deterministic vector with entries in [-0.5, 0.5).
pub fn probe(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| ((i * 7919) % 1013) as f64 / 1013.0 - 0.5)
        .collect()
}
