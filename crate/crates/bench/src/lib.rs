//! Benchmark fixtures shared by the criterion targets.

use drawdown_core::ModelParams;

/// The reference instance used by every benchmark.
pub fn reference_params() -> ModelParams {
    ModelParams::reference(0.5, 3.0)
}
