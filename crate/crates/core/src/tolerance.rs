use serde::{Deserialize, Serialize};

/// Numerical thresholds shared by the solver and the verifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative singular-value threshold for rank decisions.
    pub rank_rel: f64,
    /// A channel is singular when `sigma_min < singular_channel * sigma_max`.
    pub singular_channel: f64,
    /// Minimum singular value of a user's unit-column precoder.
    pub dependent_columns: f64,
    /// Normalized leakage above which a zero-forcing constraint counts as violated.
    pub zero_forcing: f64,
    /// Loop seeds must satisfy `|T v - λ v| <= eigen_residual * |T|`.
    pub eigen_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rel: 1e-8,
            singular_channel: 1e-12,
            dependent_columns: 1e-8,
            zero_forcing: 1e-8,
            eigen_residual: 1e-8,
        }
    }
}
