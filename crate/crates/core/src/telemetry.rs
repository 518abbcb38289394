//! Per-step filter telemetry shared by the quantum and classical filters.
//!
//! Every scalar filter in the toolkit decomposes each step into a
//! prediction plus gain times innovation; exposing the three pieces in one
//! shape makes the structural parallel testable.

/// One filter step: `next = prediction + gain * innovation` for plain
/// (diffusive/no-jump) update steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterStep {
    /// State propagated by the deterministic drift alone.
    pub prediction: f64,
    /// Multiplier applied to the innovation.
    pub gain: f64,
    /// Observed increment minus its filtered compensator.
    pub innovation: f64,
}
