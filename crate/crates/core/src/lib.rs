//! Energy-minimal speed planning for battery-electric heavy-duty trucks.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynamics`]: longitudinal vehicle model, force-sign case analysis and the
//!   closed-form per-segment state-of-charge change.
//! - [`objective`]: route energy as a quadratic form in the boundary speeds,
//!   constraint residuals and the augmented Lagrangian with its gradient.
//! - [`solver`]: the alternating-direction multiplier method over speeds and
//!   segment times, plus a brute-force grid oracle for validation.
//! - [`mpc`]: rolling-horizon execution of the solver along a route.
//! - [`traffic`]: stochastic preceding-vehicle traces and headway speed bounds.
//! - [`aging`]: cycling capacity fade and battery life projection.
//! - [`scenarios`]: road ingestion/synthesis, the cruise-control baseline,
//!   controller comparison, configuration and the command-line front end.

pub mod aging;
pub mod dynamics;
pub mod mpc;
pub mod objective;
pub mod scenarios;
pub mod solver;
pub mod traffic;

mod error;

pub use error::{Error, Result};

pub use dynamics::{ForceCase, ForceCaseKind, GammaCoeffs, RoadSegment, SegmentCoeffs, VehicleParams};
pub use objective::{EtaCoeffs, SpeedBounds, Trajectory};
pub use solver::{MultiplierState, SolveResult, SolverConfig};

/// Converts km/h to m/s.
pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Converts m/s to km/h.
pub fn mps_to_kmh(mps: f64) -> f64 {
    mps * 3.6
}
