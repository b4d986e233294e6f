//! Route energy, trip constraints and the augmented Lagrangian.
//!
//! Substituting `a_i = (x_{i+1}² − x_i²)/(2l_i)` into the per-segment output
//! turns the route energy into `η₀ + Σ η_j x_j²` over the N+1 boundary speeds.
//! The η coefficients depend on `x` only through the force-case
//! classification and the switch distances, and since the force vanishes at
//! the switch point the energy is continuously differentiable: holding the γ
//! coefficients fixed gives the exact gradient.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, GammaCoeffs, RoadSegment, VehicleParams};
use crate::solver::MultiplierState;
use crate::{Error, Result};

/// Boundary speeds `x` (N+1) and segment times `T` (N).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub speeds: Vec<f64>,
    pub times: Vec<f64>,
}

impl Trajectory {
    pub fn new(speeds: Vec<f64>, times: Vec<f64>) -> Self {
        Self { speeds, times }
    }

    /// Trajectory whose segment times follow exactly from the speeds.
    pub fn from_speeds(speeds: Vec<f64>, road: &[RoadSegment]) -> Result<Self> {
        check_len(&speeds, road)?;
        let times = road
            .iter()
            .enumerate()
            .map(|(i, seg)| dynamics::segment_time(speeds[i], speeds[i + 1], seg.length_m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { speeds, times })
    }

    pub fn n_segments(&self) -> usize {
        self.times.len()
    }

    pub fn trip_time(&self) -> f64 {
        self.times.iter().sum()
    }
}

/// Quadratic-form coefficients of the route energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaCoeffs {
    pub eta0: f64,
    pub eta: Vec<f64>,
}

impl EtaCoeffs {
    pub fn energy(&self, x: &[f64]) -> f64 {
        self.eta0 + self.eta.iter().zip(x).map(|(e, v)| e * v * v).sum::<f64>()
    }
}

/// Per-boundary speed limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SpeedBounds {
    pub fn uniform(n_boundaries: usize, lower: f64, upper: f64) -> Self {
        Self { lower: vec![lower; n_boundaries], upper: vec![upper; n_boundaries] }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch("lower and upper bounds differ in length".into()));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(*lo >= 0.0 && lo <= hi) {
                return Err(Error::InvalidParameter(format!("bounds at boundary {i}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((v, lo), hi)| *v >= *lo && *v <= *hi)
    }
}

fn check_len(x: &[f64], road: &[RoadSegment]) -> Result<()> {
    if x.len() != road.len() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} boundary speeds for {} segments",
            x.len(),
            road.len()
        )));
    }
    Ok(())
}

pub fn accel_from_speeds(x_in: f64, x_out: f64, length: f64) -> f64 {
    (x_out * x_out - x_in * x_in) / (2.0 * length)
}

/// γ coefficients of every segment at the case classification induced by `x`.
pub fn segment_gammas(x: &[f64], road: &[RoadSegment], params: &VehicleParams) -> Result<Vec<GammaCoeffs>> {
    check_len(x, road)?;
    road.iter()
        .enumerate()
        .map(|(i, seg)| {
            let a = accel_from_speeds(x[i], x[i + 1], seg.length_m);
            let fc = dynamics::classify_case(params, seg, x[i], a)?;
            Ok(dynamics::gamma_coeffs(params, seg, &fc))
        })
        .collect()
}

/// Regroups per-segment γ into per-boundary η.
pub fn eta_from_gammas(gammas: &[GammaCoeffs], road: &[RoadSegment]) -> EtaCoeffs {
    let n = gammas.len();
    let mut eta = vec![0.0; n + 1];
    let mut eta0 = 0.0;
    for (i, (g, seg)) in gammas.iter().zip(road).enumerate() {
        let k = g.g1 / (2.0 * seg.length_m);
        eta0 += g.g0;
        eta[i] += g.g2 - k;
        eta[i + 1] += k;
    }
    EtaCoeffs { eta0, eta }
}

pub fn eta_coeffs(x: &[f64], road: &[RoadSegment], params: &VehicleParams) -> Result<EtaCoeffs> {
    Ok(eta_from_gammas(&segment_gammas(x, road, params)?, road))
}

/// Per-pack SOC consumed over the road for boundary speeds `x`.
pub fn total_energy(x: &[f64], road: &[RoadSegment], params: &VehicleParams) -> Result<f64> {
    Ok(eta_coeffs(x, road, params)?.energy(x))
}

/// Time residual `ΣT − τ` and per-segment distance residuals `T_i(x_i + x_{i+1}) − 2l_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub time: f64,
    pub distance: Vec<f64>,
}

impl Residuals {
    /// Euclidean norm of the stacked residual vector.
    pub fn norm(&self) -> f64 {
        (self.time * self.time + self.distance.iter().map(|r| r * r).sum::<f64>()).sqrt()
    }

    pub fn max_distance(&self) -> f64 {
        self.distance.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

pub fn residuals(traj: &Trajectory, tau: f64, road: &[RoadSegment]) -> Residuals {
    let x = &traj.speeds;
    let distance = road
        .iter()
        .zip(&traj.times)
        .enumerate()
        .map(|(i, (seg, t))| t * (x[i] + x[i + 1]) - 2.0 * seg.length_m)
        .collect();
    Residuals { time: traj.trip_time() - tau, distance }
}

fn check_shapes(traj: &Trajectory, mult: &MultiplierState, road: &[RoadSegment]) -> Result<()> {
    check_len(&traj.speeds, road)?;
    if traj.times.len() != road.len() || mult.mu.len() != road.len() || mult.rho2.len() != road.len() {
        return Err(Error::DimensionMismatch("trajectory, multipliers and road disagree in length".into()));
    }
    Ok(())
}

/// Constraint part of the augmented Lagrangian (everything except the energy).
pub(crate) fn constraint_terms(res: &Residuals, mult: &MultiplierState) -> f64 {
    let mut v = mult.lambda * res.time + 0.5 * mult.rho1 * res.time * res.time;
    for ((r, mu), rho) in res.distance.iter().zip(&mult.mu).zip(&mult.rho2) {
        v += mu * r + 0.5 * rho * r * r;
    }
    v
}

/// Augmented Lagrangian with the energy term multiplied by `energy_weight`.
pub fn augmented_lagrangian_weighted(
    traj: &Trajectory,
    mult: &MultiplierState,
    tau: f64,
    road: &[RoadSegment],
    params: &VehicleParams,
    energy_weight: f64,
) -> Result<f64> {
    check_shapes(traj, mult, road)?;
    let e = total_energy(&traj.speeds, road, params)?;
    Ok(energy_weight * e + constraint_terms(&residuals(traj, tau, road), mult))
}

pub fn augmented_lagrangian(
    traj: &Trajectory,
    mult: &MultiplierState,
    tau: f64,
    road: &[RoadSegment],
    params: &VehicleParams,
) -> Result<f64> {
    augmented_lagrangian_weighted(traj, mult, tau, road, params, 1.0)
}

/// Gradient in `x` for given η (energy weight folded in by the caller).
pub(crate) fn grad_x_with_eta(
    eta: &EtaCoeffs,
    energy_weight: f64,
    traj: &Trajectory,
    mult: &MultiplierState,
    road: &[RoadSegment],
) -> Vec<f64> {
    let x = &traj.speeds;
    let mut g: Vec<f64> = eta.eta.iter().zip(x).map(|(e, v)| 2.0 * energy_weight * e * v).collect();
    for (i, seg) in road.iter().enumerate() {
        let t = traj.times[i];
        let r = t * (x[i] + x[i + 1]) - 2.0 * seg.length_m;
        let coef = (mult.mu[i] + mult.rho2[i] * r) * t;
        g[i] += coef;
        g[i + 1] += coef;
    }
    g
}

pub fn grad_x_weighted(
    traj: &Trajectory,
    mult: &MultiplierState,
    road: &[RoadSegment],
    params: &VehicleParams,
    energy_weight: f64,
) -> Result<Vec<f64>> {
    check_shapes(traj, mult, road)?;
    let eta = eta_coeffs(&traj.speeds, road, params)?;
    Ok(grad_x_with_eta(&eta, energy_weight, traj, mult, road))
}

/// Gradient of [`augmented_lagrangian`] in the boundary speeds, `T` held fixed.
pub fn grad_x(
    traj: &Trajectory,
    mult: &MultiplierState,
    _tau: f64,
    road: &[RoadSegment],
    params: &VehicleParams,
) -> Result<Vec<f64>> {
    grad_x_weighted(traj, mult, road, params, 1.0)
}
