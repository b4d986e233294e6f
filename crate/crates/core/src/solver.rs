//! Alternating-direction multiplier iterations over boundary speeds and
//! segment times.
//!
//! Each outer iteration minimises the augmented Lagrangian in `x` (a few
//! projected, diagonally scaled gradient steps with backtracking), then in `T`
//! (closed form), then takes a multiplier ascent step.
//!
//! The route energy is a per-pack SOC fraction, tiny compared with the
//! constraint residuals, so inside the solver it is multiplied by an
//! `energy_weight`. Scaling the objective does not move its minimiser; it only
//! balances the energy curvature against the penalty curvature.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, RoadSegment, VehicleParams};
use crate::objective::{
    self, augmented_lagrangian_weighted, constraint_terms, eta_coeffs, grad_x_with_eta, residuals, SpeedBounds,
    Trajectory,
};
use crate::{Error, Result};

/// Lagrange multipliers and penalty parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierState {
    pub lambda: f64,
    pub mu: Vec<f64>,
    pub rho1: f64,
    pub rho2: Vec<f64>,
}

impl MultiplierState {
    /// Zero multipliers with uniform distance penalty.
    pub fn new(n_segments: usize, rho1: f64, rho2: f64) -> Self {
        Self { lambda: 0.0, mu: vec![0.0; n_segments], rho1, rho2: vec![rho2; n_segments] }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho1 > 0.0) || self.rho2.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidParameter("penalty parameters must be positive".into()));
        }
        if self.mu.len() != self.rho2.len() {
            return Err(Error::DimensionMismatch("mu and rho2 differ in length".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Bound on ‖Δx‖ + ‖ΔT‖ between outer iterations.
    pub eps1: f64,
    /// Bound on the stacked constraint residual norm.
    pub eps2: f64,
    pub max_outer_iters: usize,
    /// Largest per-coordinate speed change tried by one gradient step, m/s.
    pub x_step: f64,
    pub x_inner_iters: usize,
    pub max_halvings: usize,
    /// Time-constraint penalty; derived from the problem when unset.
    pub rho1: Option<f64>,
    pub rho2: f64,
    /// Multiplier on the energy inside the solver; derived from the problem when unset.
    pub energy_scale: Option<f64>,
    /// Smallest segment time the T-update may return, s.
    pub t_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps1: 1e-3,
            eps2: 1e-3,
            max_outer_iters: 500,
            x_step: 0.1,
            x_inner_iters: 10,
            max_halvings: 20,
            rho1: None,
            rho2: 1.0,
            energy_scale: None,
            t_floor: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_outer_iters == 0 || self.x_inner_iters == 0 {
            return Err(Error::InvalidParameter("iteration caps must be at least 1".into()));
        }
        if !(self.x_step > 0.0 && self.rho2 > 0.0 && self.t_floor > 0.0) {
            return Err(Error::InvalidParameter("step, penalty and time floor must be positive".into()));
        }
        for (name, v) in [("rho1", self.rho1), ("energy_scale", self.energy_scale)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    /// Final iterate if converged, otherwise the iterate with the smallest residual.
    pub traj: Trajectory,
    pub energy: f64,
    pub iters: usize,
    pub converged: bool,
    /// Stacked residual norm after every outer iteration.
    pub residual_history: Vec<f64>,
    pub multipliers: MultiplierState,
    pub energy_weight: f64,
}

// Ratios behind the derived penalty and energy weight; see `problem_scaling`.
const TIME_PENALTY_RATIO: f64 = 100.0;
const ENERGY_CURVATURE_RATIO: f64 = 0.02;

/// Derived `(ρ₁, energy_weight)` for a problem.
///
/// With the mean segment time `T̄` and mean speed sum `s̄ = 2L/τ`, the time
/// penalty is set to `100·ρ₂·s̄²/N`, a hundred times the curvature the distance
/// penalties contribute along the total-time direction, and the energy weight
/// makes the drag curvature `w·γ²` of an interior speed 2% of the distance
/// penalty curvature `ρ₂·T̄²`. Rescaling the energy does not move the minimiser.
pub fn problem_scaling(road: &[RoadSegment], tau: f64, params: &VehicleParams, rho2: f64) -> (f64, f64) {
    let n = road.len().max(1) as f64;
    let total: f64 = road.iter().map(|s| s.length_m).sum();
    let s_mean = 2.0 * total / tau;
    let t_mean = tau / n;
    let g2 = total / n * params.beta_air() / params.beta_plus() * params.soc_per_joule();
    (TIME_PENALTY_RATIO * rho2 * s_mean * s_mean / n, ENERGY_CURVATURE_RATIO * rho2 * t_mean * t_mean / g2)
}

/// Closed-form minimiser of the augmented Lagrangian in `T`.
///
/// The Hessian is `ρ₁·11ᵀ + diag(2dᵢ)`, so the system is solved through the
/// Sherman–Morrison identity in O(N). Components are then clamped at `t_floor`.
pub fn update_t(
    x: &[f64],
    mult: &MultiplierState,
    tau: f64,
    road: &[RoadSegment],
    t_floor: f64,
) -> Result<Vec<f64>> {
    let (neg_b_over, inv_sum) = t_system(x, mult, tau, road)?;
    let s = neg_b_over.iter().map(|(nb, _)| nb).sum::<f64>() / (1.0 + mult.rho1 * inv_sum);
    Ok(neg_b_over.iter().map(|(nb, inv)| (nb - mult.rho1 * s * inv).max(t_floor)).collect())
}

/// Per-segment `(−bᵢ/(2dᵢ), 1/(2dᵢ))` and `Σ 1/(2dᵢ)`.
fn t_system(x: &[f64], mult: &MultiplierState, tau: f64, road: &[RoadSegment]) -> Result<(Vec<(f64, f64)>, f64)> {
    if x.len() != road.len() + 1 || mult.mu.len() != road.len() || mult.rho2.len() != road.len() {
        return Err(Error::DimensionMismatch("speeds, multipliers and road disagree in length".into()));
    }
    let mut out = Vec::with_capacity(road.len());
    let mut inv_sum = 0.0;
    for (i, seg) in road.iter().enumerate() {
        let s = x[i] + x[i + 1];
        let d2 = mult.rho2[i] * s * s;
        if !(d2 > 0.0) {
            return Err(Error::DegenerateProblem(format!("segment {i} has zero curvature in T")));
        }
        let b = mult.lambda + mult.mu[i] * s - mult.rho1 * tau - 2.0 * seg.length_m * mult.rho2[i] * s;
        let inv = 1.0 / d2;
        out.push((-b * inv, inv));
        inv_sum += inv;
    }
    Ok((out, inv_sum))
}

// Outer iterations between stall checks of the distance residuals, and the
// largest growth of a distance penalty over its configured value.
const PENALTY_CHECK: usize = 10;
const PENALTY_CAP: f64 = 1024.0;

// Speed changes below this are treated as converged inner iterations, m/s.
const MIN_MOVE: f64 = 1e-12;

/// Outcome of one x-update.
#[derive(Debug, Clone, PartialEq)]
pub struct XUpdate {
    pub speeds: Vec<f64>,
    /// Augmented Lagrangian (energy weighted) at entry and after every accepted step.
    pub values: Vec<f64>,
}

/// Projected gradient descent on the augmented Lagrangian in `x` with `T` fixed.
///
/// Steps are scaled by the inverse diagonal of the local quadratic model and
/// capped at `cfg.x_step` per coordinate; a step is halved until the true
/// (re-classified) Lagrangian does not increase.
#[allow(clippy::too_many_arguments)]
pub fn update_x(
    x_prev: &[f64],
    times: &[f64],
    mult: &MultiplierState,
    tau: f64,
    road: &[RoadSegment],
    bounds: &SpeedBounds,
    params: &VehicleParams,
    cfg: &SolverConfig,
    energy_weight: f64,
) -> Result<XUpdate> {
    if bounds.len() != x_prev.len() {
        return Err(Error::DimensionMismatch("bounds and speeds differ in length".into()));
    }
    let mut traj = Trajectory::new(x_prev.to_vec(), times.to_vec());
    bounds.project(&mut traj.speeds);
    let mut value = augmented_lagrangian_weighted(&traj, mult, tau, road, params, energy_weight)?;
    let mut values = vec![value];
    let n = traj.speeds.len();
    let mut cand = Trajectory::new(vec![0.0; n], traj.times.clone());

    for _ in 0..cfg.x_inner_iters {
        let eta = eta_coeffs(&traj.speeds, road, params)?;
        let g = grad_x_with_eta(&eta, energy_weight, &traj, mult, road);
        let mut kinks = Vec::with_capacity(road.len());
        for (i, seg) in road.iter().enumerate() {
            let h = dynamics::switch_curvature(params, seg, traj.speeds[i], traj.speeds[i + 1])?;
            kinks.push(h.map(|v| v * energy_weight));
        }
        let dir = scaled_direction(&eta.eta, energy_weight, &kinks, &g, &traj, mult, bounds);
        let max_move = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if max_move <= MIN_MOVE {
            break;
        }
        let mut step = (cfg.x_step / max_move).min(1.0);
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            for j in 0..n {
                cand.speeds[j] = traj.speeds[j] + step * dir[j];
            }
            bounds.project(&mut cand.speeds);
            let v = augmented_lagrangian_weighted(&cand, mult, tau, road, params, energy_weight)?;
            if v <= value {
                std::mem::swap(&mut traj.speeds, &mut cand.speeds);
                value = v;
                values.push(v);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(XUpdate { speeds: traj.speeds, values })
}

/// Descent direction `−H⁻¹g` over the coordinates not held by an active bound,
/// where `H` is the tridiagonal Hessian of the local quadratic model: penalty
/// curvature, η curvature in absolute value, and the switch-point curvature of
/// segments whose force changes sign. Every part is positive semi-definite.
fn scaled_direction(
    eta: &[f64],
    energy_weight: f64,
    kinks: &[[f64; 3]],
    g: &[f64],
    traj: &Trajectory,
    mult: &MultiplierState,
    bounds: &SpeedBounds,
) -> Vec<f64> {
    let n = g.len();
    let x = &traj.speeds;
    let free: Vec<bool> = (0..n)
        .map(|j| {
            let pinned = bounds.upper[j] <= bounds.lower[j];
            let at_lower = x[j] <= bounds.lower[j] && g[j] > 0.0;
            let at_upper = x[j] >= bounds.upper[j] && g[j] < 0.0;
            !(pinned || at_lower || at_upper)
        })
        .collect();
    let mut diag: Vec<f64> = eta.iter().map(|e| 2.0 * energy_weight * e.abs()).collect();
    let mut off = vec![0.0; n.saturating_sub(1)];
    for (i, t) in traj.times.iter().enumerate() {
        let c = mult.rho2[i] * t * t;
        let [k11, k12, k22] = kinks[i];
        diag[i] += c + k11;
        diag[i + 1] += c + k22;
        if free[i] && free[i + 1] {
            off[i] = c + k12;
        }
    }
    // Thomas algorithm; held coordinates decouple with a zero right-hand side.
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for j in 0..n {
        let rhs = if free[j] { -g[j] } else { 0.0 };
        let (sub, prev_c, prev_d) = if j > 0 { (off[j - 1], c_prime[j - 1], d_prime[j - 1]) } else { (0.0, 0.0, 0.0) };
        let denom = (diag[j] - sub * prev_c).max(f64::MIN_POSITIVE);
        c_prime[j] = if j + 1 < n { off[j] / denom } else { 0.0 };
        d_prime[j] = (rhs - sub * prev_d) / denom;
    }
    let mut d = vec![0.0; n];
    for j in (0..n).rev() {
        d[j] = d_prime[j] - if j + 1 < n { c_prime[j] * d[j + 1] } else { 0.0 };
        if !free[j] || !d[j].is_finite() {
            d[j] = 0.0;
        }
    }
    d
}

/// Dual ascent: `λ += ρ₁·(ΣT − τ)`, `μᵢ += ρ₂ᵢ·(Tᵢ(xᵢ + xᵢ₊₁) − 2lᵢ)`.
pub fn update_multipliers(
    mult: &MultiplierState,
    traj: &Trajectory,
    tau: f64,
    road: &[RoadSegment],
) -> MultiplierState {
    let res = residuals(traj, tau, road);
    let mut next = mult.clone();
    next.lambda += mult.rho1 * res.time;
    for ((mu, rho), r) in next.mu.iter_mut().zip(&mult.rho2).zip(&res.distance) {
        *mu += rho * r;
    }
    next
}

/// Constant-speed start clipped to the bounds.
pub fn default_start(road: &[RoadSegment], tau: f64, bounds: &SpeedBounds) -> Result<Trajectory> {
    let total: f64 = road.iter().map(|s| s.length_m).sum();
    let v = total / tau;
    let mut x = vec![v; road.len() + 1];
    bounds.project(&mut x);
    if x.iter().zip(x.iter().skip(1)).any(|(a, b)| a + b <= 0.0) {
        return Err(Error::DegenerateProblem("bounds force a standstill over a segment".into()));
    }
    Trajectory::from_speeds(x, road)
}

fn validate_problem(road: &[RoadSegment], tau: f64, bounds: &SpeedBounds, params: &VehicleParams) -> Result<()> {
    if road.is_empty() {
        return Err(Error::InvalidParameter("road has no segments".into()));
    }
    for seg in road {
        seg.validate()?;
    }
    params.validate()?;
    bounds.validate()?;
    if bounds.len() != road.len() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} bounds for {} segments",
            bounds.len(),
            road.len()
        )));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("trip time must be positive, got {tau}")));
    }
    Ok(())
}

/// Runs the multiplier iterations from `x0`/`t0` (constant speed when absent).
#[allow(clippy::too_many_arguments)]
pub fn solve(
    road: &[RoadSegment],
    tau: f64,
    bounds: &SpeedBounds,
    params: &VehicleParams,
    cfg: &SolverConfig,
    x0: Option<&[f64]>,
    t0: Option<&[f64]>,
) -> Result<SolveResult> {
    validate_problem(road, tau, bounds, params)?;
    cfg.validate()?;
    let n = road.len();
    let start = default_start(road, tau, bounds)?;
    let mut x = match x0 {
        Some(x0) if x0.len() != n + 1 => {
            return Err(Error::DimensionMismatch("initial speeds do not match the road".into()));
        }
        Some(x0) => {
            let mut x = x0.to_vec();
            bounds.project(&mut x);
            x
        }
        None => start.speeds.clone(),
    };
    let mut times = match t0 {
        Some(t0) if t0.len() != n => {
            return Err(Error::DimensionMismatch("initial times do not match the road".into()));
        }
        Some(t0) => t0.iter().map(|t| t.max(cfg.t_floor)).collect(),
        None => match Trajectory::from_speeds(x.clone(), road) {
            Ok(t) => t.times,
            Err(_) => start.times.clone(),
        },
    };

    let (rho1, weight) = problem_scaling(road, tau, params, cfg.rho2);
    let rho1 = cfg.rho1.unwrap_or(rho1);
    let weight = cfg.energy_scale.unwrap_or(weight);
    let mut mult = MultiplierState::new(n, rho1, cfg.rho2);
    let mut history = Vec::new();
    let mut best: Option<(f64, Trajectory)> = None;
    let mut converged = false;
    let mut iters = 0;
    let mut checkpoint: Option<Vec<f64>> = None;
    let stalled_floor = cfg.eps2 / ((n + 1) as f64).sqrt();

    for _ in 0..cfg.max_outer_iters {
        iters += 1;
        let xu = update_x(&x, &times, &mult, tau, road, bounds, params, cfg, weight)?;
        let new_t = update_t(&xu.speeds, &mult, tau, road, cfg.t_floor)?;
        let dx = dist(&xu.speeds, &x);
        let dt = dist(&new_t, &times);
        x = xu.speeds;
        times = new_t;
        let traj = Trajectory::new(x.clone(), times.clone());
        mult = update_multipliers(&mult, &traj, tau, road);
        let res = residuals(&traj, tau, road);
        let rn = res.norm();
        history.push(rn);
        // A distance residual that has not halved over a check period means
        // its multiplier is crawling towards a large value: double the penalty.
        if iters % PENALTY_CHECK == 0 {
            if let Some(prev) = &checkpoint {
                for ((rho, r), p) in mult.rho2.iter_mut().zip(&res.distance).zip(prev) {
                    if r.abs() > stalled_floor && r.abs() > 0.5 * p.abs() && *rho < PENALTY_CAP * cfg.rho2 {
                        *rho *= 2.0;
                    }
                }
            }
            checkpoint = Some(res.distance.clone());
        }
        if best.as_ref().is_none_or(|(b, _)| rn < *b) {
            best = Some((rn, traj));
        }
        if dx + dt <= cfg.eps1 && rn <= cfg.eps2 {
            converged = true;
            break;
        }
    }

    let traj = if converged {
        Trajectory::new(x, times)
    } else {
        best.map(|(_, t)| t).expect("at least one outer iteration")
    };
    let energy = objective::total_energy(&traj.speeds, road, params)?;
    Ok(SolveResult { traj, energy, iters, converged, residual_history: history, multipliers: mult, energy_weight: weight })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Value of the T-subproblem objective, exposed for first-order checks.
pub fn t_subproblem_value(x: &[f64], times: &[f64], mult: &MultiplierState, tau: f64, road: &[RoadSegment]) -> f64 {
    let traj = Trajectory::new(x.to_vec(), times.to_vec());
    constraint_terms(&residuals(&traj, tau, road), mult)
}

/// Speeds `lower, lower + step, …` up to `upper` (inclusive within 1e-9).
fn grid(lower: f64, upper: f64, step: f64) -> Vec<f64> {
    if upper - lower <= 0.0 {
        return vec![lower];
    }
    let k = ((upper - lower) / step + 1e-9).floor() as usize;
    (0..=k).map(|i| lower + i as f64 * step).collect()
}

/// Per-segment tables of SOC change and time between every pair of grid speeds.
struct SegTable {
    energy: Vec<f64>,
    time: Vec<f64>,
    cols: usize,
}

impl SegTable {
    fn at(&self, a: usize, b: usize) -> (f64, f64) {
        let k = a * self.cols + b;
        (self.time[k], self.energy[k])
    }
}

/// Exhaustive search over grid speeds for the least-energy trajectory whose
/// trip time is within `time_tol` of `tau`.
///
/// Enumeration is split at a middle boundary: for every speed there, all
/// right-hand completions are sorted by time, so each left-hand prefix needs a
/// single range-minimum query over the completions with admissible time. The
/// result equals plain enumeration; ties go to the lexicographically first
/// prefix and the earliest completion in time order.
pub fn brute_force_oracle(
    road: &[RoadSegment],
    tau: f64,
    bounds: &SpeedBounds,
    params: &VehicleParams,
    grid_step: f64,
    time_tol: f64,
) -> Result<(Vec<f64>, f64)> {
    validate_problem(road, tau, bounds, params)?;
    let n = road.len();
    if n > 6 {
        return Err(Error::InvalidParameter(format!("oracle supports at most 6 segments, got {n}")));
    }
    if !(grid_step > 0.0 && time_tol >= 0.0) {
        return Err(Error::InvalidParameter("grid step must be positive and tolerance non-negative".into()));
    }
    let grids: Vec<Vec<f64>> = (0..=n).map(|j| grid(bounds.lower[j], bounds.upper[j], grid_step)).collect();
    let tables: Vec<SegTable> = road
        .iter()
        .enumerate()
        .map(|(i, seg)| {
            let (ga, gb) = (&grids[i], &grids[i + 1]);
            let mut energy = Vec::with_capacity(ga.len() * gb.len());
            let mut time = Vec::with_capacity(ga.len() * gb.len());
            for &a in ga {
                for &b in gb {
                    if a + b <= 0.0 {
                        energy.push(f64::INFINITY);
                        time.push(f64::INFINITY);
                    } else {
                        energy.push(dynamics::soc_change(params, seg, a, objective::accel_from_speeds(a, b, seg.length_m))?);
                        time.push(2.0 * seg.length_m / (a + b));
                    }
                }
            }
            Ok(SegTable { energy, time, cols: gb.len() })
        })
        .collect::<Result<_>>()?;

    let mid = n.div_ceil(2);
    // right[v]: completions from boundary `mid` at grid index v to the end.
    let right: Vec<Completions> = (0..grids[mid].len()).map(|v| Completions::build(&tables, &grids, mid, v)).collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut prefix = vec![0usize; mid + 1];
    left_search(&tables, &grids, &right, tau, time_tol, 0, 0.0, 0.0, &mut prefix, &mut best);

    let (_, idx) = best.ok_or(Error::NoFeasiblePoint)?;
    let x: Vec<f64> = idx.iter().enumerate().map(|(j, &k)| grids[j][k]).collect();
    let e = objective::total_energy(&x, road, params)?;
    Ok((x, e))
}

#[allow(clippy::too_many_arguments)]
fn left_search(
    tables: &[SegTable],
    grids: &[Vec<f64>],
    right: &[Completions],
    tau: f64,
    tol: f64,
    j: usize,
    t_acc: f64,
    e_acc: f64,
    prefix: &mut Vec<usize>,
    best: &mut Option<(f64, Vec<usize>)>,
) {
    let mid = prefix.len() - 1;
    for k in 0..grids[j].len() {
        prefix[j] = k;
        let (t, e) = if j == 0 { (0.0, 0.0) } else { tables[j - 1].at(prefix[j - 1], k) };
        if !t.is_finite() {
            continue;
        }
        let (t, e) = (t_acc + t, e_acc + e);
        if j < mid {
            left_search(tables, grids, right, tau, tol, j + 1, t, e, prefix, best);
            continue;
        }
        let comp = &right[k];
        if let Some((rest, c)) = comp.query(tau - tol - t, tau + tol - t) {
            let total = e + rest;
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                let mut idx = prefix.clone();
                idx.extend_from_slice(&comp.suffixes[c]);
                *best = Some((total, idx));
            }
        }
    }
}

/// Right-hand completions sorted by time with a min-energy segment tree.
struct Completions {
    times: Vec<f64>,
    energies: Vec<f64>,
    suffixes: Vec<Vec<usize>>,
    tree: Vec<usize>,
    size: usize,
}

impl Completions {
    fn build(tables: &[SegTable], grids: &[Vec<f64>], mid: usize, v: usize) -> Self {
        let mut items: Vec<(f64, f64, Vec<usize>)> = Vec::new();
        let mut path = Vec::new();
        Self::enumerate(tables, grids, mid, v, 0.0, 0.0, &mut path, &mut items);
        // Stable sort keeps lexicographic order among equal times.
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        let size = items.len().next_power_of_two().max(1);
        let mut c = Self {
            times: items.iter().map(|i| i.0).collect(),
            energies: items.iter().map(|i| i.1).collect(),
            suffixes: items.into_iter().map(|i| i.2).collect(),
            tree: vec![usize::MAX; 2 * size],
            size,
        };
        for k in 0..c.energies.len() {
            c.tree[size + k] = k;
        }
        for p in (1..size).rev() {
            c.tree[p] = c.better(c.tree[2 * p], c.tree[2 * p + 1]);
        }
        c
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate(
        tables: &[SegTable],
        grids: &[Vec<f64>],
        j: usize,
        k: usize,
        t: f64,
        e: f64,
        path: &mut Vec<usize>,
        out: &mut Vec<(f64, f64, Vec<usize>)>,
    ) {
        if j == tables.len() {
            out.push((t, e, path.clone()));
            return;
        }
        for next in 0..grids[j + 1].len() {
            let (dt, de) = tables[j].at(k, next);
            if dt.is_finite() {
                path.push(next);
                Self::enumerate(tables, grids, j + 1, next, t + dt, e + de, path, out);
                path.pop();
            }
        }
    }

    fn better(&self, a: usize, b: usize) -> usize {
        match (a, b) {
            (usize::MAX, _) => b,
            (_, usize::MAX) => a,
            _ if self.energies[b] < self.energies[a] => b,
            _ => a,
        }
    }

    /// Least-energy completion with time in `[lo, hi]`.
    fn query(&self, lo: f64, hi: f64) -> Option<(f64, usize)> {
        let start = self.times.partition_point(|t| *t < lo);
        let end = self.times.partition_point(|t| *t <= hi);
        if start >= end {
            return None;
        }
        let (mut l, mut r) = (start + self.size, end + self.size);
        let (mut left_best, mut right_best) = (usize::MAX, usize::MAX);
        while l < r {
            if l & 1 == 1 {
                left_best = self.better(left_best, self.tree[l]);
                l += 1;
            }
            if r & 1 == 1 {
                r -= 1;
                right_best = self.better(self.tree[r], right_best);
            }
            l >>= 1;
            r >>= 1;
        }
        let k = self.better(left_best, right_best);
        (k != usize::MAX).then(|| (self.energies[k], k))
    }
}
