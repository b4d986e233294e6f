//! Receding-horizon execution: solve a window of `horizon_n` segments, drive
//! the first one, shift, repeat.
//!
//! Each window pins its first boundary speed to the current speed so executed
//! speeds are continuous, and gets a share of the remaining trip time
//! proportional to its share of the remaining distance. The window's final
//! speed is floored at the average speed still required: left free, the
//! optimiser would bleed kinetic energy at every horizon end, because the
//! energy beyond the window is invisible to it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, RoadSegment, VehicleParams};
use crate::objective::{accel_from_speeds, SpeedBounds, Trajectory};
use crate::solver::{self, SolveResult, SolverConfig};
use crate::traffic::{self, TrafficTrace};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon_n: usize,
    /// Segment length the road is expected to be sampled at, m.
    pub segment_l: f64,
    /// Segments executed per solve.
    pub replan_every: usize,
    /// Floor the last speed of each window at the required average speed.
    pub terminal_floor: bool,
    /// Execute the whole plan once a window reaches the end of the route.
    pub commit_tail: bool,
    pub initial_soc: f64,
    /// Speed at the start of the route, m/s; the required average speed when unset.
    pub initial_speed: Option<f64>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon_n: 30,
            segment_l: 50.0,
            replan_every: 1,
            terminal_floor: true,
            commit_tail: true,
            initial_soc: 0.9,
            initial_speed: None,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_n < 2 {
            return Err(Error::InvalidParameter(format!("horizon_n must be at least 2, got {}", self.horizon_n)));
        }
        if !(self.segment_l > 0.0 && self.segment_l.is_finite()) {
            return Err(Error::InvalidParameter(format!("segment_l must be positive, got {}", self.segment_l)));
        }
        if self.replan_every == 0 || self.replan_every > self.horizon_n {
            return Err(Error::InvalidParameter("replan_every must lie in 1..=horizon_n".into()));
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(Error::SocOutOfRange { soc: self.initial_soc });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteState {
    /// Segments executed so far.
    pub position_index: usize,
    pub speed_now: f64,
    pub elapsed_time: f64,
    pub soc_now: f64,
    pub executed: Trajectory,
    /// Per-pack SOC drawn by each executed segment.
    pub soc_deltas: Vec<f64>,
    /// Gap to the preceding vehicle at the current position, m.
    pub gap_m: Option<f64>,
}

impl RouteState {
    pub fn new(speed: f64, soc: f64) -> Self {
        Self {
            position_index: 0,
            speed_now: speed,
            elapsed_time: 0.0,
            soc_now: soc,
            executed: Trajectory::new(vec![speed], Vec::new()),
            soc_deltas: Vec::new(),
            gap_m: None,
        }
    }
}

/// Traffic seen by the controller.
#[derive(Debug, Clone, Copy)]
pub struct TrafficInput<'a> {
    pub trace: &'a TrafficTrace,
    pub h_tau_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub start: usize,
    pub segments: usize,
    pub executed: usize,
    pub tau_window: f64,
    pub iters: usize,
    pub converged: bool,
    /// The remaining time budget was outside what the bounds allow.
    pub budget_clamped: bool,
    /// A headway violation forced a second solve with tightened bounds.
    pub resolved: bool,
    /// Wall-clock time of the solve(s), s. Not deterministic.
    pub solve_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub traj: Trajectory,
    pub soc_deltas: Vec<f64>,
    /// SOC at every segment boundary, starting from the initial SOC.
    pub soc_trace: Vec<f64>,
    pub windows: Vec<WindowRecord>,
    /// Smallest time headway to a preceding vehicle at any boundary, s.
    pub min_headway_s: Option<f64>,
}

impl RouteResult {
    /// Net per-pack SOC consumed.
    pub fn energy(&self) -> f64 {
        self.soc_deltas.iter().sum()
    }

    pub fn trip_time(&self) -> f64 {
        self.traj.trip_time()
    }

    pub fn fallbacks(&self) -> usize {
        self.windows.iter().filter(|w| !w.converged).count()
    }

    /// Builds a result from a fixed speed profile (no solver involved).
    pub fn from_speeds(
        speeds: Vec<f64>,
        road: &[RoadSegment],
        params: &VehicleParams,
        initial_soc: f64,
    ) -> Result<Self> {
        let traj = Trajectory::from_speeds(speeds, road)?;
        let soc_deltas = segment_soc_deltas(&traj.speeds, road, params)?;
        let soc_trace = soc_trace(initial_soc, &soc_deltas);
        Ok(Self { traj, soc_deltas, soc_trace, windows: Vec::new(), min_headway_s: None })
    }
}

pub fn segment_soc_deltas(speeds: &[f64], road: &[RoadSegment], params: &VehicleParams) -> Result<Vec<f64>> {
    road.iter()
        .enumerate()
        .map(|(i, seg)| {
            dynamics::soc_change(params, seg, speeds[i], accel_from_speeds(speeds[i], speeds[i + 1], seg.length_m))
        })
        .collect()
}

pub fn soc_trace(initial: f64, deltas: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(deltas.len() + 1);
    let mut soc = initial;
    out.push(soc);
    for d in deltas {
        soc -= d;
        out.push(soc);
    }
    out
}

/// Share of the remaining trip time allotted to a window, in proportion to
/// its share of the remaining distance.
pub fn window_time_budget(remaining_m: f64, window_m: f64, tau_total: f64, elapsed: f64) -> Result<f64> {
    if !(remaining_m > 0.0) {
        return Err(Error::InvalidParameter("no distance remains".into()));
    }
    let remaining_s = tau_total - elapsed;
    if !(remaining_s > 0.0) {
        return Err(Error::BudgetExhausted { remaining_s, remaining_m });
    }
    Ok(remaining_s * window_m / remaining_m)
}

/// Shortest and longest window times the bounds allow.
fn time_range(road: &[RoadSegment], bounds: &SpeedBounds) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for (i, seg) in road.iter().enumerate() {
        lo += 2.0 * seg.length_m / (bounds.upper[i] + bounds.upper[i + 1]);
        let s = bounds.lower[i] + bounds.lower[i + 1];
        hi += if s > 0.0 { 2.0 * seg.length_m / s } else { f64::INFINITY };
    }
    (lo, hi)
}

// Relative margin kept from the extreme feasible window times, which the
// bounds can only meet at a single point.
const BUDGET_MARGIN: f64 = 5e-3;

/// Rolling-horizon controller over a fixed road.
pub struct Controller<'a> {
    pub road: &'a [RoadSegment],
    pub tau_total: f64,
    pub params: &'a VehicleParams,
    pub cfg: &'a MpcConfig,
    pub solver_cfg: &'a SolverConfig,
    /// Legal bounds for every boundary of the road.
    pub legal: &'a SpeedBounds,
    pub traffic: Option<TrafficInput<'a>>,
}

/// Outcome of one planning step.
#[derive(Debug, Clone)]
pub struct Step {
    pub record: WindowRecord,
    pub plan: SolveResult,
    /// Headways met along the executed segments.
    pub headways: Vec<f64>,
}

impl Controller<'_> {
    fn check(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.road.is_empty() {
            return Err(Error::InvalidParameter("road has no segments".into()));
        }
        if self.legal.len() != self.road.len() + 1 {
            return Err(Error::DimensionMismatch("legal bounds do not match the road".into()));
        }
        self.legal.validate()?;
        if let Some(t) = &self.traffic {
            if t.trace.len() < self.road.len() {
                return Err(Error::DimensionMismatch("traffic trace is shorter than the road".into()));
            }
        }
        for (i, seg) in self.road.iter().enumerate() {
            if (seg.length_m - self.cfg.segment_l).abs() > 1e-9 * self.cfg.segment_l {
                return Err(Error::InvalidParameter(format!(
                    "segment {i} is {} m long, expected {}",
                    seg.length_m, self.cfg.segment_l
                )));
            }
        }
        Ok(())
    }

    fn remaining_m(&self, pos: usize) -> f64 {
        self.road[pos..].iter().map(|s| s.length_m).sum()
    }

    /// Plans the window at the current position and executes its first
    /// segment(s). `warm` carries the shifted plan between calls.
    pub fn step(&self, state: &mut RouteState, warm: &mut Option<Vec<f64>>) -> Result<Step> {
        let n_total = self.road.len();
        let pos = state.position_index;
        if pos >= n_total {
            return Err(Error::InvalidParameter("route already complete".into()));
        }
        let nw = self.cfg.horizon_n.min(n_total - pos);
        let window = &self.road[pos..pos + nw];
        let mut bounds = SpeedBounds {
            lower: self.legal.lower[pos..=pos + nw].to_vec(),
            upper: self.legal.upper[pos..=pos + nw].to_vec(),
        };
        bounds.lower[0] = state.speed_now;
        bounds.upper[0] = state.speed_now;

        let x0: Option<Vec<f64>> = warm.as_ref().map(|w| {
            let mut x: Vec<f64> = w.iter().copied().take(nw + 1).collect();
            let last = *x.last().unwrap_or(&state.speed_now);
            x.resize(nw + 1, last);
            x[0] = state.speed_now;
            x
        });

        let gap_now = self.traffic.and_then(|t| traffic::gap_at(t.trace, pos, state.gap_m));
        if let Some(t) = &self.traffic {
            let cand = x0.clone().unwrap_or_else(|| vec![state.speed_now; nw + 1]);
            bounds = traffic::bounds_for_window(t.trace, pos, gap_now, &cand, &bounds, t.h_tau_s)?;
        }

        // Time is shared out by distance on a free road, and by reference
        // time (slower behind a preceding vehicle) under traffic.
        let (remaining, window_share, v_end) = match &self.traffic {
            None => {
                let remaining_m = self.remaining_m(pos);
                (remaining_m, window.iter().map(|s| s.length_m).sum::<f64>(), 1.0)
            }
            Some(t) => {
                let v_max = self.legal.upper.iter().copied().fold(0.0, f64::max);
                let v_free = traffic::free_speed_for(t.trace, n_total, self.tau_total, v_max);
                let v_ref = traffic::reference_speeds(t.trace, n_total, v_free);
                let w: Vec<f64> = (pos..n_total).map(|i| self.road[i].length_m / v_ref[i]).collect();
                // Expressed in metres at the free speed so a uniform trace
                // reduces to the distance split.
                (w.iter().sum::<f64>() * v_free, w[..nw].iter().sum::<f64>() * v_free, v_ref[pos + nw - 1] / v_free)
            }
        };
        let remaining_s = self.tau_total - state.elapsed_time;
        if self.cfg.terminal_floor {
            let v_req = if remaining_s > 0.0 { v_end * remaining / remaining_s } else { f64::INFINITY };
            let floor = v_req.min(bounds.upper[nw]);
            bounds.lower[nw] = bounds.lower[nw].max(floor);
        }
        let budget = match window_time_budget(remaining, window_share, self.tau_total, state.elapsed_time) {
            Ok(t) => Some(t),
            Err(Error::BudgetExhausted { .. }) => None,
            Err(e) => return Err(e),
        };
        // Keeps the window time strictly inside what the bounds allow; an
        // exhausted budget means driving as fast as allowed.
        let fit = |b: &SpeedBounds| -> (f64, bool) {
            let (t_lo, t_hi) = time_range(window, b);
            let (t_lo, t_hi) = (t_lo * (1.0 + BUDGET_MARGIN), t_hi * (1.0 - BUDGET_MARGIN));
            if t_hi < t_lo {
                return (0.5 * (t_lo + t_hi), true);
            }
            match budget {
                Some(t) if t < t_lo => (t_lo, true),
                Some(t) if t > t_hi => (t_hi, true),
                Some(t) => (t, false),
                None => (t_lo, true),
            }
        };
        let (mut tau_w, mut budget_clamped) = fit(&bounds);

        let clock = Instant::now();
        let mut plan = solver::solve(window, tau_w, &bounds, self.params, self.solver_cfg, x0.as_deref(), None)?;
        let mut iters = plan.iters;
        let mut resolved = false;
        let mut safe = true;
        if let Some(t) = &self.traffic {
            let violated = |speeds: &[f64]| -> Result<bool> {
                Ok(traffic::window_headways(t.trace, pos, gap_now, speeds)?
                    .iter()
                    .any(|&(_, h)| h < t.h_tau_s - 1e-9))
            };
            if violated(&plan.traj.speeds)? {
                let mut tight = traffic::bounds_for_window(t.trace, pos, gap_now, &plan.traj.speeds, &bounds, t.h_tau_s)?;
                tight.lower[0] = state.speed_now;
                tight.upper[0] = state.speed_now;
                (tau_w, budget_clamped) = fit(&tight);
                plan = solver::solve(window, tau_w, &tight, self.params, self.solver_cfg, Some(&plan.traj.speeds), None)?;
                iters += plan.iters;
                resolved = true;
                safe = !violated(&plan.traj.speeds)?;
            }
        }
        let solve_time_s = clock.elapsed().as_secs_f64();

        let at_end = pos + nw == n_total;
        let k = if self.cfg.commit_tail && at_end && safe { nw } else { self.cfg.replan_every.min(nw) };
        let mut headways = Vec::new();
        for j in 0..k {
            let seg = &window[j];
            let (x_in, x_out) = (state.speed_now, plan.traj.speeds[j + 1]);
            let t = dynamics::segment_time(x_in, x_out, seg.length_m)?;
            let d_soc = dynamics::soc_change(self.params, seg, x_in, accel_from_speeds(x_in, x_out, seg.length_m))?;
            if let Some(tr) = &self.traffic {
                let i = pos + j;
                state.gap_m = match traffic::gap_at(tr.trace, i, state.gap_m) {
                    Some(d) => {
                        if tr.trace.episode_starts(i) && x_in > 0.0 {
                            headways.push(d / x_in);
                        }
                        let e = tr.trace.entries[i];
                        let next = traffic::update_gap(d, e.v_p_mps, t, seg.length_m)?;
                        if x_out > 0.0 {
                            headways.push(next / x_out);
                        }
                        Some(next)
                    }
                    None => None,
                };
            }
            state.soc_now -= d_soc;
            if !(0.0..=1.0).contains(&state.soc_now) {
                return Err(Error::SocOutOfRange { soc: state.soc_now });
            }
            state.executed.speeds.push(x_out);
            state.executed.times.push(t);
            state.soc_deltas.push(d_soc);
            state.elapsed_time += t;
            state.speed_now = x_out;
            state.position_index += 1;
        }
        *warm = Some(plan.traj.speeds[k..].to_vec());

        let record = WindowRecord {
            start: pos,
            segments: nw,
            executed: k,
            tau_window: tau_w,
            iters,
            converged: plan.converged,
            budget_clamped,
            resolved,
            solve_time_s,
        };
        Ok(Step { record, plan, headways })
    }

    pub fn initial_state(&self) -> RouteState {
        let total: f64 = self.road.iter().map(|s| s.length_m).sum();
        let v = self.cfg.initial_speed.unwrap_or(total / self.tau_total);
        RouteState::new(v.clamp(self.legal.lower[0], self.legal.upper[0]), self.cfg.initial_soc)
    }

    pub fn run(&self) -> Result<RouteResult> {
        self.check()?;
        if !(self.tau_total > 0.0 && self.tau_total.is_finite()) {
            return Err(Error::InvalidParameter(format!("trip time must be positive, got {}", self.tau_total)));
        }
        let mut state = self.initial_state();
        let mut warm = None;
        let mut windows = Vec::new();
        let mut min_headway: Option<f64> = None;
        while state.position_index < self.road.len() {
            let step = self.step(&mut state, &mut warm)?;
            for h in step.headways {
                min_headway = Some(min_headway.map_or(h, |m| m.min(h)));
            }
            windows.push(step.record);
        }
        let soc_trace = soc_trace(self.cfg.initial_soc, &state.soc_deltas);
        Ok(RouteResult {
            traj: state.executed,
            soc_deltas: state.soc_deltas,
            soc_trace,
            windows,
            min_headway_s: min_headway,
        })
    }
}

/// Runs the controller over the whole road.
pub fn run_route(
    road: &[RoadSegment],
    tau_total: f64,
    params: &VehicleParams,
    cfg: &MpcConfig,
    solver_cfg: &SolverConfig,
    legal: &SpeedBounds,
    traffic: Option<TrafficInput<'_>>,
) -> Result<RouteResult> {
    Controller { road, tau_total, params, cfg, solver_cfg, legal, traffic }.run()
}
