//! Uniform-speed cruise control baseline.
//!
//! Without traffic every boundary speed is the set speed. Behind a preceding
//! vehicle the exit speed of each segment is the set speed capped by the
//! headway bound, so the truck decelerates (regeneratively, there are no
//! friction brakes) and recovers once the gap opens again.

use serde::{Deserialize, Serialize};

use crate::dynamics::{RoadSegment, VehicleParams};
use crate::mpc::{RouteResult, TrafficInput};
use crate::objective::SpeedBounds;
use crate::traffic;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcTarget {
    /// Set speed, m/s.
    Speed(f64),
    /// Trip time to match, s.
    TripTime(f64),
}

/// Drives the road at `v_set`, following the traffic trace if given.
pub fn cc_at_speed(
    road: &[RoadSegment],
    v_set: f64,
    params: &VehicleParams,
    legal: &SpeedBounds,
    traffic: Option<TrafficInput<'_>>,
    initial_soc: f64,
) -> Result<RouteResult> {
    if road.is_empty() || legal.len() != road.len() + 1 {
        return Err(Error::DimensionMismatch("legal bounds do not match the road".into()));
    }
    if !(v_set > 0.0) || legal.lower.iter().zip(&legal.upper).any(|(&lo, &hi)| v_set < lo - 1e-9 || v_set > hi + 1e-9) {
        return Err(Error::InvalidParameter(format!("cruise speed {v_set} m/s lies outside the speed bounds")));
    }
    let Some(t) = traffic else {
        return RouteResult::from_speeds(vec![v_set; road.len() + 1], road, params, initial_soc);
    };
    if t.trace.len() < road.len() {
        return Err(Error::DimensionMismatch("traffic trace is shorter than the road".into()));
    }
    let mut speeds = Vec::with_capacity(road.len() + 1);
    speeds.push(v_set);
    let mut gap: Option<f64> = None;
    let mut min_h: Option<f64> = None;
    let mut note = |h: f64| min_h = Some(min_h.map_or(h, |m: f64| m.min(h)));
    for (i, seg) in road.iter().enumerate() {
        let x_in = speeds[i];
        gap = traffic::gap_at(t.trace, i, gap);
        let mut x_out = v_set;
        if let Some(d) = gap {
            let e = t.trace.entries[i];
            if t.trace.episode_starts(i) && x_in > 0.0 {
                note(d / x_in);
            }
            x_out = x_out.min(traffic::headway_speed_bound(x_in, d, e.v_p_mps, seg.length_m, t.h_tau_s));
            if x_in + x_out <= 0.0 {
                return Err(Error::Collision { gap_m: d });
            }
            let time = 2.0 * seg.length_m / (x_in + x_out);
            let next = traffic::update_gap(d, e.v_p_mps, time, seg.length_m)?;
            if x_out > 0.0 {
                note(next / x_out);
            }
            gap = Some(next);
        }
        speeds.push(x_out);
    }
    let mut r = RouteResult::from_speeds(speeds, road, params, initial_soc)?;
    r.min_headway_s = min_h;
    Ok(r)
}

/// Cruise control at a set speed, or at the set speed whose trip time
/// matches a target. Under traffic the set speed is found by bisection; if
/// even the top legal speed is too slow, that run is returned.
pub fn cc_baseline(
    road: &[RoadSegment],
    target: CcTarget,
    params: &VehicleParams,
    legal: &SpeedBounds,
    traffic: Option<TrafficInput<'_>>,
    initial_soc: f64,
) -> Result<RouteResult> {
    let length: f64 = road.iter().map(|s| s.length_m).sum();
    let tau = match target {
        CcTarget::Speed(v) => return cc_at_speed(road, v, params, legal, traffic, initial_soc),
        CcTarget::TripTime(tau) if tau > 0.0 && tau.is_finite() => tau,
        CcTarget::TripTime(tau) => return Err(Error::InvalidParameter(format!("trip time must be positive, got {tau}"))),
    };
    let plain = length / tau;
    if traffic.is_none() {
        return cc_at_speed(road, plain, params, legal, None, initial_soc);
    }
    let v_min = legal.lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v_max = legal.upper.iter().copied().fold(f64::INFINITY, f64::min);
    if plain > v_max + 1e-9 {
        return Err(Error::InvalidParameter(format!("cruise speed {plain} m/s lies outside the speed bounds")));
    }
    let run = |v: f64| cc_at_speed(road, v, params, legal, traffic, initial_soc);
    let fast = run(v_max)?;
    if fast.trip_time() >= tau {
        return Ok(fast);
    }
    // Trip time is non-increasing in the set speed; traffic only slows the
    // truck, so the answer lies at or above the plain speed.
    let mut lo = plain.max(v_min);
    let first = run(lo)?;
    if first.trip_time() <= tau {
        return Ok(first);
    }
    let mut hi = v_max;
    let mut best = fast;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let r = run(mid)?;
        if r.trip_time() > tau {
            lo = mid;
        } else {
            hi = mid;
            best = r;
        }
        if (best.trip_time() - tau).abs() <= 1e-6 * tau {
            break;
        }
    }
    Ok(best)
}
