//! Preceding-vehicle traffic: an on/off renewal process over distance and the
//! speed cap a minimum time headway imposes on the following truck.
//!
//! Distances driven behind a preceding vehicle and distances driven alone are
//! exponentially distributed with means `mu1` and `mu2` (km). While a vehicle
//! is present it drives at a constant speed `v_p`, and the gap at the start of
//! the episode is a uniformly drawn time headway times `v_p`.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::objective::SpeedBounds;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    /// Mean distance driven behind a preceding vehicle, km.
    pub mu1_km: f64,
    /// Mean distance driven without one, km.
    pub mu2_km: f64,
    /// Minimum time headway, s.
    pub h_tau_s: f64,
    /// Range of the time headway at the start of an episode, s.
    pub d0_headway_range_s: [f64; 2],
    pub vp_range_kmh: [f64; 2],
    /// Type of the first episode; a fair coin from the seed when unset.
    pub start_present: Option<bool>,
    pub seed: u64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self::heavy(0)
    }
}

impl TrafficConfig {
    fn with_means(mu1_km: f64, mu2_km: f64, seed: u64) -> Self {
        Self {
            mu1_km,
            mu2_km,
            h_tau_s: 1.2,
            d0_headway_range_s: [2.0, 4.0],
            vp_range_kmh: [70.0, 80.0],
            start_present: None,
            seed,
        }
    }

    pub fn heavy(seed: u64) -> Self {
        Self::with_means(3.0, 2.0, seed)
    }

    pub fn light(seed: u64) -> Self {
        Self::with_means(2.0, 3.0, seed)
    }

    pub fn normal(seed: u64) -> Self {
        Self::with_means(3.0, 3.0, seed)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu1_km", self.mu1_km), ("mu2_km", self.mu2_km), ("h_tau_s", self.h_tau_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, [lo, hi]) in [("d0_headway_range_s", self.d0_headway_range_s), ("vp_range_kmh", self.vp_range_kmh)] {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be an ordered non-negative range")));
            }
        }
        Ok(())
    }
}

/// Traffic seen on one road segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub present: bool,
    /// Preceding-vehicle speed, m/s; zero when absent.
    pub v_p_mps: f64,
    /// Gap at the start of the episode this segment belongs to, m; zero when absent.
    pub d_init_m: f64,
}

impl TraceEntry {
    const ABSENT: Self = Self { present: false, v_p_mps: 0.0, d_init_m: 0.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficTrace {
    pub segment_l: f64,
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    segment_index: usize,
    present: u8,
    v_p_mps: f64,
    d_init_m: f64,
}

impl TrafficTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whether a new preceding vehicle appears at the start of segment `i`.
    pub fn episode_starts(&self, i: usize) -> bool {
        self.entries[i].present && (i == 0 || !self.entries[i - 1].present)
    }

    /// Distance driven with a preceding vehicle, m.
    pub fn present_distance(&self) -> f64 {
        self.entries.iter().filter(|e| e.present).count() as f64 * self.segment_l
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for (i, e) in self.entries.iter().enumerate() {
            wr.serialize(TraceRow {
                segment_index: i,
                present: e.present as u8,
                v_p_mps: e.v_p_mps,
                d_init_m: e.d_init_m,
            })?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, segment_l: f64) -> Result<Self> {
        let mut entries = Vec::new();
        for (k, row) in csv::Reader::from_reader(r).deserialize::<TraceRow>().enumerate() {
            let row = row?;
            if row.segment_index != k {
                return Err(Error::InvalidParameter(format!(
                    "traffic trace row {k} has segment_index {}",
                    row.segment_index
                )));
            }
            entries.push(TraceEntry { present: row.present != 0, v_p_mps: row.v_p_mps, d_init_m: row.d_init_m });
        }
        Ok(Self { segment_l, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path, segment_l: f64) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, segment_l)
    }
}

/// Draws `count` episode lengths, km, from an exponential with the given mean.
pub fn sample_episode_lengths(mean_km: f64, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(1.0 / mean_km).expect("positive rate");
    (0..count).map(|_| exp.sample(&mut rng)).collect()
}

/// Traffic over `n_segments` segments of length `segment_l`, m.
pub fn generate_trace(n_segments: usize, segment_l: f64, cfg: &TrafficConfig) -> Result<TrafficTrace> {
    cfg.validate()?;
    if !(segment_l > 0.0) {
        return Err(Error::InvalidParameter("segment length must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let on = Exp::new(1.0 / (cfg.mu1_km * 1000.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let off = Exp::new(1.0 / (cfg.mu2_km * 1000.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut present = cfg.start_present.unwrap_or_else(|| rng.random_bool(0.5));
    let mut entries = Vec::with_capacity(n_segments);
    while entries.len() < n_segments {
        let metres = if present { on.sample(&mut rng) } else { off.sample(&mut rng) };
        // Whole segments, at least one, saturating for absurd means.
        let segs = ((metres / segment_l).ceil().max(1.0).min(n_segments as f64)) as usize;
        let entry = if present {
            let v_p = crate::kmh_to_mps(rng.random_range(cfg.vp_range_kmh[0]..=cfg.vp_range_kmh[1]));
            let h0 = rng.random_range(cfg.d0_headway_range_s[0]..=cfg.d0_headway_range_s[1]);
            TraceEntry { present: true, v_p_mps: v_p, d_init_m: h0 * v_p }
        } else {
            TraceEntry::ABSENT
        };
        let take = segs.min(n_segments - entries.len());
        entries.extend(std::iter::repeat_n(entry, take));
        present = !present;
    }
    Ok(TrafficTrace { segment_l, entries })
}

/// Largest exit speed keeping the end-of-segment gap at least `h_tau·x_out`.
///
/// From `(d + T·v_p − l)/x_out ≥ h_τ` with `T = 2l/(x_in + x_out)`:
/// `h_τ·x² + (h_τ·x_in − L)·x − (L·x_in + 2l·v_p) ≤ 0`, `L = d − l`.
pub fn headway_speed_bound(x_in: f64, d: f64, v_p: f64, l: f64, h_tau: f64) -> f64 {
    let big_l = d - l;
    let b = h_tau * x_in - big_l;
    let c = big_l * x_in + 2.0 * l * v_p;
    let disc = b * b + 4.0 * h_tau * c;
    if disc < 0.0 {
        return 0.0;
    }
    ((-b + disc.sqrt()) / (2.0 * h_tau)).max(0.0)
}

/// Planning speed per segment: `v_free`, or the preceding vehicle's speed
/// where one is present and slower.
pub fn reference_speeds(trace: &TrafficTrace, n: usize, v_free: f64) -> Vec<f64> {
    trace.entries[..n].iter().map(|e| if e.present { v_free.min(e.v_p_mps) } else { v_free }).collect()
}

/// Trip time over the first `n` segments at the reference speeds.
pub fn reference_time(trace: &TrafficTrace, n: usize, v_free: f64) -> f64 {
    reference_speeds(trace, n, v_free).iter().map(|v| trace.segment_l / v).sum()
}

/// Free-road speed whose reference trip time over `n` segments equals `tau`,
/// limited to `v_max` when `tau` is too short to reach.
pub fn free_speed_for(trace: &TrafficTrace, n: usize, tau: f64, v_max: f64) -> f64 {
    if reference_time(trace, n, v_max) >= tau {
        return v_max;
    }
    let (mut lo, mut hi) = (1e-6, v_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if reference_time(trace, n, mid) > tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gap after a segment of duration `t`.
pub fn update_gap(d: f64, v_p: f64, t: f64, l: f64) -> Result<f64> {
    let next = d + t * v_p - l;
    if next <= 0.0 {
        return Err(Error::Collision { gap_m: next });
    }
    Ok(next)
}

/// Gap at the start of segment `i` given the gap carried from the previous
/// segment (if a vehicle was being followed).
pub fn gap_at(trace: &TrafficTrace, i: usize, carried: Option<f64>) -> Option<f64> {
    let e = trace.entries.get(i)?;
    if !e.present {
        None
    } else if trace.episode_starts(i) {
        Some(e.d_init_m)
    } else {
        carried
    }
}

// Gap after a segment; a truck standing still keeps its gap.
fn next_gap(d: f64, x_in: f64, x_out: f64, v_p: f64, l: f64) -> f64 {
    if x_in + x_out > 0.0 {
        d + 2.0 * l / (x_in + x_out) * v_p - l
    } else {
        d
    }
}

/// Speed bounds for the window starting at segment `start`.
///
/// Upper bounds are the legal ones capped by the headway bound, propagated
/// along the window with the `candidate` speeds (capped where they exceed the
/// bound). `candidate[0]` should be the current speed.
pub fn bounds_for_window(
    trace: &TrafficTrace,
    start: usize,
    gap_now: Option<f64>,
    candidate: &[f64],
    legal: &SpeedBounds,
    h_tau: f64,
) -> Result<SpeedBounds> {
    let n = legal.len().saturating_sub(1);
    if candidate.len() != n + 1 || start + n > trace.len() {
        return Err(Error::DimensionMismatch("window, candidate speeds and trace disagree".into()));
    }
    let l = trace.segment_l;
    let mut out = legal.clone();
    let mut x_in = candidate[0];
    let mut carried = gap_now;
    for j in 0..n {
        let i = start + j;
        let e = trace.entries[i];
        let gap = if j == 0 && e.present && !trace.episode_starts(i) { gap_now } else { gap_at(trace, i, carried) };
        let mut x_out = candidate[j + 1];
        carried = None;
        if let Some(d) = gap {
            let cap = headway_speed_bound(x_in, d, e.v_p_mps, l, h_tau);
            if cap < out.upper[j + 1] {
                out.upper[j + 1] = cap;
                out.lower[j + 1] = out.lower[j + 1].min(cap);
            }
            x_out = x_out.min(out.upper[j + 1]);
            // A non-positive gap only arises from unsafe candidates; keep
            // propagating a tiny gap so later caps stay conservative.
            carried = Some(next_gap(d, x_in, x_out, e.v_p_mps, l).max(f64::MIN_POSITIVE));
        }
        x_in = x_out.clamp(out.lower[j + 1], out.upper[j + 1]);
    }
    Ok(out)
}

/// Headways `d/x` at every boundary where a vehicle is followed along the
/// `speeds` of the window starting at `start`; `+∞` when stopped.
pub fn window_headways(
    trace: &TrafficTrace,
    start: usize,
    gap_now: Option<f64>,
    speeds: &[f64],
) -> Result<Vec<(usize, f64)>> {
    let n = speeds.len().saturating_sub(1);
    if start + n > trace.len() {
        return Err(Error::DimensionMismatch("window runs past the trace".into()));
    }
    let l = trace.segment_l;
    let mut out = Vec::new();
    let mut carried = gap_now;
    for j in 0..n {
        let i = start + j;
        let e = trace.entries[i];
        let gap = if j == 0 && e.present && !trace.episode_starts(i) { gap_now } else { gap_at(trace, i, carried) };
        carried = None;
        if let Some(d) = gap {
            if trace.episode_starts(i) {
                out.push((j, headway(d, speeds[j])));
            }
            let next = next_gap(d, speeds[j], speeds[j + 1], e.v_p_mps, l);
            out.push((j + 1, headway(next, speeds[j + 1])));
            carried = Some(next);
        }
    }
    Ok(out)
}

fn headway(d: f64, x: f64) -> f64 {
    if x > 0.0 {
        d / x
    } else if d > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}
