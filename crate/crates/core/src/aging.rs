//! Cycling capacity fade and battery life projection.
//!
//! Fade per processed charge follows
//! `ξ' = k1·SOC_dev·exp(k2·SOC_avg) + k3·exp(k4·SOC_dev)`, with the stress
//! features taken as the charge-weighted mean and standard deviation of SOC
//! over one day (drive plus overnight charge). Fade is applied at the end of
//! each day. SOC is relative to the current, faded, capacity, while the charge
//! a route draws is fixed by its energy, so an aged pack swings further for
//! the same drive.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, RoadSegment, SocSplit, VehicleParams};
use crate::objective::accel_from_speeds;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgingParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

/// Stress features and fade rate of one reference cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub soc_avg: f64,
    pub soc_dev: f64,
    /// Ah faded per Ah processed.
    pub rate: f64,
}

/// Reference cycles the default parameters reproduce: a cruise-control day
/// and an optimised day on an 800 km route.
pub const REFERENCE_ROWS: [CalibrationRow; 2] = [
    CalibrationRow { soc_avg: 0.53, soc_dev: 0.47, rate: 1.94e-4 },
    CalibrationRow { soc_avg: 0.50, soc_dev: 0.45, rate: 1.64e-4 },
];

/// Exponents held fixed during calibration; two rows only pin down two constants.
pub const DEFAULT_K2: f64 = 5.0;
pub const DEFAULT_K4: f64 = 5.0;

impl Default for AgingParams {
    fn default() -> Self {
        calibrate(&REFERENCE_ROWS, DEFAULT_K2, DEFAULT_K4).expect("reference rows are well conditioned")
    }
}

impl AgingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k3 > 0.0) {
            return Err(Error::InvalidParameter(format!("k3 must be positive, got {}", self.k3)));
        }
        if ![self.k1, self.k2, self.k4].iter().all(|k| k.is_finite()) {
            return Err(Error::InvalidParameter("aging constants must be finite".into()));
        }
        Ok(())
    }
}

/// Least-squares `k1`, `k3` for fixed `k2`, `k4`; the rate is linear in them.
pub fn calibrate(rows: &[CalibrationRow], k2: f64, k4: f64) -> Result<AgingParams> {
    // Normal equations of the 2-column design matrix.
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in rows {
        let p = r.soc_dev * (k2 * r.soc_avg).exp();
        let q = (k4 * r.soc_dev).exp();
        a11 += p * p;
        a12 += p * q;
        a22 += q * q;
        b1 += p * r.rate;
        b2 += q * r.rate;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det.abs() > 1e-12 * a11 * a22) {
        return Err(Error::InvalidParameter("calibration rows do not determine k1 and k3".into()));
    }
    let k = AgingParams { k1: (b1 * a22 - b2 * a12) / det, k2, k3: (a11 * b2 - a12 * b1) / det, k4 };
    k.validate()?;
    Ok(k)
}

/// SOC against cumulative charge processed, Ah.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SocTrace {
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    q_ah: f64,
    soc: f64,
}

impl SocTrace {
    pub fn new(q0: f64, soc0: f64) -> Self {
        Self { points: vec![(q0, soc0)] }
    }

    pub fn last(&self) -> Option<(f64, f64)> {
        self.points.last().copied()
    }

    /// Moves the SOC by `d_soc` while processing `d_q` Ah.
    fn step(&mut self, d_q: f64, d_soc: f64) {
        let (q, s) = self.last().unwrap_or((0.0, 0.0));
        if d_q > 0.0 {
            self.points.push((q + d_q, s + d_soc));
        }
    }

    pub fn extend(&mut self, other: &SocTrace) {
        let skip = usize::from(self.last().is_some() && self.last() == other.points.first().copied());
        self.points.extend(other.points.iter().skip(skip));
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for &(q_ah, soc) in &self.points {
            wr.serialize(TraceRow { q_ah, soc })?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut points = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize::<TraceRow>() {
            let row = row?;
            points.push((row.q_ah, row.soc));
        }
        Ok(Self { points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub soc_avg: f64,
    pub soc_dev: f64,
    /// Ah processed.
    pub q_processed: f64,
}

/// Charge-weighted SOC mean and standard deviation.
///
/// SOC is taken as piecewise linear in `Q`, so both integrals are exact per
/// piece: the trapezoid rule for the mean and `h·(e₀² + e₀e₁ + e₁²)/3` for the
/// squared deviation.
pub fn soc_stats(trace: &SocTrace) -> Result<CycleStats> {
    let pts = &trace.points;
    for w in pts.windows(2) {
        if w[1].0 < w[0].0 {
            return Err(Error::InvalidParameter("charge processed must be nondecreasing".into()));
        }
    }
    let q = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => b.0 - a.0,
        _ => 0.0,
    };
    if !(q > 0.0) {
        return Err(Error::UndefinedStats);
    }
    let mean = pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum::<f64>() / q;
    let var = pts
        .windows(2)
        .map(|w| {
            let (e0, e1) = (w[0].1 - mean, w[1].1 - mean);
            (w[1].0 - w[0].0) * (e0 * e0 + e0 * e1 + e1 * e1) / 3.0
        })
        .sum::<f64>()
        / q;
    Ok(CycleStats { soc_avg: mean, soc_dev: var.max(0.0).sqrt(), q_processed: q })
}

/// Ah faded per Ah processed.
pub fn fading_rate(s: &CycleStats, k: &AgingParams) -> f64 {
    k.k1 * s.soc_dev * (k.k2 * s.soc_avg).exp() + k.k3 * (k.k4 * s.soc_dev).exp()
}

/// Ah faded over the cycle.
pub fn capacity_fade(s: &CycleStats, k: &AgingParams) -> f64 {
    fading_rate(s, k) * s.q_processed
}

/// Constant-current charge from `soc_start` to `soc_end`. Returns the trace
/// (continuing from `q_start`) and the duration in hours.
pub fn simulate_charge(
    soc_start: f64,
    soc_end: f64,
    rate_c: f64,
    capacity_ah: f64,
    q_start: f64,
) -> Result<(SocTrace, f64)> {
    if !(rate_c > 0.0 && capacity_ah > 0.0) {
        return Err(Error::InvalidParameter("charge rate and capacity must be positive".into()));
    }
    if soc_end < soc_start {
        return Err(Error::InvalidParameter(format!("charge would lower SOC from {soc_start} to {soc_end}")));
    }
    if soc_end > 1.0 || soc_start < 0.0 {
        return Err(Error::SocOutOfRange { soc: if soc_end > 1.0 { soc_end } else { soc_start } });
    }
    let mut t = SocTrace::new(q_start, soc_start);
    t.step((soc_end - soc_start) * capacity_ah, soc_end - soc_start);
    Ok((t, (soc_end - soc_start) / rate_c))
}

/// Per-segment discharge/charge of one pass over a route, in Ah.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveProfile {
    pub segment_l: f64,
    pub segments: Vec<SocSplit>,
    /// Ah per unit of per-pack SOC on a fresh pack.
    pub nominal_ah: f64,
}

impl DriveProfile {
    pub fn from_speeds(speeds: &[f64], road: &[RoadSegment], params: &VehicleParams) -> Result<Self> {
        if road.is_empty() || speeds.len() != road.len() + 1 {
            return Err(Error::DimensionMismatch("speeds do not match the road".into()));
        }
        let segments = road
            .iter()
            .enumerate()
            .map(|(i, seg)| {
                dynamics::soc_split(params, seg, speeds[i], accel_from_speeds(speeds[i], speeds[i + 1], seg.length_m))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { segment_l: road[0].length_m, segments, nominal_ah: params.pack_capacity_ah })
    }

    fn split(&self, i: usize) -> &SocSplit {
        &self.segments[i % self.segments.len()]
    }

    /// Net Ah drawn over the first `n` segments, repeating the route.
    pub fn net_ah(&self, n: usize) -> f64 {
        let per_pass: f64 = self.segments.iter().map(|s| s.net()).sum();
        let full = n / self.segments.len();
        let rest: f64 = self.segments[..n % self.segments.len()].iter().map(|s| s.net()).sum();
        (full as f64 * per_pass + rest) * self.nominal_ah
    }

    /// Ah processed (discharge plus regeneration) over the first `n` segments.
    pub fn throughput_ah(&self, n: usize) -> f64 {
        (0..n).map(|i| self.split(i).throughput()).sum::<f64>() * self.nominal_ah
    }

    /// Drives `n` segments from `soc_start` on a pack of `capacity_ah`.
    pub fn trace(&self, n: usize, soc_start: f64, capacity_ah: f64, q_start: f64) -> Result<SocTrace> {
        let mut t = SocTrace::new(q_start, soc_start);
        for i in 0..n {
            let s = self.split(i);
            let (dis, chg) = (s.discharge * self.nominal_ah, s.charge * self.nominal_ah);
            let moves = if s.charge_first { [(chg, 1.0), (dis, -1.0)] } else { [(dis, -1.0), (chg, 1.0)] };
            for (ah, sign) in moves {
                t.step(ah, sign * ah / capacity_ah);
                let soc = t.last().map_or(soc_start, |p| p.1);
                if !(-1e-12..=1.0 + 1e-12).contains(&soc) {
                    return Err(Error::RangeExceeded(format!("SOC reaches {soc:.4} after {} segments", i + 1)));
                }
            }
        }
        Ok(t)
    }

    /// Largest rise of the charge above its starting value during one pass,
    /// Ah. Later passes start lower whenever a pass draws net charge.
    pub fn peak_regen_ah(&self) -> f64 {
        let mut level: f64 = 0.0;
        let mut peak: f64 = 0.0;
        for s in &self.segments {
            let (dis, chg) = (s.discharge * self.nominal_ah, s.charge * self.nominal_ah);
            if s.charge_first {
                peak = peak.max(level + chg);
                level += chg - dis;
            } else {
                level += chg - dis;
                peak = peak.max(level);
            }
        }
        peak
    }

    /// Whole segments drivable before the SOC would end a segment below
    /// `soc_end`, with the day started low enough that regeneration never
    /// lifts the SOC above `soc_start`.
    pub fn range_segments(&self, soc_start: f64, soc_end: f64, capacity_ah: f64) -> usize {
        let budget = (soc_start - soc_end) * capacity_ah - self.peak_regen_ah();
        let per_pass: f64 = self.segments.iter().map(|s| s.net()).sum::<f64>() * self.nominal_ah;
        if per_pass <= 0.0 {
            return usize::MAX;
        }
        let passes = ((budget / per_pass).floor().max(1.0) - 1.0) as usize;
        let mut used = passes as f64 * per_pass;
        let mut n = passes * self.segments.len();
        loop {
            let next = used + self.split(n).net() * self.nominal_ah;
            if next > budget + 1e-12 {
                return n;
            }
            used = next;
            n += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgingConfig {
    pub charge_rate_c: f64,
    pub days_per_year: f64,
    /// Fade fraction marking end of life.
    pub eol_fade: f64,
    /// Give up after this many days.
    pub max_days: usize,
}

impl Default for AgingConfig {
    fn default() -> Self {
        Self { charge_rate_c: 0.1, days_per_year: 260.0, eol_fade: 0.3, max_days: 260 * 40 }
    }
}

/// Daily distance rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DailyDistance {
    /// Fixed number of kilometres.
    Km(f64),
    /// Whatever the given drive achieves from a full charge down to the
    /// ending SOC on the pack being aged.
    RangeOf(DriveProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayScenario {
    pub distance: DailyDistance,
    /// SOC at the end of every drive; the start SOC follows from it.
    pub ending_soc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub stats: CycleStats,
    pub segments: usize,
    pub distance_km: f64,
    pub soc_start: f64,
    pub soc_min: f64,
    pub dod: f64,
    pub drive_ah: f64,
    pub charge_ah: f64,
    pub charge_hours: f64,
    pub fade_ah: f64,
}

/// One day: drive `n_segments` ending at `ending_soc`, then charge back to
/// the day's starting SOC.
pub fn simulate_day(
    profile: &DriveProfile,
    n_segments: usize,
    ending_soc: f64,
    capacity_ah: f64,
    k: &AgingParams,
    cfg: &AgingConfig,
) -> Result<(DayResult, SocTrace)> {
    let net = profile.net_ah(n_segments);
    let soc_start = ending_soc + net / capacity_ah;
    if soc_start > 1.0 + 1e-12 {
        return Err(Error::RangeExceeded(format!(
            "{:.1} km needs a start SOC of {soc_start:.4}",
            n_segments as f64 * profile.segment_l / 1000.0
        )));
    }
    let soc_start = soc_start.min(1.0);
    let mut trace = profile.trace(n_segments, soc_start, capacity_ah, 0.0)?;
    let (q_drive, soc_end) = trace.last().unwrap_or((0.0, soc_start));
    let (charge, hours) = if soc_end < soc_start {
        simulate_charge(soc_end, soc_start, cfg.charge_rate_c, capacity_ah, q_drive)?
    } else {
        (SocTrace::new(q_drive, soc_end), 0.0)
    };
    trace.extend(&charge);
    let stats = soc_stats(&trace)?;
    let soc_min = trace.points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let charge_ah = stats.q_processed - q_drive;
    Ok((
        DayResult {
            stats,
            segments: n_segments,
            distance_km: n_segments as f64 * profile.segment_l / 1000.0,
            soc_start,
            soc_min,
            dod: soc_start - soc_min,
            drive_ah: q_drive,
            charge_ah,
            charge_hours: hours,
            fade_ah: capacity_fade(&stats, k),
        },
        trace,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifePoint {
    pub day: usize,
    pub fade: f64,
    /// Daily distance driven, km.
    pub distance_km: f64,
    /// Distance this drive achieves from a full charge to the ending SOC, km.
    pub range_km: f64,
}

/// Why a life projection stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifeEnd {
    EndOfLife,
    /// The faded pack can no longer cover the daily distance.
    RangeExceeded,
    MaxDays,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeProjection {
    pub days: usize,
    pub years: f64,
    pub end: LifeEnd,
    pub first_day: DayResult,
    /// Fade after one year of operation, fraction of nominal capacity.
    pub fade_one_year: f64,
    pub curve: Vec<LifePoint>,
}

/// Ages the pack day by day until the end-of-life fade.
pub fn project_life(
    profile: &DriveProfile,
    scenario: &DayScenario,
    k: &AgingParams,
    cfg: &AgingConfig,
) -> Result<LifeProjection> {
    k.validate()?;
    let nominal = profile.nominal_ah;
    let mut fade = 0.0;
    let mut curve = Vec::new();
    let mut first_day = None;
    let mut fade_one_year = None;
    let mut day = 0;
    let mut end = LifeEnd::MaxDays;
    let year_days = cfg.days_per_year.round() as usize;
    while day < cfg.max_days {
        if fade >= cfg.eol_fade {
            end = LifeEnd::EndOfLife;
            break;
        }
        let cap = nominal * (1.0 - fade);
        let n = match &scenario.distance {
            DailyDistance::Km(km) => (km * 1000.0 / profile.segment_l).round() as usize,
            DailyDistance::RangeOf(reference) => reference.range_segments(1.0, scenario.ending_soc, cap),
        };
        if n == usize::MAX {
            return Err(Error::InvalidParameter("the reference drive gains charge; its range is unbounded".into()));
        }
        let res = match simulate_day(profile, n, scenario.ending_soc, cap, k, cfg) {
            Ok((res, _)) => res,
            Err(Error::RangeExceeded(m)) if day == 0 => return Err(Error::RangeExceeded(format!("day 1: {m}"))),
            Err(Error::RangeExceeded(_)) => {
                end = LifeEnd::RangeExceeded;
                break;
            }
            Err(e) => return Err(e),
        };
        let range_km = profile.range_segments(1.0, scenario.ending_soc, cap) as f64 * profile.segment_l / 1000.0;
        curve.push(LifePoint { day, fade, distance_km: res.distance_km, range_km });
        fade += res.fade_ah / nominal;
        day += 1;
        if day == year_days {
            fade_one_year = Some(fade);
        }
        first_day.get_or_insert(res);
    }
    if end == LifeEnd::MaxDays && fade >= cfg.eol_fade {
        end = LifeEnd::EndOfLife;
    }
    let first_day = first_day.ok_or_else(|| Error::InvalidParameter("no day simulated".into()))?;
    Ok(LifeProjection {
        days: day,
        years: day as f64 / cfg.days_per_year,
        end,
        first_day,
        fade_one_year: fade_one_year.unwrap_or(fade),
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ramp(n: usize) -> SocTrace {
        SocTrace { points: (0..=n).map(|i| (i as f64, 1.0 - i as f64 / n as f64)).collect() }
    }

    #[test]
    fn ramp_moments() {
        for n in [1, 7, 100] {
            let s = soc_stats(&ramp(n)).unwrap();
            assert!((s.soc_avg - 0.5).abs() <= 1e-9);
            assert!((s.soc_dev - 1.0 / 12f64.sqrt()).abs() <= 1e-9);
        }
    }

    #[test]
    fn constant_soc_has_no_deviation() {
        let t = SocTrace { points: vec![(0.0, 0.6), (10.0, 0.6), (30.0, 0.6)] };
        let s = soc_stats(&t).unwrap();
        assert_eq!(s.soc_dev, 0.0);
        assert_relative_eq!(s.soc_avg, 0.6);
        assert!(matches!(soc_stats(&SocTrace::new(0.0, 0.5)), Err(Error::UndefinedStats)));
    }

    #[test]
    fn stats_bounded_for_extreme_cycles() {
        // Half the charge at 0, half at 1: the largest possible deviation.
        let t = SocTrace { points: vec![(0.0, 1.0), (1.0, 1.0), (1.0, 0.0), (2.0, 0.0)] };
        let s = soc_stats(&t).unwrap();
        assert_relative_eq!(s.soc_dev, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn calibration_reproduces_reference_rows() {
        let k = AgingParams::default();
        assert!(k.k1 > 0.0 && k.k3 > 0.0);
        for r in REFERENCE_ROWS {
            let s = CycleStats { soc_avg: r.soc_avg, soc_dev: r.soc_dev, q_processed: 1.0 };
            assert_relative_eq!(fading_rate(&s, &k), r.rate, max_relative = 1e-10);
        }
    }

    #[test]
    fn rate_formula_properties() {
        let k = AgingParams::default();
        let s0 = CycleStats { soc_avg: 0.4, soc_dev: 0.0, q_processed: 100.0 };
        assert_eq!(fading_rate(&s0, &k), k.k3);
        let lo = CycleStats { soc_avg: 0.3, soc_dev: 0.2, q_processed: 100.0 };
        let hi = CycleStats { soc_avg: 0.6, ..lo };
        assert!(fading_rate(&hi, &k) > fading_rate(&lo, &k));
        let double = CycleStats { q_processed: 200.0, ..lo };
        assert!((capacity_fade(&double, &k) - 2.0 * capacity_fade(&lo, &k)).abs() <= 1e-12);
        assert_eq!(capacity_fade(&CycleStats { q_processed: 0.0, ..lo }, &k), 0.0);
    }

    #[test]
    fn charge_example() {
        let (t, h) = simulate_charge(0.05, 1.0, 0.1, 312.5, 0.0).unwrap();
        assert_relative_eq!(t.last().unwrap().0, 296.875, epsilon = 1e-9);
        assert_relative_eq!(h, 9.5, epsilon = 1e-12);
        assert!(t.points.windows(2).all(|w| w[1].1 >= w[0].1));
        let (z, zh) = simulate_charge(0.4, 0.4, 0.1, 312.5, 5.0).unwrap();
        assert_eq!(z.points, vec![(5.0, 0.4)]);
        assert_eq!(zh, 0.0);
    }

    #[test]
    fn one_year_of_reference_cycles() {
        // 800 km days: 400.3 Ah driving from full to 4.88 %, then recharge.
        let k = AgingParams::default();
        let charge = (1.0 - 0.0488) * 312.5;
        let s = CycleStats { soc_avg: 0.53, soc_dev: 0.47, q_processed: 400.3 + charge };
        let year = 260.0 * capacity_fade(&s, &k) / 312.5;
        assert!((year - 0.1130).abs() <= 0.02 * 0.1130, "{year}");
    }

    fn split(d: f64, c: f64) -> SocSplit {
        SocSplit { discharge: d, charge: c, charge_first: false }
    }

    fn profile(segments: Vec<SocSplit>) -> DriveProfile {
        DriveProfile { segment_l: 50.0, segments, nominal_ah: 312.5 }
    }

    #[test]
    fn regeneration_adds_throughput() {
        let (k, cfg) = (AgingParams::default(), AgingConfig::default());
        let mono = profile(vec![split(0.001, 0.0); 10]);
        let regen = profile([split(0.003, 0.0), split(0.0, 0.001)].repeat(5));
        assert_relative_eq!(mono.net_ah(10), regen.net_ah(10), epsilon = 1e-12);
        let (a, _) = simulate_day(&mono, 10, 0.5, 312.5, &k, &cfg).unwrap();
        let (b, _) = simulate_day(&regen, 10, 0.5, 312.5, &k, &cfg).unwrap();
        assert!(b.stats.q_processed > a.stats.q_processed);
        assert_relative_eq!(a.charge_ah, b.charge_ah, epsilon = 1e-9);
    }

    #[test]
    fn rest_day_processes_no_charge() {
        let p = profile(vec![split(0.001, 0.0); 4]);
        let r = simulate_day(&p, 0, 0.5, 312.5, &AgingParams::default(), &AgingConfig::default());
        assert!(matches!(r, Err(Error::UndefinedStats)));
    }

    #[test]
    fn day_accounting() {
        let p = profile(vec![split(0.001, 0.0), split(0.0, 0.0002)]);
        let (k, cfg) = (AgingParams::default(), AgingConfig::default());
        let (d, trace) = simulate_day(&p, 1000, 0.1, 312.5, &k, &cfg).unwrap();
        assert_relative_eq!(d.soc_start, 0.1 + 500.0 * 0.0008, epsilon = 1e-12);
        assert_relative_eq!(d.drive_ah, 500.0 * 0.0012 * 312.5, epsilon = 1e-9);
        assert_relative_eq!(d.charge_ah, 500.0 * 0.0008 * 312.5, epsilon = 1e-9);
        assert_relative_eq!(d.stats.q_processed, d.drive_ah + d.charge_ah, epsilon = 1e-9);
        assert_relative_eq!(trace.last().unwrap().1, d.soc_start, epsilon = 1e-12);
        assert!(d.stats.soc_dev <= 0.5);
        assert!(d.stats.soc_avg >= d.soc_min && d.stats.soc_avg <= d.soc_start);
        // Too far for one charge.
        assert!(matches!(
            simulate_day(&p, 10_000, 0.1, 312.5, &k, &cfg),
            Err(Error::RangeExceeded(_))
        ));
    }

    #[test]
    fn range_segments_stops_before_the_floor() {
        let p = profile(vec![split(0.001, 0.0), split(0.0, 0.0005)]);
        let n = p.range_segments(1.0, 0.1, 312.5);
        let used = |n: usize| p.net_ah(n) / 312.5;
        assert!(1.0 - used(n) >= 0.1 - 1e-12);
        assert!(1.0 - used(n + 1) < 0.1 || 1.0 - used(n + 2) < 0.1);
    }

    #[test]
    fn range_leaves_headroom_for_early_regeneration() {
        let p = profile(vec![split(0.0, 0.002), split(0.003, 0.0)]);
        assert_relative_eq!(p.peak_regen_ah(), 0.002 * 312.5);
        let k = AgingParams::default();
        let n = p.range_segments(1.0, 0.2, 312.5);
        let (d, trace) = simulate_day(&p, n, 0.2, 312.5, &k, &AgingConfig::default()).unwrap();
        let peak = trace.points.iter().map(|q| q.1).fold(0.0, f64::max);
        assert!(peak <= 1.0 + 1e-12 && d.soc_start < 1.0);
        // One more segment would need more than a full pack.
        assert!(p.net_ah(n + 1) / 312.5 + 0.2 + p.peak_regen_ah() / 312.5 > 1.0);
    }

    #[test]
    fn degenerate_constants_give_closed_form_life() {
        let k = AgingParams { k1: 0.0, k2: 1.0, k3: 2e-4, k4: 0.0 };
        let p = profile(vec![split(0.001, 0.0); 100]);
        let cfg = AgingConfig::default();
        let life = project_life(&p, &DayScenario { distance: DailyDistance::Km(5.0), ending_soc: 0.2 }, &k, &cfg)
            .unwrap();
        // Each day processes 2 × 100 × 0.001 × 312.5 Ah regardless of capacity.
        let per_day: f64 = 2e-4 * 62.5 / 312.5;
        let exact = 0.3 / per_day;
        assert!((life.days as f64 - exact).abs() <= 1.0, "{} vs {exact}", life.days);
        assert_eq!(life.end, LifeEnd::EndOfLife);
    }

    #[test]
    fn identical_days_age_identically() {
        let p = profile(vec![split(0.002, 0.0), split(0.0, 0.0005)]);
        let (k, cfg) = (AgingParams::default(), AgingConfig::default());
        let (a, _) = simulate_day(&p, 400, 0.1, 300.0, &k, &cfg).unwrap();
        let (b, _) = simulate_day(&p, 400, 0.1, 300.0, &k, &cfg).unwrap();
        assert_eq!(a, b);
        let sc = DayScenario { distance: DailyDistance::Km(10.0), ending_soc: 0.1 };
        assert_eq!(project_life(&p, &sc, &k, &cfg).unwrap(), project_life(&p, &sc, &k, &cfg).unwrap());
    }

    #[test]
    fn more_daily_charge_shortens_life() {
        let p = profile(vec![split(0.001, 0.0); 100]);
        let (k, cfg) = (AgingParams::default(), AgingConfig::default());
        let short = project_life(&p, &DayScenario { distance: DailyDistance::Km(20.0), ending_soc: 0.3 }, &k, &cfg)
            .unwrap();
        let long = project_life(&p, &DayScenario { distance: DailyDistance::Km(25.0), ending_soc: 0.3 }, &k, &cfg)
            .unwrap();
        assert_eq!(short.end, LifeEnd::EndOfLife);
        assert!(long.days < short.days);
        // A distance the faded pack cannot cover ends the projection early.
        let far = project_life(&p, &DayScenario { distance: DailyDistance::Km(34.0), ending_soc: 0.3 }, &k, &cfg)
            .unwrap();
        assert_eq!(far.end, LifeEnd::RangeExceeded);
        assert!(short.curve.windows(2).all(|w| w[1].fade >= w[0].fade));
    }

    #[test]
    fn first_day_out_of_range_fails() {
        let p = profile(vec![split(0.01, 0.0); 10]);
        let r = project_life(
            &p,
            &DayScenario { distance: DailyDistance::Km(10.0), ending_soc: 0.1 },
            &AgingParams::default(),
            &AgingConfig::default(),
        );
        assert!(matches!(r, Err(Error::RangeExceeded(m)) if m.starts_with("day 1")));
    }

    #[test]
    fn trace_csv_round_trip() {
        let t = ramp(5);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("q_ah,soc\n"));
        assert_eq!(SocTrace::read_csv(buf.as_slice()).unwrap(), t);
    }
}
