//! Running controllers on a prepared scenario and summarising the results.
//!
//! Every summary carries a fingerprint: the SHA-256 of the road segments, the
//! scenario configuration (minus the controller list and display name) and
//! the traffic trace. Comparisons refuse summaries whose fingerprints differ.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aging::{self, AgingParams, DailyDistance, DayResult, DayScenario, DriveProfile, LifeEnd, LifePoint};
use crate::mpc::{self, RouteResult, TrafficInput};
use crate::objective::SpeedBounds;
use crate::traffic::{self, TrafficConfig, TrafficTrace};
use crate::{mps_to_kmh, Error, Result};

use super::cc::{cc_baseline, CcTarget};
use super::config::{Controller, DailySpec, ScenarioConfig};
use super::road::RoadProfile;

/// A configuration resolved into a concrete road, trip time and traffic.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub road: RoadProfile,
    pub tau_s: f64,
    pub legal: SpeedBounds,
    pub traffic: Option<(TrafficConfig, TrafficTrace)>,
    pub fingerprint: String,
}

impl Scenario {
    pub fn prepare(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let road = config.build_road()?;
        let tau_s = config.tau(road.length_m());
        let legal = config.legal_bounds(road.len());
        let traffic = match &config.traffic {
            None => None,
            Some(sec) => {
                let tc = sec.resolve(config.seed)?;
                let trace = match &sec.trace_file {
                    Some(p) => TrafficTrace::load(&config.resolve_path(p), road.segment_l())?,
                    None => traffic::generate_trace(road.len(), road.segment_l(), &tc)?,
                };
                if trace.len() < road.len() {
                    return Err(Error::Config(format!(
                        "traffic trace has {} segments, road has {}",
                        trace.len(),
                        road.len()
                    )));
                }
                Some((tc, trace))
            }
        };
        // Behind slower traffic a target speed cannot be held, so the time
        // budget follows the preceding vehicle where one is present.
        let tau_s = match (&traffic, config.time.target_speed_kmh) {
            (Some((_, trace)), Some(v)) if config.time.tau_s.is_none() => {
                traffic::reference_time(trace, road.len(), crate::kmh_to_mps(v))
            }
            _ => tau_s,
        };
        let length = road.length_m();
        let v_max = legal.upper.iter().copied().fold(f64::INFINITY, f64::min);
        let v_min = legal.lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if tau_s < length / v_max * (1.0 - 1e-9) || (v_min > 0.0 && tau_s > length / v_min * (1.0 + 1e-9)) {
            return Err(Error::BudgetExhausted { remaining_s: tau_s, remaining_m: length });
        }
        let fingerprint = fingerprint(config, &road, traffic.as_ref().map(|t| &t.1))?;
        Ok(Self { config: config.clone(), road, tau_s, legal, traffic, fingerprint })
    }

    fn traffic_input(&self) -> Option<TrafficInput<'_>> {
        self.traffic.as_ref().map(|(c, t)| TrafficInput { trace: t, h_tau_s: c.h_tau_s })
    }

    pub fn run(&self, controller: Controller) -> Result<RouteResult> {
        let c = &self.config;
        match controller {
            Controller::AdmmMpc => mpc::run_route(
                &self.road.segments,
                self.tau_s,
                &c.vehicle,
                &c.mpc,
                &c.solver,
                &self.legal,
                self.traffic_input(),
            ),
            Controller::Cc => cc_baseline(
                &self.road.segments,
                CcTarget::TripTime(self.tau_s),
                &c.vehicle,
                &self.legal,
                self.traffic_input(),
                c.mpc.initial_soc,
            ),
        }
    }

    /// Cruise control matched to the trip time the ADMM run actually took.
    pub fn run_cc_matched(&self, admm: &RouteResult) -> Result<RouteResult> {
        cc_baseline(
            &self.road.segments,
            CcTarget::TripTime(admm.trip_time()),
            &self.config.vehicle,
            &self.legal,
            self.traffic_input(),
            self.config.mpc.initial_soc,
        )
    }

    pub fn road_summary(&self) -> RoadSummary {
        RoadSummary {
            name: self.road.name.clone(),
            segments: self.road.len(),
            segment_l_m: self.road.segment_l(),
            length_km: self.road.length_m() / 1000.0,
            max_abs_slope_deg: self.road.max_abs_slope().to_degrees(),
            present_km: self.traffic.as_ref().map(|(_, t)| t.present_distance() / 1000.0),
        }
    }

    pub fn metrics(&self, controller: Controller, r: &RouteResult) -> Result<ControllerMetrics> {
        let profile = DriveProfile::from_speeds(&r.traj.speeds, &self.road.segments, &self.config.vehicle)?;
        let n = self.road.len();
        let iters = (!r.windows.is_empty()).then(|| IterStats::new(r.windows.iter().map(|w| w.iters).collect()));
        Ok(ControllerMetrics {
            controller: controller.as_str().into(),
            energy_soc: r.energy(),
            trip_time_s: r.trip_time(),
            mean_speed_kmh: mps_to_kmh(self.road.length_m() / r.trip_time()),
            net_ah: profile.net_ah(n),
            throughput_ah: profile.throughput_ah(n),
            final_soc: r.soc_trace.last().copied().unwrap_or(f64::NAN),
            min_headway_s: r.min_headway_s,
            windows: r.windows.len(),
            fallbacks: r.fallbacks(),
            resolves: r.windows.iter().filter(|w| w.resolved).count(),
            budget_clamps: r.windows.iter().filter(|w| w.budget_clamped).count(),
            iters,
        })
    }

    pub fn summary(&self, controller: Controller, r: &RouteResult) -> Result<RunSummary> {
        Ok(RunSummary {
            fingerprint: self.fingerprint.clone(),
            scenario: self.config.name.clone(),
            seed: self.config.seed,
            road: self.road_summary(),
            tau_s: self.tau_s,
            metrics: self.metrics(controller, r)?,
        })
    }
}

/// Hash of road + configuration + traffic trace. The controller list and
/// display name are excluded so that runs of different controllers on the
/// same scenario share a fingerprint.
pub fn fingerprint(config: &ScenarioConfig, road: &RoadProfile, trace: Option<&TrafficTrace>) -> Result<String> {
    let mut c = config.clone();
    c.controllers.clear();
    c.name.clear();
    let mut h = Sha256::new();
    h.update(b"road\0");
    for s in &road.segments {
        for v in [s.length_m, s.slope_rad, s.altitude_start_m] {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.update(b"config\0");
    h.update(serde_json::to_vec(&c)?);
    h.update(b"seed\0");
    h.update(c.seed.to_le_bytes());
    if let Some(t) = trace {
        h.update(b"traffic\0");
        for e in &t.entries {
            h.update([e.present as u8]);
            h.update(e.v_p_mps.to_bits().to_le_bytes());
            h.update(e.d_init_m.to_bits().to_le_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSummary {
    pub name: String,
    pub segments: usize,
    pub segment_l_m: f64,
    pub length_km: f64,
    pub max_abs_slope_deg: f64,
    /// Distance with a preceding vehicle, km.
    pub present_km: Option<f64>,
}

/// Distribution of outer ADMM iterations over the MPC windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterStats {
    pub median: f64,
    pub min: usize,
    pub max: usize,
    /// Window counts in `[0,20) [20,50) [50,100] (100,500] >500`.
    pub histogram: [usize; 5],
}

impl IterStats {
    pub fn new(mut iters: Vec<usize>) -> Self {
        iters.sort_unstable();
        let n = iters.len();
        let median = if n == 0 {
            f64::NAN
        } else if n % 2 == 1 {
            iters[n / 2] as f64
        } else {
            0.5 * (iters[n / 2 - 1] + iters[n / 2]) as f64
        };
        let mut histogram = [0; 5];
        for &k in &iters {
            let b = match k {
                0..20 => 0,
                20..50 => 1,
                50..=100 => 2,
                101..=500 => 3,
                _ => 4,
            };
            histogram[b] += 1;
        }
        Self { median, min: iters.first().copied().unwrap_or(0), max: iters.last().copied().unwrap_or(0), histogram }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerMetrics {
    pub controller: String,
    /// Net per-pack SOC consumed.
    pub energy_soc: f64,
    pub trip_time_s: f64,
    pub mean_speed_kmh: f64,
    /// Net charge drawn per pack, Ah.
    pub net_ah: f64,
    /// Charge processed per pack (discharge plus regeneration), Ah.
    pub throughput_ah: f64,
    pub final_soc: f64,
    pub min_headway_s: Option<f64>,
    pub windows: usize,
    pub fallbacks: usize,
    pub resolves: usize,
    pub budget_clamps: usize,
    pub iters: Option<IterStats>,
}

/// `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub fingerprint: String,
    pub scenario: String,
    pub seed: u64,
    pub road: RoadSummary,
    pub tau_s: f64,
    pub metrics: ControllerMetrics,
}

/// Percent changes `(admm − cc)/cc · 100`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub energy_pct: f64,
    pub trip_time_pct: f64,
    pub throughput_pct: f64,
    pub min_headway_pct: Option<f64>,
}

fn pct(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b) / b.abs() * 100.0
    }
}

/// `comparison.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub fingerprint: String,
    pub scenario: String,
    pub seed: u64,
    pub road: RoadSummary,
    pub tau_s: f64,
    pub admm: ControllerMetrics,
    pub cc: ControllerMetrics,
    pub deltas: Deltas,
}

/// Compares two runs of the same scenario; `a` plays the ADMM role.
pub fn compare(a: &RunSummary, b: &RunSummary) -> Result<ComparisonReport> {
    if a.fingerprint != b.fingerprint {
        return Err(Error::ScenarioMismatch(format!(
            "fingerprints differ ({} on {} vs {} on {})",
            &a.fingerprint[..12.min(a.fingerprint.len())],
            a.road.name,
            &b.fingerprint[..12.min(b.fingerprint.len())],
            b.road.name
        )));
    }
    let (x, y) = (&a.metrics, &b.metrics);
    Ok(ComparisonReport {
        fingerprint: a.fingerprint.clone(),
        scenario: a.scenario.clone(),
        seed: a.seed,
        road: a.road.clone(),
        tau_s: a.tau_s,
        admm: x.clone(),
        cc: y.clone(),
        deltas: Deltas {
            energy_pct: pct(x.energy_soc, y.energy_soc),
            trip_time_pct: pct(x.trip_time_s, y.trip_time_s),
            throughput_pct: pct(x.throughput_ah, y.throughput_ah),
            min_headway_pct: x.min_headway_s.zip(y.min_headway_s).map(|(p, q)| pct(p, q)),
        },
    })
}

/// Both controllers on one scenario, CC matched to the ADMM trip time.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub admm: RouteResult,
    pub cc: RouteResult,
}

pub fn run_comparison(sc: &Scenario) -> Result<Comparison> {
    let admm = sc.run(Controller::AdmmMpc)?;
    let cc = sc.run_cc_matched(&admm)?;
    let report = compare(&sc.summary(Controller::AdmmMpc, &admm)?, &sc.summary(Controller::Cc, &cc)?)?;
    Ok(Comparison { report, admm, cc })
}

/// Plot-ready per-boundary series for both controllers.
pub fn write_series<W: Write>(w: W, road: &RoadProfile, admm: &RouteResult, cc: &RouteResult) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["segment_index", "position_m", "altitude_m", "x_admm_mps", "x_cc_mps", "soc_admm", "soc_cc"])?;
    let h = road.altitudes();
    let l = road.segment_l();
    for i in 0..h.len() {
        wr.write_record([
            i.to_string(),
            (i as f64 * l).to_string(),
            h[i].to_string(),
            admm.traj.speeds[i].to_string(),
            cc.traj.speeds[i].to_string(),
            admm.soc_trace[i].to_string(),
            cc.soc_trace[i].to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Mean and three standard deviations (sample) of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSpread {
    pub mean: f64,
    pub three_sigma: f64,
}

impl MeanSpread {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean, three_sigma: 3.0 * var.sqrt() }
    }
}

impl std::fmt::Display for MeanSpread {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:+.2}% ± {:.2}%", self.mean, self.three_sigma)
    }
}

/// `batch.json`: one comparison per traffic seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<ComparisonReport>,
    pub energy_delta: MeanSpread,
    pub trip_time_delta: MeanSpread,
    pub throughput_delta: MeanSpread,
    /// Smallest headway met by either controller in any run, s.
    pub min_headway_s: Option<f64>,
}

/// Runs the comparison for every seed concurrently. The per-seed results
/// are returned in seed order.
pub fn run_batch(config: &ScenarioConfig, seeds: &[u64]) -> Result<(BatchReport, Vec<(Scenario, Comparison)>)> {
    if seeds.is_empty() {
        return Err(Error::Config("batch needs at least one seed".into()));
    }
    let results = seeds
        .par_iter()
        .map(|&seed| {
            let sc = Scenario::prepare(&ScenarioConfig { seed, ..config.clone() })?;
            let cmp = run_comparison(&sc)?;
            Ok((sc, cmp))
        })
        .collect::<Result<Vec<_>>>()?;
    let runs: Vec<ComparisonReport> = results.iter().map(|(_, c)| c.report.clone()).collect();
    let pick = |f: fn(&Deltas) -> f64| MeanSpread::of(&runs.iter().map(|r| f(&r.deltas)).collect::<Vec<_>>());
    let min_headway_s = runs
        .iter()
        .flat_map(|r| [r.admm.min_headway_s, r.cc.min_headway_s])
        .flatten()
        .reduce(f64::min);
    let report = BatchReport {
        scenario: config.name.clone(),
        seeds: seeds.to_vec(),
        energy_delta: pick(|d| d.energy_pct),
        trip_time_delta: pick(|d| d.trip_time_pct),
        throughput_delta: pick(|d| d.throughput_pct),
        min_headway_s,
        runs,
    };
    Ok((report, results))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerLife {
    pub controller: String,
    pub first_day: DayResult,
    pub fade_one_year: f64,
    pub days: usize,
    pub years: f64,
    pub end: LifeEnd,
    /// Every `curve_every`-th day plus the last one.
    pub curve: Vec<LifePoint>,
}

/// `aging.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingReport {
    pub fingerprint: String,
    pub model: AgingParams,
    pub ending_soc: f64,
    pub daily: DailySpec,
    pub curve_every: usize,
    pub controllers: Vec<ControllerLife>,
}

const CURVE_EVERY: usize = 5;

/// Projects battery life for each run. Under `matched_range` every
/// controller drives, each day, the distance the cruise-control drive
/// (`reference`) would cover from a full charge to the ending SOC.
pub fn aging_report(sc: &Scenario, runs: &[(Controller, &RouteResult)], reference: &RouteResult) -> Result<AgingReport> {
    let c = &sc.config;
    let k = c.aging_params()?;
    let road = &sc.road.segments;
    let distance = match c.aging.daily {
        DailySpec::Km(km) => DailyDistance::Km(km),
        DailySpec::MatchedRange => {
            DailyDistance::RangeOf(DriveProfile::from_speeds(&reference.traj.speeds, road, &c.vehicle)?)
        }
    };
    let scenario = DayScenario { distance, ending_soc: c.aging.ending_soc };
    let controllers = runs
        .iter()
        .map(|&(ctl, r)| {
            let profile = DriveProfile::from_speeds(&r.traj.speeds, road, &c.vehicle)?;
            let life = aging::project_life(&profile, &scenario, &k, &c.aging.sim)?;
            let last = life.curve.len().saturating_sub(1);
            let curve = life
                .curve
                .iter()
                .enumerate()
                .filter(|(i, _)| i % CURVE_EVERY == 0 || *i == last)
                .map(|(_, p)| *p)
                .collect();
            Ok(ControllerLife {
                controller: ctl.as_str().into(),
                first_day: life.first_day,
                fade_one_year: life.fade_one_year,
                days: life.days,
                years: life.years,
                end: life.end,
                curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AgingReport {
        fingerprint: sc.fingerprint.clone(),
        model: k,
        ending_soc: c.aging.ending_soc,
        daily: c.aging.daily,
        curve_every: CURVE_EVERY,
        controllers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::road::SynthSpec;

    fn small(seed: u64) -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.road.synthetic = Some(SynthSpec { length_km: 3.0, seed, ..Default::default() });
        c
    }

    #[test]
    fn identical_runs_have_zero_deltas() {
        let sc = Scenario::prepare(&small(1)).unwrap();
        let r = sc.run(Controller::Cc).unwrap();
        let s = sc.summary(Controller::Cc, &r).unwrap();
        let rep = compare(&s, &s).unwrap();
        assert_eq!(rep.deltas.energy_pct, 0.0);
        assert_eq!(rep.deltas.trip_time_pct, 0.0);
        assert_eq!(rep.deltas.throughput_pct, 0.0);
    }

    #[test]
    fn mismatched_fingerprints_are_refused() {
        let a = Scenario::prepare(&small(1)).unwrap();
        let b = Scenario::prepare(&small(2)).unwrap();
        assert_ne!(a.fingerprint, b.fingerprint);
        let ra = a.run(Controller::Cc).unwrap();
        let rb = b.run(Controller::Cc).unwrap();
        let e = compare(&a.summary(Controller::Cc, &ra).unwrap(), &b.summary(Controller::Cc, &rb).unwrap());
        assert!(matches!(e, Err(Error::ScenarioMismatch(_))));
    }

    #[test]
    fn fingerprint_ignores_controllers_but_not_seed() {
        let mut c = small(1);
        let f0 = Scenario::prepare(&c).unwrap().fingerprint;
        c.controllers = vec![Controller::Cc];
        c.name = "other".into();
        assert_eq!(Scenario::prepare(&c).unwrap().fingerprint, f0);
        c.seed = 9;
        assert_ne!(Scenario::prepare(&c).unwrap().fingerprint, f0);
    }

    #[test]
    fn hilly_road_admm_saves_energy() {
        let sc = Scenario::prepare(&small(1)).unwrap();
        let cmp = run_comparison(&sc).unwrap();
        assert!(cmp.report.deltas.trip_time_pct.abs() < 0.1);
        assert!(cmp.report.deltas.energy_pct < 0.0, "{:?}", cmp.report.deltas);
    }

    #[test]
    fn mean_spread() {
        let m = MeanSpread::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.three_sigma - 3.0).abs() < 1e-12);
        assert_eq!(MeanSpread::of(&[4.0]).three_sigma, 0.0);
    }

    #[test]
    fn iter_stats() {
        let s = IterStats::new(vec![5, 60, 30, 700, 100, 101]);
        assert_eq!(s.median, 80.0);
        assert_eq!(s.histogram, [1, 1, 2, 1, 1]);
    }
}
