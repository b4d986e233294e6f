//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 infeasible scenario,
//! 3 non-convergence (outputs are still written).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::mpc::RouteResult;
use crate::objective::{total_energy, Trajectory};
use crate::solver::{self, brute_force_oracle};
use crate::traffic::{self, TrafficConfig};
use crate::{Error, Result};

use super::config::{Controller, ScenarioConfig};
use super::road::{synth_road, SynthSpec};
use super::run::{self, aging_report, compare, run_batch, run_comparison, RunSummary, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NONCONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ecotruck", version, about = "Energy-minimal speed planning for battery-electric trucks")]
pub struct Cli {
    /// Scenario file (TOML); the bundled 20 km hilly scenario when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Traffic seed (road seed for synth-road).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write timing.json with wall-clock solve times.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerArg {
    AdmmMpc,
    Cc,
}

impl From<ControllerArg> for Controller {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::AdmmMpc => Controller::AdmmMpc,
            ControllerArg::Cc => Controller::Cc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Heavy,
    Light,
    Normal,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-horizon ADMM solve over part of the road.
    Optimize {
        /// Number of segments in the horizon (default: mpc.horizon_n).
        #[arg(long)]
        segments: Option<usize>,
        /// First segment of the horizon.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Also run the brute-force grid oracle (at most 6 segments).
        #[arg(long)]
        oracle: bool,
        /// Oracle speed grid, m/s.
        #[arg(long, default_value_t = 0.25)]
        grid: f64,
        /// Oracle trip-time tolerance, s.
        #[arg(long, default_value_t = 0.5)]
        time_tol: f64,
    },
    /// Receding-horizon run over the whole road.
    Mpc {
        #[arg(long, value_enum, default_value = "admm-mpc")]
        controller: ControllerArg,
    },
    /// Generate a stochastic traffic trace for the scenario road.
    TrafficGen {
        /// Overrides the scenario's traffic section.
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long)]
        segments: Option<usize>,
    },
    /// Battery life projection for the scenario's controllers.
    Aging,
    /// Compare ADMM-MPC with cruise control, or two existing summary.json files.
    Compare {
        /// Two summary.json files (ADMM first); runs the scenario when omitted.
        #[arg(num_args = 2, value_names = ["ADMM_SUMMARY", "CC_SUMMARY"])]
        summaries: Vec<PathBuf>,
        /// Run this many traffic seeds starting at --seed and report mean and 3σ.
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Write a synthetic rolling-hills road as CSV.
    SynthRoad {
        #[arg(long, default_value_t = 20.0)]
        length_km: f64,
        #[arg(long, default_value_t = 40.0)]
        amplitude_m: f64,
        #[arg(long, default_value_t = 4.0)]
        wavelength_km: f64,
        #[arg(long, default_value_t = 0.05)]
        roughness: f64,
        #[arg(long, default_value_t = 50.0)]
        segment_l: f64,
    },
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InfeasibleKinematics { .. }
        | Error::DegenerateSegment
        | Error::NoFeasiblePoint
        | Error::BudgetExhausted { .. }
        | Error::Collision { .. }
        | Error::SocOutOfRange { .. }
        | Error::RangeExceeded(_) => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut c = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn out_path(cli: &Cli, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cli.out_dir)?;
    Ok(cli.out_dir.join(name))
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, v)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// `trajectory.csv`: one row per boundary; the last row has no segment time
/// or SOC change.
pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory, soc_deltas: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["segment_index", "x_mps", "t_s", "soc_delta"])?;
    for (i, x) in traj.speeds.iter().enumerate() {
        let t = traj.times.get(i).map_or(String::new(), f64::to_string);
        let d = soc_deltas.get(i).map_or(String::new(), f64::to_string);
        wr.write_record([i.to_string(), x.to_string(), t, d])?;
    }
    wr.flush()?;
    Ok(())
}

fn save_trajectory(path: &Path, r: &RouteResult) -> Result<()> {
    write_trajectory(std::fs::File::create(path)?, &r.traj, &r.soc_deltas)
}

#[derive(Serialize)]
struct WindowTiming {
    start: usize,
    iters: usize,
    solve_time_s: f64,
}

#[derive(Serialize)]
struct Timing {
    total_s: f64,
    runs: Vec<(String, Vec<WindowTiming>)>,
}

fn write_timing(cli: &Cli, clock: Instant, runs: &[(&str, &RouteResult)]) -> Result<()> {
    if !cli.timing {
        return Ok(());
    }
    let t = Timing {
        total_s: clock.elapsed().as_secs_f64(),
        runs: runs
            .iter()
            .map(|(n, r)| {
                let w = r
                    .windows
                    .iter()
                    .map(|w| WindowTiming { start: w.start, iters: w.iters, solve_time_s: w.solve_time_s })
                    .collect();
                (n.to_string(), w)
            })
            .collect(),
    };
    write_json(&out_path(cli, "timing.json")?, &t)
}

fn execute(cli: &Cli) -> Result<i32> {
    let clock = Instant::now();
    match &cli.command {
        Command::SynthRoad { length_km, amplitude_m, wavelength_km, roughness, segment_l } => {
            let spec = SynthSpec {
                length_km: *length_km,
                hill_amplitude_m: *amplitude_m,
                hill_wavelength_km: *wavelength_km,
                seed: cli.seed.unwrap_or(SynthSpec::default().seed),
                roughness: *roughness,
                segment_l: *segment_l,
            };
            let road = synth_road(&spec)?;
            let path = out_path(cli, "road.csv")?;
            road.save(&path)?;
            println!(
                "{}: {} segments, max slope {:.3}°, written to {}",
                road.name,
                road.len(),
                road.max_abs_slope().to_degrees(),
                path.display()
            );
            Ok(EXIT_OK)
        }
        Command::TrafficGen { preset, segments } => {
            let c = load_config(cli)?;
            let road = c.build_road()?;
            let n = segments.unwrap_or(road.len());
            let tc = match (preset, &c.traffic) {
                (Some(PresetArg::Heavy), _) => TrafficConfig::heavy(c.seed),
                (Some(PresetArg::Light), _) => TrafficConfig::light(c.seed),
                (Some(PresetArg::Normal), _) => TrafficConfig::normal(c.seed),
                (None, Some(sec)) => sec.resolve(c.seed)?,
                (None, None) => TrafficConfig::normal(c.seed),
            };
            let trace = traffic::generate_trace(n, road.segment_l(), &tc)?;
            let path = out_path(cli, "traffic.csv")?;
            trace.save(&path)?;
            println!(
                "{n} segments, preceding vehicle over {:.2} of {:.2} km, written to {}",
                trace.present_distance() / 1000.0,
                n as f64 * road.segment_l() / 1000.0,
                path.display()
            );
            Ok(EXIT_OK)
        }
        Command::Optimize { segments, start, oracle, grid, time_tol } => {
            let c = load_config(cli)?;
            let sc = Scenario::prepare(&c)?;
            let n = segments.unwrap_or(c.mpc.horizon_n);
            if n == 0 || start + n > sc.road.len() {
                return Err(Error::Config(format!(
                    "horizon {start}..{} does not fit the {}-segment road",
                    start + n,
                    sc.road.len()
                )));
            }
            if *oracle && n > 6 {
                return Err(Error::Config(format!("the oracle enumerates the grid; use at most 6 segments, not {n}")));
            }
            let window = &sc.road.segments[*start..start + n];
            let length: f64 = window.iter().map(|s| s.length_m).sum();
            let tau = sc.tau_s * length / sc.road.length_m();
            let bounds = c.legal_bounds(n);
            let res = solver::solve(window, tau, &bounds, &c.vehicle, &c.solver, None, None)?;
            let soc_deltas = crate::mpc::segment_soc_deltas(&res.traj.speeds, window, &c.vehicle)?;
            save_trajectory_raw(cli, &res.traj, &soc_deltas)?;
            let oracle_out = if *oracle {
                let (x, e) = brute_force_oracle(window, tau, &bounds, &c.vehicle, *grid, *time_tol)?;
                Some(OracleSummary { energy_soc: e, gap_pct: (res.energy - e) / e.abs() * 100.0, speeds: x })
            } else {
                None
            };
            let summary = OptimizeSummary {
                fingerprint: sc.fingerprint.clone(),
                start: *start,
                segments: n,
                tau_s: tau,
                energy_soc: total_energy(&res.traj.speeds, window, &c.vehicle)?,
                trip_time_s: res.traj.trip_time(),
                iters: res.iters,
                converged: res.converged,
                final_residual: res.residual_history.last().copied().unwrap_or(f64::NAN),
                oracle: oracle_out,
            };
            write_json(&out_path(cli, "summary.json")?, &summary)?;
            if cli.timing {
                let t = serde_json::json!({ "total_s": clock.elapsed().as_secs_f64() });
                write_json(&out_path(cli, "timing.json")?, &t)?;
            }
            println!("admm energy:   {:.9e} SOC ({} iterations, converged: {})", summary.energy_soc, res.iters, res.converged);
            if let Some(o) = &summary.oracle {
                println!("oracle energy: {:.9e} SOC", o.energy_soc);
                println!("gap:           {:+.4}%", o.gap_pct);
            }
            Ok(if res.converged { EXIT_OK } else { EXIT_NONCONVERGED })
        }
        Command::Mpc { controller } => {
            let c = load_config(cli)?;
            let sc = Scenario::prepare(&c)?;
            let ctl: Controller = (*controller).into();
            let r = sc.run(ctl)?;
            save_trajectory(&out_path(cli, "trajectory.csv")?, &r)?;
            let summary = sc.summary(ctl, &r)?;
            write_json(&out_path(cli, "summary.json")?, &summary)?;
            let reference = match ctl {
                Controller::Cc => r.clone(),
                Controller::AdmmMpc => sc.run_cc_matched(&r)?,
            };
            // A drive that gains charge has no daily cycle to age on.
            let aging = match aging_report(&sc, &[(ctl, &r)], &reference) {
                Ok(a) => {
                    write_json(&out_path(cli, "aging.json")?, &a)?;
                    Some(a)
                }
                Err(Error::InvalidParameter(msg)) => {
                    eprintln!("aging skipped: {msg}");
                    None
                }
                Err(e) => return Err(e),
            };
            write_timing(cli, clock, &[(ctl.as_str(), &r)])?;
            let m = &summary.metrics;
            println!(
                "{}: {:.6} SOC, {:.1} s (target {:.1} s), {:.2} Ah processed, {} windows, {} fallbacks",
                m.controller, m.energy_soc, m.trip_time_s, sc.tau_s, m.throughput_ah, m.windows, m.fallbacks
            );
            if let Some(life) = aging.as_ref().and_then(|a| a.controllers.first()) {
                println!("aging: {:.3}% fade after one year, {:.2} years to end of life", life.fade_one_year * 100.0, life.years);
            }
            Ok(if m.fallbacks > 0 { EXIT_NONCONVERGED } else { EXIT_OK })
        }
        Command::Aging => {
            let c = load_config(cli)?;
            let sc = Scenario::prepare(&c)?;
            let has_admm = c.controllers.contains(&Controller::AdmmMpc);
            let admm = if has_admm { Some(sc.run(Controller::AdmmMpc)?) } else { None };
            let cc = match &admm {
                Some(a) => sc.run_cc_matched(a)?,
                None => sc.run(Controller::Cc)?,
            };
            let mut runs = Vec::new();
            for &ctl in &c.controllers {
                match ctl {
                    Controller::AdmmMpc => runs.push((ctl, admm.as_ref().expect("admm ran"))),
                    Controller::Cc => runs.push((ctl, &cc)),
                }
            }
            let rep = aging_report(&sc, &runs, &cc)?;
            write_json(&out_path(cli, "aging.json")?, &rep)?;
            for l in &rep.controllers {
                println!(
                    "{:>8}: {:.1} km/day, {:.2} Ah/day, fade {:.3}%/year, {:.2} years ({:?})",
                    l.controller,
                    l.first_day.distance_km,
                    l.first_day.stats.q_processed,
                    l.fade_one_year * 100.0,
                    l.years,
                    l.end
                );
            }
            Ok(EXIT_OK)
        }
        Command::Compare { summaries, batch } => {
            if !summaries.is_empty() {
                if batch.is_some() {
                    return Err(Error::Config("--batch runs the scenario; it cannot compare existing summaries".into()));
                }
                let read = |p: &Path| -> Result<RunSummary> {
                    let f = std::fs::File::open(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    serde_json::from_reader(f).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
                };
                let rep = compare(&read(&summaries[0])?, &read(&summaries[1])?)?;
                write_json(&out_path(cli, "comparison.json")?, &rep)?;
                print_deltas(&rep.deltas);
                return Ok(EXIT_OK);
            }
            let c = load_config(cli)?;
            if let Some(k) = batch {
                if *k == 0 {
                    return Err(Error::Config("--batch needs at least one seed".into()));
                }
                let seeds: Vec<u64> = (0..*k as u64).map(|i| c.seed + i).collect();
                let (rep, results) = run_batch(&c, &seeds)?;
                for (sc, cmp) in &results {
                    let dir = cli.out_dir.join(format!("seed_{}", sc.config.seed));
                    std::fs::create_dir_all(&dir)?;
                    write_json(&dir.join("comparison.json"), &cmp.report)?;
                    run::write_series(std::fs::File::create(dir.join("series.csv"))?, &sc.road, &cmp.admm, &cmp.cc)?;
                }
                write_json(&out_path(cli, "batch.json")?, &rep)?;
                if cli.timing {
                    let runs: Vec<(String, &RouteResult)> =
                        results.iter().map(|(sc, cmp)| (format!("seed_{}", sc.config.seed), &cmp.admm)).collect();
                    let refs: Vec<(&str, &RouteResult)> = runs.iter().map(|(n, r)| (n.as_str(), *r)).collect();
                    write_timing(cli, clock, &refs)?;
                }
                println!("{} seeds (mean ± 3σ, ADMM vs CC)", seeds.len());
                println!("energy:     {}", rep.energy_delta);
                println!("trip time:  {}", rep.trip_time_delta);
                println!("throughput: {}", rep.throughput_delta);
                if let Some(h) = rep.min_headway_s {
                    println!("min headway: {h:.3} s");
                }
                let fallbacks: usize = rep.runs.iter().map(|r| r.admm.fallbacks).sum();
                return Ok(if fallbacks > 0 { EXIT_NONCONVERGED } else { EXIT_OK });
            }
            let sc = Scenario::prepare(&c)?;
            let cmp = run_comparison(&sc)?;
            write_json(&out_path(cli, "comparison.json")?, &cmp.report)?;
            run::write_series(std::fs::File::create(out_path(cli, "series.csv")?)?, &sc.road, &cmp.admm, &cmp.cc)?;
            write_timing(cli, clock, &[("admm_mpc", &cmp.admm), ("cc", &cmp.cc)])?;
            print_deltas(&cmp.report.deltas);
            Ok(if cmp.report.admm.fallbacks > 0 { EXIT_NONCONVERGED } else { EXIT_OK })
        }
    }
}

fn save_trajectory_raw(cli: &Cli, traj: &Trajectory, soc_deltas: &[f64]) -> Result<()> {
    write_trajectory(std::fs::File::create(out_path(cli, "trajectory.csv")?)?, traj, soc_deltas)
}

fn print_deltas(d: &run::Deltas) {
    println!("energy:     {:+.3}%", d.energy_pct);
    println!("trip time:  {:+.3}%", d.trip_time_pct);
    println!("throughput: {:+.3}%", d.throughput_pct);
    if let Some(h) = d.min_headway_pct {
        println!("min headway: {h:+.3}%");
    }
}

#[derive(Debug, Serialize)]
struct OracleSummary {
    energy_soc: f64,
    /// `(admm − oracle)/|oracle|`, percent.
    gap_pct: f64,
    speeds: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct OptimizeSummary {
    fingerprint: String,
    start: usize,
    segments: usize,
    tau_s: f64,
    energy_soc: f64,
    trip_time_s: f64,
    iters: usize,
    converged: bool,
    final_residual: f64,
    oracle: Option<OracleSummary>,
}
