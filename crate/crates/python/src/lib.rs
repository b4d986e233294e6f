//! Python bindings: single-horizon solves, segment energy, aging features
//! and whole-scenario runs returning JSON.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ecotruck::aging::{self, AgingParams, CycleStats, SocTrace};
use ecotruck::scenarios::{run_comparison, Scenario, ScenarioConfig};
use ecotruck::{dynamics, solver, RoadSegment, SolverConfig, SpeedBounds, VehicleParams};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn road(slopes: &[f64], segment_l: f64) -> Vec<RoadSegment> {
    let mut h = 0.0;
    slopes
        .iter()
        .map(|&s| {
            let seg = RoadSegment::new(segment_l, s, h);
            h = seg.altitude_end_m();
            seg
        })
        .collect()
}

/// SOC change of one segment for the default truck (positive when discharging).
#[pyfunction]
#[pyo3(signature = (x_in, accel, length_m, slope_rad=0.0))]
fn soc_change(x_in: f64, accel: f64, length_m: f64, slope_rad: f64) -> PyResult<f64> {
    let seg = RoadSegment::new(length_m, slope_rad, 0.0);
    dynamics::soc_change(&VehicleParams::default(), &seg, x_in, accel).map_err(err)
}

/// ADMM solve over a road given by per-segment slopes (rad).
#[pyfunction]
#[pyo3(signature = (slopes, tau_s, lower_mps, upper_mps, segment_l=50.0))]
fn solve<'py>(
    py: Python<'py>,
    slopes: Vec<f64>,
    tau_s: f64,
    lower_mps: f64,
    upper_mps: f64,
    segment_l: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let road = road(&slopes, segment_l);
    let bounds = SpeedBounds::uniform(road.len() + 1, lower_mps, upper_mps);
    let r = solver::solve(&road, tau_s, &bounds, &VehicleParams::default(), &SolverConfig::default(), None, None)
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("speeds", r.traj.speeds)?;
    d.set_item("times", r.traj.times)?;
    d.set_item("energy", r.energy)?;
    d.set_item("iters", r.iters)?;
    d.set_item("converged", r.converged)?;
    Ok(d)
}

/// Charge-weighted `(soc_avg, soc_dev, q_processed)` of a `(Ah, SOC)` trace.
#[pyfunction]
fn soc_stats(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let s = aging::soc_stats(&SocTrace { points }).map_err(err)?;
    Ok((s.soc_avg, s.soc_dev, s.q_processed))
}

/// Ah faded per Ah processed under the default calibration.
#[pyfunction]
fn fading_rate(soc_avg: f64, soc_dev: f64) -> f64 {
    let s = CycleStats { soc_avg, soc_dev, q_processed: 1.0 };
    aging::fading_rate(&s, &AgingParams::default())
}

/// Runs ADMM-MPC against cruise control; returns the comparison report as JSON.
/// `config` is scenario TOML; the bundled scenario when omitted.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn compare(py: Python<'_>, config: Option<&str>) -> PyResult<String> {
    let c = match config {
        Some(t) => ScenarioConfig::from_toml(t).map_err(err)?,
        None => ScenarioConfig::default(),
    };
    py.detach(|| {
        let sc = Scenario::prepare(&c)?;
        let cmp = run_comparison(&sc)?;
        Ok::<_, ecotruck::Error>(serde_json::to_string(&cmp.report)?)
    })
    .map_err(err)
}

#[pymodule]
fn ecotruck_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(soc_change, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(soc_stats, m)?)?;
    m.add_function(wrap_pyfunction!(fading_rate, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
