//! Road ingestion and synthesis, the cruise-control baseline, scenario
//! configuration, controller comparison and the command-line front end.

pub mod cc;
pub mod cli;
pub mod config;
pub mod road;
pub mod run;

pub use cc::{cc_at_speed, cc_baseline, CcTarget};
pub use config::{Controller, DailySpec, ScenarioConfig};
pub use road::{grade_road, load_road, read_road, synth_road, RoadProfile, RoadSource, SynthSpec};
pub use run::{compare, run_batch, run_comparison, BatchReport, ComparisonReport, RunSummary, Scenario};
