//! Experiment runner: configuration, the range example, the attitude Monte
//! Carlo campaign, timing benchmarks and CSV output.

mod attitude;
mod bench;
mod config;
mod output;
mod toy;

pub use attitude::{run_attitude_mc, AttitudeSetup, MCSummary, MethodSummary, RunTrace};
pub use bench::{bench_timing, loglog_slope, TimingRow, TimingTable};
pub use config::{RunMethod, Scenario, ScenarioConfig};
pub use output::{write_attitude_csv, write_timing_csv, write_toy_csv};
pub use toy::{rms_discrepancy, ring_fraction, run_toy, ToyResult};
