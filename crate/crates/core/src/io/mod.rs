//! Scenario files, VTK snapshots and CSV time series.

pub mod scenario_file;
pub mod timeseries;
pub mod vtk;

pub use scenario_file::{parse_scenario, parse_scenario_str, scenario_to_string, write_scenario};
pub use timeseries::{write_timeseries, COLUMNS};
pub use vtk::{read_snapshot, write_snapshot, Snapshot};
