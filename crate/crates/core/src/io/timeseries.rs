//! CSV time series of mass partition and plume metrics.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulation::Sample;

/// Column names. New columns are only ever appended.
pub const COLUMNS: [&str; 9] = [
    "time_s",
    "total_kg",
    "pool_kg",
    "ganglia_kg",
    "injected_kg",
    "front_depth_m",
    "lateral_extent_m",
    "max_sn",
    "mass_error_rel",
];

pub fn timeseries_row(s: &Sample) -> String {
    let p = &s.partition;
    format!(
        "{},{},{},{},{},{},{},{},{}",
        p.time,
        p.total_mass,
        p.pool_mass,
        p.ganglia_mass,
        p.injected_to_date,
        s.metrics.front_depth,
        s.metrics.max_lateral_extent(),
        s.metrics.max_sn,
        s.mass_error
    )
}

pub fn timeseries_to_string(samples: &[Sample]) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    for s in samples {
        let _ = writeln!(out, "{}", timeseries_row(s));
    }
    out
}

pub fn write_timeseries(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, timeseries_to_string(samples)).map_err(|e| Error::io(path, e))
}
