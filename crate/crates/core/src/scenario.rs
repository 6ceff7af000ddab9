//! Full description of one infiltration experiment.
//!
//! The serde layout of [`Scenario`] is the on-disk scenario format: every
//! key carries its SI unit as a suffix and unknown keys are rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constitutive::{FluidProperties, MaterialProperties};
use crate::error::ValidationIssue;
use crate::grid::{Side, MaterialId};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub grid: GridSpec,
    pub fluids: Fluids,
    /// Material table keyed by name; ids follow name order.
    pub materials: BTreeMap<String, MaterialSpec>,
    pub layout: Layout,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub injection: Vec<Injection>,
    #[serde(default)]
    pub initial: InitialSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub solver: SolverControls,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub extents_m: Vec<f64>,
    pub cells: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_m: Option<Vec<f64>>,
    #[serde(default = "default_gravity")]
    pub gravity_m_per_s2: f64,
}

fn default_gravity() -> f64 {
    9.81
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fluids {
    #[serde(default = "water")]
    pub wetting: FluidSpec,
    #[serde(default = "pce")]
    pub non_wetting: FluidSpec,
}

fn water() -> FluidSpec {
    FluidSpec::from(FluidProperties::WATER)
}

fn pce() -> FluidSpec {
    FluidSpec::from(FluidProperties::PCE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidSpec {
    pub density_kg_per_m3: f64,
    pub viscosity_pa_s: f64,
}

impl From<FluidProperties> for FluidSpec {
    fn from(f: FluidProperties) -> Self {
        Self {
            density_kg_per_m3: f.density,
            viscosity_pa_s: f.viscosity,
        }
    }
}

impl From<FluidSpec> for FluidProperties {
    fn from(f: FluidSpec) -> Self {
        Self {
            density: f.density_kg_per_m3,
            viscosity: f.viscosity_pa_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub permeability_m2: f64,
    pub porosity: f64,
    pub residual_wetting_saturation: f64,
    pub residual_non_wetting_saturation: f64,
    pub entry_pressure_pa: f64,
    pub pore_size_index: f64,
}

impl From<MaterialSpec> for MaterialProperties {
    fn from(m: MaterialSpec) -> Self {
        Self {
            permeability: m.permeability_m2,
            porosity: m.porosity,
            s_wr: m.residual_wetting_saturation,
            s_nr: m.residual_non_wetting_saturation,
            p_entry: m.entry_pressure_pa,
            lambda: m.pore_size_index,
        }
    }
}

impl From<MaterialProperties> for MaterialSpec {
    fn from(m: MaterialProperties) -> Self {
        Self {
            permeability_m2: m.permeability,
            porosity: m.porosity,
            residual_wetting_saturation: m.s_wr,
            residual_non_wetting_saturation: m.s_nr,
            entry_pressure_pa: m.p_entry,
            pore_size_index: m.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub background: String,
    /// Later regions override earlier ones.
    #[serde(default)]
    pub regions: Vec<RegionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
    pub material: String,
    pub min_m: Vec<f64>,
    pub max_m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    /// Domain sides held at hydrostatic water pressure, e.g. `"x_min"`.
    #[serde(default)]
    pub hydrostatic: Vec<String>,
    /// Water pressure at the domain top.
    #[serde(default)]
    pub top_pressure_pa: f64,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            hydrostatic: Vec::new(),
            top_pressure_pa: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Wetting,
    NonWetting,
}

/// Fixed-rate injection into the cells whose centers lie in a box, active on `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub phase: Phase,
    pub min_m: Vec<f64>,
    pub max_m: Vec<f64>,
    pub rate_kg_per_s: f64,
    #[serde(default)]
    pub start_s: f64,
    pub end_s: f64,
}

impl Injection {
    pub fn is_active(&self, t: f64) -> bool {
        self.start_s <= t && t < self.end_s
    }

    /// Mass injected over `[0, t]`.
    pub fn mass_to(&self, t: f64) -> f64 {
        let overlap = (t.min(self.end_s) - self.start_s).max(0.0);
        self.rate_kg_per_s * overlap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default = "default_initial_sn")]
    pub non_wetting_saturation: f64,
}

fn default_initial_sn() -> f64 {
    0.001
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            non_wetting_saturation: default_initial_sn(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub end_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub report_times_s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_interval_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverControls {
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_initial_dt")]
    pub initial_timestep_s: f64,
    #[serde(default = "default_growth")]
    pub max_growth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_timestep_s: Option<f64>,
    /// Saturation steps per pressure solve.
    #[serde(default = "default_pressure_every")]
    pub pressure_every: usize,
    /// Include capillary pressure gradients in the phase fluxes.
    #[serde(default = "default_true")]
    pub capillarity: bool,
    /// Take the capillary flux at the end of each step instead of the start.
    #[serde(default = "default_true")]
    pub implicit_capillarity: bool,
}

fn default_cfl() -> f64 {
    0.5
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_max_iterations() -> usize {
    20_000
}
fn default_initial_dt() -> f64 {
    1e-7
}
fn default_growth() -> f64 {
    1.25
}
fn default_pressure_every() -> usize {
    1
}
fn default_true() -> bool {
    true
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            cfl: default_cfl(),
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            initial_timestep_s: default_initial_dt(),
            max_growth: default_growth(),
            max_timestep_s: None,
            pressure_every: default_pressure_every(),
            capillarity: true,
            implicit_capillarity: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "default_pool")]
    pub pool_threshold: f64,
    #[serde(default = "default_floor")]
    pub ganglia_floor: f64,
    #[serde(default = "default_detection")]
    pub detection_threshold: f64,
}

fn default_pool() -> f64 {
    0.16
}
fn default_floor() -> f64 {
    0.01
}
fn default_detection() -> f64 {
    0.01
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            pool_threshold: default_pool(),
            ganglia_floor: default_floor(),
            detection_threshold: default_detection(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub snapshots: bool,
    #[serde(default)]
    pub ascii: bool,
}

/// Names of the axes for a grid of `ndim` dimensions; the last is vertical.
pub fn axis_names(ndim: usize) -> &'static [&'static str] {
    match ndim {
        1 => &["z"],
        2 => &["x", "z"],
        _ => &["x", "y", "z"],
    }
}

/// Parses a side name such as `"x_min"` into an axis and side.
pub fn parse_side(name: &str, ndim: usize) -> Option<(usize, Side)> {
    let (axis, side) = name.split_once('_')?;
    let side = match side {
        "min" => Side::Min,
        "max" => Side::Max,
        _ => return None,
    };
    let axis = axis_names(ndim).iter().position(|a| *a == axis)?;
    Some((axis, side))
}

impl Scenario {
    pub fn material_names(&self) -> Vec<&str> {
        self.materials.keys().map(String::as_str).collect()
    }

    pub fn material_id(&self, name: &str) -> Option<MaterialId> {
        self.materials.keys().position(|k| k == name).map(MaterialId)
    }

    pub fn material_table(&self) -> Vec<MaterialProperties> {
        self.materials.values().map(|&m| m.into()).collect()
    }

    pub fn wetting(&self) -> FluidProperties {
        self.fluids.wetting.into()
    }

    pub fn non_wetting(&self) -> FluidProperties {
        self.fluids.non_wetting.into()
    }

    /// Times at which results are sampled, ending with the end time.
    pub fn report_schedule(&self) -> Vec<f64> {
        let end = self.time.end_s;
        let mut times: Vec<f64> = self.time.report_times_s.iter().copied().filter(|&t| t > 0.0 && t < end).collect();
        if let Some(dt) = self.time.report_interval_s {
            if dt > 0.0 {
                let mut k = 1u64;
                loop {
                    let t = k as f64 * dt;
                    if t >= end {
                        break;
                    }
                    times.push(t);
                    k += 1;
                }
            }
        }
        times.push(end);
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    /// Total non-wetting mass injected over `[0, t]`.
    pub fn injected_mass(&self, t: f64) -> f64 {
        self.injection
            .iter()
            .filter(|i| i.phase == Phase::NonWetting)
            .map(|i| i.mass_to(t))
            .sum()
    }

    /// Checks every semantic constraint, returning all violations.
    pub fn validate(&self) -> Result<(), Vec<ValidationIssue>> {
        let mut issues = Vec::new();
        let mut push = |key: String, msg: String| issues.push(ValidationIssue::new(key, msg));

        if self.version != FORMAT_VERSION {
            push("version".into(), format!("unsupported version {}, expected {FORMAT_VERSION}", self.version));
        }

        let ndim = self.grid.extents_m.len();
        if !(1..=3).contains(&ndim) {
            push("grid.extents_m".into(), format!("expected 1 to 3 axes, got {ndim}"));
        }
        for (a, e) in self.grid.extents_m.iter().enumerate() {
            if !(*e > 0.0 && e.is_finite()) {
                push(format!("grid.extents_m[{a}]"), "extent must be > 0".into());
            }
        }
        if self.grid.cells.len() != ndim {
            push("grid.cells".into(), format!("expected {ndim} entries to match extents_m"));
        }
        for (a, c) in self.grid.cells.iter().enumerate() {
            if *c == 0 {
                push(format!("grid.cells[{a}]"), "cell count must be >= 1".into());
            }
        }
        if let Some(o) = &self.grid.origin_m {
            if o.len() != ndim {
                push("grid.origin_m".into(), format!("expected {ndim} entries"));
            }
        }
        if !(self.grid.gravity_m_per_s2 >= 0.0 && self.grid.gravity_m_per_s2.is_finite()) {
            push("grid.gravity_m_per_s2".into(), "gravity must be >= 0".into());
        }

        for (phase, f) in [("wetting", &self.fluids.wetting), ("non_wetting", &self.fluids.non_wetting)] {
            let props: FluidProperties = (*f).into();
            for v in props.violations() {
                push(format!("fluids.{phase}"), v);
            }
        }

        if self.materials.is_empty() {
            push("materials".into(), "at least one material is required".into());
        }
        for (name, m) in &self.materials {
            let props: MaterialProperties = (*m).into();
            for v in props.violations() {
                push(format!("materials.{name}"), v);
            }
        }

        let known = |n: &str| self.materials.contains_key(n);
        if !known(&self.layout.background) {
            push("layout.background".into(), format!("unknown material `{}`", self.layout.background));
        }
        for (r, region) in self.layout.regions.iter().enumerate() {
            let key = format!("layout.regions[{r}]");
            if !known(&region.material) {
                push(key.clone(), format!("unknown material `{}`", region.material));
            }
            check_box(&mut push, &key, &region.min_m, &region.max_m, ndim);
        }

        for side in &self.boundary.hydrostatic {
            if parse_side(side, ndim).is_none() {
                let names: Vec<String> = axis_names(ndim.clamp(1, 3))
                    .iter()
                    .flat_map(|a| [format!("{a}_min"), format!("{a}_max")])
                    .collect();
                push("boundary.hydrostatic".into(), format!("unknown side `{side}`, expected one of {}", names.join(", ")));
            }
        }
        if !self.boundary.top_pressure_pa.is_finite() {
            push("boundary.top_pressure_pa".into(), "must be finite".into());
        }

        for (k, inj) in self.injection.iter().enumerate() {
            let key = format!("injection[{k}]");
            check_box(&mut push, &key, &inj.min_m, &inj.max_m, ndim);
            if !(inj.rate_kg_per_s >= 0.0 && inj.rate_kg_per_s.is_finite()) {
                push(format!("{key}.rate_kg_per_s"), "rate must be >= 0".into());
            }
            if !(inj.start_s >= 0.0 && inj.end_s > inj.start_s) {
                push(key.clone(), "requires 0 <= start_s < end_s".into());
            }
        }
        for (a, ia) in self.injection.iter().enumerate() {
            for (b, ib) in self.injection.iter().enumerate().skip(a + 1) {
                if ia.phase == ib.phase && ia.start_s < ib.end_s && ib.start_s < ia.end_s {
                    push(format!("injection[{b}]"), format!("interval overlaps injection[{a}]"));
                }
            }
        }

        let s0 = self.initial.non_wetting_saturation;
        if !(0.0..1.0).contains(&s0) {
            push("initial.non_wetting_saturation".into(), "must lie in [0, 1)".into());
        }
        for (name, m) in &self.materials {
            if s0 > 1.0 - m.residual_wetting_saturation {
                push("initial.non_wetting_saturation".into(), format!("exceeds 1 - s_wr of material `{name}`"));
            }
        }

        if !(self.time.end_s > 0.0 && self.time.end_s.is_finite()) {
            push("time.end_s".into(), "end time must be > 0".into());
        }
        if self.time.report_times_s.windows(2).any(|w| w[1] <= w[0]) {
            push("time.report_times_s".into(), "report times must be strictly increasing".into());
        }
        if self.time.report_times_s.iter().any(|&t| !(t > 0.0)) {
            push("time.report_times_s".into(), "report times must be > 0".into());
        }
        if let Some(dt) = self.time.report_interval_s {
            if !(dt > 0.0) {
                push("time.report_interval_s".into(), "must be > 0".into());
            }
        }

        let s = &self.solver;
        if !(s.cfl > 0.0 && s.cfl <= 1.0) {
            push("solver.cfl".into(), "must lie in (0, 1]".into());
        }
        if !(s.tolerance > 0.0 && s.tolerance < 1.0) {
            push("solver.tolerance".into(), "must lie in (0, 1)".into());
        }
        if s.max_iterations == 0 {
            push("solver.max_iterations".into(), "must be >= 1".into());
        }
        if !(s.initial_timestep_s > 0.0) {
            push("solver.initial_timestep_s".into(), "must be > 0".into());
        }
        if !(s.max_growth >= 1.0) {
            push("solver.max_growth".into(), "must be >= 1".into());
        }
        if let Some(m) = s.max_timestep_s {
            if !(m > 0.0) {
                push("solver.max_timestep_s".into(), "must be > 0".into());
            }
        }
        if s.pressure_every == 0 {
            push("solver.pressure_every".into(), "must be >= 1".into());
        }

        let a = &self.analysis;
        if !(0.0 <= a.ganglia_floor && a.ganglia_floor < a.pool_threshold && a.pool_threshold <= 1.0) {
            push("analysis".into(), "requires 0 <= ganglia_floor < pool_threshold <= 1".into());
        }
        if !(a.detection_threshold > s0) {
            push("analysis.detection_threshold".into(), "must exceed the initial non-wetting saturation".into());
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }
}

fn check_box(push: &mut impl FnMut(String, String), key: &str, min: &[f64], max: &[f64], ndim: usize) {
    if min.len() != ndim || max.len() != ndim {
        push(key.to_string(), format!("min_m and max_m need {ndim} entries"));
        return;
    }
    if min.iter().zip(max).any(|(lo, hi)| !(lo <= hi)) {
        push(key.to_string(), "min_m must not exceed max_m".into());
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::sand_box;
    use super::*;

    #[test]
    fn fixture_is_valid() {
        sand_box().validate().unwrap();
    }

    #[test]
    fn reports_every_problem() {
        let mut s = sand_box();
        s.materials.get_mut("clay").unwrap().pore_size_index = 0.0;
        s.layout.background = "gravel".into();
        s.time.end_s = -1.0;
        s.boundary.hydrostatic.push("q_min".into());
        let issues = s.validate().unwrap_err();
        let keys: Vec<&str> = issues.iter().map(|i| i.key.as_str()).collect();
        assert!(keys.contains(&"materials.clay"));
        assert!(keys.contains(&"layout.background"));
        assert!(keys.contains(&"time.end_s"));
        assert!(keys.contains(&"boundary.hydrostatic"));
        assert!(issues.iter().any(|i| i.message.contains("lambda > 0")));
    }

    #[test]
    fn overlapping_injection_rejected() {
        let mut s = sand_box();
        let inj = Injection {
            phase: Phase::NonWetting,
            min_m: vec![0.4, 0.9],
            max_m: vec![0.6, 1.0],
            rate_kg_per_s: 1e-4,
            start_s: 0.0,
            end_s: 50.0,
        };
        s.injection = vec![inj.clone(), Injection { start_s: 40.0, end_s: 60.0, ..inj }];
        let issues = s.validate().unwrap_err();
        assert!(issues[0].message.contains("overlaps"));
    }

    #[test]
    fn schedule_lands_on_end() {
        let mut s = sand_box();
        s.time.report_interval_s = Some(30.0);
        s.time.report_times_s = vec![45.0];
        assert_eq!(s.report_schedule(), vec![30.0, 45.0, 60.0, 90.0, 100.0]);
    }

    #[test]
    fn injected_mass_is_rate_times_active_time() {
        let inj = Injection {
            phase: Phase::NonWetting,
            min_m: vec![0.0],
            max_m: vec![1.0],
            rate_kg_per_s: 3.75e-4,
            start_s: 0.0,
            end_s: 15.0 * 86400.0,
        };
        assert!((inj.mass_to(20.0 * 86400.0) - 486.0).abs() < 1e-9);
        assert_eq!(inj.mass_to(0.0), 0.0);
        assert!(!inj.is_active(15.0 * 86400.0));
    }

    #[test]
    fn side_names() {
        assert_eq!(parse_side("x_min", 2), Some((0, Side::Min)));
        assert_eq!(parse_side("z_max", 2), Some((1, Side::Max)));
        assert_eq!(parse_side("y_max", 2), None);
        assert_eq!(parse_side("y_max", 3), Some((1, Side::Max)));
        assert_eq!(parse_side("z_min", 1), Some((0, Side::Min)));
    }
}
