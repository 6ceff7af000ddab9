//! One-dimensional waterflood benchmark against the Buckley-Leverett
//! solution with the Welge tangent construction.
//!
//! Water is injected at the bottom of a gravity-free, capillarity-free sand
//! column initially at residual water saturation; the far end is held at
//! fixed pressure. Saturations are compared in effective-saturation units.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::constitutive::{
    phase_mobility, relperm_nonwetting, relperm_nonwetting_slope, relperm_wetting, FluidProperties, MaterialProperties,
};
use crate::error::Result;
use crate::scenario::{
    AnalysisSpec, BoundarySpec, Fluids, GridSpec, InitialSpec, Injection, Layout, MaterialSpec, OutputSpec, Phase,
    Scenario, SolverControls, TimeSpec, FORMAT_VERSION,
};
use crate::simulation::run;

/// Column length, m.
pub const LENGTH: f64 = 1.0;
/// Injected water, m³/s through the unit cross-section.
pub const WATER_RATE: f64 = 1e-5;
/// Pore volumes injected at the comparison time.
pub const PORE_VOLUMES: f64 = 0.3;

/// Water fractional flow `lw / (lw + ln)` as a function of effective saturation.
#[derive(Debug, Clone, Copy)]
pub struct FractionalFlow {
    pub material: MaterialProperties,
    pub water: FluidProperties,
    pub oil: FluidProperties,
}

impl FractionalFlow {
    pub fn sand() -> Self {
        Self {
            material: MaterialProperties::SAND,
            water: FluidProperties::WATER,
            oil: FluidProperties::PCE,
        }
    }

    pub fn value(&self, se: f64) -> f64 {
        let lw = phase_mobility(relperm_wetting(se, &self.material), &self.water);
        let ln = phase_mobility(relperm_nonwetting(se, &self.material), &self.oil);
        if lw + ln == 0.0 {
            return 0.0;
        }
        lw / (lw + ln)
    }

    /// `df / dSe`.
    pub fn slope(&self, se: f64) -> f64 {
        let m = &self.material;
        let a = (2.0 + 3.0 * m.lambda) / m.lambda;
        let lw = phase_mobility(relperm_wetting(se, m), &self.water);
        let ln = phase_mobility(relperm_nonwetting(se, m), &self.oil);
        let dlw = a * se.powf(a - 1.0) / self.water.viscosity;
        let dln = relperm_nonwetting_slope(se, m) / self.oil.viscosity;
        let total = lw + ln;
        (dlw * ln - lw * dln) / (total * total)
    }

    /// Shock saturation from the tangent condition `f(S) = S f'(S)`.
    pub fn welge_shock(&self) -> f64 {
        let h = |s: f64| self.slope(s) * s - self.value(s);
        let (mut lo, mut hi) = (1e-6, 1.0);
        debug_assert!(h(lo) > 0.0 && h(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Analytical effective saturation at dimensionless position `xd` after
    /// `td` pore volumes.
    pub fn profile(&self, shock: f64, xd: f64, td: f64) -> f64 {
        let range = self.material.mobile_range();
        let speed = |s: f64| td * self.slope(s) / range;
        if xd >= speed(shock) {
            return 0.0;
        }
        // speed decreases from the shock to Se = 1
        let (mut lo, mut hi) = (shock, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if speed(mid) > xd {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Waterflood scenario on `cells` cells, ending at [`PORE_VOLUMES`].
pub fn buckley_leverett_scenario(cells: usize) -> Scenario {
    let sand = MaterialProperties::SAND;
    let pore_volume = LENGTH * sand.porosity;
    let dz = LENGTH / cells as f64;
    let mut materials = BTreeMap::new();
    materials.insert("sand".to_string(), MaterialSpec::from(sand));
    Scenario {
        version: FORMAT_VERSION,
        name: "buckley-leverett".into(),
        grid: GridSpec {
            extents_m: vec![LENGTH],
            cells: vec![cells],
            origin_m: None,
            gravity_m_per_s2: 0.0,
        },
        fluids: Fluids {
            wetting: FluidProperties::WATER.into(),
            non_wetting: FluidProperties::PCE.into(),
        },
        materials,
        layout: Layout {
            background: "sand".into(),
            regions: vec![],
        },
        boundary: BoundarySpec {
            hydrostatic: vec!["z_max".into()],
            top_pressure_pa: 0.0,
        },
        injection: vec![Injection {
            phase: Phase::Wetting,
            min_m: vec![0.0],
            max_m: vec![dz],
            rate_kg_per_s: WATER_RATE * FluidProperties::WATER.density,
            start_s: 0.0,
            end_s: 1e30,
        }],
        initial: InitialSpec {
            non_wetting_saturation: 1.0 - sand.s_wr,
        },
        time: TimeSpec {
            end_s: PORE_VOLUMES * pore_volume / WATER_RATE,
            report_times_s: vec![],
            report_interval_s: None,
        },
        solver: SolverControls {
            capillarity: false,
            ..SolverControls::default()
        },
        analysis: AnalysisSpec {
            pool_threshold: 0.95,
            ganglia_floor: 0.01,
            detection_threshold: 0.95,
        },
        output: OutputSpec::default(),
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub cells: usize,
    pub pore_volumes: f64,
    pub shock_saturation: f64,
    /// Mean absolute effective-saturation error over the column.
    pub l1_error: f64,
    pub front_numerical: f64,
    pub front_analytical: f64,
    /// Effective saturation per cell, numerical and analytical.
    pub numerical: Vec<f64>,
    pub analytical: Vec<f64>,
    pub steps: usize,
    pub wall_time: Duration,
}

/// Position where the profile first drops below half the shock height,
/// interpolated between cell centers.
pub fn front_position(se: &[f64], dz: f64, level: f64) -> f64 {
    for i in 1..se.len() {
        if se[i] < level && se[i - 1] >= level {
            let frac = (se[i - 1] - level) / (se[i - 1] - se[i]);
            return (i as f64 - 0.5 + frac) * dz;
        }
    }
    if se.first().is_some_and(|&s| s < level) {
        0.0
    } else {
        se.len() as f64 * dz
    }
}

pub fn run_buckley_leverett(cells: usize) -> Result<BenchmarkReport> {
    let start = Instant::now();
    let scenario = buckley_leverett_scenario(cells);
    let result = run(&scenario)?;
    let ff = FractionalFlow::sand();
    let sand = ff.material;
    let shock = ff.welge_shock();
    let dz = LENGTH / cells as f64;
    let numerical: Vec<f64> = result
        .final_state
        .s_n
        .iter()
        .map(|&sn| (1.0 - sn - sand.s_wr) / sand.mobile_range())
        .collect();
    let analytical: Vec<f64> = (0..cells)
        .map(|i| ff.profile(shock, (i as f64 + 0.5) * dz / LENGTH, PORE_VOLUMES))
        .collect();
    let l1_error = numerical.iter().zip(&analytical).map(|(a, b)| (a - b).abs()).sum::<f64>() / cells as f64;
    Ok(BenchmarkReport {
        cells,
        pore_volumes: PORE_VOLUMES,
        shock_saturation: shock,
        l1_error,
        front_numerical: front_position(&numerical, dz, 0.5 * shock),
        front_analytical: PORE_VOLUMES * ff.slope(shock) / sand.mobile_range() * LENGTH,
        numerical,
        analytical,
        steps: result.steps,
        wall_time: start.elapsed(),
    })
}
