//! IMPES time loop: pressure solve, fluxes, step selection, saturation
//! update, and sampling at report times.

use std::time::{Duration, Instant};

use crate::analysis::{partition_pool_ganglia, plume_metrics, relative_mass_error, MassPartitionReport, PlumeMetrics};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::pressure::{
    assemble_pressure_system, cell_properties, fluxes_with, solve_pressure, upwind_mobilities, CellProps,
    FaceMobilities, PhaseFluxes,
};
use crate::saturation::{
    advance_saturation, apply_source, characteristic_limit, implicit_capillary_fluxes, throughput_limit, CellSources,
    StepLedger,
    TimestepController,
};
use crate::scenario::{AnalysisSpec, Scenario, SolverControls};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub time: f64,
    pub p_w: Vec<f64>,
    pub s_n: Vec<f64>,
}

impl SimulationState {
    /// Hydrostatic water pressure with a uniform non-wetting saturation.
    pub fn initial(model: &Model, s_n: f64) -> Self {
        Self {
            time: 0.0,
            p_w: model.hydrostatic_pressure(),
            s_n: vec![s_n; model.num_cells()],
        }
    }
}

/// Everything derived from one state and pressure field.
#[derive(Debug, Clone)]
pub struct Flow {
    pub props: Vec<CellProps>,
    pub p_w: Vec<f64>,
    pub mobilities: FaceMobilities,
    pub fluxes: PhaseFluxes,
    pub sources: CellSources,
    pub linear_iterations: usize,
}

impl Flow {
    /// Stability limit of the saturation update, `None` if unbounded. The
    /// capillary term only limits the step when it is treated explicitly.
    pub fn stability_limit(&self, model: &Model, implicit_capillarity: bool) -> Option<f64> {
        let a = throughput_limit(model, &self.fluxes);
        let b = characteristic_limit(model, &self.props, &self.p_w, &self.mobilities, !implicit_capillarity);
        match (a, b) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Solves the pressure equation for `state` (or reuses its pressure when
/// `solve` is false) and evaluates the phase fluxes.
pub fn compute_flow(model: &Model, controls: &SolverControls, state: &SimulationState, solve: bool) -> Result<Flow> {
    let props = cell_properties(model, &state.s_n);
    let sources = apply_source(&model.sources, state.time, model.num_cells());
    let mut linear_iterations = 0;
    let p_w = if solve {
        let lagged = upwind_mobilities(model, &props, &state.p_w);
        let system = assemble_pressure_system(model, &props, &lagged, &sources, &state.p_w)?;
        let (p, stats) = solve_pressure(&system, &state.p_w, controls.tolerance, controls.max_iterations)?;
        linear_iterations = stats.iterations;
        p
    } else {
        state.p_w.clone()
    };
    let mobilities = upwind_mobilities(model, &props, &p_w);
    let fluxes = fluxes_with(model, &props, &p_w, &mobilities);
    Ok(Flow {
        props,
        p_w,
        mobilities,
        fluxes,
        sources,
        linear_iterations,
    })
}

/// One IMPES cycle of length `dt`. Depends only on its arguments.
pub fn step(
    model: &Model,
    controls: &SolverControls,
    state: &SimulationState,
    dt: f64,
) -> Result<(SimulationState, StepLedger)> {
    let flow = compute_flow(model, controls, state, true)?;
    apply_step(model, controls, state, &flow, dt, state.time + dt).map(|(s, l, _)| (s, l))
}

/// Advances the saturation with the fluxes of `flow`; also returns the
/// iterations spent on the capillary system.
fn apply_step(
    model: &Model,
    controls: &SolverControls,
    state: &SimulationState,
    flow: &Flow,
    dt: f64,
    new_time: f64,
) -> Result<(SimulationState, StepLedger, usize)> {
    let (s_n, ledger, iterations) = if controls.implicit_capillarity && model.capillarity {
        let (fluxes, iterations) = implicit_capillary_fluxes(
            model,
            &flow.props,
            &flow.mobilities,
            &flow.fluxes,
            dt,
            &flow.sources,
            controls.tolerance,
            controls.max_iterations,
        )?;
        let (s_n, ledger) = advance_saturation(model, &state.s_n, &fluxes, dt, &flow.sources);
        (s_n, ledger, iterations)
    } else {
        let (s_n, ledger) = advance_saturation(model, &state.s_n, &flow.fluxes, dt, &flow.sources);
        (s_n, ledger, 0)
    };
    Ok((
        SimulationState {
            time: new_time,
            p_w: flow.p_w.clone(),
            s_n,
        },
        ledger,
        iterations,
    ))
}

/// Stateful driver around [`step`] with adaptive step selection.
#[derive(Debug, Clone)]
pub struct Simulation {
    model: Model,
    controls: SolverControls,
    state: SimulationState,
    controller: TimestepController,
    /// Source switching times; the stepper lands on each.
    events: Vec<f64>,
    steps: usize,
    since_pressure: usize,
    last_active: Vec<bool>,
    ledger: StepLedger,
    pressure_solves: usize,
    linear_iterations: usize,
}

impl Simulation {
    pub fn new(model: Model, controls: SolverControls, initial_sn: f64) -> Self {
        let state = SimulationState::initial(&model, initial_sn);
        let mut events: Vec<f64> = model.sources.iter().flat_map(|s| [s.start, s.end]).filter(|t| *t > 0.0).collect();
        events.sort_by(f64::total_cmp);
        events.dedup();
        let controller = TimestepController::new(
            controls.initial_timestep_s,
            controls.cfl,
            controls.max_growth,
            controls.max_timestep_s,
        );
        Self {
            model,
            controls,
            state,
            controller,
            events,
            steps: 0,
            since_pressure: 0,
            last_active: Vec::new(),
            ledger: StepLedger::default(),
            pressure_solves: 0,
            linear_iterations: 0,
        }
    }

    pub fn from_scenario(scenario: &Scenario) -> Result<Self> {
        let model = Model::from_scenario(scenario)?;
        Ok(Self::new(model, scenario.solver.clone(), scenario.initial.non_wetting_saturation))
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn state(&self) -> &SimulationState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Accumulated mass bookkeeping since the start.
    pub fn ledger(&self) -> StepLedger {
        self.ledger
    }

    pub fn pressure_solves(&self) -> usize {
        self.pressure_solves
    }

    pub fn linear_iterations(&self) -> usize {
        self.linear_iterations
    }

    /// Takes one adaptive step without passing `target` or a source
    /// switching time. Returns the step length.
    pub fn step_towards(&mut self, target: f64) -> Result<f64> {
        let t = self.state.time;
        let stop = self
            .events
            .iter()
            .copied()
            .find(|&e| e > t)
            .map_or(target, |e| e.min(target));
        let active: Vec<bool> = self.model.sources.iter().map(|s| s.is_active(t)).collect();
        let solve = self.since_pressure == 0
            || self.since_pressure >= self.controls.pressure_every.max(1)
            || active != self.last_active;
        let wrap = |e: Error, step: usize| Error::StepFailed {
            step,
            time: t,
            source: Box::new(e),
        };
        let flow = compute_flow(&self.model, &self.controls, &self.state, solve).map_err(|e| wrap(e, self.steps))?;
        if solve {
            self.pressure_solves += 1;
            self.linear_iterations += flow.linear_iterations;
            self.since_pressure = 0;
        }
        let dt = self
            .controller
            .next(t, stop, flow.stability_limit(&self.model, self.controls.implicit_capillarity), self.steps)
            .map_err(|e| wrap(e, self.steps))?;
        let new_time = if dt == stop - t { stop } else { t + dt };
        let (state, ledger, iterations) =
            apply_step(&self.model, &self.controls, &self.state, &flow, dt, new_time).map_err(|e| wrap(e, self.steps))?;
        self.linear_iterations += iterations;
        self.state = state;
        self.ledger += ledger;
        self.steps += 1;
        self.since_pressure += 1;
        self.last_active = active;
        Ok(dt)
    }

    /// Steps until the state time equals `target` exactly.
    pub fn advance_to(&mut self, target: f64) -> Result<()> {
        while self.state.time < target {
            self.step_towards(target)?;
        }
        Ok(())
    }
}

/// Analyses of the state at one report time.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub partition: MassPartitionReport,
    pub metrics: PlumeMetrics,
    /// Non-wetting mass that left through fixed-pressure boundaries so far, kg.
    pub boundary_outflow: f64,
    /// Mass removed by saturation clamping so far, kg.
    pub clamped: f64,
    pub mass_error: f64,
}

impl Sample {
    pub fn time(&self) -> f64 {
        self.partition.time
    }
}

pub fn sample(model: &Model, state: &SimulationState, ledger: &StepLedger, baseline: f64, analysis: &AnalysisSpec) -> Sample {
    let partition = partition_pool_ganglia(
        model,
        &state.s_n,
        baseline,
        analysis.pool_threshold,
        analysis.ganglia_floor,
        state.time,
        ledger.injected,
    );
    let metrics = plume_metrics(&model.grid, &state.s_n, analysis.detection_threshold);
    Sample {
        mass_error: relative_mass_error(partition.total_mass, ledger.injected, ledger.boundary_outflow, ledger.clamped),
        partition,
        metrics,
        boundary_outflow: ledger.boundary_outflow,
        clamped: ledger.clamped,
    }
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub final_state: SimulationState,
    /// States at the report times, in time order.
    pub snapshots: Vec<SimulationState>,
    /// One sample per report time.
    pub samples: Vec<Sample>,
    pub clamped_mass: f64,
    pub boundary_outflow: f64,
    pub steps: usize,
    pub pressure_solves: usize,
    pub linear_iterations: usize,
    pub wall_time: Duration,
}

impl SimulationResult {
    pub fn mass_balance_errors(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mass_error).collect()
    }
}

/// Runs a scenario, calling `on_report` with each report sample and state.
pub fn run_with(
    scenario: &Scenario,
    mut on_report: impl FnMut(&Sample, &SimulationState) -> Result<()>,
) -> Result<SimulationResult> {
    let start = Instant::now();
    let mut sim = Simulation::from_scenario(scenario)?;
    let baseline = scenario.initial.non_wetting_saturation;
    let mut samples = Vec::new();
    for t in scenario.report_schedule() {
        sim.advance_to(t)?;
        let s = sample(sim.model(), sim.state(), &sim.ledger(), baseline, &scenario.analysis);
        on_report(&s, sim.state())?;
        samples.push(s);
    }
    let ledger = sim.ledger();
    Ok(SimulationResult {
        final_state: sim.state().clone(),
        snapshots: Vec::new(),
        samples,
        clamped_mass: ledger.clamped,
        boundary_outflow: ledger.boundary_outflow,
        steps: sim.steps(),
        pressure_solves: sim.pressure_solves(),
        linear_iterations: sim.linear_iterations(),
        wall_time: start.elapsed(),
    })
}

/// Runs a scenario to its end time, keeping a snapshot at every report time.
pub fn run(scenario: &Scenario) -> Result<SimulationResult> {
    let mut snapshots = Vec::new();
    let mut result = run_with(scenario, |_, state| {
        snapshots.push(state.clone());
        Ok(())
    })?;
    result.snapshots = snapshots;
    Ok(result)
}
