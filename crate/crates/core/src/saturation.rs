//! Upwind update of the non-wetting saturation, the linearly implicit
//! capillary correction, and the adaptive step size controller.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Model, Source};
use crate::pressure::{solve_spd, CellProps, CsrMatrix, FaceMobilities, PhaseFluxes};
use crate::scenario::Phase;

/// Smallest step the controller accepts before declaring a runaway.
pub const MIN_TIMESTEP: f64 = 1e-9;

/// Per-cell volumetric source rates, m³/s.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSources {
    pub wetting: Vec<f64>,
    pub non_wetting: Vec<f64>,
}

impl CellSources {
    pub fn zero(n: usize) -> Self {
        Self {
            wetting: vec![0.0; n],
            non_wetting: vec![0.0; n],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.wetting.iter().chain(&self.non_wetting).all(|&q| q == 0.0)
    }
}

/// Distributes every source active at `t` uniformly over its inlet cells.
pub fn apply_source(sources: &[Source], t: f64, num_cells: usize) -> CellSources {
    let mut out = CellSources::zero(num_cells);
    for s in sources.iter().filter(|s| s.is_active(t)) {
        let per_cell = s.volumetric_rate / s.cells.len() as f64;
        let target = match s.phase {
            Phase::Wetting => &mut out.wetting,
            Phase::NonWetting => &mut out.non_wetting,
        };
        for &c in &s.cells {
            target[c] += per_cell;
        }
    }
    out
}

/// Net non-wetting outflow of each cell through interior and boundary faces.
pub fn net_non_wetting_outflow(model: &Model, fluxes: &PhaseFluxes) -> Vec<f64> {
    (0..model.num_cells())
        .into_par_iter()
        .map(|c| {
            let mut out = 0.0;
            for &k in model.faces.faces_of(c) {
                let f = &model.faces.faces[k];
                if f.lo == c {
                    out += fluxes.non_wetting[k];
                } else {
                    out -= fluxes.non_wetting[k];
                }
            }
            for &b in model.boundary_faces_of(c) {
                out += fluxes.boundary_non_wetting[b];
            }
            out
        })
        .collect()
}

/// Sum of outgoing non-wetting fluxes of each cell.
fn outgoing_non_wetting(model: &Model, fluxes: &PhaseFluxes) -> Vec<f64> {
    (0..model.num_cells())
        .into_par_iter()
        .map(|c| {
            let mut out = 0.0;
            for &k in model.faces.faces_of(c) {
                let f = &model.faces.faces[k];
                let flux = if f.lo == c { fluxes.non_wetting[k] } else { -fluxes.non_wetting[k] };
                out += flux.max(0.0);
            }
            for &b in model.boundary_faces_of(c) {
                out += fluxes.boundary_non_wetting[b].max(0.0);
            }
            out
        })
        .collect()
}

/// Throughput limit: the time for the outgoing non-wetting flux to drain the
/// mobile pore volume of a cell. `None` when no cell has outflow.
pub fn throughput_limit(model: &Model, fluxes: &PhaseFluxes) -> Option<f64> {
    let out = outgoing_non_wetting(model, fluxes);
    out.iter()
        .enumerate()
        .filter(|(_, &f)| f > 0.0)
        .map(|(c, &f)| model.pore_volume[c] * model.material(c).mobile_range() / f)
        .reduce(f64::min)
}

/// Characteristic limit from the linearized update: the sensitivity of a
/// cell's net outflow to its own saturation through the upwinded mobility
/// and, when `capillary` is set, through capillary pressure. `None` when
/// every sensitivity vanishes.
pub fn characteristic_limit(
    model: &Model,
    props: &[CellProps],
    p: &[f64],
    mob: &FaceMobilities,
    capillary: bool,
) -> Option<f64> {
    let cap = if capillary { 1.0 } else { 0.0 };
    let g = model.gravity;
    let rho_n = model.non_wetting.density;
    let rates: Vec<f64> = (0..model.num_cells())
        .into_par_iter()
        .map(|c| {
            let own = &props[c];
            let mut rate = 0.0;
            for &k in model.faces.faces_of(c) {
                let f = &model.faces.faces[k];
                let other = if f.lo == c { f.hi } else { f.lo };
                let drop = (p[c] - p[other])
                    + (own.pc - props[other].pc)
                    + rho_n * g * (model.elevation[c] - model.elevation[other]);
                let t = f.transmissibility;
                let lam = mob.non_wetting[k];
                if drop > 0.0 && lam > 0.0 {
                    rate += t * drop * own.dmob_n;
                }
                rate += cap * t * lam * own.dpc;
            }
            for &b in model.boundary_faces_of(c) {
                let face = &model.boundary[b];
                let lam = mob.boundary_non_wetting[b];
                if lam > 0.0 {
                    let pc_b = if model.capillarity { model.material(c).p_entry } else { 0.0 };
                    let drop = (p[c] - face.pressure) + (own.pc - pc_b) + rho_n * g * (model.elevation[c] - face.elevation);
                    rate += face.transmissibility * (drop.max(0.0) * own.dmob_n + cap * lam * own.dpc);
                }
            }
            rate
        })
        .collect();
    rates
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > 0.0)
        .map(|(c, &r)| model.pore_volume[c] / r)
        .reduce(f64::min)
}

/// Non-wetting fluxes with the capillary part taken at the end of the step.
///
/// Capillary pressure is linearized about the current saturation,
/// `pc + pc' ds`, and the resulting system is solved for `y = pc' ds`:
///
/// `pv / (dt pc') y_i + sum T ln (y_i - y_j) = q_i - out_i`
///
/// which is symmetric positive definite. Cells with `pc' = 0` keep their
/// capillary pressure. Every face keeps a single flux, so the update stays
/// conservative, and faces with zero mobility still carry exactly nothing.
/// Returns the corrected fluxes and the solver iteration count.
#[allow(clippy::too_many_arguments)]
pub fn implicit_capillary_fluxes(
    model: &Model,
    props: &[CellProps],
    mob: &FaceMobilities,
    fluxes: &PhaseFluxes,
    dt: f64,
    sources: &CellSources,
    tol: f64,
    max_iterations: usize,
) -> Result<(PhaseFluxes, usize)> {
    if !model.capillarity {
        return Ok((fluxes.clone(), 0));
    }
    let n = model.num_cells();
    let pat = &model.stencil;
    let free: Vec<bool> = props.iter().map(|c| c.dpc > 0.0).collect();
    let out = net_non_wetting_outflow(model, fluxes);
    let mut vals = vec![0.0; pat.nnz()];
    let mut rhs = vec![0.0; n];
    for c in 0..n {
        if free[c] {
            vals[pat.diag[c]] = model.pore_volume[c] / (dt * props[c].dpc);
            rhs[c] = sources.non_wetting[c] - out[c];
        } else {
            vals[pat.diag[c]] = 1.0;
        }
    }
    for (k, f) in model.faces.faces.iter().enumerate() {
        let lam = mob.non_wetting[k];
        if lam == 0.0 {
            continue;
        }
        let c = f.transmissibility * lam;
        if free[f.lo] {
            vals[pat.diag[f.lo]] += c;
        }
        if free[f.hi] {
            vals[pat.diag[f.hi]] += c;
        }
        if free[f.lo] && free[f.hi] {
            vals[pat.lo_hi[k]] -= c;
            vals[pat.hi_lo[k]] -= c;
        }
    }
    for (b, face) in model.boundary.iter().enumerate() {
        let lam = mob.boundary_non_wetting[b];
        if lam != 0.0 && free[face.cell] {
            vals[pat.diag[face.cell]] += face.transmissibility * lam;
        }
    }
    let matrix = CsrMatrix::with_pattern(pat, vals);
    let mut y = vec![0.0; n];
    let stats = solve_spd(&matrix, &rhs, &mut y, tol, max_iterations)?;
    for (yi, &f) in y.iter_mut().zip(&free) {
        if !f {
            *yi = 0.0;
        }
    }
    let non_wetting = model
        .faces
        .faces
        .par_iter()
        .zip(fluxes.non_wetting.par_iter())
        .zip(mob.non_wetting.par_iter())
        .map(|((f, &flux), &lam)| {
            if lam == 0.0 {
                flux
            } else {
                flux + f.transmissibility * lam * (y[f.lo] - y[f.hi])
            }
        })
        .collect();
    let boundary_non_wetting = model
        .boundary
        .iter()
        .zip(&fluxes.boundary_non_wetting)
        .zip(&mob.boundary_non_wetting)
        .map(|((face, &flux), &lam)| {
            if lam == 0.0 {
                flux
            } else {
                flux + face.transmissibility * lam * y[face.cell]
            }
        })
        .collect();
    Ok((
        PhaseFluxes {
            wetting: fluxes.wetting.clone(),
            non_wetting,
            boundary_wetting: fluxes.boundary_wetting.clone(),
            boundary_non_wetting,
        },
        stats.iterations,
    ))
}

/// Adaptive step controller: CFL-limited, growth-capped, and landing
/// exactly on requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepController {
    pub cfl: f64,
    pub max_growth: f64,
    pub max_timestep: Option<f64>,
    previous: f64,
    first: bool,
}

impl TimestepController {
    pub fn new(initial: f64, cfl: f64, max_growth: f64, max_timestep: Option<f64>) -> Self {
        Self {
            cfl,
            max_growth,
            max_timestep,
            previous: initial,
            first: true,
        }
    }

    /// Step size before truncation, for a stability limit (`None` = unlimited).
    pub fn proposal(&self, limit: Option<f64>) -> f64 {
        let cap = if self.first { self.previous } else { self.previous * self.max_growth };
        let mut dt = match limit {
            Some(l) => cap.min(self.cfl * l),
            None => cap,
        };
        if let Some(m) = self.max_timestep {
            dt = dt.min(m);
        }
        dt
    }

    /// Chooses the next step from time `t` towards `target`.
    ///
    /// Truncation to land on `target` never counts as underflow; the growth
    /// reference is the untruncated step so that landing does not throttle
    /// the following steps.
    pub fn next(&mut self, t: f64, target: f64, limit: Option<f64>, step: usize) -> Result<f64> {
        let dt = self.proposal(limit);
        if dt < MIN_TIMESTEP {
            return Err(Error::TimestepUnderflow { time: t, step, dt });
        }
        self.first = false;
        let remaining = target - t;
        if dt >= remaining {
            self.previous = dt.max(remaining);
            Ok(remaining)
        } else {
            self.previous = dt;
            Ok(dt)
        }
    }

    pub fn previous(&self) -> f64 {
        self.previous
    }
}

/// Mass bookkeeping of one saturation update, kg.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLedger {
    /// Mass removed by clamping to the admissible range (negative if added).
    pub clamped: f64,
    /// Non-wetting mass leaving through fixed-pressure boundaries (negative if entering).
    pub boundary_outflow: f64,
    /// Non-wetting mass added by sources.
    pub injected: f64,
}

impl std::ops::AddAssign for StepLedger {
    fn add_assign(&mut self, other: Self) {
        self.clamped += other.clamped;
        self.boundary_outflow += other.boundary_outflow;
        self.injected += other.injected;
    }
}

/// Fixed chunk for order-independent reductions.
const CHUNK: usize = 4096;

fn chunked_sum(values: &[f64]) -> f64 {
    values
        .par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Advances `s_n` by `dt`. Each cell reads only old values, so the result
/// does not depend on update order.
pub fn advance_saturation(
    model: &Model,
    s_n: &[f64],
    fluxes: &PhaseFluxes,
    dt: f64,
    sources: &CellSources,
) -> (Vec<f64>, StepLedger) {
    let out = net_non_wetting_outflow(model, fluxes);
    let rho = model.non_wetting.density;
    let updated: Vec<(f64, f64)> = (0..model.num_cells())
        .into_par_iter()
        .map(|c| {
            let pv = model.pore_volume[c];
            let raw = s_n[c] + dt / pv * (sources.non_wetting[c] - out[c]);
            let clamped = raw.clamp(0.0, model.max_saturation(c));
            (clamped, (raw - clamped) * pv * rho)
        })
        .collect();
    let (s_new, removed): (Vec<f64>, Vec<f64>) = updated.into_iter().unzip();
    let boundary: Vec<f64> = fluxes.boundary_non_wetting.iter().map(|f| f * dt * rho).collect();
    let ledger = StepLedger {
        clamped: chunked_sum(&removed),
        boundary_outflow: boundary.iter().sum(),
        injected: chunked_sum(&sources.non_wetting) * dt * rho,
    };
    (s_new, ledger)
}

/// Non-wetting mass `sum(phi V rho_n s_n)` with a fixed reduction order.
pub fn non_wetting_mass(model: &Model, s_n: &[f64]) -> f64 {
    let terms: Vec<f64> = s_n
        .iter()
        .zip(&model.pore_volume)
        .map(|(s, pv)| s * pv * model.non_wetting.density)
        .collect();
    chunked_sum(&terms)
}
