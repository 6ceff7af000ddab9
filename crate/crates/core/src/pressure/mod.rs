//! Implicit pressure equation and phase Darcy fluxes.
//!
//! The unknown is the water pressure. Summing both phase balances for
//! incompressible fluids gives, per cell `i`,
//!
//! ```text
//! sum_j T_ij lt_ij (p_i - p_j)
//!     = q_i - sum_j T_ij [ ln_ij (pc_i - pc_j) + (lw_ij rho_w + ln_ij rho_n) g (z_i - z_j) ]
//! ```
//!
//! with face mobilities upwinded by phase potential and the entry rule
//! applied to the non-wetting mobility. Capillary and gravity terms are
//! explicit in the current saturation field.

pub mod linear;

use rayon::prelude::*;

use crate::constitutive::{
    capillary_pressure, capillary_pressure_slope, effective_saturation, phase_mobility, relperm_nonwetting,
    relperm_nonwetting_slope, relperm_wetting,
};
use crate::error::{Error, Result};
use crate::interface::{interface_upwind, FaceSide};
use crate::model::Model;
use crate::saturation::CellSources;

pub use linear::{
    conjugate_gradient, dense_solve, solve_spd, CsrMatrix, SolveStats, StencilPattern, DENSE_LIMIT, DIRECT_FALLBACK_LIMIT,
};

/// Saturation-dependent quantities of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProps {
    /// Effective wetting saturation.
    pub se: f64,
    /// Capillary pressure (zero when capillarity is disabled).
    pub pc: f64,
    pub mob_w: f64,
    pub mob_n: f64,
    /// `d mob_n / d s_n`, non-negative.
    pub dmob_n: f64,
    /// `d pc / d s_n`, non-negative.
    pub dpc: f64,
}

/// Evaluates constitutive relations in every cell.
pub fn cell_properties(model: &Model, s_n: &[f64]) -> Vec<CellProps> {
    s_n.par_iter()
        .enumerate()
        .map(|(c, &sn)| {
            let m = model.material(c);
            let se = effective_saturation(1.0 - sn, m);
            let range = m.mobile_range();
            let mobile = se > 0.0 && se < 1.0;
            let (pc, dpc) = if model.capillarity {
                let slope = if mobile { -capillary_pressure_slope(se, m) / range } else { 0.0 };
                (capillary_pressure(se, m), slope)
            } else {
                (0.0, 0.0)
            };
            let dmob_n = if mobile {
                -relperm_nonwetting_slope(se, m) / range / model.non_wetting.viscosity
            } else {
                0.0
            };
            CellProps {
                se,
                pc,
                mob_w: phase_mobility(relperm_wetting(se, m), &model.wetting),
                mob_n: phase_mobility(relperm_nonwetting(se, m), &model.non_wetting),
                dmob_n,
                dpc,
            }
        })
        .collect()
}

/// Capillary pressure on a hydrostatic boundary face: the adjoining medium
/// is taken as water saturated.
fn boundary_pc(model: &Model, cell: usize) -> f64 {
    if model.capillarity {
        model.material(cell).p_entry
    } else {
        0.0
    }
}

/// Potential drops `lo - hi` of both phases across an interior face.
#[inline]
fn face_drops(model: &Model, props: &[CellProps], p: &[f64], lo: usize, hi: usize) -> (f64, f64) {
    let dp = p[lo] - p[hi];
    let dz = model.elevation[lo] - model.elevation[hi];
    let g = model.gravity;
    let w = dp + model.wetting.density * g * dz;
    let n = dp + (props[lo].pc - props[hi].pc) + model.non_wetting.density * g * dz;
    (w, n)
}

/// Outward potential drops of both phases across a boundary face.
#[inline]
fn boundary_drops(model: &Model, props: &[CellProps], p: &[f64], b: usize) -> (f64, f64) {
    let face = &model.boundary[b];
    let c = face.cell;
    let dp = p[c] - face.pressure;
    let dz = model.elevation[c] - face.elevation;
    let g = model.gravity;
    let w = dp + model.wetting.density * g * dz;
    let n = dp + (props[c].pc - boundary_pc(model, c)) + model.non_wetting.density * g * dz;
    (w, n)
}

/// Upwinded phase mobilities on every interior and boundary face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMobilities {
    pub wetting: Vec<f64>,
    pub non_wetting: Vec<f64>,
    pub boundary_wetting: Vec<f64>,
    pub boundary_non_wetting: Vec<f64>,
}

/// Phase-potential upwinding against the pressure field `p`.
pub fn upwind_mobilities(model: &Model, props: &[CellProps], p: &[f64]) -> FaceMobilities {
    let (wetting, non_wetting): (Vec<f64>, Vec<f64>) = model
        .faces
        .faces
        .par_iter()
        .zip(model.face_rules.par_iter())
        .map(|(f, rule)| {
            let (dw, dn) = face_drops(model, props, p, f.lo, f.hi);
            let mw = if dw >= 0.0 { props[f.lo].mob_w } else { props[f.hi].mob_w };
            let lo = FaceSide { se: props[f.lo].se, mobility: props[f.lo].mob_n };
            let hi = FaceSide { se: props[f.hi].se, mobility: props[f.hi].mob_n };
            (mw, interface_upwind(dn, lo, hi, rule.as_ref()))
        })
        .unzip();
    let water = 1.0 / model.wetting.viscosity;
    let (boundary_wetting, boundary_non_wetting) = (0..model.boundary.len())
        .map(|b| {
            let c = model.boundary[b].cell;
            let (dw, dn) = boundary_drops(model, props, p, b);
            let mw = if dw >= 0.0 { props[c].mob_w } else { water };
            let mn = if dn >= 0.0 { props[c].mob_n } else { 0.0 };
            (mw, mn)
        })
        .unzip();
    FaceMobilities {
        wetting,
        non_wetting,
        boundary_wetting,
        boundary_non_wetting,
    }
}

/// Assembled pressure equation `A p = b`.
#[derive(Debug, Clone)]
pub struct PressureSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Cell whose pressure was pinned because no boundary fixes the level.
    pub pinned: Option<usize>,
}

/// Builds the pressure system for the current saturations.
///
/// `p_ref` only matters for closed domains, where it fixes the pressure
/// level at cell 0.
pub fn assemble_pressure_system(
    model: &Model,
    props: &[CellProps],
    mob: &FaceMobilities,
    sources: &CellSources,
    p_ref: &[f64],
) -> Result<PressureSystem> {
    let n = model.num_cells();
    let g = model.gravity;
    let (rho_w, rho_n) = (model.wetting.density, model.non_wetting.density);
    let pat = &model.stencil;
    let mut vals = vec![0.0; pat.nnz()];
    let mut rhs: Vec<f64> = (0..n).map(|i| sources.wetting[i] + sources.non_wetting[i]).collect();

    for (k, f) in model.faces.faces.iter().enumerate() {
        let (lw, ln) = (mob.wetting[k], mob.non_wetting[k]);
        let c = f.transmissibility * (lw + ln);
        vals[pat.diag[f.lo]] += c;
        vals[pat.diag[f.hi]] += c;
        vals[pat.lo_hi[k]] -= c;
        vals[pat.hi_lo[k]] -= c;
        let dz = model.elevation[f.lo] - model.elevation[f.hi];
        let explicit = f.transmissibility * (ln * (props[f.lo].pc - props[f.hi].pc) + (lw * rho_w + ln * rho_n) * g * dz);
        rhs[f.lo] -= explicit;
        rhs[f.hi] += explicit;
    }
    for (b, face) in model.boundary.iter().enumerate() {
        let (lw, ln) = (mob.boundary_wetting[b], mob.boundary_non_wetting[b]);
        let c = face.transmissibility * (lw + ln);
        let cell = face.cell;
        vals[pat.diag[cell]] += c;
        let dz = model.elevation[cell] - face.elevation;
        let explicit = face.transmissibility
            * (ln * (props[cell].pc - boundary_pc(model, cell)) + (lw * rho_w + ln * rho_n) * g * dz);
        rhs[cell] += c * face.pressure - explicit;
    }

    let mut pinned = None;
    if model.boundary.is_empty() {
        let net: f64 = (0..n).map(|i| sources.wetting[i] + sources.non_wetting[i]).sum();
        if net != 0.0 {
            return Err(Error::Singular(format!(
                "no fixed-pressure boundary and a net source of {net:.6e} m³/s; pressure is defined only up to a constant"
            )));
        }
        let mean_diag = pat.diag.iter().map(|&d| vals[d]).sum::<f64>() / n as f64;
        let weight = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        vals[pat.diag[0]] += weight;
        rhs[0] += weight * p_ref[0];
        pinned = Some(0);
    }

    Ok(PressureSystem {
        matrix: CsrMatrix::with_pattern(pat, vals),
        rhs,
        pinned,
    })
}

/// Solves the pressure system by preconditioned conjugate gradients from
/// `initial`, directly when a small system fails to converge.
pub fn solve_pressure(
    system: &PressureSystem,
    initial: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let mut x = initial.to_vec();
    let stats = solve_spd(&system.matrix, &system.rhs, &mut x, tol, max_iterations)?;
    Ok((x, stats))
}

/// Volumetric phase fluxes, m³/s. Interior faces are positive from `lo` to
/// `hi`; boundary faces are positive out of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFluxes {
    pub wetting: Vec<f64>,
    pub non_wetting: Vec<f64>,
    pub boundary_wetting: Vec<f64>,
    pub boundary_non_wetting: Vec<f64>,
}

impl PhaseFluxes {
    /// Net total-phase outflow from each cell.
    pub fn net_outflow(&self, model: &Model) -> Vec<f64> {
        let mut out = vec![0.0; model.num_cells()];
        for (k, f) in model.faces.faces.iter().enumerate() {
            let total = self.wetting[k] + self.non_wetting[k];
            out[f.lo] += total;
            out[f.hi] -= total;
        }
        for (b, face) in model.boundary.iter().enumerate() {
            out[face.cell] += self.boundary_wetting[b] + self.boundary_non_wetting[b];
        }
        out
    }

    /// Largest Darcy velocity magnitude over all faces, m/s.
    pub fn max_velocity(&self, model: &Model) -> f64 {
        let interior = model.faces.faces.iter().enumerate().map(|(k, f)| {
            let area = model.grid.face_area(f.axis);
            (self.wetting[k].abs().max(self.non_wetting[k].abs())) / area
        });
        let boundary = model.boundary.iter().enumerate().map(|(b, face)| {
            let area = model.grid.face_area(face.axis);
            (self.boundary_wetting[b].abs().max(self.boundary_non_wetting[b].abs())) / area
        });
        interior.chain(boundary).fold(0.0, f64::max)
    }
}

/// Fluxes for a pressure field using precomputed face mobilities.
pub fn fluxes_with(model: &Model, props: &[CellProps], p: &[f64], mob: &FaceMobilities) -> PhaseFluxes {
    let (wetting, non_wetting): (Vec<f64>, Vec<f64>) = model
        .faces
        .faces
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let (dw, dn) = face_drops(model, props, p, f.lo, f.hi);
            let t = f.transmissibility;
            let fw = t * mob.wetting[k] * dw;
            // a zero mobility must give an exactly zero flux
            let fnw = if mob.non_wetting[k] == 0.0 { 0.0 } else { t * mob.non_wetting[k] * dn };
            (fw, fnw)
        })
        .unzip();
    let (boundary_wetting, boundary_non_wetting) = (0..model.boundary.len())
        .map(|b| {
            let (dw, dn) = boundary_drops(model, props, p, b);
            let t = model.boundary[b].transmissibility;
            let fnw = if mob.boundary_non_wetting[b] == 0.0 { 0.0 } else { t * mob.boundary_non_wetting[b] * dn };
            (t * mob.boundary_wetting[b] * dw, fnw)
        })
        .unzip();
    PhaseFluxes {
        wetting,
        non_wetting,
        boundary_wetting,
        boundary_non_wetting,
    }
}

/// Phase Darcy fluxes with phase-potential upwinding against `p` itself.
pub fn phase_darcy_flux(model: &Model, props: &[CellProps], p: &[f64]) -> PhaseFluxes {
    let mob = upwind_mobilities(model, props, p);
    fluxes_with(model, props, p, &mob)
}
