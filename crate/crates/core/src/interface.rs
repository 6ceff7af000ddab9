//! Capillary entry condition at faces between different materials.
//!
//! DNAPL moving from a coarse medium (low entry pressure) into a fine one
//! (high entry pressure) is held back until the coarse-side capillary
//! pressure reaches the fine-side entry pressure. In effective-saturation
//! terms the face is blocked while the coarse-side `Se >= Se*`, where
//! `p_entry_coarse * Se*^(-1/lambda_coarse) = p_entry_fine`. Below `Se*`
//! capillary pressure is continuous across the face and the fine-side
//! saturation follows from equating both Brooks-Corey curves.
//!
//! The rule is applied as a modification of the non-wetting face mobility,
//! so a blocked face carries exactly zero DNAPL flux.

use crate::constitutive::{capillary_pressure, MaterialProperties};
use crate::grid::MaterialId;

/// Threshold saturation for one ordered material pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceRule {
    pub fine: MaterialId,
    pub coarse: MaterialId,
    pub se_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryState {
    Blocked,
    Penetrating,
}

/// `equilibrium_saturation` was asked for a coarse-side saturation at or
/// above the threshold, where the fine side stays water saturated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumNotApplicable {
    pub se_coarse: f64,
    pub se_star: f64,
}

/// Orders a pair so the first element has the lower entry pressure.
fn orient<'a>(
    a: &'a MaterialProperties,
    b: &'a MaterialProperties,
) -> (&'a MaterialProperties, &'a MaterialProperties) {
    if a.p_entry <= b.p_entry {
        (a, b)
    } else {
        (b, a)
    }
}

/// Closed-form threshold `(p_entry_coarse / p_entry_fine)^lambda_coarse`.
///
/// The pair is reoriented if `fine` has the lower entry pressure.
pub fn threshold_saturation(coarse: &MaterialProperties, fine: &MaterialProperties) -> f64 {
    let (coarse, fine) = orient(coarse, fine);
    if coarse.p_entry == fine.p_entry {
        return 1.0;
    }
    (coarse.p_entry / fine.p_entry).powf(coarse.lambda)
}

/// Threshold found by bisecting `pc_coarse(Se) - p_entry_fine` on `(0, 1]`.
/// Used to cross-check the closed form when a scenario is loaded.
pub fn threshold_saturation_bisection(coarse: &MaterialProperties, fine: &MaterialProperties) -> f64 {
    let (coarse, fine) = orient(coarse, fine);
    let residual = |se: f64| coarse.p_entry * se.powf(-1.0 / coarse.lambda) - fine.p_entry;
    if residual(1.0) >= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl InterfaceRule {
    pub fn new(
        a: MaterialId,
        a_props: &MaterialProperties,
        b: MaterialId,
        b_props: &MaterialProperties,
    ) -> Self {
        let (coarse, fine) = if a_props.p_entry <= b_props.p_entry {
            (a, b)
        } else {
            (b, a)
        };
        Self {
            fine,
            coarse,
            se_star: threshold_saturation(a_props, b_props),
        }
    }
}

/// Blocked iff the coarse-side effective saturation is at or above `Se*`.
pub fn entry_state(se_upwind: f64, rule: &InterfaceRule) -> EntryState {
    if se_upwind >= rule.se_star {
        EntryState::Blocked
    } else {
        EntryState::Penetrating
    }
}

/// Fine-side effective saturation in capillary equilibrium with `se_coarse`.
pub fn equilibrium_saturation(
    se_coarse: f64,
    coarse: &MaterialProperties,
    fine: &MaterialProperties,
) -> Result<f64, EquilibriumNotApplicable> {
    let se_star = threshold_saturation(coarse, fine);
    if se_star == 1.0 && coarse.p_entry == fine.p_entry && coarse.lambda == fine.lambda {
        return Ok(se_coarse);
    }
    if se_coarse > se_star {
        return Err(EquilibriumNotApplicable { se_coarse, se_star });
    }
    if se_coarse == se_star {
        return Ok(1.0);
    }
    let pc = coarse.p_entry * se_coarse.powf(-1.0 / coarse.lambda);
    Ok((fine.p_entry / pc).powf(fine.lambda).min(1.0))
}

/// Relative residual of capillary continuity between two effective saturations.
pub fn equilibrium_residual(
    se_coarse: f64,
    coarse: &MaterialProperties,
    se_fine: f64,
    fine: &MaterialProperties,
) -> f64 {
    let left = coarse.p_entry * se_coarse.powf(-1.0 / coarse.lambda);
    let right = fine.p_entry * se_fine.powf(-1.0 / fine.lambda);
    ((left - right) / right).abs()
}

/// A rule attached to a specific face, with the coarse side identified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceRule {
    /// True when the face's `lo` cell holds the coarse material.
    pub coarse_is_lo: bool,
    pub se_star: f64,
}

/// One side of a face as seen by the upwinding rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceSide {
    /// Effective wetting saturation.
    pub se: f64,
    /// Non-wetting mobility evaluated in this cell.
    pub mobility: f64,
}

/// Non-wetting face mobility with the entry condition applied.
///
/// `potential_drop` is the non-wetting potential of `lo` minus that of `hi`;
/// positive values drive DNAPL from `lo` to `hi`. Without a rule this is
/// plain phase-potential upwinding.
pub fn interface_upwind(
    potential_drop: f64,
    lo: FaceSide,
    hi: FaceSide,
    rule: Option<&FaceRule>,
) -> f64 {
    let lo_upwind = potential_drop >= 0.0;
    let (upwind, coarse_to_fine) = match rule {
        None => return if lo_upwind { lo.mobility } else { hi.mobility },
        Some(r) => {
            let upwind = if lo_upwind { lo } else { hi };
            (upwind, lo_upwind == r.coarse_is_lo)
        }
    };
    if coarse_to_fine {
        let rule = rule.expect("rule present");
        if upwind.se >= rule.se_star {
            return 0.0;
        }
    }
    upwind.mobility
}

/// Rules for every distinct material pair in a table, indexed `[a][b]`.
#[derive(Debug, Clone)]
pub struct RuleTable {
    rules: Vec<Vec<InterfaceRule>>,
}

/// Closed form and bisection disagree for a material pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMismatch {
    pub pair: (MaterialId, MaterialId),
    pub closed_form: f64,
    pub bisection: f64,
}

impl RuleTable {
    pub fn build(materials: &[MaterialProperties]) -> Result<Self, ThresholdMismatch> {
        let n = materials.len();
        let mut rules = Vec::with_capacity(n);
        for a in 0..n {
            let mut row = Vec::with_capacity(n);
            for b in 0..n {
                let rule = InterfaceRule::new(MaterialId(a), &materials[a], MaterialId(b), &materials[b]);
                let check = threshold_saturation_bisection(&materials[a], &materials[b]);
                if (check - rule.se_star).abs() > 1e-9 * rule.se_star.max(1e-300) + 1e-15 {
                    return Err(ThresholdMismatch {
                        pair: (MaterialId(a), MaterialId(b)),
                        closed_form: rule.se_star,
                        bisection: check,
                    });
                }
                row.push(rule);
            }
            rules.push(row);
        }
        Ok(Self { rules })
    }

    pub fn get(&self, a: MaterialId, b: MaterialId) -> &InterfaceRule {
        &self.rules[a.0][b.0]
    }

    /// Face rule for a face whose `lo` cell holds `lo` and `hi` cell holds `hi`.
    /// `None` when there is no entry barrier.
    pub fn face_rule(&self, lo: MaterialId, hi: MaterialId) -> Option<FaceRule> {
        if lo == hi {
            return None;
        }
        let rule = self.get(lo, hi);
        Some(FaceRule {
            coarse_is_lo: rule.coarse == lo,
            se_star: rule.se_star,
        })
    }
}

/// Capillary pressure continuity check used by diagnostics: coarse-side
/// capillary pressure at `Se*` against the fine-side entry pressure.
pub fn threshold_residual(coarse: &MaterialProperties, fine: &MaterialProperties) -> f64 {
    let (coarse, fine) = orient(coarse, fine);
    let se = threshold_saturation(coarse, fine);
    if se == 1.0 {
        return 0.0;
    }
    ((capillary_pressure(se, coarse) - fine.p_entry) / fine.p_entry).abs()
}
