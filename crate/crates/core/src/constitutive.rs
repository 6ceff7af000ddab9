//! Brooks-Corey capillary pressure and Burdine relative permeabilities.
//!
//! Every function here is a pure function of its arguments. Saturations
//! outside the mobile range are clamped rather than rejected, since the
//! explicit transport step may overshoot by truncation error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on effective saturation used when evaluating capillary
/// pressure, which is singular at `Se = 0`.
pub const SE_FLOOR: f64 = 1e-4;

/// Per-lithology constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialProperties {
    /// Absolute permeability, m².
    pub permeability: f64,
    pub porosity: f64,
    /// Residual wetting (water) saturation.
    pub s_wr: f64,
    /// Residual non-wetting (DNAPL) saturation.
    pub s_nr: f64,
    /// Entry (displacement) pressure, Pa.
    pub p_entry: f64,
    /// Pore-size distribution index.
    pub lambda: f64,
}

impl MaterialProperties {
    /// Sand column of the reference hydrogeological table.
    pub const SAND: MaterialProperties = MaterialProperties {
        permeability: 1.5e-10,
        porosity: 0.3,
        s_wr: 0.098,
        s_nr: 0.01,
        p_entry: 1323.0,
        lambda: 3.86,
    };

    /// Clay column of the reference hydrogeological table.
    pub const CLAY: MaterialProperties = MaterialProperties {
        permeability: 5e-14,
        porosity: 0.2,
        s_wr: 0.19,
        s_nr: 0.008,
        p_entry: 4500.0,
        lambda: 3.51,
    };

    /// Checks the physical invariants, returning one message per violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.permeability > 0.0 && self.permeability.is_finite()) {
            out.push("permeability > 0".to_string());
        }
        if !(self.porosity > 0.0 && self.porosity < 1.0) {
            out.push("0 < porosity < 1".to_string());
        }
        if !(self.s_wr >= 0.0) {
            out.push("residual wetting saturation >= 0".to_string());
        }
        if !(self.s_nr >= 0.0) {
            out.push("residual non-wetting saturation >= 0".to_string());
        }
        if !(self.s_wr + self.s_nr < 1.0) {
            out.push("s_wr + s_nr < 1".to_string());
        }
        if !(self.p_entry > 0.0 && self.p_entry.is_finite()) {
            out.push("entry pressure > 0".to_string());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            out.push("lambda > 0".to_string());
        }
        out
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Material {
                name: name.to_string(),
                reason: v.join(", "),
            })
        }
    }

    /// Width of the mobile saturation range, `1 - s_wr - s_nr`.
    pub fn mobile_range(&self) -> f64 {
        1.0 - self.s_wr - self.s_nr
    }
}

/// Density and viscosity of one fluid phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProperties {
    /// kg/m³
    pub density: f64,
    /// Pa·s
    pub viscosity: f64,
}

impl FluidProperties {
    pub const WATER: FluidProperties = FluidProperties {
        density: 1000.0,
        viscosity: 1.0e-3,
    };

    /// Perchloroethylene.
    pub const PCE: FluidProperties = FluidProperties {
        density: 1630.0,
        viscosity: 0.9e-3,
    };

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.density > 0.0 && self.density.is_finite()) {
            out.push("density > 0".to_string());
        }
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            out.push("viscosity > 0".to_string());
        }
        out
    }
}

/// Normalized wetting saturation `(s_w - s_wr) / (1 - s_wr - s_nr)`, clamped to `[0, 1]`.
pub fn effective_saturation(s_w: f64, props: &MaterialProperties) -> f64 {
    ((s_w - props.s_wr) / props.mobile_range()).clamp(0.0, 1.0)
}

/// Brooks-Corey capillary pressure `p_entry * Se^(-1/lambda)`.
pub fn capillary_pressure(s_e: f64, props: &MaterialProperties) -> f64 {
    let s_e = s_e.clamp(SE_FLOOR, 1.0);
    if s_e == 1.0 {
        return props.p_entry;
    }
    props.p_entry * s_e.powf(-1.0 / props.lambda)
}

/// Returned when a capillary pressure lies below the entry pressure; the
/// medium is then fully water saturated (`Se = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BelowEntryPressure;

/// Inverts [`capillary_pressure`]: `(p_c / p_entry)^(-lambda)`.
pub fn inverse_capillary_pressure(
    p_c: f64,
    props: &MaterialProperties,
) -> std::result::Result<f64, BelowEntryPressure> {
    if p_c < props.p_entry {
        return Err(BelowEntryPressure);
    }
    Ok((p_c / props.p_entry).powf(-props.lambda))
}

/// Derivative of capillary pressure with respect to effective saturation
/// (non-positive). Zero below the floor, where the clamped curve is flat.
pub fn capillary_pressure_slope(s_e: f64, props: &MaterialProperties) -> f64 {
    if s_e < SE_FLOOR {
        return 0.0;
    }
    let s_e = s_e.min(1.0);
    -(props.p_entry / props.lambda) * s_e.powf(-1.0 / props.lambda - 1.0)
}

/// Burdine wetting relative permeability `Se^((2 + 3 lambda) / lambda)`.
pub fn relperm_wetting(s_e: f64, props: &MaterialProperties) -> f64 {
    let s_e = s_e.clamp(0.0, 1.0);
    s_e.powf((2.0 + 3.0 * props.lambda) / props.lambda)
}

/// Burdine non-wetting relative permeability `(1 - Se)^2 (1 - Se^((2 + lambda) / lambda))`.
pub fn relperm_nonwetting(s_e: f64, props: &MaterialProperties) -> f64 {
    let s_e = s_e.clamp(0.0, 1.0);
    let one_minus = 1.0 - s_e;
    one_minus * one_minus * (1.0 - s_e.powf((2.0 + props.lambda) / props.lambda))
}

/// `d krn / d Se` (non-positive on `[0, 1]`).
pub fn relperm_nonwetting_slope(s_e: f64, props: &MaterialProperties) -> f64 {
    let s_e = s_e.clamp(0.0, 1.0);
    let a = (2.0 + props.lambda) / props.lambda;
    let one_minus = 1.0 - s_e;
    -2.0 * one_minus * (1.0 - s_e.powf(a)) - one_minus * one_minus * a * s_e.powf(a - 1.0)
}

/// Phase mobility `kr / mu`, in 1/(Pa·s).
pub fn phase_mobility(kr: f64, fluid: &FluidProperties) -> f64 {
    kr / fluid.viscosity
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const SAND: MaterialProperties = MaterialProperties::SAND;
    const CLAY: MaterialProperties = MaterialProperties::CLAY;

    #[test]
    fn effective_saturation_endpoints() {
        assert_eq!(effective_saturation(0.098, &SAND), 0.0);
        assert_eq!(effective_saturation(0.99, &SAND), 1.0);
        assert_relative_eq!(effective_saturation(0.544, &SAND), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn effective_saturation_clamps() {
        assert_eq!(effective_saturation(0.0, &SAND), 0.0);
        assert_eq!(effective_saturation(1.0, &SAND), 1.0);
        assert_eq!(effective_saturation(0.999, &CLAY), 1.0);
    }

    #[test]
    fn capillary_pressure_examples() {
        assert_eq!(capillary_pressure(1.0, &SAND), 1323.0);
        assert_eq!(capillary_pressure(1.0, &CLAY), 4500.0);
        // 1323 * 0.5^(-1/3.86), evaluated at 40 digits
        assert_relative_eq!(
            capillary_pressure(0.5, &SAND),
            1583.240496022018,
            max_relative = 1e-13
        );
    }

    #[test]
    fn capillary_pressure_is_finite_at_zero() {
        let pc = capillary_pressure(0.0, &SAND);
        assert!(pc.is_finite());
        assert_eq!(pc, capillary_pressure(SE_FLOOR, &SAND));
    }

    #[test]
    fn inverse_capillary_pressure_examples() {
        assert_eq!(inverse_capillary_pressure(1323.0, &SAND), Ok(1.0));
        assert_eq!(inverse_capillary_pressure(4500.0, &CLAY), Ok(1.0));
        let se = inverse_capillary_pressure(1583.240496022018, &SAND).unwrap();
        assert_relative_eq!(se, 0.5, max_relative = 1e-12);
        assert_eq!(
            inverse_capillary_pressure(1000.0, &SAND),
            Err(BelowEntryPressure)
        );
    }

    #[test]
    fn relperm_examples() {
        assert_eq!(relperm_wetting(0.0, &SAND), 0.0);
        assert_eq!(relperm_wetting(1.0, &SAND), 1.0);
        assert_relative_eq!(
            relperm_wetting(0.5, &SAND),
            0.087284257526845,
            max_relative = 1e-12
        );
        assert_eq!(relperm_nonwetting(1.0, &SAND), 0.0);
        assert_eq!(relperm_nonwetting(0.0, &SAND), 1.0);
        assert_relative_eq!(
            relperm_nonwetting(0.5, &SAND),
            0.162715742473155,
            max_relative = 1e-12
        );
    }

    #[test]
    fn mobility_examples() {
        let water = FluidProperties::WATER;
        assert_eq!(phase_mobility(0.0, &water), 0.0);
        assert_relative_eq!(phase_mobility(1.0, &water), 1000.0);
        assert_relative_eq!(phase_mobility(0.0873, &water), 87.3, max_relative = 1e-12);
    }

    #[test]
    fn slopes_match_finite_differences() {
        let h = 1e-6;
        for &se in &[0.05, 0.3, 0.5, 0.8, 0.95] {
            let fd = (relperm_nonwetting(se + h, &SAND) - relperm_nonwetting(se - h, &SAND)) / (2.0 * h);
            assert_relative_eq!(relperm_nonwetting_slope(se, &SAND), fd, max_relative = 1e-6);
            let fd = (capillary_pressure(se + h, &SAND) - capillary_pressure(se - h, &SAND)) / (2.0 * h);
            assert_relative_eq!(capillary_pressure_slope(se, &SAND), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn reference_materials_are_valid() {
        assert!(SAND.violations().is_empty());
        assert!(CLAY.violations().is_empty());
        let bad = MaterialProperties { lambda: 0.0, ..SAND };
        assert_eq!(bad.violations(), vec!["lambda > 0".to_string()]);
        let bad = MaterialProperties { permeability: 0.0, ..SAND };
        assert!(bad.validate("x").is_err());
    }

    fn material() -> impl Strategy<Value = MaterialProperties> {
        (0.2f64..8.0, 100.0f64..20_000.0).prop_map(|(lambda, p_entry)| MaterialProperties {
            lambda,
            p_entry,
            ..SAND
        })
    }

    proptest! {
        #[test]
        fn capillary_pressure_strictly_decreasing(m in material(), a in 1e-4f64..1.0, b in 1e-4f64..1.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(capillary_pressure(lo, &m) > capillary_pressure(hi, &m));
            prop_assert_eq!(capillary_pressure(1.0, &m), m.p_entry);
        }

        #[test]
        fn inverse_round_trip(m in material(), se in SE_FLOOR..=1.0f64) {
            let pc = capillary_pressure(se, &m);
            let back = inverse_capillary_pressure(pc, &m).unwrap();
            prop_assert!(((back - se) / se).abs() < 1e-12);
            let pc2 = capillary_pressure(back, &m);
            prop_assert!(((pc2 - pc) / pc).abs() < 1e-12);
        }

        #[test]
        fn relperms_bounded_and_monotone(m in material(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            for se in [lo, hi] {
                let w = relperm_wetting(se, &m);
                let n = relperm_nonwetting(se, &m);
                prop_assert!((0.0..=1.0).contains(&w));
                prop_assert!((0.0..=1.0).contains(&n));
            }
            prop_assert!(relperm_wetting(lo, &m) <= relperm_wetting(hi, &m));
            prop_assert!(relperm_nonwetting(lo, &m) >= relperm_nonwetting(hi, &m));
        }
    }
}
