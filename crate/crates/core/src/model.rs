//! Discrete model built from a validated scenario: grid, materials, faces,
//! interface rules, boundary faces and resolved sources.

use crate::constitutive::{FluidProperties, MaterialProperties};
use crate::error::{Error, Result, ValidationIssue};
use crate::grid::{face_transmissibilities, BoxRegion, FaceSet, Grid, MaterialId, MaterialMap, Side};
use crate::interface::{FaceRule, RuleTable};
use crate::pressure::StencilPattern;
use crate::scenario::{parse_side, Phase, Scenario};

/// Face on the domain boundary held at hydrostatic water pressure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletFace {
    pub cell: usize,
    pub axis: usize,
    pub side: Side,
    /// Half-cell transmissibility `A k / (dx / 2)`, m³.
    pub transmissibility: f64,
    /// Elevation of the face center.
    pub elevation: f64,
    /// Water pressure on the face.
    pub pressure: f64,
}

/// One injection resolved onto grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub phase: Phase,
    pub cells: Vec<usize>,
    /// Total volumetric rate over all cells, m³/s.
    pub volumetric_rate: f64,
    pub start: f64,
    pub end: f64,
}

impl Source {
    pub fn is_active(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub grid: Grid,
    pub map: MaterialMap,
    pub materials: Vec<MaterialProperties>,
    pub material_names: Vec<String>,
    pub wetting: FluidProperties,
    pub non_wetting: FluidProperties,
    pub gravity: f64,
    pub capillarity: bool,
    pub top_pressure: f64,
    pub faces: FaceSet,
    /// Entry rule for each face, `None` on homogeneous faces.
    pub face_rules: Vec<Option<FaceRule>>,
    pub rules: RuleTable,
    pub boundary: Vec<DirichletFace>,
    /// Boundary faces touching each cell, as indices into `boundary`.
    boundary_of: Vec<Vec<usize>>,
    pub sources: Vec<Source>,
    pub elevation: Vec<f64>,
    pub pore_volume: Vec<f64>,
    /// Matrix layout shared by the pressure and capillary systems.
    pub stencil: StencilPattern,
}

impl Model {
    pub fn from_scenario(scenario: &Scenario) -> Result<Self> {
        scenario.validate().map_err(Error::Validation)?;
        let origin = scenario
            .grid
            .origin_m
            .clone()
            .unwrap_or_else(|| vec![0.0; scenario.grid.extents_m.len()]);
        let grid = Grid::with_origin(&scenario.grid.extents_m, &scenario.grid.cells, &origin)?;
        let lookup = |name: &str| scenario.material_id(name).expect("validated material name");
        let regions = scenario
            .layout
            .regions
            .iter()
            .map(|r| BoxRegion {
                min: r.min_m.clone(),
                max: r.max_m.clone(),
                material: lookup(&r.material),
            })
            .collect();
        let map = MaterialMap::assign(&grid, lookup(&scenario.layout.background), regions);

        let mut sources = Vec::new();
        let mut issues = Vec::new();
        for (k, inj) in scenario.injection.iter().enumerate() {
            let region = BoxRegion {
                min: inj.min_m.clone(),
                max: inj.max_m.clone(),
                material: MaterialId(0),
            };
            let cells = region.cells(&grid);
            if cells.is_empty() {
                issues.push(ValidationIssue::new(
                    format!("injection[{k}]"),
                    "inlet box contains no cell centers",
                ));
                continue;
            }
            let density = match inj.phase {
                Phase::Wetting => scenario.fluids.wetting.density_kg_per_m3,
                Phase::NonWetting => scenario.fluids.non_wetting.density_kg_per_m3,
            };
            sources.push(Source {
                phase: inj.phase,
                cells,
                volumetric_rate: inj.rate_kg_per_s / density,
                start: inj.start_s,
                end: inj.end_s,
            });
        }
        if !issues.is_empty() {
            return Err(Error::Validation(issues));
        }

        let sides = scenario
            .boundary
            .hydrostatic
            .iter()
            .map(|s| parse_side(s, grid.ndim()).expect("validated side"))
            .collect::<Vec<_>>();

        let mut model = Self::assemble(
            grid,
            map,
            scenario.material_table(),
            scenario.wetting(),
            scenario.non_wetting(),
            scenario.grid.gravity_m_per_s2,
            scenario.solver.capillarity,
            scenario.boundary.top_pressure_pa,
            &sides,
        )?;
        model.material_names = scenario.material_names().into_iter().map(String::from).collect();
        model.sources = sources;
        Ok(model)
    }

    /// Builds a model directly from its parts, without sources.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        grid: Grid,
        map: MaterialMap,
        materials: Vec<MaterialProperties>,
        wetting: FluidProperties,
        non_wetting: FluidProperties,
        gravity: f64,
        capillarity: bool,
        top_pressure: f64,
        hydrostatic_sides: &[(usize, Side)],
    ) -> Result<Self> {
        for (i, m) in materials.iter().enumerate() {
            m.validate(&format!("#{i}"))?;
        }
        let rules = RuleTable::build(&materials).map_err(|e| Error::Material {
            name: format!("pair {:?}", e.pair),
            reason: format!(
                "threshold saturation closed form {} disagrees with bisection {}",
                e.closed_form, e.bisection
            ),
        })?;
        let faces = face_transmissibilities(&grid, &map, &materials);
        let face_rules = faces
            .faces
            .iter()
            .map(|f| {
                if f.heterogeneous {
                    rules.face_rule(map.material(f.lo), map.material(f.hi))
                } else {
                    None
                }
            })
            .collect();

        let n = grid.num_cells();
        let top = grid.top();
        let mut boundary = Vec::new();
        let mut boundary_of = vec![Vec::new(); n];
        for &(axis, side) in hydrostatic_sides {
            let half = grid.spacing()[axis] / 2.0;
            for cell in grid.boundary_cells(axis, side) {
                let k = materials[map.material(cell).0].permeability;
                let elevation = if axis == grid.vertical_axis() {
                    match side {
                        Side::Min => grid.elevation(cell) - half,
                        Side::Max => grid.elevation(cell) + half,
                    }
                } else {
                    grid.elevation(cell)
                };
                boundary_of[cell].push(boundary.len());
                boundary.push(DirichletFace {
                    cell,
                    axis,
                    side,
                    transmissibility: grid.face_area(axis) * k / half,
                    elevation,
                    pressure: top_pressure + wetting.density * gravity * (top - elevation),
                });
            }
        }

        let pairs: Vec<(usize, usize)> = faces.faces.iter().map(|f| (f.lo, f.hi)).collect();
        let stencil = StencilPattern::from_faces(n, &pairs);
        let elevation = (0..n).map(|c| grid.elevation(c)).collect();
        let pore_volume = (0..n)
            .map(|c| materials[map.material(c).0].porosity * grid.cell_volume())
            .collect();
        Ok(Self {
            grid,
            map,
            material_names: (0..materials.len()).map(|i| format!("material{i}")).collect(),
            materials,
            wetting,
            non_wetting,
            gravity,
            capillarity,
            top_pressure,
            faces,
            face_rules,
            rules,
            boundary,
            boundary_of,
            sources: Vec::new(),
            elevation,
            pore_volume,
            stencil,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.grid.num_cells()
    }

    pub fn material(&self, cell: usize) -> &MaterialProperties {
        &self.materials[self.map.material(cell).0]
    }

    pub fn boundary_faces_of(&self, cell: usize) -> &[usize] {
        &self.boundary_of[cell]
    }

    /// Hydrostatic water pressure at cell centers.
    pub fn hydrostatic_pressure(&self) -> Vec<f64> {
        let top = self.grid.top();
        self.elevation
            .iter()
            .map(|z| self.top_pressure + self.wetting.density * self.gravity * (top - z))
            .collect()
    }

    /// Largest non-wetting saturation a cell can hold, `1 - s_wr`.
    pub fn max_saturation(&self, cell: usize) -> f64 {
        1.0 - self.material(cell).s_wr
    }

    /// Distinct material pairs that share at least one face.
    pub fn adjacent_pairs(&self) -> Vec<(MaterialId, MaterialId)> {
        let mut pairs: Vec<(MaterialId, MaterialId)> = self
            .faces
            .faces
            .iter()
            .filter(|f| f.heterogeneous)
            .map(|f| {
                let (a, b) = (self.map.material(f.lo), self.map.material(f.hi));
                if a < b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect();
        pairs.sort();
        pairs.dedup();
        pairs
    }
}
