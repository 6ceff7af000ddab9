//! Structured Cartesian grids, material assignment and face transmissibilities.
//!
//! Cells are numbered `i + nx * (j + ny * k)`. The last active axis is the
//! vertical one; coordinates along it are elevations, increasing upward, and
//! gravity points toward decreasing elevation. Axes beyond `ndim` have one
//! cell of unit thickness, so a 2D grid is a vertical section 1 m thick.

use serde::{Deserialize, Serialize};

use crate::constitutive::MaterialProperties;
use crate::error::{Error, Result};

/// Index into a scenario's material table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MaterialId(pub usize);

/// Side of a grid along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    ndim: usize,
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

impl Grid {
    /// Builds a grid of `resolution[a]` cells over `extents[a]` metres per axis.
    pub fn build(extents: &[f64], resolution: &[usize]) -> Result<Self> {
        Self::with_origin(extents, resolution, &vec![0.0; extents.len()])
    }

    pub fn with_origin(extents: &[f64], resolution: &[usize], origin: &[f64]) -> Result<Self> {
        let ndim = extents.len();
        if !(1..=3).contains(&ndim) {
            return Err(Error::Grid(format!("expected 1 to 3 axes, got {ndim}")));
        }
        if resolution.len() != ndim || origin.len() != ndim {
            return Err(Error::Grid(format!(
                "extents, resolution and origin must all have {ndim} entries"
            )));
        }
        let mut dims = [1usize; 3];
        let mut spacing = [1.0f64; 3];
        let mut org = [0.0f64; 3];
        for a in 0..ndim {
            if !(extents[a] > 0.0 && extents[a].is_finite()) {
                return Err(Error::Grid(format!("extent along axis {a} must be positive")));
            }
            if resolution[a] == 0 {
                return Err(Error::Grid(format!("resolution along axis {a} must be at least 1")));
            }
            if !origin[a].is_finite() {
                return Err(Error::Grid(format!("origin along axis {a} must be finite")));
            }
            dims[a] = resolution[a];
            spacing[a] = extents[a] / resolution[a] as f64;
            org[a] = origin[a];
        }
        Ok(Self {
            ndim,
            dims,
            spacing,
            origin: org,
        })
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    /// Axis along which gravity acts.
    pub fn vertical_axis(&self) -> usize {
        self.ndim - 1
    }

    /// Axes other than the vertical one.
    pub fn horizontal_axes(&self) -> std::ops::Range<usize> {
        0..self.ndim - 1
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.spacing[axis] * self.dims[axis] as f64
    }

    pub fn num_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Area of a face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        let [a, b] = other_axes(axis);
        self.spacing[a] * self.spacing[b]
    }

    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.dims[0] * (ijk[1] + self.dims[1] * ijk[2])
    }

    pub fn ijk(&self, cell: usize) -> [usize; 3] {
        let i = cell % self.dims[0];
        let rest = cell / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 3] {
        let ijk = self.ijk(cell);
        std::array::from_fn(|a| self.origin[a] + (ijk[a] as f64 + 0.5) * self.spacing[a])
    }

    /// Elevation of the cell center along the vertical axis.
    pub fn elevation(&self, cell: usize) -> f64 {
        let v = self.vertical_axis();
        self.origin[v] + (self.ijk(cell)[v] as f64 + 0.5) * self.spacing[v]
    }

    /// Elevation of the domain top.
    pub fn top(&self) -> f64 {
        let v = self.vertical_axis();
        self.origin[v] + self.extent(v)
    }

    /// Depth of the cell center below the domain top.
    pub fn depth(&self, cell: usize) -> f64 {
        self.top() - self.elevation(cell)
    }

    /// Cell containing `point` (first `ndim` coordinates used), if inside.
    pub fn locate(&self, point: &[f64]) -> Option<usize> {
        let mut ijk = [0usize; 3];
        #[allow(clippy::needless_range_loop)]
        for a in 0..self.ndim {
            let x = *point.get(a)?;
            let rel = (x - self.origin[a]) / self.spacing[a];
            if !(rel >= 0.0 && rel <= self.dims[a] as f64) {
                return None;
            }
            ijk[a] = (rel.floor() as usize).min(self.dims[a] - 1);
        }
        Some(self.index(ijk))
    }

    /// Cells touching one side of the domain along `axis`.
    pub fn boundary_cells(&self, axis: usize, side: Side) -> Vec<usize> {
        let fixed = match side {
            Side::Min => 0,
            Side::Max => self.dims[axis] - 1,
        };
        (0..self.num_cells())
            .filter(|&c| self.ijk(c)[axis] == fixed)
            .collect()
    }
}

fn other_axes(axis: usize) -> [usize; 2] {
    match axis {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

/// Axis-aligned box assigning a material to the cells whose centers it contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub material: MaterialId,
}

impl BoxRegion {
    pub fn contains(&self, point: &[f64]) -> bool {
        self.min
            .iter()
            .zip(&self.max)
            .zip(point)
            .all(|((lo, hi), x)| *lo <= *x && *x <= *hi)
    }

    /// Cells whose centers lie inside the box.
    pub fn cells(&self, grid: &Grid) -> Vec<usize> {
        (0..grid.num_cells())
            .filter(|&c| self.contains(&grid.cell_center(c)))
            .collect()
    }
}

/// Material id of every cell. Later regions override earlier ones.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMap {
    pub background: MaterialId,
    pub regions: Vec<BoxRegion>,
    cells: Vec<MaterialId>,
}

impl MaterialMap {
    pub fn assign(grid: &Grid, background: MaterialId, regions: Vec<BoxRegion>) -> Self {
        let cells = (0..grid.num_cells())
            .map(|c| {
                let center = grid.cell_center(c);
                regions
                    .iter()
                    .rev()
                    .find(|r| r.contains(&center))
                    .map_or(background, |r| r.material)
            })
            .collect();
        Self {
            background,
            regions,
            cells,
        }
    }

    pub fn material(&self, cell: usize) -> MaterialId {
        self.cells[cell]
    }

    pub fn cells(&self) -> &[MaterialId] {
        &self.cells
    }

    pub fn count(&self, id: MaterialId) -> usize {
        self.cells.iter().filter(|&&m| m == id).count()
    }
}

/// Interior face between cells `lo` and `hi = lo + stride(axis)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub lo: usize,
    pub hi: usize,
    pub axis: usize,
    /// Geometric transmissibility `A * harmonic_mean(k_lo, k_hi) / distance`, m³.
    pub transmissibility: f64,
    /// Materials differ across the face.
    pub heterogeneous: bool,
}

/// All interior faces, with per-cell incidence lists.
#[derive(Debug, Clone)]
pub struct FaceSet {
    pub faces: Vec<Face>,
    offsets: Vec<usize>,
    incidence: Vec<usize>,
}

impl FaceSet {
    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Indices of the faces touching `cell`, in ascending face order.
    pub fn faces_of(&self, cell: usize) -> &[usize] {
        &self.incidence[self.offsets[cell]..self.offsets[cell + 1]]
    }

    /// Transmissibility between two adjacent cells, in either order.
    pub fn between(&self, a: usize, b: usize) -> Option<f64> {
        self.faces_of(a)
            .iter()
            .map(|&f| &self.faces[f])
            .find(|f| (f.lo == a && f.hi == b) || (f.lo == b && f.hi == a))
            .map(|f| f.transmissibility)
    }
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Computes TPFA transmissibilities for every interior face.
pub fn face_transmissibilities(
    grid: &Grid,
    map: &MaterialMap,
    materials: &[MaterialProperties],
) -> FaceSet {
    let n = grid.num_cells();
    let dims = grid.dims();
    let mut faces = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for axis in 0..3 {
        if dims[axis] < 2 {
            continue;
        }
        let stride = grid.stride(axis);
        let geom = grid.face_area(axis) / grid.spacing()[axis];
        for lo in 0..n {
            if grid.ijk(lo)[axis] + 1 >= dims[axis] {
                continue;
            }
            let hi = lo + stride;
            let (ma, mb) = (map.material(lo), map.material(hi));
            let k = if ma == mb {
                materials[ma.0].permeability
            } else {
                harmonic_mean(materials[ma.0].permeability, materials[mb.0].permeability)
            };
            faces.push(Face {
                lo,
                hi,
                axis,
                transmissibility: geom * k,
                heterogeneous: ma != mb,
            });
        }
    }
    let mut counts = vec![0usize; n + 1];
    for f in &faces {
        counts[f.lo + 1] += 1;
        counts[f.hi + 1] += 1;
    }
    for c in 0..n {
        counts[c + 1] += counts[c];
    }
    let offsets = counts.clone();
    let mut fill = counts;
    let mut incidence = vec![0usize; offsets[n]];
    for (idx, f) in faces.iter().enumerate() {
        for cell in [f.lo, f.hi] {
            incidence[fill[cell]] = idx;
            fill[cell] += 1;
        }
    }
    FaceSet {
        faces,
        offsets,
        incidence,
    }
}
