//! Mass accounting and plume geometry of a saturation field.
//!
//! All masses are reported above a per-cell baseline saturation, so an
//! artificial initial saturation does not show up as contaminant mass.

use rayon::prelude::*;

use crate::grid::Grid;
use crate::model::Model;

const CHUNK: usize = 4096;

/// Sums per-cell terms in fixed chunks so the result does not depend on
/// the thread count.
fn ordered_sum(n: usize, term: impl Fn(usize) -> f64 + Sync) -> f64 {
    let partial: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| (chunk * CHUNK..((chunk + 1) * CHUNK).min(n)).map(&term).sum::<f64>())
        .collect();
    partial.iter().sum()
}

/// Non-wetting mass `sum(phi V rho_n (s_n - baseline))`, kg.
pub fn total_mass(model: &Model, s_n: &[f64], baseline: f64) -> f64 {
    let rho = model.non_wetting.density;
    ordered_sum(s_n.len(), |c| model.pore_volume[c] * rho * (s_n[c] - baseline))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassPartitionReport {
    pub time: f64,
    /// `pool_mass + ganglia_mass + background_mass`.
    pub total_mass: f64,
    pub pool_mass: f64,
    pub ganglia_mass: f64,
    /// Mass in cells at or below the ganglia floor.
    pub background_mass: f64,
    pub injected_to_date: f64,
}

/// Classification of a cell saturation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassClass {
    Pool,
    Ganglia,
    Background,
}

pub fn classify(s_n: f64, pool_threshold: f64, ganglia_floor: f64) -> MassClass {
    if s_n >= pool_threshold {
        MassClass::Pool
    } else if s_n > ganglia_floor {
        MassClass::Ganglia
    } else {
        MassClass::Background
    }
}

/// Splits the mass above `baseline` into pool, ganglia and background.
pub fn partition_pool_ganglia(
    model: &Model,
    s_n: &[f64],
    baseline: f64,
    pool_threshold: f64,
    ganglia_floor: f64,
    time: f64,
    injected_to_date: f64,
) -> MassPartitionReport {
    let rho = model.non_wetting.density;
    let class_mass = |class: MassClass| {
        ordered_sum(s_n.len(), |c| {
            if classify(s_n[c], pool_threshold, ganglia_floor) == class {
                model.pore_volume[c] * rho * (s_n[c] - baseline)
            } else {
                0.0
            }
        })
    };
    let pool_mass = class_mass(MassClass::Pool);
    let ganglia_mass = class_mass(MassClass::Ganglia);
    let background_mass = class_mass(MassClass::Background);
    MassPartitionReport {
        time,
        total_mass: pool_mass + ganglia_mass + background_mass,
        pool_mass,
        ganglia_mass,
        background_mass,
        injected_to_date,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlumeMetrics {
    /// Deepest cell-center depth below the top with `s_n` above detection; 0 if none.
    pub front_depth: f64,
    /// Bounding-box width of the detected cells along each horizontal axis.
    pub lateral_extent: Vec<f64>,
    pub max_sn: f64,
    /// Center of the cell holding `max_sn` (first such cell).
    pub max_location: [f64; 3],
    /// Face-connected groups of detected cells.
    pub connected_components: usize,
}

impl PlumeMetrics {
    /// Widest horizontal extent, 0 without horizontal axes.
    pub fn max_lateral_extent(&self) -> f64 {
        self.lateral_extent.iter().copied().fold(0.0, f64::max)
    }
}

pub fn plume_metrics(grid: &Grid, s_n: &[f64], detection: f64) -> PlumeMetrics {
    let n = grid.num_cells();
    let detected: Vec<bool> = s_n.iter().map(|&s| s > detection).collect();
    let (max_cell, max_sn) = s_n
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bc, bs), (c, s)| if s > bs { (c, s) } else { (bc, bs) });

    let mut front_depth = 0.0f64;
    let horizontal = grid.horizontal_axes();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for c in (0..n).filter(|&c| detected[c]) {
        any = true;
        front_depth = front_depth.max(grid.depth(c));
        let ijk = grid.ijk(c);
        for a in horizontal.clone() {
            lo[a] = lo[a].min(ijk[a]);
            hi[a] = hi[a].max(ijk[a]);
        }
    }
    let spacing = grid.spacing();
    let lateral_extent = horizontal
        .map(|a| if any { (hi[a] - lo[a] + 1) as f64 * spacing[a] } else { 0.0 })
        .collect();

    PlumeMetrics {
        front_depth,
        lateral_extent,
        max_sn: if n == 0 { 0.0 } else { max_sn },
        max_location: grid.cell_center(max_cell),
        connected_components: count_components(grid, &detected),
    }
}

/// Number of face-connected components among flagged cells.
pub fn count_components(grid: &Grid, flagged: &[bool]) -> usize {
    let dims = grid.dims();
    let mut seen = vec![false; flagged.len()];
    let mut stack = Vec::new();
    let mut count = 0;
    for start in 0..flagged.len() {
        if !flagged[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(c) = stack.pop() {
            let ijk = grid.ijk(c);
            for axis in 0..3 {
                let stride = grid.stride(axis);
                let mut visit = |nb: usize| {
                    if flagged[nb] && !seen[nb] {
                        seen[nb] = true;
                        stack.push(nb);
                    }
                };
                if ijk[axis] > 0 {
                    visit(c - stride);
                }
                if ijk[axis] + 1 < dims[axis] {
                    visit(c + stride);
                }
            }
        }
    }
    count
}

/// `|in_domain - injected + outflow + clamped| / max(injected, floor)`.
pub fn relative_mass_error(in_domain: f64, injected: f64, outflow: f64, clamped: f64) -> f64 {
    const FLOOR: f64 = 1e-12;
    (in_domain - injected + outflow + clamped).abs() / injected.max(FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{FluidProperties, MaterialProperties};
    use crate::grid::{MaterialId, MaterialMap};
    use approx::assert_relative_eq;

    fn model(extents: &[f64], cells: &[usize]) -> Model {
        let grid = Grid::build(extents, cells).unwrap();
        let map = MaterialMap::assign(&grid, MaterialId(0), vec![]);
        Model::assemble(
            grid,
            map,
            vec![MaterialProperties::SAND],
            FluidProperties::WATER,
            FluidProperties::PCE,
            9.81,
            true,
            0.0,
            &[],
        )
        .unwrap()
    }

    #[test]
    fn total_mass_examples() {
        let m = model(&[1.0, 1.0, 1.0], &[1, 1, 1]);
        assert_eq!(total_mass(&m, &[0.0], 0.0), 0.0);
        assert_relative_eq!(total_mass(&m, &[0.1], 0.0), 48.9, max_relative = 1e-12);
        let big = model(&[50.0, 15.0, 15.0], &[10, 3, 3]);
        let s = vec![0.001; big.num_cells()];
        assert_relative_eq!(total_mass(&big, &s, 0.0), 5501.25, max_relative = 1e-12);
        assert_eq!(total_mass(&big, &s, 0.001), 0.0);
    }

    #[test]
    fn partition_all_pool() {
        let m = model(&[2.0, 2.0], &[2, 2]);
        let r = partition_pool_ganglia(&m, &[0.3; 4], 0.0, 0.16, 0.01, 0.0, 0.0);
        assert_eq!(r.ganglia_mass, 0.0);
        assert_eq!(r.pool_mass, r.total_mass);
    }

    #[test]
    fn partition_ratio_and_identity() {
        let m = model(&[2.0], &[2]);
        let r = partition_pool_ganglia(&m, &[0.05, 0.20], 0.0, 0.16, 0.01, 0.0, 0.0);
        assert_relative_eq!(r.ganglia_mass / r.pool_mass, 0.25, max_relative = 1e-14);
        assert_eq!(r.pool_mass + r.ganglia_mass + r.background_mass, r.total_mass);
        let r = partition_pool_ganglia(&m, &[0.005, 0.01], 0.001, 0.16, 0.01, 0.0, 0.0);
        assert_eq!(r.pool_mass + r.ganglia_mass, 0.0);
        assert_relative_eq!(r.background_mass, total_mass(&m, &[0.005, 0.01], 0.001), max_relative = 1e-14);
    }

    #[test]
    fn classification_edges() {
        assert_eq!(classify(0.16, 0.16, 0.01), MassClass::Pool);
        assert_eq!(classify(0.01, 0.16, 0.01), MassClass::Background);
        assert_eq!(classify(0.0100001, 0.16, 0.01), MassClass::Ganglia);
    }

    #[test]
    fn metrics_empty_and_single() {
        let g = Grid::build(&[3.0, 3.0], &[3, 3]).unwrap();
        let none = plume_metrics(&g, &[0.0; 9], 0.01);
        assert_eq!(none.front_depth, 0.0);
        assert_eq!(none.connected_components, 0);
        assert_eq!(none.lateral_extent, vec![0.0]);
        let mut s = vec![0.0; 9];
        s[g.index([1, 1, 0])] = 0.2;
        let one = plume_metrics(&g, &s, 0.01);
        assert_eq!(one.connected_components, 1);
        assert_eq!(one.lateral_extent, vec![1.0]);
        assert_eq!(one.front_depth, 1.5);
        assert_eq!(one.max_sn, 0.2);
        assert_eq!(one.max_location, [1.5, 1.5, 0.5]);
    }

    #[test]
    fn separated_cells_are_two_components() {
        // middle row undetected, as if it were clay
        let g = Grid::build(&[3.0, 3.0], &[3, 3]).unwrap();
        let mut s = vec![0.0; 9];
        s[g.index([1, 0, 0])] = 0.1;
        s[g.index([1, 2, 0])] = 0.1;
        let m = plume_metrics(&g, &s, 0.01);
        assert_eq!(m.connected_components, 2);
        assert_eq!(m.front_depth, 2.5);
        s[g.index([1, 1, 0])] = 0.1;
        assert_eq!(plume_metrics(&g, &s, 0.01).connected_components, 1);
        // diagonal neighbours do not connect
        let mut d = vec![0.0; 9];
        d[g.index([0, 0, 0])] = 0.1;
        d[g.index([1, 1, 0])] = 0.1;
        assert_eq!(plume_metrics(&g, &d, 0.01).connected_components, 2);
    }

    #[test]
    fn mass_error_closed_domain() {
        assert_eq!(relative_mass_error(0.0, 0.0, 0.0, 0.0), 0.0);
        assert_relative_eq!(relative_mass_error(9.0, 10.0, 0.5, 0.5), 0.0, epsilon = 1e-15);
        assert_relative_eq!(relative_mass_error(9.9, 10.0, 0.0, 0.0), 0.01, max_relative = 1e-12);
    }
}
