//! Snapshots read back with an independent VTK parser.

use dnapl_core::grid::{BoxRegion, Grid, MaterialId, MaterialMap};
use dnapl_core::io::write_snapshot;
use vtkio::model::{Attribute, DataSet, Piece};
use vtkio::Vtk;

type CellArrays = (Vec<f64>, Vec<f64>, Vec<i32>, [f32; 3], [f32; 3]);

fn cell_arrays(vtk: Vtk) -> CellArrays {
    let DataSet::ImageData {
        origin, spacing, pieces, ..
    } = vtk.data
    else {
        panic!("expected structured points");
    };
    let Piece::Inline(piece) = pieces.into_iter().next().unwrap() else {
        panic!("expected inline piece");
    };
    let mut s = None;
    let mut p = None;
    let mut m = None;
    for attr in piece.data.cell {
        let Attribute::DataArray(a) = attr else { continue };
        match a.name.as_str() {
            "s_n" => s = a.data.cast_into::<f64>(),
            "p_w" => p = a.data.cast_into::<f64>(),
            "material_id" => m = a.data.cast_into::<i32>(),
            _ => {}
        }
    }
    (s.unwrap(), p.unwrap(), m.unwrap(), origin, spacing)
}

#[test]
fn section_snapshot_parses_with_vtkio() {
    let grid = Grid::build(&[4.0, 3.0], &[8, 6]).unwrap();
    let map = MaterialMap::assign(
        &grid,
        MaterialId(0),
        vec![BoxRegion {
            min: vec![1.0, 1.0],
            max: vec![2.0, 1.5],
            material: MaterialId(1),
        }],
    );
    let n = grid.num_cells();
    let s: Vec<f64> = (0..n).map(|c| 0.001 + 0.01 * c as f64).collect();
    let p: Vec<f64> = (0..n).map(|c| 9810.0 * (3.0 - grid.elevation(c))).collect();
    let dir = tempfile::tempdir().unwrap();
    for ascii in [true, false] {
        let path = dir.path().join(format!("snap_{ascii}.vtk"));
        write_snapshot(&path, &grid, &map, &s, &p, ascii, "section").unwrap();
        let vtk = Vtk::import(&path).unwrap();
        assert_eq!(vtk.title, "section");
        let (s2, p2, m2, origin, spacing) = cell_arrays(vtk);
        assert_eq!(origin, [0.0, 0.0, 0.0]);
        assert_eq!(spacing, [0.5, 1.0, 0.5]);
        assert_eq!(s2.len(), n);
        for c in 0..n {
            assert!((s2[c] - s[c]).abs() <= 1e-12 * s[c].abs().max(1.0));
            assert!((p2[c] - p[c]).abs() <= 1e-9 * p[c].abs().max(1.0));
        }
        let lens: Vec<usize> = (0..n).filter(|&c| m2[c] == 1).collect();
        assert_eq!(lens, BoxRegion { min: vec![1.0, 1.0], max: vec![2.0, 1.5], material: MaterialId(1) }.cells(&grid));
    }
}
