//! Legacy VTK `STRUCTURED_POINTS` snapshots.
//!
//! The vertical model axis is always written as VTK `z`; absent axes get a
//! single cell of unit thickness. Cell ordering then matches the model's
//! `i + nx (j + ny k)` ordering in every dimension.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Grid, MaterialMap};

/// Cell counts, origin and spacing in VTK axis order.
pub fn vtk_geometry(grid: &Grid) -> ([usize; 3], [f64; 3], [f64; 3]) {
    let dims = grid.dims();
    let origin = grid.origin();
    let spacing = grid.spacing();
    // model axis feeding each VTK axis
    let map: [Option<usize>; 3] = match grid.ndim() {
        1 => [None, None, Some(0)],
        2 => [Some(0), None, Some(1)],
        _ => [Some(0), Some(1), Some(2)],
    };
    let pick = |f: &dyn Fn(usize) -> f64, absent: f64| map.map(|m| m.map_or(absent, f));
    let cells = map.map(|m| m.map_or(1, |a| dims[a]));
    (
        cells,
        pick(&|a| origin[a], 0.0),
        pick(&|a| spacing[a], 1.0),
    )
}

/// Writes `s_n`, `p_w` and `material_id` as cell data.
pub fn write_snapshot(
    path: impl AsRef<Path>,
    grid: &Grid,
    map: &MaterialMap,
    s_n: &[f64],
    p_w: &[f64],
    ascii: bool,
    title: &str,
) -> Result<()> {
    let path = path.as_ref();
    let (cells, origin, spacing) = vtk_geometry(grid);
    let n = grid.num_cells();
    let mut out: Vec<u8> = Vec::with_capacity(n * 24 + 512);
    let mut header = String::new();
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let _ = writeln!(header, "# vtk DataFile Version 3.0");
    let _ = writeln!(header, "{}", if title.is_empty() { "snapshot" } else { &title });
    let _ = writeln!(header, "{}", if ascii { "ASCII" } else { "BINARY" });
    let _ = writeln!(header, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(header, "DIMENSIONS {} {} {}", cells[0] + 1, cells[1] + 1, cells[2] + 1);
    let _ = writeln!(header, "ORIGIN {:e} {:e} {:e}", origin[0], origin[1], origin[2]);
    let _ = writeln!(header, "SPACING {:e} {:e} {:e}", spacing[0], spacing[1], spacing[2]);
    let _ = writeln!(header, "CELL_DATA {n}");
    out.extend_from_slice(header.as_bytes());

    let mut scalars = |name: &str, kind: &str, values: &mut dyn Iterator<Item = Value>| {
        out.extend_from_slice(format!("SCALARS {name} {kind} 1\nLOOKUP_TABLE default\n").as_bytes());
        for v in values {
            match (ascii, v) {
                (true, Value::F(x)) => out.extend_from_slice(format!("{x:e}\n").as_bytes()),
                (true, Value::I(x)) => out.extend_from_slice(format!("{x}\n").as_bytes()),
                (false, Value::F(x)) => out.extend_from_slice(&x.to_be_bytes()),
                (false, Value::I(x)) => out.extend_from_slice(&x.to_be_bytes()),
            }
        }
        if !ascii {
            out.push(b'\n');
        }
    };
    scalars("s_n", "double", &mut s_n.iter().map(|&x| Value::F(x)));
    scalars("p_w", "double", &mut p_w.iter().map(|&x| Value::F(x)));
    scalars("material_id", "int", &mut map.cells().iter().map(|m| Value::I(m.0 as i32)));

    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy)]
enum Value {
    F(f64),
    I(i32),
}

/// Contents of a snapshot written by [`write_snapshot`].
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub title: String,
    /// Cell counts per VTK axis.
    pub cells: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub s_n: Vec<f64>,
    pub p_w: Vec<f64>,
    pub material_id: Vec<i32>,
}

impl Snapshot {
    /// Cell containing a point given in VTK coordinates.
    pub fn locate(&self, point: [f64; 3]) -> Option<usize> {
        let mut ijk = [0usize; 3];
        for a in 0..3 {
            let rel = (point[a] - self.origin[a]) / self.spacing[a];
            if !(rel >= 0.0 && rel <= self.cells[a] as f64) {
                return None;
            }
            ijk[a] = (rel.floor() as usize).min(self.cells[a] - 1);
        }
        Some(ijk[0] + self.cells[0] * (ijk[1] + self.cells[1] * ijk[2]))
    }

    /// Center of a cell in VTK coordinates.
    pub fn cell_center(&self, cell: usize) -> [f64; 3] {
        let i = cell % self.cells[0];
        let rest = cell / self.cells[0];
        let ijk = [i, rest % self.cells[1], rest / self.cells[1]];
        std::array::from_fn(|a| self.origin[a] + (ijk[a] as f64 + 0.5) * self.spacing[a])
    }
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_snapshot(&bytes).map_err(|reason| Error::Vtk {
        path: PathBuf::from(path),
        reason,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> std::result::Result<&'a str, String> {
        if self.pos >= self.bytes.len() {
            return Err("unexpected end of file".into());
        }
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        self.pos += (end + 1).min(rest.len());
        std::str::from_utf8(&rest[..end])
            .map(|s| s.trim_end_matches('\r'))
            .map_err(|_| "header is not valid text".to_string())
    }

    fn nonempty_line(&mut self) -> std::result::Result<&'a str, String> {
        loop {
            let l = self.line()?;
            if !l.trim().is_empty() {
                return Ok(l);
            }
        }
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err("binary data truncated".into());
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn token(&mut self) -> std::result::Result<&'a str, String> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err("ASCII data truncated".into());
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| "invalid ASCII data".to_string())
    }
}

fn triple<T: std::str::FromStr>(line: &str, keyword: &str) -> std::result::Result<[T; 3], String> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(format!("expected {keyword}, found `{line}`"));
    }
    let vals: Vec<T> = parts
        .map(|p| p.parse().map_err(|_| format!("bad {keyword} value `{p}`")))
        .collect::<std::result::Result<_, _>>()?;
    vals.try_into().map_err(|_| format!("{keyword} needs three values"))
}

fn parse_snapshot(bytes: &[u8]) -> std::result::Result<Snapshot, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if !c.line()?.starts_with("# vtk DataFile") {
        return Err("missing `# vtk DataFile` signature".into());
    }
    let title = c.line()?.to_string();
    let ascii = match c.line()?.trim() {
        "ASCII" => true,
        "BINARY" => false,
        other => return Err(format!("unknown encoding `{other}`")),
    };
    if c.nonempty_line()?.trim() != "DATASET STRUCTURED_POINTS" {
        return Err("only DATASET STRUCTURED_POINTS is supported".into());
    }
    let mut dims: Option<[usize; 3]> = None;
    let mut origin = [0.0; 3];
    let mut spacing = [1.0; 3];
    let n = loop {
        let l = c.nonempty_line()?;
        let key = l.split_whitespace().next().unwrap_or("");
        match key {
            "DIMENSIONS" => dims = Some(triple(l, "DIMENSIONS")?),
            "ORIGIN" => origin = triple(l, "ORIGIN")?,
            "SPACING" | "ASPECT_RATIO" => spacing = triple(l, key)?,
            "CELL_DATA" => {
                break l
                    .split_whitespace()
                    .nth(1)
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or("bad CELL_DATA count")?
            }
            _ => return Err(format!("unexpected header line `{l}`")),
        }
    };
    let dims = dims.ok_or("missing DIMENSIONS")?;
    if dims.iter().any(|&d| d < 2) {
        return Err("DIMENSIONS must be at least 2 points per axis".into());
    }
    let cells = dims.map(|d| d - 1);
    if cells.iter().product::<usize>() != n {
        return Err(format!("CELL_DATA {n} does not match DIMENSIONS"));
    }

    let mut s_n = None;
    let mut p_w = None;
    let mut material_id = None;
    while c.pos < c.bytes.len() {
        let l = match c.nonempty_line() {
            Ok(l) => l,
            Err(_) => break,
        };
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() < 3 || parts[0] != "SCALARS" {
            return Err(format!("expected SCALARS, found `{l}`"));
        }
        let (name, kind) = (parts[1], parts[2]);
        if parts.get(3).is_some_and(|&k| k != "1") {
            return Err(format!("array `{name}` must have one component"));
        }
        if !c.nonempty_line()?.starts_with("LOOKUP_TABLE") {
            return Err(format!("array `{name}` lacks LOOKUP_TABLE"));
        }
        let mut floats = Vec::new();
        let mut ints = Vec::new();
        match (kind, ascii) {
            ("double", false) => {
                for ch in c.take(8 * n)?.chunks_exact(8) {
                    floats.push(f64::from_be_bytes(ch.try_into().unwrap()));
                }
            }
            ("float", false) => {
                for ch in c.take(4 * n)?.chunks_exact(4) {
                    floats.push(f32::from_be_bytes(ch.try_into().unwrap()) as f64);
                }
            }
            ("int", false) => {
                for ch in c.take(4 * n)?.chunks_exact(4) {
                    ints.push(i32::from_be_bytes(ch.try_into().unwrap()));
                }
            }
            ("double" | "float", true) => {
                for _ in 0..n {
                    let t = c.token()?;
                    floats.push(t.parse().map_err(|_| format!("bad value `{t}` in `{name}`"))?);
                }
            }
            ("int", true) => {
                for _ in 0..n {
                    let t = c.token()?;
                    ints.push(t.parse().map_err(|_| format!("bad value `{t}` in `{name}`"))?);
                }
            }
            _ => return Err(format!("unsupported data type `{kind}`")),
        }
        match name {
            "s_n" => s_n = Some(floats),
            "p_w" => p_w = Some(floats),
            "material_id" => material_id = Some(ints),
            _ => {}
        }
    }
    Ok(Snapshot {
        title,
        cells,
        origin,
        spacing,
        s_n: s_n.ok_or("missing array s_n")?,
        p_w: p_w.ok_or("missing array p_w")?,
        material_id: material_id.ok_or("missing array material_id")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoxRegion, MaterialId};

    fn fields(n: usize) -> (Vec<f64>, Vec<f64>) {
        let s: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1234567890123).sin().abs() * 0.9).collect();
        let p: Vec<f64> = (0..n).map(|i| 1e5 + i as f64 / 3.0).collect();
        (s, p)
    }

    #[test]
    fn header_uses_point_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::build(&[2.0, 2.0, 1.0], &[2, 2, 1]).unwrap();
        let map = MaterialMap::assign(&grid, MaterialId(0), vec![]);
        let path = dir.path().join("a.vtk");
        write_snapshot(&path, &grid, &map, &[0.0; 4], &[0.0; 4], true, "t").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("DIMENSIONS 3 3 2\n"));
        assert!(text.contains("CELL_DATA 4\n"));
    }

    #[test]
    fn binary_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::build(&[3.0, 2.0], &[6, 4]).unwrap();
        let map = MaterialMap::assign(
            &grid,
            MaterialId(0),
            vec![BoxRegion {
                min: vec![1.0, 0.5],
                max: vec![2.0, 1.0],
                material: MaterialId(1),
            }],
        );
        let (s, p) = fields(24);
        for ascii in [false, true] {
            let path = dir.path().join(format!("b{ascii}.vtk"));
            write_snapshot(&path, &grid, &map, &s, &p, ascii, "round trip").unwrap();
            let snap = read_snapshot(&path).unwrap();
            assert_eq!(snap.cells, [6, 1, 4]);
            assert_eq!(snap.title, "round trip");
            assert_eq!(snap.s_n.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), s.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            assert_eq!(snap.p_w, p);
            let ids: Vec<i32> = map.cells().iter().map(|m| m.0 as i32).collect();
            assert_eq!(snap.material_id, ids);
        }
    }

    #[test]
    fn locate_matches_grid() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::build(&[3.0, 2.0], &[6, 4]).unwrap();
        let map = MaterialMap::assign(&grid, MaterialId(0), vec![]);
        let (s, p) = fields(24);
        let path = dir.path().join("c.vtk");
        write_snapshot(&path, &grid, &map, &s, &p, false, "").unwrap();
        let snap = read_snapshot(&path).unwrap();
        for c in 0..24 {
            let [x, z, _] = grid.cell_center(c);
            assert_eq!(snap.locate([x, 0.5, z]), Some(c));
            let back = snap.cell_center(c);
            assert_eq!((back[0], back[2]), (x, z));
        }
        assert_eq!(snap.locate([3.5, 0.5, 1.0]), None);
    }

    #[test]
    fn malformed_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vtk");
        std::fs::write(&path, "# vtk DataFile Version 3.0\nx\nBINARY\nDATASET POLYDATA\n").unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::Vtk { .. })));
        assert!(matches!(read_snapshot(dir.path().join("missing.vtk")), Err(Error::Io { .. })));
    }
}
