//! Plain-text mesh format and legacy-VTK ASCII export.
//!
//! Mesh files hold the vertex count, one `x y boundary_flag` line per vertex,
//! the triangle count and one `i j k label` line per triangle. Indices are
//! zero-based, the boundary flag is `0` or `1` and the label is `E` for
//! observation triangles and `D` otherwise. Blank lines and text after `#`
//! are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{Mesh, MeshError, Point, Region};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { inner: text.lines().enumerate() }
    }

    /// Next non-empty line with comments stripped, and its 1-based number.
    fn next_tokens(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            let body = line.split('#').next().unwrap_or("");
            let toks: Vec<&str> = body.split_whitespace().collect();
            if !toks.is_empty() {
                return Some((i + 1, toks));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), MeshError> {
        self.next_tokens().ok_or_else(|| MeshError::Parse {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn parse<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, MeshError> {
    tok.parse().map_err(|_| MeshError::Parse { line, msg: format!("invalid {what} '{tok}'") })
}

pub fn parse_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = Lines::new(text);
    let (ln, toks) = lines.expect("vertex count")?;
    let n: usize = parse(toks[0], ln, "vertex count")?;
    let mut vertices = Vec::with_capacity(n);
    let mut boundary = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, toks) = lines.expect("vertex line")?;
        if toks.len() != 3 {
            return Err(MeshError::Parse { line: ln, msg: "vertex line needs 'x y boundary_flag'".into() });
        }
        let x: f64 = parse(toks[0], ln, "coordinate")?;
        let y: f64 = parse(toks[1], ln, "coordinate")?;
        let flag = match toks[2] {
            "0" => false,
            "1" => true,
            other => return Err(MeshError::Parse { line: ln, msg: format!("boundary flag must be 0 or 1, got '{other}'") }),
        };
        vertices.push([x, y]);
        boundary.push(flag);
    }
    let (ln, toks) = lines.expect("triangle count")?;
    let nt: usize = parse(toks[0], ln, "triangle count")?;
    let mut tris = Vec::with_capacity(nt);
    let mut labels = Vec::with_capacity(nt);
    for t in 0..nt {
        let (ln, toks) = lines.expect("triangle line")?;
        if toks.len() < 3 || toks.len() > 4 {
            return Err(MeshError::Parse { line: ln, msg: "triangle line needs 'i j k label'".into() });
        }
        let mut tri = [0usize; 3];
        for a in 0..3 {
            tri[a] = parse(toks[a], ln, "vertex index")?;
        }
        let label = match toks.get(3) {
            Some(&"E") => Region::Observation,
            Some(&"D") => Region::Exterior,
            Some(other) => return Err(MeshError::Parse { line: ln, msg: format!("region label must be E or D, got '{other}'") }),
            None => return Err(MeshError::Unlabeled { tri: t }),
        };
        tris.push(tri);
        labels.push(label);
    }
    Mesh::new(vertices, tris, labels, boundary)
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

pub fn format_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", mesh.n_vertices());
    for (i, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(s, "{:?} {:?} {}", p[0], p[1], mesh.is_boundary(i) as u8);
    }
    let _ = writeln!(s, "{}", mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let l = if mesh.label(t) == Region::Observation { "E" } else { "D" };
        let _ = writeln!(s, "{} {} {} {}", tri[0], tri[1], tri[2], l);
    }
    s
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &Mesh) -> Result<(), MeshError> {
    std::fs::write(path, format_mesh(mesh))?;
    Ok(())
}

/// Legacy-VTK ASCII unstructured grid with the region label as cell data and
/// the given nodal fields (full index set) as point data.
pub fn format_vtk(mesh: &Mesh, fields: &[(&str, &[f64])]) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\ntopopt\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?} 0", p[0], p[1]);
    }
    let nt = mesh.n_triangles();
    let _ = writeln!(s, "CELLS {} {}", nt, 4 * nt);
    for tri in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "CELL_DATA {nt}\nSCALARS region int 1\nLOOKUP_TABLE default");
    for t in 0..nt {
        let _ = writeln!(s, "{}", (mesh.label(t) == Region::Observation) as u8);
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.n_vertices());
        for (name, values) in fields {
            assert_eq!(values.len(), mesh.n_vertices(), "field {name} has wrong length");
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in values.iter() {
                let _ = writeln!(s, "{v:?}");
            }
        }
    }
    s
}

pub fn write_vtk(path: impl AsRef<Path>, mesh: &Mesh, fields: &[(&str, &[f64])]) -> Result<(), MeshError> {
    std::fs::write(path, format_vtk(mesh, fields))?;
    Ok(())
}

/// Contents of a VTK file produced by [`format_vtk`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VtkData {
    pub points: Vec<Point>,
    pub cells: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    pub point_fields: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.point_fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_mesh(&self) -> Result<Mesh, MeshError> {
        Mesh::from_topology(self.points.clone(), self.cells.clone(), self.regions.clone())
    }
}

/// Reader for the subset of legacy VTK written by [`format_vtk`].
pub fn parse_vtk(text: &str) -> Result<VtkData, MeshError> {
    let err = |line: usize, msg: &str| MeshError::Parse { line, msg: msg.to_string() };
    let mut toks = text
        .lines()
        .enumerate()
        .skip(4)
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)));
    let mut out = VtkData::default();
    let mut next = |what: &str| toks.next().ok_or_else(|| err(0, &format!("unexpected end of file, expected {what}")));
    loop {
        let Ok((ln, kw)) = next("keyword") else { break };
        match kw {
            "POINTS" => {
                let (ln, c) = next("count")?;
                let c: usize = parse(c, ln, "count")?;
                next("type")?;
                for _ in 0..c {
                    let (l1, x) = next("x")?;
                    let (l2, y) = next("y")?;
                    next("z")?;
                    out.points.push([parse(x, l1, "coordinate")?, parse(y, l2, "coordinate")?]);
                }
            }
            "CELLS" => {
                let (ln, c) = next("count")?;
                let c: usize = parse(c, ln, "count")?;
                next("size")?;
                for _ in 0..c {
                    let (l, k) = next("cell size")?;
                    if k != "3" {
                        return Err(err(l, "only triangle cells are supported"));
                    }
                    let mut tri = [0; 3];
                    for v in tri.iter_mut() {
                        let (l, t) = next("index")?;
                        *v = parse(t, l, "index")?;
                    }
                    out.cells.push(tri);
                }
            }
            "CELL_TYPES" => {
                let (ln, c) = next("count")?;
                let c: usize = parse(c, ln, "count")?;
                for _ in 0..c {
                    next("cell type")?;
                }
            }
            "CELL_DATA" | "POINT_DATA" => {
                let (ln, c) = next("count")?;
                parse::<usize>(c, ln, "count")?;
            }
            "SCALARS" => {
                let (_, name) = next("name")?;
                let (_, ty) = next("type")?;
                let (_, _) = next("components")?;
                next("LOOKUP_TABLE")?;
                next("table name")?;
                if ty == "int" && name == "region" {
                    for _ in 0..out.cells.len() {
                        let (l, v) = next("region")?;
                        out.regions.push(if v == "1" {
                            Region::Observation
                        } else if v == "0" {
                            Region::Exterior
                        } else {
                            return Err(err(l, "region must be 0 or 1"));
                        });
                    }
                } else {
                    let mut vals = Vec::with_capacity(out.points.len());
                    for _ in 0..out.points.len() {
                        let (l, v) = next("value")?;
                        vals.push(parse(v, l, "value")?);
                    }
                    out.point_fields.push((name.to_string(), vals));
                }
            }
            other => return Err(err(ln, &format!("unexpected keyword '{other}'"))),
        }
    }
    Ok(out)
}

pub fn read_vtk(path: impl AsRef<Path>) -> Result<VtkData, MeshError> {
    parse_vtk(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::{generate_rect_mesh, polygon_disk, Rect};
    use super::*;

    const SQUARE: &str = "4\n0 0 1\n1 0 1\n0 1 1\n1 1 1\n2\n0 1 3 D\n0 3 2 D\n";

    #[test]
    fn square_file() {
        let m = parse_mesh(SQUARE).unwrap();
        assert_eq!((m.n_vertices(), m.n_interior()), (4, 0));
    }

    #[test]
    fn bad_files() {
        let cw = "3\n0 0 1\n1 0 1\n0 1 1\n1\n0 2 1 D\n";
        assert!(matches!(parse_mesh(cw), Err(MeshError::Orientation { .. })));
        let oob = SQUARE.replace("0 3 2 D", "0 9 2 D");
        assert!(matches!(parse_mesh(&oob), Err(MeshError::IndexOutOfRange { index: 9, .. })));
        let unl = SQUARE.replace("0 3 2 D", "0 3 2");
        assert_eq!(parse_mesh(&unl).unwrap_err(), MeshError::Unlabeled { tri: 1 });
    }

    #[test]
    fn round_trips() {
        let m = generate_rect_mesh(Rect::square(-1.0, 1.0), 5, 4, &polygon_disk([0.1, 0.0], 0.3, 12)).unwrap();
        let back = parse_mesh(&format_mesh(&m)).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.labels(), m.labels());
        assert_eq!(back.boundary_flags(), m.boundary_flags());

        let g: Vec<f64> = m.vertices().iter().map(|p| p[0] * 0.1 + p[1]).collect();
        let vtk = parse_vtk(&format_vtk(&m, &[("g", &g)])).unwrap();
        assert_eq!(vtk.points, m.vertices());
        assert_eq!(vtk.cells, m.triangles());
        assert_eq!(vtk.regions, m.labels());
        assert_eq!(vtk.field("g").unwrap(), g.as_slice());
    }
}
