use std::fmt::Write as _;
use std::path::Path;

use super::ply::{encode_ply, parse_ply, PlyColumn, PlyData, PlyElement, PlyFormat, PlyProperty, ScalarType};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::geometry::{TriMesh, Vec3};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        location: format!("line {line}"),
        message: message.into(),
    }
}

/// Fan triangulation `(v0, vi, vi+1)` of a polygon.
fn fan(poly: &[usize], faces: &mut Vec<[usize; 3]>) {
    for i in 1..poly.len() - 1 {
        faces.push([poly[0], poly[i], poly[i + 1]]);
    }
}

fn build(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>, path: &Path) -> Result<TriMesh> {
    TriMesh::new(vertices, faces).map_err(|e| Error::Format {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Parses ASCII OBJ `v` and `f` records. Face entries may be `i`, `i/t`,
/// `i//n` or `i/t/n` with 1-based or negative (relative) indices. Other
/// record types are ignored.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("");
        let mut words = line.split_whitespace();
        match words.next() {
            Some("v") => {
                let coords: Vec<&str> = words.collect();
                if !(3..=4).contains(&coords.len()) {
                    return Err(parse_err(path, line_no, "vertex needs 3 coordinates"));
                }
                let mut v = [0.0; 3];
                for (slot, c) in v.iter_mut().zip(&coords) {
                    *slot = c
                        .parse()
                        .map_err(|_| parse_err(path, line_no, format!("invalid coordinate `{c}`")))?;
                }
                vertices.push(Vec3::from(v));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for w in words {
                    let idx = w.split('/').next().unwrap_or("");
                    let k: i64 = idx
                        .parse()
                        .map_err(|_| parse_err(path, line_no, format!("invalid face index `{w}`")))?;
                    let n = vertices.len() as i64;
                    let resolved = match k {
                        k if k > 0 && k <= n => k - 1,
                        k if k < 0 && -k <= n => n + k,
                        _ => {
                            return Err(parse_err(
                                path,
                                line_no,
                                format!("face index {k} out of range (1..={n})"),
                            ))
                        }
                    };
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(parse_err(path, line_no, "face needs at least 3 vertices"));
                }
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    build(vertices, faces, path)
}

/// OBJ text with shortest round-trip decimal coordinates.
pub fn encode_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

/// Reads `vertex` (x, y, z) and `face` (`vertex_indices` or `vertex_index`
/// list) elements; polygons are fan-triangulated.
pub fn mesh_from_ply(data: &PlyData, path: &Path) -> Result<TriMesh> {
    let format_err = |message: String| Error::Format {
        path: path.to_owned(),
        message,
    };
    let vertex = data
        .element("vertex")
        .ok_or_else(|| format_err("no `vertex` element".into()))?;
    let missing: Vec<&str> = ["x", "y", "z"]
        .into_iter()
        .filter(|n| vertex.scalar(n).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(format_err(format!(
            "vertex element lacks properties: {}",
            missing.join(", ")
        )));
    }
    let (x, y, z) = (
        vertex.scalar("x").expect("checked"),
        vertex.scalar("y").expect("checked"),
        vertex.scalar("z").expect("checked"),
    );
    let vertices: Vec<Vec3> = (0..vertex.count).map(|i| Vec3::new(x[i], y[i], z[i])).collect();
    let mut faces = Vec::new();
    if let Some(face) = data.element("face") {
        let lists = face
            .list("vertex_indices")
            .or_else(|| face.list("vertex_index"))
            .ok_or_else(|| format_err("face element lacks a `vertex_indices` list".into()))?;
        for (row, poly) in lists.iter().enumerate() {
            if poly.len() < 3 || poly.iter().any(|&i| i < 0.0) {
                return Err(format_err(format!(
                    "face {row} is not a polygon of non-negative indices"
                )));
            }
            let poly: Vec<usize> = poly.iter().map(|&i| i as usize).collect();
            fan(&poly, &mut faces);
        }
    }
    build(vertices, faces, path)
}

pub fn mesh_to_ply(mesh: &TriMesh, format: PlyFormat) -> PlyData {
    let v = mesh.vertices();
    let coord = |k: usize| PlyColumn::Scalar(v.iter().map(|p| p[k]).collect());
    PlyData {
        format,
        comments: Vec::new(),
        elements: vec![
            PlyElement {
                name: "vertex".into(),
                count: v.len(),
                properties: ["x", "y", "z"]
                    .iter()
                    .map(|n| PlyProperty::scalar(n, ScalarType::F64))
                    .collect(),
                columns: vec![coord(0), coord(1), coord(2)],
            },
            PlyElement {
                name: "face".into(),
                count: mesh.faces().len(),
                properties: vec![PlyProperty::list("vertex_indices", ScalarType::U8, ScalarType::U32)],
                columns: vec![PlyColumn::List(
                    mesh.faces()
                        .iter()
                        .map(|f| f.iter().map(|&i| i as f64).collect())
                        .collect(),
                )],
            },
        ],
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Loads an `.obj` or `.ply` mesh.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match extension(path).as_str() {
        "obj" => {
            let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
                path: path.to_owned(),
                location: format!("byte {}", e.valid_up_to()),
                message: "OBJ is not valid UTF-8".into(),
            })?;
            parse_obj(text, path)
        }
        "ply" => mesh_from_ply(&parse_ply(&bytes, path)?, path),
        other => Err(Error::Format {
            path: path.to_owned(),
            message: format!("unsupported mesh extension `{other}` (expected obj or ply)"),
        }),
    }
}

/// Writes `.obj` or binary `.ply` by extension.
pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    let bytes = match extension(path).as_str() {
        "obj" => encode_obj(mesh).into_bytes(),
        "ply" => encode_ply(&mesh_to_ply(mesh, PlyFormat::BinaryLittleEndian))?,
        other => {
            return Err(Error::Format {
                path: path.to_owned(),
                message: format!("unsupported mesh extension `{other}` (expected obj or ply)"),
            })
        }
    };
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p() -> &'static Path {
        Path::new("m.obj")
    }

    #[test]
    fn minimal_triangle_and_quad_fan() {
        let tri = parse_obj("# t\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", p()).unwrap();
        assert_eq!((tri.vertices().len(), tri.faces().len()), (3, 1));
        let quad = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2/2 3//3 -1\n", p()).unwrap();
        assert_eq!(quad.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn malformed_records_name_the_line() {
        let err = parse_obj("v 0 0 0\nv 1 0\n", p()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n", p()).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        assert!(parse_obj("v 0 0 0\nf 1 1\n", p()).is_err());
        assert!(parse_obj("v a 0 0\n", p()).is_err());
    }

    #[test]
    fn random_mesh_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vertices: Vec<Vec3> = (0..60)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-8..3))))
            .collect();
        let faces: Vec<[usize; 3]> = (0..90)
            .map(|_| std::array::from_fn(|_| rng.random_range(0..60)))
            .collect();
        let mesh = TriMesh::new(vertices, faces).unwrap();
        assert_eq!(parse_obj(&encode_obj(&mesh), p()).unwrap(), mesh);
        for f in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let bytes = encode_ply(&mesh_to_ply(&mesh, f)).unwrap();
            let back = mesh_from_ply(&parse_ply(&bytes, Path::new("m.ply")).unwrap(), Path::new("m.ply")).unwrap();
            assert_eq!(back, mesh);
        }
    }

    #[test]
    fn ply_polygons_and_missing_properties() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
                    element face 1\nproperty list uchar int vertex_index\nend_header\n\
                    0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let q = Path::new("q.ply");
        let mesh = mesh_from_ply(&parse_ply(text.as_bytes(), q).unwrap(), q).unwrap();
        assert_eq!(mesh.faces().len(), 2);
        assert!((mesh.diameter() - 2f64.sqrt()).abs() < 1e-7);
        let no_z = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n0 0\n";
        let err = mesh_from_ply(&parse_ply(no_z.as_bytes(), q).unwrap(), q).unwrap_err();
        assert!(err.to_string().contains("z"), "{err}");
    }
}
