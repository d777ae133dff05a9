use std::f64::consts::TAU;

use super::{Aabb, ControlPoints, RigidTransform, Vec3};
use crate::error::{Error, Result};

/// Indexed triangle mesh with a cached diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    diameter: f64,
}

impl TriMesh {
    /// Validates indices and coordinates and caches the diameter (0 for
    /// fewer than two vertices).
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("vertex {i} is not finite")));
        }
        if let Some((f, face)) = faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&i| i >= vertices.len()))
        {
            return Err(Error::invalid(format!(
                "face {f} references vertex {face:?} but the mesh has {} vertices",
                vertices.len()
            )));
        }
        let diameter = model_diameter(&vertices).unwrap_or(0.0);
        Ok(Self {
            vertices,
            faces,
            diameter,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.vertices.is_empty() {
            return None;
        }
        let sum = self.vertices.iter().fold(Vec3::zeros(), |a, v| a + v);
        Some(sum / self.vertices.len() as f64)
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i])
    }

    /// Unit normal from counter-clockwise winding; zero for degenerate faces.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_else(Vec3::zeros)
    }

    /// Area-weighted average of adjacent face normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for face in &self.faces {
            let [a, b, c] = face.map(|i| self.vertices[i]);
            let n = (b - a).cross(&(c - a));
            for &i in face {
                acc[i] += n;
            }
        }
        acc.into_iter()
            .map(|n| n.try_normalize(0.0).unwrap_or_else(Vec3::zeros))
            .collect()
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            faces: self.faces.clone(),
            diameter: self.diameter,
        }
    }

    /// Concatenates two meshes into one.
    pub fn merged(&self, other: &TriMesh) -> TriMesh {
        let offset = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| f.map(|i| i + offset)));
        TriMesh::new(vertices, faces).expect("merging valid meshes")
    }

    /// Box centered at the origin with `divisions` grid cells per face edge.
    pub fn cuboid(extents: Vec3, divisions: usize) -> TriMesh {
        let n = divisions.max(1);
        let h = extents * 0.5;
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        // (normal axis, sign): the two in-plane axes are chosen so that
        // u × v points along the outward normal.
        for axis in 0..3 {
            for sign in [-1.0f64, 1.0] {
                let (mut u_ax, mut v_ax) = ((axis + 1) % 3, (axis + 2) % 3);
                if sign < 0.0 {
                    std::mem::swap(&mut u_ax, &mut v_ax);
                }
                let base = vertices.len();
                for j in 0..=n {
                    for i in 0..=n {
                        let mut p = Vec3::zeros();
                        p[axis] = sign * h[axis];
                        p[u_ax] = -h[u_ax] + extents[u_ax] * i as f64 / n as f64;
                        p[v_ax] = -h[v_ax] + extents[v_ax] * j as f64 / n as f64;
                        vertices.push(p);
                    }
                }
                let idx = |i: usize, j: usize| base + j * (n + 1) + i;
                for j in 0..n {
                    for i in 0..n {
                        faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                        faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
                    }
                }
            }
        }
        TriMesh::new(vertices, faces).expect("cuboid is well formed")
    }

    /// Closed cylinder along z, centered at the origin.
    pub fn cylinder(radius: f64, height: f64, segments: usize, rings: usize) -> TriMesh {
        let segments = segments.max(3);
        let rings = rings.max(1);
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let ring_point = |s: usize, z: f64| {
            let a = TAU * s as f64 / segments as f64;
            Vec3::new(radius * a.cos(), radius * a.sin(), z)
        };
        for r in 0..=rings {
            let z = -0.5 * height + height * r as f64 / rings as f64;
            for s in 0..segments {
                vertices.push(ring_point(s, z));
            }
        }
        for r in 0..rings {
            for s in 0..segments {
                let a = r * segments + s;
                let b = r * segments + (s + 1) % segments;
                let c = a + segments;
                let d = b + segments;
                faces.push([a, b, d]);
                faces.push([a, d, c]);
            }
        }
        let cap_rings = (radius * rings as f64 / height).ceil().max(1.0) as usize;
        for (z, up) in [(-0.5 * height, false), (0.5 * height, true)] {
            let center = vertices.len();
            vertices.push(Vec3::new(0.0, 0.0, z));
            for j in 1..=cap_rings {
                let scale = j as f64 / cap_rings as f64;
                for s in 0..segments {
                    let p = ring_point(s, z);
                    vertices.push(Vec3::new(p.x * scale, p.y * scale, z));
                }
            }
            let ring = |j: usize, s: usize| center + 1 + (j - 1) * segments + s % segments;
            for s in 0..segments {
                let (a, b) = (ring(1, s), ring(1, s + 1));
                faces.push(if up { [center, a, b] } else { [center, b, a] });
                for j in 1..cap_rings {
                    let (a, b) = (ring(j, s), ring(j, s + 1));
                    let (c, d) = (ring(j + 1, s), ring(j + 1, s + 1));
                    if up {
                        faces.push([a, c, d]);
                        faces.push([a, d, b]);
                    } else {
                        faces.push([a, d, c]);
                        faces.push([a, b, d]);
                    }
                }
            }
        }
        TriMesh::new(vertices, faces).expect("cylinder is well formed")
    }
}

/// Exact maximum pairwise vertex distance.
pub fn model_diameter(vertices: &[Vec3]) -> Result<f64> {
    if vertices.len() < 2 {
        return Err(Error::invalid(format!(
            "diameter needs at least 2 vertices, got {}",
            vertices.len()
        )));
    }
    let mut best = 0.0f64;
    for (i, a) in vertices.iter().enumerate() {
        for b in &vertices[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    Ok(best.sqrt())
}

/// Model-frame bounding-box corners plus the vertex centroid.
pub fn fit_control_points(mesh: &TriMesh) -> Result<ControlPoints> {
    let aabb = mesh
        .aabb()
        .ok_or_else(|| Error::invalid("cannot fit control points to an empty mesh"))?;
    let centroid = mesh.centroid().expect("non-empty mesh");
    Ok(ControlPoints::from_aabb(&aabb, centroid))
}
