use std::path::Path;

use super::ply::{
    encode_ply, parse_ply, PlyColumn, PlyData, PlyElement, PlyFormat, PlyProperty, PropertyKind, ScalarType,
};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::pointcloud::{Point, PointCloud, PointLabel};

fn color_byte(c: f64) -> f64 {
    (c.clamp(0.0, 1.0) * 255.0).round()
}

/// PLY with x y z (double), red green blue (uchar), nx ny nz (double) and,
/// for labeled clouds, class instance (int). Absent normals are written as
/// zero vectors.
pub fn cloud_to_ply(cloud: &PointCloud, format: PlyFormat) -> PlyData {
    let pts = cloud.points();
    let col = |f: &dyn Fn(&Point) -> f64| PlyColumn::Scalar(pts.iter().map(f).collect());
    let mut properties = Vec::new();
    let mut columns = Vec::new();
    for (k, name) in ["x", "y", "z"].into_iter().enumerate() {
        properties.push(PlyProperty::scalar(name, ScalarType::F64));
        columns.push(col(&|p| p.position[k]));
    }
    for (k, name) in ["red", "green", "blue"].into_iter().enumerate() {
        properties.push(PlyProperty::scalar(name, ScalarType::U8));
        columns.push(col(&|p| color_byte(p.color[k])));
    }
    for (k, name) in ["nx", "ny", "nz"].into_iter().enumerate() {
        properties.push(PlyProperty::scalar(name, ScalarType::F64));
        columns.push(col(&|p| p.normal.map_or(0.0, |n| n[k])));
    }
    if let Some(labels) = cloud.labels() {
        properties.push(PlyProperty::scalar("class", ScalarType::I32));
        columns.push(PlyColumn::Scalar(labels.iter().map(|l| l.class_id as f64).collect()));
        properties.push(PlyProperty::scalar("instance", ScalarType::I32));
        columns.push(PlyColumn::Scalar(labels.iter().map(|l| l.instance_id as f64).collect()));
    }
    PlyData {
        format,
        comments: vec!["pointpose cloud".into()],
        elements: vec![PlyElement {
            name: "vertex".into(),
            count: pts.len(),
            properties,
            columns,
        }],
    }
}

/// Inverse of [`cloud_to_ply`]. Only x y z are required; colors and normals
/// default to black and absent, and labels are read when both `class` and
/// `instance` are present.
pub fn cloud_from_ply(data: &PlyData, path: &Path) -> Result<PointCloud> {
    let format_err = |message: String| Error::Format {
        path: path.to_owned(),
        message,
    };
    let Some(vertex) = data.element("vertex") else {
        return Err(format_err("no `vertex` element".into()));
    };
    let missing: Vec<&str> = ["x", "y", "z"]
        .into_iter()
        .filter(|n| vertex.scalar(n).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(format_err(format!(
            "missing required properties: {}",
            missing.join(", ")
        )));
    }
    let get = |n: &str| vertex.scalar(n).expect("checked");
    let (x, y, z) = (get("x"), get("y"), get("z"));
    let colors = ["red", "green", "blue"].map(|n| {
        let idx = vertex.property_index(n)?;
        let scale = match vertex.properties[idx].kind {
            PropertyKind::Scalar(ScalarType::F32 | ScalarType::F64) => 1.0,
            _ => 1.0 / 255.0,
        };
        Some((vertex.scalar(n)?, scale))
    });
    let normals = ["nx", "ny", "nz"].map(|n| vertex.scalar(n));
    let mut points = Vec::with_capacity(vertex.count);
    for i in 0..vertex.count {
        let mut p = Point::new(Vec3::new(x[i], y[i], z[i]));
        for (k, c) in colors.iter().enumerate() {
            if let Some((v, s)) = c {
                p.color[k] = v[i] * s;
            }
        }
        if let [Some(nx), Some(ny), Some(nz)] = normals {
            let n = Vec3::new(nx[i], ny[i], nz[i]);
            if n != Vec3::zeros() {
                p.normal = Some(n);
            }
        }
        points.push(p);
    }
    let invalid = |e: Error| format_err(e.to_string());
    match (vertex.scalar("class"), vertex.scalar("instance")) {
        (Some(c), Some(inst)) => {
            if let Some(bad) = c.iter().chain(inst).find(|v| **v < 0.0) {
                return Err(format_err(format!("negative label {bad}")));
            }
            let labels = c
                .iter()
                .zip(inst)
                .map(|(&c, &i)| PointLabel {
                    class_id: c as u32,
                    instance_id: i as u32,
                })
                .collect();
            PointCloud::with_labels(points, labels).map_err(invalid)
        }
        (None, None) => PointCloud::new(points).map_err(invalid),
        (c, _) => Err(format_err(format!(
            "missing required properties: {}",
            if c.is_none() { "class" } else { "instance" }
        ))),
    }
}

pub fn encode_cloud(cloud: &PointCloud, format: PlyFormat) -> Result<Vec<u8>> {
    encode_ply(&cloud_to_ply(cloud, format))
}

/// Writes a binary little-endian cloud PLY.
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_atomic(path, &encode_cloud(cloud, PlyFormat::BinaryLittleEndian)?)
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    cloud_from_ply(&parse_ply(&bytes, path)?, path)
}
