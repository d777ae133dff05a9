//! Colored clouds and box line sets for external viewers.

use std::fmt::Write as _;

use crate::decoder::PoseEstimate;
use crate::geometry::{ControlPoints, Vec3};
use crate::io::{PlyColumn, PlyData, PlyElement, PlyFormat, PlyProperty, ScalarType};
use crate::pointcloud::{Point, PointCloud, PointLabel, NO_INSTANCE};
use crate::predictor::Prediction;

/// Hue in degrees, saturation and value in [0, 1].
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Confidence 0 maps to blue (hue 240°), 1 to red (hue 0°).
pub fn confidence_color(c: f64) -> [f64; 3] {
    hsv_to_rgb(240.0 * (1.0 - c.clamp(0.0, 1.0)), 1.0, 1.0)
}

pub const BACKGROUND_COLOR: [f64; 3] = [0.5, 0.5, 0.5];

/// Keypoints colored by predicted class and labeled with it.
pub fn segmentation_cloud(keypoints: &[Vec3], pred: &Prediction, class_color: impl Fn(u32) -> [f64; 3]) -> PointCloud {
    let mut points = Vec::with_capacity(keypoints.len());
    let mut labels = Vec::with_capacity(keypoints.len());
    for (k, p) in keypoints.iter().enumerate() {
        let class_id = pred.argmax_class(k);
        let color = if class_id == 0 {
            BACKGROUND_COLOR
        } else {
            class_color(class_id)
        };
        points.push(Point::new(*p).with_color(color));
        labels.push(PointLabel {
            class_id,
            instance_id: NO_INSTANCE,
        });
    }
    PointCloud::with_labels(points, labels).expect("one label per point")
}

/// Keypoints colored by predicted confidence.
pub fn confidence_cloud(keypoints: &[Vec3], pred: &Prediction) -> PointCloud {
    let points = keypoints
        .iter()
        .zip(&pred.confidence)
        .map(|(p, &c)| Point::new(*p).with_color(confidence_color(c)))
        .collect();
    PointCloud::new(points).expect("finite keypoints")
}

/// Eight corners per box and the twelve box edges as index pairs.
pub fn box_lines(boxes: &[ControlPoints]) -> (Vec<Vec3>, Vec<(usize, usize)>) {
    let mut vertices = Vec::with_capacity(8 * boxes.len());
    let mut edges = Vec::with_capacity(12 * boxes.len());
    for b in boxes {
        let base = vertices.len();
        vertices.extend_from_slice(&b.corners);
        edges.extend(ControlPoints::edges().iter().map(|&(i, j)| (base + i, base + j)));
    }
    (vertices, edges)
}

/// PLY with colored `vertex` and `edge` (vertex1 vertex2) elements.
pub fn box_line_set_ply(boxes: &[(ControlPoints, [f64; 3])], format: PlyFormat) -> PlyData {
    let cps: Vec<ControlPoints> = boxes.iter().map(|(b, _)| *b).collect();
    let (vertices, edges) = box_lines(&cps);
    let colors: Vec<[f64; 3]> = boxes.iter().flat_map(|(_, c)| [*c; 8]).collect();
    let coord = |k: usize| PlyColumn::Scalar(vertices.iter().map(|v| v[k]).collect());
    let channel = |k: usize| PlyColumn::Scalar(colors.iter().map(|c| (c[k].clamp(0.0, 1.0) * 255.0).round()).collect());
    let mut vprops: Vec<PlyProperty> = ["x", "y", "z"]
        .iter()
        .map(|n| PlyProperty::scalar(n, ScalarType::F64))
        .collect();
    vprops.extend(
        ["red", "green", "blue"]
            .iter()
            .map(|n| PlyProperty::scalar(n, ScalarType::U8)),
    );
    PlyData {
        format,
        comments: vec!["pointpose boxes".into()],
        elements: vec![
            PlyElement {
                name: "vertex".into(),
                count: vertices.len(),
                properties: vprops,
                columns: vec![coord(0), coord(1), coord(2), channel(0), channel(1), channel(2)],
            },
            PlyElement {
                name: "edge".into(),
                count: edges.len(),
                properties: vec![
                    PlyProperty::scalar("vertex1", ScalarType::I32),
                    PlyProperty::scalar("vertex2", ScalarType::I32),
                ],
                columns: vec![
                    PlyColumn::Scalar(edges.iter().map(|e| e.0 as f64).collect()),
                    PlyColumn::Scalar(edges.iter().map(|e| e.1 as f64).collect()),
                ],
            },
        ],
    }
}

/// OBJ with `v` corners and `l` polyline records, one group per box.
pub fn box_line_set_obj(boxes: &[(ControlPoints, [f64; 3])]) -> String {
    let mut out = String::new();
    for (n, (b, _)) in boxes.iter().enumerate() {
        let _ = writeln!(out, "o box_{n}");
        for c in &b.corners {
            let _ = writeln!(out, "v {:?} {:?} {:?}", c.x, c.y, c.z);
        }
        for (i, j) in ControlPoints::edges() {
            let _ = writeln!(out, "l {} {}", 8 * n + i + 1, 8 * n + j + 1);
        }
    }
    out
}

/// Boxes of `estimates`, each model's control points moved by its pose.
pub fn estimate_boxes(
    estimates: &[PoseEstimate],
    control_points: impl Fn(u32) -> Option<ControlPoints>,
    class_color: impl Fn(u32) -> [f64; 3],
) -> Vec<(ControlPoints, [f64; 3])> {
    estimates
        .iter()
        .filter_map(|e| {
            Some((
                control_points(e.class_id)?.transformed(&e.pose),
                class_color(e.class_id),
            ))
        })
        .collect()
}
