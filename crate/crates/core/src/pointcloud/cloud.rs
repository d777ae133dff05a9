use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};

/// Class id reserved for background points.
pub const BACKGROUND_CLASS: u32 = 0;
/// Instance id carried by points that belong to no object instance.
pub const NO_INSTANCE: u32 = 0;

/// A scene point: position, RGB color in `[0, 1]`, and an optional unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub position: Vec3,
    pub color: [f64; 3],
    pub normal: Option<Vec3>,
}

impl Point {
    pub fn new(position: Vec3) -> Self {
        Self {
            position,
            color: [0.0; 3],
            normal: None,
        }
    }

    pub fn with_color(mut self, color: [f64; 3]) -> Self {
        self.color = color;
        self
    }

    pub fn with_normal(mut self, normal: Vec3) -> Self {
        self.normal = Some(normal);
        self
    }

    /// The nine input attributes `(x, y, z, r, g, b, nx, ny, nz)`; an absent
    /// normal contributes zeros.
    pub fn attributes(&self) -> [f64; 9] {
        let n = self.normal.unwrap_or_else(Vec3::zeros);
        [
            self.position.x,
            self.position.y,
            self.position.z,
            self.color[0],
            self.color[1],
            self.color[2],
            n.x,
            n.y,
            n.z,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointLabel {
    pub class_id: u32,
    pub instance_id: u32,
}

impl PointLabel {
    pub const BACKGROUND: PointLabel = PointLabel {
        class_id: BACKGROUND_CLASS,
        instance_id: NO_INSTANCE,
    };

    pub fn is_foreground(&self) -> bool {
        self.class_id != BACKGROUND_CLASS
    }
}

/// Points with optional per-point labels of the same length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    labels: Option<Vec<PointLabel>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.position.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite position")));
        }
        Ok(Self { points, labels: None })
    }

    pub fn with_labels(points: Vec<Point>, labels: Vec<PointLabel>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        let mut cloud = Self::new(points)?;
        cloud.labels = Some(labels);
        Ok(cloud)
    }

    pub fn from_positions(positions: &[Vec3]) -> Result<Self> {
        Self::new(positions.iter().map(|p| Point::new(*p)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[PointLabel]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> Option<PointLabel> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn into_parts(self) -> (Vec<Point>, Option<Vec<PointLabel>>) {
        (self.points, self.labels)
    }

    /// Drops labels.
    pub fn unlabeled(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            labels: None,
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| Point {
                    position: t.apply(&p.position),
                    color: p.color,
                    normal: p.normal.map(|n| t.apply_vector(&n)),
                })
                .collect(),
            labels: self.labels.clone(),
        }
    }

    /// Subset by index, labels included.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }
}
