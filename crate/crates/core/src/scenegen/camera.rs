use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Pinhole depth camera. Camera frame: x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Standard deviation of the along-ray range noise, meters.
    pub depth_noise_sigma: f64,
    pub z_near: f64,
    pub z_far: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
            depth_noise_sigma: 0.001,
            z_near: 0.1,
            z_far: 4.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.fx, self.fy, self.z_near, self.z_far];
        if positive.iter().any(|v| !(*v > 0.0)) || self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera intrinsics must be positive"));
        }
        if !(self.z_near < self.z_far) {
            return Err(Error::invalid("camera requires z_near < z_far"));
        }
        if !(self.depth_noise_sigma >= 0.0) {
            return Err(Error::invalid("depth noise must be non-negative"));
        }
        Ok(())
    }

    /// Same field of view at `1/factor` of the resolution.
    pub fn downscaled(&self, factor: usize) -> CameraModel {
        let f = factor.max(1) as f64;
        CameraModel {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: (self.cx + 0.5) / f - 0.5,
            cy: (self.cy + 0.5) / f - 0.5,
            width: self.width / factor.max(1),
            height: self.height / factor.max(1),
            ..*self
        }
    }

    /// Pixel coordinates of a camera-frame point (`z` must be positive).
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Ray direction through pixel center `(u, v)` with unit depth (`z = 1`).
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}
