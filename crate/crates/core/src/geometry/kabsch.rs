use nalgebra::Matrix3;

use super::{RigidTransform, Vec3};
use crate::error::{Error, Result};

/// Relative singular-value floor below which a centered point set counts as
/// collinear (or coincident).
pub const COLLINEAR_RATIO: f64 = 1e-9;

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / points.len() as f64
}

/// Least-squares rigid transform mapping `src` onto `dst` (Kabsch).
///
/// Minimizes `Σ‖R·srcᵢ + T − dstᵢ‖²` over proper rotations; when the
/// cross-covariance SVD yields a reflection, the direction of the smallest
/// singular value is flipped.
pub fn kabsch_align(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::Alignment(format!(
            "correspondence size mismatch: {} source vs {} target points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::Alignment(format!(
            "need at least 3 correspondences, got {}",
            src.len()
        )));
    }
    if src.iter().chain(dst).any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::Alignment("non-finite coordinates".into()));
    }

    let cs = centroid(src);
    let cd = centroid(dst);

    let mut scatter = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = s - cs;
        let b = d - cd;
        scatter += a * a.transpose();
        cross += a * b.transpose();
    }

    // Singular values of the centered source are the square roots of the
    // scatter eigenvalues. Rank < 2 means every point lies on one line.
    let mut sv: Vec<f64> = scatter
        .symmetric_eigenvalues()
        .iter()
        .map(|e| e.max(0.0).sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] == 0.0 || sv[1] < COLLINEAR_RATIO * sv[0] {
        return Err(Error::Alignment("source points are collinear or coincident".into()));
    }

    let svd = cross.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Alignment("SVD did not converge".into())),
    };
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        let smallest = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(2);
        d[(smallest, smallest)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = cd - rotation * cs;
    Ok(RigidTransform { rotation, translation })
}

/// Sum of squared correspondence residuals under `t`.
pub fn alignment_residual(t: &RigidTransform, src: &[Vec3], dst: &[Vec3]) -> f64 {
    src.iter().zip(dst).map(|(s, d)| (t.apply(s) - d).norm_squared()).sum()
}
