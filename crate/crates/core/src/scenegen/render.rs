use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layout::SceneSpec;
use super::models::ObjectModel;
use super::{CameraModel, InstanceTruth, LabeledScene};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, TriMesh, Vec3};
use crate::pointcloud::{Point, PointCloud, PointLabel};
use crate::seed::derive_seed;

/// Range noise is Gaussian truncated at this many standard deviations.
pub const NOISE_TRUNCATION: f64 = 2.0;

/// A world-frame mesh with the color and label its pixels receive.
#[derive(Debug, Clone)]
pub struct RenderItem {
    pub mesh: TriMesh,
    pub color: [f64; 3],
    pub label: PointLabel,
}

/// Per-pixel result of z-buffer rasterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHit {
    /// Camera-frame point on the winning triangle, before noise.
    pub point: Vec3,
    pub item: usize,
    pub face: usize,
}

/// Row-major `width × height` z-buffer.
#[derive(Debug, Clone)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Option<PixelHit>>,
}

/// Square table plane `z = 0` with upward-facing triangles.
pub fn table_plane(half_extent: f64, cells: usize) -> TriMesh {
    let n = cells.max(1);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vec3::new(
                -half_extent + 2.0 * half_extent * i as f64 / n as f64,
                -half_extent + 2.0 * half_extent * j as f64 / n as f64,
                0.0,
            ));
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut faces = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, faces).expect("plane is well formed")
}

fn cross2(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

/// Z-buffer rasterization of world-frame items seen from `camera_pose`
/// (camera to world). Depth is the exact ray/triangle-plane intersection at
/// each pixel center; equal depths keep the earlier item and face.
pub fn rasterize(items: &[RenderItem], camera_pose: &RigidTransform, camera: &CameraModel) -> Result<DepthImage> {
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let world_to_cam = camera_pose.inverse();
    let mut depth = vec![f64::INFINITY; w * h];
    let mut pixels: Vec<Option<PixelHit>> = vec![None; w * h];
    for (item_id, item) in items.iter().enumerate() {
        let verts: Vec<Vec3> = item.mesh.vertices().iter().map(|v| world_to_cam.apply(v)).collect();
        for (face_id, f) in item.mesh.faces().iter().enumerate() {
            let [a, b, c] = f.map(|i| verts[i]);
            if a.z <= 1e-9 || b.z <= 1e-9 || c.z <= 1e-9 {
                continue;
            }
            let n = (b - a).cross(&(c - a));
            let [pa, pb, pc] = [a, b, c].map(|p| camera.project(&p));
            let area = cross2((pb.0 - pa.0, pb.1 - pa.1), (pc.0 - pa.0, pc.1 - pa.1));
            if area.abs() < 1e-14 || n.norm_squared() == 0.0 {
                continue;
            }
            let u_lo = pa.0.min(pb.0).min(pc.0).ceil().max(0.0);
            let u_hi = pa.0.max(pb.0).max(pc.0).floor().min(w as f64 - 1.0);
            let v_lo = pa.1.min(pb.1).min(pc.1).ceil().max(0.0);
            let v_hi = pa.1.max(pb.1).max(pc.1).floor().min(h as f64 - 1.0);
            if u_lo > u_hi || v_lo > v_hi {
                continue;
            }
            let plane_d = n.dot(&a);
            for v in v_lo as usize..=v_hi as usize {
                for u in u_lo as usize..=u_hi as usize {
                    let p = (u as f64, v as f64);
                    let e0 = cross2((pb.0 - pa.0, pb.1 - pa.1), (p.0 - pa.0, p.1 - pa.1));
                    let e1 = cross2((pc.0 - pb.0, pc.1 - pb.1), (p.0 - pb.0, p.1 - pb.1));
                    let e2 = cross2((pa.0 - pc.0, pa.1 - pc.1), (p.0 - pc.0, p.1 - pc.1));
                    let inside = if area > 0.0 {
                        e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0
                    } else {
                        e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0
                    };
                    if !inside {
                        continue;
                    }
                    let ray = camera.ray(p.0, p.1);
                    let denom = n.dot(&ray);
                    if denom == 0.0 {
                        continue;
                    }
                    let t = plane_d / denom;
                    if !(t >= camera.z_near && t <= camera.z_far) {
                        continue;
                    }
                    let px = v * w + u;
                    if t < depth[px] {
                        depth[px] = t;
                        pixels[px] = Some(PixelHit {
                            point: ray * t,
                            item: item_id,
                            face: face_id,
                        });
                    }
                }
            }
        }
    }
    Ok(DepthImage {
        width: w,
        height: h,
        pixels,
    })
}

/// Gaussian draw rejected outside `±NOISE_TRUNCATION · sigma`.
fn truncated_sample(normal: &Normal<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let x = normal.sample(rng);
        if x.abs() <= NOISE_TRUNCATION * sigma {
            return x;
        }
    }
}

/// Renders items to a labeled camera-frame cloud. Range noise is applied
/// along each pixel ray in row-major pixel order.
pub fn render_items(
    items: &[RenderItem],
    camera_pose: &RigidTransform,
    camera: &CameraModel,
    noise_seed: u64,
) -> Result<PointCloud> {
    let image = rasterize(items, camera_pose, camera)?;
    let world_to_cam = camera_pose.inverse();
    let normal = Normal::new(0.0, camera.depth_noise_sigma).map_err(|e| Error::invalid(format!("depth noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for hit in image.pixels.iter().flatten() {
        let item = &items[hit.item];
        let mut n = world_to_cam.apply_vector(&item.mesh.face_normal(hit.face)).normalize();
        if n.dot(&hit.point) > 0.0 {
            n = -n;
        }
        let mut p = hit.point;
        if camera.depth_noise_sigma > 0.0 {
            p += p.normalize() * truncated_sample(&normal, camera.depth_noise_sigma, &mut rng);
        }
        points.push(Point::new(p).with_color(item.color).with_normal(n));
        labels.push(item.label);
    }
    PointCloud::with_labels(points, labels)
}

/// World-frame render items of a scene: objects first (instance `i + 1`),
/// then the table, then clutter.
pub fn scene_items(spec: &SceneSpec, models: &[ObjectModel]) -> Result<Vec<RenderItem>> {
    let mut items = Vec::new();
    for (i, obj) in spec.objects.iter().enumerate() {
        let model = models
            .get(obj.model_id)
            .ok_or_else(|| Error::invalid(format!("scene refers to unknown model {}", obj.model_id)))?;
        items.push(RenderItem {
            mesh: model.mesh.transformed(&obj.pose),
            color: model.color,
            label: PointLabel {
                class_id: obj.class_id,
                instance_id: i as u32 + 1,
            },
        });
    }
    let bg = &spec.background;
    items.push(RenderItem {
        mesh: table_plane(bg.half_extent, 16),
        color: bg.color,
        label: PointLabel::BACKGROUND,
    });
    for c in &bg.clutter {
        items.push(RenderItem {
            mesh: c.shape.mesh().transformed(&c.pose),
            color: c.color,
            label: PointLabel::BACKGROUND,
        });
    }
    Ok(items)
}

/// Renders `spec` from its camera pose. The resulting cloud and instance
/// poses are in the camera frame.
pub fn render_depth(spec: &SceneSpec, models: &[ObjectModel], camera: &CameraModel) -> Result<LabeledScene> {
    let items = scene_items(spec, models)?;
    let cloud = render_items(&items, &spec.camera_pose, camera, derive_seed(spec.seed, 1))?;
    let world_to_cam = spec.camera_pose.inverse();
    let instances = spec
        .objects
        .iter()
        .enumerate()
        .map(|(i, obj)| {
            let pose = world_to_cam.compose(&obj.pose);
            InstanceTruth {
                instance_id: i as u32 + 1,
                class_id: obj.class_id,
                model_id: obj.model_id,
                pose,
                control_points: models[obj.model_id].control_points().transformed(&pose),
            }
        })
        .collect();
    Ok(LabeledScene {
        cloud,
        instances,
        camera: *camera,
        camera_pose: spec.camera_pose,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::layout::{look_at, sample_layout, Background, LayoutConfig};
    use crate::scenegen::models::builtin_model;
    use rand::Rng;

    fn small_camera(w: usize, h: usize) -> CameraModel {
        CameraModel {
            fx: w as f64,
            fy: w as f64,
            cx: (w as f64 - 1.0) / 2.0,
            cy: (h as f64 - 1.0) / 2.0,
            width: w,
            height: h,
            depth_noise_sigma: 0.0,
            z_near: 0.1,
            z_far: 10.0,
        }
    }

    fn square(z: f64, half: f64, instance: u32) -> RenderItem {
        let v = vec![
            Vec3::new(-half, -half, z),
            Vec3::new(half, -half, z),
            Vec3::new(half, half, z),
            Vec3::new(-half, half, z),
        ];
        RenderItem {
            mesh: TriMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap(),
            color: [1.0, 1.0, 1.0],
            label: PointLabel {
                class_id: 1,
                instance_id: instance,
            },
        }
    }

    #[test]
    fn triangle_points_lie_on_its_plane() {
        let tri = TriMesh::new(
            vec![
                Vec3::new(-1.0, -1.0, 2.0),
                Vec3::new(1.0, -0.5, 2.5),
                Vec3::new(0.0, 1.0, 3.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let n = tri.face_normal(0);
        let item = RenderItem {
            mesh: tri.clone(),
            color: [0.5; 3],
            label: PointLabel::BACKGROUND,
        };
        let cloud = render_items(&[item], &RigidTransform::identity(), &small_camera(32, 32), 0).unwrap();
        assert!(cloud.len() > 50);
        let d = n.dot(&tri.vertices()[0]);
        for p in cloud.points() {
            assert!((n.dot(&p.position) - d).abs() < 1e-12);
            assert!(p.normal.unwrap().dot(&p.position) <= 0.0);
        }
    }

    #[test]
    fn nearer_square_hides_farther_one() {
        let items = [square(3.0, 0.5, 2), square(2.0, 1.0, 1)];
        let cloud = render_items(&items, &RigidTransform::identity(), &small_camera(16, 16), 0).unwrap();
        let labels = cloud.labels().unwrap();
        assert!(!labels.is_empty());
        assert!(labels.iter().all(|l| l.instance_id == 1));
    }

    #[test]
    fn empty_scene_gives_empty_cloud() {
        let spec = SceneSpec {
            objects: vec![],
            background: Background {
                half_extent: 0.5,
                color: [0.5; 3],
                clutter: vec![],
            },
            camera_pose: look_at(&Vec3::new(0.0, 0.0, -1.0), &Vec3::new(0.0, 0.0, -2.0), &Vec3::y()).unwrap(),
            seed: 0,
        };
        let scene = render_depth(&spec, &[], &small_camera(16, 16)).unwrap();
        assert!(scene.cloud.is_empty());
    }

    /// Möller–Trumbore ray/triangle distance along a unit-z ray.
    fn ray_hit(ray: &Vec3, tri: [Vec3; 3]) -> Option<f64> {
        let e1 = tri[1] - tri[0];
        let e2 = tri[2] - tri[0];
        let p = ray.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-15 {
            return None;
        }
        let s = -tri[0];
        let u = s.dot(&p) / det;
        let q = s.cross(&e1);
        let v = ray.dot(&q) / det;
        if u < 0.0 || v < 0.0 || u + v > 1.0 {
            return None;
        }
        Some(e2.dot(&q) / det)
    }

    #[test]
    fn zbuffer_matches_brute_force_ray_casting() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cam = small_camera(32, 32);
        let mut mismatched_coverage = 0;
        for _ in 0..20 {
            let items: Vec<RenderItem> = (0..6)
                .map(|i| {
                    let v: Vec<Vec3> = (0..3)
                        .map(|_| {
                            Vec3::new(
                                rng.random_range(-1.0..1.0),
                                rng.random_range(-1.0..1.0),
                                rng.random_range(1.0..3.0),
                            )
                        })
                        .collect();
                    RenderItem {
                        mesh: TriMesh::new(v, vec![[0, 1, 2]]).unwrap(),
                        color: [0.0; 3],
                        label: PointLabel {
                            class_id: 1,
                            instance_id: i + 1,
                        },
                    }
                })
                .collect();
            let image = rasterize(&items, &RigidTransform::identity(), &cam).unwrap();
            for v in 0..cam.height {
                for u in 0..cam.width {
                    let ray = cam.ray(u as f64, v as f64);
                    let best = items
                        .iter()
                        .filter_map(|it| ray_hit(&ray, it.mesh.triangle(0)))
                        .fold(f64::INFINITY, f64::min);
                    match image.pixels[v * cam.width + u] {
                        Some(hit) => assert!((hit.point.z - best).abs() < 1e-9, "pixel ({u},{v})"),
                        None if best.is_finite() => mismatched_coverage += 1,
                        None => {}
                    }
                }
            }
        }
        assert_eq!(mismatched_coverage, 0);
    }

    #[test]
    fn labels_lie_on_their_instance_surface() {
        let models = vec![builtin_model("mug", 1).unwrap(), builtin_model("box", 2).unwrap()];
        let cfg = LayoutConfig {
            objects: 2,
            clutter: 2,
            ..LayoutConfig::default()
        };
        let cam = CameraModel::default().downscaled(2);
        let spec = sample_layout(&models, &cfg, 11).unwrap();
        let scene = render_depth(&spec, &models, &cam).unwrap();
        let f = scene.foreground_fraction();
        assert!(f > 0.0 && f < 0.9, "foreground fraction {f}");
        for inst in &scene.instances {
            let posed = models[inst.model_id].mesh.transformed(&inst.pose);
            for (p, l) in scene.cloud.points().iter().zip(scene.cloud.labels().unwrap()) {
                if l.instance_id != inst.instance_id {
                    continue;
                }
                let d = (0..posed.faces().len())
                    .map(|f| point_triangle_distance(&p.position, posed.triangle(f)))
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    d <= 2.0 * cam.depth_noise_sigma + 1e-6 * p.position.norm() + 1e-9,
                    "{d}"
                );
            }
        }
    }

    fn point_triangle_distance(p: &Vec3, t: [Vec3; 3]) -> f64 {
        let n = (t[1] - t[0]).cross(&(t[2] - t[0])).normalize();
        let proj = p - n * n.dot(&(p - t[0]));
        let inside = (0..3).all(|i| {
            let a = t[i];
            let b = t[(i + 1) % 3];
            (b - a).cross(&(proj - a)).dot(&n) >= -1e-12
        });
        if inside {
            return n.dot(&(p - t[0])).abs();
        }
        (0..3)
            .map(|i| {
                let a = t[i];
                let b = t[(i + 1) % 3];
                let s = ((p - a).dot(&(b - a)) / (b - a).norm_squared()).clamp(0.0, 1.0);
                (p - (a + (b - a) * s)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}
