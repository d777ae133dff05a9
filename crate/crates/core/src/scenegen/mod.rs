//! Synthetic labeled scenes: object layout on a table plane, z-buffer depth
//! rendering from a pinhole camera, and dataset generation.

mod camera;
mod dataset;
mod layout;
mod models;
mod render;
mod scene;

pub use camera::CameraModel;
pub use dataset::generate_dataset;
pub use layout::{
    look_at, sample_camera_pose, sample_layout, Background, ClutterItem, LayoutConfig, OrbitConfig, Placement,
    SceneSpec, RETRY_BUDGET, YAW_STEP_DEG,
};
pub use models::{builtin_mesh, builtin_model, ClutterShape, ObjectModel, BUILTIN_MODELS};
pub use render::{
    rasterize, render_depth, render_items, scene_items, table_plane, DepthImage, PixelHit, RenderItem, NOISE_TRUNCATION,
};
pub use scene::{InstanceTruth, LabeledScene};
