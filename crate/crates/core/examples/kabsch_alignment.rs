//! Recovers a rigid transform from noisy correspondences and reports the
//! rotation and translation errors as the noise grows.
//!
//! Usage: `cargo run --release --example kabsch_alignment [points] [seed]`

use pointpose::geometry::{alignment_residual, kabsch_align, RigidTransform, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pointpose::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(9);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src: Vec<Vec3> = (0..n)
        .map(|_| Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1)))
        .collect();
    let truth = RigidTransform::random(&mut rng, 1.0);
    for noise in [0.0, 1e-4, 1e-3, 1e-2] {
        let dst: Vec<Vec3> = src
            .iter()
            .map(|p| truth.apply(p) + Vec3::from_fn(|_, _| rng.random_range(-noise..=noise)))
            .collect();
        let est = kabsch_align(&src, &dst)?;
        println!(
            "noise {:7.4} m  rotation error {:8.4} deg  translation error {:.2e} m  squared residual sum {:.2e} m^2",
            noise,
            est.angle_to(&truth).to_degrees(),
            (est.translation - truth.translation).norm(),
            alignment_residual(&est, &src, &dst)
        );
    }
    Ok(())
}
