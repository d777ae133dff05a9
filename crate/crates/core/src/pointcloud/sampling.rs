use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// How farthest point sampling picks its first point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedRule {
    #[default]
    LowestIndex,
    NearestCentroid,
}

fn check_count(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot sample {k} points from a cloud of {n}")));
    }
    Ok(())
}

fn seed_index(points: &[Vec3], rule: SeedRule) -> usize {
    match rule {
        SeedRule::LowestIndex => 0,
        SeedRule::NearestCentroid => {
            let c = points.iter().fold(Vec3::zeros(), |a, p| a + p) / points.len() as f64;
            let mut best = (f64::INFINITY, 0);
            for (i, p) in points.iter().enumerate() {
                let d = (p - c).norm_squared();
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        }
    }
}

/// Greedy farthest point sampling.
///
/// After the seed, each pick maximizes the distance to the nearest point
/// already picked; ties go to the lowest index. The result for `k` is a
/// prefix of the result for `k + 1`.
pub fn farthest_point_sampling(points: &[Vec3], k: usize, rule: SeedRule) -> Result<Vec<usize>> {
    check_count(points.len(), k)?;
    let mut state = FpsState::new(points);
    let mut out = Vec::with_capacity(k);
    let mut current = seed_index(points, rule);
    loop {
        out.push(current);
        if out.len() == k {
            break;
        }
        current = state.pick(&points[current], current);
    }
    Ok(out)
}

const FPS_LEAF_SIZE: usize = 64;

/// Relative slack on leaf distance bounds so rounding never hides an update.
const FPS_BOUND_SLACK: f64 = 1e-9;

struct FpsLeaf {
    start: usize,
    end: usize,
    lo: Vec3,
    hi: Vec3,
    /// Largest remaining distance in the leaf and its slot.
    best: f64,
    best_slot: usize,
}

/// Points reordered into spatially compact leaves, each tracking the
/// farthest remaining point so unaffected leaves are skipped.
struct FpsState {
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    original: Vec<usize>,
    slot_of: Vec<usize>,
    min_d2: Vec<f64>,
    leaves: Vec<FpsLeaf>,
}

impl FpsState {
    fn new(points: &[Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut ranges = Vec::new();
        split_leaves(points, &mut order, 0, &mut ranges);
        let mut slot_of = vec![0; points.len()];
        for (slot, &i) in order.iter().enumerate() {
            slot_of[i] = slot;
        }
        let leaves = ranges
            .into_iter()
            .map(|(start, end)| {
                let (lo, hi) = order[start..end].iter().fold(
                    (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
                    |(lo, hi), &i| (lo.inf(&points[i]), hi.sup(&points[i])),
                );
                FpsLeaf {
                    start,
                    end,
                    lo,
                    hi,
                    best: f64::INFINITY,
                    best_slot: start,
                }
            })
            .collect();
        Self {
            xs: order.iter().map(|&i| points[i].x).collect(),
            ys: order.iter().map(|&i| points[i].y).collect(),
            zs: order.iter().map(|&i| points[i].z).collect(),
            min_d2: vec![f64::INFINITY; points.len()],
            original: order,
            slot_of,
            leaves,
        }
    }

    /// Marks `taken` as picked, folds `c` into the nearest distances and
    /// returns the next pick.
    fn pick(&mut self, c: &Vec3, taken: usize) -> usize {
        let taken_slot = self.slot_of[taken];
        self.min_d2[taken_slot] = -1.0;
        for leaf in &mut self.leaves {
            let owns_taken = (leaf.start..leaf.end).contains(&taken_slot);
            let gap = (leaf.lo - c).sup(&(c - leaf.hi)).sup(&Vec3::zeros());
            if !owns_taken && gap.norm_squared() * (1.0 - FPS_BOUND_SLACK) > leaf.best {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_slot = leaf.start;
            for slot in leaf.start..leaf.end {
                let (dx, dy, dz) = (self.xs[slot] - c.x, self.ys[slot] - c.y, self.zs[slot] - c.z);
                let d2 = dx * dx + dy * dy + dz * dz;
                let m = &mut self.min_d2[slot];
                if d2 < *m {
                    *m = d2;
                }
                if *m > best || (*m == best && self.original[slot] < self.original[best_slot]) {
                    best = *m;
                    best_slot = slot;
                }
            }
            leaf.best = best;
            leaf.best_slot = best_slot;
        }
        let mut winner: Option<&FpsLeaf> = None;
        for leaf in &self.leaves {
            winner = match winner {
                Some(w)
                    if w.best > leaf.best
                        || (w.best == leaf.best && self.original[w.best_slot] < self.original[leaf.best_slot]) =>
                {
                    Some(w)
                }
                _ => Some(leaf),
            };
        }
        self.original[winner.expect("at least one leaf").best_slot]
    }
}

/// Median splits along the widest axis until ranges hold at most
/// `FPS_LEAF_SIZE` points.
fn split_leaves(points: &[Vec3], order: &mut [usize], offset: usize, out: &mut Vec<(usize, usize)>) {
    if order.len() <= FPS_LEAF_SIZE {
        out.push((offset, offset + order.len()));
        return;
    }
    let (lo, hi) = order.iter().fold(
        (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), &i| (lo.inf(&points[i]), hi.sup(&points[i])),
    );
    let axis = (hi - lo).imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    split_leaves(points, left, offset, out);
    split_leaves(points, right, offset + mid, out);
}

/// `k` distinct indices drawn uniformly without replacement.
pub fn random_sampling(points: &[Vec3], k: usize, seed: u64) -> Result<Vec<usize>> {
    check_count(points.len(), k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, points.len(), k).into_vec())
}
