use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Vec3;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// A neighbor hit: point index and squared distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Neighbor) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

/// Static kd-tree over 3D positions.
///
/// Every query returns exactly what a brute-force scan would, ordering hits
/// by `(squared distance, index)` so equal distances resolve to the lowest
/// index.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Vec3>,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

impl SpatialIndex {
    pub fn build(points: &[Vec3]) -> Self {
        let mut index = SpatialIndex {
            points: points.to_vec(),
            perm: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build_node(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.perm[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let extent = hi - lo;
        let axis = extent.imax();
        if extent[axis] <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.perm[mid]][axis];
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Nearest point to `query`; `None` on an empty index.
    pub fn nearest(&self, query: &Vec3) -> Option<Neighbor> {
        let mut best: Option<Neighbor> = None;
        if !self.nodes.is_empty() {
            self.nearest_in(0, query, &mut best);
        }
        best
    }

    fn nearest_in(&self, node: usize, q: &Vec3, best: &mut Option<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let cand = Neighbor {
                        index: i,
                        dist2: (self.points[i] - q).norm_squared(),
                    };
                    if best.is_none_or(|b| cand.key_cmp(&b) == Ordering::Less) {
                        *best = Some(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, q, best);
                if best.is_none_or(|b| diff * diff <= b.dist2) {
                    self.nearest_in(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points sorted by `(distance, index)`.
    pub fn k_nearest(&self, query: &Vec3, k: usize) -> Vec<Neighbor> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_in(0, query, k, &mut heap);
        heap.into_sorted_vec()
    }

    fn knn_in(&self, node: usize, q: &Vec3, k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let cand = Neighbor {
                        index: i,
                        dist2: (self.points[i] - q).norm_squared(),
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_in(near, q, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").dist2 {
                    self.knn_in(far, q, k, heap);
                }
            }
        }
    }

    /// All points within `radius` (inclusive) sorted by `(distance, index)`.
    pub fn within_radius(&self, query: &Vec3, radius: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() && radius >= 0.0 {
            self.radius_in(0, query, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_in(&self, node: usize, q: &Vec3, r2: f64, out: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let dist2 = (self.points[i] - q).norm_squared();
                    if dist2 <= r2 {
                        out.push(Neighbor { index: i, dist2 });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_in(near, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_in(far, q, r2, out);
                }
            }
        }
    }
}
