//! Minimal 3D kd-tree for exact nearest-neighbor queries.
//!
//! Used for descriptor matching and ICP correspondences. Ties on squared
//! distance break toward the smaller point index, so queries are
//! deterministic regardless of build order.

use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy)]
struct Node {
    point: [f64; 3],
    index: usize,
    axis: usize,
    left: Option<u32>,
    right: Option<u32>,
}

/// Exact kd-tree over a fixed set of 3D points.
#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<Node>,
    root: Option<u32>,
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Candidate ordered by (squared distance, index); the heap keeps the worst
/// candidate on top.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    /// Builds a tree over `points`; result indices refer to this slice.
    pub fn build(points: &[[f64; 3]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut order[..], 0, &mut nodes);
        Self { nodes, root }
    }

    fn build_rec(points: &[[f64; 3]], order: &mut [usize], depth: usize, nodes: &mut Vec<Node>) -> Option<u32> {
        if order.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let index = order[mid];
        let id = nodes.len() as u32;
        nodes.push(Node { point: points[index], index, axis, left: None, right: None });
        let (lo, rest) = order.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = Self::build_rec(points, lo, depth + 1, nodes);
        let right = Self::build_rec(points, hi, depth + 1, nodes);
        nodes[id as usize].left = left;
        nodes[id as usize].right = right;
        Some(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nearest neighbor of `query`: `(point index, squared distance)`.
    pub fn nearest_one(&self, query: &[f64; 3]) -> Option<(usize, f64)> {
        self.nearest_k(query, 1).into_iter().next().map(|c| (c.0, c.1))
    }

    /// The `k` nearest neighbors, sorted by (squared distance, index).
    pub fn nearest_k(&self, query: &[f64; 3], k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index, c.d2)).collect()
    }

    fn search(&self, node: Option<u32>, query: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        let Some(id) = node else { return };
        let n = &self.nodes[id as usize];
        let cand = Candidate { d2: dist2(&n.point, query), index: n.index };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.push(cand);
            heap.pop();
        }
        let diff = query[n.axis] - n.point[n.axis];
        let (near, far) = if diff <= 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.search(near, query, k, heap);
        // The far side can only help if the splitting plane is closer than
        // the current worst candidate (or the heap is not yet full).
        if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
            self.search(far, query, k, heap);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_k(points: &[[f64; 3]], query: &[f64; 3], k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points.iter().enumerate().map(|(i, p)| (i, dist2(p, query))).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let points: Vec<[f64; 3]> = (0..300)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let tree = KdTree::build(&points);
        for _ in 0..100 {
            let q = [rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)];
            for k in [1, 3, 7] {
                assert_eq!(tree.nearest_k(&q, k), brute_force_k(&points, &q, k));
            }
        }
    }

    #[test]
    fn duplicate_points_tie_break_on_index() {
        let points = vec![[1.0, 0.0, 0.0], [0.0; 3], [0.0; 3], [0.0; 3]];
        let tree = KdTree::build(&points);
        let hits = tree.nearest_k(&[0.0; 3], 3);
        assert_eq!(hits, vec![(1, 0.0), (2, 0.0), (3, 0.0)]);
    }

    #[test]
    fn handles_small_and_empty_inputs() {
        assert!(KdTree::build(&[]).nearest_one(&[0.0; 3]).is_none());
        let tree = KdTree::build(&[[2.0, 0.0, 0.0]]);
        assert_eq!(tree.nearest_one(&[0.0; 3]), Some((0, 4.0)));
        assert_eq!(tree.nearest_k(&[0.0; 3], 5).len(), 1);
    }

    #[test]
    fn collinear_points_are_found() {
        // Degenerate geometry along one axis stresses the plane pruning.
        let points: Vec<[f64; 3]> = (0..50).map(|i| [i as f64, 0.0, 0.0]).collect();
        let tree = KdTree::build(&points);
        let d = 17.3f64 - 17.0;
        assert_eq!(tree.nearest_one(&[17.3, 0.0, 0.0]), Some((17, d * d)));
        assert_eq!(
            tree.nearest_k(&[17.3, 0.0, 0.0], 2).iter().map(|c| c.0).collect::<Vec<_>>(),
            vec![17, 18]
        );
    }
}
