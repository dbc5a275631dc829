//! The two affinity tensors driving the solver: the dense first-order
//! point-pair similarity vector and the sparse third-order triplet tensor,
//! plus wide-baseline triplet selection.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{flat_index, Point3};
use crate::kdtree::KdTree;
use crate::preprocess::BoundingDiameter;

/// Attempts per requested triplet before rejection sampling gives up.
const SELECT_BUDGET_FACTOR: usize = 60;

/// Relative tolerance below which a triangle counts as collinear.
const COLLINEAR_TOL: f64 = 1e-12;

/// The overlap-ratio sweep values; selection accepts nothing else.
pub const OVERLAP_RATIOS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// Three distinct salient-point indices forming a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl Triplet {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        debug_assert!(i != j && j != k && i != k);
        Self { i, j, k }
    }
}

/// Cosines of the triangle's interior angles, in vertex order (at i, j, k).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletDescriptor {
    pub cosines: [f64; 3],
}

impl TripletDescriptor {
    pub fn distance(&self, other: &TripletDescriptor) -> f64 {
        self.cosines
            .iter()
            .zip(&other.cosines)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Dense point-pair similarity vector of length n1·n2, indexed by flat_index.
#[derive(Debug, Clone)]
pub struct UnaryTensor {
    pub values: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
}

/// One stored triplet-pair similarity at flat indices (alpha, beta, gamma).
#[derive(Debug, Clone, Copy)]
pub struct TensorEntry {
    pub alpha: usize,
    pub beta: usize,
    pub gamma: usize,
    pub value: f64,
}

/// Sparse supersymmetric third-order tensor over flat pair indices.
///
/// Each matched triplet pair is stored once; contraction and energy sum over
/// the three simultaneous cyclic permutations of (alpha, beta, gamma), which
/// is the crate-wide supersymmetry convention.
#[derive(Debug, Clone)]
pub struct SparseThirdOrderTensor {
    pub entries: Vec<TensorEntry>,
    pub n1: usize,
    pub n2: usize,
}

impl SparseThirdOrderTensor {
    pub fn flat_len(&self) -> usize {
        self.n1 * self.n2
    }
}

/// Interior-angle cosines of the triangle (p_i, p_j, p_k), in vertex order.
pub fn triplet_descriptor(p_i: &Point3, p_j: &Point3, p_k: &Point3) -> Result<TripletDescriptor> {
    let ij = p_j.to_vec() - p_i.to_vec();
    let ik = p_k.to_vec() - p_i.to_vec();
    let jk = p_k.to_vec() - p_j.to_vec();
    let (a, b, c) = (ij.norm(), ik.norm(), jk.norm());
    if a < 1e-300 || b < 1e-300 || c < 1e-300 {
        return Err(Error::DegenerateTriangle);
    }
    if ij.cross(&ik).norm() <= COLLINEAR_TOL * a * b {
        return Err(Error::DegenerateTriangle);
    }
    let cos_i = ij.dot(&ik) / (a * b);
    let cos_j = (-ij).dot(&jk) / (a * c);
    let cos_k = (-ik).dot(&(-jk)) / (b * c);
    Ok(TripletDescriptor { cosines: [cos_i, cos_j, cos_k] })
}

/// Randomly selects up to `count` distinct triplets whose three edges all
/// exceed `0.5 · overlap_ratio · diameter`. Deterministic given `seed`.
pub fn select_wide_baseline_triplets(
    points: &[Point3],
    count: usize,
    overlap_ratio: f64,
    diam: &BoundingDiameter,
    seed: u64,
) -> Result<Vec<Triplet>> {
    if count == 0 {
        return Err(Error::InvalidConfig("triplet count must be at least 1".into()));
    }
    if !OVERLAP_RATIOS.contains(&overlap_ratio) {
        return Err(Error::InvalidConfig(format!(
            "overlap ratio must be one of {OVERLAP_RATIOS:?}, got {overlap_ratio}"
        )));
    }
    let n = points.len();
    if n < 4 {
        return Err(Error::TooFewPoints { stage: "triplet selection", minimum: 4 });
    }
    let threshold = 0.5 * overlap_ratio * diam.diameter;
    let min_area = COLLINEAR_TOL * diam.diameter * diam.diameter;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<(usize, usize, usize)> = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let budget = count.saturating_mul(SELECT_BUDGET_FACTOR);
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        let k = rng.gen_range(0..n);
        if i == j || j == k || i == k {
            continue;
        }
        let mut key = [i, j, k];
        key.sort_unstable();
        let key = (key[0], key[1], key[2]);
        if seen.contains(&key) {
            continue;
        }
        let (p, q, r) = (points[key.0], points[key.1], points[key.2]);
        if p.distance(&q) <= threshold || p.distance(&r) <= threshold || q.distance(&r) <= threshold {
            continue;
        }
        let area = 0.5 * (q.to_vec() - p.to_vec()).cross(&(r.to_vec() - p.to_vec())).norm();
        if area <= min_area {
            continue;
        }
        seen.insert(key);
        out.push(Triplet::new(key.0, key.1, key.2));
    }
    if out.is_empty() {
        return Err(Error::NoValidTriplet);
    }
    Ok(out)
}

/// Builds the dense first-order tensor: exp(−‖p_i − p_{i'}‖² / sigma²) at
/// every flat pair index. `pts2` must already carry the current transform.
pub fn build_unary_tensor(pts1: &[Point3], pts2: &[Point3], sigma: f64) -> Result<UnaryTensor> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    let (n1, n2) = (pts1.len(), pts2.len());
    let inv = 1.0 / (sigma * sigma);
    let mut values = Vec::with_capacity(n1 * n2);
    for p2 in pts2 {
        for p1 in pts1 {
            let d = p1.distance(p2);
            values.push((-d * d * inv).exp());
        }
    }
    Ok(UnaryTensor { values, n1, n2 })
}

/// Builds the sparse third-order tensor: each first-cloud triplet is matched
/// to its `knn` nearest second-cloud pool descriptors, and one entry is
/// stored per match at the order-respecting flat indices.
///
/// The pool triplets are expanded to all six vertex orderings so the nearest
/// neighbors can realize any vertex correspondence; the three cyclic
/// relabelings of a stored entry are supplied by the contraction convention.
pub fn build_third_order_tensor(
    trips1: &[Triplet],
    pts1: &[Point3],
    pool2: &[Triplet],
    pts2: &[Point3],
    knn: usize,
    sigma_t: f64,
) -> Result<SparseThirdOrderTensor> {
    if knn == 0 {
        return Err(Error::InvalidConfig("knn must be at least 1".into()));
    }
    if !(sigma_t.is_finite() && sigma_t > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma_t must be positive, got {sigma_t}")));
    }
    let (n1, n2) = (pts1.len(), pts2.len());

    // Expand each pool combination to its six ordered variants. The cosine
    // at a vertex does not depend on the order of the other two, so the
    // variants' descriptors are permutations of one computed descriptor.
    let mut pool_vertices: Vec<[usize; 3]> = Vec::with_capacity(pool2.len() * 6);
    let mut pool_descriptors: Vec<[f64; 3]> = Vec::with_capacity(pool2.len() * 6);
    for t in pool2 {
        let Ok(d) = triplet_descriptor(&pts2[t.i], &pts2[t.j], &pts2[t.k]) else {
            continue;
        };
        let [ci, cj, ck] = d.cosines;
        let orderings = [
            ([t.i, t.j, t.k], [ci, cj, ck]),
            ([t.i, t.k, t.j], [ci, ck, cj]),
            ([t.j, t.i, t.k], [cj, ci, ck]),
            ([t.j, t.k, t.i], [cj, ck, ci]),
            ([t.k, t.i, t.j], [ck, ci, cj]),
            ([t.k, t.j, t.i], [ck, cj, ci]),
        ];
        for (verts, cos) in orderings {
            pool_vertices.push(verts);
            pool_descriptors.push(cos);
        }
    }
    if pool_descriptors.is_empty() {
        return Err(Error::EmptyPool);
    }
    let tree = KdTree::build(&pool_descriptors);
    let knn_eff = knn.min(pool_descriptors.len());
    let inv = 1.0 / (sigma_t * sigma_t);

    let mut entries = Vec::with_capacity(trips1.len() * knn_eff);
    for t in trips1 {
        let Ok(d1) = triplet_descriptor(&pts1[t.i], &pts1[t.j], &pts1[t.k]) else {
            continue;
        };
        for (pool_idx, dist_sq) in tree.nearest_k(&d1.cosines, knn_eff) {
            let [ip, jp, kp] = pool_vertices[pool_idx];
            entries.push(TensorEntry {
                alpha: flat_index(t.i, ip, n1),
                beta: flat_index(t.j, jp, n1),
                gamma: flat_index(t.k, kp, n1),
                value: (-dist_sq * inv).exp(),
            });
        }
    }
    Ok(SparseThirdOrderTensor { entries, n1, n2 })
}
