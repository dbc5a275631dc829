//! The registration optimizer: tensor power iteration for the soft
//! correspondence, greedy discretization, RANSAC filtering, closed-form
//! similarity-transform estimation, entry-hypothesis capture, and the outer
//! re-warp loop.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::{
    build_third_order_tensor, build_unary_tensor, select_wide_baseline_triplets,
    SparseThirdOrderTensor, UnaryTensor, OVERLAP_RATIOS,
};
use crate::error::{Error, Result};
use crate::geometry::{unflatten, Point3, PointCloud, SimilarityTransform};
use crate::kdtree::KdTree;
use crate::preprocess::{containing_box, extract_salient_fps, points_bounding, SalientStructure, MIN_SALIENT};

/// Step rotation angle (degrees) below which the outer loop may stop.
const STEP_ANGLE_TOL_DEG: f64 = 0.1;

/// Floor for the point-pair bandwidth, as a fraction of diameter(c1). The
/// working bandwidth opens up to half the median gap between the salient
/// sets at the starting pose, giving the unary term reach on unaligned
/// inputs; the floor keeps it narrow enough that a settled pose is pinned
/// rather than blurred.
const SIGMA_DIAM_FRACTION: f64 = 0.005;

/// Points drawn per cloud for dense consensus checks.
const SUBSAMPLE_CAP: usize = 512;

/// Capture hypotheses whose salient consensus is fully evaluated.
const CAPTURE_FULL_SCORE: usize = 512;

/// Capture hypotheses refined and compared on the dense subsamples.
const CAPTURE_POLISH: usize = 64;

/// Consecutive rejected steps after which the pose counts as settled.
const REJECT_STREAK_STOP: usize = 3;

/// Iterate norms below this are treated as numerical collapse.
const COLLAPSE_NORM: f64 = 1e-300;

/// Relaxed correspondence vector of length n1·n2, non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentVector {
    pub values: Vec<f64>,
}

impl AssignmentVector {
    /// The unbiased start: every entry 1/√n, unit L2 norm.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "assignment vector cannot be empty");
        Self { values: vec![1.0 / (n as f64).sqrt(); n] }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// One discretized match: salient index on each side plus its soft score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub i: usize,
    pub i_prime: usize,
    pub score: f64,
}

/// One-to-one matches ordered by non-increasing score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Tuning knobs for [`gctr_register`]; `..Default::default()` is the
/// intended way to override a few.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GctrConfig {
    /// Cap on selected first-cloud triplets; effective count is
    /// min(n1·n2, this).
    pub triplet_count: usize,
    /// Nearest pool descriptors kept per first-cloud triplet.
    pub knn: usize,
    /// Point-pair similarity bandwidth; None picks max(0.005 × diameter(c1),
    /// half the median starting gap between the salient sets).
    pub sigma: Option<f64>,
    /// Descriptor similarity bandwidth (cosine space, dimensionless).
    pub sigma_t: f64,
    pub power_tol: f64,
    pub power_max_iters: usize,
    /// Relative energy-change threshold for the outer loop.
    pub outer_tol: f64,
    pub outer_max_iters: usize,
    /// Pairs kept by discretization; None means min(n1, n2).
    pub top_r: Option<usize>,
    pub ransac_iters: usize,
    /// Inlier residual threshold; None means 0.05 × diameter(c1).
    pub ransac_inlier_tol: Option<f64>,
    /// Sweep values when the overlap is unknown; subset of {0.25, 0.5,
    /// 0.75, 1.0}.
    pub overlap_ratios: Vec<f64>,
    /// Farthest-point samples kept per cloud as salient points.
    pub salient_count: usize,
    pub seed: u64,
}

impl Default for GctrConfig {
    fn default() -> Self {
        Self {
            triplet_count: 5000,
            knn: 32,
            sigma: None,
            sigma_t: 0.3,
            power_tol: 1e-8,
            power_max_iters: 100,
            outer_tol: 1e-3,
            outer_max_iters: 30,
            top_r: None,
            ransac_iters: 512,
            ransac_inlier_tol: None,
            overlap_ratios: OVERLAP_RATIOS.to_vec(),
            salient_count: 150,
            seed: 0,
        }
    }
}

impl GctrConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        if self.triplet_count == 0 {
            return Err(Error::InvalidConfig("triplet_count must be at least 1".into()));
        }
        if self.knn == 0 {
            return Err(Error::InvalidConfig("knn must be at least 1".into()));
        }
        if let Some(s) = self.sigma {
            positive(s, "sigma")?;
        }
        positive(self.sigma_t, "sigma_t")?;
        positive(self.power_tol, "power_tol")?;
        positive(self.outer_tol, "outer_tol")?;
        if self.salient_count < MIN_SALIENT {
            return Err(Error::InvalidConfig(format!(
                "salient_count must be at least {MIN_SALIENT}, got {}",
                self.salient_count
            )));
        }
        if self.power_max_iters == 0 || self.outer_max_iters == 0 || self.ransac_iters == 0 {
            return Err(Error::InvalidConfig("iteration caps must be at least 1".into()));
        }
        if let Some(r) = self.top_r {
            if r < 4 {
                return Err(Error::InvalidConfig(format!("top_r must be at least 4, got {r}")));
            }
        }
        if let Some(t) = self.ransac_inlier_tol {
            positive(t, "ransac_inlier_tol")?;
        }
        if self.overlap_ratios.is_empty() {
            return Err(Error::InvalidConfig("overlap_ratios must not be empty".into()));
        }
        for &r in &self.overlap_ratios {
            if !OVERLAP_RATIOS.contains(&r) {
                return Err(Error::InvalidConfig(format!(
                    "overlap ratio {r} not in {OVERLAP_RATIOS:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of a registration run.
#[derive(Debug, Clone)]
pub struct GctrResult {
    /// Total transform mapping the second cloud onto the first, composed
    /// over all outer iterations.
    pub transform: SimilarityTransform,
    /// Final RANSAC-filtered correspondences (salient indices).
    pub correspondences: CorrespondenceSet,
    /// Objective value per outer iteration.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Registration failure carrying whatever partial result existed.
#[derive(Debug)]
pub struct GctrFailure {
    pub error: Error,
    pub partial: Option<GctrResult>,
}

impl fmt::Display for GctrFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "registration failed: {}", self.error)
    }
}

impl std::error::Error for GctrFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl GctrFailure {
    fn plain(error: Error) -> Self {
        Self { error, partial: None }
    }
}

/// Contracts the sparse tensor with `x` twice: out[α] accumulates
/// value·x[β]·x[γ] over the three cyclic relabelings of every entry.
pub fn contract_tensor(h3: &SparseThirdOrderTensor, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != h3.flat_len() {
        return Err(Error::DimensionMismatch(format!(
            "assignment length {} vs tensor flat length {}",
            x.len(),
            h3.flat_len()
        )));
    }
    let mut out = vec![0.0; x.len()];
    for e in &h3.entries {
        let (xa, xb, xc) = (x[e.alpha], x[e.beta], x[e.gamma]);
        out[e.alpha] += e.value * xb * xc;
        out[e.beta] += e.value * xc * xa;
        out[e.gamma] += e.value * xa * xb;
    }
    Ok(out)
}

/// The joint objective: cubic term over the cyclic convention plus the
/// linear point-pair term.
pub fn energy(h3: &SparseThirdOrderTensor, h1: &UnaryTensor, x: &[f64]) -> Result<f64> {
    if x.len() != h3.flat_len() || h1.values.len() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "lengths disagree: x {}, unary {}, tensor {}",
            x.len(),
            h1.values.len(),
            h3.flat_len()
        )));
    }
    let cubic: f64 = h3
        .entries
        .iter()
        .map(|e| 3.0 * e.value * x[e.alpha] * x[e.beta] * x[e.gamma])
        .sum();
    let linear: f64 = h1.values.iter().zip(x).map(|(h, v)| h * v).sum();
    Ok(cubic + linear)
}

/// Iterates x ← normalize(H₃⊗x⊗x + H₁) until the step shrinks below `tol`.
pub fn power_iteration(
    h3: &SparseThirdOrderTensor,
    h1: &UnaryTensor,
    x0: AssignmentVector,
    tol: f64,
    max_iters: usize,
) -> Result<AssignmentVector> {
    if h1.values.len() != h3.flat_len() || x0.values.len() != h3.flat_len() {
        return Err(Error::DimensionMismatch(format!(
            "lengths disagree: x0 {}, unary {}, tensor {}",
            x0.values.len(),
            h1.values.len(),
            h3.flat_len()
        )));
    }
    let mut x = x0.values;
    for _ in 0..max_iters {
        let mut y = contract_tensor(h3, &x)?;
        for (yi, hi) in y.iter_mut().zip(&h1.values) {
            *yi += hi;
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < COLLAPSE_NORM {
            return Err(Error::NumericalCollapse);
        }
        let inv = 1.0 / norm;
        let mut delta_sq = 0.0;
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi *= inv;
            let d = *yi - xi;
            delta_sq += d * d;
        }
        x = y;
        if delta_sq.sqrt() < tol {
            break;
        }
    }
    Ok(AssignmentVector { values: x })
}

/// Max-heap item: highest value first, ties toward the smaller flat index.
#[derive(PartialEq)]
struct HeapItem {
    value: f64,
    flat: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value.total_cmp(&other.value).then_with(|| other.flat.cmp(&self.flat))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy one-to-one rounding: repeatedly take the largest remaining entry,
/// retiring its row and column, until `top_r` pairs or exhaustion.
pub fn discretize(x: &AssignmentVector, n1: usize, n2: usize, top_r: usize) -> Result<CorrespondenceSet> {
    if top_r < 3 {
        return Err(Error::InvalidConfig(format!("top_r must be at least 3, got {top_r}")));
    }
    if x.values.len() != n1 * n2 {
        return Err(Error::DimensionMismatch(format!(
            "assignment length {} vs {n1}x{n2}",
            x.values.len()
        )));
    }
    let mut heap: BinaryHeap<HeapItem> = x
        .values
        .iter()
        .enumerate()
        .map(|(flat, &value)| HeapItem { value, flat })
        .collect();
    let mut row_used = vec![false; n1];
    let mut col_used = vec![false; n2];
    let mut pairs = Vec::with_capacity(top_r.min(n1.min(n2)));
    while pairs.len() < top_r {
        let Some(item) = heap.pop() else { break };
        let (i, i_prime) = unflatten(item.flat, n1, n2);
        if row_used[i] || col_used[i_prime] {
            continue;
        }
        row_used[i] = true;
        col_used[i_prime] = true;
        pairs.push(Correspondence { i, i_prime, score: item.value });
    }
    if pairs.len() < 3 {
        return Err(Error::InsufficientMatches);
    }
    Ok(CorrespondenceSet { pairs })
}

/// RANSAC over minimal 3-pair samples; returns the largest consensus set.
pub fn ransac_filter(
    cands: &CorrespondenceSet,
    pts1: &[Point3],
    pts2: &[Point3],
    iters: usize,
    inlier_tol: f64,
    seed: u64,
) -> Result<CorrespondenceSet> {
    let n = cands.len();
    if n < 3 {
        return Err(Error::InsufficientMatches);
    }
    if !(inlier_tol.is_finite() && inlier_tol > 0.0) {
        return Err(Error::InvalidConfig(format!("inlier tolerance must be positive, got {inlier_tol}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_mask: Option<Vec<bool>> = None;
    let mut best_count = 0usize;
    for _ in 0..iters {
        let sample = rand::seq::index::sample(&mut rng, n, 3);
        let a: Vec<Point3> = sample.iter().map(|s| pts1[cands.pairs[s].i]).collect();
        let b: Vec<Point3> = sample.iter().map(|s| pts2[cands.pairs[s].i_prime]).collect();
        let Ok(s) = estimate_scale(&a, &b) else { continue };
        let Ok(t) = estimate_transform(&a, &b, s) else { continue };
        let mut mask = vec![false; n];
        let mut count = 0usize;
        for (slot, pair) in mask.iter_mut().zip(&cands.pairs) {
            let moved = t.apply(&pts2[pair.i_prime]);
            if moved.distance(&pts1[pair.i]) < inlier_tol {
                *slot = true;
                count += 1;
            }
        }
        if count > best_count {
            best_count = count;
            best_mask = Some(mask);
        }
    }
    if best_count < 3 {
        return Err(Error::NoConsensus);
    }
    let mask = best_mask.unwrap();
    let pairs = cands
        .pairs
        .iter()
        .zip(&mask)
        .filter_map(|(p, &keep)| keep.then_some(*p))
        .collect();
    Ok(CorrespondenceSet { pairs })
}

/// Mean ratio of consecutive-pair distances: the closed-form scale.
pub fn estimate_scale(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matched lists have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::TooFewPoints { stage: "scale estimation", minimum: 2 });
    }
    let mut sum = 0.0;
    for i in 0..a.len() - 1 {
        let da = a[i].distance(&a[i + 1]);
        let db = b[i].distance(&b[i + 1]);
        if db < 1e-12 {
            return Err(Error::ZeroEdge);
        }
        sum += da / db;
    }
    Ok(sum / (a.len() - 1) as f64)
}

/// Closed-form fit of (R, t) for a given scale: orthogonal Procrustes on
/// centered sets with the reflection guard D = diag(1, 1, det(UVᵀ)).
pub fn estimate_transform(a: &[Point3], b: &[Point3], s: f64) -> Result<SimilarityTransform> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matched lists have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::TooFewPoints { stage: "transform estimation", minimum: 3 });
    }
    let inv_n = 1.0 / a.len() as f64;
    let u_a = a.iter().fold(Vector3::zeros(), |acc, p| acc + p.to_vec()) * inv_n;
    let u_b = b.iter().fold(Vector3::zeros(), |acc, p| acc + p.to_vec()) * inv_n;
    let mut m = Matrix3::zeros();
    for (pa, pb) in a.iter().zip(b) {
        m += (pa.to_vec() - u_a) * (pb.to_vec() - u_b).transpose();
    }
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("svd with u requested"), svd.v_t.expect("svd with v_t requested"));

    // Order singular triplets by descending value so the reflection guard
    // flips the weakest axis.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&p, &q| svd.singular_values[q].total_cmp(&svd.singular_values[p]));
    let mut u_sorted = Matrix3::zeros();
    let mut v_t_sorted = Matrix3::zeros();
    let mut sv = [0.0f64; 3];
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_t_sorted.set_row(dst, &v_t.row(src));
        sv[dst] = svd.singular_values[src];
    }
    if !(sv[0] > 0.0) || sv[1] <= 1e-9 * sv[0] {
        return Err(Error::DegenerateConfiguration);
    }
    let d = u_sorted.determinant() * v_t_sorted.determinant();
    let rotation = u_sorted * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t_sorted;
    let translation = u_a - s * (rotation * u_b);
    SimilarityTransform::new(s, rotation, translation)
}

/// Mixes loop coordinates into the base seed (splitmix64 finalizer).
pub(crate) fn derive_seed(base: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = base
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ c.wrapping_mul(0x94D0_49BB_1331_11EB);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct IterationStep {
    step: SimilarityTransform,
    inliers: CorrespondenceSet,
    energy: f64,
}

/// Fixed per-run quantities shared by every ratio attempt.
struct RunContext<'a> {
    salient1: &'a SalientStructure,
    sigma: f64,
    inlier_tol: f64,
    diam1: f64,
    count: usize,
    pool_count: usize,
    top_r: usize,
    pick_tree: KdTree,
    dense1: Vec<Point3>,
    dense_tree: KdTree,
    dense2: Vec<Point3>,
}

fn stride_subsample(pts: &[Point3], cap: usize) -> Vec<Point3> {
    let step = (pts.len() / cap).max(1);
    pts.iter().step_by(step).take(cap).copied().collect()
}

/// Trimmed mean of nearest-neighbor gaps from the mapped second-cloud
/// subsample to the first-cloud subsample. Lower is better. The trim keeps
/// the closest half so outliers and non-overlapping regions do not dominate,
/// and unlike the tensor objective this comparator tells symmetry-related
/// poses of a shape apart, since only the planted pose lands points on their
/// sampled counterparts.
fn dense_gap(ctx: &RunContext<'_>, t: &SimilarityTransform) -> f64 {
    let mut ds: Vec<f64> = ctx
        .dense2
        .iter()
        .map(|q| {
            let m = t.apply(q);
            ctx.dense_tree.nearest_one(&[m.x, m.y, m.z]).expect("non-empty subsample").1.sqrt()
        })
        .collect();
    ds.sort_by(f64::total_cmp);
    let keep = (ds.len() / 2).max(1);
    ds[..keep].iter().sum::<f64>() / keep as f64
}

/// Pairs induced by a transform: each second-cloud pick matched to its
/// nearest first-cloud pick within tol, deduplicated one-to-one smallest
/// residual first. Returns (i, i_prime, residual) sorted by residual.
fn induced_pairs(
    ctx: &RunContext<'_>,
    s2: &[Point3],
    t: &SimilarityTransform,
    tol: f64,
) -> Vec<(usize, usize, f64)> {
    let mut raw: Vec<(f64, usize, usize)> = Vec::new();
    for (ip, q) in s2.iter().enumerate() {
        let m = t.apply(q);
        if let Some((i, d2)) = ctx.pick_tree.nearest_one(&[m.x, m.y, m.z]) {
            let d = d2.sqrt();
            if d < tol {
                raw.push((d, i, ip));
            }
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used1 = vec![false; ctx.salient1.len()];
    let mut out = Vec::new();
    for (d, i, ip) in raw {
        if !used1[i] {
            used1[i] = true;
            out.push((i, ip, d));
        }
    }
    out
}

/// Capture pass over the triplet tensor. Every entry pairs an ordered
/// first-cloud triplet with an ordered second-cloud triangle, so each entry
/// proposes a complete similarity hypothesis on its own. Hypotheses are
/// screened by salient consensus, the survivors polished by a short trimmed
/// fit against the dense subsamples, and the pose with the smallest dense
/// gap wins. This is what pulls a registration from an arbitrary starting
/// pose into the right basin; the outer loop afterwards only has to hold or
/// sharpen it.
fn capture_from_entries(
    ctx: &RunContext<'_>,
    h3: &SparseThirdOrderTensor,
    s2: &[Point3],
) -> Option<SimilarityTransform> {
    let n1 = ctx.salient1.len();
    let n2 = s2.len();
    let s1 = &ctx.salient1.points;
    let pre_probes = stride_subsample(s2, 32);

    let mut fits: Vec<SimilarityTransform> = Vec::new();
    for e in &h3.entries {
        let mut a = [Point3::new(0.0, 0.0, 0.0); 3];
        let mut b = a;
        for (k, f) in [e.alpha, e.beta, e.gamma].into_iter().enumerate() {
            let (i, ip) = unflatten(f, n1, n2);
            a[k] = s1[i];
            b[k] = s2[ip];
        }
        let fit = estimate_scale(&a, &b)
            .ok()
            .filter(|s| s.is_finite() && *s > 1e-3 && *s < 1e3)
            .and_then(|s| estimate_transform(&a, &b, s).ok());
        if let Some(t) = fit {
            fits.push(t);
        }
    }
    if fits.is_empty() {
        return None;
    }

    let consensus = |t: &SimilarityTransform, probes: &[Point3]| -> (usize, f64) {
        let mut hits = 0usize;
        let mut resid = 0.0;
        for q in probes {
            let m = t.apply(q);
            if let Some((_, d2)) = ctx.pick_tree.nearest_one(&[m.x, m.y, m.z]) {
                let d = d2.sqrt();
                if d < ctx.inlier_tol {
                    hits += 1;
                    resid += d;
                }
            }
        }
        (hits, resid)
    };
    let by_hits = |a: &(usize, f64, usize), b: &(usize, f64, usize)| {
        b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2))
    };

    let mut screened: Vec<(usize, f64, usize)> = fits
        .iter()
        .enumerate()
        .map(|(fi, t)| {
            let (hits, resid) = consensus(t, &pre_probes);
            (hits, resid, fi)
        })
        .collect();
    screened.sort_by(by_hits);
    screened.truncate(CAPTURE_FULL_SCORE);

    let mut full: Vec<(usize, f64, usize)> = screened
        .iter()
        .map(|&(_, _, fi)| {
            let (hits, resid) = consensus(&fits[fi], s2);
            (hits, resid, fi)
        })
        .collect();
    full.sort_by(by_hits);
    full.truncate(CAPTURE_POLISH);

    let mut best: Option<(f64, SimilarityTransform)> = None;
    for &(_, _, fi) in &full {
        let mut t = fits[fi].clone();
        // Coarse rounds on the picks widen the basin cheaply.
        for _ in 0..3 {
            let pairs = induced_pairs(ctx, s2, &t, ctx.inlier_tol);
            if pairs.len() < 4 {
                break;
            }
            let a: Vec<Point3> = pairs.iter().map(|&(i, _, _)| s1[i]).collect();
            let b: Vec<Point3> = pairs.iter().map(|&(_, ip, _)| s2[ip]).collect();
            match estimate_scale(&a, &b).and_then(|s| estimate_transform(&a, &b, s)) {
                Ok(nt) => t = nt,
                Err(_) => break,
            }
        }
        // Trimmed rounds on the dense subsamples settle each candidate to
        // its local optimum; without this the gap comparison between
        // symmetry-related poses drowns in coarse-pose error.
        for _ in 0..4 {
            let mut matched: Vec<(f64, usize, usize)> = ctx
                .dense2
                .iter()
                .enumerate()
                .map(|(bi, q)| {
                    let m = t.apply(q);
                    let (ai, d2) =
                        ctx.dense_tree.nearest_one(&[m.x, m.y, m.z]).expect("non-empty subsample");
                    (d2.sqrt(), ai, bi)
                })
                .collect();
            matched.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)));
            let keep = (matched.len() / 2).clamp(4, matched.len());
            if matched.len() < 4 {
                break;
            }
            let a: Vec<Point3> = matched[..keep].iter().map(|&(_, ai, _)| ctx.dense1[ai]).collect();
            let b: Vec<Point3> = matched[..keep].iter().map(|&(_, _, bi)| ctx.dense2[bi]).collect();
            match estimate_scale(&a, &b).and_then(|s| estimate_transform(&a, &b, s)) {
                Ok(nt) => t = nt,
                Err(_) => break,
            }
        }
        let d = dense_gap(ctx, &t);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, t));
        }
    }
    best.map(|(_, t)| t)
}

fn one_iteration(
    ctx: &RunContext<'_>,
    h3: &SparseThirdOrderTensor,
    cur: &[Point3],
    cfg: &GctrConfig,
    ratio_idx: usize,
    iter_idx: usize,
) -> std::result::Result<IterationStep, (Error, Option<CorrespondenceSet>)> {
    let plain = |e: Error| (e, None);
    let n1 = ctx.salient1.len();
    let n2 = cur.len();
    let h1 = build_unary_tensor(&ctx.salient1.points, cur, ctx.sigma).map_err(plain)?;
    let x = power_iteration(h3, &h1, AssignmentVector::uniform(n1 * n2), cfg.power_tol, cfg.power_max_iters)
        .map_err(plain)?;
    let e = energy(h3, &h1, &x.values).map_err(plain)?;
    let cands = discretize(&x, n1, n2, ctx.top_r).map_err(plain)?;
    let with_cands = |err: Error| (err, Some(cands.clone()));
    let inliers = ransac_filter(
        &cands,
        &ctx.salient1.points,
        cur,
        cfg.ransac_iters,
        ctx.inlier_tol,
        derive_seed(cfg.seed, ratio_idx as u64, iter_idx as u64, 3),
    )
    .map_err(with_cands)?;
    let a: Vec<Point3> = inliers.pairs.iter().map(|p| ctx.salient1.points[p.i]).collect();
    let b: Vec<Point3> = inliers.pairs.iter().map(|p| cur[p.i_prime]).collect();
    let s_step = estimate_scale(&a, &b).map_err(with_cands)?;
    let step = estimate_transform(&a, &b, s_step).map_err(with_cands)?;
    Ok(IterationStep { step, inliers, energy: e })
}

fn run_single_ratio(
    ctx: &RunContext<'_>,
    salient2: &SalientStructure,
    cfg: &GctrConfig,
    ratio: f64,
    ratio_idx: usize,
) -> std::result::Result<GctrResult, (Error, Option<GctrResult>)> {
    let plain = |e: Error| (e, None);
    let box1 = points_bounding(&ctx.salient1.points).map_err(plain)?;
    let box2 = points_bounding(&salient2.points).map_err(plain)?;
    let trips1 = select_wide_baseline_triplets(
        &ctx.salient1.points,
        ctx.count,
        ratio,
        &box1,
        derive_seed(cfg.seed, ratio_idx as u64, 0, 1),
    )
    .map_err(plain)?;
    let pool2 = select_wide_baseline_triplets(
        &salient2.points,
        ctx.pool_count,
        ratio,
        &box2,
        derive_seed(cfg.seed, ratio_idx as u64, 0, 2),
    )
    .map_err(plain)?;
    // The angle descriptors are similarity-invariant, so the triplet tensor
    // built at the starting pose stays valid under every later warp and is
    // built once per ratio.
    let h3 = build_third_order_tensor(
        &trips1,
        &ctx.salient1.points,
        &pool2,
        &salient2.points,
        cfg.knn,
        cfg.sigma_t,
    )
    .map_err(plain)?;

    let mut cur: Vec<Point3> = salient2.points.clone();
    let mut total = SimilarityTransform::identity();
    let mut total_gap = dense_gap(ctx, &total);
    let mut energies: Vec<f64> = Vec::new();
    let mut last_corr: Option<CorrespondenceSet> = None;
    let mut prev_energy: Option<f64> = None;
    let mut converged = false;
    let mut rejects = 0usize;

    for m in 0..cfg.outer_max_iters {
        match one_iteration(ctx, &h3, &cur, cfg, ratio_idx, m) {
            Ok(o) => {
                let mut step = o.step;
                if m == 0 {
                    if let Some(cap) = capture_from_entries(ctx, &h3, &salient2.points) {
                        if dense_gap(ctx, &cap) < dense_gap(ctx, &step) {
                            step = cap;
                        }
                    }
                }
                energies.push(o.energy);
                last_corr = Some(o.inliers);

                // A step is applied only if it closes the dense gap; a pose
                // that survives several independent proposals is settled.
                let cand_total = step.compose(&total);
                let cand_gap = dense_gap(ctx, &cand_total);
                if cand_gap < total_gap {
                    total = cand_total;
                    total_gap = cand_gap;
                    for (p, q) in cur.iter_mut().zip(&salient2.points) {
                        *p = total.apply(q);
                    }
                    rejects = 0;

                    let small_step = step.rotation_angle_deg() < STEP_ANGLE_TOL_DEG
                        && (1.0 - step.scale()).abs() < cfg.outer_tol
                        && step.translation().norm() < cfg.outer_tol * ctx.diam1;
                    let energy_settled = prev_energy
                        .is_some_and(|pe| (o.energy - pe).abs() / pe.abs().max(1e-12) < cfg.outer_tol);
                    prev_energy = Some(o.energy);
                    if small_step || energy_settled {
                        converged = true;
                        break;
                    }
                } else {
                    rejects += 1;
                    if rejects >= REJECT_STREAK_STOP {
                        converged = true;
                        break;
                    }
                }
            }
            Err((e, cands)) if m == 0 => {
                let partial = cands.map(|correspondences| GctrResult {
                    transform: SimilarityTransform::identity(),
                    correspondences,
                    energy_trace: Vec::new(),
                    iterations: 0,
                    converged: false,
                });
                return Err((e, partial));
            }
            // A later iteration failed: keep the progress made so far.
            Err(_) => break,
        }
    }
    let iterations = energies.len();
    let induced = induced_pairs(ctx, &salient2.points, &total, ctx.inlier_tol);
    let correspondences = if induced.is_empty() {
        last_corr.expect("at least one iteration succeeded")
    } else {
        CorrespondenceSet {
            pairs: induced
                .into_iter()
                .map(|(i, ip, d)| Correspondence { i, i_prime: ip, score: -d })
                .collect(),
        }
    };
    Ok(GctrResult {
        transform: total,
        correspondences,
        energy_trace: energies,
        iterations,
        converged,
    })
}

/// Full registration pipeline: estimates the similarity transform mapping
/// `c2` onto `c1`, sweeping the configured overlap ratios and keeping the
/// run whose final pose leaves the smallest dense gap (final objective value
/// breaks ties).
pub fn gctr_register(c1: &PointCloud, c2: &PointCloud, cfg: &GctrConfig) -> std::result::Result<GctrResult, GctrFailure> {
    cfg.validate().map_err(GctrFailure::plain)?;
    let salient1 = extract_salient_fps(c1, cfg.salient_count).map_err(GctrFailure::plain)?;
    let salient2 = extract_salient_fps(c2, cfg.salient_count).map_err(GctrFailure::plain)?;
    let diam1 = containing_box(c1).map_err(GctrFailure::plain)?.diameter;
    let (n1, n2) = (salient1.len(), salient2.len());
    let count = (n1 * n2).min(cfg.triplet_count);

    let coords1: Vec<[f64; 3]> = salient1.points.iter().map(|q| [q.x, q.y, q.z]).collect();
    let pick_tree = KdTree::build(&coords1);
    let dense1 = stride_subsample(&c1.points, SUBSAMPLE_CAP);
    let dense2 = stride_subsample(&c2.points, SUBSAMPLE_CAP);
    let dcoords: Vec<[f64; 3]> = dense1.iter().map(|q| [q.x, q.y, q.z]).collect();
    let dense_tree = KdTree::build(&dcoords);

    let sigma = cfg.sigma.unwrap_or_else(|| {
        let mut gaps: Vec<f64> = salient2
            .points
            .iter()
            .map(|q| pick_tree.nearest_one(&[q.x, q.y, q.z]).expect("non-empty picks").1.sqrt())
            .collect();
        gaps.sort_by(f64::total_cmp);
        (0.5 * gaps[gaps.len() / 2]).max(SIGMA_DIAM_FRACTION * diam1)
    });

    let ctx = RunContext {
        salient1: &salient1,
        sigma,
        inlier_tol: cfg.ransac_inlier_tol.unwrap_or(0.05 * diam1),
        diam1,
        count,
        pool_count: count.saturating_mul(4),
        top_r: cfg.top_r.unwrap_or(n1.min(n2)),
        pick_tree,
        dense1,
        dense_tree,
        dense2,
    };

    let mut best: Option<(f64, f64, GctrResult)> = None;
    let mut last_error: Option<Error> = None;
    let mut best_partial: Option<GctrResult> = None;
    for (ratio_idx, &ratio) in cfg.overlap_ratios.iter().enumerate() {
        match run_single_ratio(&ctx, &salient2, cfg, ratio, ratio_idx) {
            Ok(res) => {
                let gap = dense_gap(&ctx, &res.transform);
                let e = *res.energy_trace.last().expect("non-empty trace");
                let better = match &best {
                    None => true,
                    Some((bg, be, _)) => gap < *bg || (gap == *bg && e > *be),
                };
                if better {
                    best = Some((gap, e, res));
                }
            }
            Err((e, partial)) => {
                last_error = Some(e);
                if best_partial.is_none() {
                    best_partial = partial;
                }
            }
        }
    }
    best.map(|(_, _, res)| res).ok_or_else(|| GctrFailure {
        error: last_error.expect("no result implies at least one error"),
        partial: best_partial,
    })
}
