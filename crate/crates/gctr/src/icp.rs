//! Point-to-point ICP baseline with containing-box scale normalization.
//!
//! Scale is fixed up front by rescaling the source cloud to the target's
//! box diameter; the iteration itself fits rigid motion only. The reported
//! residual is the root-mean-square nearest-neighbor distance with each
//! distance capped at the rejection threshold, which makes the trace
//! non-increasing under the alternating minimization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, SimilarityTransform};
use crate::kdtree::KdTree;
use crate::preprocess::{containing_box, normalize_scale_pair};
use crate::solver::{derive_seed, estimate_transform};

/// Clouds larger than this are uniformly downsampled before iterating.
const DOWNSAMPLE_THRESHOLD: usize = 20_000;
const DOWNSAMPLE_TARGET: usize = 2_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Stop once the residual changes by less than this between iterations.
    pub convergence_tol: f64,
    /// Correspondences farther than this are rejected; `None` means
    /// 0.25 times the target cloud's box diameter.
    pub max_correspondence_dist: Option<f64>,
    pub seed: u64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            convergence_tol: 1e-8,
            max_correspondence_dist: None,
            seed: 0,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        if let Some(d) = self.max_correspondence_dist {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "max_correspondence_dist must be positive, got {d}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    /// Maps source (`c2`) coordinates into the target (`c1`) frame,
    /// pre-scale folded in.
    pub transform: SimilarityTransform,
    pub mean_residual: f64,
    pub iterations: usize,
    /// Residual before iterating, then after each iteration.
    pub residual_trace: Vec<f64>,
    pub converged: bool,
}

fn downsample(points: &[Point3], seed: u64) -> Vec<Point3> {
    if points.len() <= DOWNSAMPLE_THRESHOLD {
        return points.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = rand::seq::index::sample(&mut rng, points.len(), DOWNSAMPLE_TARGET).into_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| points[i]).collect()
}

fn capped_rms(tree: &KdTree, points: &[Point3], cap: f64) -> f64 {
    let sum: f64 = points
        .iter()
        .map(|p| {
            let (_, d2) = tree.nearest_one(&[p.x, p.y, p.z]).expect("non-empty target tree");
            d2.sqrt().min(cap).powi(2)
        })
        .sum();
    (sum / points.len() as f64).sqrt()
}

/// Registers `c2` onto `c1`, returning the full similarity transform.
pub fn icp_register(c1: &PointCloud, c2: &PointCloud, cfg: &IcpConfig) -> Result<IcpResult> {
    cfg.validate()?;
    let diam1 = containing_box(c1)?.diameter;
    let cap = cfg.max_correspondence_dist.unwrap_or(0.25 * diam1);

    let (c2_scaled, pre_scale) = normalize_scale_pair(c1, c2)?;
    let center2 = {
        let b = containing_box(c2)?;
        nalgebra::Vector3::new(
            0.5 * (b.min_corner.x + b.max_corner.x),
            0.5 * (b.min_corner.y + b.max_corner.y),
            0.5 * (b.min_corner.z + b.max_corner.z),
        )
    };
    let normalize = SimilarityTransform::new(
        pre_scale,
        nalgebra::Matrix3::identity(),
        (1.0 - pre_scale) * center2,
    )?;

    let targets = downsample(&c1.points, derive_seed(cfg.seed, 1, 0, 0));
    let mut cur = downsample(&c2_scaled.points, derive_seed(cfg.seed, 2, 0, 0));
    let target_coords: Vec<[f64; 3]> = targets.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree = KdTree::build(&target_coords);

    let mut rigid = SimilarityTransform::identity();
    let mut trace = vec![capped_rms(&tree, &cur, cap)];
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        let mut accepted_targets = Vec::new();
        let mut accepted_sources = Vec::new();
        for p in &cur {
            let (idx, d2) = tree.nearest_one(&[p.x, p.y, p.z]).expect("non-empty target tree");
            if d2.sqrt() < cap {
                accepted_targets.push(targets[idx]);
                accepted_sources.push(*p);
            }
        }
        if accepted_targets.len() < 3 {
            return Err(Error::TooFewPoints { stage: "icp correspondence", minimum: 3 });
        }
        let fit = estimate_transform(&accepted_targets, &accepted_sources, 1.0)?;
        for p in cur.iter_mut() {
            *p = fit.apply(p);
        }
        rigid = fit.compose(&rigid);
        let residual = capped_rms(&tree, &cur, cap);
        let change = (trace.last().copied().unwrap() - residual).abs();
        trace.push(residual);
        iterations += 1;
        if change < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(IcpResult {
        transform: rigid.compose(&normalize),
        mean_residual: trace.last().copied().unwrap(),
        iterations,
        residual_trace: trace,
        converged,
    })
}
