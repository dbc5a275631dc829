//! Synthetic cross-source benchmark pairs with known ground truth, plus the
//! builtin closed-form shapes the tests sample from.

use std::ops::Range;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_transform, Point3, PointCloud, SimilarityTransform};
use crate::preprocess::{containing_box, points_bounding};

const TORUS_MAJOR: f64 = 1.0;
const TORUS_MINOR: f64 = 0.4;
const BUMP_AMPLITUDE: f64 = 0.15;

/// Fewest points a generated cloud may hold after any perturbation stage.
const STAGE_MINIMUM: usize = 50;

/// How one synthetic pair differs across its two simulated sources.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossSourceSpec {
    /// Fraction of base points each source retains (independent draws).
    pub density_keep_a: f64,
    pub density_keep_b: f64,
    /// Gaussian noise std as a fraction of the base diameter.
    pub noise_sigma_a: f64,
    pub noise_sigma_b: f64,
    /// Fraction of B's points replaced by uniform samples in a 1.2× box.
    pub outlier_frac: f64,
    /// Fraction of B removed by a random half-space cut.
    pub crop_frac: f64,
    /// Planted transform applied to B (maps the base frame onto B's frame).
    pub transform: SimilarityTransform,
    pub seed: u64,
}

impl Default for CrossSourceSpec {
    fn default() -> Self {
        Self {
            density_keep_a: 1.0,
            density_keep_b: 1.0,
            noise_sigma_a: 0.0,
            noise_sigma_b: 0.0,
            outlier_frac: 0.0,
            crop_frac: 0.0,
            transform: SimilarityTransform::identity(),
            seed: 0,
        }
    }
}

impl CrossSourceSpec {
    pub fn validate(&self) -> Result<()> {
        let keep = |v: f64, name: &str| -> Result<()> {
            if v.is_finite() && v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        let frac = |v: f64, name: &str| -> Result<()> {
            if v.is_finite() && (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        keep(self.density_keep_a, "density_keep_a")?;
        keep(self.density_keep_b, "density_keep_b")?;
        for (v, name) in [(self.noise_sigma_a, "noise_sigma_a"), (self.noise_sigma_b, "noise_sigma_b")] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        frac(self.outlier_frac, "outlier_frac")?;
        frac(self.crop_frac, "crop_frac")?;
        let s = self.transform.scale();
        if !(0.2..=5.0).contains(&s) {
            return Err(Error::InvalidConfig(format!("planted scale must lie in [0.2, 5], got {s}")));
        }
        Ok(())
    }
}

/// A generated pair: register `cloud_b` onto `cloud_a`; the planted
/// transform maps the base (A) frame onto B, so its inverse is what a
/// registration of B onto A should recover.
#[derive(Debug, Clone)]
pub struct BenchmarkPair {
    pub cloud_a: PointCloud,
    pub cloud_b: PointCloud,
    pub ground_truth: SimilarityTransform,
    pub spec: CrossSourceSpec,
}

fn stage_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(crate::solver::derive_seed(seed, tag, 0, 0))
}

fn bernoulli_subsample(points: &[Point3], keep: f64, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    points.iter().copied().filter(|_| rng.gen_bool(keep)).collect()
}

fn add_noise(points: &mut [Point3], sigma: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidConfig(format!("bad noise sigma {sigma}: {e}")))?;
    for p in points.iter_mut() {
        p.x += normal.sample(rng);
        p.y += normal.sample(rng);
        p.z += normal.sample(rng);
    }
    Ok(())
}

fn uniform_unit_direction(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Removes the `crop_frac` fraction of points deepest along a random
/// direction, keeping survivors in their original order.
fn half_space_crop(points: Vec<Point3>, crop_frac: f64, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    if crop_frac == 0.0 {
        return points;
    }
    let removed = ((crop_frac * points.len() as f64).round() as usize).min(points.len());
    if removed == 0 {
        return points;
    }
    let dir = uniform_unit_direction(rng);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let pa = points[a].to_vec().dot(&dir);
        let pb = points[b].to_vec().dot(&dir);
        pb.total_cmp(&pa).then(a.cmp(&b))
    });
    let mut drop = vec![false; points.len()];
    for &idx in &order[..removed] {
        drop[idx] = true;
    }
    points
        .into_iter()
        .zip(drop)
        .filter_map(|(p, d)| (!d).then_some(p))
        .collect()
}

/// Replaces a fraction of points with uniform samples from the cloud's
/// 1.2×-inflated bounding box; cloud size is preserved.
fn inject_outliers(points: &mut [Point3], outlier_frac: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if outlier_frac == 0.0 || points.is_empty() {
        return Ok(());
    }
    let count = ((outlier_frac * points.len() as f64).round() as usize).min(points.len());
    if count == 0 {
        return Ok(());
    }
    let b = points_bounding(points)?;
    let center = Point3::new(
        0.5 * (b.min_corner.x + b.max_corner.x),
        0.5 * (b.min_corner.y + b.max_corner.y),
        0.5 * (b.min_corner.z + b.max_corner.z),
    );
    let half = Vector3::new(
        0.6 * (b.max_corner.x - b.min_corner.x),
        0.6 * (b.max_corner.y - b.min_corner.y),
        0.6 * (b.max_corner.z - b.min_corner.z),
    );
    let targets = rand::seq::index::sample(rng, points.len(), count);
    for idx in targets {
        points[idx] = Point3::new(
            center.x + rng.gen_range(-1.0..1.0) * half.x,
            center.y + rng.gen_range(-1.0..1.0) * half.y,
            center.z + rng.gen_range(-1.0..1.0) * half.z,
        );
    }
    Ok(())
}

fn check_stage(len: usize, stage: &'static str) -> Result<()> {
    if len < STAGE_MINIMUM {
        return Err(Error::TooFewPoints { stage, minimum: STAGE_MINIMUM });
    }
    Ok(())
}

/// Synthesizes a cross-source pair from one base cloud.
///
/// A = subsample + noise. B = transform(subsample + noise), then crop, then
/// outlier replacement. Fully deterministic given `spec.seed`.
pub fn generate_pair(base: &PointCloud, spec: &CrossSourceSpec) -> Result<BenchmarkPair> {
    if base.len() < 100 {
        return Err(Error::TooFewPoints { stage: "benchmark base", minimum: 100 });
    }
    spec.validate()?;
    let diam = containing_box(base)?.diameter;

    let mut a_pts = bernoulli_subsample(&base.points, spec.density_keep_a, &mut stage_rng(spec.seed, 1));
    check_stage(a_pts.len(), "source A subsampling")?;
    add_noise(&mut a_pts, spec.noise_sigma_a * diam, &mut stage_rng(spec.seed, 2))?;

    let mut b_pts = bernoulli_subsample(&base.points, spec.density_keep_b, &mut stage_rng(spec.seed, 3));
    check_stage(b_pts.len(), "source B subsampling")?;
    add_noise(&mut b_pts, spec.noise_sigma_b * diam, &mut stage_rng(spec.seed, 4))?;
    let b_cloud = apply_transform(&spec.transform, &PointCloud::new(b_pts)?);
    let mut b_pts = half_space_crop(b_cloud.points, spec.crop_frac, &mut stage_rng(spec.seed, 5));
    check_stage(b_pts.len(), "half-space crop")?;
    inject_outliers(&mut b_pts, spec.outlier_frac, &mut stage_rng(spec.seed, 6))?;

    Ok(BenchmarkPair {
        cloud_a: PointCloud::new(a_pts)?.with_source("synthetic-a"),
        cloud_b: PointCloud::new(b_pts)?.with_source("synthetic-b"),
        ground_truth: spec.transform.clone(),
        spec: spec.clone(),
    })
}

/// Uniformly random rotation matrix (Shoemake's quaternion method).
pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let u3: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = Quaternion::new(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin());
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// Random similarity transform: scale uniform in `scale_range`, uniform
/// rotation, translation uniform in the cube of half-width `t_max`.
pub fn random_similarity(rng: &mut ChaCha8Rng, scale_range: Range<f64>, t_max: f64) -> SimilarityTransform {
    let s = if scale_range.start < scale_range.end {
        rng.gen_range(scale_range)
    } else {
        scale_range.start
    };
    let r = random_rotation(rng);
    let t = if t_max > 0.0 {
        Vector3::new(
            rng.gen_range(-t_max..t_max),
            rng.gen_range(-t_max..t_max),
            rng.gen_range(-t_max..t_max),
        )
    } else {
        Vector3::zeros()
    };
    SimilarityTransform::new(s, r, t).expect("constructed from a unit quaternion")
}

fn sample_sphere(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    (0..n).map(|_| Point3::from_vec(uniform_unit_direction(rng))).collect()
}

fn sample_torus(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        // Area-uniform sampling: acceptance weight ∝ R + r·cos v.
        let w: f64 = rng.gen();
        if w > (TORUS_MAJOR + TORUS_MINOR * v.cos()) / (TORUS_MAJOR + TORUS_MINOR) {
            continue;
        }
        let ring = TORUS_MAJOR + TORUS_MINOR * v.cos();
        out.push(Point3::new(ring * u.cos(), ring * u.sin(), TORUS_MINOR * v.sin()));
    }
    out
}

fn sample_bumps(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            let dir = uniform_unit_direction(rng);
            let theta = dir.z.clamp(-1.0, 1.0).acos();
            let phi = dir.y.atan2(dir.x);
            let r = 1.0 + BUMP_AMPLITUDE * (3.0 * theta).sin() * (2.0 * phi).cos();
            Point3::from_vec(r * dir)
        })
        .collect()
}

/// Surface of an L-shaped prism: cross-section (0,0)-(2,0)-(2,1)-(1,1)-
/// (1,2)-(0,2) extruded over z ∈ [0, 1], caps included.
fn sample_lshape(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let edges: [((f64, f64), (f64, f64)); 6] = [
        ((0.0, 0.0), (2.0, 0.0)),
        ((2.0, 0.0), (2.0, 1.0)),
        ((2.0, 1.0), (1.0, 1.0)),
        ((1.0, 1.0), (1.0, 2.0)),
        ((1.0, 2.0), (0.0, 2.0)),
        ((0.0, 2.0), (0.0, 0.0)),
    ];
    let edge_lengths: Vec<f64> = edges
        .iter()
        .map(|((x0, y0), (x1, y1))| ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt())
        .collect();
    let cap_area = 3.0;
    let side_area: f64 = edge_lengths.iter().sum();
    let total = 2.0 * cap_area + side_area;

    let sample_cap = |rng: &mut ChaCha8Rng| -> (f64, f64) {
        // The L splits into [0,2]×[0,1] (area 2) and [0,1]×[1,2] (area 1).
        if rng.gen_range(0.0..3.0) < 2.0 {
            (rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0))
        } else {
            (rng.gen_range(0.0..1.0), rng.gen_range(1.0..2.0))
        }
    };

    (0..n)
        .map(|_| {
            let mut pick = rng.gen_range(0.0..total);
            if pick < 2.0 * cap_area {
                let (x, y) = sample_cap(rng);
                let z = if pick < cap_area { 0.0 } else { 1.0 };
                return Point3::new(x, y, z);
            }
            pick -= 2.0 * cap_area;
            for (((x0, y0), (x1, y1)), len) in edges.iter().zip(&edge_lengths) {
                if pick < *len {
                    let t = pick / len;
                    return Point3::new(x0 + t * (x1 - x0), y0 + t * (y1 - y0), rng.gen_range(0.0..1.0));
                }
                pick -= len;
            }
            // Floating-point spillover lands on the final edge's start.
            Point3::new(0.0, 2.0, rng.gen_range(0.0..1.0))
        })
        .collect()
}

/// Deterministic sampler for the builtin closed-form surfaces:
/// "sphere", "torus", "lshape", "bumps".
pub fn builtin_shapes(name: &str, n: usize, seed: u64) -> Result<PointCloud> {
    if n < 100 {
        return Err(Error::InvalidConfig(format!("shape sampling needs n >= 100, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = match name {
        "sphere" => sample_sphere(n, &mut rng),
        "torus" => sample_torus(n, &mut rng),
        "lshape" => sample_lshape(n, &mut rng),
        "bumps" => sample_bumps(n, &mut rng),
        other => return Err(Error::UnknownShape(other.to_string())),
    };
    Ok(PointCloud::new(points)?.with_source(name))
}

/// Names accepted by [`builtin_shapes`].
pub const SHAPE_NAMES: [&str; 4] = ["sphere", "torus", "lshape", "bumps"];
