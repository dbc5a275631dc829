//! Salient structure extraction and the scale pre-normalization used for
//! fair baseline comparison.
//!
//! Raw cross-source clouds differ in density by orders of magnitude, so
//! registration runs on a small set of salient points. Two reductions are
//! provided: per-cell centroids of a voxel grid anchored at the cloud's own
//! minimum corner (translation-equivariant), and farthest-point sampling,
//! which depends only on pairwise distance ratios and therefore commutes
//! with any similarity transform of the cloud.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

/// Fewest salient points that admit triplet selection and RANSAC.
pub const MIN_SALIENT: usize = 4;

/// How many times [`extract_salient_auto`] halves the cell before giving up.
const AUTO_MAX_HALVINGS: usize = 4;

/// A reduced cloud: one centroid per occupied cell, in (z, y, x) cell order.
#[derive(Debug, Clone)]
pub struct SalientStructure {
    pub points: Vec<Point3>,
    /// For each centroid, the original cloud indices it summarizes.
    pub source_indices: Vec<Vec<usize>>,
    pub cell_size: f64,
}

impl SalientStructure {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_cloud(&self) -> PointCloud {
        PointCloud { points: self.points.clone(), source: None }
    }
}

/// Axis-aligned containing box of a cloud, with its space diagonal.
#[derive(Debug, Clone, Copy)]
pub struct BoundingDiameter {
    pub min_corner: Point3,
    pub max_corner: Point3,
    pub diameter: f64,
}

/// Computes the tight axis-aligned bounding box and its diagonal length.
pub fn containing_box(cloud: &PointCloud) -> Result<BoundingDiameter> {
    points_bounding(&cloud.points)
}

/// [`containing_box`] over a bare point slice.
pub fn points_bounding(points: &[Point3]) -> Result<BoundingDiameter> {
    let Some(&first) = points.first() else {
        return Err(Error::DegenerateCloud("cannot bound an empty point set".into()));
    };
    let mut min = first;
    let mut max = first;
    for p in &points[1..] {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        min.z = min.z.min(p.z);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
        max.z = max.z.max(p.z);
    }
    let diameter = min.distance(&max);
    if diameter <= 0.0 {
        return Err(Error::ZeroDiameter);
    }
    Ok(BoundingDiameter { min_corner: min, max_corner: max, diameter })
}

/// Center of a bounding box.
pub(crate) fn box_center(b: &BoundingDiameter) -> Point3 {
    Point3::new(
        0.5 * (b.min_corner.x + b.max_corner.x),
        0.5 * (b.min_corner.y + b.max_corner.y),
        0.5 * (b.min_corner.z + b.max_corner.z),
    )
}

/// Reduces a cloud to per-cell centroids on a grid of edge `cell_size`.
///
/// Cells are keyed by `floor((p - min_corner) / cell_size)`, so the result is
/// a pure function of the point multiset.
pub fn extract_salient_points(cloud: &PointCloud, cell_size: f64) -> Result<SalientStructure> {
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(Error::InvalidConfig(format!("cell size must be positive, got {cell_size}")));
    }
    let anchor = {
        let first = cloud.points[0];
        cloud.points.iter().fold(first, |m, p| Point3::new(m.x.min(p.x), m.y.min(p.y), m.z.min(p.z)))
    };
    let mut cells: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (idx, p) in cloud.points.iter().enumerate() {
        let key = (
            ((p.z - anchor.z) / cell_size).floor() as i64,
            ((p.y - anchor.y) / cell_size).floor() as i64,
            ((p.x - anchor.x) / cell_size).floor() as i64,
        );
        cells.entry(key).or_default().push(idx);
    }
    if cells.len() < MIN_SALIENT {
        return Err(Error::DegenerateCloud(format!(
            "{} occupied cells at cell size {cell_size}; need at least {MIN_SALIENT}",
            cells.len()
        )));
    }
    let mut points = Vec::with_capacity(cells.len());
    let mut source_indices = Vec::with_capacity(cells.len());
    for members in cells.into_values() {
        let inv = 1.0 / members.len() as f64;
        let mut c = Point3::new(0.0, 0.0, 0.0);
        for &idx in &members {
            let p = cloud.points[idx];
            c.x += p.x;
            c.y += p.y;
            c.z += p.z;
        }
        points.push(Point3::new(c.x * inv, c.y * inv, c.z * inv));
        source_indices.push(members);
    }
    Ok(SalientStructure { points, source_indices, cell_size })
}

/// Extracts salient points at cell size `diameter / resolution`, halving the
/// cell up to four times while fewer than [`MIN_SALIENT`] cells come back.
pub fn extract_salient_auto(cloud: &PointCloud, resolution: f64) -> Result<SalientStructure> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::InvalidConfig(format!("resolution must be positive, got {resolution}")));
    }
    let diameter = containing_box(cloud)?.diameter;
    let mut cell = diameter / resolution;
    for _ in 0..=AUTO_MAX_HALVINGS {
        match extract_salient_points(cloud, cell) {
            Err(Error::DegenerateCloud(_)) => cell /= 2.0,
            other => return other,
        }
    }
    Err(Error::TooFewPoints { stage: "salient extraction", minimum: MIN_SALIENT })
}

/// Reduces a cloud to `count` farthest-point samples.
///
/// Selection starts at the point farthest from the cloud centroid and then
/// greedily adds whichever point lies farthest from the chosen set, ties
/// resolved toward the lower index. Every comparison involves only distances,
/// which a similarity transform rescales uniformly, so transforming the cloud
/// transforms the selection pick for pick. `cell_size` reports the spacing of
/// the final pick; every cloud point lies within it of some sample.
pub fn extract_salient_fps(cloud: &PointCloud, count: usize) -> Result<SalientStructure> {
    if count < MIN_SALIENT {
        return Err(Error::InvalidConfig(format!(
            "salient count must be at least {MIN_SALIENT}, got {count}"
        )));
    }
    if cloud.len() < MIN_SALIENT {
        return Err(Error::TooFewPoints { stage: "salient extraction", minimum: MIN_SALIENT });
    }
    points_bounding(&cloud.points)?;
    let inv = 1.0 / cloud.len() as f64;
    let mut centroid = Point3::new(0.0, 0.0, 0.0);
    for p in &cloud.points {
        centroid.x += p.x * inv;
        centroid.y += p.y * inv;
        centroid.z += p.z * inv;
    }
    let mut start = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, p) in cloud.points.iter().enumerate() {
        let d = p.distance(&centroid);
        if d > best {
            best = d;
            start = i;
        }
    }
    let mut chosen = vec![start];
    let mut nearest: Vec<f64> =
        cloud.points.iter().map(|p| p.distance(&cloud.points[start])).collect();
    let mut spacing = f64::INFINITY;
    while chosen.len() < count.min(cloud.len()) {
        let mut arg = 0;
        let mut far = f64::NEG_INFINITY;
        for (i, &d) in nearest.iter().enumerate() {
            if d > far {
                far = d;
                arg = i;
            }
        }
        if far <= 0.0 {
            break;
        }
        spacing = far;
        chosen.push(arg);
        for (i, d) in nearest.iter_mut().enumerate() {
            let nd = cloud.points[i].distance(&cloud.points[arg]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    if chosen.len() < MIN_SALIENT {
        return Err(Error::TooFewPoints { stage: "salient extraction", minimum: MIN_SALIENT });
    }
    let points: Vec<Point3> = chosen.iter().map(|&i| cloud.points[i]).collect();
    let source_indices: Vec<Vec<usize>> = chosen.iter().map(|&i| vec![i]).collect();
    Ok(SalientStructure { points, source_indices, cell_size: spacing })
}

/// Uniformly scales `c2` about its box center so its diameter matches `c1`'s.
///
/// Returns the scaled cloud and the applied factor, so a scale estimated on
/// the normalized pair can be mapped back to scene units.
pub fn normalize_scale_pair(c1: &PointCloud, c2: &PointCloud) -> Result<(PointCloud, f64)> {
    let d1 = containing_box(c1)?.diameter;
    let b2 = containing_box(c2)?;
    let pre_scale = d1 / b2.diameter;
    let center = box_center(&b2);
    let points = c2
        .points
        .iter()
        .map(|p| {
            Point3::new(
                center.x + (p.x - center.x) * pre_scale,
                center.y + (p.y - center.y) * pre_scale,
                center.z + (p.z - center.z) * pre_scale,
            )
        })
        .collect();
    Ok((PointCloud { points, source: c2.source.clone() }, pre_scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: &[(f64, f64, f64)]) -> PointCloud {
        PointCloud::new(points.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi)))
                .collect(),
        )
        .unwrap()
    }

    fn unit_cube_corners() -> PointCloud {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push((x, y, z));
                }
            }
        }
        cloud(&pts)
    }

    #[test]
    fn containing_box_on_fixtures() {
        let b = containing_box(&unit_cube_corners()).unwrap();
        assert_abs_diff_eq!(b.diameter, 3.0f64.sqrt(), epsilon = 1e-9);
        assert_eq!((b.min_corner.x, b.max_corner.x), (0.0, 1.0));

        let repeated = cloud(&[(2.0, 2.0, 2.0), (2.0, 2.0, 2.0)]);
        assert!(matches!(containing_box(&repeated), Err(Error::ZeroDiameter)));
    }

    #[test]
    fn containing_box_contains_every_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = random_cloud(&mut rng, 200, -3.0, 7.0);
        let b = containing_box(&c).unwrap();
        for p in &c.points {
            assert!(p.x >= b.min_corner.x && p.x <= b.max_corner.x);
            assert!(p.y >= b.min_corner.y && p.y <= b.max_corner.y);
            assert!(p.z >= b.min_corner.z && p.z <= b.max_corner.z);
        }
    }

    #[test]
    fn cube_corners_stay_their_own_centroids() {
        let s = extract_salient_points(&unit_cube_corners(), 0.4).unwrap();
        assert_eq!(s.len(), 8);
        let corners = unit_cube_corners();
        for c in &s.points {
            assert!(corners.points.iter().any(|p| p.distance(c) < 1e-12));
        }
        for seg in &s.source_indices {
            assert_eq!(seg.len(), 1);
        }
    }

    #[test]
    fn one_giant_cell_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = random_cloud(&mut rng, 1000, 0.0, 1.0);
        assert!(matches!(extract_salient_points(&c, 10.0), Err(Error::DegenerateCloud(_))));
    }

    #[test]
    fn segments_partition_the_cloud_and_centroids_are_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = random_cloud(&mut rng, 100, 0.0, 1.0);
        let s = extract_salient_points(&c, 0.25).unwrap();

        let mut seen = vec![false; c.len()];
        for (centroid, seg) in s.points.iter().zip(&s.source_indices) {
            assert!(!seg.is_empty());
            let mut mean = Point3::new(0.0, 0.0, 0.0);
            for &idx in seg {
                assert!(!seen[idx], "index {idx} in two segments");
                seen[idx] = true;
                mean.x += c.points[idx].x;
                mean.y += c.points[idx].y;
                mean.z += c.points[idx].z;
            }
            let inv = 1.0 / seg.len() as f64;
            assert_abs_diff_eq!(centroid.x, mean.x * inv, epsilon = 1e-9);
            assert_abs_diff_eq!(centroid.y, mean.y * inv, epsilon = 1e-9);
            assert_abs_diff_eq!(centroid.z, mean.z * inv, epsilon = 1e-9);
            // Uniform fixture: nothing strays past half the cell diagonal.
            for &idx in seg {
                assert!(c.points[idx].distance(centroid) <= 3.0f64.sqrt() / 2.0 * 0.25 + 1e-12);
            }
        }
        assert!(seen.iter().all(|&v| v));
    }

    #[test]
    fn extraction_is_translation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let c = random_cloud(&mut rng, 150, 0.0, 2.0);
        let shifted = PointCloud::new(c.points.iter().map(|p| Point3::new(p.x + 5.0, p.y - 3.0, p.z + 0.5)).collect()).unwrap();
        let a = extract_salient_points(&c, 0.3).unwrap();
        let b = extract_salient_points(&shifted, 0.3).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_abs_diff_eq!(q.x - p.x, 5.0, epsilon = 1e-9);
            assert_abs_diff_eq!(q.y - p.y, -3.0, epsilon = 1e-9);
            assert_abs_diff_eq!(q.z - p.z, 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn auto_extraction_halves_until_enough_cells() {
        // A tight cluster plus one far point: at diameter/2 nearly everything
        // shares one cell, so the cell must shrink until 4 appear.
        let c = cloud(&[
            (0.0, 0.0, 0.0),
            (0.05, 0.0, 0.0),
            (0.0, 0.07, 0.0),
            (0.11, 0.11, 0.0),
            (1.0, 1.0, 1.0),
        ]);
        let s = extract_salient_auto(&c, 2.0).unwrap();
        assert!(s.len() >= MIN_SALIENT);
        let diameter = containing_box(&c).unwrap().diameter;
        assert!(s.cell_size < diameter / 2.0);
    }

    #[test]
    fn auto_extraction_propagates_zero_diameter() {
        let c = cloud(&[(1.0, 1.0, 1.0), (1.0, 1.0, 1.0)]);
        assert!(matches!(extract_salient_auto(&c, 20.0), Err(Error::ZeroDiameter)));
    }

    #[test]
    fn fps_commutes_with_similarity_transforms() {
        use crate::geometry::SimilarityTransform;
        use nalgebra::{Matrix3, Vector3};

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = random_cloud(&mut rng, 400, -1.0, 1.0);
        let angle = 1.1_f64;
        let (s, cs) = (angle.sin(), angle.cos());
        let rot = Matrix3::new(cs, -s, 0.0, s, cs, 0.0, 0.0, 0.0, 1.0);
        let t = SimilarityTransform::new(1.7, rot, Vector3::new(0.3, -2.0, 0.9)).unwrap();
        let mapped =
            PointCloud::new(c.points.iter().map(|p| t.apply(p)).collect()).unwrap();

        let a = extract_salient_fps(&c, 60).unwrap();
        let b = extract_salient_fps(&mapped, 60).unwrap();
        assert_eq!(a.source_indices, b.source_indices);
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!(t.apply(p).distance(q) < 1e-9);
        }
    }

    #[test]
    fn fps_covers_the_cloud_within_reported_spacing() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let c = random_cloud(&mut rng, 300, 0.0, 4.0);
        let s = extract_salient_fps(&c, 40).unwrap();
        assert_eq!(s.len(), 40);
        for p in &c.points {
            let nearest = s.points.iter().map(|q| q.distance(p)).fold(f64::INFINITY, f64::min);
            assert!(nearest <= s.cell_size + 1e-12);
        }
        let mut seen: Vec<usize> = s.source_indices.iter().map(|seg| seg[0]).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 40);
    }

    #[test]
    fn fps_requests_beyond_distinct_points_stop_early() {
        let mut pts = Vec::new();
        for i in 0..6 {
            for _ in 0..8 {
                pts.push((i as f64, 0.5 * i as f64, 0.0));
            }
        }
        let c = cloud(&pts);
        let s = extract_salient_fps(&c, 30).unwrap();
        assert_eq!(s.len(), 6);
    }

    #[test]
    fn fps_rejects_degenerate_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let c = random_cloud(&mut rng, 50, 0.0, 1.0);
        assert!(matches!(extract_salient_fps(&c, 3), Err(Error::InvalidConfig(_))));

        let tiny = cloud(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]);
        assert!(matches!(
            extract_salient_fps(&tiny, 10),
            Err(Error::TooFewPoints { minimum: MIN_SALIENT, .. })
        ));

        let dup = cloud(&[(1.0, 1.0, 1.0); 8]);
        assert!(matches!(extract_salient_fps(&dup, 8), Err(Error::ZeroDiameter)));

        let two = cloud(&[(0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (1.0, 1.0, 1.0)]);
        assert!(matches!(
            extract_salient_fps(&two, 8),
            Err(Error::TooFewPoints { minimum: MIN_SALIENT, .. })
        ));
    }

    #[test]
    fn normalize_identical_clouds_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let c = random_cloud(&mut rng, 40, -2.0, 2.0);
        let (scaled, pre) = normalize_scale_pair(&c, &c).unwrap();
        assert_abs_diff_eq!(pre, 1.0, epsilon = 1e-12);
        for (a, b) in scaled.points.iter().zip(&c.points) {
            assert_abs_diff_eq!(a.distance(b), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalize_doubled_cloud_gives_half_scale() {
        let c1 = unit_cube_corners();
        let c2 = PointCloud::new(c1.points.iter().map(|p| Point3::new(2.0 * p.x, 2.0 * p.y, 2.0 * p.z)).collect()).unwrap();
        let (scaled, pre) = normalize_scale_pair(&c1, &c2).unwrap();
        assert_abs_diff_eq!(pre, 0.5, epsilon = 1e-12);
        let d = containing_box(&scaled).unwrap().diameter;
        assert_abs_diff_eq!(d, 3.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn normalize_recovers_random_scale_and_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..10 {
            let c1 = random_cloud(&mut rng, 60, -1.0, 1.0);
            let k: f64 = rng.gen_range(0.2..5.0);
            let c2 = PointCloud::new(c1.points.iter().map(|p| Point3::new(k * p.x, k * p.y, k * p.z)).collect()).unwrap();
            let (scaled, pre) = normalize_scale_pair(&c1, &c2).unwrap();
            assert_abs_diff_eq!(pre, 1.0 / k, epsilon = 1e-9);
            let (_, second) = normalize_scale_pair(&c1, &scaled).unwrap();
            assert_abs_diff_eq!(second, 1.0, epsilon = 1e-9);
        }
    }
}
