//! Geometry primitives, similarity-transform algebra, and the flat-index
//! convention shared by every other module.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the rotation invariants (orthonormality and determinant).
pub const ROTATION_TOL: f64 = 1e-9;

/// A finite 3D point in scene units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vec(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vec(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.to_vec() - other.to_vec()).norm()
    }
}

/// An ordered set of 3D points; the unit of registration.
///
/// Point order is stable: indices used in correspondences refer to it.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// Optional sensor label ("kinect", "sfm", ...), carried through untouched.
    pub source: Option<String>,
}

impl PointCloud {
    /// Builds a cloud, rejecting empty input and non-finite coordinates.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::DegenerateCloud("cloud must contain at least one point".into()));
        }
        if let Some(k) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::DegenerateCloud(format!("point {k} has a non-finite coordinate")));
        }
        Ok(Self { points, source: None })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Similarity transform `p' = s·R·p + t` with `s > 0` and `R` a proper rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    scale: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl SimilarityTransform {
    /// Validates `s > 0`, `RᵀR = I` and `det R = +1` (both within 1e-9).
    pub fn new(scale: f64, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidTransform(format!("scale must be positive and finite, got {scale}")));
        }
        let gram = rotation.transpose() * rotation;
        let max_dev = (gram - Matrix3::identity()).abs().max();
        if max_dev > ROTATION_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {max_dev:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidTransform(format!("rotation determinant is {det}, expected +1")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("translation has a non-finite component".into()));
        }
        Ok(Self { scale, rotation, translation })
    }

    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Applies `p' = s·R·p + t` to a single point.
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vec(self.scale * (self.rotation * p.to_vec()) + self.translation)
    }

    /// Analytic inverse: `s' = 1/s`, `R' = Rᵀ`, `t' = -(1/s)·Rᵀ·t`.
    pub fn inverse(&self) -> Self {
        let rot_t = self.rotation.transpose();
        Self {
            scale: 1.0 / self.scale,
            rotation: rot_t,
            translation: -(1.0 / self.scale) * (rot_t * self.translation),
        }
    }

    /// Composition `self ∘ first`: applying the result equals applying
    /// `first`, then `self`. Rule: `s = s₂s₁`, `R = R₂R₁`, `t = s₂R₂t₁ + t₂`.
    pub fn compose(&self, first: &Self) -> Self {
        Self {
            scale: self.scale * first.scale,
            rotation: self.rotation * first.rotation,
            translation: self.scale * (self.rotation * first.translation) + self.translation,
        }
    }

    /// The 4×4 homogeneous form `[[s·R, t], [0, 1]]`.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(self.scale * self.rotation));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation angle of `R` in degrees (geodesic distance from identity).
    pub fn rotation_angle_deg(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }
}

/// Applies a similarity transform to every point of a cloud, preserving
/// length and order.
pub fn apply_transform(t: &SimilarityTransform, c: &PointCloud) -> PointCloud {
    PointCloud {
        points: c.points.iter().map(|p| t.apply(p)).collect(),
        source: c.source.clone(),
    }
}

/// Flattens a pair index `(i, i')` into `i + i'·n1`, the column-major
/// convention used by every tensor in this crate.
///
/// Panics if `i >= n1`; the column index is unbounded here and checked
/// against `n2` by [`unflatten`].
pub fn flat_index(i: usize, i_prime: usize, n1: usize) -> usize {
    assert!(i < n1, "row index {i} out of range for n1 = {n1}");
    i + i_prime * n1
}

/// Inverse of [`flat_index`]: recovers `(i, i')` from a flat index.
///
/// Panics if the flat index is out of range for an `n1 × n2` problem.
pub fn unflatten(flat: usize, n1: usize, n2: usize) -> (usize, usize) {
    assert!(flat < n1 * n2, "flat index {flat} out of range for {n1}x{n2}");
    (flat % n1, flat / n1)
}

impl Serialize for SimilarityTransform {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TransformRecord::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SimilarityTransform {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let record = TransformRecord::deserialize(deserializer)?;
        SimilarityTransform::try_from(&record).map_err(serde::de::Error::custom)
    }
}

/// Serde-facing form of a transform: scale, row-major rotation, translation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformRecord {
    pub s: f64,
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl From<&SimilarityTransform> for TransformRecord {
    fn from(t: &SimilarityTransform) -> Self {
        let mut r = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                r[row * 3 + col] = t.rotation[(row, col)];
            }
        }
        Self { s: t.scale, r, t: [t.translation.x, t.translation.y, t.translation.z] }
    }
}

impl TryFrom<&TransformRecord> for SimilarityTransform {
    type Error = Error;

    fn try_from(rec: &TransformRecord) -> Result<Self> {
        let rotation = Matrix3::from_row_slice(&rec.r);
        SimilarityTransform::new(rec.s, rotation, Vector3::new(rec.t[0], rec.t[1], rec.t[2]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut ChaCha8Rng) -> SimilarityTransform {
        crate::benchgen::random_similarity(rng, 0.3..3.0, 2.0)
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        let points = (0..n)
            .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        PointCloud::new(points).unwrap()
    }

    #[test]
    fn identity_transform_is_a_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = random_cloud(&mut rng, 20);
        let out = apply_transform(&SimilarityTransform::identity(), &cloud);
        assert_eq!(out, cloud);
    }

    #[test]
    fn apply_matches_direct_evaluation() {
        let t = SimilarityTransform::new(2.0, Matrix3::identity(), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let p = t.apply(&Point3::new(1.0, 1.0, 1.0));
        assert_eq!((p.x, p.y, p.z), (3.0, 2.0, 2.0));
    }

    #[test]
    fn inverse_round_trips_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let t = random_transform(&mut rng);
            let cloud = random_cloud(&mut rng, 15);
            let back = apply_transform(&t.inverse(), &apply_transform(&t, &cloud));
            for (a, b) in back.points.iter().zip(&cloud.points) {
                assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-9);
                assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-9);
                assert_abs_diff_eq!(a.z, b.z, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn flat_index_matches_fixtures() {
        assert_eq!(flat_index(0, 0, 5), 0);
        assert_eq!(flat_index(2, 3, 5), 17);
    }

    #[test]
    fn flat_index_round_trips_exhaustively() {
        // All 12 pairs of a 4x3 problem, plus the full bijection up to 32x32.
        for (n1, n2) in [(4usize, 3usize), (32, 32), (1, 7)] {
            let mut seen = vec![false; n1 * n2];
            for i in 0..n1 {
                for ip in 0..n2 {
                    let f = flat_index(i, ip, n1);
                    assert!(!seen[f], "flat index {f} hit twice");
                    seen[f] = true;
                    assert_eq!(unflatten(f, n1, n2), (i, ip));
                }
            }
            assert!(seen.iter().all(|&v| v));
        }
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn flat_index_rejects_out_of_range_row() {
        flat_index(5, 0, 5);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn unflatten_rejects_out_of_range() {
        unflatten(12, 4, 3);
    }

    #[test]
    fn compose_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_transform(&mut rng);
        let id = SimilarityTransform::identity();

        let left = id.compose(&t);
        assert_abs_diff_eq!(left.scale(), t.scale(), epsilon = 1e-12);
        assert_abs_diff_eq!((left.rotation() - t.rotation()).abs().max(), 0.0, epsilon = 1e-12);

        let round = t.compose(&t.inverse());
        assert_abs_diff_eq!(round.scale(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!((round.rotation() - Matrix3::identity()).abs().max(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(round.translation().norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn compose_equals_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t1 = random_transform(&mut rng);
        let t2 = random_transform(&mut rng);
        let cloud = random_cloud(&mut rng, 10);

        let composed = apply_transform(&t2.compose(&t1), &cloud);
        let sequential = apply_transform(&t2, &apply_transform(&t1, &cloud));
        for (a, b) in composed.points.iter().zip(&sequential.points) {
            assert_abs_diff_eq!(a.distance(b), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn homogeneous_form_agrees_with_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_transform(&mut rng);
        let m = t.to_homogeneous();
        assert_eq!(m[(3, 0)], 0.0);
        assert_eq!(m[(3, 1)], 0.0);
        assert_eq!(m[(3, 2)], 0.0);
        assert_eq!(m[(3, 3)], 1.0);

        let p = Point3::new(0.3, -0.7, 1.1);
        let h = m * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
        let direct = t.apply(&p);
        assert_abs_diff_eq!(h.x, direct.x, epsilon = 1e-9);
        assert_abs_diff_eq!(h.y, direct.y, epsilon = 1e-9);
        assert_abs_diff_eq!(h.z, direct.z, epsilon = 1e-9);
    }

    #[test]
    fn rejects_non_rotation_matrices() {
        let mut reflect = Matrix3::identity();
        reflect[(0, 0)] = -1.0;
        assert!(SimilarityTransform::new(1.0, reflect, Vector3::zeros()).is_err());
        assert!(SimilarityTransform::new(0.0, Matrix3::identity(), Vector3::zeros()).is_err());
        assert!(SimilarityTransform::new(1.0, 2.0 * Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn transform_record_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random_transform(&mut rng);
        let rec = TransformRecord::from(&t);
        let back = SimilarityTransform::try_from(&rec).unwrap();
        assert_abs_diff_eq!((back.rotation() - t.rotation()).abs().max(), 0.0, epsilon = 1e-15);
        assert_eq!(back.scale(), t.scale());
    }

    #[test]
    fn cloud_construction_validates() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![Point3::new(f64::NAN, 0.0, 0.0)]).is_err());
        assert!(PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]).is_ok());
    }
}
