//! Registration accuracy metrics against a known ground-truth transform.

use serde::Serialize;

use crate::geometry::SimilarityTransform;

/// Per-run accuracy record.
///
/// `tm` is the Frobenius norm of the difference of the two 4×4 homogeneous
/// matrices; `log_tm` is its natural log, `None` when the match is exact
/// (serialized as null in JSON, "-inf" in CSV).
#[derive(Debug, Clone, Serialize)]
pub struct RegistrationReport {
    pub method: String,
    pub tm: f64,
    pub log_tm: Option<f64>,
    pub r_err_deg: f64,
    pub t_err: f64,
    pub s_err: f64,
    pub runtime_seconds: f64,
    pub converged: bool,
}

/// Compares an estimated transform against ground truth.
pub fn transform_error(est: &SimilarityTransform, gt: &SimilarityTransform) -> (f64, Option<f64>, f64, f64, f64) {
    let diff = est.to_homogeneous() - gt.to_homogeneous();
    let tm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    let log_tm = (tm > 0.0).then(|| tm.ln());
    let cos_angle = ((gt.rotation().transpose() * est.rotation()).trace() - 1.0) / 2.0;
    let r_err_deg = cos_angle.clamp(-1.0, 1.0).acos().to_degrees();
    let t_err = (est.translation() - gt.translation()).norm();
    let s_err = (est.scale() - gt.scale()).abs();
    (tm, log_tm, r_err_deg, t_err, s_err)
}

impl RegistrationReport {
    pub fn new(
        method: impl Into<String>,
        est: &SimilarityTransform,
        gt: &SimilarityTransform,
        runtime_seconds: f64,
        converged: bool,
    ) -> Self {
        let (tm, log_tm, r_err_deg, t_err, s_err) = transform_error(est, gt);
        Self {
            method: method.into(),
            tm,
            log_tm,
            r_err_deg,
            t_err,
            s_err,
            runtime_seconds,
            converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::random_similarity;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix3, Vector3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_transforms_score_zero_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_similarity(&mut rng, 0.5..2.0, 1.0);
        let (tm, log_tm, r, te, se) = transform_error(&t, &t);
        assert_eq!(tm, 0.0);
        assert!(log_tm.is_none());
        assert_eq!(r, 0.0);
        assert_eq!(te, 0.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn unit_translation_offset_scores_tm_one() {
        let gt = SimilarityTransform::new(1.0, Matrix3::identity(), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let est = SimilarityTransform::identity();
        let (tm, log_tm, r, te, se) = transform_error(&est, &gt);
        assert_abs_diff_eq!(tm, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(log_tm.unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(r, 0.0);
        assert_abs_diff_eq!(te, 1.0, epsilon = 1e-15);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn tm_is_symmetric_in_its_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random_similarity(&mut rng, 0.5..2.0, 2.0);
            let b = random_similarity(&mut rng, 0.5..2.0, 2.0);
            let (tm_ab, ..) = transform_error(&a, &b);
            let (tm_ba, ..) = transform_error(&b, &a);
            assert_eq!(tm_ab, tm_ba);
        }
    }

    #[test]
    fn rotation_error_matches_the_planted_angle() {
        for deg in [5.0f64, 30.0, 90.0, 179.0] {
            let angle = deg.to_radians();
            let r = Matrix3::new(
                angle.cos(), -angle.sin(), 0.0,
                angle.sin(), angle.cos(), 0.0,
                0.0, 0.0, 1.0,
            );
            let est = SimilarityTransform::new(1.0, r, Vector3::zeros()).unwrap();
            let (_, _, r_err, ..) = transform_error(&est, &SimilarityTransform::identity());
            assert_abs_diff_eq!(r_err, deg, epsilon = 1e-9);
        }
    }

    #[test]
    fn scale_error_is_absolute_difference() {
        let est = SimilarityTransform::new(1.3, Matrix3::identity(), Vector3::zeros()).unwrap();
        let gt = SimilarityTransform::new(0.9, Matrix3::identity(), Vector3::zeros()).unwrap();
        let (.., s_err) = transform_error(&est, &gt);
        assert_abs_diff_eq!(s_err, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn report_serializes_null_log_tm_for_exact_match() {
        let t = SimilarityTransform::identity();
        let report = RegistrationReport::new("gctr", &t, &t, 0.0, true);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"log_tm\":null"), "{json}");
    }
}
