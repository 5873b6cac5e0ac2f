//! Rigid-body transforms in SE(3).
//!
//! Stored as a rotation matrix plus translation because pose and calibration
//! files are row-major 3×4 matrices.

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::GeometryError;

/// Orthonormality tolerance for in-memory transforms.
pub const RIGID_TOLERANCE: f64 = 1e-6;

/// A rotation followed by a translation: `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, checking that `rotation` is a proper rotation
    /// within `tolerance` (max abs deviation of RᵀR from I, and of det from 1).
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        tolerance: f64,
    ) -> Result<Self, GeometryError> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let deviation = orthonormality_error(&rotation);
        if deviation > tolerance {
            return Err(GeometryError::NonOrthonormal { deviation });
        }
        Ok(Self { rotation, translation })
    }

    /// Like [`RigidTransform::new`] but snaps the rotation to the nearest
    /// proper rotation after the tolerance check. Used for file inputs, which
    /// are typically printed with ~7 significant digits. Rotations already
    /// orthonormal to 1e-12 are kept as is, so full-precision files round-trip.
    pub fn new_orthonormalized(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        tolerance: f64,
    ) -> Result<Self, GeometryError> {
        let checked = Self::new(rotation, translation, tolerance)?;
        if orthonormality_error(&checked.rotation) <= 1e-12 {
            return Ok(checked);
        }
        let svd = checked.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut snapped = u * v_t;
        if snapped.determinant() < 0.0 {
            // tolerance check already guarantees det ≈ +1; guard anyway
            let mut u = u;
            u.column_mut(2).neg_mut();
            snapped = u * v_t;
        }
        Ok(Self {
            rotation: snapped,
            translation,
        })
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Rotation about `axis` by `angle` radians, zero translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let rotation = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self {
            rotation: *rotation.matrix(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::z(), angle)
    }

    pub fn with_translation(mut self, translation: Vector3<f64>) -> Self {
        self.translation = translation;
        self
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_array(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.apply(&Vector3::from(p));
        [q.x, q.y, q.z]
    }

    /// `self ∘ other`: applying the result equals applying `other`, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// The 12 parameters in row-major 3×4 order.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn from_row_major(values: &[f64; 12], tolerance: f64) -> Result<Self, GeometryError> {
        let (rotation, translation) = split_row_major(values);
        Self::new(rotation, translation, tolerance)
    }

    /// Largest absolute difference over the 12 parameters.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        self.to_row_major()
            .iter()
            .zip(other.to_row_major().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn split_row_major(v: &[f64; 12]) -> (Matrix3<f64>, Vector3<f64>) {
    let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
    let translation = Vector3::new(v[3], v[7], v[11]);
    (rotation, translation)
}

/// Max of `|RᵀR − I|` entries and `|det R − 1|`.
pub fn orthonormality_error(rotation: &Matrix3<f64>) -> f64 {
    let gram = rotation.transpose() * rotation - Matrix3::identity();
    let gram_err = gram.iter().map(|v| v.abs()).fold(0.0, f64::max);
    gram_err.max((rotation.determinant() - 1.0).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn assert_close(a: [f64; 3], b: [f64; 3], tol: f64) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn identity_composition() {
        let id = RigidTransform::identity();
        assert_eq!(id.compose(&id), id);
    }

    #[test]
    fn rz90_twice_is_rz180() {
        let rz90 = RigidTransform::rot_z(FRAC_PI_2);
        // hand-multiplied Rz(90)·Rz(90) = diag(-1, -1, 1)
        let expected = RigidTransform::new(
            Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0),
            Vector3::zeros(),
            1e-12,
        )
        .unwrap();
        assert!(rz90.compose(&rz90).max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn apply_examples() {
        let id = RigidTransform::identity();
        assert_eq!(id.apply_array([1.0, 2.0, 3.0]), [1.0, 2.0, 3.0]);
        let up = RigidTransform::from_translation(0.0, 0.0, 1.0);
        assert_eq!(up.apply_array([1.0, 0.0, 0.0]), [1.0, 0.0, 1.0]);
        // Rz(90) has columns (0,1,0), (-1,0,0), (0,0,1): x ↦ y
        assert_close(
            RigidTransform::rot_z(FRAC_PI_2).apply_array([1.0, 0.0, 0.0]),
            [0.0, 1.0, 0.0],
            1e-9,
        );
    }

    #[test]
    fn rejects_non_rotation() {
        let scaled = Matrix3::identity() * 1.01;
        assert!(matches!(
            RigidTransform::new(scaled, Vector3::zeros(), RIGID_TOLERANCE),
            Err(GeometryError::NonOrthonormal { .. })
        ));
        let reflection = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(RigidTransform::new(reflection, Vector3::zeros(), RIGID_TOLERANCE).is_err());
    }

    #[test]
    fn orthonormalize_snaps_rounded_rotation() {
        let r = RigidTransform::rot_z(0.3);
        let rounded: Vec<f64> = r
            .to_row_major()
            .iter()
            .map(|v| (v * 1e6).round() / 1e6)
            .collect();
        let (rot, tr) = split_row_major(rounded.as_slice().try_into().unwrap());
        let snapped = RigidTransform::new_orthonormalized(rot, tr, 1e-4).unwrap();
        assert!(orthonormality_error(snapped.rotation()) < 1e-12);
        assert!(snapped.max_abs_diff(&r) < 1e-5);
    }

    pub(crate) fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
            -3.2..3.2f64,
            (-50.0..50.0f64, -50.0..50.0f64, -10.0..10.0f64),
        )
            .prop_filter("non-degenerate axis", |((x, y, z), _, _)| x * x + y * y + z * z > 1e-3)
            .prop_map(|((x, y, z), angle, (tx, ty, tz))| {
                RigidTransform::from_axis_angle(Vector3::new(x, y, z), angle)
                    .with_translation(Vector3::new(tx, ty, tz))
            })
    }

    proptest! {
        #[test]
        fn inverse_round_trip(t in arb_transform(), p in prop::array::uniform3(-100.0..100.0f64)) {
            let back = t.inverse().apply_array(t.apply_array(p));
            for k in 0..3 {
                prop_assert!((back[k] - p[k]).abs() <= 1e-6);
            }
            prop_assert!(t.compose(&t.inverse()).max_abs_diff(&RigidTransform::identity()) <= 1e-6);
        }

        #[test]
        fn compose_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(left.max_abs_diff(&right) <= 1e-6);
        }

        #[test]
        fn compose_applies_right_first(a in arb_transform(), b in arb_transform(),
                                       p in prop::array::uniform3(-10.0..10.0f64)) {
            let direct = a.apply_array(b.apply_array(p));
            let composed = a.compose(&b).apply_array(p);
            for k in 0..3 {
                prop_assert!((direct[k] - composed[k]).abs() <= 1e-9);
            }
        }
    }
}
