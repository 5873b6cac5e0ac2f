//! Camera calibration and lidar-to-pixel projection.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};

use crate::geometry::{orthonormality_error, RigidTransform};

/// Rectification blocks are accepted within this orthonormality tolerance.
pub const RECT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub const KITTI: ImageSize = ImageSize {
        width: 1242,
        height: 375,
    };

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// A projected lidar point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
    /// Depth along the rectified camera's optical axis, meters.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub projection: Matrix3x4<f64>,
    /// Rectifying rotation padded to 4×4.
    pub rect: Matrix4<f64>,
    pub lidar_to_cam: RigidTransform,
}

impl CalibrationSet {
    pub fn new(
        projection: Matrix3x4<f64>,
        rect_rotation: Matrix3<f64>,
        lidar_to_cam: RigidTransform,
    ) -> Result<Self, String> {
        if projection[(0, 0)] == 0.0 || projection[(1, 1)] == 0.0 {
            return Err("projection matrix has a zero focal term".into());
        }
        if !projection.iter().all(|v| v.is_finite()) {
            return Err("projection matrix has non-finite entries".into());
        }
        let deviation = orthonormality_error(&rect_rotation);
        if deviation > RECT_TOLERANCE {
            return Err(format!("rectification rotation deviates by {deviation:.3e}"));
        }
        let mut rect = Matrix4::identity();
        rect.fixed_view_mut::<3, 3>(0, 0).copy_from(&rect_rotation);
        Ok(Self {
            projection,
            rect,
            lidar_to_cam,
        })
    }

    /// Simple pinhole rig: camera looks down lidar +x with image x = -lidar y
    /// and image y = -lidar z; no rectification.
    pub fn pinhole(focal: f64, cx: f64, cy: f64) -> Self {
        let projection = Matrix3x4::new(
            focal, 0.0, cx, 0.0, //
            0.0, focal, cy, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        );
        let axes = Matrix3::new(
            0.0, -1.0, 0.0, //
            0.0, 0.0, -1.0, //
            1.0, 0.0, 0.0,
        );
        let lidar_to_cam = RigidTransform::new(axes, Vector3::zeros(), 1e-12).expect("axis swap");
        Self::new(projection, Matrix3::identity(), lidar_to_cam).expect("valid pinhole")
    }

    pub fn rect_rotation(&self) -> Matrix3<f64> {
        self.rect.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Rectified camera-frame coordinates of a lidar point.
    pub fn to_camera(&self, p: [f64; 3]) -> Vector3<f64> {
        let cam = self.lidar_to_cam.apply(&Vector3::from(p));
        let rect = self.rect * Vector4::new(cam.x, cam.y, cam.z, 1.0);
        Vector3::new(rect.x, rect.y, rect.z)
    }

    /// Projects a lidar point; `None` when it lies behind the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<Pixel> {
        let cam = self.to_camera(p);
        if cam.z <= 0.0 {
            return None;
        }
        let h = self.projection * Vector4::new(cam.x, cam.y, cam.z, 1.0);
        if h.z <= 0.0 {
            return None;
        }
        Some(Pixel {
            u: h.x / h.z,
            v: h.y / h.z,
            depth: cam.z,
        })
    }
}
