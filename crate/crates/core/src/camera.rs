//! Rectified stereo projection, triangulation and their Jacobians.
//!
//! The right camera sits at `+baseline` along the left camera's x axis with
//! no relative rotation, so both images share the `v` coordinate.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SivoError};
use crate::geometry::{point_jacobian_wrt_left_perturbation, Pose3};

pub type Matrix3x6 = SMatrix<f64, 3, 6>;

pub const DEFAULT_DEPTH_MIN: f64 = 0.1;
pub const DEFAULT_DISPARITY_MIN: f64 = 0.25;

/// Intrinsics of a rectified stereo pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Metres.
    pub baseline: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_depth_min")]
    pub depth_min: f64,
    #[serde(default = "default_disparity_min")]
    pub disparity_min: f64,
}

fn default_depth_min() -> f64 {
    DEFAULT_DEPTH_MIN
}

fn default_disparity_min() -> f64 {
    DEFAULT_DISPARITY_MIN
}

impl CameraRig {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, baseline: f64, width: u32, height: u32) -> Result<Self> {
        let rig = CameraRig {
            fx,
            fy,
            cx,
            cy,
            baseline,
            width,
            height,
            depth_min: DEFAULT_DEPTH_MIN,
            disparity_min: DEFAULT_DISPARITY_MIN,
        };
        rig.validate()?;
        Ok(rig)
    }

    /// KITTI odometry sequence 00 left/right grey cameras.
    pub fn kitti_00() -> Self {
        CameraRig {
            fx: 718.856,
            fy: 718.856,
            cx: 607.1928,
            cy: 185.2157,
            baseline: 0.537_165_718_864_418,
            width: 1241,
            height: 376,
            depth_min: DEFAULT_DEPTH_MIN,
            disparity_min: DEFAULT_DISPARITY_MIN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.fx, self.fy, self.baseline, self.depth_min, self.disparity_min];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(SivoError::InvalidConfig(
                "fx, fy, baseline, depth_min and disparity_min must be positive".into(),
            ));
        }
        let (w, h) = (self.width as f64, self.height as f64);
        if !(0.0..=w).contains(&self.cx) || !(0.0..=h).contains(&self.cy) {
            return Err(SivoError::InvalidConfig(
                "principal point lies outside the image".into(),
            ));
        }
        Ok(())
    }

    fn camera_point(&self, pose: &Pose3, p_w: &Vector3<f64>) -> Result<Vector3<f64>> {
        let p_c = pose.transform_point(p_w);
        if p_c.z <= self.depth_min {
            return Err(SivoError::BehindCamera {
                depth: p_c.z,
                min_depth: self.depth_min,
            });
        }
        Ok(p_c)
    }

    fn project_camera_point(&self, p_c: &Vector3<f64>) -> Vector3<f64> {
        let inv_z = 1.0 / p_c.z;
        Vector3::new(
            self.fx * p_c.x * inv_z + self.cx,
            self.fy * p_c.y * inv_z + self.cy,
            self.fx * (p_c.x - self.baseline) * inv_z + self.cx,
        )
    }

    /// `d pi / d p_c`.
    fn projection_jacobian(&self, p_c: &Vector3<f64>) -> Matrix3<f64> {
        let inv_z = 1.0 / p_c.z;
        let inv_z2 = inv_z * inv_z;
        Matrix3::new(
            self.fx * inv_z,
            0.0,
            -self.fx * p_c.x * inv_z2,
            0.0,
            self.fy * inv_z,
            -self.fy * p_c.y * inv_z2,
            self.fx * inv_z,
            0.0,
            -self.fx * (p_c.x - self.baseline) * inv_z2,
        )
    }

    /// `(u_l, v, u_r)` of the world point `p_w` seen from camera-from-world `pose`.
    pub fn project_stereo(&self, pose: &Pose3, p_w: &Vector3<f64>) -> Result<Vector3<f64>> {
        let p_c = self.camera_point(pose, p_w)?;
        Ok(self.project_camera_point(&p_c))
    }

    /// Exact inverse of [`CameraRig::project_stereo`].
    pub fn triangulate(&self, pose: &Pose3, obs: &Vector3<f64>) -> Result<Vector3<f64>> {
        let disparity = obs.x - obs.z;
        if disparity <= self.disparity_min {
            return Err(SivoError::DegenerateDisparity {
                disparity,
                min_disparity: self.disparity_min,
            });
        }
        let z = self.fx * self.baseline / disparity;
        let p_c = Vector3::new((obs.x - self.cx) * z / self.fx, (obs.y - self.cy) * z / self.fy, z);
        Ok(pose.inverse().transform_point(&p_c))
    }

    /// 3x6 Jacobian with respect to a left perturbation of the pose.
    pub fn jacobian_wrt_pose(&self, pose: &Pose3, p_w: &Vector3<f64>) -> Result<Matrix3x6> {
        let p_c = self.camera_point(pose, p_w)?;
        Ok(self.projection_jacobian(&p_c) * point_jacobian_wrt_left_perturbation(&p_c))
    }

    pub fn jacobian_wrt_point(&self, pose: &Pose3, p_w: &Vector3<f64>) -> Result<Matrix3<f64>> {
        let p_c = self.camera_point(pose, p_w)?;
        Ok(self.projection_jacobian(&p_c) * pose.rotation.matrix())
    }

    /// Prediction and pose Jacobian in one pass.
    pub fn linearize(&self, pose: &Pose3, p_w: &Vector3<f64>) -> Result<(Vector3<f64>, Matrix3x6)> {
        let p_c = self.camera_point(pose, p_w)?;
        let j = self.projection_jacobian(&p_c) * point_jacobian_wrt_left_perturbation(&p_c);
        Ok((self.project_camera_point(&p_c), j))
    }

    /// True when both image points fall inside the sensor.
    pub fn in_image(&self, obs: &Vector3<f64>) -> bool {
        let (w, h) = (self.width as f64, self.height as f64);
        (0.0..w).contains(&obs.x) && (0.0..w).contains(&obs.z) && (0.0..h).contains(&obs.y)
    }
}

/// One stereo measurement `(u_l, v, u_r)` with its pixel noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StereoObservation {
    pub pixels: Vector3<f64>,
    pub noise: Matrix3<f64>,
}

impl StereoObservation {
    pub fn new(pixels: Vector3<f64>, noise: Matrix3<f64>) -> Result<Self> {
        if pixels.x <= pixels.z {
            return Err(SivoError::DegenerateDisparity {
                disparity: pixels.x - pixels.z,
                min_disparity: 0.0,
            });
        }
        check_spd3(&noise)?;
        Ok(StereoObservation { pixels, noise })
    }

    pub fn disparity(&self) -> f64 {
        self.pixels.x - self.pixels.z
    }
}

pub(crate) fn check_spd3(m: &Matrix3<f64>) -> Result<()> {
    if (m - m.transpose()).amax() > 1e-9 || m.cholesky().is_none() {
        return Err(SivoError::NotPositiveDefinite(
            "measurement noise must be symmetric positive definite".into(),
        ));
    }
    Ok(())
}

/// Default measurement noise, one square pixel per coordinate.
pub fn default_measurement_noise() -> Matrix3<f64> {
    Matrix3::identity()
}
