//! Pinhole camera model and closed-form backprojection onto the ground plane.
//!
//! World convention: the Y axis points toward the ground and the ground is
//! the plane `y_w = h`, where `h` is the camera height. A world point maps to
//! pixels through `z_c * (u, v, 1)^T = A * (x_w, y_w, z_w, 1)^T` with
//! `A = K [R | T]`.
//!
//! Two backprojection routes exist. The general route substitutes `y_w = h`
//! into the projection and solves the resulting 3x3 linear system for
//! `(x_w, z_w, z_c)`, then maps the world point into the camera frame. The
//! fast route applies when the camera frame coincides with the world frame
//! and reads `z_c = f_y h / (v - o_y)` directly.

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{DepthMap, Sample};

/// Rows closer than this to the principal row are treated as the horizon on
/// the fast path (pixels).
pub const HORIZON_EPS_PX: f64 = 1e-6;

/// Relative singularity threshold for the general 3x3 plane solve. The
/// determinant is compared against the Hadamard bound (product of column
/// norms).
pub const SINGULAR_REL_TOL: f64 = 1e-10;

/// Default cap on valid plane-intersection range (meters).
pub const DEFAULT_MAX_RANGE_M: f64 = 200.0;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),
    #[error("invalid calibration: {0}")]
    Calibration(String),
    #[error("invalid camera rig: {0}")]
    Rig(String),
    #[error("viewing ray through ({u}, {v}) does not intersect the ground plane")]
    NoIntersection { u: f64, v: f64 },
    #[error("ground intersection for ({u}, {v}) lies behind the camera")]
    BehindCamera { u: f64, v: f64 },
    #[error("pixel ({u}, {v}) is outside the {width}x{height} image")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
}

/// Focal lengths and principal point, in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub ox: f64,
    pub oy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, ox: f64, oy: f64) -> Result<Self, CameraError> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(CameraError::Intrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(ox.is_finite() && oy.is_finite()) {
            return Err(CameraError::Intrinsics(format!(
                "principal point must be finite, got ({ox}, {oy})"
            )));
        }
        Ok(Self { fx, fy, ox, oy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.ox, //
            0.0, self.fy, self.oy, //
            0.0, 0.0, 1.0,
        )
    }
}

/// World-to-camera rigid transform: `p_c = R p_w + T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Extrinsics {
    /// Validates that `rotation` is orthonormal with determinant 1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, CameraError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(CameraError::Calibration("non-finite extrinsics".into()));
        }
        let gram = rotation.transpose() * rotation;
        let off = (gram - Matrix3::identity()).amax();
        if off > ORTHONORMAL_TOL {
            return Err(CameraError::Calibration(format!(
                "rotation is not orthonormal (max |R^T R - I| = {off:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(CameraError::Calibration(format!(
                "rotation determinant is {det}, expected 1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds the rotation from a row-major array of nine numbers.
    pub fn from_arrays(rotation: [f64; 9], translation: [f64; 3]) -> Result<Self, CameraError> {
        Self::new(
            Matrix3::from_row_slice(&rotation),
            Vector3::from_column_slice(&translation),
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// True when the camera frame is exactly the world frame.
    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center expressed in world coordinates.
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

/// How a 3D ground point is reduced to a per-pixel depth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthMode {
    /// Distance from the camera center to the point.
    #[default]
    Euclidean,
    /// Camera-frame `z` coordinate (LiDAR-projected ground-truth convention).
    ZDepth,
}

/// Calibration plus image geometry for one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
    /// Camera height above the ground plane (meters).
    pub height_m: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub depth_mode: DepthMode,
    /// Plane intersections farther than this are reported invalid.
    pub max_range_m: f64,
}

impl CameraRig {
    pub fn new(
        intrinsics: Intrinsics,
        extrinsics: Extrinsics,
        height_m: f64,
        width_px: usize,
        height_px: usize,
    ) -> Result<Self, CameraError> {
        let rig = Self {
            intrinsics,
            extrinsics,
            height_m,
            width_px,
            height_px,
            depth_mode: DepthMode::default(),
            max_range_m: DEFAULT_MAX_RANGE_M,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn with_depth_mode(mut self, mode: DepthMode) -> Self {
        self.depth_mode = mode;
        self
    }

    pub fn with_max_range(mut self, max_range_m: f64) -> Result<Self, CameraError> {
        self.max_range_m = max_range_m;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.height_m.is_finite() && self.height_m > 0.0) {
            return Err(CameraError::Rig(format!(
                "camera height must be positive, got {}",
                self.height_m
            )));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(CameraError::Rig("image dimensions must be at least 1".into()));
        }
        if !(self.max_range_m > 0.0) {
            return Err(CameraError::Rig(format!(
                "max range must be positive, got {}",
                self.max_range_m
            )));
        }
        Ok(())
    }

    pub fn projection(&self) -> ProjectionMatrix {
        projection_matrix(&self.intrinsics, &self.extrinsics)
    }

    /// Backprojects a pixel onto the ground plane, taking the fast route
    /// when the extrinsics are the identity.
    pub fn backproject(&self, u: f64, v: f64) -> Result<GroundPoint, CameraError> {
        self.check_bounds(u, v)?;
        if self.extrinsics.is_identity() {
            self.backproject_fast(u, v)
        } else {
            self.backproject_general(u, v)
        }
    }

    /// Direct solve assuming the camera frame is aligned with the ground so
    /// that the plane is `y_c = h`.
    pub fn backproject_fast(&self, u: f64, v: f64) -> Result<GroundPoint, CameraError> {
        let k = &self.intrinsics;
        let dv = v - k.oy;
        if dv <= HORIZON_EPS_PX {
            return Err(CameraError::NoIntersection { u, v });
        }
        let h = self.height_m;
        let zc = k.fy * h / dv;
        let xc = (u - k.ox) * zc / k.fx;
        let camera = Vector3::new(xc, h, zc);
        let world = self.extrinsics.rotation.transpose() * (camera - self.extrinsics.translation);
        Ok(GroundPoint {
            camera,
            world,
            u,
            v,
        })
    }

    /// Solve through the full projection matrix, valid for any extrinsics.
    ///
    /// The system is solved in normalized image coordinates, `K⁻¹ A = [R|T]`,
    /// so the singularity test depends on ray geometry alone and not on the
    /// focal length or principal point. `zc` is unchanged by the
    /// normalization.
    pub fn backproject_general(&self, u: f64, v: f64) -> Result<GroundPoint, CameraError> {
        let k = &self.intrinsics;
        let (x, y) = ((u - k.ox) / k.fx, (v - k.oy) / k.fy);
        let normalized = projection_matrix(&Intrinsics { fx: 1.0, fy: 1.0, ox: 0.0, oy: 0.0 }, &self.extrinsics);
        let sol = normalized
            .solve_world_on_plane(x, y, self.height_m)
            .map_err(|e| match e {
                CameraError::NoIntersection { .. } => CameraError::NoIntersection { u, v },
                CameraError::BehindCamera { .. } => CameraError::BehindCamera { u, v },
                other => other,
            })?;
        let world = Vector3::new(sol.xw, self.height_m, sol.zw);
        let camera = self.extrinsics.world_to_camera(&world);
        Ok(GroundPoint {
            camera,
            world,
            u,
            v,
        })
    }

    fn check_bounds(&self, u: f64, v: f64) -> Result<(), CameraError> {
        let inside = u >= 0.0 && v >= 0.0 && u < self.width_px as f64 && v < self.height_px as f64;
        if inside {
            Ok(())
        } else {
            Err(CameraError::OutOfBounds {
                u,
                v,
                width: self.width_px,
                height: self.height_px,
            })
        }
    }
}

/// The 3x4 matrix `A = K [R | T]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionMatrix(pub Matrix3x4<f64>);

/// Solution of the projection equations restricted to the ground plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneSolution {
    pub xw: f64,
    pub zw: f64,
    pub zc: f64,
}

pub fn projection_matrix(intr: &Intrinsics, extr: &Extrinsics) -> ProjectionMatrix {
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&extr.rotation);
    rt.set_column(3, &extr.translation);
    ProjectionMatrix(intr.matrix() * rt)
}

impl ProjectionMatrix {
    #[inline]
    pub fn a(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    /// Projects a world point to pixel coordinates; `None` when the point is
    /// on or behind the camera plane.
    pub fn project(&self, world: &Vector3<f64>) -> Option<(f64, f64)> {
        let p = self.0 * world.push(1.0);
        if p.z <= 0.0 {
            return None;
        }
        Some((p.x / p.z, p.y / p.z))
    }

    /// Solves
    ///
    /// ```text
    /// zc u = a11 xw + a12 h + a13 zw + a14
    /// zc v = a21 xw + a22 h + a23 zw + a24
    /// zc   = a31 xw + a32 h + a33 zw + a34
    /// ```
    ///
    /// for `(xw, zw, zc)` by Cramer's rule.
    pub fn solve_world_on_plane(&self, u: f64, v: f64, h: f64) -> Result<PlaneSolution, CameraError> {
        let a = |r, c| self.a(r, c);
        let m = Matrix3::new(
            a(0, 0), a(0, 2), -u, //
            a(1, 0), a(1, 2), -v, //
            a(2, 0), a(2, 2), -1.0,
        );
        let rhs = Vector3::new(
            -(a(0, 1) * h + a(0, 3)),
            -(a(1, 1) * h + a(1, 3)),
            -(a(2, 1) * h + a(2, 3)),
        );
        let det = m.determinant();
        let bound = m.column(0).norm() * m.column(1).norm() * m.column(2).norm();
        if !(det.abs() > SINGULAR_REL_TOL * bound) {
            return Err(CameraError::NoIntersection { u, v });
        }
        let solve_col = |c: usize| {
            let mut mc = m;
            mc.set_column(c, &rhs);
            mc.determinant() / det
        };
        let sol = PlaneSolution {
            xw: solve_col(0),
            zw: solve_col(1),
            zc: solve_col(2),
        };
        if !(sol.zc > 0.0) {
            return Err(CameraError::BehindCamera { u, v });
        }
        Ok(sol)
    }
}

/// A pixel's intersection with the ground plane in both frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundPoint {
    pub camera: Vector3<f64>,
    pub world: Vector3<f64>,
    pub u: f64,
    pub v: f64,
}

impl GroundPoint {
    pub fn range(&self, mode: DepthMode) -> f64 {
        ground_range(self, mode)
    }
}

pub fn ground_range(p: &GroundPoint, mode: DepthMode) -> f64 {
    match mode {
        DepthMode::Euclidean => p.camera.norm(),
        DepthMode::ZDepth => p.camera.z,
    }
}

/// Depth of every pixel under the assumption that the whole field of view
/// is ground. Pixels at or above the horizon, behind the camera or beyond
/// the range cap are invalid.
pub fn surface_depth(rig: &CameraRig) -> DepthMap {
    let (w, h) = (rig.width_px, rig.height_px);
    let mut out = DepthMap::invalid(w, h);
    let fast = rig.extrinsics.is_identity();
    let proj = rig.projection();
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64, y as f64);
            let point = if fast {
                rig.backproject_fast(u, v)
            } else {
                backproject_with(rig, &proj, u, v)
            };
            if let Ok(p) = point {
                let d = p.range(rig.depth_mode);
                if d.is_finite() && d > 0.0 && d <= rig.max_range_m {
                    out.set(x, y, Sample::Depth(d));
                }
            }
        }
    }
    out
}

fn backproject_with(
    rig: &CameraRig,
    proj: &ProjectionMatrix,
    u: f64,
    v: f64,
) -> Result<GroundPoint, CameraError> {
    let sol = proj.solve_world_on_plane(u, v, rig.height_m)?;
    let world = Vector3::new(sol.xw, rig.height_m, sol.zw);
    Ok(GroundPoint {
        camera: rig.extrinsics.world_to_camera(&world),
        world,
        u,
        v,
    })
}

/// Rotation about the camera X axis by `pitch` radians (positive tilts the
/// optical axis toward the ground).
pub fn pitch_rotation(pitch: f64) -> Matrix3<f64> {
    let (s, c) = pitch.sin_cos();
    Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, c, -s, //
        0.0, s, c,
    )
}
