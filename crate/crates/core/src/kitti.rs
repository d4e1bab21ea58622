//! KITTI raw-data calibration adapter.
//!
//! Reads the rectified projection `P_rect_0N` and size `S_rect_0N` from a
//! `calib_cam_to_cam.txt` file. The rectified camera frame is treated as
//! level with the road at a fixed mounting height.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::camera::{CameraError, CameraRig, DepthMode, Extrinsics, Intrinsics};

/// Mounting height of the KITTI color cameras above the road.
pub const KITTI_CAMERA_HEIGHT_M: f64 = 1.65;

#[derive(Debug, Error)]
pub enum KittiError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("missing key {0}")]
    MissingKey(String),
    #[error("key {key}: expected {expected} numbers")]
    BadValue { key: String, expected: usize },
    #[error(transparent)]
    Camera(#[from] CameraError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RectifiedCalib {
    pub fx: f64,
    pub fy: f64,
    pub ox: f64,
    pub oy: f64,
    pub width: usize,
    pub height: usize,
}

fn parse_entries(text: &str) -> HashMap<&str, Vec<f64>> {
    text.lines()
        .filter_map(|line| line.split_once(':'))
        .filter_map(|(k, v)| {
            let nums: Result<Vec<f64>, _> = v.split_whitespace().map(str::parse).collect();
            nums.ok().map(|n| (k.trim(), n))
        })
        .collect()
}

/// Parses the rectified calibration of camera `cam` (2 is the left color
/// camera).
pub fn parse_cam_to_cam(text: &str, cam: u8) -> Result<RectifiedCalib, KittiError> {
    let entries = parse_entries(text);
    let get = |key: String, n: usize| -> Result<&Vec<f64>, KittiError> {
        let v = entries.get(key.as_str()).ok_or_else(|| KittiError::MissingKey(key.clone()))?;
        if v.len() != n {
            return Err(KittiError::BadValue { key, expected: n });
        }
        Ok(v)
    };
    let p = get(format!("P_rect_{cam:02}"), 12)?;
    let s = get(format!("S_rect_{cam:02}"), 2)?;
    Ok(RectifiedCalib {
        fx: p[0],
        ox: p[2],
        fy: p[5],
        oy: p[6],
        width: s[0].round() as usize,
        height: s[1].round() as usize,
    })
}

pub fn load_cam_to_cam(path: &Path, cam: u8) -> Result<RectifiedCalib, KittiError> {
    let text = std::fs::read_to_string(path).map_err(|source| KittiError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_cam_to_cam(&text, cam)
}

impl RectifiedCalib {
    /// LiDAR ground truth is z-depth, so the rig reports z-depth.
    pub fn rig(&self, height_m: f64) -> Result<CameraRig, KittiError> {
        Ok(CameraRig::new(
            Intrinsics::new(self.fx, self.fy, self.ox, self.oy)?,
            Extrinsics::identity(),
            height_m,
            self.width,
            self.height,
        )?
        .with_depth_mode(DepthMode::ZDepth))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "calib_time: 09-Jan-2012 13:57:47
corner_dist: 9.950000e-02
S_rect_02: 1.242000e+03 3.750000e+02
R_rect_02: 9.998817e-01 1.511453e-02 -2.841595e-03 -1.511724e-02 9.998853e-01 -9.338510e-04 2.827154e-03 9.766976e-04 9.999955e-01
P_rect_02: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03
";

    #[test]
    fn parses_rectified_camera() {
        let c = parse_cam_to_cam(SAMPLE, 2).unwrap();
        assert_eq!((c.width, c.height), (1242, 375));
        assert_eq!(c.fx, 721.5377);
        assert_eq!(c.fy, 721.5377);
        assert_eq!(c.ox, 609.5593);
        assert_eq!(c.oy, 172.854);
        let rig = c.rig(KITTI_CAMERA_HEIGHT_M).unwrap();
        assert_eq!(rig.depth_mode, DepthMode::ZDepth);
    }

    #[test]
    fn missing_camera_is_reported() {
        assert!(matches!(parse_cam_to_cam(SAMPLE, 3), Err(KittiError::MissingKey(k)) if k == "P_rect_03"));
        let short = SAMPLE.replace("S_rect_02: 1.242000e+03 3.750000e+02", "S_rect_02: 1.0");
        assert!(matches!(parse_cam_to_cam(&short, 2), Err(KittiError::BadValue { .. })));
    }
}
