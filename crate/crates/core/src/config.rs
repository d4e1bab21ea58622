//! Camera configuration document.
//!
//! ```toml
//! fx = 721.5377
//! fy = 721.5377
//! ox = 609.5593
//! oy = 172.854
//! height_m = 1.65
//! rotation = [1, 0, 0, 0, 1, 0, 0, 0, 1]   # row-major, optional
//! translation = [0, 0, 0]                  # optional
//! depth_mode = "euclidean"                 # or "z_depth"
//! max_range_m = 200.0
//! ```
//!
//! Image size comes from the segmentation map the rig is paired with.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraError, CameraRig, DepthMode, Extrinsics, Intrinsics, DEFAULT_MAX_RANGE_M};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed camera config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

fn identity() -> [f64; 9] {
    IDENTITY
}

fn default_range() -> f64 {
    DEFAULT_MAX_RANGE_M
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub ox: f64,
    pub oy: f64,
    pub height_m: f64,
    #[serde(default = "identity")]
    pub rotation: [f64; 9],
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default)]
    pub depth_mode: DepthMode,
    #[serde(default = "default_range")]
    pub max_range_m: f64,
}

impl CameraConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plain numeric document")
    }

    pub fn from_rig(rig: &CameraRig) -> Self {
        let r = rig.extrinsics.rotation();
        let t = rig.extrinsics.translation();
        let mut rotation = [0.0; 9];
        for (i, slot) in rotation.iter_mut().enumerate() {
            *slot = r[(i / 3, i % 3)];
        }
        Self {
            fx: rig.intrinsics.fx,
            fy: rig.intrinsics.fy,
            ox: rig.intrinsics.ox,
            oy: rig.intrinsics.oy,
            height_m: rig.height_m,
            rotation,
            translation: [t.x, t.y, t.z],
            depth_mode: rig.depth_mode,
            max_range_m: rig.max_range_m,
        }
    }

    pub fn to_rig(&self, width_px: usize, height_px: usize) -> Result<CameraRig, ConfigError> {
        let rig = CameraRig::new(
            Intrinsics::new(self.fx, self.fy, self.ox, self.oy)?,
            Extrinsics::from_arrays(self.rotation, self.translation)?,
            self.height_m,
            width_px,
            height_px,
        )?
        .with_depth_mode(self.depth_mode)
        .with_max_range(self.max_range_m)?;
        Ok(rig)
    }
}
