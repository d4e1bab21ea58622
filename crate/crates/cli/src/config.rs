//! Run configuration document. Every key is optional; command-line flags
//! take precedence. Relative paths resolve against the document's
//! directory.

use std::path::{Path, PathBuf};

use anyhow::Context;
use embodied_depth::camera::DepthMode;
use embodied_depth::language::Aggregation;
use serde::Deserialize;

use crate::{usage, Dataset, OutputFormat};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub camera: Option<PathBuf>,
    pub classes: Option<PathBuf>,
    pub seg_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub pred_dir: Option<PathBuf>,
    pub gt_dir: Option<PathBuf>,
    pub calib: Option<PathBuf>,
    pub dataset: Option<Dataset>,
    pub stages: Option<Vec<String>>,
    pub depth_mode: Option<DepthMode>,
    pub inpaint_radius: Option<usize>,
    pub min_depth: Option<f64>,
    pub max_depth: Option<f64>,
    pub crop: Option<bool>,
    pub min_pixels: Option<usize>,
    pub aggregation: Option<Aggregation>,
    pub format: Option<OutputFormat>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read run config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("invalid run config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.camera,
            &mut cfg.classes,
            &mut cfg.seg_dir,
            &mut cfg.out_dir,
            &mut cfg.pred_dir,
            &mut cfg.gt_dir,
            &mut cfg.calib,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        let inputs = [&cfg.camera, &cfg.classes, &cfg.seg_dir, &cfg.pred_dir, &cfg.gt_dir, &cfg.calib];
        for p in inputs.into_iter().flatten() {
            if !p.exists() {
                return Err(usage(format!("run config references missing path {}", p.display())));
            }
        }
        Ok(cfg)
    }
}
