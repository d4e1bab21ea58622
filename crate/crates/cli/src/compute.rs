use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use embodied_depth::camera::{CameraRig, DepthMode};
use embodied_depth::config::CameraConfig;
use embodied_depth::kitti::{load_cam_to_cam, KITTI_CAMERA_HEIGHT_M};
use embodied_depth::scene::{run_pipeline, PipelineOptions, Stage};
use embodied_depth::segmentation::{load_labels, ClassTable};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::files::{by_stem, class_table};
use crate::{usage, ComputeArgs, Dataset, Global, OutputFormat};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Inputs {
    pub dataset: Dataset,
    pub camera: Option<PathBuf>,
    pub calib: Option<PathBuf>,
    pub camera_height_m: Option<f64>,
    pub classes: Option<PathBuf>,
    pub seg_dir: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Options {
    pub stages: Vec<Stage>,
    /// Overrides the camera's own mode when set.
    pub depth_mode: Option<DepthMode>,
    pub inpaint_radius: usize,
    pub format: OutputFormat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameRecord {
    pub stem: String,
    /// Valid-pixel count per stage name.
    pub valid: BTreeMap<String, usize>,
    pub sky: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub inputs: Inputs,
    pub options: Options,
    pub frames: Vec<FrameRecord>,
}

fn absolute(p: &Path) -> anyhow::Result<PathBuf> {
    std::fs::canonicalize(p).map_err(|e| usage(format!("{}: {e}", p.display())))
}

fn resolve(global: &Global, args: &ComputeArgs) -> anyhow::Result<(Inputs, Options, PathBuf)> {
    let cfg = &global.config;
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| usage("missing output directory: pass --out-dir"))?;
    if let Some(path) = &args.replay {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: RunManifest = serde_json::from_str(&text).context("invalid run manifest")?;
        return Ok((m.inputs, m.options, out_dir));
    }
    let dataset = args.dataset.or(cfg.dataset).unwrap_or(Dataset::Generic);
    let seg_dir = args
        .seg_dir
        .clone()
        .or_else(|| cfg.seg_dir.clone())
        .ok_or_else(|| usage("missing segmentation directory: pass --seg-dir"))?;
    let (camera, calib) = match dataset {
        Dataset::Generic => {
            let camera = args.camera.clone().or_else(|| cfg.camera.clone()).ok_or_else(|| {
                usage("missing camera config: pass --camera or set `camera` in the run config")
            })?;
            (Some(absolute(&camera)?), None)
        }
        Dataset::Kitti => {
            let calib = args
                .calib
                .clone()
                .or_else(|| cfg.calib.clone())
                .ok_or_else(|| usage("--dataset kitti needs --calib <calib_cam_to_cam.txt>"))?;
            (None, Some(absolute(&calib)?))
        }
    };
    let classes = args.classes.clone().or_else(|| cfg.classes.clone());
    let stage_names = args.stages.clone().or_else(|| cfg.stages.clone());
    let stages = match stage_names {
        None => Stage::ALL.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| Stage::parse(n.trim()).ok_or_else(|| usage(format!("unknown stage {n:?}"))))
            .collect::<anyhow::Result<_>>()?,
    };
    let inputs = Inputs {
        dataset,
        camera,
        calib,
        camera_height_m: (dataset == Dataset::Kitti)
            .then(|| args.camera_height.unwrap_or(KITTI_CAMERA_HEIGHT_M)),
        classes: classes.as_deref().map(absolute).transpose()?,
        seg_dir: absolute(&seg_dir)?,
    };
    let options = Options {
        stages,
        depth_mode: args.depth_mode.map(Into::into).or(cfg.depth_mode),
        inpaint_radius: args
            .radius
            .or(cfg.inpaint_radius)
            .unwrap_or(PipelineOptions::default().inpaint_radius),
        format: global.format,
    };
    Ok((inputs, options, out_dir))
}

/// Builds the rig for a frame of the given size.
enum RigSource {
    Config(CameraConfig),
    Kitti { calib: embodied_depth::kitti::RectifiedCalib, height_m: f64 },
}

impl RigSource {
    fn rig(&self, w: usize, h: usize, mode: Option<DepthMode>) -> anyhow::Result<CameraRig> {
        let mut rig = match self {
            RigSource::Config(c) => c.to_rig(w, h)?,
            RigSource::Kitti { calib, height_m } => {
                let mut rig = calib.rig(*height_m)?;
                (rig.width_px, rig.height_px) = (w, h);
                rig
            }
        };
        if let Some(m) = mode {
            rig = rig.with_depth_mode(m);
        }
        Ok(rig)
    }
}

fn process(
    stem: &str,
    seg_path: &Path,
    source: &RigSource,
    table: &ClassTable,
    options: &Options,
    out_dir: &Path,
) -> anyhow::Result<FrameRecord> {
    let bytes = std::fs::read(seg_path).with_context(|| format!("cannot read {}", seg_path.display()))?;
    let seg = load_labels(&bytes, table)?;
    let (w, h) = seg.dims();
    let rig = source.rig(w, h, options.depth_mode)?;
    let bundle = run_pipeline(&rig, &seg, table, &PipelineOptions { inpaint_radius: options.inpaint_radius })?;
    let mut valid = BTreeMap::new();
    for &stage in &options.stages {
        let map = bundle.stage(stage);
        let dir = out_dir.join(stage.name());
        if options.format.png() {
            map.write_png16(&dir.join(format!("{stem}.png")))?;
        }
        if options.format.f32() {
            map.write_f32(&dir.join(format!("{stem}.f32")))?;
        }
        valid.insert(stage.name().to_string(), map.valid_count());
    }
    Ok(FrameRecord {
        stem: stem.to_string(),
        valid,
        sky: bundle.scene.sky_count(),
        error: None,
    })
}

pub fn run(global: &Global, args: ComputeArgs) -> anyhow::Result<bool> {
    let (inputs, options, out_dir) = resolve(global, &args)?;
    let table = class_table(inputs.classes.as_deref())?;
    let source = match (&inputs.camera, &inputs.calib) {
        (Some(cam), _) => RigSource::Config(
            CameraConfig::load(cam).with_context(|| format!("camera config {}", cam.display()))?,
        ),
        (None, Some(calib)) => RigSource::Kitti {
            calib: load_cam_to_cam(calib, 2)?,
            height_m: inputs.camera_height_m.unwrap_or(KITTI_CAMERA_HEIGHT_M),
        },
        (None, None) => return Err(usage("no camera source recorded")),
    };
    let frames = by_stem(&inputs.seg_dir, &["png"])?;
    if frames.is_empty() {
        bail!("no segmentation PNGs in {}", inputs.seg_dir.display());
    }
    for stage in &options.stages {
        std::fs::create_dir_all(out_dir.join(stage.name()))?;
    }
    let results: Vec<(String, anyhow::Result<FrameRecord>)> = frames
        .par_iter()
        .map(|(stem, path)| (stem.clone(), process(stem, path, &source, &table, &options, &out_dir)))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut failures = 0;
    for (stem, result) in results {
        match result {
            Ok(r) => records.push(r),
            Err(e) => {
                if global.strict {
                    return Err(e.context(format!("frame {stem}")));
                }
                eprintln!("frame {stem}: {e:#}");
                failures += 1;
                records.push(FrameRecord {
                    stem,
                    valid: BTreeMap::new(),
                    sky: 0,
                    error: Some(format!("{e:#}")),
                });
            }
        }
    }
    let manifest = RunManifest {
        inputs,
        options,
        frames: records,
    };
    std::fs::write(out_dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)? + "\n")?;
    eprintln!(
        "computed {} frame(s), {failures} failed; manifest at {}",
        manifest.frames.len() - failures,
        out_dir.join(MANIFEST_NAME).display()
    );
    Ok(failures == 0)
}
