//! Embodied depth: dense depth priors derived from a calibrated camera and a
//! semantic segmentation, per-object depth descriptions, and the evaluation
//! metrics used to score depth maps.
//!
//! The pipeline runs in five stages (see [`scene`]): ground-plane surface
//! depth, road depth, ground depth, ground depth extended onto vertical
//! objects, and a dense inpainted scene depth with sky flagged.

pub mod camera;
pub mod config;
pub mod depth;
pub mod inpaint;
pub mod kitti;
pub mod language;
pub mod metrics;
pub mod scene;
pub mod segmentation;
pub mod synthetic;

pub use camera::{CameraRig, DepthMode, Extrinsics, Intrinsics};
pub use depth::{DepthMap, Sample};
pub use scene::{run_pipeline, EmbodiedDepthBundle, PipelineOptions, Stage};
pub use segmentation::{Category, ClassTable, InstanceMap, Mask, SegmentationMap};
