//! Analytic scenes rendered by exact ray casting: a ground plane plus
//! axis-aligned boxes. Segmentation, instances and depth all come from the
//! same geometry, so the labels are perfect by construction.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraRig, DepthMode, Extrinsics, Intrinsics};
use crate::depth::{DepthMap, Sample};
use crate::segmentation::{Category, ClassTable, InstanceMap, SegmentationMap};

pub const ROAD: u16 = 7;
pub const SIDEWALK: u16 = 8;
pub const TRAFFIC_SIGN: u16 = 20;
pub const SKY: u16 = 23;
pub const PERSON: u16 = 24;
pub const RIDER: u16 = 25;
pub const CAR: u16 = 26;
pub const TRUCK: u16 = 27;
pub const BICYCLE: u16 = 33;

pub const DEFAULT_ROAD_FRACTION: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("invalid box {instance_id}: {reason}")]
    Box { instance_id: u16, reason: String },
    #[error("road fraction must lie in (0, 1], got {0}")]
    RoadFraction(f64),
    #[error("instance id 0 is reserved for background")]
    ReservedInstance,
}

/// Axis-aligned world box. Its bottom face sits `elevation_m` above the
/// ground plane (zero for grounded objects).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center_x: f64,
    pub center_z: f64,
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    #[serde(default)]
    pub elevation_m: f64,
    pub label: u16,
    pub instance_id: u16,
}

impl BoxSpec {
    pub fn grounded(
        center_x: f64,
        center_z: f64,
        (width, depth, height): (f64, f64, f64),
        label: u16,
        instance_id: u16,
    ) -> Self {
        Self {
            center_x,
            center_z,
            width,
            depth,
            height,
            elevation_m: 0.0,
            label,
            instance_id,
        }
    }

    pub fn elevated(mut self, elevation_m: f64) -> Self {
        self.elevation_m = elevation_m;
        self
    }

    fn validate(&self) -> Result<(), SyntheticError> {
        let err = |reason: &str| SyntheticError::Box {
            instance_id: self.instance_id,
            reason: reason.to_string(),
        };
        if self.instance_id == 0 {
            return Err(SyntheticError::ReservedInstance);
        }
        let extents = [self.width, self.depth, self.height];
        if !extents.iter().all(|e| e.is_finite() && *e > 0.0) {
            return Err(err("extents must be positive"));
        }
        if !(self.elevation_m.is_finite() && self.elevation_m >= 0.0) {
            return Err(err("elevation must be non-negative"));
        }
        Ok(())
    }

    /// `(min, max)` corners; world Y points down, so the top has the
    /// smaller Y.
    pub fn bounds(&self, ground_y: f64) -> (Vector3<f64>, Vector3<f64>) {
        let bottom = ground_y - self.elevation_m;
        (
            Vector3::new(
                self.center_x - self.width / 2.0,
                bottom - self.height,
                self.center_z - self.depth / 2.0,
            ),
            Vector3::new(self.center_x + self.width / 2.0, bottom, self.center_z + self.depth / 2.0),
        )
    }

    /// Z of the face nearest the camera.
    pub fn front_z(&self) -> f64 {
        self.center_z - self.depth / 2.0
    }
}

/// What a pixel's ray hits first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Hit {
    Sky,
    Ground { t: f64, point: Vector3<f64> },
    Box { t: f64, point: Vector3<f64>, index: usize },
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub rig: CameraRig,
    pub boxes: Vec<BoxSpec>,
    pub seg: SegmentationMap,
    pub instances: InstanceMap,
    /// Exact depth in `rig.depth_mode`; sky where nothing is hit, invalid
    /// past the range cap.
    pub gt: DepthMap,
}

impl SyntheticScene {
    pub fn table(&self) -> ClassTable {
        ClassTable::cityscapes()
    }
}

/// Per-pixel ray caster for a rig and a set of boxes.
pub struct RayCaster<'a> {
    rig: &'a CameraRig,
    boxes: &'a [BoxSpec],
    center: Vector3<f64>,
    k_inv: nalgebra::Matrix3<f64>,
}

impl<'a> RayCaster<'a> {
    pub fn new(rig: &'a CameraRig, boxes: &'a [BoxSpec]) -> Self {
        let k_inv = rig
            .intrinsics
            .matrix()
            .try_inverse()
            .expect("validated intrinsics are invertible");
        Self {
            rig,
            boxes,
            center: rig.extrinsics.camera_center(),
            k_inv,
        }
    }

    /// Camera-frame ray with unit `z`, so the ray parameter equals z-depth.
    fn camera_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        self.k_inv * Vector3::new(u, v, 1.0)
    }

    pub fn cast(&self, u: f64, v: f64) -> Hit {
        let cam = self.camera_ray(u, v);
        let dir = self.rig.extrinsics.rotation().transpose() * cam;
        let mut best = Hit::Sky;
        let mut best_t = f64::INFINITY;
        let h = self.rig.height_m;
        if dir.y > 0.0 {
            let t = (h - self.center.y) / dir.y;
            if t > 0.0 {
                best_t = t;
                best = Hit::Ground {
                    t,
                    point: self.center + dir * t,
                };
            }
        }
        for (index, b) in self.boxes.iter().enumerate() {
            let (lo, hi) = b.bounds(h);
            if let Some(t) = slab_hit(&self.center, &dir, &lo, &hi) {
                if t < best_t {
                    best_t = t;
                    best = Hit::Box {
                        t,
                        point: self.center + dir * t,
                        index,
                    };
                }
            }
        }
        best
    }

    /// Depth of a hit at ray parameter `t` in the rig's mode.
    pub fn range(&self, u: f64, v: f64, t: f64) -> f64 {
        match self.rig.depth_mode {
            DepthMode::ZDepth => t,
            DepthMode::Euclidean => t * self.camera_ray(u, v).norm(),
        }
    }
}

fn slab_hit(o: &Vector3<f64>, d: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for i in 0..3 {
        if d[i] == 0.0 {
            if o[i] < lo[i] || o[i] > hi[i] {
                return None;
            }
            continue;
        }
        let a = (lo[i] - o[i]) / d[i];
        let b = (hi[i] - o[i]) / d[i];
        t_near = t_near.max(a.min(b));
        t_far = t_far.min(a.max(b));
    }
    (t_near <= t_far && t_near > 0.0).then_some(t_near)
}

/// Half-open column range labelled road.
pub fn road_columns(width: usize, road_fraction: f64) -> (usize, usize) {
    let margin = ((1.0 - road_fraction) * width as f64 / 2.0).floor() as usize;
    (margin, width - margin)
}

pub fn gen_flat_scene(rig: &CameraRig, road_fraction: f64) -> Result<SyntheticScene, SyntheticError> {
    render(rig, &[], road_fraction)
}

pub fn gen_box_scene(rig: &CameraRig, boxes: &[BoxSpec]) -> Result<SyntheticScene, SyntheticError> {
    render(rig, boxes, DEFAULT_ROAD_FRACTION)
}

pub fn render(
    rig: &CameraRig,
    boxes: &[BoxSpec],
    road_fraction: f64,
) -> Result<SyntheticScene, SyntheticError> {
    if !(road_fraction > 0.0 && road_fraction <= 1.0) {
        return Err(SyntheticError::RoadFraction(road_fraction));
    }
    for b in boxes {
        b.validate()?;
    }
    let table = ClassTable::cityscapes();
    let (w, h) = (rig.width_px, rig.height_px);
    let (road_lo, road_hi) = road_columns(w, road_fraction);
    let caster = RayCaster::new(rig, boxes);
    let mut labels = vec![SKY; w * h];
    let mut ids = vec![0u16; w * h];
    let mut gt = DepthMap::invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64, y as f64);
            let i = y * w + x;
            let t = match caster.cast(u, v) {
                Hit::Sky => {
                    gt.set(x, y, Sample::Sky);
                    continue;
                }
                Hit::Ground { t, .. } => {
                    labels[i] = if (road_lo..road_hi).contains(&x) { ROAD } else { SIDEWALK };
                    t
                }
                Hit::Box { t, index, .. } => {
                    labels[i] = boxes[index].label;
                    ids[i] = boxes[index].instance_id;
                    t
                }
            };
            let d = caster.range(u, v, t);
            if d.is_finite() && d <= rig.max_range_m {
                gt.set(x, y, Sample::Depth(d));
            }
        }
    }
    let seg = SegmentationMap::new(w, h, labels, &table).expect("fixture labels are cityscapes ids");
    let instances = InstanceMap::new(w, h, ids).expect("sized to the rig");
    Ok(SyntheticScene {
        rig: rig.clone(),
        boxes: boxes.to_vec(),
        seg,
        instances,
        gt,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Morph {
    Erode,
    Dilate,
}

/// Erodes or dilates the flat-ground region (road and flat ground) by `k`
/// pixels with the 4-neighbourhood. Pixels leaving the region get a
/// vertical label drawn from `seed`; pixels joining it copy the label of a
/// ground neighbour (below, above, left, right in that order). The image
/// border does not erode.
pub fn perturb_mask(
    seg: &SegmentationMap,
    table: &ClassTable,
    k: usize,
    op: Morph,
    seed: u64,
) -> SegmentationMap {
    let (w, h) = seg.dims();
    let mut labels = seg.labels().to_vec();
    let is_ground = |l: u16| table.category(l).is_some_and(Category::is_ground);
    let vertical = table.ids_in(&[Category::Vertical]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..k {
        let ground: Vec<bool> = labels.iter().map(|&l| is_ground(l)).collect();
        let at = |x: isize, y: isize| -> Option<usize> {
            (x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h).then(|| y as usize * w + x as usize)
        };
        let mut next = labels.clone();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let nbrs = [(0isize, 1isize), (0, -1), (-1, 0), (1, 0)]
                    .map(|(dx, dy)| at(x as isize + dx, y as isize + dy));
                match op {
                    Morph::Erode if ground[i] => {
                        if nbrs.iter().flatten().any(|&j| !ground[j]) {
                            next[i] = vertical[rng.random_range(0..vertical.len())];
                        }
                    }
                    Morph::Dilate if !ground[i] => {
                        if let Some(&j) = nbrs.iter().flatten().find(|&&j| ground[j]) {
                            next[i] = labels[j];
                        }
                    }
                    _ => {}
                }
            }
        }
        labels = next;
    }
    SegmentationMap::new(w, h, labels, table).expect("labels drawn from the table")
}

/// The shipped fixture scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    Flat,
    Urban3Box,
    FloatingObject,
    StackedRider,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [
        Fixture::Flat,
        Fixture::Urban3Box,
        Fixture::FloatingObject,
        Fixture::StackedRider,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Flat => "flat",
            Fixture::Urban3Box => "urban-3-box",
            Fixture::FloatingObject => "floating-object",
            Fixture::StackedRider => "stacked-rider",
        }
    }

    pub fn parse(name: &str) -> Option<Fixture> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// 640x192 forward camera 1.65 m above the road. The flat scene reports
    /// Euclidean range, the object scenes z-depth.
    pub fn rig(self) -> CameraRig {
        let rig = CameraRig::new(
            Intrinsics::new(371.6, 371.6, 320.0, 88.0).expect("positive focal lengths"),
            Extrinsics::identity(),
            1.65,
            640,
            192,
        )
        .expect("valid rig");
        match self {
            Fixture::Flat => rig,
            _ => rig.with_depth_mode(DepthMode::ZDepth),
        }
    }

    pub fn boxes(self) -> Vec<BoxSpec> {
        match self {
            Fixture::Flat => Vec::new(),
            Fixture::Urban3Box => vec![
                BoxSpec::grounded(-3.0, 12.0, (1.8, 4.2, 1.5), CAR, 1),
                BoxSpec::grounded(5.0, 20.0, (2.5, 8.0, 3.0), TRUCK, 2),
                BoxSpec::grounded(0.5, 7.0, (0.6, 0.6, 1.8), PERSON, 3),
            ],
            // A sign hanging above the truck with sky showing between them.
            Fixture::FloatingObject => vec![
                BoxSpec::grounded(0.0, 15.0, (2.5, 6.0, 3.0), TRUCK, 1),
                BoxSpec::grounded(0.0, 11.9, (1.5, 0.2, 0.8), TRAFFIC_SIGN, 2).elevated(3.2),
            ],
            // A rider sitting directly on a bicycle: two touching vertical
            // runs, only the lower one standing on the ground.
            Fixture::StackedRider => vec![
                BoxSpec::grounded(-1.0, 8.0, (0.6, 1.8, 1.0), BICYCLE, 1),
                BoxSpec::grounded(-1.0, 8.0, (0.6, 0.8, 0.8), RIDER, 2).elevated(1.0),
            ],
        }
    }

    pub fn build(self) -> SyntheticScene {
        render(&self.rig(), &self.boxes(), DEFAULT_ROAD_FRACTION).expect("fixture boxes are valid")
    }
}
