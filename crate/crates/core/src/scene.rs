//! The five embodied-depth stages and the pipeline that chains them.
//!
//! 1. **Surface**: every pixel backprojected onto the ground plane.
//! 2. **Road**: surface restricted to road pixels.
//! 3. **Ground**: surface restricted to all flat-ground pixels.
//! 4. **Extended ground**: ground depth carried up onto vertical objects
//!    from the pixel they stand on.
//! 5. **Scene**: remaining holes inpainted, sky flagged.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{surface_depth, CameraRig};
use crate::depth::{DepthMap, Sample};
use crate::inpaint::{inpaint_telea, InpaintError, DEFAULT_RADIUS};
use crate::segmentation::{Category, ClassTable, Mask, SegmentationMap};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SceneError {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error(transparent)]
    Inpaint(#[from] InpaintError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Surface,
    Road,
    Ground,
    ExtendedGround,
    Scene,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Surface,
        Stage::Road,
        Stage::Ground,
        Stage::ExtendedGround,
        Stage::Scene,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Surface => "surface",
            Stage::Road => "road",
            Stage::Ground => "ground",
            Stage::ExtendedGround => "extended_ground",
            Stage::Scene => "scene",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: SceneError,
}

/// Options for [`run_pipeline`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Telea neighborhood radius in pixels.
    pub inpaint_radius: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            inpaint_radius: DEFAULT_RADIUS,
        }
    }
}

/// All five stages for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbodiedDepthBundle {
    pub surface: DepthMap,
    pub road: DepthMap,
    pub ground: DepthMap,
    pub extended_ground: DepthMap,
    pub scene: DepthMap,
}

impl EmbodiedDepthBundle {
    pub fn stage(&self, stage: Stage) -> &DepthMap {
        match stage {
            Stage::Surface => &self.surface,
            Stage::Road => &self.road,
            Stage::Ground => &self.ground,
            Stage::ExtendedGround => &self.extended_ground,
            Stage::Scene => &self.scene,
        }
    }

    /// Number of pixels breaking the stage nesting: a pixel valid at road,
    /// ground or extended-ground must be valid with the identical value in
    /// every later stage, and never sky.
    pub fn nesting_violations(&self) -> usize {
        let chain = [&self.road, &self.ground, &self.extended_ground, &self.scene];
        let n = self.road.samples().len();
        (0..n)
            .filter(|&i| {
                chain.windows(2).any(|pair| match pair[0].samples()[i] {
                    Sample::Depth(d) => match pair[1].samples()[i] {
                        Sample::Depth(e) => d.to_bits() != e.to_bits(),
                        _ => true,
                    },
                    _ => false,
                })
            })
            .count()
    }
}

fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<(), SceneError> {
    if expected != actual {
        return Err(SceneError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

fn restrict(surface: &DepthMap, mask: &Mask) -> Result<DepthMap, SceneError> {
    check_dims(surface.dims(), mask.dims())?;
    let samples = surface
        .samples()
        .iter()
        .zip(mask.bits())
        .map(|(s, &keep)| match *s {
            Sample::Depth(d) if keep => Sample::Depth(d),
            _ => Sample::Invalid,
        })
        .collect();
    Ok(DepthMap::from_samples(surface.width(), surface.height(), samples)
        .expect("restriction preserves invariants"))
}

/// Surface depth kept on road pixels only.
pub fn road_depth(surface: &DepthMap, road_mask: &Mask) -> Result<DepthMap, SceneError> {
    restrict(surface, road_mask)
}

/// Surface depth kept on all flat-ground pixels (road included).
pub fn ground_depth(surface: &DepthMap, ground_mask: &Mask) -> Result<DepthMap, SceneError> {
    restrict(surface, ground_mask)
}

/// Carries ground depth upward onto vertical objects, column by column.
///
/// A run is a maximal vertical stretch of same-label pixels whose category
/// is vertical. If the pixel just below a run is valid in `ground`, every
/// invalid pixel of the run takes that depth. Otherwise the run takes the
/// depth given to the nearest vertical run below it in the same column; if
/// there is none (or it has no depth either) the run stays invalid. Valid
/// input pixels are never changed.
pub fn extend_vertical(
    ground: &DepthMap,
    seg: &SegmentationMap,
    table: &ClassTable,
) -> Result<DepthMap, SceneError> {
    check_dims(ground.dims(), seg.dims())?;
    let (w, h) = ground.dims();
    let categories = seg.categories(table);
    let mut out = ground.clone();
    for x in 0..w {
        let mut below_run: Option<f64> = None;
        let mut y = h;
        while y > 0 {
            let bottom = y - 1;
            if categories[bottom * w + x] != Category::Vertical {
                y -= 1;
                continue;
            }
            let label = seg.label(x, bottom);
            let mut top = bottom;
            while top > 0
                && categories[(top - 1) * w + x] == Category::Vertical
                && seg.label(x, top - 1) == label
            {
                top -= 1;
            }
            let support = (bottom + 1 < h).then(|| ground.depth(x, bottom + 1)).flatten();
            let depth = support.or(below_run);
            if let Some(d) = depth {
                for yy in top..=bottom {
                    if !ground.get(x, yy).is_valid() {
                        out.set(x, yy, Sample::Depth(d));
                    }
                }
            }
            below_run = depth;
            y = top;
        }
    }
    Ok(out)
}

/// Flags sky and inpaints every other remaining hole.
///
/// Sky-labelled pixels that already carry a depth keep it.
pub fn compose_scene(
    extended: &DepthMap,
    seg: &SegmentationMap,
    table: &ClassTable,
    radius: usize,
) -> Result<DepthMap, SceneError> {
    check_dims(extended.dims(), seg.dims())?;
    let sky = seg.mask_for(table, &[Category::Sky]);
    let mut flagged = extended.clone();
    let w = extended.width();
    for (i, &is_sky) in sky.bits().iter().enumerate() {
        if is_sky && extended.samples()[i] == Sample::Invalid {
            flagged.set(i % w, i / w, Sample::Sky);
        }
    }
    if flagged.invalid_count() == 0 {
        return Ok(flagged);
    }
    Ok(inpaint_telea(&flagged, radius)?)
}

/// Runs all five stages for one frame.
pub fn run_pipeline(
    rig: &CameraRig,
    seg: &SegmentationMap,
    table: &ClassTable,
    opts: &PipelineOptions,
) -> Result<EmbodiedDepthBundle, PipelineError> {
    let tag = |stage| move |source| PipelineError { stage, source };
    check_dims((rig.width_px, rig.height_px), seg.dims()).map_err(tag(Stage::Surface))?;
    let surface = surface_depth(rig);
    let road_mask = seg.mask_for(table, &[Category::Road]);
    let road = road_depth(&surface, &road_mask).map_err(tag(Stage::Road))?;
    let ground_mask = seg.mask_for(table, &[Category::FlatGround]);
    let ground = ground_depth(&surface, &ground_mask).map_err(tag(Stage::Ground))?;
    let extended_ground = extend_vertical(&ground, seg, table).map_err(tag(Stage::ExtendedGround))?;
    let scene = compose_scene(&extended_ground, seg, table, opts.inpaint_radius)
        .map_err(tag(Stage::Scene))?;
    Ok(EmbodiedDepthBundle {
        surface,
        road,
        ground,
        extended_ground,
        scene,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::ClassEntry;
    use proptest::prelude::*;

    const ROAD: u16 = 7;
    const SIDEWALK: u16 = 8;
    const BUILDING: u16 = 11;
    const SKY: u16 = 23;
    const PERSON: u16 = 24;
    const RIDER: u16 = 25;
    const CAR: u16 = 26;
    const BICYCLE: u16 = 33;
    const VOID: u16 = 0;

    fn seg_from(w: usize, h: usize, f: impl Fn(usize, usize) -> u16) -> SegmentationMap {
        let labels = (0..w * h).map(|i| f(i % w, i / w)).collect();
        SegmentationMap::new(w, h, labels, &ClassTable::cityscapes()).unwrap()
    }

    fn depth_from(w: usize, h: usize, f: impl Fn(usize, usize) -> Sample) -> DepthMap {
        DepthMap::from_samples(w, h, (0..w * h).map(|i| f(i % w, i / w)).collect()).unwrap()
    }

    #[test]
    fn masking_extremes() {
        let surface = depth_from(4, 3, |x, y| {
            if y == 0 {
                Sample::Invalid
            } else {
                Sample::Depth(1.0 + x as f64)
            }
        });
        let all = Mask::filled(4, 3, true);
        assert_eq!(road_depth(&surface, &all).unwrap(), surface);
        assert_eq!(road_depth(&surface, &Mask::filled(4, 3, false)).unwrap().valid_count(), 0);
        assert!(matches!(
            ground_depth(&surface, &Mask::filled(3, 3, true)),
            Err(SceneError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_column_extension() {
        let seg = seg_from(1, 100, |_, y| match y {
            0..=19 => SKY,
            20..=49 => CAR,
            _ => ROAD,
        });
        let ground = depth_from(1, 100, |_, y| {
            if y >= 50 {
                Sample::Depth(10.0 - (y - 50) as f64 * 0.1)
            } else {
                Sample::Invalid
            }
        });
        let ext = extend_vertical(&ground, &seg, &ClassTable::cityscapes()).unwrap();
        for y in 20..50 {
            assert_eq!(ext.depth(0, y), Some(10.0));
        }
        for y in 50..100 {
            assert_eq!(ext.get(0, y), ground.get(0, y));
        }
        assert!(!ext.get(0, 5).is_valid());
    }

    #[test]
    fn unsupported_run_stays_invalid() {
        // building over sky over void: nothing below it in the column
        let seg = seg_from(1, 10, |_, y| match y {
            0..=3 => BUILDING,
            4..=6 => SKY,
            _ => VOID,
        });
        let ground = DepthMap::invalid(1, 10);
        let ext = extend_vertical(&ground, &seg, &ClassTable::cityscapes()).unwrap();
        assert_eq!(ext.valid_count(), 0);
    }

    /// Hand-built 8x8 rider-on-bicycle stack. Columns 2..=5 carry the rider
    /// (rows 1..=3) on the bicycle (rows 4..=5), standing on road whose depth
    /// varies per column. Column 6 has a floating sign over sky with a car
    /// underneath.
    #[test]
    fn stacked_rider_fixture() {
        #[rustfmt::skip]
        let labels: [[u16; 8]; 8] = [
            [SKY, SKY,  SKY,     SKY,     SKY,     SKY,     BUILDING, SKY],
            [SKY, SKY,  RIDER,   RIDER,   RIDER,   RIDER,   BUILDING, SKY],
            [SKY, SKY,  RIDER,   RIDER,   RIDER,   RIDER,   SKY,      SKY],
            [SKY, SKY,  RIDER,   RIDER,   RIDER,   RIDER,   SKY,      SKY],
            [SKY, SKY,  BICYCLE, BICYCLE, BICYCLE, BICYCLE, CAR,      SKY],
            [ROAD, ROAD, BICYCLE, BICYCLE, BICYCLE, BICYCLE, CAR,     ROAD],
            [ROAD, ROAD, ROAD,    ROAD,    ROAD,    ROAD,    ROAD,     ROAD],
            [ROAD, ROAD, ROAD,    ROAD,    ROAD,    ROAD,    ROAD,     ROAD],
        ];
        let seg = seg_from(8, 8, |x, y| labels[y][x]);
        let road_d = |x: usize, y: usize| 20.0 - y as f64 + 0.5 * x as f64;
        let ground = depth_from(8, 8, |x, y| {
            if labels[y][x] == ROAD {
                Sample::Depth(road_d(x, y))
            } else {
                Sample::Invalid
            }
        });
        let ext = extend_vertical(&ground, &seg, &ClassTable::cityscapes()).unwrap();
        for x in 2..=5 {
            let contact = road_d(x, 6);
            for y in 1..=5 {
                assert_eq!(ext.depth(x, y), Some(contact), "({x},{y})");
            }
            assert!(!ext.get(x, 0).is_valid());
        }
        // sign floats over sky and inherits the car's contact depth
        for y in [0, 1, 4, 5] {
            assert_eq!(ext.depth(6, y), Some(road_d(6, 6)), "({},{y})", 6);
        }
        assert!(!ext.get(6, 2).is_valid());
        assert_eq!(ext.valid_count(), ground.valid_count() + 4 * 5 + 4);
    }

    #[test]
    fn compose_flags_sky_and_fills_rest() {
        let seg = seg_from(6, 6, |_, y| match y {
            0..=1 => SKY,
            2 => VOID,
            _ => SIDEWALK,
        });
        let ext = depth_from(6, 6, |_, y| {
            if y >= 3 {
                Sample::Depth(y as f64)
            } else {
                Sample::Invalid
            }
        });
        let scene = compose_scene(&ext, &seg, &ClassTable::cityscapes(), 5).unwrap();
        assert_eq!(scene.sky_count(), 12);
        assert_eq!(scene.invalid_count(), 0);
        // void is filled, never sky
        assert!((0..6).all(|x| scene.get(x, 2).is_valid()));

        let dense = depth_from(6, 6, |x, _| Sample::Depth(1.0 + x as f64));
        let no_sky = seg_from(6, 6, |_, _| ROAD);
        assert_eq!(compose_scene(&dense, &no_sky, &ClassTable::cityscapes(), 5).unwrap(), dense);
    }

    #[test]
    fn runs_split_on_label_change_only() {
        let table = ClassTable::new([
            ClassEntry { id: 0, name: "road".into(), category: Category::Road },
            ClassEntry { id: 1, name: "tree".into(), category: Category::Vertical },
            ClassEntry { id: 2, name: "pole".into(), category: Category::Vertical },
        ])
        .unwrap();
        let seg = SegmentationMap::new(1, 5, vec![1, 2, 2, 1, 0], &table).unwrap();
        let ground = depth_from(1, 5, |_, y| if y == 4 { Sample::Depth(3.0) } else { Sample::Invalid });
        let ext = extend_vertical(&ground, &seg, &table).unwrap();
        assert!((0..5).all(|y| ext.depth(0, y) == Some(3.0)));
    }

    proptest! {
        #[test]
        fn extension_is_column_local_and_monotone(
            w in 2usize..10, h in 2usize..14,
            seed_labels in proptest::collection::vec(prop_oneof![Just(ROAD), Just(SKY), Just(CAR), Just(PERSON), Just(VOID)], 140),
            depths in proptest::collection::vec(1.0f64..50.0, 140),
            a in 0usize..10, b in 0usize..10,
        ) {
            let (a, b) = (a % w, b % w);
            let table = ClassTable::cityscapes();
            let label = |x: usize, y: usize| seed_labels[y * w + x];
            let seg = seg_from(w, h, label);
            let ground = depth_from(w, h, |x, y| if label(x, y) == ROAD { Sample::Depth(depths[y * w + x]) } else { Sample::Invalid });
            let ext = extend_vertical(&ground, &seg, &table).unwrap();
            prop_assert!(ext.valid_count() >= ground.valid_count());
            for (g, e) in ground.samples().iter().zip(ext.samples()) {
                if g.is_valid() { prop_assert_eq!(g, e); }
            }
            let swap = |x: usize| if x == a { b } else if x == b { a } else { x };
            let seg_s = seg_from(w, h, |x, y| label(swap(x), y));
            let ground_s = depth_from(w, h, |x, y| ground.get(swap(x), y));
            let ext_s = extend_vertical(&ground_s, &seg_s, &table).unwrap();
            for y in 0..h {
                for x in 0..w {
                    prop_assert_eq!(ext_s.get(x, y), ext.get(swap(x), y));
                }
            }
        }
    }
}
