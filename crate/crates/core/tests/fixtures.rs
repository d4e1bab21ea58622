//! Shipped fixtures against their manifest and an independent count oracle.

use std::collections::BTreeMap;

use embodied_depth::camera::DepthMode;
use embodied_depth::depth::Sample;
use embodied_depth::language::{object_depths, DescribeOptions};
use embodied_depth::scene::{run_pipeline, EmbodiedDepthBundle, PipelineOptions, Stage};
use embodied_depth::segmentation::{Category, ClassTable};
use embodied_depth::synthetic::{Fixture, SyntheticScene, BICYCLE, RIDER, TRAFFIC_SIGN, TRUCK};
use serde::Deserialize;

#[derive(Deserialize)]
struct Expected {
    depth_mode: DepthMode,
    valid: [usize; 5],
    sky: usize,
    #[serde(default)]
    objects: Vec<ExpectedObject>,
}

#[derive(Deserialize)]
struct ExpectedObject {
    id: u16,
    class: String,
    rank: usize,
    depth: f64,
}

fn manifest() -> BTreeMap<String, Expected> {
    toml::from_str(include_str!("../fixtures/manifest.toml")).expect("manifest parses")
}

fn run(scene: &SyntheticScene) -> EmbodiedDepthBundle {
    run_pipeline(&scene.rig, &scene.seg, &ClassTable::cityscapes(), &PipelineOptions::default()).unwrap()
}

/// Stage counts derived from geometry and labels alone.
fn oracle_counts(scene: &SyntheticScene) -> ([usize; 5], usize) {
    let rig = &scene.rig;
    let table = ClassTable::cityscapes();
    let (w, h) = scene.seg.dims();
    let k = &rig.intrinsics;
    let plane_ok = |x: usize, y: usize| {
        let (rx, ry) = ((x as f64 - k.ox) / k.fx, (y as f64 - k.oy) / k.fy);
        if ry <= 0.0 {
            return false;
        }
        let t = rig.height_m / ry;
        let d = match rig.depth_mode {
            DepthMode::ZDepth => t,
            DepthMode::Euclidean => t * (rx * rx + ry * ry + 1.0).sqrt(),
        };
        d <= rig.max_range_m
    };
    let cat = |x: usize, y: usize| table.category(scene.seg.label(x, y)).unwrap();
    let mut counts = [0usize; 5];
    let mut sky = 0;
    for x in 0..w {
        for y in 0..h {
            let c = cat(x, y);
            let surface = plane_ok(x, y);
            let ground_valid = |x, y| cat(x, y).is_ground() && plane_ok(x, y);
            let road = surface && c == Category::Road;
            let ground = surface && c.is_ground();
            let supported = c == Category::Vertical
                && (y..h - 1).any(|v| cat(x, v) == Category::Vertical && ground_valid(x, v + 1));
            counts[0] += usize::from(surface);
            counts[1] += usize::from(road);
            counts[2] += usize::from(ground);
            counts[3] += usize::from(ground || supported);
            if c == Category::Sky {
                sky += 1;
            } else {
                counts[4] += 1;
            }
        }
    }
    (counts, sky)
}

#[test]
fn stage_counts_match_manifest_and_oracle() {
    let manifest = manifest();
    assert_eq!(manifest.len(), Fixture::ALL.len());
    for f in Fixture::ALL {
        let expected = &manifest[f.name()];
        let scene = f.build();
        assert_eq!(scene.rig.depth_mode, expected.depth_mode, "{}", f.name());
        let b = run(&scene);
        let got: Vec<usize> = Stage::ALL.iter().map(|&s| b.stage(s).valid_count()).collect();
        let (oracle, oracle_sky) = oracle_counts(&scene);
        assert_eq!(got, oracle, "{} vs oracle", f.name());
        assert_eq!(got, expected.valid, "{} vs manifest", f.name());
        assert_eq!(b.scene.sky_count(), oracle_sky, "{}", f.name());
        assert_eq!(b.scene.sky_count(), expected.sky, "{}", f.name());
        assert_eq!(b.scene.invalid_count(), 0, "{} scene must be dense", f.name());
    }
}

#[test]
fn urban_objects_match_manifest() {
    let manifest = manifest();
    let expected = &manifest["urban-3-box"].objects;
    let scene = Fixture::Urban3Box.build();
    let b = run(&scene);
    let objs = object_depths(&b.scene, &scene.instances, &scene.seg, &ClassTable::cityscapes(), &DescribeOptions::default())
        .unwrap();
    assert_eq!(objs.len(), expected.len());
    for (o, e) in objs.iter().zip(expected) {
        assert_eq!((o.instance_id, o.class_name.as_str(), o.rank), (e.id, e.class.as_str(), e.rank));
        assert!((o.depth - e.depth).abs() < 1e-9);
        let front = scene.boxes.iter().find(|b| b.instance_id == o.instance_id).unwrap().front_z();
        assert!((o.depth - front).abs() / front < 0.05);
    }
}

#[test]
fn floating_sign_inherits_truck_contact() {
    let scene = Fixture::FloatingObject.build();
    let b = run(&scene);
    let (w, h) = scene.seg.dims();
    let mut seen = 0;
    for x in 0..w {
        let sign_rows: Vec<usize> = (0..h).filter(|&y| scene.seg.label(x, y) == TRAFFIC_SIGN).collect();
        if sign_rows.is_empty() {
            continue;
        }
        // the truck run's bottom sits on ground; its contact depth is the
        // value written onto the truck pixels
        let truck_bottom = (0..h).rev().find(|&y| scene.seg.label(x, y) == TRUCK).expect("truck under sign");
        let contact = b.ground.depth(x, truck_bottom + 1).expect("truck stands on ground");
        // sky separates the two objects
        assert!((sign_rows[sign_rows.len() - 1]..truck_bottom).any(|y| scene.seg.label(x, y) == 23));
        for y in sign_rows {
            assert_eq!(b.extended_ground.get(x, y), Sample::Depth(contact));
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn rider_inherits_bicycle_contact() {
    let scene = Fixture::StackedRider.build();
    let b = run(&scene);
    let (w, h) = scene.seg.dims();
    let mut seen = 0;
    for x in 0..w {
        let Some(bike_bottom) = (0..h).rev().find(|&y| scene.seg.label(x, y) == BICYCLE) else { continue };
        let contact = b.ground.depth(x, bike_bottom + 1).expect("bicycle stands on ground");
        for y in (0..h).filter(|&y| scene.seg.label(x, y) == RIDER) {
            assert_eq!(b.extended_ground.get(x, y), Sample::Depth(contact));
            seen += 1;
        }
    }
    assert!(seen > 0);
}
