use std::path::Path;

use embodied_depth::config::CameraConfig;
use embodied_depth::synthetic::Fixture;

use crate::{usage, SynthArgs};

/// Layout under `<out>/<fixture>/`: `seg/`, `instances/` and `gt/` each hold
/// `<fixture>.png` (plus `gt/<fixture>.f32`), next to `camera.toml` and
/// `boxes.json`.
fn write_fixture(f: Fixture, out: &Path) -> anyhow::Result<()> {
    let scene = f.build();
    let root = out.join(f.name());
    for sub in ["seg", "instances", "gt"] {
        std::fs::create_dir_all(root.join(sub))?;
    }
    let file = |sub: &str, ext: &str| root.join(sub).join(format!("{}.{ext}", f.name()));
    std::fs::write(file("seg", "png"), scene.seg.encode_png()?)?;
    std::fs::write(file("instances", "png"), scene.instances.encode_png()?)?;
    scene.gt.write_png16(&file("gt", "png"))?;
    scene.gt.write_f32(&file("gt", "f32"))?;
    std::fs::write(root.join("camera.toml"), CameraConfig::from_rig(&scene.rig).to_toml_string())?;
    std::fs::write(root.join("boxes.json"), serde_json::to_string_pretty(&scene.boxes)? + "\n")?;
    eprintln!("wrote fixture {} to {}", f.name(), root.display());
    Ok(())
}

pub fn run(args: SynthArgs) -> anyhow::Result<()> {
    let fixtures: Vec<Fixture> = if args.fixture == "all" {
        Fixture::ALL.to_vec()
    } else {
        let f = Fixture::parse(&args.fixture).ok_or_else(|| {
            let names: Vec<&str> = Fixture::ALL.iter().map(|f| f.name()).collect();
            usage(format!("unknown fixture {:?}; expected one of {} or all", args.fixture, names.join(", ")))
        })?;
        vec![f]
    };
    for f in fixtures {
        write_fixture(f, &args.out_dir)?;
    }
    Ok(())
}
