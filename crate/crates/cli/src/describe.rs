use anyhow::Context;
use embodied_depth::language::{combine_text, object_depths, parse_captions, DescribeOptions, DEFAULT_MIN_PIXELS};
use embodied_depth::segmentation::{load_labels, InstanceMap};

use crate::files::{class_table, read_depth};
use crate::{DescribeArgs, Global};

const MISSING_INSTANCES: &str =
    "an instance map is required (--instances); descriptions need per-object masks and class-only mode is not supported";

pub fn run(global: &Global, args: DescribeArgs) -> anyhow::Result<()> {
    let cfg = &global.config;
    let inst_path = match &args.instances {
        Some(p) if p.exists() => p,
        Some(p) => anyhow::bail!("{MISSING_INSTANCES} ({} does not exist)", p.display()),
        None => anyhow::bail!(MISSING_INSTANCES),
    };
    let table = class_table(args.classes.as_deref().or(cfg.classes.as_deref()))?;
    let depth = read_depth(&args.depth)?;
    let seg = load_labels(
        &std::fs::read(&args.seg).with_context(|| format!("cannot read {}", args.seg.display()))?,
        &table,
    )?;
    let instances = InstanceMap::decode_png(&std::fs::read(inst_path)?)
        .with_context(|| format!("instance map {}", inst_path.display()))?;
    let captions = match &args.captions {
        Some(p) => parse_captions(&std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?),
        None => Vec::new(),
    };
    let opts = DescribeOptions {
        min_pixels: args.min_pixels.or(cfg.min_pixels).unwrap_or(DEFAULT_MIN_PIXELS),
        aggregation: args.aggregation.map(Into::into).or(cfg.aggregation).unwrap_or_default(),
    };
    let objects = object_depths(&depth, &instances, &seg, &table, &opts)?;
    let combined = combine_text(&captions, &objects);
    let text = combined.serialize() + "\n";
    let json = combined.to_json() + "\n";
    match &args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("combined.txt"), text)?;
            std::fs::write(dir.join("combined.json"), json)?;
        }
        None => print!("{text}{json}"),
    }
    Ok(())
}
