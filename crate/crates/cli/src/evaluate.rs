use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use embodied_depth::metrics::{
    depth_metrics, error_distribution, garg_crop, upsample_bilinear, ErrorDistribution, EvalOptions,
    MetricsReport,
};
use embodied_depth::segmentation::{load_labels, Category, ClassTable, Mask};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::files::{by_stem, class_table, date_prefix, read_depth};
use crate::{usage, EvaluateArgs, Global};

const DEPTH_EXTS: [&str; 2] = ["f32", "png"];
pub const REGIONS: [&str; 3] = ["road", "ground", "scene"];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameEval {
    pub stem: String,
    pub date: Option<String>,
    pub metrics: Option<MetricsReport>,
    pub distribution: Option<ErrorDistribution>,
    pub regions: BTreeMap<String, ErrorDistribution>,
    pub error: Option<String>,
}

/// Metrics are averaged over frames; distributions pool pixels.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub frames: usize,
    pub metrics: Option<MetricsReport>,
    pub distribution: Option<ErrorDistribution>,
    pub regions: BTreeMap<String, ErrorDistribution>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DateGroup {
    pub date: String,
    #[serde(flatten)]
    pub aggregate: Aggregate,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalSettings {
    pub min_depth: f64,
    pub max_depth: f64,
    pub crop: bool,
    pub median_scaling: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub options: EvalSettings,
    pub frames: Vec<FrameEval>,
    pub aggregate: Aggregate,
    pub by_date: Vec<DateGroup>,
}

fn pool<'a>(items: impl Iterator<Item = &'a ErrorDistribution>) -> Option<ErrorDistribution> {
    let (mut n, mut a, mut b) = (0usize, 0.0, 0.0);
    for d in items {
        n += d.n_pixels;
        a += d.pct_within_5 * d.n_pixels as f64;
        b += d.pct_within_10 * d.n_pixels as f64;
    }
    (n > 0).then(|| ErrorDistribution {
        pct_within_5: a / n as f64,
        pct_within_10: b / n as f64,
        n_pixels: n,
    })
}

fn mean_metrics<'a>(items: impl Iterator<Item = &'a MetricsReport>) -> Option<MetricsReport> {
    let all: Vec<&MetricsReport> = items.collect();
    if all.is_empty() {
        return None;
    }
    let k = all.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| all.iter().map(|m| f(m)).sum::<f64>() / k;
    Some(MetricsReport {
        abs_rel: avg(|m| m.abs_rel),
        sq_rel: avg(|m| m.sq_rel),
        rmse: avg(|m| m.rmse),
        rmse_log: avg(|m| m.rmse_log),
        delta1: avg(|m| m.delta1),
        delta2: avg(|m| m.delta2),
        delta3: avg(|m| m.delta3),
        n_pixels: all.iter().map(|m| m.n_pixels).sum(),
    })
}

pub fn aggregate(frames: &[&FrameEval]) -> Aggregate {
    let regions = REGIONS
        .iter()
        .filter_map(|r| Some((r.to_string(), pool(frames.iter().filter_map(|f| f.regions.get(*r)))?)))
        .collect();
    Aggregate {
        frames: frames.len(),
        metrics: mean_metrics(frames.iter().filter_map(|f| f.metrics.as_ref())),
        distribution: pool(frames.iter().filter_map(|f| f.distribution.as_ref())),
        regions,
    }
}

fn score(
    stem: &str,
    pred: &Path,
    gt: &Path,
    seg: Option<&Path>,
    table: &ClassTable,
    opts: &EvalOptions,
    crop: bool,
) -> anyhow::Result<FrameEval> {
    let gt = read_depth(gt)?;
    let mut pred = read_depth(pred)?;
    let (w, h) = gt.dims();
    if pred.dims() != (w, h) {
        pred = upsample_bilinear(&pred, w, h);
    }
    let mut opts = *opts;
    let crop_mask = if crop {
        let c = garg_crop(w, h)?;
        opts.crop = Some(c);
        Some(Mask::new(w, h, (0..w * h).map(|i| c.contains(i % w, i / w)).collect()))
    } else {
        None
    };
    let restrict = |m: Mask| match &crop_mask {
        Some(c) => m.and(c),
        None => m,
    };
    let metrics = depth_metrics(&pred, &gt, None, &opts).ok();
    let distribution = error_distribution(&pred, &gt, crop_mask.as_ref()).ok();
    let mut regions = BTreeMap::new();
    if let Some(seg_path) = seg {
        let seg = load_labels(&std::fs::read(seg_path)?, table)
            .with_context(|| format!("segmentation {}", seg_path.display()))?;
        anyhow::ensure!(seg.dims() == (w, h), "segmentation {} has size {:?}, depth has {:?}", seg_path.display(), seg.dims(), (w, h));
        let sky = seg.mask_for(table, &[Category::Sky]);
        let not_sky = Mask::new(w, h, sky.bits().iter().map(|b| !b).collect());
        let masks = [
            seg.mask_for(table, &[Category::Road]),
            seg.mask_for(table, &[Category::FlatGround]),
            not_sky,
        ];
        for (name, m) in REGIONS.iter().zip(masks) {
            if let Ok(d) = error_distribution(&pred, &gt, Some(&restrict(m))) {
                regions.insert(name.to_string(), d);
            }
        }
    }
    Ok(FrameEval {
        stem: stem.to_string(),
        date: date_prefix(stem),
        metrics,
        distribution,
        regions,
        error: None,
    })
}

pub fn run(global: &Global, args: EvaluateArgs) -> anyhow::Result<bool> {
    let cfg = &global.config;
    let pred_dir = args
        .pred_dir
        .or_else(|| cfg.pred_dir.clone())
        .ok_or_else(|| usage("missing --pred-dir"))?;
    let gt_dir = args
        .gt_dir
        .or_else(|| cfg.gt_dir.clone())
        .ok_or_else(|| usage("missing --gt-dir"))?;
    let seg_dir = args.seg_dir.or_else(|| cfg.seg_dir.clone());
    let table = class_table(args.classes.as_deref().or(cfg.classes.as_deref()))?;
    let defaults = EvalOptions::default();
    let opts = EvalOptions {
        min_depth: args.min_depth.or(cfg.min_depth).unwrap_or(defaults.min_depth),
        max_depth: args.max_depth.or(cfg.max_depth).unwrap_or(defaults.max_depth),
        crop: None,
        median_scaling: args.median_scaling,
    };
    if !(opts.min_depth < opts.max_depth) {
        return Err(usage("--min-depth must be below --max-depth"));
    }
    let crop = args.crop || cfg.crop.unwrap_or(false);

    let preds = by_stem(&pred_dir, &DEPTH_EXTS)?;
    let gts = by_stem(&gt_dir, &DEPTH_EXTS)?;
    let segs = match &seg_dir {
        Some(d) => by_stem(d, &["png"])?,
        None => BTreeMap::new(),
    };
    let pairs: Vec<(&String, &std::path::PathBuf, &std::path::PathBuf)> = preds
        .iter()
        .filter_map(|(stem, p)| gts.get(stem).map(|g| (stem, p, g)))
        .collect();
    if pairs.is_empty() {
        anyhow::bail!(
            "no prediction in {} shares a file stem with ground truth in {}",
            pred_dir.display(),
            gt_dir.display()
        );
    }
    let results: Vec<(String, anyhow::Result<FrameEval>)> = pairs
        .par_iter()
        .map(|(stem, p, g)| {
            let seg = segs.get(*stem).map(|p| p.as_path());
            ((*stem).clone(), score(stem, p, g, seg, &table, &opts, crop))
        })
        .collect();
    let mut frames = Vec::new();
    let mut failures = 0;
    for (stem, r) in results {
        match r {
            Ok(f) => frames.push(f),
            Err(e) => {
                if global.strict {
                    return Err(e.context(format!("frame {stem}")));
                }
                eprintln!("frame {stem}: {e:#}");
                failures += 1;
                frames.push(FrameEval {
                    date: date_prefix(&stem),
                    stem,
                    metrics: None,
                    distribution: None,
                    regions: BTreeMap::new(),
                    error: Some(format!("{e:#}")),
                });
            }
        }
    }
    let scored: Vec<&FrameEval> = frames.iter().filter(|f| f.error.is_none()).collect();
    let mut by_date = Vec::new();
    if args.by_date {
        let mut groups: BTreeMap<String, Vec<&FrameEval>> = BTreeMap::new();
        for f in &scored {
            let key = f.date.clone().unwrap_or_else(|| "undated".to_string());
            groups.entry(key).or_default().push(f);
        }
        by_date = groups
            .into_iter()
            .map(|(date, fs)| DateGroup {
                date,
                aggregate: aggregate(&fs),
            })
            .collect();
    }
    let report = EvalReport {
        options: EvalSettings {
            min_depth: opts.min_depth,
            max_depth: opts.max_depth,
            crop,
            median_scaling: opts.median_scaling,
        },
        aggregate: aggregate(&scored),
        frames,
        by_date,
    };
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, json).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{json}"),
    }
    Ok(failures == 0)
}
