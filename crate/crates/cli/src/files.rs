//! Directory listing and stem pairing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use embodied_depth::depth::DepthMap;
use embodied_depth::segmentation::ClassTable;

/// Files in `dir` with one of `exts`, keyed by stem. When a stem has several
/// candidates the earliest extension in `exts` wins.
pub fn by_stem(dir: &Path, exts: &[&str]) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut out: BTreeMap<String, (usize, PathBuf)> = BTreeMap::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        let Some(rank) = exts.iter().position(|e| e.eq_ignore_ascii_case(ext)) else {
            continue;
        };
        match out.get(stem) {
            Some((r, _)) if *r <= rank => {}
            _ => {
                out.insert(stem.to_string(), (rank, path));
            }
        }
    }
    Ok(out.into_iter().map(|(k, (_, p))| (k, p)).collect())
}

pub fn read_depth(path: &Path) -> anyhow::Result<DepthMap> {
    DepthMap::read(path).with_context(|| format!("cannot read depth map {}", path.display()))
}

pub fn class_table(path: Option<&Path>) -> anyhow::Result<ClassTable> {
    match path {
        None => Ok(ClassTable::cityscapes()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            ClassTable::from_toml_str(&text).with_context(|| format!("invalid class table {}", p.display()))
        }
    }
}

/// `YYYY-MM-DD` or `YYYY_MM_DD` at the start of a stem, normalized to
/// dashes.
pub fn date_prefix(stem: &str) -> Option<String> {
    let b = stem.as_bytes();
    if b.len() < 10 {
        return None;
    }
    let digits = |r: std::ops::Range<usize>| b[r].iter().all(u8::is_ascii_digit);
    let sep = |i: usize| b[i] == b'-' || b[i] == b'_';
    (digits(0..4) && sep(4) && digits(5..7) && sep(7) && digits(8..10) && b[4] == b[7])
        .then(|| format!("{}-{}-{}", &stem[0..4], &stem[5..7], &stem[8..10]))
}
