//! Per-object depth ranking and the depth-description sentences fed to a
//! text encoder alongside image captions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::DepthMap;
use crate::segmentation::{ClassTable, InstanceMap, SegmentationError, SegmentationMap};

pub const DEFAULT_MIN_PIXELS: usize = 50;

#[derive(Debug, Error)]
pub enum LanguageError {
    #[error("dimension mismatch between scene depth {depth:?} and instance map {instances:?}")]
    DimensionMismatch {
        depth: (usize, usize),
        instances: (usize, usize),
    },
    #[error("min_pixels must be at least 1")]
    MinPixels,
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error("malformed combined text: {0}")]
    Parse(String),
}

/// Statistic used to reduce an instance's depths to one number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DescribeOptions {
    pub min_pixels: usize,
    pub aggregation: Aggregation,
}

impl Default for DescribeOptions {
    fn default() -> Self {
        Self {
            min_pixels: DEFAULT_MIN_PIXELS,
            aggregation: Aggregation::Median,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectDepth {
    pub instance_id: u16,
    pub class_name: String,
    /// Aggregated depth in meters.
    pub depth: f64,
    /// 1-based position when sorted nearest to farthest.
    pub rank: usize,
    pub pixel_count: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One entry per instance with at least `min_pixels` valid non-sky scene
/// pixels, sorted by rank. Ties in depth are broken by instance id.
pub fn object_depths(
    scene: &DepthMap,
    instances: &InstanceMap,
    seg: &SegmentationMap,
    table: &ClassTable,
    opts: &DescribeOptions,
) -> Result<Vec<ObjectDepth>, LanguageError> {
    if opts.min_pixels == 0 {
        return Err(LanguageError::MinPixels);
    }
    if scene.dims() != instances.dims() {
        return Err(LanguageError::DimensionMismatch {
            depth: scene.dims(),
            instances: instances.dims(),
        });
    }
    let labels = instances.instance_labels(seg)?;
    let mut per_instance: BTreeMap<u16, Vec<f64>> = BTreeMap::new();
    for (&id, s) in instances.ids().iter().zip(scene.samples()) {
        if id == 0 {
            continue;
        }
        if let Some(d) = s.depth() {
            per_instance.entry(id).or_default().push(d);
        }
    }
    let mut objects: Vec<ObjectDepth> = per_instance
        .into_iter()
        .filter(|(_, v)| v.len() >= opts.min_pixels)
        .map(|(id, mut v)| {
            let depth = match opts.aggregation {
                Aggregation::Median => median(&mut v),
                Aggregation::Mean => v.iter().sum::<f64>() / v.len() as f64,
            };
            let class_name = table
                .get(labels[&id])
                .map(|e| e.name.clone())
                .unwrap_or_default();
            ObjectDepth {
                instance_id: id,
                class_name,
                depth,
                rank: 0,
                pixel_count: v.len(),
            }
        })
        .collect();
    assign_ranks(&mut objects);
    Ok(objects)
}

/// Sorts by (depth, instance id) and writes 1-based ranks.
pub fn assign_ranks(objects: &mut [ObjectDepth]) {
    objects.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.instance_id.cmp(&b.instance_id)));
    for (i, o) in objects.iter_mut().enumerate() {
        o.rank = i + 1;
    }
}

/// `1-st`, `2-nd`, `3-rd`, `4-th`, ..., `11-th`, `21-st`.
pub fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}-{suffix}")
}

pub fn render_description(o: &ObjectDepth) -> String {
    format!(
        "This object seems to be {:.1} meters and ranks as the {} farthest in distance.",
        o.depth,
        ordinal(o.rank)
    )
}

/// Captions followed by depth sentences in rank order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CombinedText {
    pub captions: Vec<String>,
    pub objects: Vec<ObjectDepth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: u16,
    pub class: String,
    pub d: f64,
    pub r: usize,
    pub sentence: String,
}

/// JSON form of [`CombinedText`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedRecord {
    pub captions: Vec<String>,
    pub objects: Vec<ObjectRecord>,
    pub text: String,
}

pub fn combine_text(captions: &[String], objects: &[ObjectDepth]) -> CombinedText {
    let mut objects = objects.to_vec();
    objects.sort_by_key(|o| o.rank);
    CombinedText {
        captions: captions
            .iter()
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect(),
        objects,
    }
}

impl CombinedText {
    pub fn depth_sentences(&self) -> Vec<String> {
        self.objects.iter().map(render_description).collect()
    }

    pub fn sentences(&self) -> Vec<String> {
        let mut all = self.captions.clone();
        all.extend(self.depth_sentences());
        all
    }

    /// Single line, sentences joined by one space.
    pub fn serialize(&self) -> String {
        self.sentences().join(" ")
    }

    pub fn to_record(&self) -> CombinedRecord {
        CombinedRecord {
            captions: self.captions.clone(),
            objects: self
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    id: o.instance_id,
                    class: o.class_name.clone(),
                    d: o.depth,
                    r: o.rank,
                    sentence: render_description(o),
                })
                .collect(),
            text: self.serialize(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_record()).expect("record serializes")
    }
}

/// A parsed depth sentence: the depth as printed and the rank.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedDescription {
    pub depth_text: String,
    pub rank: usize,
}

const PREFIX: &str = "This object seems to be ";
const MIDDLE: &str = " meters and ranks as the ";
const SUFFIX: &str = " farthest in distance.";

/// Splits serialized text back into caption sentences and depth sentences.
///
/// Depth sentences are recognised by their fixed template and must form a
/// contiguous tail. Captions are split after `.`, `!` or `?` followed by a
/// space.
pub fn parse_combined(text: &str) -> Result<(Vec<String>, Vec<ParsedDescription>), LanguageError> {
    let mut rest = text.trim();
    let mut descriptions = Vec::new();
    let caption_part = match rest.find(PREFIX) {
        Some(pos) => {
            let head = rest[..pos].trim_end().to_string();
            rest = &rest[pos..];
            while !rest.is_empty() {
                let body = rest
                    .strip_prefix(PREFIX)
                    .ok_or_else(|| LanguageError::Parse(format!("expected depth sentence at {rest:?}")))?;
                let end = body
                    .find(SUFFIX)
                    .ok_or_else(|| LanguageError::Parse("unterminated depth sentence".into()))?;
                let inner = &body[..end];
                let (depth_text, ord) = inner
                    .split_once(MIDDLE)
                    .ok_or_else(|| LanguageError::Parse(format!("bad depth sentence {inner:?}")))?;
                let rank = ord
                    .split_once('-')
                    .and_then(|(n, _)| n.parse::<usize>().ok())
                    .filter(|&n| ordinal(n) == ord)
                    .ok_or_else(|| LanguageError::Parse(format!("bad ordinal {ord:?}")))?;
                descriptions.push(ParsedDescription {
                    depth_text: depth_text.to_string(),
                    rank,
                });
                rest = body[end + SUFFIX.len()..].trim_start();
            }
            head
        }
        None => rest.to_string(),
    };
    Ok((split_sentences(&caption_part), descriptions))
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for i in 0..bytes.len() {
        if matches!(bytes[i], b'.' | b'!' | b'?') && bytes.get(i + 1) == Some(&b' ') {
            out.push(text[start..=i].trim().to_string());
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Reads a captions file: one sentence per line, blank lines ignored.
pub fn parse_captions(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}
