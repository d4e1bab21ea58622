//! Semantic label maps, instance maps and the category taxonomy used by the
//! depth pipeline.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::Cursor;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("label ids not present in the class table: {0:?}")]
    UnknownLabels(Vec<u16>),
    #[error("label map must have non-zero dimensions")]
    Empty,
    #[error("unsupported label image: {0}")]
    Format(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("instance {instance} covers several class labels: {labels:?}")]
    MixedInstance { instance: u16, labels: Vec<u16> },
    #[error("duplicate label id {0} in class table")]
    DuplicateLabel(u16),
    #[error("class table: {0}")]
    Table(String),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

/// Coarse role of a class in the depth pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Road,
    FlatGround,
    Vertical,
    Sky,
    Void,
}

impl Category {
    /// Road counts as flat ground.
    pub fn is_ground(self) -> bool {
        matches!(self, Category::Road | Category::FlatGround)
    }

    /// Whether a pixel of this category belongs to a query over `set`.
    pub fn matches(self, set: &[Category]) -> bool {
        set.contains(&self) || (self == Category::Road && set.contains(&Category::FlatGround))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::Road => "road",
            Category::FlatGround => "flat_ground",
            Category::Vertical => "vertical",
            Category::Sky => "sky",
            Category::Void => "void",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub id: u16,
    pub name: String,
    pub category: Category,
}

/// Mapping from dataset label ids to class names and categories.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassTable {
    entries: BTreeMap<u16, ClassEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassTableDoc {
    #[serde(rename = "class")]
    classes: Vec<ClassEntry>,
}

impl ClassTable {
    pub fn new(entries: impl IntoIterator<Item = ClassEntry>) -> Result<Self, SegmentationError> {
        let mut map = BTreeMap::new();
        for e in entries {
            let id = e.id;
            if map.insert(id, e).is_some() {
                return Err(SegmentationError::DuplicateLabel(id));
            }
        }
        Ok(Self { entries: map })
    }

    /// Cityscapes label ids (0..=33).
    pub fn cityscapes() -> Self {
        use Category::*;
        const TABLE: [(&str, Category); 34] = [
            ("unlabeled", Void),
            ("ego vehicle", Void),
            ("rectification border", Void),
            ("out of roi", Void),
            ("static", Void),
            ("dynamic", Void),
            ("ground", FlatGround),
            ("road", Road),
            ("sidewalk", FlatGround),
            ("parking", FlatGround),
            ("rail track", FlatGround),
            ("building", Vertical),
            ("wall", Vertical),
            ("fence", Vertical),
            ("guard rail", Vertical),
            ("bridge", Vertical),
            ("tunnel", Vertical),
            ("pole", Vertical),
            ("polegroup", Vertical),
            ("traffic light", Vertical),
            ("traffic sign", Vertical),
            ("vegetation", Vertical),
            ("terrain", FlatGround),
            ("sky", Sky),
            ("person", Vertical),
            ("rider", Vertical),
            ("car", Vertical),
            ("truck", Vertical),
            ("bus", Vertical),
            ("caravan", Vertical),
            ("trailer", Vertical),
            ("train", Vertical),
            ("motorcycle", Vertical),
            ("bicycle", Vertical),
        ];
        let entries = TABLE.iter().enumerate().map(|(id, (name, category))| ClassEntry {
            id: id as u16,
            name: (*name).to_string(),
            category: *category,
        });
        Self::new(entries).expect("static table has unique ids")
    }

    /// Parses the TOML class-table document:
    ///
    /// ```toml
    /// [[class]]
    /// id = 7
    /// name = "road"
    /// category = "road"   # road | flat_ground | vertical | sky | void
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self, SegmentationError> {
        let doc: ClassTableDoc =
            toml::from_str(text).map_err(|e| SegmentationError::Table(e.to_string()))?;
        Self::new(doc.classes)
    }

    pub fn to_toml_string(&self) -> String {
        let doc = ClassTableDoc {
            classes: self.entries.values().cloned().collect(),
        };
        toml::to_string(&doc).expect("class table serializes")
    }

    pub fn get(&self, id: u16) -> Option<&ClassEntry> {
        self.entries.get(&id)
    }

    pub fn category(&self, id: u16) -> Option<Category> {
        self.entries.get(&id).map(|e| e.category)
    }

    pub fn id_of(&self, name: &str) -> Option<u16> {
        self.entries.values().find(|e| e.name == name).map(|e| e.id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ClassEntry> {
        self.entries.values()
    }

    /// Ids whose category matches `set`, ascending.
    pub fn ids_in(&self, set: &[Category]) -> Vec<u16> {
        self.entries
            .values()
            .filter(|e| e.category.matches(set))
            .map(|e| e.id)
            .collect()
    }

    /// Dense lookup from label id to category for fast per-pixel queries.
    pub(crate) fn category_lut(&self) -> Vec<Option<Category>> {
        let max = self.entries.keys().next_back().copied().unwrap_or(0) as usize;
        let mut lut = vec![None; max + 1];
        for e in self.entries.values() {
            lut[e.id as usize] = Some(e.category);
        }
        lut
    }
}

impl Default for ClassTable {
    fn default() -> Self {
        Self::cityscapes()
    }
}

/// Per-pixel class labels, validated against a [`ClassTable`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMap {
    width: usize,
    height: usize,
    labels: Vec<u16>,
}

impl SegmentationMap {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u16>,
        table: &ClassTable,
    ) -> Result<Self, SegmentationError> {
        if width == 0 || height == 0 {
            return Err(SegmentationError::Empty);
        }
        if labels.len() != width * height {
            return Err(SegmentationError::Format(format!(
                "expected {} labels for {width}x{height}, got {}",
                width * height,
                labels.len()
            )));
        }
        let unknown: BTreeSet<u16> = labels
            .iter()
            .copied()
            .filter(|&l| table.get(l).is_none())
            .collect();
        if !unknown.is_empty() {
            return Err(SegmentationError::UnknownLabels(unknown.into_iter().collect()));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    pub fn histogram(&self) -> BTreeMap<u16, usize> {
        let mut h = BTreeMap::new();
        for &l in &self.labels {
            *h.entry(l).or_insert(0) += 1;
        }
        h
    }

    pub fn mask_for(&self, table: &ClassTable, categories: &[Category]) -> Mask {
        let lut = table.category_lut();
        let bits = self
            .labels
            .iter()
            .map(|&l| lut[l as usize].is_some_and(|c| c.matches(categories)))
            .collect();
        Mask {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    /// Per-pixel categories, row-major.
    pub fn categories(&self, table: &ClassTable) -> Vec<Category> {
        let lut = table.category_lut();
        self.labels
            .iter()
            .map(|&l| lut[l as usize].expect("labels validated at construction"))
            .collect()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, SegmentationError> {
        encode_u16_png(self.width, self.height, &self.labels)
    }
}

/// Decodes a single-channel 8- or 16-bit PNG label image and validates every
/// label against `table`.
pub fn load_labels(bytes: &[u8], table: &ClassTable) -> Result<SegmentationMap, SegmentationError> {
    let (w, h, raw) = decode_label_png(bytes)?;
    SegmentationMap::new(w, h, raw, table)
}

fn decode_label_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>), SegmentationError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(SegmentationError::Empty);
    }
    let raw = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u16::from).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw(),
        other => {
            return Err(SegmentationError::Format(format!(
                "expected single-channel 8- or 16-bit PNG, got {:?}",
                other.color()
            )))
        }
    };
    Ok((w, h, raw))
}

/// Encodes ids as an 8-bit PNG when they all fit, 16-bit otherwise.
fn encode_u16_png(width: usize, height: usize, data: &[u16]) -> Result<Vec<u8>, SegmentationError> {
    let mut out = Cursor::new(Vec::new());
    if data.iter().all(|&v| v <= u8::MAX as u16) {
        let raw: Vec<u8> = data.iter().map(|&v| v as u8).collect();
        let img: ImageBuffer<Luma<u8>, _> =
            ImageBuffer::from_raw(width as u32, height as u32, raw).expect("sized buffer");
        img.write_to(&mut out, ImageFormat::Png)?;
    } else {
        let img: ImageBuffer<Luma<u16>, _> =
            ImageBuffer::from_raw(width as u32, height as u32, data.to_vec()).expect("sized buffer");
        img.write_to(&mut out, ImageFormat::Png)?;
    }
    Ok(out.into_inner())
}

/// Per-pixel instance ids; `0` means no instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceMap {
    width: usize,
    height: usize,
    ids: Vec<u16>,
}

impl InstanceMap {
    pub fn new(width: usize, height: usize, ids: Vec<u16>) -> Result<Self, SegmentationError> {
        if width == 0 || height == 0 {
            return Err(SegmentationError::Empty);
        }
        if ids.len() != width * height {
            return Err(SegmentationError::Format(format!(
                "expected {} ids for {width}x{height}, got {}",
                width * height,
                ids.len()
            )));
        }
        Ok(Self { width, height, ids })
    }

    /// Decodes a single-channel PNG of instance ids (16-bit expected, 8-bit
    /// accepted).
    pub fn decode_png(bytes: &[u8]) -> Result<Self, SegmentationError> {
        let (w, h, raw) = decode_label_png(bytes)?;
        Self::new(w, h, raw)
    }

    /// Always 16-bit.
    pub fn encode_png(&self) -> Result<Vec<u8>, SegmentationError> {
        let mut out = Cursor::new(Vec::new());
        let img: ImageBuffer<Luma<u16>, _> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.ids.clone())
                .expect("sized buffer");
        img.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn ids(&self) -> &[u16] {
        &self.ids
    }

    #[inline]
    pub fn id(&self, x: usize, y: usize) -> u16 {
        self.ids[y * self.width + x]
    }

    /// Checks pairing with `seg` and returns each instance's class label.
    pub fn instance_labels(
        &self,
        seg: &SegmentationMap,
    ) -> Result<BTreeMap<u16, u16>, SegmentationError> {
        if self.dims() != seg.dims() {
            return Err(SegmentationError::DimensionMismatch {
                expected: seg.dims(),
                actual: self.dims(),
            });
        }
        let mut seen: BTreeMap<u16, BTreeSet<u16>> = BTreeMap::new();
        for (&id, &label) in self.ids.iter().zip(seg.labels()) {
            if id != 0 {
                seen.entry(id).or_default().insert(label);
            }
        }
        let mut out = BTreeMap::new();
        for (id, labels) in seen {
            if labels.len() != 1 {
                return Err(SegmentationError::MixedInstance {
                    instance: id,
                    labels: labels.into_iter().collect(),
                });
            }
            out.insert(id, *labels.iter().next().unwrap());
        }
        Ok(out)
    }
}

/// Boolean per-pixel selection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "mask size");
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn or(&self, other: &Mask) -> Mask {
        assert_eq!(self.dims(), other.dims());
        Mask::new(
            self.width,
            self.height,
            self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        )
    }

    pub fn and(&self, other: &Mask) -> Mask {
        assert_eq!(self.dims(), other.dims());
        Mask::new(
            self.width,
            self.height,
            self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        )
    }
}

/// A 4-connected set of mask pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    /// `(x, y)` pixels in the order they were discovered.
    pub pixels: Vec<(usize, usize)>,
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Labels 4-connected components of `mask`, ordered by (top row, left
/// column) of their bounding boxes, then by first pixel in raster order.
pub fn connected_components(mask: &Mask) -> Vec<Component> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut keyed = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Component {
            pixels: Vec::new(),
            top: usize::MAX,
            bottom: 0,
            left: usize::MAX,
            right: 0,
        };
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            comp.pixels.push((x, y));
            comp.top = comp.top.min(y);
            comp.bottom = comp.bottom.max(y);
            comp.left = comp.left.min(x);
            comp.right = comp.right.max(x);
            let mut visit = |j: usize| {
                if mask.bits[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        keyed.push(((comp.top, comp.left, start), comp));
    }
    keyed.sort_by_key(|(k, _)| *k);
    keyed.into_iter().map(|(_, c)| c).collect()
}
