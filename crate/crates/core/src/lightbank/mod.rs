//! Bank-of-lights construction: segment real specular reflections out of a
//! training corpus, crop them as grayscale-on-black patches, and expand the
//! crops through a three-round transform schedule into a 12x bank.
//!
//! The schedule for `crop_count` original crops:
//!
//! * round 1 - flip horizontal, flip vertical, random scale, random rotate,
//!   each applied to all originals (4x);
//! * round 2 - random scale and random rotate applied to the h-flipped and
//!   v-flipped sets (4x);
//! * round 3 - random scale applied to the rotated originals and the two
//!   rotated flip sets from round 2 (3x).
//!
//! Originals plus rounds give `12 * crop_count` patches, 3,600 for the
//! standard 300 crops. Random factors are drawn from a single seeded
//! generator in a fixed visitation order (intensity factors in candidate
//! order, then each round's scale draws before its rotation draws), so the
//! bank is byte-identical for a given corpus, parameters, and seed.

mod store;
mod transform;

pub use store::{bank_exists, load_bank, save_bank, BANK_MANIFEST, BANK_PATCH_DIR};
pub use transform::{
    flip_horizontal, flip_vertical, random_rotate, random_scale, rotate_by, scale_by,
    vary_intensity,
};

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{iou, BinaryMask, PixelBox, RgbImage};
use crate::rng;

/// Intensity scale factors are drawn from this range, mapping crops to
/// shades from dark gray to bright white.
pub const INTENSITY_RANGE: (f64, f64) = (0.3, 1.0);
/// Random scaling range.
pub const SCALE_RANGE: (f64, f64) = (0.8, 1.2);
/// Random rotation range in degrees.
pub const ROTATION_RANGE_DEG: (f64, f64) = (-30.0, 30.0);

#[derive(Debug, Error)]
pub enum BankError {
    #[error("intensity factor {0} outside [0.3, 1.0]")]
    FactorOutOfRange(f64),
    #[error("box ({},{},{},{}) exceeds image bounds {width}x{height}", bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max)]
    BoxOutOfBounds {
        bbox: PixelBox,
        width: u32,
        height: u32,
    },
    #[error("no light pixels inside ({},{},{},{})", bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max)]
    EmptyPatch { bbox: PixelBox },
    #[error(
        "found only {found} candidate light patches, need {needed} \
         (threshold min_channel={min_channel}, max_chroma_spread={max_chroma_spread})"
    )]
    InsufficientCandidates {
        found: usize,
        needed: usize,
        min_channel: u8,
        max_chroma_spread: u8,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad bank manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("corrupt bank at {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

/// White-shade segmentation thresholds. A pixel counts as specular light
/// when its darkest channel is at least `min_channel` and its channel
/// spread (max - min) is at most `max_chroma_spread`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub min_channel: u8,
    pub max_chroma_spread: u8,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            min_channel: 200,
            max_chroma_spread: 30,
        }
    }
}

/// One step of a patch's transform history, with the drawn factor or angle
/// where the step is randomized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TransformStep {
    Intensity { factor: f64 },
    FlipH,
    FlipV,
    Scale { factor: f64 },
    Rotate { degrees: f64 },
}

/// Where a patch came from: source corpus image, crop box, applied
/// transforms, and which schedule round produced it (0 = original crop).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchProvenance {
    pub source_id: String,
    pub source_box: PixelBox,
    pub chain: Vec<TransformStep>,
    pub round: u8,
}

/// Cropped grayscale-on-black raster representing one artificial specular
/// light. Background pixels are exactly 0 (pasting keys on value 0) and at
/// least one pixel is nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct LightPatch {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    provenance: PatchProvenance,
}

impl LightPatch {
    pub(crate) fn from_parts(
        width: u32,
        height: u32,
        pixels: Vec<u8>,
        provenance: PatchProvenance,
    ) -> Self {
        assert_eq!(pixels.len(), width as usize * height as usize);
        debug_assert!(
            pixels.iter().any(|&v| v > 0),
            "light patch must keep nonzero support"
        );
        Self {
            width,
            height,
            pixels,
            provenance,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Grayscale value at (x, y); 0 is background.
    pub fn value(&self, x: u32, y: u32) -> u8 {
        assert!(x < self.width && y < self.height);
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Row-major grayscale buffer.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn provenance(&self) -> &PatchProvenance {
        &self.provenance
    }

    pub(crate) fn with_round(mut self, round: u8) -> Self {
        self.provenance.round = round;
        self
    }
}

/// Ordered collection of light patches plus the seed that built it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LightBank {
    patches: Vec<LightPatch>,
    seed: u64,
    crop_count: usize,
}

impl LightBank {
    pub fn patches(&self) -> &[LightPatch] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn crop_count(&self) -> usize {
        self.crop_count
    }
}

/// Marks pixels whose color is a shade of white: darkest channel at least
/// `min_channel`, channel spread at most `max_chroma_spread`.
pub fn segment_specular(image: &RgbImage, params: &ThresholdParams) -> BinaryMask {
    let mut mask = BinaryMask::new(image.width(), image.height());
    for y in 0..image.height() {
        for x in 0..image.width() {
            let [r, g, b] = image.pixel(x, y);
            let min = r.min(g).min(b);
            let max = r.max(g).max(b);
            if min >= params.min_channel && max - min <= params.max_chroma_spread {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Connected component of true mask pixels, as (x, y) coordinates in
/// row-major scan order.
pub type Component = Vec<(u32, u32)>;

/// Labels the 8-connected components of the true pixels. Components are
/// returned in order of their first pixel in scan order; the partition is
/// exhaustive and disjoint.
///
/// Two-pass union-find labeling; the test suite checks it against a naive
/// flood-fill oracle.
pub fn find_contours(mask: &BinaryMask) -> Vec<Component> {
    let w = mask.width() as usize;
    let h = mask.height() as usize;
    let mut labels = vec![0usize; w * h];
    // parent[0] is the unused background slot; real labels start at 1.
    let mut parent: Vec<usize> = vec![0];

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as u32, y as u32) {
                continue;
            }
            let idx = y * w + x;
            // Already-scanned 8-neighbors: W, NW, N, NE.
            let mut best = usize::MAX;
            let mut neighbors = [0usize; 4];
            let mut n = 0;
            if x > 0 && labels[idx - 1] != 0 {
                neighbors[n] = labels[idx - 1];
                n += 1;
            }
            if y > 0 {
                if x > 0 && labels[idx - w - 1] != 0 {
                    neighbors[n] = labels[idx - w - 1];
                    n += 1;
                }
                if labels[idx - w] != 0 {
                    neighbors[n] = labels[idx - w];
                    n += 1;
                }
                if x + 1 < w && labels[idx - w + 1] != 0 {
                    neighbors[n] = labels[idx - w + 1];
                    n += 1;
                }
            }
            for &label in &neighbors[..n] {
                let root = find(&mut parent, label);
                best = best.min(root);
            }
            if best == usize::MAX {
                let fresh = parent.len();
                parent.push(fresh);
                labels[idx] = fresh;
            } else {
                labels[idx] = best;
                for &label in &neighbors[..n] {
                    let root = find(&mut parent, label);
                    if root != best {
                        parent[root] = best;
                    }
                }
            }
        }
    }

    let mut component_of_root: Vec<Option<usize>> = vec![None; parent.len()];
    let mut components: Vec<Component> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let label = labels[y * w + x];
            if label == 0 {
                continue;
            }
            let root = find(&mut parent, label);
            let slot = match component_of_root[root] {
                Some(slot) => slot,
                None => {
                    components.push(Vec::new());
                    component_of_root[root] = Some(components.len() - 1);
                    components.len() - 1
                }
            };
            components[slot].push((x as u32, y as u32));
        }
    }
    components
}

/// Tight axis-aligned bound of each component (exclusive max convention).
pub fn bounding_boxes(components: &[Component]) -> Vec<PixelBox> {
    components
        .iter()
        .filter(|c| !c.is_empty())
        .map(|component| {
            let mut x_min = u32::MAX;
            let mut y_min = u32::MAX;
            let mut x_max = 0u32;
            let mut y_max = 0u32;
            for &(x, y) in component {
                x_min = x_min.min(x);
                y_min = y_min.min(y);
                x_max = x_max.max(x);
                y_max = y_max.max(y);
            }
            PixelBox::new(x_min, y_min, x_max + 1, y_max + 1)
        })
        .collect()
}

/// Greedy non-maximum suppression with box area as the score. Boxes are
/// visited largest first, ties broken by (y_min, x_min); a box is kept iff
/// its IoU with every already-kept box is at most `iou_threshold`. The
/// output preserves keep order.
pub fn nms(boxes: &[PixelBox], iou_threshold: f64) -> Vec<PixelBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        boxes[b]
            .area()
            .cmp(&boxes[a].area())
            .then_with(|| (boxes[a].y_min, boxes[a].x_min).cmp(&(boxes[b].y_min, boxes[b].x_min)))
    });
    let mut kept: Vec<PixelBox> = Vec::new();
    for &i in &order {
        if kept.iter().all(|k| iou(k, &boxes[i]) <= iou_threshold) {
            kept.push(boxes[i]);
        }
    }
    kept
}

/// Segment, label, bound, and NMS-refine the light regions of one image.
pub fn detect_light_boxes(
    image: &RgbImage,
    params: &ThresholdParams,
    iou_threshold: f64,
) -> Vec<PixelBox> {
    let mask = segment_specular(image, params);
    let boxes = bounding_boxes(&find_contours(&mask));
    nms(&boxes, iou_threshold)
}

/// Crops `bbox` out of the image, keeping the grayscale value
/// (`round(0.299 r + 0.587 g + 0.114 b)`) where the mask is true and 0
/// elsewhere.
pub fn extract_light_patch(
    image: &RgbImage,
    mask: &BinaryMask,
    bbox: &PixelBox,
    source_id: &str,
) -> Result<LightPatch, BankError> {
    assert_eq!(
        (mask.width(), mask.height()),
        (image.width(), image.height()),
        "mask must match image dimensions"
    );
    if !bbox.fits_in(image.width(), image.height()) {
        return Err(BankError::BoxOutOfBounds {
            bbox: *bbox,
            width: image.width(),
            height: image.height(),
        });
    }
    let mut pixels = Vec::with_capacity(bbox.area() as usize);
    let mut any = false;
    for y in bbox.y_min..bbox.y_max {
        for x in bbox.x_min..bbox.x_max {
            let value = if mask.get(x, y) {
                let [r, g, b] = image.pixel(x, y);
                let luma = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
                luma.round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            any |= value > 0;
            pixels.push(value);
        }
    }
    if !any {
        return Err(BankError::EmptyPatch { bbox: *bbox });
    }
    Ok(LightPatch::from_parts(
        bbox.width(),
        bbox.height(),
        pixels,
        PatchProvenance {
            source_id: source_id.to_string(),
            source_box: *bbox,
            chain: Vec::new(),
            round: 0,
        },
    ))
}

/// A corpus image paired with its dataset key, used for provenance.
#[derive(Debug, Clone)]
pub struct CorpusImage {
    pub id: String,
    pub image: RgbImage,
}

/// Builds the bank: segment every corpus image, crop all candidate light
/// patches, vary each candidate's intensity with a random factor, select
/// `crop_count` crops across the size spectrum, then run the three-round
/// transform schedule. The result always holds `12 * crop_count` patches.
pub fn build_bank(
    corpus: &[CorpusImage],
    params: &ThresholdParams,
    nms_iou: f64,
    crop_count: usize,
    seed: u64,
) -> Result<LightBank, BankError> {
    assert!(crop_count >= 1, "crop_count must be >= 1");
    let mut rng = rng::derive(seed, "bank");

    let mut candidates: Vec<LightPatch> = Vec::new();
    for corpus_image in corpus {
        let mask = segment_specular(&corpus_image.image, params);
        let boxes = nms(&bounding_boxes(&find_contours(&mask)), nms_iou);
        for bbox in &boxes {
            match extract_light_patch(&corpus_image.image, &mask, bbox, &corpus_image.id) {
                Ok(patch) => candidates.push(patch),
                Err(BankError::EmptyPatch { .. }) => continue,
                Err(other) => return Err(other),
            }
        }
    }

    let candidates: Vec<LightPatch> = candidates
        .into_iter()
        .map(|patch| {
            let factor = rng.random_range(INTENSITY_RANGE.0..=INTENSITY_RANGE.1);
            vary_intensity(&patch, factor).expect("drawn factor is in range")
        })
        .collect();

    if candidates.len() < crop_count {
        return Err(BankError::InsufficientCandidates {
            found: candidates.len(),
            needed: crop_count,
            min_channel: params.min_channel,
            max_chroma_spread: params.max_chroma_spread,
        });
    }

    // Rank by area descending (stable, so extraction order breaks ties) and
    // take an even stride through the ranking so the selection spans the
    // size spectrum.
    let mut ranked: Vec<usize> = (0..candidates.len()).collect();
    ranked.sort_by(|&a, &b| {
        let area = |p: &LightPatch| p.width() as u64 * p.height() as u64;
        area(&candidates[b]).cmp(&area(&candidates[a]))
    });
    let total = ranked.len();
    let originals: Vec<LightPatch> = (0..crop_count)
        .map(|i| candidates[ranked[i * total / crop_count]].clone())
        .collect();

    // Round 1: four transform sets over the originals.
    let hflips: Vec<LightPatch> = originals.iter().map(flip_horizontal).collect();
    let vflips: Vec<LightPatch> = originals.iter().map(flip_vertical).collect();
    let scaled: Vec<LightPatch> = originals
        .iter()
        .map(|p| random_scale(p, &mut rng))
        .collect();
    let rotated: Vec<LightPatch> = originals
        .iter()
        .map(|p| random_rotate(p, &mut rng))
        .collect();

    // Round 2: scale and rotate the flipped sets.
    let scaled_h: Vec<LightPatch> = hflips.iter().map(|p| random_scale(p, &mut rng)).collect();
    let scaled_v: Vec<LightPatch> = vflips.iter().map(|p| random_scale(p, &mut rng)).collect();
    let rotated_h: Vec<LightPatch> = hflips.iter().map(|p| random_rotate(p, &mut rng)).collect();
    let rotated_v: Vec<LightPatch> = vflips.iter().map(|p| random_rotate(p, &mut rng)).collect();

    // Round 3: scale the three rotated sets.
    let rescaled_rot: Vec<LightPatch> = rotated.iter().map(|p| random_scale(p, &mut rng)).collect();
    let rescaled_rot_v: Vec<LightPatch> = rotated_v
        .iter()
        .map(|p| random_scale(p, &mut rng))
        .collect();
    let rescaled_rot_h: Vec<LightPatch> = rotated_h
        .iter()
        .map(|p| random_scale(p, &mut rng))
        .collect();

    let mut patches = Vec::with_capacity(12 * crop_count);
    patches.extend(originals.into_iter().map(|p| p.with_round(0)));
    for set in [hflips, vflips, scaled, rotated] {
        patches.extend(set.into_iter().map(|p| p.with_round(1)));
    }
    for set in [scaled_h, scaled_v, rotated_h, rotated_v] {
        patches.extend(set.into_iter().map(|p| p.with_round(2)));
    }
    for set in [rescaled_rot, rescaled_rot_v, rescaled_rot_h] {
        patches.extend(set.into_iter().map(|p| p.with_round(3)));
    }
    debug_assert_eq!(patches.len(), 12 * crop_count);

    Ok(LightBank {
        patches,
        seed,
        crop_count,
    })
}
