//! Per-image prohibition masks: the pixels a light patch must never cover.
//!
//! Three sources are unioned: detected specular lights (their NMS-refined
//! bounding boxes), annotated polyp boxes, and black pixels inside the
//! outer margins of the frame. Placement logic consumes the boolean mask;
//! the orange rendering exists only as a debug view, so tissue that happens
//! to be near-orange can never corrupt placement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::PolypAnnotation;
use crate::lightbank::{detect_light_boxes, ThresholdParams};
use crate::raster::{BinaryMask, PixelBox, RgbImage};

/// Debug-view sentinel: a color that does not occur during colonoscopy.
pub const DEBUG_ORANGE: [u8; 3] = [255, 165, 0];

#[derive(Debug, Error)]
pub enum ProhibitError {
    #[error("annotation box ({},{},{},{}) exceeds image bounds {width}x{height}", bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max)]
    AnnotationOutOfBounds {
        bbox: PixelBox,
        width: u32,
        height: u32,
    },
    #[error("mask is {mask_width}x{mask_height} but image is {image_width}x{image_height}")]
    DimensionMismatch {
        mask_width: u32,
        mask_height: u32,
        image_width: u32,
        image_height: u32,
    },
}

/// Knobs for prohibition-mask construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProhibitionParams {
    pub threshold: ThresholdParams,
    /// NMS threshold used when refining detected light boxes.
    pub nms_iou: f64,
    /// A pixel is "black" when max(r,g,b) is at most this level. Slightly
    /// above zero to absorb JPEG noise in the borders.
    pub black_threshold: u8,
    /// Outer margin tested for black borders, per dimension.
    pub margin_fraction: f64,
}

impl Default for ProhibitionParams {
    fn default() -> Self {
        Self {
            threshold: ThresholdParams::default(),
            nms_iou: 0.3,
            black_threshold: 10,
            margin_fraction: 0.2,
        }
    }
}

/// Per-pixel placement ban plus the per-source regions it was built from.
#[derive(Debug, Clone)]
pub struct ProhibitionMask {
    mask: BinaryMask,
    light_boxes: Vec<PixelBox>,
    polyp_boxes: Vec<PixelBox>,
    border: BinaryMask,
}

impl ProhibitionMask {
    /// The union mask: true = placement forbidden.
    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn light_boxes(&self) -> &[PixelBox] {
        &self.light_boxes
    }

    pub fn polyp_boxes(&self) -> &[PixelBox] {
        &self.polyp_boxes
    }

    /// Black-border source region.
    pub fn border(&self) -> &BinaryMask {
        &self.border
    }

    pub fn width(&self) -> u32 {
        self.mask.width()
    }

    pub fn height(&self) -> u32 {
        self.mask.height()
    }
}

/// Detects existing specular lights and returns their refined boxes.
pub fn mark_light_regions(
    image: &RgbImage,
    params: &ThresholdParams,
    iou_threshold: f64,
) -> Vec<PixelBox> {
    detect_light_boxes(image, params, iou_threshold)
}

/// Returns the annotated polyp boxes verbatim as prohibited regions,
/// after checking them against the actual image extent.
pub fn mark_polyp_boxes(
    annotations: &[PolypAnnotation],
    image_width: u32,
    image_height: u32,
) -> Result<Vec<PixelBox>, ProhibitError> {
    annotations
        .iter()
        .map(|ann| {
            if ann.bbox.fits_in(image_width, image_height) {
                Ok(ann.bbox)
            } else {
                Err(ProhibitError::AnnotationOutOfBounds {
                    bbox: ann.bbox,
                    width: image_width,
                    height: image_height,
                })
            }
        })
        .collect()
}

/// Marks pixels that are black (max channel <= `black_threshold`) and lie
/// within the outer `margin_fraction` of either dimension.
pub fn mark_black_borders(
    image: &RgbImage,
    black_threshold: u8,
    margin_fraction: f64,
) -> BinaryMask {
    assert!(
        margin_fraction > 0.0 && margin_fraction < 0.5,
        "margin fraction must be in (0, 0.5)"
    );
    let w = image.width();
    let h = image.height();
    let margin_x = (w as f64 * margin_fraction).floor() as u32;
    let margin_y = (h as f64 * margin_fraction).floor() as u32;
    let mut mask = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let in_margin = x < margin_x || x >= w - margin_x || y < margin_y || y >= h - margin_y;
            if !in_margin {
                continue;
            }
            let [r, g, b] = image.pixel(x, y);
            if r.max(g).max(b) <= black_threshold {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Builds the full prohibition mask: union of rasterized light boxes,
/// polyp boxes, and the black-border mask.
pub fn build_prohibition(
    image: &RgbImage,
    annotations: &[PolypAnnotation],
    params: &ProhibitionParams,
) -> Result<ProhibitionMask, ProhibitError> {
    let light_boxes = mark_light_regions(image, &params.threshold, params.nms_iou);
    let polyp_boxes = mark_polyp_boxes(annotations, image.width(), image.height())?;
    let border = mark_black_borders(image, params.black_threshold, params.margin_fraction);

    let mut mask = border.clone();
    for bbox in light_boxes.iter().chain(polyp_boxes.iter()) {
        mask.fill_box(bbox);
    }
    Ok(ProhibitionMask {
        mask,
        light_boxes,
        polyp_boxes,
        border,
    })
}

/// Copy of the image with every prohibited pixel painted orange.
pub fn render_debug(
    image: &RgbImage,
    prohibition: &ProhibitionMask,
) -> Result<RgbImage, ProhibitError> {
    if (prohibition.width(), prohibition.height()) != (image.width(), image.height()) {
        return Err(ProhibitError::DimensionMismatch {
            mask_width: prohibition.width(),
            mask_height: prohibition.height(),
            image_width: image.width(),
            image_height: image.height(),
        });
    }
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            if prohibition.mask.get(x, y) {
                out.set_pixel(x, y, DEBUG_ORANGE);
            }
        }
    }
    Ok(out)
}
