//! Sliding-window placement: enumerate every window position a patch fits
//! without touching a prohibited pixel, pick one at random, and paste the
//! patch's non-black pixels.
//!
//! The window grid is anchored at the top-left corner and steps by the
//! patch dimension plus one in each axis. Fit tests run against a summed
//! area table of the prohibition mask, so each window costs O(1); the test
//! suite checks the result against a naive per-window scan.

use rand::Rng;
use thiserror::Error;

use crate::annot::PolypAnnotation;
use crate::lightbank::{LightBank, LightPatch};
use crate::prohibit::{build_prohibition, ProhibitError, ProhibitionMask, ProhibitionParams};
use crate::raster::{BinaryMask, RgbImage};

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("fit list is empty")]
    EmptyFitList,
    #[error("patch {patch_width}x{patch_height} at ({x},{y}) exceeds image {image_width}x{image_height}")]
    OutOfBounds {
        patch_width: u32,
        patch_height: u32,
        x: u32,
        y: u32,
        image_width: u32,
        image_height: u32,
    },
    #[error("light bank contains no patches")]
    EmptyBank,
    #[error(transparent)]
    Prohibit(#[from] ProhibitError),
}

/// A committed patch placement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    /// Index into the bank.
    pub patch_id: usize,
    pub top_left: (u32, u32),
    pub patch_width: u32,
    pub patch_height: u32,
}

/// Result of trying to augment one image.
#[derive(Debug, Clone)]
pub enum AugmentOutcome {
    Augmented {
        image: RgbImage,
        placement: Placement,
        /// Patch ids drawn, in order; the last one succeeded.
        attempts: Vec<usize>,
    },
    Skipped {
        /// Retries actually used (equals the configured maximum).
        retries: u32,
        attempts: Vec<usize>,
    },
}

/// Summed area table over a boolean mask; `true` counts as 1. Built once
/// per image and queried per candidate window.
pub struct IntegralMask {
    width: u32,
    height: u32,
    // (width + 1) x (height + 1); sums[y][x] covers [0, x) x [0, y).
    sums: Vec<u64>,
}

impl IntegralMask {
    pub fn new(mask: &BinaryMask) -> Self {
        let w = mask.width() as usize;
        let h = mask.height() as usize;
        let mut sums = vec![0u64; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += mask.get(x as u32, y as u32) as u64;
                sums[(y + 1) * (w + 1) + (x + 1)] = sums[y * (w + 1) + (x + 1)] + row;
            }
        }
        Self {
            width: mask.width(),
            height: mask.height(),
            sums,
        }
    }

    /// Number of true bits in the window with top-left (x, y).
    pub fn window_true_count(&self, x: u32, y: u32, w: u32, h: u32) -> u64 {
        debug_assert!(x + w <= self.width && y + h <= self.height);
        let stride = self.width as usize + 1;
        let (x0, y0, x1, y1) = (x as usize, y as usize, (x + w) as usize, (y + h) as usize);
        self.sums[y1 * stride + x1] + self.sums[y0 * stride + x0]
            - self.sums[y0 * stride + x1]
            - self.sums[y1 * stride + x0]
    }

    /// All window top-lefts where a `patch_w x patch_h` patch covers no
    /// prohibited bit. The grid starts at (0, 0) and steps by dimension
    /// plus one; visitation is left-to-right, then down.
    pub fn enumerate_fits(&self, patch_w: u32, patch_h: u32) -> Vec<(u32, u32)> {
        assert!(patch_w >= 1 && patch_h >= 1);
        let mut fits = Vec::new();
        if patch_w > self.width || patch_h > self.height {
            return fits;
        }
        let mut y = 0;
        while y + patch_h <= self.height {
            let mut x = 0;
            while x + patch_w <= self.width {
                if self.window_true_count(x, y, patch_w, patch_h) == 0 {
                    fits.push((x, y));
                }
                x += patch_w + 1;
            }
            y += patch_h + 1;
        }
        fits
    }
}

/// Convenience wrapper building the summed area table for a single query.
pub fn enumerate_fits(mask: &BinaryMask, patch_w: u32, patch_h: u32) -> Vec<(u32, u32)> {
    IntegralMask::new(mask).enumerate_fits(patch_w, patch_h)
}

/// Uniform choice from the fit list; deterministic given the generator
/// state and list order.
pub fn choose_placement<R: Rng>(
    fits: &[(u32, u32)],
    rng: &mut R,
) -> Result<(u32, u32), PlacementError> {
    if fits.is_empty() {
        return Err(PlacementError::EmptyFitList);
    }
    Ok(fits[rng.random_range(0..fits.len())])
}

/// Pastes the patch's non-black pixels: value v > 0 turns the destination
/// pixel into the achromatic (v, v, v); zeros leave it untouched.
pub fn paste_patch(
    image: &RgbImage,
    patch: &LightPatch,
    top_left: (u32, u32),
) -> Result<RgbImage, PlacementError> {
    let (x, y) = top_left;
    if x + patch.width() > image.width() || y + patch.height() > image.height() {
        return Err(PlacementError::OutOfBounds {
            patch_width: patch.width(),
            patch_height: patch.height(),
            x,
            y,
            image_width: image.width(),
            image_height: image.height(),
        });
    }
    let mut out = image.clone();
    for py in 0..patch.height() {
        for px in 0..patch.width() {
            let v = patch.value(px, py);
            if v > 0 {
                out.set_pixel(x + px, y + py, [v, v, v]);
            }
        }
    }
    Ok(out)
}

/// Augments one image: build its prohibition mask once, then up to
/// `max_retries` times draw a random patch from the bank and look for fits;
/// the first patch with a non-empty fit list is pasted at a random fit.
/// Exactly one patch is placed per augmented image.
pub fn augment_image<R: Rng>(
    image: &RgbImage,
    annotations: &[PolypAnnotation],
    bank: &LightBank,
    params: &ProhibitionParams,
    rng: &mut R,
    max_retries: u32,
) -> Result<AugmentOutcome, PlacementError> {
    assert!(max_retries >= 1, "max_retries must be >= 1");
    if bank.is_empty() {
        return Err(PlacementError::EmptyBank);
    }
    let prohibition = build_prohibition(image, annotations, params)?;
    augment_with_prohibition(image, &prohibition, bank, rng, max_retries)
}

/// Same as [`augment_image`] but reuses an already-built prohibition mask.
pub fn augment_with_prohibition<R: Rng>(
    image: &RgbImage,
    prohibition: &ProhibitionMask,
    bank: &LightBank,
    rng: &mut R,
    max_retries: u32,
) -> Result<AugmentOutcome, PlacementError> {
    if bank.is_empty() {
        return Err(PlacementError::EmptyBank);
    }
    let integral = IntegralMask::new(prohibition.mask());
    let mut attempts = Vec::new();
    for _ in 0..max_retries {
        let patch_id = rng.random_range(0..bank.len());
        attempts.push(patch_id);
        let patch = &bank.patches()[patch_id];
        let fits = integral.enumerate_fits(patch.width(), patch.height());
        if fits.is_empty() {
            continue;
        }
        let top_left = choose_placement(&fits, rng)?;
        let augmented = paste_patch(image, patch, top_left)?;
        return Ok(AugmentOutcome::Augmented {
            image: augmented,
            placement: Placement {
                patch_id,
                top_left,
                patch_width: patch.width(),
                patch_height: patch.height(),
            },
            attempts,
        });
    }
    Ok(AugmentOutcome::Skipped {
        retries: max_retries,
        attempts,
    })
}

/// Debug view: the augmented image with a yellow circle around the
/// placement centroid.
pub fn render_placement_debug(image: &RgbImage, placement: &Placement) -> RgbImage {
    let cx = placement.top_left.0 as f64 + placement.patch_width as f64 / 2.0;
    let cy = placement.top_left.1 as f64 + placement.patch_height as f64 / 2.0;
    let radius = (placement.patch_width.max(placement.patch_height) as f64) / 2.0 + 6.0;
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            let dist = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
            if (dist - radius).abs() <= 1.0 {
                out.set_pixel(x, y, [255, 255, 0]);
            }
        }
    }
    out
}
