//! Patch transforms: intensity adjustment, flips, scaling, rotation.
//!
//! Scaling and rotation resample bilinearly and preserve the 0 = background
//! key: an output pixel is 0 only when every source pixel contributing to
//! its sample is 0, and nonzero contributions never round below 1.

use rand::Rng;

use super::{
    BankError, LightPatch, TransformStep, INTENSITY_RANGE, ROTATION_RANGE_DEG, SCALE_RANGE,
};

/// Maps every nonzero pixel `v` to `clamp(round(v * factor), 1, 255)`;
/// background stays 0. `factor` must lie in [0.3, 1.0].
pub fn vary_intensity(patch: &LightPatch, factor: f64) -> Result<LightPatch, BankError> {
    if !(INTENSITY_RANGE.0..=INTENSITY_RANGE.1).contains(&factor) {
        return Err(BankError::FactorOutOfRange(factor));
    }
    let pixels = patch
        .pixels()
        .iter()
        .map(|&v| {
            if v == 0 {
                0
            } else {
                ((v as f64 * factor).round() as i64).clamp(1, 255) as u8
            }
        })
        .collect();
    Ok(derived(
        patch,
        patch.width(),
        patch.height(),
        pixels,
        TransformStep::Intensity { factor },
    ))
}

/// Column-mirrored copy.
pub fn flip_horizontal(patch: &LightPatch) -> LightPatch {
    let (w, h) = (patch.width(), patch.height());
    let mut pixels = Vec::with_capacity(patch.pixels().len());
    for y in 0..h {
        for x in 0..w {
            pixels.push(patch.value(w - 1 - x, y));
        }
    }
    derived(patch, w, h, pixels, TransformStep::FlipH)
}

/// Row-mirrored copy.
pub fn flip_vertical(patch: &LightPatch) -> LightPatch {
    let (w, h) = (patch.width(), patch.height());
    let mut pixels = Vec::with_capacity(patch.pixels().len());
    for y in 0..h {
        for x in 0..w {
            pixels.push(patch.value(x, h - 1 - y));
        }
    }
    derived(patch, w, h, pixels, TransformStep::FlipV)
}

/// Resizes by `factor`; each dimension becomes `max(1, round(dim * factor))`.
pub fn scale_by(patch: &LightPatch, factor: f64) -> LightPatch {
    let new_w = ((patch.width() as f64 * factor).round() as i64).max(1) as u32;
    let new_h = ((patch.height() as f64 * factor).round() as i64).max(1) as u32;
    let ratio_x = patch.width() as f64 / new_w as f64;
    let ratio_y = patch.height() as f64 / new_h as f64;
    let mut pixels = Vec::with_capacity(new_w as usize * new_h as usize);
    for oy in 0..new_h {
        for ox in 0..new_w {
            let sx = (ox as f64 + 0.5) * ratio_x - 0.5;
            let sy = (oy as f64 + 0.5) * ratio_y - 0.5;
            pixels.push(sample_bilinear(patch, sx, sy));
        }
    }
    derived(patch, new_w, new_h, pixels, TransformStep::Scale { factor })
}

/// Rotates about the patch center, expanding the canvas to the rotated
/// bounding extent; exposed corners are filled with 0.
pub fn rotate_by(patch: &LightPatch, degrees: f64) -> LightPatch {
    let theta = degrees.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let w = patch.width() as f64;
    let h = patch.height() as f64;
    let new_w = (w * cos_t.abs() + h * sin_t.abs()).ceil().max(1.0) as u32;
    let new_h = (w * sin_t.abs() + h * cos_t.abs()).ceil().max(1.0) as u32;
    let mut pixels = Vec::with_capacity(new_w as usize * new_h as usize);
    for oy in 0..new_h {
        for ox in 0..new_w {
            let dx = ox as f64 + 0.5 - new_w as f64 / 2.0;
            let dy = oy as f64 + 0.5 - new_h as f64 / 2.0;
            let sx = cos_t * dx + sin_t * dy + w / 2.0 - 0.5;
            let sy = -sin_t * dx + cos_t * dy + h / 2.0 - 0.5;
            pixels.push(sample_bilinear(patch, sx, sy));
        }
    }
    derived(
        patch,
        new_w,
        new_h,
        pixels,
        TransformStep::Rotate { degrees },
    )
}

/// Scale by a factor drawn uniformly from [0.8, 1.2]; the drawn factor is
/// recorded in the provenance chain.
pub fn random_scale<R: Rng>(patch: &LightPatch, rng: &mut R) -> LightPatch {
    let factor = rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1);
    scale_by(patch, factor)
}

/// Rotate by an angle drawn uniformly from [-30, +30] degrees; the drawn
/// angle is recorded in the provenance chain.
pub fn random_rotate<R: Rng>(patch: &LightPatch, rng: &mut R) -> LightPatch {
    let degrees = rng.random_range(ROTATION_RANGE_DEG.0..=ROTATION_RANGE_DEG.1);
    rotate_by(patch, degrees)
}

/// Bilinear sample honoring the background key: returns 0 when all pixels
/// with nonzero interpolation weight are 0 (or out of bounds), otherwise
/// at least 1.
fn sample_bilinear(patch: &LightPatch, sx: f64, sy: f64) -> u8 {
    let x0 = sx.floor() as i64;
    let y0 = sy.floor() as i64;
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ];
    let w = patch.width() as i64;
    let h = patch.height() as i64;
    let mut value = 0.0;
    let mut support = false;
    for (px, py, weight) in taps {
        if weight <= 0.0 || px < 0 || py < 0 || px >= w || py >= h {
            continue;
        }
        let v = patch.value(px as u32, py as u32);
        value += weight * v as f64;
        support |= v > 0;
    }
    if support {
        (value.round() as i64).clamp(1, 255) as u8
    } else {
        0
    }
}

fn derived(
    patch: &LightPatch,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    step: TransformStep,
) -> LightPatch {
    let mut provenance = patch.provenance().clone();
    provenance.chain.push(step);
    LightPatch::from_parts(width, height, pixels, provenance)
}
