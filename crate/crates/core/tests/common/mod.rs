//! Shared helpers for integration tests: deterministic synthetic corpora
//! that mimic colonoscopy frames (tissue-colored base, black border ring,
//! bright specular blobs, annotated polyp boxes) plus the independent
//! oracles the acceptance criteria check against.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use wlsr_core::raster::{save_image, BinaryMask, PixelBox, RgbImage};

/// Shape of one synthetic dataset frame.
#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    /// Black border ring thickness; 0 disables the ring.
    pub border: u32,
    /// Specular blobs, each confined to its own horizontal band so blobs
    /// never merge into one component.
    pub lights: u32,
    pub polyps: u32,
}

impl SynthSpec {
    pub fn frame() -> Self {
        Self {
            width: 640,
            height: 480,
            border: 24,
            lights: 3,
            polyps: 1,
        }
    }

    pub fn small() -> Self {
        Self {
            width: 320,
            height: 240,
            border: 12,
            lights: 2,
            polyps: 1,
        }
    }
}

/// Shades of white that pass the default segmentation thresholds.
const LIGHT_PALETTE: [[u8; 3]; 4] = [
    [255, 255, 255],
    [235, 231, 238],
    [214, 210, 220],
    [225, 225, 205],
];

pub fn paint_rect(image: &mut RgbImage, bbox: PixelBox, rgb: [u8; 3]) {
    for y in bbox.y_min..bbox.y_max {
        for x in bbox.x_min..bbox.x_max {
            image.set_pixel(x, y, rgb);
        }
    }
}

/// Deterministic tissue-like frame for index `i`. The base color always has
/// r > g > b, so it is never achromatic, never "white" (darkest channel
/// stays far below 200), and never "black" (brightest stays far above 10).
/// Returns the image together with its annotated polyp boxes.
pub fn dataset_image(i: u32, spec: &SynthSpec) -> (RgbImage, Vec<PixelBox>) {
    let (w, h) = (spec.width, spec.height);
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            let r = 120 + ((x * 7 + y * 3 + i * 11) % 40) as u8;
            let g = 60 + ((x * 3 + y * 5 + i * 7) % 30) as u8;
            let b = 40 + ((x + y * 2 + i) % 20) as u8;
            data.extend_from_slice(&[r, g, b]);
        }
    }
    let mut image = RgbImage::from_raw(w, h, data);

    if spec.border > 0 {
        let t = spec.border;
        for y in 0..h {
            for x in 0..w {
                if x < t || x >= w - t || y < t || y >= h - t {
                    image.set_pixel(x, y, [2, 1, 3]);
                }
            }
        }
    }

    // Interior area free of the border ring, with a safety gap.
    let x0 = spec.border + 8;
    let x1 = w - spec.border - 8;
    let y0 = spec.border + 8;
    let y1 = h - spec.border - 8;

    let mut polyps = Vec::new();
    for k in 0..spec.polyps {
        let bw = (w / 6).max(8);
        let bh = (h / 6).max(8);
        let px = x0 + (i * 37 + k * 101) % (x1 - x0 - bw);
        let py = y0 + (i * 53 + k * 71) % (y1 - y0 - bh);
        let bbox = PixelBox::new(px, py, px + bw, py + bh);
        paint_rect(&mut image, bbox, [160, 58, 66]);
        polyps.push(bbox);
    }

    // One horizontal band per light keeps the blobs disjoint.
    let band_h = (y1 - y0) / spec.lights.max(1);
    for j in 0..spec.lights {
        let lw = 4 + (i + j * 5) % 9;
        let lh = 4 + (i * 2 + j * 3) % 7;
        let band_top = y0 + j * band_h;
        let lx = x0 + (i * 31 + j * 67) % (x1 - x0 - lw);
        let ly = band_top + (i * 13 + j * 17) % (band_h - lh).max(1);
        let bbox = PixelBox::new(lx, ly, lx + lw, ly + lh);
        paint_rect(&mut image, bbox, LIGHT_PALETTE[((i + j) % 4) as usize]);
    }

    (image, polyps)
}

pub fn write_voc(dir: &Path, stem: &str, width: u32, height: u32, boxes: &[PixelBox]) {
    let mut objects = String::new();
    for b in boxes {
        objects.push_str(&format!(
            "<object><name>polyp</name><bndbox><xmin>{}</xmin><ymin>{}</ymin>\
             <xmax>{}</xmax><ymax>{}</ymax></bndbox></object>",
            b.x_min, b.y_min, b.x_max, b.y_max
        ));
    }
    let xml = format!(
        "<annotation><filename>{stem}.png</filename>\
         <size><width>{width}</width><height>{height}</height><depth>3</depth></size>\
         {objects}</annotation>"
    );
    fs::write(dir.join(format!("{stem}.xml")), xml).unwrap();
}

/// Writes `count` frames plus their VOC files; returns per-stem polyp boxes.
pub fn write_dataset(
    images_dir: &Path,
    voc_dir: &Path,
    count: u32,
    spec: &SynthSpec,
) -> BTreeMap<String, Vec<PixelBox>> {
    fs::create_dir_all(images_dir).unwrap();
    fs::create_dir_all(voc_dir).unwrap();
    let mut annotations = BTreeMap::new();
    for i in 0..count {
        let stem = format!("frame_{i:04}");
        let (image, polyps) = dataset_image(i, spec);
        save_image(&image, &images_dir.join(format!("{stem}.png"))).unwrap();
        write_voc(voc_dir, &stem, spec.width, spec.height, &polyps);
        annotations.insert(stem, polyps);
    }
    annotations
}

/// Corpus for bank building: frames with many separate blobs and no
/// polyps or borders.
pub fn write_bank_corpus(dir: &Path, count: u32, blobs_per_image: u32) {
    fs::create_dir_all(dir).unwrap();
    let spec = SynthSpec {
        width: 320,
        height: 240,
        border: 0,
        lights: blobs_per_image,
        polyps: 0,
    };
    for i in 0..count {
        let (image, _) = dataset_image(i, &spec);
        save_image(&image, &dir.join(format!("corpus_{i:03}.png"))).unwrap();
    }
}

/// Every file under `dir` keyed by its relative path.
pub fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

pub mod oracle {
    //! Brute-force reference implementations, coded independently of the
    //! library (per-pixel scans, selection loops) so agreement is evidence.

    use wlsr_core::raster::{iou, BinaryMask, PixelBox};

    /// Sliding-window fit search: same stepped grid, but every window is
    /// tested pixel by pixel.
    pub fn naive_fits(mask: &BinaryMask, pw: u32, ph: u32) -> Vec<(u32, u32)> {
        let mut fits = Vec::new();
        if pw > mask.width() || ph > mask.height() {
            return fits;
        }
        let mut y = 0;
        while y + ph <= mask.height() {
            let mut x = 0;
            while x + pw <= mask.width() {
                let mut clear = true;
                'window: for wy in y..y + ph {
                    for wx in x..x + pw {
                        if mask.get(wx, wy) {
                            clear = false;
                            break 'window;
                        }
                    }
                }
                if clear {
                    fits.push((x, y));
                }
                x += pw + 1;
            }
            y += ph + 1;
        }
        fits
    }

    /// Greedy NMS by repeated selection: pick the largest remaining box
    /// (ties: smallest (y_min, x_min), then earliest input position), keep
    /// it iff it overlaps no kept box beyond the threshold.
    pub fn greedy_nms(boxes: &[PixelBox], threshold: f64) -> Vec<PixelBox> {
        let mut remaining: Vec<usize> = (0..boxes.len()).collect();
        let mut kept: Vec<PixelBox> = Vec::new();
        while !remaining.is_empty() {
            let mut best = 0;
            for pos in 1..remaining.len() {
                let a = &boxes[remaining[best]];
                let b = &boxes[remaining[pos]];
                let better = b.area() > a.area()
                    || (b.area() == a.area() && (b.y_min, b.x_min) < (a.y_min, a.x_min));
                if better {
                    best = pos;
                }
            }
            let candidate = boxes[remaining.remove(best)];
            if kept.iter().all(|k| iou(k, &candidate) <= threshold) {
                kept.push(candidate);
            }
        }
        kept
    }

    /// 8-connected components by breadth-first flood fill; each component
    /// comes back sorted.
    pub fn flood_components(mask: &BinaryMask) -> Vec<Vec<(u32, u32)>> {
        let (w, h) = (mask.width(), mask.height());
        let mut seen = vec![false; (w * h) as usize];
        let mut components = Vec::new();
        for sy in 0..h {
            for sx in 0..w {
                let idx = (sy * w + sx) as usize;
                if seen[idx] || !mask.get(sx, sy) {
                    continue;
                }
                seen[idx] = true;
                let mut queue = std::collections::VecDeque::from([(sx, sy)]);
                let mut pixels = Vec::new();
                while let Some((x, y)) = queue.pop_front() {
                    pixels.push((x, y));
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                                continue;
                            }
                            let (nx, ny) = (nx as u32, ny as u32);
                            let nidx = (ny * w + nx) as usize;
                            if !seen[nidx] && mask.get(nx, ny) {
                                seen[nidx] = true;
                                queue.push_back((nx, ny));
                            }
                        }
                    }
                }
                pixels.sort_unstable();
                components.push(pixels);
            }
        }
        components
    }
}

/// Random mask with the given fill probability.
pub fn random_mask<R: rand::Rng>(rng: &mut R, max_side: u32, density: f64) -> BinaryMask {
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let bits = (0..(w * h) as usize)
        .map(|_| rng.random_bool(density))
        .collect();
    BinaryMask::from_bits(w, h, bits)
}

/// Random valid box inside a `bound x bound` field.
pub fn random_box<R: rand::Rng>(rng: &mut R, bound: u32) -> PixelBox {
    let w = rng.random_range(1..=bound / 2);
    let h = rng.random_range(1..=bound / 2);
    let x = rng.random_range(0..=bound - w);
    let y = rng.random_range(0..=bound - h);
    PixelBox::new(x, y, x + w, y + h)
}
