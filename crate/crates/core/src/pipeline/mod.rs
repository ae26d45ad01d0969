//! Dataset-level orchestration: build and persist the light bank, augment a
//! corpus with deterministic patch placement, and re-validate an emitted
//! dataset against the placement rules.
//!
//! Augmented images replace their originals in the output tree; unselected
//! images pass through byte-for-byte; images whose placement never fits are
//! excluded from the output entirely, and images without annotations are
//! dropped. All of it is recorded in `manifest.json`.

mod manifest;

pub use manifest::{
    BankRef, ConfigSnapshot, Counts, ImageRecord, PlacementRecord, RecordStatus, RunManifest,
    IMAGES_SUBDIR, LABELS_SUBDIR, RUN_MANIFEST,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::annot::{parse_voc, write_labels, AnnotError, ClassMap, PolypAnnotation};
use crate::lightbank::{
    bank_exists, build_bank, load_bank, save_bank, BankError, CorpusImage, LightBank,
    ThresholdParams,
};
use crate::placement::{augment_with_prohibition, AugmentOutcome, PlacementError};
use crate::prohibit::{
    build_prohibition, mark_black_borders, mark_light_regions, render_debug, ProhibitionParams,
};
use crate::raster::{load_image, save_image, PixelBox, RasterError, RgbImage};
use crate::rng;

const IMAGE_EXTS: &[&str] = &["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no bank at {0} (run `wlsr build-bank` first)")]
    MissingBank(PathBuf),
    #[error("no corpus images found under {0}")]
    EmptyCorpus(PathBuf),
    #[error("no image/annotation pairs between {images_dir} and {voc_dir}")]
    NoPairs {
        images_dir: PathBuf,
        voc_dir: PathBuf,
    },
    #[error("run manifest not found at {0}")]
    ManifestMissing(PathBuf),
    #[error("manifest {path} is unusable: {reason}")]
    InvalidManifest { path: PathBuf, reason: String },
    #[error("bad manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("annotation {path}: {source}")]
    Annot { path: PathBuf, source: AnnotError },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
}

impl From<crate::prohibit::ProhibitError> for PipelineError {
    fn from(err: crate::prohibit::ProhibitError) -> Self {
        PipelineError::Placement(PlacementError::Prohibit(err))
    }
}

/// Configuration for `wlsr build-bank`.
#[derive(Debug, Clone)]
pub struct BankConfig {
    pub images_dir: PathBuf,
    pub out_dir: PathBuf,
    pub crop_count: usize,
    pub seed: u64,
    pub threshold: ThresholdParams,
    pub nms_iou: f64,
}

/// Configuration for `wlsr augment`.
#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub images_dir: PathBuf,
    pub voc_dir: PathBuf,
    pub bank_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Share of eligible images whose originals are replaced by augmented
    /// versions, in (0, 1].
    pub fraction: f64,
    pub seed: u64,
    pub max_retries: u32,
    pub prohibition: ProhibitionParams,
    pub voc_one_based: bool,
    pub class_list: Option<PathBuf>,
    /// Where to write orange prohibition views and circled placements.
    pub debug_dir: Option<PathBuf>,
    /// Worker threads; `None` uses the rayon default. Not part of the
    /// output: any worker count yields byte-identical trees.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct BankBuildSummary {
    pub patch_count: usize,
    pub crop_count: usize,
    pub out_dir: PathBuf,
}

/// Builds the light bank from every image under `images_dir` (sorted by
/// file name) and persists it to `out_dir`.
pub fn cmd_build_bank(config: &BankConfig) -> Result<BankBuildSummary, PipelineError> {
    let files = list_files(&config.images_dir, IMAGE_EXTS)?;
    if files.is_empty() {
        return Err(PipelineError::EmptyCorpus(config.images_dir.clone()));
    }
    let corpus: Vec<CorpusImage> = files
        .par_iter()
        .map(|name| {
            let image = load_image(&config.images_dir.join(name))?;
            Ok(CorpusImage {
                id: stem_of(name),
                image,
            })
        })
        .collect::<Result<_, PipelineError>>()?;

    let bank = build_bank(
        &corpus,
        &config.threshold,
        config.nms_iou,
        config.crop_count,
        config.seed,
    )?;
    save_bank(&bank, &config.out_dir)?;
    Ok(BankBuildSummary {
        patch_count: bank.len(),
        crop_count: config.crop_count,
        out_dir: config.out_dir.clone(),
    })
}

enum WorkItem {
    /// Image file with no annotation file next to it.
    Unpaired { file: String },
    Paired {
        file: String,
        annotations: Vec<PolypAnnotation>,
        selected: bool,
    },
}

/// Augments the corpus: pairs images with VOC files by basename, drops
/// unannotated images, selects `floor(fraction * N)` of the remainder by
/// seeded shuffle, augments those, passes the rest through unchanged, and
/// writes images, YOLO labels, and the run manifest under `out_dir`.
pub fn cmd_augment(config: &AugmentConfig) -> Result<RunManifest, PipelineError> {
    assert!(
        config.fraction > 0.0 && config.fraction <= 1.0,
        "fraction must be in (0, 1]"
    );
    assert!(config.max_retries >= 1, "max_retries must be >= 1");

    if !bank_exists(&config.bank_dir) {
        return Err(PipelineError::MissingBank(config.bank_dir.clone()));
    }
    let bank = load_bank(&config.bank_dir)?;
    if bank.is_empty() {
        return Err(PlacementError::EmptyBank.into());
    }
    let classes = match &config.class_list {
        Some(path) => ClassMap::from_file(path).map_err(|source| PipelineError::Annot {
            path: path.clone(),
            source,
        })?,
        None => ClassMap::default(),
    };

    let image_files = list_files(&config.images_dir, IMAGE_EXTS)?;
    let xml_files = list_files(&config.voc_dir, &["xml"])?;

    let mut images_by_stem: BTreeMap<String, String> = BTreeMap::new();
    for file in image_files {
        images_by_stem.entry(stem_of(&file)).or_insert(file);
    }
    let mut xml_by_stem: BTreeMap<String, String> = BTreeMap::new();
    for file in xml_files {
        xml_by_stem.entry(stem_of(&file)).or_insert(file);
    }

    let unpaired_images: Vec<String> = images_by_stem
        .iter()
        .filter(|(stem, _)| !xml_by_stem.contains_key(*stem))
        .map(|(_, file)| file.clone())
        .collect();
    let unpaired_annotations: Vec<String> = xml_by_stem
        .iter()
        .filter(|(stem, _)| !images_by_stem.contains_key(*stem))
        .map(|(_, file)| file.clone())
        .collect();

    let paired_stems: Vec<String> = images_by_stem
        .keys()
        .filter(|stem| xml_by_stem.contains_key(*stem))
        .cloned()
        .collect();
    if paired_stems.is_empty() {
        return Err(PipelineError::NoPairs {
            images_dir: config.images_dir.clone(),
            voc_dir: config.voc_dir.clone(),
        });
    }

    // Parse every paired annotation up front; parse failures are fatal.
    let mut annotations_by_stem: BTreeMap<String, Vec<PolypAnnotation>> = BTreeMap::new();
    for stem in &paired_stems {
        let path = config.voc_dir.join(&xml_by_stem[stem]);
        let text = fs::read_to_string(&path).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
        let anns = parse_voc(&text, config.voc_one_based, &classes)
            .map_err(|source| PipelineError::Annot { path, source })?;
        annotations_by_stem.insert(stem.clone(), anns);
    }

    // Eligible = paired images that still have annotations; the seeded
    // shuffle of this sorted list decides who gets augmented.
    let eligible: Vec<String> = paired_stems
        .iter()
        .filter(|stem| !annotations_by_stem[*stem].is_empty())
        .cloned()
        .collect();
    let mut shuffled = eligible.clone();
    shuffled.shuffle(&mut rng::derive(config.seed, "select"));
    let selected_count = (config.fraction * eligible.len() as f64).floor() as usize;
    let selected: BTreeSet<String> = shuffled.into_iter().take(selected_count).collect();

    let images_out = config.out_dir.join(IMAGES_SUBDIR);
    let labels_out = config.out_dir.join(LABELS_SUBDIR);
    for dir in [&images_out, &labels_out] {
        fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    if let Some(debug_dir) = &config.debug_dir {
        fs::create_dir_all(debug_dir).map_err(|source| PipelineError::Io {
            path: debug_dir.clone(),
            source,
        })?;
    }

    let mut work: BTreeMap<String, WorkItem> = BTreeMap::new();
    for (stem, file) in &images_by_stem {
        let item = if let Some(annotations) = annotations_by_stem.get(stem) {
            WorkItem::Paired {
                file: file.clone(),
                annotations: annotations.clone(),
                selected: selected.contains(stem),
            }
        } else {
            WorkItem::Unpaired { file: file.clone() }
        };
        work.insert(stem.clone(), item);
    }
    let work: Vec<(String, WorkItem)> = work.into_iter().collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .expect("worker pool");
    let records: Vec<Result<ImageRecord, PipelineError>> = pool.install(|| {
        work.par_iter()
            .map(|(stem, item)| process_image(stem, item, config, &bank))
            .collect()
    });
    let records: Vec<ImageRecord> = records.into_iter().collect::<Result<_, _>>()?;

    let tally = |status: RecordStatus| records.iter().filter(|r| r.status == status).count();
    let counts = Counts {
        input: records.len(),
        dropped_no_annotation: tally(RecordStatus::DroppedNoAnnotation),
        selected: selected_count,
        augmented: tally(RecordStatus::Augmented),
        passed_through: tally(RecordStatus::PassedThrough),
        skipped_no_fit: tally(RecordStatus::SkippedNoFit),
    };

    let run = RunManifest {
        schema_version: 1,
        config: ConfigSnapshot {
            images_dir: config.images_dir.display().to_string(),
            voc_dir: config.voc_dir.display().to_string(),
            bank_dir: config.bank_dir.display().to_string(),
            fraction: config.fraction,
            seed: config.seed,
            max_retries: config.max_retries,
            prohibition: config.prohibition,
            voc_one_based: config.voc_one_based,
        },
        bank: BankRef {
            dir: config.bank_dir.display().to_string(),
            seed: bank.seed(),
            patch_count: bank.len(),
        },
        counts,
        unpaired_images,
        unpaired_annotations,
        records,
    };
    debug_assert!(run.verify_counts());

    let manifest_path = config.out_dir.join(RUN_MANIFEST);
    let json = serde_json::to_string_pretty(&run).expect("manifest serializes");
    fs::write(&manifest_path, json).map_err(|source| PipelineError::Io {
        path: manifest_path,
        source,
    })?;
    Ok(run)
}

fn process_image(
    stem: &str,
    item: &WorkItem,
    config: &AugmentConfig,
    bank: &LightBank,
) -> Result<ImageRecord, PipelineError> {
    let (file, annotations, selected) = match item {
        WorkItem::Unpaired { file } => {
            return Ok(ImageRecord {
                basename: stem.to_string(),
                source_image: file.clone(),
                status: RecordStatus::DroppedNoAnnotation,
                output_image: None,
                placement: None,
                attempts: Vec::new(),
                retries: None,
            })
        }
        WorkItem::Paired {
            file,
            annotations,
            selected,
        } => (file, annotations, *selected),
    };

    if annotations.is_empty() {
        return Ok(ImageRecord {
            basename: stem.to_string(),
            source_image: file.clone(),
            status: RecordStatus::DroppedNoAnnotation,
            output_image: None,
            placement: None,
            attempts: Vec::new(),
            retries: None,
        });
    }

    let source_path = config.images_dir.join(file);
    let labels_path = config
        .out_dir
        .join(LABELS_SUBDIR)
        .join(format!("{stem}.txt"));

    if !selected {
        // Pass-through: copy the original bytes verbatim.
        let dest = config.out_dir.join(IMAGES_SUBDIR).join(file);
        fs::copy(&source_path, &dest).map_err(|source| PipelineError::Io {
            path: dest.clone(),
            source,
        })?;
        write_labels(annotations, &labels_path).map_err(|source| PipelineError::Annot {
            path: labels_path,
            source,
        })?;
        return Ok(ImageRecord {
            basename: stem.to_string(),
            source_image: file.clone(),
            status: RecordStatus::PassedThrough,
            output_image: Some(format!("{IMAGES_SUBDIR}/{file}")),
            placement: None,
            attempts: Vec::new(),
            retries: None,
        });
    }

    let image = load_image(&source_path)?;
    let prohibition = build_prohibition(&image, annotations, &config.prohibition)?;
    if let Some(debug_dir) = &config.debug_dir {
        let view = render_debug(&image, &prohibition)?;
        save_image(&view, &debug_dir.join(format!("{stem}.prohibit.png")))?;
    }

    let mut image_rng = rng::for_image(config.seed, stem);
    let outcome = augment_with_prohibition(
        &image,
        &prohibition,
        bank,
        &mut image_rng,
        config.max_retries,
    )?;

    match outcome {
        AugmentOutcome::Augmented {
            image: augmented,
            placement,
            attempts,
        } => {
            let out_name = format!("{stem}.png");
            let dest = config.out_dir.join(IMAGES_SUBDIR).join(&out_name);
            save_image(&augmented, &dest)?;
            write_labels(annotations, &labels_path).map_err(|source| PipelineError::Annot {
                path: labels_path,
                source,
            })?;
            if let Some(debug_dir) = &config.debug_dir {
                let circled = crate::placement::render_placement_debug(&augmented, &placement);
                save_image(&circled, &debug_dir.join(format!("{stem}.placed.png")))?;
            }
            Ok(ImageRecord {
                basename: stem.to_string(),
                source_image: file.clone(),
                status: RecordStatus::Augmented,
                output_image: Some(format!("{IMAGES_SUBDIR}/{out_name}")),
                placement: Some(PlacementRecord {
                    patch_id: placement.patch_id,
                    x: placement.top_left.0,
                    y: placement.top_left.1,
                    patch_width: placement.patch_width,
                    patch_height: placement.patch_height,
                }),
                attempts,
                retries: None,
            })
        }
        AugmentOutcome::Skipped { retries, attempts } => Ok(ImageRecord {
            basename: stem.to_string(),
            source_image: file.clone(),
            status: RecordStatus::SkippedNoFit,
            output_image: None,
            placement: None,
            attempts,
            retries: Some(retries),
        }),
    }
}

/// One confirmed placement-rule breach found by `cmd_validate`.
#[derive(Debug, Clone)]
pub struct Violation {
    pub basename: String,
    pub kind: ViolationKind,
    pub pixel_count: usize,
    pub example: (u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    PolypBox,
    LightBox,
    Border,
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ViolationKind::PolypBox => write!(f, "polyp-box"),
            ViolationKind::LightBox => write!(f, "light-box"),
            ViolationKind::Border => write!(f, "black-border"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub augmented_checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-verifies an augmented output tree: for every augmented image, the
/// pixels that differ from the original must avoid the original's polyp
/// boxes, detected light boxes, and black-border region.
pub fn cmd_validate(out_dir: &Path) -> Result<ValidationReport, PipelineError> {
    let manifest_path = out_dir.join(RUN_MANIFEST);
    if !manifest_path.is_file() {
        return Err(PipelineError::ManifestMissing(manifest_path));
    }
    let raw = fs::read_to_string(&manifest_path).map_err(|source| PipelineError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let run: RunManifest =
        serde_json::from_str(&raw).map_err(|source| PipelineError::Manifest {
            path: manifest_path.clone(),
            source,
        })?;

    let images_dir = PathBuf::from(&run.config.images_dir);
    let voc_dir = PathBuf::from(&run.config.voc_dir);
    let params = run.config.prohibition;

    let augmented: Vec<&ImageRecord> = run
        .records
        .iter()
        .filter(|r| r.status == RecordStatus::Augmented)
        .collect();

    let per_record: Vec<Result<Vec<Violation>, PipelineError>> = augmented
        .par_iter()
        .map(|record| {
            let output_rel =
                record
                    .output_image
                    .as_ref()
                    .ok_or_else(|| PipelineError::InvalidManifest {
                        path: manifest_path.clone(),
                        reason: format!("augmented record {} has no output_image", record.basename),
                    })?;
            let original = load_image(&images_dir.join(&record.source_image))?;
            let output = load_image(&out_dir.join(output_rel))?;
            if (original.width(), original.height()) != (output.width(), output.height()) {
                return Err(PipelineError::InvalidManifest {
                    path: manifest_path.clone(),
                    reason: format!(
                        "{}: output dimensions differ from the original",
                        record.basename
                    ),
                });
            }

            let xml_path = voc_dir.join(format!("{}.xml", record.basename));
            let text = fs::read_to_string(&xml_path).map_err(|source| PipelineError::Io {
                path: xml_path.clone(),
                source,
            })?;
            let annotations = parse_voc(&text, run.config.voc_one_based, &ClassMap::default())
                .map_err(|source| PipelineError::Annot {
                    path: xml_path,
                    source,
                })?;
            let polyp_boxes: Vec<PixelBox> = annotations.iter().map(|a| a.bbox).collect();
            let light_boxes = mark_light_regions(&original, &params.threshold, params.nms_iou);
            let border =
                mark_black_borders(&original, params.black_threshold, params.margin_fraction);

            Ok(check_changed_pixels(
                &record.basename,
                &original,
                &output,
                &polyp_boxes,
                &light_boxes,
                &border,
            ))
        })
        .collect();

    let mut report = ValidationReport {
        augmented_checked: augmented.len(),
        violations: Vec::new(),
    };
    for result in per_record {
        report.violations.extend(result?);
    }
    Ok(report)
}

fn check_changed_pixels(
    basename: &str,
    original: &RgbImage,
    output: &RgbImage,
    polyp_boxes: &[PixelBox],
    light_boxes: &[PixelBox],
    border: &crate::raster::BinaryMask,
) -> Vec<Violation> {
    let mut hits: [(usize, Option<(u32, u32)>); 3] = [(0, None), (0, None), (0, None)];
    for y in 0..original.height() {
        for x in 0..original.width() {
            if original.pixel(x, y) == output.pixel(x, y) {
                continue;
            }
            if polyp_boxes.iter().any(|b| b.contains(x, y)) {
                hits[0].0 += 1;
                hits[0].1.get_or_insert((x, y));
            }
            if light_boxes.iter().any(|b| b.contains(x, y)) {
                hits[1].0 += 1;
                hits[1].1.get_or_insert((x, y));
            }
            if border.get(x, y) {
                hits[2].0 += 1;
                hits[2].1.get_or_insert((x, y));
            }
        }
    }
    let kinds = [
        ViolationKind::PolypBox,
        ViolationKind::LightBox,
        ViolationKind::Border,
    ];
    kinds
        .into_iter()
        .zip(hits)
        .filter(|(_, (count, _))| *count > 0)
        .map(|(kind, (count, example))| Violation {
            basename: basename.to_string(),
            kind,
            pixel_count: count,
            example: example.unwrap(),
        })
        .collect()
}

fn stem_of(file: &str) -> String {
    Path::new(file)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file.to_string())
}

fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<String>, PipelineError> {
    let entries = fs::read_dir(dir).map_err(|source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| PipelineError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        if !entry.file_type().map(|t| t.is_file()).unwrap_or(false) {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let matches = Path::new(&name)
            .extension()
            .map(|e| {
                let ext = e.to_string_lossy().to_lowercase();
                exts.iter().any(|&want| want == ext)
            })
            .unwrap_or(false);
        if matches {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

#[cfg(test)]
mod tests;
