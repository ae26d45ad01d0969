//! Run manifest: the JSON record written next to every augmented dataset.
//!
//! The manifest snapshots the configuration that produced the output and
//! carries one record per input image, so a run can be audited or
//! re-verified later. Timestamps and execution details (worker count,
//! debug directories) are deliberately excluded: two runs with the same
//! inputs, parameters, and seed must produce byte-identical manifests.

use serde::{Deserialize, Serialize};

use crate::prohibit::ProhibitionParams;

pub const RUN_MANIFEST: &str = "manifest.json";
pub const IMAGES_SUBDIR: &str = "images";
pub const LABELS_SUBDIR: &str = "labels";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config: ConfigSnapshot,
    pub bank: BankRef,
    pub counts: Counts,
    pub unpaired_images: Vec<String>,
    pub unpaired_annotations: Vec<String>,
    pub records: Vec<ImageRecord>,
}

/// The parameters that shaped the output, as given on the command line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub images_dir: String,
    pub voc_dir: String,
    pub bank_dir: String,
    pub fraction: f64,
    pub seed: u64,
    pub max_retries: u32,
    pub prohibition: ProhibitionParams,
    pub voc_one_based: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankRef {
    pub dir: String,
    pub seed: u64,
    pub patch_count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub input: usize,
    pub dropped_no_annotation: usize,
    pub selected: usize,
    pub augmented: usize,
    pub passed_through: usize,
    pub skipped_no_fit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordStatus {
    Augmented,
    PassedThrough,
    SkippedNoFit,
    DroppedNoAnnotation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub patch_id: usize,
    pub x: u32,
    pub y: u32,
    pub patch_width: u32,
    pub patch_height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub basename: String,
    /// Source file name (with extension) under the input images directory.
    pub source_image: String,
    pub status: RecordStatus,
    /// Path of the emitted image relative to the output directory; absent
    /// for dropped and skipped records.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub output_image: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub placement: Option<PlacementRecord>,
    /// Patch ids drawn during placement retries, in draw order.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub attempts: Vec<usize>,
    /// Retries consumed before giving up; present only on skipped records.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub retries: Option<u32>,
}

impl RunManifest {
    /// Counts must sum to the record total and match per-status tallies.
    pub fn verify_counts(&self) -> bool {
        let tally =
            |status: RecordStatus| self.records.iter().filter(|r| r.status == status).count();
        self.counts.input == self.records.len()
            && self.counts.augmented == tally(RecordStatus::Augmented)
            && self.counts.passed_through == tally(RecordStatus::PassedThrough)
            && self.counts.skipped_no_fit == tally(RecordStatus::SkippedNoFit)
            && self.counts.dropped_no_annotation == tally(RecordStatus::DroppedNoAnnotation)
            && self.counts.input
                == self.counts.augmented
                    + self.counts.passed_through
                    + self.counts.skipped_no_fit
                    + self.counts.dropped_no_annotation
            && self.counts.selected == self.counts.augmented + self.counts.skipped_no_fit
    }
}
