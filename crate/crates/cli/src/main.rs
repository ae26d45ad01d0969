//! `wlsr` — build a bank of artificial specular-light patches, augment a
//! polyp-detection dataset with them, and validate the result.
//!
//! Exit codes: 0 on success, 1 on fatal errors, 2 when `validate` finds
//! placement violations.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wlsr_core::lightbank::ThresholdParams;
use wlsr_core::pipeline::{cmd_augment, cmd_build_bank, cmd_validate, AugmentConfig, BankConfig};
use wlsr_core::prohibit::ProhibitionParams;

#[derive(Parser)]
#[command(
    name = "wlsr",
    version,
    about = "Specular-light copy-paste augmentation for polyp detection datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Darkest channel a pixel needs to count as light
    #[arg(long, default_value_t = 200)]
    min_channel: u8,
    /// Largest max-min channel spread a light pixel may have
    #[arg(long, default_value_t = 30)]
    chroma_spread: u8,
    /// IoU threshold for light-box non-maximum suppression
    #[arg(long, default_value_t = 0.3)]
    nms_iou: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Build the bank of artificial light patches from a training corpus
    BuildBank {
        /// Directory of corpus images (PNG or JPEG)
        #[arg(long)]
        images: PathBuf,
        /// Output bank directory
        #[arg(long)]
        out: PathBuf,
        /// Number of original crops; the bank holds 12x this many patches
        #[arg(long, default_value_t = 300)]
        crops: usize,
        /// RNG seed
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        threshold: ThresholdArgs,
    },
    /// Augment a dataset: paste one artificial light into each selected image
    Augment {
        /// Directory of dataset images (PNG or JPEG)
        #[arg(long)]
        images: PathBuf,
        /// Directory of Pascal-VOC XML annotations, one per image basename
        #[arg(long)]
        voc: PathBuf,
        /// Bank directory produced by build-bank
        #[arg(long)]
        bank: PathBuf,
        /// Output dataset directory
        #[arg(long)]
        out: PathBuf,
        /// Share of annotated images to replace with augmented versions
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
        /// RNG seed
        #[arg(long)]
        seed: u64,
        /// Placement attempts per image before skipping it
        #[arg(long, default_value_t = 10)]
        max_retries: u32,
        #[command(flatten)]
        threshold: ThresholdArgs,
        /// Channel level at or below which a pixel counts as black
        #[arg(long, default_value_t = 10)]
        black_threshold: u8,
        /// Outer margin fraction scanned for black borders
        #[arg(long, default_value_t = 0.2)]
        margin: f64,
        /// Write orange prohibition views and circled placements here
        #[arg(long)]
        debug_dir: Option<PathBuf>,
        /// Read VOC coordinates as 1-based inclusive
        #[arg(long)]
        voc_one_based: bool,
        /// Class-name list file (one per line); default maps everything to 0
        #[arg(long)]
        class_list: Option<PathBuf>,
        /// Worker threads (default: all cores); output does not depend on it
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Re-verify an augmented output tree against the placement rules
    Validate {
        /// Output dataset directory holding manifest.json
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::BuildBank {
            images,
            out,
            crops,
            seed,
            threshold,
        } => {
            let summary = cmd_build_bank(&BankConfig {
                images_dir: images,
                out_dir: out,
                crop_count: crops,
                seed,
                threshold: ThresholdParams {
                    min_channel: threshold.min_channel,
                    max_chroma_spread: threshold.chroma_spread,
                },
                nms_iou: threshold.nms_iou,
            })?;
            println!(
                "bank: {} patches from {} crops at {}",
                summary.patch_count,
                summary.crop_count,
                summary.out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Augment {
            images,
            voc,
            bank,
            out,
            fraction,
            seed,
            max_retries,
            threshold,
            black_threshold,
            margin,
            debug_dir,
            voc_one_based,
            class_list,
            workers,
        } => {
            anyhow::ensure!(
                fraction > 0.0 && fraction <= 1.0,
                "--fraction must be in (0, 1]"
            );
            anyhow::ensure!(max_retries >= 1, "--max-retries must be at least 1");
            anyhow::ensure!(margin > 0.0 && margin < 0.5, "--margin must be in (0, 0.5)");
            let run = cmd_augment(&AugmentConfig {
                images_dir: images,
                voc_dir: voc,
                bank_dir: bank,
                out_dir: out,
                fraction,
                seed,
                max_retries,
                prohibition: ProhibitionParams {
                    threshold: ThresholdParams {
                        min_channel: threshold.min_channel,
                        max_chroma_spread: threshold.chroma_spread,
                    },
                    nms_iou: threshold.nms_iou,
                    black_threshold,
                    margin_fraction: margin,
                },
                voc_one_based,
                class_list,
                debug_dir,
                workers,
            })?;
            let c = run.counts;
            println!(
                "augment: {} input, {} augmented, {} passed through, \
                 {} skipped (no fit), {} dropped (no annotation)",
                c.input, c.augmented, c.passed_through, c.skipped_no_fit, c.dropped_no_annotation
            );
            if !run.unpaired_images.is_empty() || !run.unpaired_annotations.is_empty() {
                println!(
                    "unpaired: {} images without XML, {} XML without image (see manifest)",
                    run.unpaired_images.len(),
                    run.unpaired_annotations.len()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { out } => {
            let report = cmd_validate(&out)?;
            for v in &report.violations {
                println!(
                    "violation: {}: {} changed pixels inside {} (first at {},{})",
                    v.basename, v.pixel_count, v.kind, v.example.0, v.example.1
                );
            }
            println!(
                "validate: {} augmented images checked, {} violations",
                report.augmented_checked,
                report.violations.len()
            );
            if report.is_clean() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
    }
}
