//! Bank persistence: a `patches/` directory of grayscale PNGs plus a
//! `manifest.json` recording per-patch provenance and the build seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BankError, LightBank, LightPatch, PatchProvenance};

pub const BANK_MANIFEST: &str = "manifest.json";
pub const BANK_PATCH_DIR: &str = "patches";

#[derive(Debug, Serialize, Deserialize)]
struct BankManifest {
    schema_version: u32,
    seed: u64,
    crop_count: usize,
    patch_count: usize,
    patches: Vec<PatchRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PatchRecord {
    index: usize,
    file: String,
    #[serde(flatten)]
    provenance: PatchProvenance,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BankError + '_ {
    move |source| BankError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the bank under `dir` as `patches/NNNN.png` files plus
/// `manifest.json`. Existing contents are overwritten.
pub fn save_bank(bank: &LightBank, dir: &Path) -> Result<(), BankError> {
    let patch_dir = dir.join(BANK_PATCH_DIR);
    fs::create_dir_all(&patch_dir).map_err(io_err(&patch_dir))?;

    let mut records = Vec::with_capacity(bank.len());
    for (index, patch) in bank.patches().iter().enumerate() {
        let file = format!("{BANK_PATCH_DIR}/{index:04}.png");
        let path = dir.join(&file);
        image::save_buffer(
            &path,
            patch.pixels(),
            patch.width(),
            patch.height(),
            image::ColorType::L8,
        )
        .map_err(|err| BankError::Io {
            path: path.clone(),
            source: std::io::Error::other(err),
        })?;
        records.push(PatchRecord {
            index,
            file,
            provenance: patch.provenance().clone(),
        });
    }

    let manifest = BankManifest {
        schema_version: 1,
        seed: bank.seed(),
        crop_count: bank.crop_count(),
        patch_count: bank.len(),
        patches: records,
    };
    let manifest_path = dir.join(BANK_MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;
    Ok(())
}

/// Loads a bank previously written by [`save_bank`]. Patch order follows
/// the manifest, not the directory listing.
pub fn load_bank(dir: &Path) -> Result<LightBank, BankError> {
    let manifest_path = dir.join(BANK_MANIFEST);
    let raw = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: BankManifest =
        serde_json::from_str(&raw).map_err(|source| BankError::Manifest {
            path: manifest_path.clone(),
            source,
        })?;
    if manifest.patches.len() != manifest.patch_count {
        return Err(BankError::Corrupt {
            path: manifest_path,
            reason: format!(
                "manifest lists {} patches but declares patch_count {}",
                manifest.patches.len(),
                manifest.patch_count
            ),
        });
    }

    let mut patches = Vec::with_capacity(manifest.patch_count);
    for record in manifest.patches {
        let path = dir.join(&record.file);
        let decoded = image::open(&path).map_err(|err| BankError::Io {
            path: path.clone(),
            source: std::io::Error::other(err),
        })?;
        let gray = decoded.into_luma8();
        let (width, height) = gray.dimensions();
        let pixels = gray.into_raw();
        if !pixels.iter().any(|&v| v > 0) {
            return Err(BankError::Corrupt {
                path,
                reason: "patch has no nonzero pixel".into(),
            });
        }
        patches.push(PatchKit {
            width,
            height,
            pixels,
            provenance: record.provenance,
        });
    }

    Ok(LightBank {
        patches: patches
            .into_iter()
            .map(|kit| LightPatch::from_parts(kit.width, kit.height, kit.pixels, kit.provenance))
            .collect(),
        seed: manifest.seed,
        crop_count: manifest.crop_count,
    })
}

struct PatchKit {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    provenance: PatchProvenance,
}

/// True when `dir` looks like a persisted bank (has a manifest).
pub fn bank_exists(dir: &Path) -> bool {
    dir.join(BANK_MANIFEST).is_file()
}
