use super::*;
use crate::raster::{BinaryMask, RgbImage};
use std::collections::BTreeMap;
use tempfile::TempDir;

struct Fixture {
    _root: TempDir,
    images: PathBuf,
    voc: PathBuf,
    bank: PathBuf,
    out: PathBuf,
}

fn tissue(width: u32, height: u32) -> RgbImage {
    RgbImage::filled(width, height, [130, 75, 65])
}

fn paint(image: &mut RgbImage, bbox: PixelBox, rgb: [u8; 3]) {
    for y in bbox.y_min..bbox.y_max {
        for x in bbox.x_min..bbox.x_max {
            image.set_pixel(x, y, rgb);
        }
    }
}

fn write_voc_file(dir: &Path, stem: &str, width: u32, height: u32, boxes: &[PixelBox]) {
    let mut objects = String::new();
    for b in boxes {
        objects.push_str(&format!(
            "<object><name>polyp</name><bndbox><xmin>{}</xmin><ymin>{}</ymin>\
             <xmax>{}</xmax><ymax>{}</ymax></bndbox></object>",
            b.x_min, b.y_min, b.x_max, b.y_max
        ));
    }
    let xml = format!(
        "<annotation><filename>{stem}</filename>\
         <size><width>{width}</width><height>{height}</height><depth>3</depth></size>\
         {objects}</annotation>"
    );
    fs::write(dir.join(format!("{stem}.xml")), xml).unwrap();
}

/// Builds a small bank (24 patches) from its own corpus directory and
/// returns empty dataset dirs for the test to populate.
fn fixture() -> Fixture {
    let root = TempDir::new().unwrap();
    let corpus = root.path().join("corpus");
    let images = root.path().join("images");
    let voc = root.path().join("voc");
    let bank = root.path().join("bank");
    let out = root.path().join("out");
    for dir in [&corpus, &images, &voc] {
        fs::create_dir_all(dir).unwrap();
    }

    for i in 0..4u32 {
        let mut img = tissue(64, 48);
        paint(
            &mut img,
            PixelBox::new(10 + i * 3, 8, 15 + i * 3, 12),
            [255, 255, 255],
        );
        paint(
            &mut img,
            PixelBox::new(40, 30 + i, 43, 33 + i),
            [235, 230, 232],
        );
        save_image(&img, &corpus.join(format!("corpus_{i}.png"))).unwrap();
    }
    cmd_build_bank(&BankConfig {
        images_dir: corpus,
        out_dir: bank.clone(),
        crop_count: 2,
        seed: 11,
        threshold: ThresholdParams::default(),
        nms_iou: 0.3,
    })
    .unwrap();

    Fixture {
        _root: root,
        images,
        voc,
        bank,
        out,
    }
}

fn default_dataset(fx: &Fixture, count: u32) {
    for i in 0..count {
        let mut img = tissue(64, 48);
        let polyp = PixelBox::new(6, 30, 16, 40);
        paint(&mut img, polyp, [150, 40, 40]);
        paint(
            &mut img,
            PixelBox::new(45 + (i % 3), 6, 50 + (i % 3), 10),
            [255, 255, 255],
        );
        save_image(&img, &fx.images.join(format!("frame_{i:03}.png"))).unwrap();
        write_voc_file(&fx.voc, &format!("frame_{i:03}"), 64, 48, &[polyp]);
    }
}

fn augment_config(fx: &Fixture, fraction: f64, seed: u64) -> AugmentConfig {
    AugmentConfig {
        images_dir: fx.images.clone(),
        voc_dir: fx.voc.clone(),
        bank_dir: fx.bank.clone(),
        out_dir: fx.out.clone(),
        fraction,
        seed,
        max_retries: 10,
        prohibition: ProhibitionParams::default(),
        voc_one_based: false,
        class_list: None,
        debug_dir: None,
        workers: Some(1),
    }
}

fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in fs::read_dir(&current).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
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

#[test]
fn build_bank_writes_twelve_per_crop() {
    let fx = fixture();
    let files = fs::read_dir(fx.bank.join("patches")).unwrap().count();
    assert_eq!(files, 24);
    assert!(fx.bank.join("manifest.json").is_file());
}

#[test]
fn build_bank_without_candidates_names_thresholds() {
    let root = TempDir::new().unwrap();
    let corpus = root.path().join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    save_image(&RgbImage::filled(32, 32, [0, 0, 0]), &corpus.join("a.png")).unwrap();
    let err = cmd_build_bank(&BankConfig {
        images_dir: corpus,
        out_dir: root.path().join("bank"),
        crop_count: 2,
        seed: 0,
        threshold: ThresholdParams::default(),
        nms_iou: 0.3,
    })
    .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("min_channel=200"), "got: {msg}");
    assert!(msg.contains("max_chroma_spread=30"), "got: {msg}");
}

#[test]
fn build_bank_on_empty_dir_fails() {
    let root = TempDir::new().unwrap();
    let corpus = root.path().join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    let err = cmd_build_bank(&BankConfig {
        images_dir: corpus,
        out_dir: root.path().join("bank"),
        crop_count: 1,
        seed: 0,
        threshold: ThresholdParams::default(),
        nms_iou: 0.3,
    })
    .unwrap_err();
    assert!(matches!(err, PipelineError::EmptyCorpus(_)));
}

#[test]
fn full_replacement_augments_every_image() {
    let fx = fixture();
    default_dataset(&fx, 10);
    let run = cmd_augment(&augment_config(&fx, 1.0, 7)).unwrap();
    assert_eq!(run.counts.input, 10);
    assert_eq!(run.counts.augmented, 10);
    assert_eq!(run.counts.passed_through, 0);
    assert!(run.verify_counts());
}

#[test]
fn fraction_selects_floor_of_eligible() {
    let fx = fixture();
    default_dataset(&fx, 10);
    let run = cmd_augment(&augment_config(&fx, 0.2, 7)).unwrap();
    assert_eq!(run.counts.selected, 2);
    assert_eq!(run.counts.augmented + run.counts.skipped_no_fit, 2);
    assert_eq!(
        run.counts.passed_through,
        10 - run.counts.selected - run.counts.dropped_no_annotation
    );
}

#[test]
fn augment_is_byte_deterministic_across_runs() {
    let fx = fixture();
    default_dataset(&fx, 6);
    let mut config = augment_config(&fx, 0.5, 99);
    config.out_dir = fx._root.path().join("out_a");
    cmd_augment(&config).unwrap();
    config.out_dir = fx._root.path().join("out_b");
    cmd_augment(&config).unwrap();
    assert_eq!(
        tree_bytes(&fx._root.path().join("out_a")),
        tree_bytes(&fx._root.path().join("out_b"))
    );
}

#[test]
fn zero_object_annotations_drop_the_image() {
    let fx = fixture();
    default_dataset(&fx, 3);
    let mut img = tissue(64, 48);
    paint(&mut img, PixelBox::new(30, 20, 34, 24), [255, 255, 255]);
    save_image(&img, &fx.images.join("empty_ann.png")).unwrap();
    write_voc_file(&fx.voc, "empty_ann", 64, 48, &[]);

    let run = cmd_augment(&augment_config(&fx, 1.0, 3)).unwrap();
    assert_eq!(run.counts.input, 4);
    assert_eq!(run.counts.dropped_no_annotation, 1);
    assert_eq!(run.counts.selected, 3, "selection happens after drops");
    let record = run
        .records
        .iter()
        .find(|r| r.basename == "empty_ann")
        .unwrap();
    assert_eq!(record.status, RecordStatus::DroppedNoAnnotation);
    assert!(!fx.out.join("images/empty_ann.png").exists());
    assert!(!fx.out.join("labels/empty_ann.txt").exists());
}

#[test]
fn unpaired_files_are_listed_not_fatal() {
    let fx = fixture();
    default_dataset(&fx, 2);
    save_image(&tissue(64, 48), &fx.images.join("orphan.png")).unwrap();
    write_voc_file(&fx.voc, "ghost", 64, 48, &[PixelBox::new(1, 1, 5, 5)]);

    let run = cmd_augment(&augment_config(&fx, 1.0, 3)).unwrap();
    assert_eq!(run.unpaired_images, vec!["orphan.png".to_string()]);
    assert_eq!(run.unpaired_annotations, vec!["ghost.xml".to_string()]);
    let orphan = run.records.iter().find(|r| r.basename == "orphan").unwrap();
    assert_eq!(orphan.status, RecordStatus::DroppedNoAnnotation);
}

#[test]
fn all_unpaired_is_fatal() {
    let fx = fixture();
    save_image(&tissue(64, 48), &fx.images.join("orphan.png")).unwrap();
    let err = cmd_augment(&augment_config(&fx, 1.0, 3)).unwrap_err();
    assert!(matches!(err, PipelineError::NoPairs { .. }));
}

#[test]
fn missing_bank_is_fatal() {
    let fx = fixture();
    default_dataset(&fx, 2);
    let mut config = augment_config(&fx, 1.0, 3);
    config.bank_dir = fx._root.path().join("nope");
    assert!(matches!(
        cmd_augment(&config).unwrap_err(),
        PipelineError::MissingBank(_)
    ));
}

#[test]
fn fully_prohibited_image_is_skipped_and_excluded() {
    let fx = fixture();
    default_dataset(&fx, 2);
    // An all-white frame: one light box covers everything, nothing fits.
    let img = RgbImage::filled(64, 48, [255, 255, 255]);
    save_image(&img, &fx.images.join("white.png")).unwrap();
    write_voc_file(&fx.voc, "white", 64, 48, &[PixelBox::new(2, 2, 10, 10)]);

    let run = cmd_augment(&augment_config(&fx, 1.0, 5)).unwrap();
    let record = run.records.iter().find(|r| r.basename == "white").unwrap();
    assert_eq!(record.status, RecordStatus::SkippedNoFit);
    assert_eq!(record.retries, Some(10));
    assert_eq!(record.attempts.len(), 10);
    assert!(!fx.out.join("images/white.png").exists());
    assert!(!fx.out.join("labels/white.txt").exists());
}

#[test]
fn augmented_labels_match_original_annotations() {
    let fx = fixture();
    default_dataset(&fx, 4);
    let run = cmd_augment(&augment_config(&fx, 1.0, 13)).unwrap();
    for record in &run.records {
        if record.status != RecordStatus::Augmented {
            continue;
        }
        let text = fs::read_to_string(
            fx.out
                .join(LABELS_SUBDIR)
                .join(format!("{}.txt", record.basename)),
        )
        .unwrap();
        let xml = fs::read_to_string(fx.voc.join(format!("{}.xml", record.basename))).unwrap();
        let anns = parse_voc(&xml, false, &ClassMap::default()).unwrap();
        let expected: String = anns
            .iter()
            .map(|a| crate::annot::to_yolo(a) + "\n")
            .collect();
        assert_eq!(text, expected);
    }
}

#[test]
fn validate_fresh_output_is_clean() {
    let fx = fixture();
    default_dataset(&fx, 5);
    cmd_augment(&augment_config(&fx, 1.0, 21)).unwrap();
    let report = cmd_validate(&fx.out).unwrap();
    assert!(report.augmented_checked >= 1);
    assert!(report.is_clean());
}

#[test]
fn validate_flags_patch_moved_onto_polyp_box() {
    let fx = fixture();
    default_dataset(&fx, 3);
    let run = cmd_augment(&augment_config(&fx, 1.0, 21)).unwrap();
    let victim = run
        .records
        .iter()
        .find(|r| r.status == RecordStatus::Augmented)
        .unwrap();
    let out_path = fx.out.join(victim.output_image.as_ref().unwrap());
    let mut img = load_image(&out_path).unwrap();
    // Stamp white pixels inside the annotated polyp box (6,30)-(16,40).
    paint(&mut img, PixelBox::new(8, 32, 12, 36), [250, 250, 250]);
    save_image(&img, &out_path).unwrap();

    let report = cmd_validate(&fx.out).unwrap();
    assert!(!report.is_clean());
    let violation = report
        .violations
        .iter()
        .find(|v| v.kind == ViolationKind::PolypBox)
        .unwrap();
    assert_eq!(violation.basename, victim.basename);
    assert!(violation.pixel_count >= 16);
}

#[test]
fn validate_without_manifest_is_missing() {
    let dir = TempDir::new().unwrap();
    assert!(matches!(
        cmd_validate(dir.path()).unwrap_err(),
        PipelineError::ManifestMissing(_)
    ));
}

#[test]
fn passthrough_copies_are_byte_identical() {
    let fx = fixture();
    default_dataset(&fx, 5);
    let run = cmd_augment(&augment_config(&fx, 0.2, 5)).unwrap();
    for record in &run.records {
        if record.status != RecordStatus::PassedThrough {
            continue;
        }
        let src = fs::read(fx.images.join(&record.source_image)).unwrap();
        let dst = fs::read(fx.out.join(record.output_image.as_ref().unwrap())).unwrap();
        assert_eq!(src, dst);
    }
}

#[test]
fn debug_dir_gets_prohibition_and_placement_views() {
    let fx = fixture();
    default_dataset(&fx, 2);
    let mut config = augment_config(&fx, 1.0, 9);
    let debug = fx._root.path().join("debug");
    config.debug_dir = Some(debug.clone());
    let run = cmd_augment(&config).unwrap();
    for record in &run.records {
        if record.status == RecordStatus::Augmented {
            assert!(debug
                .join(format!("{}.prohibit.png", record.basename))
                .is_file());
            assert!(debug
                .join(format!("{}.placed.png", record.basename))
                .is_file());
        }
    }
    // The prohibition view marks the polyp box orange.
    let first = run
        .records
        .iter()
        .find(|r| r.status == RecordStatus::Augmented)
        .unwrap();
    let view = load_image(&debug.join(format!("{}.prohibit.png", first.basename))).unwrap();
    assert_eq!(view.pixel(8, 32), crate::prohibit::DEBUG_ORANGE);
}

#[test]
fn changed_pixel_check_sees_injected_border_violation() {
    // Direct unit check of the validator helper.
    let original = tissue(20, 20);
    let mut output = original.clone();
    output.set_pixel(1, 1, [200, 200, 200]);
    let mut border = BinaryMask::new(20, 20);
    border.set(1, 1, true);
    let violations = check_changed_pixels("img", &original, &output, &[], &[], &border);
    assert_eq!(violations.len(), 1);
    assert_eq!(violations[0].kind, ViolationKind::Border);
    assert_eq!(violations[0].example, (1, 1));
}
