//! Pascal-VOC XML annotation parsing and YOLO-format label emission.
//!
//! VOC exports disagree on whether bndbox coordinates are 0-based with an
//! exclusive max or 1-based inclusive; the reader defaults to the former
//! and converts from the latter when asked. The 1-pixel difference is below
//! detection tolerance but has to be explicit and switchable.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::raster::PixelBox;

#[derive(Debug, Error)]
pub enum AnnotError {
    #[error("xml parse error: {0}")]
    Xml(#[from] roxmltree::Error),
    #[error("missing field <{0}>")]
    MissingField(&'static str),
    #[error("field <{field}> holds non-numeric value {value:?}")]
    InvalidNumber { field: &'static str, value: String },
    #[error("invalid box ({x_min},{y_min},{x_max},{y_max}) in {width}x{height} image")]
    InvalidBox {
        x_min: i64,
        y_min: i64,
        x_max: i64,
        y_max: i64,
        width: u32,
        height: u32,
    },
    #[error("object name {0:?} is not in the class list")]
    UnknownClass(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// One class-labeled axis-aligned bounding box in pixel coordinates,
/// carrying the dimensions of the image it annotates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolypAnnotation {
    pub class_id: u32,
    pub bbox: PixelBox,
    pub image_width: u32,
    pub image_height: u32,
}

/// How to map VOC object names to class ids. With no class list every
/// object becomes class 0 (polyp).
#[derive(Debug, Clone, Default)]
pub struct ClassMap {
    names: Vec<String>,
}

impl ClassMap {
    pub fn new(names: Vec<String>) -> Self {
        Self { names }
    }

    /// One class name per line; blank lines ignored.
    pub fn from_file(path: &Path) -> Result<Self, AnnotError> {
        let text = std::fs::read_to_string(path).map_err(|source| AnnotError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::new(
            text.lines()
                .map(str::trim)
                .filter(|line| !line.is_empty())
                .map(str::to_string)
                .collect(),
        ))
    }

    fn id_of(&self, name: &str) -> Result<u32, AnnotError> {
        if self.names.is_empty() {
            return Ok(0);
        }
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| i as u32)
            .ok_or_else(|| AnnotError::UnknownClass(name.to_string()))
    }
}

fn child_text<'a>(node: roxmltree::Node<'a, 'a>, tag: &'static str) -> Result<&'a str, AnnotError> {
    node.children()
        .find(|c| c.has_tag_name(tag))
        .and_then(|c| c.text())
        .map(str::trim)
        .ok_or(AnnotError::MissingField(tag))
}

fn numeric_field(node: roxmltree::Node, tag: &'static str) -> Result<i64, AnnotError> {
    let text = child_text(node, tag)?;
    // Some exports write floats like "160.0".
    text.parse::<f64>()
        .map(|v| v.round() as i64)
        .map_err(|_| AnnotError::InvalidNumber {
            field: tag,
            value: text.to_string(),
        })
}

/// Parses one VOC annotation document into the boxes it declares. An image
/// without `<object>` entries yields an empty list; the pipeline drops such
/// images from the output set.
///
/// With `one_based`, source coordinates are read as 1-based inclusive and
/// shifted to this crate's 0-based exclusive-max convention.
pub fn parse_voc(
    xml_text: &str,
    one_based: bool,
    classes: &ClassMap,
) -> Result<Vec<PolypAnnotation>, AnnotError> {
    let doc = roxmltree::Document::parse(xml_text)?;
    let root = doc.root_element();
    let size = root
        .children()
        .find(|c| c.has_tag_name("size"))
        .ok_or(AnnotError::MissingField("size"))?;
    let width = numeric_field(size, "width")?;
    let height = numeric_field(size, "height")?;
    if width < 1 || height < 1 {
        return Err(AnnotError::MissingField("size"));
    }
    let (width, height) = (width as u32, height as u32);

    let mut annotations = Vec::new();
    for object in root.children().filter(|c| c.has_tag_name("object")) {
        let name = child_text(object, "name")?;
        let class_id = classes.id_of(name)?;
        let bndbox = object
            .children()
            .find(|c| c.has_tag_name("bndbox"))
            .ok_or(AnnotError::MissingField("bndbox"))?;
        let mut x_min = numeric_field(bndbox, "xmin")?;
        let mut y_min = numeric_field(bndbox, "ymin")?;
        let x_max = numeric_field(bndbox, "xmax")?;
        let y_max = numeric_field(bndbox, "ymax")?;
        if one_based {
            // 1-based inclusive max equals 0-based exclusive max.
            x_min -= 1;
            y_min -= 1;
        }
        let valid = x_min >= 0
            && y_min >= 0
            && x_min < x_max
            && y_min < y_max
            && x_max <= width as i64
            && y_max <= height as i64;
        if !valid {
            return Err(AnnotError::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
                width,
                height,
            });
        }
        annotations.push(PolypAnnotation {
            class_id,
            bbox: PixelBox::new(x_min as u32, y_min as u32, x_max as u32, y_max as u32),
            image_width: width,
            image_height: height,
        });
    }
    Ok(annotations)
}

/// Formats one annotation as a YOLO label line: class then center and size,
/// all normalized by the image dimensions, six decimal places.
pub fn to_yolo(ann: &PolypAnnotation) -> String {
    let w = ann.image_width as f64;
    let h = ann.image_height as f64;
    let cx = (ann.bbox.x_min + ann.bbox.x_max) as f64 / 2.0 / w;
    let cy = (ann.bbox.y_min + ann.bbox.y_max) as f64 / 2.0 / h;
    let bw = ann.bbox.width() as f64 / w;
    let bh = ann.bbox.height() as f64 / h;
    format!("{} {cx:.6} {cy:.6} {bw:.6} {bh:.6}", ann.class_id)
}

/// Writes one YOLO line per annotation, newline-terminated, UTF-8.
pub fn write_labels(annotations: &[PolypAnnotation], path: &Path) -> Result<(), AnnotError> {
    let mut text = String::new();
    for ann in annotations {
        text.push_str(&to_yolo(ann));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| AnnotError::Io {
        path: path.to_path_buf(),
        source,
    })
}
