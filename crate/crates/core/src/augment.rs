//! Cleaning noisy image sets by noise rate and exporting the surviving
//! predictions as PASCAL VOC annotations.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use quick_xml::escape::escape;
use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

use crate::bbox::BoundingBox;
use crate::io::ImageSetManifest;
use crate::localize::LocalizationResult;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("result for unknown image id {0:?}")]
    UnknownImageId(String),
    #[error("no result for image {0:?}")]
    MissingResult(String),
    #[error("no predicted box for image {0:?}")]
    NoBoxForImage(String),
    #[error("image id {0:?} cannot be used as a file name")]
    InvalidFileName(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("malformed VOC annotation: {0}")]
    MalformedXml(String),
}

/// Remove an image iff its noise rate is at or below `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPolicy {
    threshold: f64,
}

impl FilterPolicy {
    /// Only images with at least one positive cell survive.
    pub const ZERO: FilterPolicy = FilterPolicy { threshold: 0.0 };
    pub const TENTH: FilterPolicy = FilterPolicy { threshold: 0.1 };

    pub fn new(threshold: f64) -> Result<Self, AugmentError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(AugmentError::InvalidThreshold(threshold));
        }
        Ok(Self { threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn keeps(&self, noise_rate: f64) -> bool {
        noise_rate > self.threshold
    }
}

fn index_results<'a>(
    results: &'a [LocalizationResult],
    manifest: &ImageSetManifest,
) -> Result<HashMap<&'a str, &'a LocalizationResult>, AugmentError> {
    let mut by_id = HashMap::with_capacity(results.len());
    for r in results {
        if manifest.get(&r.image_id).is_none() {
            return Err(AugmentError::UnknownImageId(r.image_id.clone()));
        }
        by_id.insert(r.image_id.as_str(), r);
    }
    Ok(by_id)
}

/// The images whose noise rate exceeds the policy threshold, in the original
/// order.
pub fn filter_dataset(
    results: &[LocalizationResult],
    manifest: &ImageSetManifest,
    policy: FilterPolicy,
) -> Result<ImageSetManifest, AugmentError> {
    let by_id = index_results(results, manifest)?;
    let mut images = Vec::new();
    for record in &manifest.images {
        let r = by_id
            .get(record.id.as_str())
            .ok_or_else(|| AugmentError::MissingResult(record.id.clone()))?;
        if policy.keeps(r.noise_rate) {
            images.push(record.clone());
        }
    }
    Ok(ImageSetManifest { set_name: manifest.set_name.clone(), images })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocObject {
    pub name: String,
    pub difficult: bool,
    /// 0-based; written 1-based.
    pub bbox: BoundingBox,
}

/// One PASCAL VOC annotation file.
#[derive(Debug, Clone, PartialEq)]
pub struct VocAnnotation {
    pub folder: String,
    pub filename: String,
    pub width: u32,
    pub height: u32,
    pub depth: u32,
    pub objects: Vec<VocObject>,
}

impl VocAnnotation {
    pub fn to_xml(&self) -> String {
        let mut s = String::from("<annotation>\n");
        s += &format!("\t<folder>{}</folder>\n", escape(&self.folder));
        s += &format!("\t<filename>{}</filename>\n", escape(&self.filename));
        s += &format!(
            "\t<size>\n\t\t<width>{}</width>\n\t\t<height>{}</height>\n\t\t<depth>{}</depth>\n\t</size>\n",
            self.width, self.height, self.depth
        );
        for o in &self.objects {
            let b = o.bbox;
            s += "\t<object>\n";
            s += &format!("\t\t<name>{}</name>\n", escape(&o.name));
            s += &format!("\t\t<difficult>{}</difficult>\n", u8::from(o.difficult));
            s += &format!(
                "\t\t<bndbox>\n\t\t\t<xmin>{}</xmin>\n\t\t\t<ymin>{}</ymin>\n\t\t\t<xmax>{}</xmax>\n\t\t\t<ymax>{}</ymax>\n\t\t</bndbox>\n",
                u64::from(b.xmin) + 1,
                u64::from(b.ymin) + 1,
                u64::from(b.xmax) + 1,
                u64::from(b.ymax) + 1
            );
            s += "\t</object>\n";
        }
        s += "</annotation>\n";
        s
    }

    /// Parses a VOC annotation, converting boxes back to 0-based.
    pub fn from_xml(xml: &str) -> Result<Self, AugmentError> {
        let bad = |m: String| AugmentError::MalformedXml(m);
        let mut reader = Reader::from_str(xml);
        reader.config_mut().trim_text(true);
        let mut path: Vec<String> = Vec::new();
        let mut ann = VocAnnotation {
            folder: String::new(),
            filename: String::new(),
            width: 0,
            height: 0,
            depth: 0,
            objects: Vec::new(),
        };
        let mut name = String::new();
        let mut difficult = false;
        let mut coords: [Option<u32>; 4] = [None; 4];
        loop {
            match reader.read_event().map_err(|e| bad(e.to_string()))? {
                Event::Start(e) => {
                    let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                    if tag == "object" {
                        name.clear();
                        difficult = false;
                        coords = [None; 4];
                    }
                    path.push(tag);
                }
                Event::End(_) => {
                    if path.pop().as_deref() == Some("object") {
                        let missing = || bad(format!("object {name:?} lacks a complete bndbox"));
                        let one_based = |c: Option<u32>| c.filter(|&v| v >= 1).map(|v| v - 1).ok_or_else(missing);
                        let bbox = BoundingBox::new(
                            one_based(coords[0])?,
                            one_based(coords[1])?,
                            one_based(coords[2])?,
                            one_based(coords[3])?,
                        )
                        .map_err(|e| bad(e.to_string()))?;
                        ann.objects.push(VocObject { name: name.clone(), difficult, bbox });
                    }
                }
                Event::Text(t) => {
                    let text = t.unescape().map_err(|e| bad(e.to_string()))?.into_owned();
                    let num = || text.parse::<u32>().map_err(|e| bad(format!("{text:?}: {e}")));
                    let tags: Vec<&str> = path.iter().map(String::as_str).collect();
                    match tags.as_slice() {
                        ["annotation", "folder"] => ann.folder = text,
                        ["annotation", "filename"] => ann.filename = text,
                        ["annotation", "size", "width"] => ann.width = num()?,
                        ["annotation", "size", "height"] => ann.height = num()?,
                        ["annotation", "size", "depth"] => ann.depth = num()?,
                        ["annotation", "object", "name"] => name = text,
                        ["annotation", "object", "difficult"] => difficult = num()? != 0,
                        ["annotation", "object", "bndbox", field] => {
                            let slot = match *field {
                                "xmin" => 0,
                                "ymin" => 1,
                                "xmax" => 2,
                                "ymax" => 3,
                                _ => continue,
                            };
                            coords[slot] = Some(num()?);
                        }
                        _ => {}
                    }
                }
                Event::Eof => break,
                _ => {}
            }
        }
        Ok(ann)
    }
}

fn is_safe_file_stem(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && !id.contains(['/', '\\', '\0'])
}

/// Writes `<image_id>.xml` into `out_dir` for every image with a predicted
/// box; noisy predictions are skipped. Returns the number of files written.
pub fn export_voc(
    results: &[LocalizationResult],
    manifest: &ImageSetManifest,
    category: &str,
    out_dir: impl AsRef<Path>,
) -> Result<usize, AugmentError> {
    let out_dir = out_dir.as_ref();
    let by_id = index_results(results, manifest)?;
    let mut pending = Vec::new();
    for record in &manifest.images {
        let r = by_id
            .get(record.id.as_str())
            .ok_or_else(|| AugmentError::NoBoxForImage(record.id.clone()))?;
        if r.noisy {
            continue;
        }
        let bbox = r.bbox.ok_or_else(|| AugmentError::NoBoxForImage(record.id.clone()))?;
        if !is_safe_file_stem(&record.id) {
            return Err(AugmentError::InvalidFileName(record.id.clone()));
        }
        let ann = VocAnnotation {
            folder: manifest.set_name.clone(),
            filename: record.id.clone(),
            width: record.width,
            height: record.height,
            depth: 3,
            objects: vec![VocObject { name: category.to_owned(), difficult: false, bbox }],
        };
        pending.push((out_dir.join(format!("{}.xml", record.id)), ann.to_xml()));
    }
    if !pending.is_empty() {
        fs::create_dir_all(out_dir)?;
    }
    for (path, xml) in &pending {
        fs::write(path, xml)?;
    }
    Ok(pending.len())
}

pub fn read_voc_annotation(path: impl AsRef<Path>) -> Result<VocAnnotation, AugmentError> {
    VocAnnotation::from_xml(&fs::read_to_string(path)?)
}
