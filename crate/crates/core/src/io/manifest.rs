//! Image-set manifests (JSON).
//!
//! ```json
//! {"set_name": "car", "images": [{"id": "a", "width": 320, "height": 240,
//!   "layers": {"last": "a.last.ddt1", "prev": "a.prev.ddt1"},
//!   "gt_boxes": [[10, 20, 100, 120]], "noisy": false}]}
//! ```
//!
//! Relative descriptor paths resolve against the manifest's own directory.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::descriptor::{read_descriptor_file, DescriptorError, DescriptorTensor};
use crate::bbox::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layer {
    Last,
    Prev,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Last => "last",
            Layer::Prev => "prev",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest schema error: {0}")]
    SchemaError(String),
    #[error("duplicate image id {0:?}")]
    DuplicateId(String),
    #[error("image {id:?} is missing layer \"{layer}\"")]
    MissingLayer { id: String, layer: Layer },
    #[error("image {id:?}: box {bbox} outside {width}x{height} image")]
    BoxOutOfBounds { id: String, bbox: BoundingBox, width: u32, height: u32 },
    #[error("image {id:?}: descriptor file {path}: {source}")]
    DescriptorFileError { id: String, path: PathBuf, source: DescriptorError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPaths {
    pub last: PathBuf,
    pub prev: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub layers: LayerPaths,
    pub gt_boxes: Option<Vec<BoundingBox>>,
    pub noisy: Option<bool>,
}

impl ImageRecord {
    pub fn layer_path(&self, layer: Layer) -> Option<&Path> {
        match layer {
            Layer::Last => Some(&self.layers.last),
            Layer::Prev => self.layers.prev.as_deref(),
        }
    }

    pub fn load_layer(&self, layer: Layer) -> Result<DescriptorTensor, ManifestError> {
        let path = self.layer_path(layer).ok_or_else(|| ManifestError::MissingLayer {
            id: self.id.clone(),
            layer,
        })?;
        read_descriptor_file(path).map_err(|source| ManifestError::DescriptorFileError {
            id: self.id.clone(),
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSetManifest {
    pub set_name: String,
    pub images: Vec<ImageRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayers {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    last: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prev: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    id: String,
    width: u32,
    height: u32,
    layers: RawLayers,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_boxes: Option<Vec<[u32; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noisy: Option<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    set_name: String,
    images: Vec<RawImage>,
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

impl ImageSetManifest {
    /// Parses and checks structure only: ids, layers, box bounds. Descriptor
    /// files are not touched; see [`ImageSetManifest::check_descriptors`].
    pub fn from_json_str(json: &str, base_dir: &Path) -> Result<Self, ManifestError> {
        let raw: RawManifest = serde_json::from_str(json).map_err(|e| ManifestError::SchemaError(e.to_string()))?;
        if raw.images.is_empty() {
            return Err(ManifestError::SchemaError("manifest lists no images".into()));
        }
        let mut seen = HashSet::new();
        let mut images = Vec::with_capacity(raw.images.len());
        for img in raw.images {
            if !seen.insert(img.id.clone()) {
                return Err(ManifestError::DuplicateId(img.id));
            }
            if img.width == 0 || img.height == 0 {
                return Err(ManifestError::SchemaError(format!(
                    "image {:?} has zero size {}x{}",
                    img.id, img.width, img.height
                )));
            }
            let last = img.layers.last.ok_or_else(|| ManifestError::MissingLayer {
                id: img.id.clone(),
                layer: Layer::Last,
            })?;
            let gt_boxes = match img.gt_boxes {
                None => None,
                Some(raw_boxes) => {
                    let mut boxes = Vec::with_capacity(raw_boxes.len());
                    for arr in raw_boxes {
                        let b = BoundingBox::try_from(arr).map_err(|e| {
                            ManifestError::SchemaError(format!("image {:?}: {e}", img.id))
                        })?;
                        if !b.fits(img.width, img.height) {
                            return Err(ManifestError::BoxOutOfBounds {
                                id: img.id,
                                bbox: b,
                                width: img.width,
                                height: img.height,
                            });
                        }
                        boxes.push(b);
                    }
                    Some(boxes)
                }
            };
            images.push(ImageRecord {
                layers: LayerPaths {
                    last: base_dir.join(last),
                    prev: img.layers.prev.map(|p| base_dir.join(p)),
                },
                id: img.id,
                width: img.width,
                height: img.height,
                gt_boxes,
                noisy: img.noisy,
            });
        }
        Ok(Self { set_name: raw.set_name, images })
    }

    /// Reads every referenced descriptor file and checks it parses.
    pub fn check_descriptors(&self) -> Result<(), ManifestError> {
        for img in &self.images {
            img.load_layer(Layer::Last)?;
            if img.layers.prev.is_some() {
                img.load_layer(Layer::Prev)?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|r| r.id == id)
    }

    pub fn has_layer(&self, layer: Layer) -> bool {
        self.images.iter().all(|r| r.layer_path(layer).is_some())
    }

    /// Fails with `MissingLayer` naming the first image lacking `layer`.
    pub fn require_layer(&self, layer: Layer) -> Result<(), ManifestError> {
        match self.images.iter().find(|r| r.layer_path(layer).is_none()) {
            Some(r) => Err(ManifestError::MissingLayer { id: r.id.clone(), layer }),
            None => Ok(()),
        }
    }

    /// Serializes with descriptor paths written as stored (already resolved).
    pub fn to_json_string(&self) -> String {
        let raw = RawManifest {
            set_name: self.set_name.clone(),
            images: self
                .images
                .iter()
                .map(|r| RawImage {
                    id: r.id.clone(),
                    width: r.width,
                    height: r.height,
                    layers: RawLayers {
                        last: Some(path_string(&r.layers.last)),
                        prev: r.layers.prev.as_deref().map(path_string),
                    },
                    gt_boxes: r.gt_boxes.as_ref().map(|bs| bs.iter().map(|b| b.to_array()).collect()),
                    noisy: r.noisy,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("manifest serialization is infallible")
    }
}

/// Loads a manifest and validates it eagerly, descriptor files included.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<ImageSetManifest, ManifestError> {
    let manifest = load_manifest_unchecked(path)?;
    manifest.check_descriptors()?;
    Ok(manifest)
}

/// Like [`load_manifest`] but skips reading the descriptor files.
pub fn load_manifest_unchecked(path: impl AsRef<Path>) -> Result<ImageSetManifest, ManifestError> {
    let path = path.as_ref();
    let json = fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    ImageSetManifest::from_json_str(&json, base)
}

/// Writes `manifest` to `path`. Descriptor paths are rewritten relative to
/// the destination directory when they live under it, absolute otherwise,
/// so the file loads back to the same descriptors from anywhere.
pub fn write_manifest(manifest: &ImageSetManifest, path: impl AsRef<Path>) -> std::io::Result<()> {
    let path = path.as_ref();
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| Path::new("."));
    let dest = std::path::absolute(parent)?;
    let rebase = |p: &Path| -> std::io::Result<PathBuf> {
        let abs = std::path::absolute(p)?;
        Ok(match abs.strip_prefix(&dest) {
            Ok(rel) => rel.to_path_buf(),
            Err(_) => abs,
        })
    };
    let mut out = manifest.clone();
    for r in &mut out.images {
        r.layers.last = rebase(&r.layers.last)?;
        if let Some(prev) = r.layers.prev.as_mut() {
            *prev = rebase(prev)?;
        }
    }
    let mut json = out.to_json_string();
    json.push('\n');
    fs::write(path, json)
}
