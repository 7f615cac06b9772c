//! Descriptor files and image-set manifests.

pub mod descriptor;
pub mod manifest;

pub use descriptor::{read_descriptor_file, write_descriptor_file, DescriptorError, DescriptorTensor};
pub use manifest::{
    load_manifest, load_manifest_unchecked, write_manifest, ImageRecord, ImageSetManifest, Layer, LayerPaths,
    ManifestError,
};
