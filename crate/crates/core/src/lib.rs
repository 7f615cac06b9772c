//! Unsupervised co-localization of the common object in an image set.
//!
//! Descriptors from every image of a set are pooled, their covariance is
//! eigendecomposed, and each image's descriptors are projected onto the
//! first principal direction. Positive cells mark the common object; the
//! largest positive component, boxed at image resolution, is the prediction.
//! Images with no positive cell are flagged noisy.

pub mod augment;
pub mod bbox;
pub mod evaluate;
pub mod heatmap;
pub mod io;
pub mod localize;
pub mod stats;
pub mod synth;
pub mod transform;

pub use bbox::BoundingBox;
pub use io::{DescriptorTensor, ImageRecord, ImageSetManifest, Layer};
pub use localize::{LocalizationResult, Method};
pub use stats::{CovarianceAccumulator, SetStatistics};
pub use transform::IndicatorMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Manifest(#[from] io::ManifestError),
    #[error(transparent)]
    Descriptor(#[from] io::DescriptorError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Transform(#[from] transform::TransformError),
    #[error("image {id:?}: {source}")]
    Image { id: String, source: Box<Error> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
