//! Set-level drivers: statistics over a manifest layer, then per-image
//! localization in parallel. Results always come back in manifest order.

use rayon::prelude::*;

use super::{ddt_plus_image, scda_image, DdtImage, LocalizationResult};
use crate::io::{ImageSetManifest, Layer};
use crate::stats::{CovarianceAccumulator, SetStatistics};
use crate::{Error, Result};

/// Images per accumulation shard. Shards are merged in manifest order, so the
/// summation order (and the result bits) do not depend on the thread count.
const SHARD_IMAGES: usize = 8;

fn image_error(id: &str, e: impl Into<Error>) -> Error {
    Error::Image { id: id.to_owned(), source: Box::new(e.into()) }
}

/// Streams every descriptor of `layer` into one accumulator.
pub fn accumulate_layer(manifest: &ImageSetManifest, layer: Layer) -> Result<CovarianceAccumulator> {
    manifest.require_layer(layer)?;
    let shards: Vec<Result<Option<CovarianceAccumulator>>> = manifest
        .images
        .par_chunks(SHARD_IMAGES)
        .map(|chunk| {
            let mut acc: Option<CovarianceAccumulator> = None;
            for img in chunk {
                let t = img.load_layer(layer)?;
                acc.get_or_insert_with(|| CovarianceAccumulator::new(t.d()))
                    .accumulate(&t)
                    .map_err(|e| image_error(&img.id, e))?;
            }
            Ok(acc)
        })
        .collect();
    let mut total: Option<CovarianceAccumulator> = None;
    for (chunk, shard) in manifest.images.chunks(SHARD_IMAGES).zip(shards) {
        let Some(shard) = shard? else { continue };
        match total.as_mut() {
            None => total = Some(shard),
            Some(t) => t.merge(&shard).map_err(|e| image_error(&chunk[0].id, e))?,
        }
    }
    total.ok_or_else(|| crate::stats::StatsError::EmptyAccumulator.into())
}

pub fn layer_statistics(manifest: &ImageSetManifest, layer: Layer, top_k: usize) -> Result<SetStatistics> {
    Ok(accumulate_layer(manifest, layer)?.finalize(top_k)?)
}

/// Statistics fitted to one layer of one image set.
#[derive(Debug, Clone)]
pub struct LayerModel {
    pub layer: Layer,
    pub stats: SetStatistics,
}

impl LayerModel {
    pub fn fit(manifest: &ImageSetManifest, layer: Layer, top_k: usize) -> Result<Self> {
        Ok(Self { layer, stats: layer_statistics(manifest, layer, top_k)? })
    }

    /// DDT state of every image, in manifest order.
    pub fn ddt_images(&self, manifest: &ImageSetManifest) -> Result<Vec<DdtImage>> {
        manifest
            .images
            .par_iter()
            .map(|img| {
                let t = img.load_layer(self.layer)?;
                DdtImage::compute(&img.id, &t, &self.stats, img.height as usize, img.width as usize)
                    .map_err(|e| image_error(&img.id, e))
            })
            .collect()
    }
}

/// Co-localization over the last layer with `top_k` retained components.
pub fn ddt_localize(manifest: &ImageSetManifest, top_k: usize) -> Result<Vec<LocalizationResult>> {
    let model = LayerModel::fit(manifest, Layer::Last, top_k)?;
    ddt_localize_with(manifest, &model)
}

pub fn ddt_localize_with(manifest: &ImageSetManifest, model: &LayerModel) -> Result<Vec<LocalizationResult>> {
    Ok(model.ddt_images(manifest)?.iter().map(DdtImage::result).collect())
}

/// Two-layer variant: statistics are fitted independently per layer.
pub fn ddt_plus_localize(manifest: &ImageSetManifest, top_k: usize) -> Result<Vec<LocalizationResult>> {
    manifest.require_layer(Layer::Prev)?;
    let last = LayerModel::fit(manifest, Layer::Last, top_k)?;
    let prev = LayerModel::fit(manifest, Layer::Prev, top_k)?;
    ddt_plus_localize_with(manifest, &last, &prev)
}

pub fn ddt_plus_localize_with(
    manifest: &ImageSetManifest,
    last: &LayerModel,
    prev: &LayerModel,
) -> Result<Vec<LocalizationResult>> {
    manifest.require_layer(Layer::Prev)?;
    let ddt = last.ddt_images(manifest)?;
    manifest
        .images
        .par_iter()
        .zip(ddt.par_iter())
        .map(|(img, last_state)| {
            let t = img.load_layer(prev.layer)?;
            let prev_map = crate::transform::project(&img.id, &t, &prev.stats, 1).map_err(|e| image_error(&img.id, e))?;
            Ok(ddt_plus_image(last_state, &prev_map).1)
        })
        .collect()
}

/// Per-image aggregation-map baseline on the last layer.
pub fn scda_localize(manifest: &ImageSetManifest) -> Result<Vec<LocalizationResult>> {
    manifest
        .images
        .par_iter()
        .map(|img| {
            let t = img.load_layer(Layer::Last)?;
            Ok(scda_image(&img.id, &t, img.height as usize, img.width as usize))
        })
        .collect()
}
