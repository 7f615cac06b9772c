//! From indicator maps to bounding boxes.
//!
//! Maps are resized to image resolution by origin-aligned nearest-neighbour
//! lookup, thresholded at zero, reduced to their largest 8-connected
//! component and boxed.

mod pipeline;
mod results;

pub use pipeline::{
    accumulate_layer, ddt_localize, ddt_localize_with, ddt_plus_localize, ddt_plus_localize_with, layer_statistics,
    scda_localize, LayerModel,
};
pub use results::{read_results, write_results, Method, ResultsError, ResultsFile};

use std::collections::VecDeque;

use crate::bbox::BoundingBox;
use crate::io::DescriptorTensor;
use crate::stats::SetStatistics;
use crate::transform::{project, IndicatorMap, TransformError};

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl RealMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

impl From<&IndicatorMap> for RealMatrix {
    fn from(m: &IndicatorMap) -> Self {
        RealMatrix { height: m.h, width: m.w, values: m.values.clone() }
    }
}

/// Nearest-neighbour lookup of an `h x w` grid at `height x width`:
/// `out[u][v] = src[floor(u*h/height)][floor(v*w/width)]`.
pub fn resize_grid<T: Copy>(src: &[T], h: usize, w: usize, height: usize, width: usize) -> Vec<T> {
    assert_eq!(src.len(), h * w, "source grid must be h x w");
    let cols: Vec<usize> = (0..width).map(|v| v * w / width).collect();
    let mut out = Vec::with_capacity(height * width);
    for u in 0..height {
        let row = &src[(u * h / height) * w..][..w];
        out.extend(cols.iter().map(|&c| row[c]));
    }
    out
}

pub fn resize_nearest(m: &IndicatorMap, height: usize, width: usize) -> RealMatrix {
    RealMatrix { height, width, values: resize_grid(&m.values, m.h, m.w, height, width) }
}

/// Boolean mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl BinaryMap {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, bits: vec![false; height * width] }
    }

    pub fn filled(height: usize, width: usize) -> Self {
        Self { height, width, bits: vec![true; height * width] }
    }

    pub fn from_rows(rows: &[&[u8]]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        Self { height, width, bits: rows.iter().flat_map(|r| r.iter().map(|&b| b != 0)).collect() }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.contains(&true)
    }

    /// Cellwise AND; both maps must share dimensions.
    pub fn intersect(&self, other: &BinaryMap) -> BinaryMap {
        assert_eq!((self.height, self.width), (other.height, other.width), "mask dimensions differ");
        BinaryMap {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &BinaryMap) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Tightest box around all set pixels.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut acc: Option<[usize; 4]> = None;
        for (idx, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            let (r, c) = (idx / self.width, idx % self.width);
            acc = Some(match acc {
                None => [c, r, c, r],
                Some([x0, y0, x1, y1]) => [x0.min(c), y0.min(r), x1.max(c), y1.max(r)],
            });
        }
        acc.map(|[x0, y0, x1, y1]| BoundingBox { xmin: x0 as u32, ymin: y0 as u32, xmax: x1 as u32, ymax: y1 as u32 })
    }
}

/// `true` exactly where the value is strictly positive.
pub fn binarize(vals: &RealMatrix) -> BinaryMap {
    BinaryMap { height: vals.height, width: vals.width, bits: vals.values.iter().map(|&v| v > 0.0).collect() }
}

/// An 8-connected set of pixels, stored as `(row, col)` in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectedComponent {
    pixels: Vec<(u32, u32)>,
}

impl ConnectedComponent {
    /// Pixels must be nonempty; they are sorted into row-major order.
    pub fn from_pixels(mut pixels: Vec<(u32, u32)>) -> Self {
        assert!(!pixels.is_empty(), "component must be nonempty");
        pixels.sort_unstable();
        pixels.dedup();
        Self { pixels }
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn size(&self) -> usize {
        self.pixels.len()
    }

    /// Smallest pixel in row-major scan order.
    pub fn anchor(&self) -> (u32, u32) {
        self.pixels[0]
    }

    pub fn to_mask(&self, height: usize, width: usize) -> BinaryMap {
        let mut m = BinaryMap::new(height, width);
        for &(r, c) in &self.pixels {
            m.set(r as usize, c as usize, true);
        }
        m
    }
}

/// Largest 8-connected component of set pixels; equal sizes go to the
/// component whose anchor comes first in row-major order.
pub fn largest_connected_component(b: &BinaryMap) -> Option<ConnectedComponent> {
    let (height, width) = (b.height, b.width);
    let mut visited = vec![false; height * width];
    let mut best: Option<Vec<(u32, u32)>> = None;
    let mut queue = VecDeque::new();
    for start in 0..height * width {
        if !b.bits[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(idx) = queue.pop_front() {
            let (r, c) = (idx / width, idx % width);
            pixels.push((r as u32, c as u32));
            for nr in r.saturating_sub(1)..=(r + 1).min(height - 1) {
                for nc in c.saturating_sub(1)..=(c + 1).min(width - 1) {
                    let n = nr * width + nc;
                    if b.bits[n] && !visited[n] {
                        visited[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        // scan order visits anchors ascending, so only a strictly larger size wins
        if best.as_ref().is_none_or(|p| pixels.len() > p.len()) {
            best = Some(pixels);
        }
    }
    best.map(ConnectedComponent::from_pixels)
}

pub fn min_covering_box(c: &ConnectedComponent) -> BoundingBox {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for &(r, col) in c.pixels() {
        x0 = x0.min(col);
        x1 = x1.max(col);
        y0 = y0.min(r);
        y1 = y1.max(r);
    }
    BoundingBox { xmin: x0, ymin: y0, xmax: x1, ymax: y1 }
}

/// Per-image outcome of a localization method.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub image_id: String,
    pub bbox: Option<BoundingBox>,
    pub noisy: bool,
    pub noise_rate: f64,
    pub component_size: u64,
    pub method: Method,
}

impl LocalizationResult {
    fn from_mask(image_id: &str, method: Method, noise_rate: f64, mask: Option<&BinaryMap>) -> Self {
        let bbox = mask.and_then(BinaryMap::bounding_box);
        let component_size = if bbox.is_some() { mask.map_or(0, |m| m.count() as u64) } else { 0 };
        Self {
            image_id: image_id.to_owned(),
            noisy: bbox.is_none(),
            bbox,
            noise_rate,
            component_size,
            method,
        }
    }
}

/// Intermediate DDT state for one image.
#[derive(Debug, Clone)]
pub struct DdtImage {
    pub indicator: IndicatorMap,
    pub height: usize,
    pub width: usize,
    pub component: Option<ConnectedComponent>,
}

impl DdtImage {
    /// Projects onto the first component, resizes to `height x width`,
    /// thresholds at zero and keeps the largest component.
    pub fn compute(
        image_id: &str,
        tensor: &DescriptorTensor,
        stats: &SetStatistics,
        height: usize,
        width: usize,
    ) -> Result<Self, TransformError> {
        let indicator = project(image_id, tensor, stats, 1)?;
        Ok(Self::from_indicator(indicator, height, width))
    }

    pub fn from_indicator(indicator: IndicatorMap, height: usize, width: usize) -> Self {
        let component = largest_connected_component(&binarize(&resize_nearest(&indicator, height, width)));
        Self { indicator, height, width, component }
    }

    /// Positive fraction of the feature-resolution indicator map.
    pub fn noise_rate(&self) -> f64 {
        self.indicator.positive_fraction()
    }

    pub fn component_mask(&self) -> Option<BinaryMap> {
        self.component.as_ref().map(|c| c.to_mask(self.height, self.width))
    }

    pub fn result(&self) -> LocalizationResult {
        LocalizationResult {
            image_id: self.indicator.image_id.clone(),
            bbox: self.component.as_ref().map(min_covering_box),
            noisy: self.component.is_none(),
            noise_rate: self.noise_rate(),
            component_size: self.component.as_ref().map_or(0, |c| c.size() as u64),
            method: Method::Ddt,
        }
    }
}

/// Final DDT⁺ mask: the last-layer largest component intersected with the
/// binarized previous-layer map.
pub fn combine_layers(component_mask: &BinaryMap, prev_mask: &BinaryMap) -> BinaryMap {
    component_mask.intersect(prev_mask)
}

/// DDT⁺ outcome for one image given its last-layer DDT state and the
/// previous-layer first-component map.
pub fn ddt_plus_image(last: &DdtImage, prev: &IndicatorMap) -> (Option<BinaryMap>, LocalizationResult) {
    let mask = last.component_mask().map(|component| {
        let prev_mask = binarize(&resize_nearest(prev, last.height, last.width));
        combine_layers(&component, &prev_mask)
    });
    let result = LocalizationResult::from_mask(&last.indicator.image_id, Method::DdtPlus, last.noise_rate(), mask.as_ref());
    (mask, result)
}

/// Channel sum of every cell, `h x w`.
pub fn aggregation_map(t: &DescriptorTensor) -> RealMatrix {
    RealMatrix {
        height: t.h(),
        width: t.w(),
        values: t.cells().map(|x| x.iter().map(|&v| f64::from(v)).sum()).collect(),
    }
}

/// Single-image baseline: keep cells whose channel sum exceeds the map's
/// own mean, then resize, take the largest component and box it.
pub fn scda_image(image_id: &str, t: &DescriptorTensor, height: usize, width: usize) -> LocalizationResult {
    let agg = aggregation_map(t);
    let n = agg.values.len() as f64;
    let mean = agg.values.iter().sum::<f64>() / n;
    let min = agg.values.iter().copied().fold(f64::INFINITY, f64::min);
    // `v > min` keeps a constant map empty even if the mean rounds below it
    let selected: Vec<bool> = agg.values.iter().map(|&v| v > mean && v > min).collect();
    let noise_rate = selected.iter().filter(|&&b| b).count() as f64 / n;
    let bits = BinaryMap { height, width, bits: resize_grid(&selected, agg.height, agg.width, height, width) };
    let mask = largest_connected_component(&bits).map(|c| c.to_mask(height, width));
    LocalizationResult::from_mask(image_id, Method::Scda, noise_rate, mask.as_ref())
}
