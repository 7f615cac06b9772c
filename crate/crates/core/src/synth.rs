//! Synthetic descriptor sets with a planted common-object signal.
//!
//! Every descriptor is iid Gaussian noise; cells inside an image's planted
//! rectangle additionally get `signal_strength * u` for one fixed,
//! nonnegative unit direction `u` shared by the whole set. Noisy images get
//! noise only. Optional distractor rectangles carry a per-image direction
//! supported on channels disjoint from `u`, so they raise the channel sum
//! without sharing the common direction.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BoundingBox;
use crate::io::{
    load_manifest_unchecked, write_descriptor_file, DescriptorError, DescriptorTensor, ImageSetManifest, ManifestError,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// Inclusive rectangle in feature-cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl CellBox {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.top..=self.bottom).contains(&i) && (self.left..=self.right).contains(&j)
    }

    pub fn cell_count(&self) -> usize {
        (self.bottom - self.top + 1) * (self.right - self.left + 1)
    }

    /// Pixel box covering these cells at `pixels_per_cell` resolution.
    pub fn to_pixels(&self, pixels_per_cell: u32) -> BoundingBox {
        let p = pixels_per_cell;
        BoundingBox {
            xmin: self.left as u32 * p,
            ymin: self.top as u32 * p,
            xmax: (self.right as u32 + 1) * p - 1,
            ymax: (self.bottom as u32 + 1) * p - 1,
        }
    }

    /// The same region on a grid twice as fine, pulled in by one fine cell on
    /// each side that spans at least two coarse cells.
    fn refine(&self) -> CellBox {
        let (top, bottom) = if self.bottom > self.top { (2 * self.top + 1, 2 * self.bottom) } else { (2 * self.top, 2 * self.bottom + 1) };
        let (left, right) = if self.right > self.left { (2 * self.left + 1, 2 * self.right) } else { (2 * self.left, 2 * self.right + 1) };
        CellBox { top, left, bottom, right }
    }
}

fn default_set_name() -> String {
    "synth".into()
}

fn default_pixels_per_cell() -> u32 {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    #[serde(default = "default_set_name")]
    pub set_name: String,
    pub n_images: usize,
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub signal_strength: f64,
    pub noise_sigma: f64,
    #[serde(default = "default_pixels_per_cell")]
    pub pixels_per_cell: u32,
    /// One rectangle per image; ignored for noisy images.
    pub planted_boxes: Vec<CellBox>,
    #[serde(default)]
    pub noisy_image_ids: Vec<String>,
    /// Optional per-image distractor rectangle (same length as the image list
    /// when present).
    #[serde(default)]
    pub distractor_boxes: Vec<Option<CellBox>>,
    /// Also emit a "prev" layer at twice the spatial resolution whose planted
    /// rectangle has a tighter boundary.
    #[serde(default)]
    pub two_layer: bool,
}

fn stream_seed(seed: u64, image: u64, tag: u64) -> u64 {
    // splitmix-style mixing so neighbouring images get unrelated streams
    let mut z = seed ^ image.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_LAYOUT: u64 = 1;
const TAG_DIRECTION: u64 = 2;
const TAG_LAST: u64 = 3;
const TAG_PREV: u64 = 4;
const TAG_DISTRACTOR: u64 = 5;

/// Nonnegative unit vector supported on `channels`.
fn half_normal_direction(rng: &mut ChaCha8Rng, d: usize, channels: std::ops::Range<usize>) -> Vec<f64> {
    let mut u = vec![0.0; d];
    for c in channels {
        let g: f64 = rng.sample(StandardNormal);
        u[c] = g.abs() + 1e-3;
    }
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.iter().map(|v| v / norm).collect()
}

impl SynthSpec {
    /// Random planted rectangles (sides between 3/8 and 5/8 of the grid) and
    /// `n_noisy` randomly chosen noisy images, all derived from `seed`.
    pub fn planted(seed: u64, n_images: usize, h: usize, w: usize, d: usize, separation: f64, n_noisy: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX, TAG_LAYOUT));
        let side = |rng: &mut ChaCha8Rng, n: usize| {
            let lo = (3 * n / 8).max(1);
            let hi = (5 * n / 8).max(lo);
            rng.random_range(lo..=hi)
        };
        let planted_boxes = (0..n_images)
            .map(|_| {
                let bh = side(&mut rng, h);
                let bw = side(&mut rng, w);
                let top = rng.random_range(0..=h - bh);
                let left = rng.random_range(0..=w - bw);
                CellBox { top, left, bottom: top + bh - 1, right: left + bw - 1 }
            })
            .collect();
        let mut noisy: Vec<usize> = sample(&mut rng, n_images, n_noisy.min(n_images)).into_vec();
        noisy.sort_unstable();
        Self {
            seed,
            set_name: default_set_name(),
            n_images,
            h,
            w,
            d,
            signal_strength: separation,
            noise_sigma: 1.0,
            pixels_per_cell: default_pixels_per_cell(),
            planted_boxes,
            noisy_image_ids: noisy.into_iter().map(image_id).collect(),
            distractor_boxes: Vec::new(),
            two_layer: false,
        }
    }

    pub fn separation(&self) -> f64 {
        self.signal_strength / self.noise_sigma
    }

    pub fn image_ids(&self) -> Vec<String> {
        (0..self.n_images).map(image_id).collect()
    }

    pub fn is_noisy(&self, index: usize) -> bool {
        self.noisy_image_ids.iter().any(|id| *id == image_id(index))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_images == 0 || self.h == 0 || self.w == 0 || self.d == 0 {
            return bad("n_images, h, w and d must be positive".into());
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be positive", self.noise_sigma));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return bad(format!("signal_strength {} must be nonnegative", self.signal_strength));
        }
        if self.pixels_per_cell == 0 {
            return bad("pixels_per_cell must be positive".into());
        }
        if self.planted_boxes.len() != self.n_images {
            return bad(format!("{} planted boxes for {} images", self.planted_boxes.len(), self.n_images));
        }
        let fits = |b: &CellBox| b.top <= b.bottom && b.left <= b.right && b.bottom < self.h && b.right < self.w;
        if let Some(b) = self.planted_boxes.iter().find(|b| !fits(b)) {
            return bad(format!("planted box {b:?} outside {}x{} grid", self.h, self.w));
        }
        if !self.distractor_boxes.is_empty() {
            if self.distractor_boxes.len() != self.n_images {
                return bad("distractor_boxes must list one entry per image".into());
            }
            if self.d < 2 {
                return bad("distractors need d >= 2".into());
            }
            if let Some(b) = self.distractor_boxes.iter().flatten().find(|b| !fits(b)) {
                return bad(format!("distractor box {b:?} outside grid"));
            }
        }
        let ids = self.image_ids();
        if let Some(id) = self.noisy_image_ids.iter().find(|id| !ids.contains(id)) {
            return bad(format!("noisy id {id:?} is not a generated image"));
        }
        Ok(())
    }
}

pub fn image_id(index: usize) -> String {
    format!("img_{index:03}")
}

fn signal_channels(d: usize) -> std::ops::Range<usize> {
    0..d.div_ceil(2)
}

#[allow(clippy::too_many_arguments)]
fn layer_tensor(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
    direction: &[f64],
    planted: Option<CellBox>,
    distractor: Option<(CellBox, &[f64])>,
) -> Result<DescriptorTensor, DescriptorError> {
    let d = spec.d;
    let mut data = Vec::with_capacity(h * w * d);
    for i in 0..h {
        for j in 0..w {
            let inside = planted.is_some_and(|b| b.contains(i, j));
            let dis = distractor.filter(|(b, _)| b.contains(i, j)).map(|(_, v)| v);
            for c in 0..d {
                let noise: f64 = rng.sample(StandardNormal);
                let mut v = spec.noise_sigma * noise;
                if inside {
                    v += spec.signal_strength * direction[c];
                }
                if let Some(dv) = dis {
                    v += spec.signal_strength * dv[c];
                }
                data.push(v as f32);
            }
        }
    }
    DescriptorTensor::new(h, w, d, data)
}

/// Writes `<id>.last.ddt1` (and `<id>.prev.ddt1` for two-layer specs),
/// `manifest.json` and `synth_spec.json` into `out_dir`, then loads the
/// manifest back. Identical specs produce byte-identical files.
pub fn generate(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<ImageSetManifest, SynthError> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;

    let mut dir_rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, u64::MAX, TAG_DIRECTION));
    let u_last = half_normal_direction(&mut dir_rng, spec.d, signal_channels(spec.d));
    let u_prev = half_normal_direction(&mut dir_rng, spec.d, signal_channels(spec.d));

    let mut images = Vec::with_capacity(spec.n_images);
    for (n, id) in spec.image_ids().into_iter().enumerate() {
        let noisy = spec.is_noisy(n);
        let planted = (!noisy).then_some(spec.planted_boxes[n]);
        let distractor = spec.distractor_boxes.get(n).copied().flatten().map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, n as u64, TAG_DISTRACTOR));
            (b, half_normal_direction(&mut rng, spec.d, signal_channels(spec.d).end..spec.d))
        });

        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, n as u64, TAG_LAST));
        let last = layer_tensor(
            spec,
            &mut rng,
            spec.h,
            spec.w,
            &u_last,
            planted,
            distractor.as_ref().map(|(b, v)| (*b, v.as_slice())),
        )?;
        let last_name = format!("{id}.last.ddt1");
        write_descriptor_file(&last, out_dir.join(&last_name))?;

        let mut layers = serde_json::json!({ "last": last_name });
        if spec.two_layer {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, n as u64, TAG_PREV));
            let prev = layer_tensor(spec, &mut rng, 2 * spec.h, 2 * spec.w, &u_prev, planted.map(|b| b.refine()), None)?;
            let prev_name = format!("{id}.prev.ddt1");
            write_descriptor_file(&prev, out_dir.join(&prev_name))?;
            layers["prev"] = prev_name.into();
        }

        let mut entry = serde_json::json!({
            "id": id,
            "width": spec.w as u32 * spec.pixels_per_cell,
            "height": spec.h as u32 * spec.pixels_per_cell,
            "layers": layers,
            "noisy": noisy,
        });
        if let Some(b) = planted {
            entry["gt_boxes"] = serde_json::json!([b.to_pixels(spec.pixels_per_cell)]);
        }
        images.push(entry);
    }

    let manifest = serde_json::json!({ "set_name": spec.set_name, "images": images });
    let mut text = serde_json::to_string_pretty(&manifest).expect("json");
    text.push('\n');
    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, text)?;
    let mut record = serde_json::to_string_pretty(spec).expect("json");
    record.push('\n');
    fs::write(out_dir.join("synth_spec.json"), record)?;

    Ok(load_manifest_unchecked(manifest_path)?)
}

/// The planted unit direction of the last layer, as [`generate`] uses it.
pub fn planted_direction(spec: &SynthSpec) -> Vec<f64> {
    let mut dir_rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, u64::MAX, TAG_DIRECTION));
    half_normal_direction(&mut dir_rng, spec.d, signal_channels(spec.d))
}
