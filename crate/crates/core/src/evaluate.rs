//! CorLoc scoring and noisy-image ROC analysis.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::bbox::BoundingBox;
use crate::io::{ImageRecord, ImageSetManifest};
use crate::localize::LocalizationResult;

/// Overlap above which a prediction counts as correct (strictly greater).
pub const CORLOC_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("result for unknown image id {0:?}")]
    UnknownImageId(String),
    #[error("image {0:?} has no noisy label")]
    MissingNoiseLabels(String),
    #[error("noise labels are all {}", if *.0 { "noisy" } else { "clean" })]
    DegenerateLabels(bool),
}

/// Intersection over union with inclusive `+1` pixel extents.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    match a.intersection(b) {
        None => 0.0,
        Some(inter) => {
            let i = inter.area();
            i as f64 / (a.area() + b.area() - i) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerImageEval {
    pub id: String,
    /// Best overlap against any ground-truth box; `None` without a prediction.
    pub iou: Option<f64>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorLocReport {
    #[serde(skip)]
    pub set_name: String,
    pub corloc: f64,
    pub evaluated: usize,
    pub correct: usize,
    pub per_image: Vec<PerImageEval>,
}

impl CorLocReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

fn index_results<'a>(
    results: &'a [LocalizationResult],
    manifest: &ImageSetManifest,
) -> Result<HashMap<&'a str, &'a LocalizationResult>, EvalError> {
    let known: HashMap<&str, &ImageRecord> = manifest.images.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut by_id = HashMap::with_capacity(results.len());
    for r in results {
        if !known.contains_key(r.image_id.as_str()) {
            return Err(EvalError::UnknownImageId(r.image_id.clone()));
        }
        by_id.insert(r.image_id.as_str(), r);
    }
    Ok(by_id)
}

/// Percentage of ground-truth-annotated images whose predicted box overlaps
/// some ground-truth box with IoU > 0.5. Images without annotations are left
/// out; noisy (box-less) predictions on annotated images count as misses.
/// `per_image` follows manifest order.
pub fn corloc(results: &[LocalizationResult], manifest: &ImageSetManifest) -> Result<CorLocReport, EvalError> {
    let by_id = index_results(results, manifest)?;
    let mut per_image = Vec::new();
    for record in &manifest.images {
        let (Some(result), Some(gts)) = (by_id.get(record.id.as_str()), record.gt_boxes.as_ref()) else {
            continue;
        };
        let best = result.bbox.map(|p| gts.iter().map(|g| iou(&p, g)).fold(0.0, f64::max));
        per_image.push(PerImageEval {
            id: record.id.clone(),
            iou: best,
            correct: best.is_some_and(|v| v > CORLOC_IOU_THRESHOLD),
        });
    }
    let evaluated = per_image.len();
    let correct = per_image.iter().filter(|p| p.correct).count();
    let corloc = if evaluated == 0 { 0.0 } else { 100.0 * correct as f64 / evaluated as f64 };
    Ok(CorLocReport { set_name: manifest.set_name.clone(), corloc, evaluated, correct, per_image })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// The detector fires (image judged noisy) when `noise_rate <= threshold`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Ascending thresholds, starting with a `-inf` sentinel at (0, 0).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// Builds the curve for "noisy" detection from `(noise_rate, is_noisy)`
    /// pairs. Lower rates are more suspicious.
    pub fn from_scores(scored: &[(f64, bool)]) -> Result<Self, EvalError> {
        let positives = scored.iter().filter(|s| s.1).count();
        let negatives = scored.len() - positives;
        if positives == 0 || negatives == 0 {
            return Err(EvalError::DegenerateLabels(positives > 0));
        }
        let mut sorted = scored.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut points = vec![RocPoint { threshold: f64::NEG_INFINITY, fpr: 0.0, tpr: 0.0 }];
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut i = 0;
        while i < sorted.len() {
            let threshold = sorted[i].0;
            while i < sorted.len() && sorted[i].0 == threshold {
                if sorted[i].1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            points.push(RocPoint { threshold, fpr: fp as f64 / negatives as f64, tpr: tp as f64 / positives as f64 });
        }
        let auc = points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum();
        Ok(Self { points, auc })
    }

    /// `threshold,fpr,tpr` rows followed by a `# AUC: <value>` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr).unwrap();
        }
        writeln!(out, "# AUC: {}", self.auc).unwrap();
        out
    }
}

/// ROC of noise-rate as a noisy-image detector over every result.
pub fn noise_roc(results: &[LocalizationResult], manifest: &ImageSetManifest) -> Result<RocCurve, EvalError> {
    index_results(results, manifest)?;
    let labels: HashMap<&str, Option<bool>> = manifest.images.iter().map(|r| (r.id.as_str(), r.noisy)).collect();
    let scored = results
        .iter()
        .map(|r| match labels[r.image_id.as_str()] {
            Some(noisy) => Ok((r.noise_rate, noisy)),
            None => Err(EvalError::MissingNoiseLabels(r.image_id.clone())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    RocCurve::from_scores(&scored)
}
