use crate::backends::InterestPoint;
use crate::error::{Error, Result};
use crate::graph::EnhancedPoint;
use crate::image::LabelMask;

/// Anything with an image position.
pub trait Located {
    fn xy(&self) -> (f32, f32);
}

impl Located for InterestPoint {
    fn xy(&self) -> (f32, f32) {
        (self.x, self.y)
    }
}

impl Located for EnhancedPoint {
    fn xy(&self) -> (f32, f32) {
        (self.x, self.y)
    }
}

impl Located for [f32; 2] {
    fn xy(&self) -> (f32, f32) {
        (self[0], self[1])
    }
}

/// Ground-truth class of every point: the mask value at the rounded, clamped
/// pixel position.
pub fn extract_labels<P: Located>(points: &[P], mask: &LabelMask, num_classes: usize) -> Result<Vec<usize>> {
    let max = mask.max_label() as usize;
    if max >= num_classes {
        return Err(Error::LabelRange(format!(
            "mask contains label {max} but only {num_classes} classes are defined"
        )));
    }
    let (w, h) = mask.size();
    Ok(points
        .iter()
        .map(|p| {
            let (x, y) = p.xy();
            let px = (x.round().max(0.0) as usize).min(w - 1);
            let py = (y.round().max(0.0) as usize).min(h - 1);
            mask.get(px, py) as usize
        })
        .collect())
}

/// Inverse-frequency class weights normalized to sum to one. Classes absent
/// from `labels` get weight zero.
pub fn class_weights(labels: &[usize], num_classes: usize) -> Vec<f32> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l < num_classes {
            counts[l] += 1;
        }
    }
    let inv: Vec<f64> = counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
        .collect();
    let total: f64 = inv.iter().sum();
    if total == 0.0 {
        return vec![0.0; num_classes];
    }
    inv.iter().map(|v| (v / total) as f32).collect()
}

/// Macro F1 over the classes present in `truth`.
pub fn node_f1(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("node F1 of an empty label set".into()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    let mut present = vec![false; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::LabelRange(format!("label outside {num_classes} classes")));
        }
        present[t] = true;
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let scores: Vec<f64> = (0..num_classes)
        .filter(|&c| present[c])
        .map(|c| 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fn_[c]) as f64)
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
