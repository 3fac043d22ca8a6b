//! Dice, region similarity J, contour accuracy F and J&F.
//!
//! All scores lie in `[0, 1]`; reports multiply by 100 only when written.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, LabelMask};

fn same_size(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::DimensionMismatch(format!(
            "masks are {:?} and {:?}",
            a.size(),
            b.size()
        )));
    }
    Ok(())
}

/// `2|A∩B| / (|A| + |B|)`; 1 when both are empty.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    same_size(pred, gt)?;
    let total = pred.area() + gt.area();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * pred.intersection_count(gt) as f64 / total as f64)
}

/// `|A∩B| / |A∪B|`; 1 when both are empty.
pub fn region_j(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    same_size(pred, gt)?;
    let union = pred.union_count(gt);
    if union == 0 {
        return Ok(1.0);
    }
    Ok(pred.intersection_count(gt) as f64 / union as f64)
}

/// Boundary tolerance in pixels: 0.8% of the image diagonal, rounded up.
pub fn default_boundary_tolerance(width: usize, height: usize) -> usize {
    (0.008 * ((width * width + height * height) as f64).sqrt()).ceil() as usize
}

/// Boundary F-measure. Boundary pixels are set pixels with an unset (or
/// out-of-image) 4-neighbour; a boundary pixel matches when a boundary pixel
/// of the other mask lies within Euclidean distance `tolerance`.
pub fn contour_f(pred: &BinaryMask, gt: &BinaryMask, tolerance: usize) -> Result<f64> {
    same_size(pred, gt)?;
    let pb = pred.boundary();
    let gb = gt.boundary();
    match (pb.area(), gb.area()) {
        (0, 0) => return Ok(1.0),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let precision = pb.intersection_count(&gb.dilate(tolerance)) as f64 / pb.area() as f64;
    let recall = gb.intersection_count(&pb.dilate(tolerance)) as f64 / gb.area() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub j: f64,
    pub f: f64,
    pub dice: f64,
    /// The class is in neither mask; its scores are 1 by convention.
    pub absent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: Vec<ClassMetrics>,
    pub mean_j: f64,
    pub mean_f: f64,
    pub mean_dice: f64,
    pub j_and_f: f64,
}

/// Per-class J, F and Dice for every class in `0..num_classes` other than
/// `background`, macro-averaged.
pub fn evaluate_image(
    fused: &LabelMask,
    gt: &LabelMask,
    num_classes: usize,
    background: Option<u8>,
) -> Result<MetricReport> {
    if fused.size() != gt.size() {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {:?}, ground truth is {:?}",
            fused.size(),
            gt.size()
        )));
    }
    let tol = default_boundary_tolerance(gt.width(), gt.height());
    let mut per_class = Vec::new();
    for c in (0..num_classes.min(256)).filter(|&c| Some(c as u8) != background) {
        let p = fused.binary(c as u8);
        let g = gt.binary(c as u8);
        per_class.push(ClassMetrics {
            class_id: c,
            j: region_j(&p, &g)?,
            f: contour_f(&p, &g, tol)?,
            dice: dice(&p, &g)?,
            absent: p.is_empty() && g.is_empty(),
        });
    }
    Ok(MetricReport::from_classes(per_class))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl MetricReport {
    pub fn from_classes(per_class: Vec<ClassMetrics>) -> Self {
        let mean_j = mean(per_class.iter().map(|c| c.j));
        let mean_f = mean(per_class.iter().map(|c| c.f));
        let mean_dice = mean(per_class.iter().map(|c| c.dice));
        Self {
            per_class,
            mean_j,
            mean_f,
            mean_dice,
            j_and_f: (mean_j + mean_f) / 2.0,
        }
    }
}

/// Means over many images.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub images: usize,
    pub mean_j: f64,
    pub mean_f: f64,
    pub mean_dice: f64,
    pub j_and_f: f64,
}

impl MetricSummary {
    pub fn from_reports(reports: &[MetricReport]) -> Self {
        let mean_j = mean(reports.iter().map(|r| r.mean_j));
        let mean_f = mean(reports.iter().map(|r| r.mean_f));
        Self {
            images: reports.len(),
            mean_j,
            mean_f,
            mean_dice: mean(reports.iter().map(|r| r.mean_dice)),
            j_and_f: (mean_j + mean_f) / 2.0,
        }
    }

    /// Same values on the 0-100 scale used in reports.
    pub fn percent(&self) -> Self {
        Self {
            images: self.images,
            mean_j: self.mean_j * 100.0,
            mean_f: self.mean_f * 100.0,
            mean_dice: self.mean_dice * 100.0,
            j_and_f: self.j_and_f * 100.0,
        }
    }
}

/// One line per image: `{"image": .., "j": .., "f": .., "dice": .., "j_and_f": ..}`
/// on the 0-100 scale, with per-class entries.
pub fn write_jsonl(path: &Path, rows: &[(String, MetricReport)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (name, r) in rows {
        let classes: Vec<_> = r
            .per_class
            .iter()
            .map(|c| {
                serde_json::json!({
                    "class_id": c.class_id,
                    "j": c.j * 100.0,
                    "f": c.f * 100.0,
                    "dice": c.dice * 100.0,
                    "absent": c.absent,
                })
            })
            .collect();
        let line = serde_json::json!({
            "image": name,
            "j": r.mean_j * 100.0,
            "f": r.mean_f * 100.0,
            "dice": r.mean_dice * 100.0,
            "j_and_f": r.j_and_f * 100.0,
            "classes": classes,
        });
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// CSV summary with one row per image plus a final `mean` row, 0-100 scale.
pub fn write_csv(path: &Path, rows: &[(String, MetricReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image", "j", "f", "j_and_f", "dice"])?;
    let fmt = |v: f64| format!("{:.2}", v * 100.0);
    for (name, r) in rows {
        w.write_record([name.clone(), fmt(r.mean_j), fmt(r.mean_f), fmt(r.j_and_f), fmt(r.mean_dice)])?;
    }
    let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| r.clone()).collect();
    let s = MetricSummary::from_reports(&reports);
    w.write_record(["mean".to_string(), fmt(s.mean_j), fmt(s.mean_f), fmt(s.j_and_f), fmt(s.mean_dice)])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: usize, y0: usize, side: usize) -> BinaryMask {
        BinaryMask::from_fn(40, 40, |x, y| (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y))
    }

    #[test]
    fn dice_and_j_examples() {
        let a = BinaryMask::from_fn(4, 4, |x, y| y == 0 && x < 2);
        let b = BinaryMask::from_fn(4, 4, |x, y| y == 0 && (1..3).contains(&x));
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        let a = BinaryMask::from_fn(4, 4, |_, y| y == 0);
        let b = BinaryMask::from_fn(4, 4, |x, y| y == 0 && x < 2 || y == 1 && x < 2);
        assert!((region_j(&a, &b).unwrap() - 2.0 / 6.0).abs() < 1e-12);
        let e = BinaryMask::empty(4, 4);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert_eq!(region_j(&e, &e).unwrap(), 1.0);
        assert_eq!(dice(&a, &e).unwrap(), 0.0);
        assert_eq!(region_j(&a, &e).unwrap(), 0.0);
        assert!(dice(&a, &BinaryMask::empty(5, 4)).is_err());
    }

    #[test]
    fn contour_examples() {
        let a = square(10, 10, 12);
        assert_eq!(contour_f(&a, &a, 2).unwrap(), 1.0);
        assert_eq!(contour_f(&a, &square(11, 10, 12), 2).unwrap(), 1.0);
        assert_eq!(contour_f(&a, &square(26, 26, 12), 2).unwrap(), 0.0);
        assert_eq!(contour_f(&a, &BinaryMask::empty(40, 40), 2).unwrap(), 0.0);
        assert_eq!(contour_f(&BinaryMask::empty(40, 40), &BinaryMask::empty(40, 40), 2).unwrap(), 1.0);
        assert_eq!(contour_f(&a, &square(26, 26, 12), 57).unwrap(), 1.0);
    }

    #[test]
    fn tolerance_default() {
        // 0.008 * hypot(854, 480) = 7.84.
        assert_eq!(default_boundary_tolerance(854, 480), 8);
        assert_eq!(default_boundary_tolerance(96, 96), 2);
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let gt = LabelMask::from_fn(30, 30, |x, y| ((x / 10) + (y / 15)) as u8 % 4);
        let r = evaluate_image(&gt, &gt, 4, Some(0)).unwrap();
        assert_eq!(r.per_class.len(), 3);
        assert_eq!((r.mean_j, r.mean_f, r.mean_dice, r.j_and_f), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn absent_classes_are_flagged() {
        let gt = LabelMask::from_fn(32, 32, |x, _| u8::from(x < 16));
        let r = evaluate_image(&gt, &gt, 3, Some(0)).unwrap();
        assert!(r.per_class[1].absent);
        assert_eq!(r.per_class[1].j, 1.0);
        assert_eq!(r.j_and_f, (r.mean_j + r.mean_f) / 2.0);
    }
}
