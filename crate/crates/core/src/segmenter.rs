//! Per-class promptable segmentation and mask fusion.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::backends::{MaskTriplet, PromptableSegmenter};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, Image, LabelMask};
use crate::prompts::PromptSet;

/// Index and score of the best mask; the lowest index wins ties.
pub fn select_best_mask(triplet: &MaskTriplet) -> (usize, f32) {
    let mut best = 0;
    for i in 1..3 {
        if triplet.scores[i] > triplet.scores[best] {
            best = i;
        }
    }
    (best, triplet.scores[best])
}

/// Paints masks onto a background canvas from the largest to the smallest, so
/// smaller masks overwrite larger ones where they overlap. Equal areas paint
/// in ascending class order.
pub fn fuse_masks(masks: &BTreeMap<usize, BinaryMask>, background: u8, size: (usize, usize)) -> Result<LabelMask> {
    if let Some((c, m)) = masks.iter().find(|(_, m)| m.size() != size) {
        return Err(Error::DimensionMismatch(format!(
            "mask of class {c} is {:?}, expected {size:?}",
            m.size()
        )));
    }
    if let Some(&c) = masks.keys().find(|&&c| c > u8::MAX as usize) {
        return Err(Error::LabelRange(format!("class {c} does not fit an 8-bit label")));
    }
    let mut order: Vec<(&usize, &BinaryMask)> = masks.iter().collect();
    order.sort_by(|a, b| b.1.area().cmp(&a.1.area()).then(a.0.cmp(b.0)));
    let mut fused = LabelMask::filled(size.0, size.1, background);
    for (&c, m) in order {
        for (x, y) in m.iter_set() {
            fused.set(x, y, c as u8);
        }
    }
    Ok(fused)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMask {
    pub mask: BinaryMask,
    pub score: f32,
    /// Position of the chosen mask in the backend's triplet.
    pub triplet_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub prompt_config_hash: String,
    pub backend: String,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SegmentationResult {
    pub per_class: BTreeMap<usize, ClassMask>,
    /// Classes whose backend call failed or returned nothing; their masks are
    /// empty.
    pub failed: Vec<usize>,
    pub fused: LabelMask,
    pub provenance: Provenance,
}

impl PartialEq for SegmentationResult {
    /// Ignores wall-clock timing.
    fn eq(&self, other: &Self) -> bool {
        self.per_class == other.per_class
            && self.failed == other.failed
            && self.fused == other.fused
            && self.provenance.prompt_config_hash == other.provenance.prompt_config_hash
            && self.provenance.backend == other.provenance.backend
    }
}

/// One backend call per present class, best mask of each triplet, fused.
/// A failing class is recorded and left empty; the run fails only when every
/// class fails.
pub fn run_segmentation(
    image: &Image,
    prompts: &PromptSet,
    backend: &dyn PromptableSegmenter,
) -> Result<SegmentationResult> {
    let started = Instant::now();
    let class_prompts = prompts.class_prompts();
    if class_prompts.is_empty() {
        return Err(Error::EmptyPrompt("no class is present in the prompt set".into()));
    }
    let (w, h) = image.size();
    let mut per_class = BTreeMap::new();
    let mut failed = Vec::new();
    for prompt in &class_prompts {
        let c = prompt.class_id;
        let outcome = backend
            .segment(image, std::slice::from_ref(prompt))
            .and_then(|mut out| {
                out.remove(&c)
                    .ok_or_else(|| Error::Segmentation(format!("backend returned no mask for class {c}")))
            });
        match outcome {
            Ok(triplet) => {
                let (idx, score) = select_best_mask(&triplet);
                let [m0, m1, m2] = triplet.masks;
                let mask = [m0, m1, m2].into_iter().nth(idx).expect("index < 3");
                per_class.insert(
                    c,
                    ClassMask {
                        mask,
                        score,
                        triplet_index: idx,
                    },
                );
            }
            Err(e) => {
                log::warn!("segmentation of class {c} failed: {e}");
                failed.push(c);
                per_class.insert(
                    c,
                    ClassMask {
                        mask: BinaryMask::empty(w, h),
                        score: 0.0,
                        triplet_index: 0,
                    },
                );
            }
        }
    }
    if failed.len() == class_prompts.len() {
        return Err(Error::Segmentation(format!(
            "{} failed for all {} classes",
            backend.name(),
            failed.len()
        )));
    }
    let background = prompts.config.background_class.unwrap_or(0) as u8;
    let masks: BTreeMap<usize, BinaryMask> = per_class.iter().map(|(&c, m)| (c, m.mask.clone())).collect();
    let fused = fuse_masks(&masks, background, (w, h))?;
    Ok(SegmentationResult {
        per_class,
        failed,
        fused,
        provenance: Provenance {
            prompt_config_hash: crate::harness::config_hash(&prompts.config),
            backend: backend.name().to_string(),
            seconds: started.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triplet(scores: [f32; 3]) -> MaskTriplet {
        MaskTriplet {
            masks: [BinaryMask::empty(32, 32), BinaryMask::empty(32, 32), BinaryMask::empty(32, 32)],
            scores,
        }
    }

    #[test]
    fn best_mask_tie_rule() {
        assert_eq!(select_best_mask(&triplet([0.2, 0.9, 0.5])).0, 1);
        assert_eq!(select_best_mask(&triplet([0.5, 0.5, 0.1])).0, 0);
        assert_eq!(select_best_mask(&triplet([0.3, 0.3, 0.3])).0, 0);
    }

    #[test]
    fn smaller_masks_paint_last() {
        let a = BinaryMask::from_fn(20, 20, |x, y| x < 10 && y < 10);
        let b = BinaryMask::from_fn(20, 20, |x, y| (3..5).contains(&x) && (3..8).contains(&y));
        let masks = BTreeMap::from([(1, a.clone()), (2, b.clone())]);
        let fused = fuse_masks(&masks, 0, (20, 20)).unwrap();
        // Paint-order simulation.
        for y in 0..20 {
            for x in 0..20 {
                let expect = if b.get(x, y) {
                    2
                } else if a.get(x, y) {
                    1
                } else {
                    0
                };
                assert_eq!(fused.get(x, y), expect);
            }
        }
        // Idempotence.
        let again: BTreeMap<usize, BinaryMask> = [1u8, 2].iter().map(|&c| (c as usize, fused.binary(c))).collect();
        assert_eq!(fuse_masks(&again, 0, (20, 20)).unwrap(), fused);
    }

    #[test]
    fn equal_areas_order_by_class() {
        let a = BinaryMask::from_fn(20, 20, |x, _| x < 4);
        let b = BinaryMask::from_fn(20, 20, |x, _| (2..6).contains(&x));
        let fused = fuse_masks(&BTreeMap::from([(3, a), (1, b)]), 0, (20, 20)).unwrap();
        assert_eq!(fused.get(2, 0), 3);
    }

    #[test]
    fn size_mismatch_rejected() {
        let masks = BTreeMap::from([(1, BinaryMask::empty(10, 10))]);
        assert!(fuse_masks(&masks, 0, (20, 20)).is_err());
    }
}
