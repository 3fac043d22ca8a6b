use std::collections::{BTreeMap, VecDeque};

use super::{BoxPrompt, ClassPrompt, MaskTriplet, PromptableSegmenter};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, Image};

/// Region-growing stand-in for a promptable segmenter.
///
/// Each foreground point seeds, at its nearest pixel, a 4-connected flood
/// fill that accepts pixels within `tolerance` RGB distance of the seed
/// pixel's color. With a box the fill is clipped to the pixels overlapping it; a box without usable points seeds from its center
/// pixel. Pixels reached from negative points are removed. The triplet holds
/// the region eroded, as is, and dilated by [`MockRegionSegmenter::RADIUS`]
/// pixels, scored `(0.7, 1.0, 0.8)`.
#[derive(Clone, Debug)]
pub struct MockRegionSegmenter {
    tolerance: f32,
}

impl Default for MockRegionSegmenter {
    fn default() -> Self {
        Self::new(40.0)
    }
}

impl MockRegionSegmenter {
    pub const RADIUS: usize = 2;
    pub const SCORES: [f32; 3] = [0.7, 1.0, 0.8];

    pub fn new(tolerance: f32) -> Self {
        Self { tolerance }
    }

    fn grow(&self, image: &Image, seed: (usize, usize), bbox: Option<&BoxPrompt>, out: &mut BinaryMask) {
        let (w, h) = image.size();
        // Pixel (x, y) covers [x - 0.5, x + 0.5] and is kept when it overlaps the box.
        let inside = |x: usize, y: usize| {
            bbox.is_none_or(|b| {
                let (x, y) = (x as f32, y as f32);
                x + 0.5 >= b.x_min && x - 0.5 <= b.x_max && y + 0.5 >= b.y_min && y - 0.5 <= b.y_max
            })
        };
        if !inside(seed.0, seed.1) {
            return;
        }
        let key = image.pixel(seed.0, seed.1);
        let tol2 = self.tolerance * self.tolerance;
        let accepts = |x: usize, y: usize| {
            let p = image.pixel(x, y);
            let d2: f32 = (0..3).map(|c| (p[c] as f32 - key[c] as f32).powi(2)).sum();
            d2 <= tol2 && inside(x, y)
        };
        let mut visited = BinaryMask::empty(w, h);
        let mut queue = VecDeque::from([seed]);
        visited.set(seed.0, seed.1, true);
        while let Some((x, y)) = queue.pop_front() {
            out.set(x, y, true);
            let neighbours = [
                (x.wrapping_sub(1), y),
                (x + 1, y),
                (x, y.wrapping_sub(1)),
                (x, y + 1),
            ];
            for (nx, ny) in neighbours {
                if nx < w && ny < h && !visited.get(nx, ny) {
                    visited.set(nx, ny, true);
                    if accepts(nx, ny) {
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
    }

    fn segment_class(&self, image: &Image, prompt: &ClassPrompt) -> MaskTriplet {
        let (w, h) = image.size();
        let pixel = |p: &[f32; 2]| {
            (
                (p[0].round().max(0.0) as usize).min(w - 1),
                (p[1].round().max(0.0) as usize).min(h - 1),
            )
        };
        let bbox = prompt.bbox.as_ref();
        let mut region = BinaryMask::empty(w, h);
        for (p, _) in prompt.points.iter().zip(&prompt.labels).filter(|(_, &fg)| fg) {
            self.grow(image, pixel(p), bbox, &mut region);
        }
        if region.is_empty() {
            if let Some(b) = bbox {
                let (cx, cy) = b.center();
                self.grow(image, pixel(&[cx, cy]), bbox, &mut region);
            }
        }
        let mut negative = BinaryMask::empty(w, h);
        for (p, _) in prompt.points.iter().zip(&prompt.labels).filter(|(_, &fg)| !fg) {
            self.grow(image, pixel(p), bbox, &mut negative);
        }
        if !negative.is_empty() {
            region = BinaryMask::from_fn(w, h, |x, y| region.get(x, y) && !negative.get(x, y));
        }
        MaskTriplet {
            masks: [region.erode(Self::RADIUS), region.clone(), region.dilate(Self::RADIUS)],
            scores: Self::SCORES,
        }
    }
}

fn validate(image: &Image, prompt: &ClassPrompt) -> Result<()> {
    if prompt.points.len() != prompt.labels.len() {
        return Err(Error::InvalidPrompt(format!(
            "class {}: {} points but {} labels",
            prompt.class_id,
            prompt.points.len(),
            prompt.labels.len()
        )));
    }
    if let Some(p) = prompt.points.iter().find(|p| !image.contains(p[0], p[1])) {
        return Err(Error::InvalidPrompt(format!(
            "class {}: point ({}, {}) outside {}x{} image",
            prompt.class_id,
            p[0],
            p[1],
            image.width(),
            image.height()
        )));
    }
    if let Some(b) = &prompt.bbox {
        if !b.is_valid() {
            return Err(Error::InvalidPrompt(format!("class {}: inverted box", prompt.class_id)));
        }
    }
    Ok(())
}

impl PromptableSegmenter for MockRegionSegmenter {
    fn name(&self) -> &str {
        "mock-region"
    }

    fn segment(&self, image: &Image, prompts: &[ClassPrompt]) -> Result<BTreeMap<usize, MaskTriplet>> {
        let mut out = BTreeMap::new();
        for prompt in prompts {
            validate(image, prompt)?;
            if prompt.points.is_empty() && prompt.bbox.is_none() {
                continue;
            }
            out.insert(prompt.class_id, self.segment_class(image, prompt));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_scene() -> Image {
        Image::from_fn(100, 100, |x, y| {
            if (20..70).contains(&x) && (30..80).contains(&y) {
                [200, 40, 40]
            } else {
                [30, 160, 60]
            }
        })
        .unwrap()
    }

    fn flood_oracle(image: &Image, seed: (usize, usize)) -> BinaryMask {
        // Plain recursive-stack flood fill over exact color equality.
        let key = image.pixel(seed.0, seed.1);
        let mut m = BinaryMask::empty(image.width(), image.height());
        let mut stack = vec![seed];
        while let Some((x, y)) = stack.pop() {
            if m.get(x, y) || image.pixel(x, y) != key {
                continue;
            }
            m.set(x, y, true);
            if x > 0 {
                stack.push((x - 1, y));
            }
            if y > 0 {
                stack.push((x, y - 1));
            }
            if x + 1 < image.width() {
                stack.push((x + 1, y));
            }
            if y + 1 < image.height() {
                stack.push((x, y + 1));
            }
        }
        m
    }

    fn fg(class_id: usize, points: Vec<[f32; 2]>, bbox: Option<BoxPrompt>) -> ClassPrompt {
        let labels = vec![true; points.len()];
        ClassPrompt {
            class_id,
            points,
            labels,
            bbox,
        }
    }

    #[test]
    fn exact_variant_matches_square() {
        let img = square_scene();
        let prompt = fg(1, vec![[25.0, 35.0], [50.0, 50.0], [65.0, 75.0]], None);
        let out = MockRegionSegmenter::default().segment(&img, &[prompt]).unwrap();
        let exact = &out[&1].masks[1];
        let oracle = flood_oracle(&img, (50, 50));
        let near = oracle.dilate(1);
        let core = oracle.erode(1);
        for y in 0..100 {
            for x in 0..100 {
                if exact.get(x, y) {
                    assert!(near.get(x, y));
                }
                if core.get(x, y) {
                    assert!(exact.get(x, y));
                }
            }
        }
        assert_eq!(exact.area(), 2500);
    }

    #[test]
    fn triplet_scores_prefer_exact() {
        let img = square_scene();
        let out = MockRegionSegmenter::default()
            .segment(&img, &[fg(2, vec![[50.0, 50.0]], None)])
            .unwrap();
        let t = &out[&2];
        assert_eq!(t.scores, [0.7, 1.0, 0.8]);
        assert!(t.masks[0].area() < t.masks[1].area());
        assert!(t.masks[2].area() > t.masks[1].area());
    }

    #[test]
    fn out_of_bounds_prompt_is_rejected() {
        let img = square_scene();
        let res = MockRegionSegmenter::default().segment(&img, &[fg(1, vec![[100.0, 5.0]], None)]);
        assert!(matches!(res, Err(Error::InvalidPrompt(_))));
    }

    #[test]
    fn empty_class_is_skipped() {
        let img = square_scene();
        let out = MockRegionSegmenter::default()
            .segment(&img, &[fg(1, vec![], None), fg(2, vec![[1.0, 1.0]], None)])
            .unwrap();
        assert!(!out.contains_key(&1));
        assert!(out.contains_key(&2));
    }

    #[test]
    fn box_clips_and_center_seeds() {
        let img = square_scene();
        let bbox = BoxPrompt {
            x_min: 10.0,
            y_min: 10.0,
            x_max: 44.0,
            y_max: 59.0,
        };
        let out = MockRegionSegmenter::default()
            .segment(&img, &[fg(1, vec![], Some(bbox))])
            .unwrap();
        let exact = &out[&1].masks[1];
        // Center (27, 34.5) lies on the square; region is the square clipped to the box.
        assert_eq!(exact.area(), 25 * 30);
    }
}
