use super::{DetectorConfig, InterestPoint, InterestPointDetector};
use crate::error::Result;
use crate::image::Image;
use crate::rng::hash_unit;

const PATCH: usize = 8;
/// Gray-level contrast (L2 norm over the patch) below which the structure part
/// is not scaled up, so flat noisy patches stay near zero.
const CONTRAST_FLOOR: f32 = 128.0;

/// Jittered-grid keypoints with patch descriptors.
///
/// Cells are `2 * nms_radius` wide; one point per cell, jittered uniformly in
/// `[-nms_radius/2, nms_radius/2)` on each axis, so neighbouring points are
/// always more than `nms_radius` apart. Confidences are seeded uniform draws
/// in `(0, 1]` keyed by cell, so lowering the threshold only adds points.
///
/// Descriptor layout (`D = 66`): an 8x8 grayscale patch around the point,
/// mean-subtracted and divided by `max(L2 norm, 128)` (64 values), followed by
/// the red and green chromaticity `R/(R+G+B)`, `G/(R+G+B)` summed over the
/// patch.
#[derive(Clone, Debug, Default)]
pub struct MockGridDetector;

impl MockGridDetector {
    pub const DESCRIPTOR_DIM: usize = PATCH * PATCH + 2;

    pub fn new() -> Self {
        Self
    }

    fn descriptor(image: &Image, x: f32, y: f32) -> Vec<f32> {
        let (w, h) = (image.width() as isize, image.height() as isize);
        let x0 = (x.floor() as isize - PATCH as isize / 2).clamp(0, w - PATCH as isize);
        let y0 = (y.floor() as isize - PATCH as isize / 2).clamp(0, h - PATCH as isize);
        let mut out = Vec::with_capacity(Self::DESCRIPTOR_DIM);
        let mut rgb = [0.0f32; 3];
        for dy in 0..PATCH {
            for dx in 0..PATCH {
                let (px, py) = ((x0 + dx as isize) as usize, (y0 + dy as isize) as usize);
                out.push(image.gray(px, py));
                let p = image.pixel(px, py);
                (0..3).for_each(|c| rgb[c] += p[c] as f32);
            }
        }
        let mean = out.iter().sum::<f32>() / out.len() as f32;
        out.iter_mut().for_each(|v| *v -= mean);
        let norm = out.iter().map(|v| v * v).sum::<f32>().sqrt().max(CONTRAST_FLOOR);
        out.iter_mut().for_each(|v| *v /= norm);
        let [r, g, b] = rgb;
        let sum = r + g + b;
        let (cr, cg) = if sum > 0.0 { (r / sum, g / sum) } else { (1.0 / 3.0, 1.0 / 3.0) };
        out.push(cr);
        out.push(cg);
        out
    }
}

impl InterestPointDetector for MockGridDetector {
    fn name(&self) -> &str {
        "mock-grid"
    }

    fn descriptor_dim(&self) -> usize {
        Self::DESCRIPTOR_DIM
    }

    fn detect_raw(
        &self,
        image: &Image,
        cfg: &DetectorConfig,
        threshold: f32,
        seed: u64,
    ) -> Result<Vec<InterestPoint>> {
        let nms = cfg.nms_radius.max(1) as f32;
        let cell = 2.0 * nms;
        let nx = (image.width() as f32 / cell).floor() as usize;
        let ny = (image.height() as f32 / cell).floor() as usize;
        let mut points = Vec::new();
        for cy in 0..ny {
            for cx in 0..nx {
                let key = [cx as u64, cy as u64];
                let confidence = 1.0 - hash_unit(seed, &[key[0], key[1], 0]);
                if confidence < threshold {
                    continue;
                }
                let jx = (hash_unit(seed, &[key[0], key[1], 1]) - 0.5) * nms;
                let jy = (hash_unit(seed, &[key[0], key[1], 2]) - 0.5) * nms;
                let x = (cx as f32 + 0.5) * cell + jx;
                let y = (cy as f32 + 0.5) * cell + jy;
                points.push(InterestPoint {
                    x,
                    y,
                    descriptor: Self::descriptor(image, x, y),
                    confidence,
                });
            }
        }
        Ok(points)
    }

    fn describe(&self, image: &Image, locations: &[[f32; 2]]) -> Result<Vec<Vec<f32>>> {
        Ok(locations
            .iter()
            .map(|&[x, y]| Self::descriptor(image, x, y))
            .collect())
    }
}
