use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{Image, LabelMask};
use crate::rng;

const MIN_CROP_FRACTION: f64 = 0.6;
const CROP_ATTEMPTS: u64 = 5;

/// Random horizontal mirror (p = 0.5) followed by a random crop keeping
/// 60-100% of each dimension, applied identically to image and mask.
///
/// Crops that lose every foreground pixel are redrawn up to five times; after
/// that the input pair is returned unchanged.
pub fn augment_image(image: &Image, mask: &LabelMask, seed: u64) -> Result<(Image, LabelMask)> {
    if image.size() != mask.size() {
        return Err(Error::DimensionMismatch(format!(
            "image is {:?} but mask is {:?}",
            image.size(),
            mask.size()
        )));
    }
    let (w, h) = image.size();
    let had_foreground = mask.as_raw().iter().any(|&l| l != 0);
    let mut r = rng::stream(seed, "image-augment", &[]);
    let mirror = r.random_bool(0.5);
    let (img, msk) = if mirror {
        (image.mirror_horizontal(), mask.mirror_horizontal())
    } else {
        (image.clone(), mask.clone())
    };
    let side = |full: usize, r: &mut rng::Rng| -> usize {
        let frac = r.random_range(MIN_CROP_FRACTION..=1.0);
        ((full as f64 * frac).round() as usize).clamp(Image::MIN_SIDE.min(full), full)
    };
    for _ in 0..CROP_ATTEMPTS {
        let cw = side(w, &mut r);
        let ch = side(h, &mut r);
        let x0 = r.random_range(0..=w - cw);
        let y0 = r.random_range(0..=h - ch);
        let cropped = msk.crop(x0, y0, cw, ch)?;
        if !had_foreground || cropped.as_raw().iter().any(|&l| l != 0) {
            return Ok((img.crop(x0, y0, cw, ch)?, cropped));
        }
    }
    Ok((image.clone(), mask.clone()))
}
