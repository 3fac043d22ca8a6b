use std::collections::BTreeMap;

use super::{BackendOptions, LogitMap, LogitProvider};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{derive_str, hash_unit};

/// Color-keyed logit provider.
///
/// Each prompt is registered with an RGB key. A pixel within
/// `tolerance` (Euclidean RGB distance) of the key scores `+magnitude`, any
/// other pixel `-magnitude`, plus uniform noise in `[-noise, noise]` that is a
/// pure function of `(seed, prompt, x, y)`.
#[derive(Clone, Debug)]
pub struct MockColorLogits {
    keys: BTreeMap<String, [u8; 3]>,
    magnitude: f32,
    noise: f32,
    tolerance: f32,
    seed: u64,
}

impl MockColorLogits {
    pub fn new(keys: BTreeMap<String, [u8; 3]>, seed: u64) -> Self {
        Self {
            keys,
            magnitude: 4.0,
            noise: 0.5,
            tolerance: 48.0,
            seed,
        }
    }

    pub fn from_options(opts: &BackendOptions) -> Self {
        Self {
            keys: opts.color_keys.clone(),
            magnitude: opts.logit_magnitude,
            noise: opts.logit_noise,
            tolerance: opts.color_tolerance,
            seed: opts.seed,
        }
    }

    pub fn with_magnitude(mut self, magnitude: f32) -> Self {
        self.magnitude = magnitude;
        self
    }

    pub fn with_noise(mut self, noise: f32) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f32) -> Self {
        self.tolerance = tolerance;
        self
    }
}

impl LogitProvider for MockColorLogits {
    fn name(&self) -> &str {
        "mock-color"
    }

    fn logit_map(&self, image: &Image, prompt: &str) -> Result<LogitMap> {
        if prompt.trim().is_empty() {
            return Err(Error::InvalidInput("empty text prompt".into()));
        }
        let key = *self
            .keys
            .get(prompt)
            .ok_or_else(|| Error::UnknownPrompt(prompt.to_string()))?;
        let stream = derive_str(self.seed, prompt, &[]);
        let tol2 = self.tolerance * self.tolerance;
        let (w, h) = image.size();
        let mut values = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let p = image.pixel(x, y);
                let d2: f32 = (0..3).map(|c| (p[c] as f32 - key[c] as f32).powi(2)).sum();
                let base = if d2 <= tol2 { self.magnitude } else { -self.magnitude };
                let jitter = (hash_unit(stream, &[x as u64, y as u64]) * 2.0 - 1.0) * self.noise;
                values.push(base + jitter);
            }
        }
        LogitMap::new(w, h, values, prompt)
    }
}
