//! Foundation-model interfaces and their deterministic mocks.
//!
//! Three roles feed the pipeline:
//!
//! - [`InterestPointDetector`]: sparse keypoints with descriptors
//! - [`LogitProvider`]: per-pixel text-conditioned logits
//! - [`PromptableSegmenter`]: mask triplets from point and box prompts
//!
//! Backends are immutable once built and may be shared between threads. Real
//! model adapters are not part of this crate; they are plugged in through
//! [`BackendRegistry`] under the names used in job configs.

mod mock_detector;
mod mock_logits;
mod mock_segmenter;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use mock_detector::MockGridDetector;
pub use mock_logits::MockColorLogits;
pub use mock_segmenter::MockRegionSegmenter;

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Image};

/// Env var naming the directory real adapters load weights from.
pub const WEIGHTS_DIR_ENV: &str = "GRAPHSEG_WEIGHTS_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterestPoint {
    pub x: f32,
    pub y: f32,
    pub descriptor: Vec<f32>,
    pub confidence: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Non-maximum suppression radius in pixels.
    pub nms_radius: u32,
    /// Point budget the detector must reach, padding if necessary.
    pub min_points: usize,
    pub confidence_threshold: f32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            nms_radius: 4,
            min_points: 512,
            confidence_threshold: 1.0e-4,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=6).contains(&self.nms_radius) {
            return Err(Error::Config(format!("nms_radius {} outside [2, 6]", self.nms_radius)));
        }
        if !(512..=2048).contains(&self.min_points) {
            return Err(Error::Config(format!(
                "min_points {} outside [512, 2048]",
                self.min_points
            )));
        }
        if !(1.0e-4..=5.0e-4).contains(&self.confidence_threshold) {
            return Err(Error::Config(format!(
                "confidence_threshold {} outside [1e-4, 5e-4]",
                self.confidence_threshold
            )));
        }
        Ok(())
    }
}

/// Per-pixel logits for one text prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
    prompt: String,
}

impl LogitMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>, prompt: impl Into<String>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "logit map holds {} values for {width}x{height}",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            prompt: prompt.into(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// Axis-aligned box `(x_min, y_min, x_max, y_max)` in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPrompt {
    pub x_min: f32,
    pub y_min: f32,
    pub x_max: f32,
    pub y_max: f32,
}

impl BoxPrompt {
    pub fn is_valid(&self) -> bool {
        self.x_min <= self.x_max && self.y_min <= self.y_max
    }

    pub fn contains(&self, x: f32, y: f32) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn center(&self) -> (f32, f32) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }
}

/// Prompts for one class: points with foreground flags and an optional box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPrompt {
    pub class_id: usize,
    pub points: Vec<[f32; 2]>,
    /// `true` marks a foreground point; one entry per point.
    pub labels: Vec<bool>,
    pub bbox: Option<BoxPrompt>,
}

/// The three candidate masks a promptable segmenter returns, with quality
/// scores.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskTriplet {
    pub masks: [BinaryMask; 3],
    pub scores: [f32; 3],
}

pub trait InterestPointDetector: Send + Sync {
    fn name(&self) -> &str;

    /// Descriptor length `D`; constant for the lifetime of the backend.
    fn descriptor_dim(&self) -> usize;

    /// Points with confidence at or above `threshold`, non-maximum suppressed
    /// at `cfg.nms_radius`.
    fn detect_raw(&self, image: &Image, cfg: &DetectorConfig, threshold: f32, seed: u64)
        -> Result<Vec<InterestPoint>>;

    /// Descriptors sampled at arbitrary locations, used to pad sparse
    /// detections.
    fn describe(&self, image: &Image, locations: &[[f32; 2]]) -> Result<Vec<Vec<f32>>>;
}

pub trait LogitProvider: Send + Sync {
    fn name(&self) -> &str;

    fn logit_map(&self, image: &Image, prompt: &str) -> Result<LogitMap>;
}

pub trait PromptableSegmenter: Send + Sync {
    fn name(&self) -> &str;

    /// One triplet per prompted class. Classes with neither points nor a box
    /// are skipped.
    fn segment(&self, image: &Image, prompts: &[ClassPrompt]) -> Result<BTreeMap<usize, MaskTriplet>>;

    /// Whether concurrent calls on one instance are safe and independent.
    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Detects interest points, escalating when the point budget is not met.
///
/// If fewer than `cfg.min_points` points survive the confidence threshold,
/// the threshold is halved up to three times. If the budget is still not met,
/// the set is padded with a uniform grid at `nms_radius` spacing, skipping grid
/// sites within half a pixel of an existing point.
pub fn detect_points(
    detector: &dyn InterestPointDetector,
    image: &Image,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<Vec<InterestPoint>> {
    if image.width() < Image::MIN_SIDE || image.height() < Image::MIN_SIDE {
        return Err(Error::InvalidInput("image smaller than 32x32".into()));
    }
    let mut threshold = cfg.confidence_threshold;
    let mut points = detector.detect_raw(image, cfg, threshold, seed)?;
    for _ in 0..3 {
        if points.len() >= cfg.min_points {
            break;
        }
        threshold *= 0.5;
        points = detector.detect_raw(image, cfg, threshold, seed)?;
    }
    if points.len() < cfg.min_points {
        pad_with_grid(detector, image, cfg, &mut points)?;
    }
    if points.is_empty() {
        return Err(Error::EmptyDetection(format!(
            "{} returned no points for a {}x{} image",
            detector.name(),
            image.width(),
            image.height()
        )));
    }
    let dim = detector.descriptor_dim();
    if let Some(bad) = points.iter().find(|p| p.descriptor.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "{} declared D={dim} but produced a descriptor of length {}",
            detector.name(),
            bad.descriptor.len()
        )));
    }
    Ok(points)
}

fn pad_with_grid(
    detector: &dyn InterestPointDetector,
    image: &Image,
    cfg: &DetectorConfig,
    points: &mut Vec<InterestPoint>,
) -> Result<()> {
    let spacing = cfg.nms_radius.max(1) as f32;
    let nx = (image.width() as f32 / spacing).floor() as usize;
    let ny = (image.height() as f32 / spacing).floor() as usize;
    let mut sites = Vec::new();
    'grid: for gy in 0..ny {
        for gx in 0..nx {
            if points.len() + sites.len() >= cfg.min_points {
                break 'grid;
            }
            let x = (gx as f32 + 0.5) * spacing;
            let y = (gy as f32 + 0.5) * spacing;
            let taken = points
                .iter()
                .any(|p| (p.x - x).powi(2) + (p.y - y).powi(2) <= 0.25);
            if !taken {
                sites.push([x, y]);
            }
        }
    }
    let descriptors = detector.describe(image, &sites)?;
    points.extend(sites.into_iter().zip(descriptors).map(|([x, y], descriptor)| InterestPoint {
        x,
        y,
        descriptor,
        confidence: 0.0,
    }));
    Ok(())
}

/// Options shared by backend factories.
#[derive(Clone, Debug)]
pub struct BackendOptions {
    pub seed: u64,
    /// Mock logit provider: prompt text to RGB key.
    pub color_keys: BTreeMap<String, [u8; 3]>,
    pub logit_magnitude: f32,
    pub logit_noise: f32,
    /// RGB distance under which a pixel matches a color key.
    pub color_tolerance: f32,
    /// RGB distance bound for the mock segmenter's region growing.
    pub region_tolerance: f32,
    pub weights_dir: Option<PathBuf>,
}

impl Default for BackendOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            color_keys: BTreeMap::new(),
            logit_magnitude: 4.0,
            logit_noise: 0.5,
            color_tolerance: 48.0,
            region_tolerance: 40.0,
            weights_dir: std::env::var_os(WEIGHTS_DIR_ENV).map(PathBuf::from),
        }
    }
}

/// A complete set of backends for one pipeline.
#[derive(Clone)]
pub struct Backends {
    pub detector: Arc<dyn InterestPointDetector>,
    pub logits: Arc<dyn LogitProvider>,
    pub segmenter: Arc<dyn PromptableSegmenter>,
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backends")
            .field("detector", &self.detector.name())
            .field("logits", &self.logits.name())
            .field("segmenter", &self.segmenter.name())
            .finish()
    }
}

impl Backends {
    /// Mock detector, logit provider and segmenter.
    pub fn mock(opts: &BackendOptions) -> Self {
        Self {
            detector: Arc::new(MockGridDetector::new()),
            logits: Arc::new(MockColorLogits::from_options(opts)),
            segmenter: Arc::new(MockRegionSegmenter::new(opts.region_tolerance)),
        }
    }
}

type Factory<T> = Box<dyn Fn(&BackendOptions) -> Result<Arc<T>> + Send + Sync>;

/// Name-to-constructor tables for each backend role.
pub struct BackendRegistry {
    detectors: BTreeMap<String, Factory<dyn InterestPointDetector>>,
    logits: BTreeMap<String, Factory<dyn LogitProvider>>,
    segmenters: BTreeMap<String, Factory<dyn PromptableSegmenter>>,
}

fn plugin_missing<T: ?Sized>(name: &'static str) -> Factory<T> {
    Box::new(move |opts: &BackendOptions| {
        let dir = opts
            .weights_dir
            .as_ref()
            .map(|d| d.display().to_string())
            .unwrap_or_else(|| format!("unset (set {WEIGHTS_DIR_ENV})"));
        Err(Error::BackendUnavailable {
            name: name.to_string(),
            reason: format!("no adapter registered for this build; weights dir {dir}"),
        })
    })
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self {
            detectors: BTreeMap::new(),
            logits: BTreeMap::new(),
            segmenters: BTreeMap::new(),
        }
    }

    /// Mocks under `mock-grid`, `mock-color`, `mock-region`, and placeholder
    /// entries for `superpoint`, `clipseg` and `sam` that report the adapter
    /// as unavailable until a plugin replaces them.
    pub fn with_defaults() -> Self {
        let mut reg = Self::empty();
        reg.register_detector("mock-grid", |_| Ok(Arc::new(MockGridDetector::new())));
        reg.register_logits("mock-color", |o| Ok(Arc::new(MockColorLogits::from_options(o))));
        reg.register_segmenter("mock-region", |o| {
            Ok(Arc::new(MockRegionSegmenter::new(o.region_tolerance)))
        });
        reg.detectors.insert("superpoint".into(), plugin_missing("superpoint"));
        reg.logits.insert("clipseg".into(), plugin_missing("clipseg"));
        reg.segmenters.insert("sam".into(), plugin_missing("sam"));
        reg
    }

    pub fn register_detector<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&BackendOptions) -> Result<Arc<dyn InterestPointDetector>> + Send + Sync + 'static,
    {
        self.detectors.insert(name.to_string(), Box::new(factory));
    }

    pub fn register_logits<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&BackendOptions) -> Result<Arc<dyn LogitProvider>> + Send + Sync + 'static,
    {
        self.logits.insert(name.to_string(), Box::new(factory));
    }

    pub fn register_segmenter<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&BackendOptions) -> Result<Arc<dyn PromptableSegmenter>> + Send + Sync + 'static,
    {
        self.segmenters.insert(name.to_string(), Box::new(factory));
    }

    pub fn detector_names(&self) -> impl Iterator<Item = &str> {
        self.detectors.keys().map(String::as_str)
    }

    pub fn build(
        &self,
        detector: &str,
        logits: &str,
        segmenter: &str,
        opts: &BackendOptions,
    ) -> Result<Backends> {
        fn lookup<'a, T: ?Sized>(
            table: &'a BTreeMap<String, Factory<T>>,
            role: &str,
            name: &str,
        ) -> Result<&'a Factory<T>> {
            table.get(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown {role} backend `{name}` (known: {})",
                    table.keys().cloned().collect::<Vec<_>>().join(", ")
                ))
            })
        }
        Ok(Backends {
            detector: lookup(&self.detectors, "detector", detector)?(opts)?,
            logits: lookup(&self.logits, "logits", logits)?(opts)?,
            segmenter: lookup(&self.segmenters, "segmenter", segmenter)?(opts)?,
        })
    }
}
