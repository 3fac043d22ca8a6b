//! Tuned per-granularity settings and the desk-scale synthetic preset.

use crate::classifier::ModelType;
use crate::datasets::{synth, Granularity};
use crate::prompts::PromptType;

use super::config::JobConfig;

/// Best graph and prompt settings found for one granularity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BestRow {
    pub granularity: Granularity,
    pub nms_radius: u32,
    pub min_points: usize,
    pub k: usize,
    pub model_type: ModelType,
    pub prompt_type: PromptType,
    pub box_threshold: f64,
    pub point_threshold: f64,
    pub point_samples: usize,
}

const fn row(
    granularity: Granularity,
    (nms_radius, min_points, k): (u32, usize, usize),
    (box_threshold, point_threshold, point_samples): (f64, f64, usize),
) -> BestRow {
    BestRow {
        granularity,
        nms_radius,
        min_points,
        k,
        model_type: ModelType::Sage,
        prompt_type: PromptType::PointAndBox,
        box_threshold,
        point_threshold,
        point_samples,
    }
}

pub const BEST_ROWS: [BestRow; 5] = [
    row(Granularity::Truck, (4, 512, 32), (1.0, 1.0, 20)),
    row(Granularity::TruckCrane, (2, 1024, 32), (1.0, 0.8, 15)),
    row(Granularity::Low, (4, 1024, 32), (0.8, 1.0, 20)),
    row(Granularity::Medium, (6, 1024, 8), (1.0, 0.8, 10)),
    row(Granularity::High, (4, 512, 16), (0.8, 0.8, 15)),
];

pub fn best_row(g: Granularity) -> BestRow {
    BEST_ROWS.into_iter().find(|r| r.granularity == g).expect("one row per granularity")
}

/// Point budget of the desk preset; the synthetic canvases hold about 600
/// grid points at the smallest suppression radius.
pub const DESK_MIN_POINTS: usize = 512;
pub const DESK_SIZE: (usize, usize) = (96, 96);

impl JobConfig {
    /// Defaults with the tuned row of `g` applied.
    pub fn for_granularity(g: Granularity) -> Self {
        let r = best_row(g);
        let mut cfg = JobConfig {
            granularity: g.name().to_string(),
            ..JobConfig::default()
        };
        cfg.detector.nms_radius = r.nms_radius;
        cfg.detector.min_points = r.min_points;
        cfg.graph.k = r.k;
        cfg.classifier.model_type = r.model_type;
        cfg.prompts.prompt_type = r.prompt_type;
        cfg.prompts.box_threshold = r.box_threshold;
        cfg.prompts.point_threshold = r.point_threshold;
        cfg.prompts.point_samples = r.point_samples;
        cfg
    }

    /// The tuned row of `g` on 96x96 synthetic scenes with mock backends:
    /// the point budget drops to [`DESK_MIN_POINTS`] and the `truck` and
    /// `crane` text prompts are keyed to the synthetic part colors.
    pub fn desk(g: Granularity) -> Self {
        let mut cfg = Self::for_granularity(g);
        cfg.detector.min_points = DESK_MIN_POINTS;
        cfg.backend.color_keys = synth::Palette::default().prompt_keys();
        cfg.text_prompts = vec!["truck".to_string(), "crane".to_string()];
        cfg.synth.width = DESK_SIZE.0;
        cfg.synth.height = DESK_SIZE.1;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for g in Granularity::ALL {
            JobConfig::for_granularity(g).validate().unwrap();
            JobConfig::desk(g).validate().unwrap();
        }
    }

    #[test]
    fn low_row() {
        let cfg = JobConfig::for_granularity(Granularity::Low);
        assert_eq!((cfg.detector.nms_radius, cfg.detector.min_points, cfg.graph.k), (4, 1024, 32));
        assert_eq!(cfg.prompts.prompt_type, PromptType::PointAndBox);
        assert_eq!((cfg.prompts.box_threshold, cfg.prompts.point_threshold), (0.8, 1.0));
        assert_eq!(cfg.prompts.point_samples, 20);
    }
}
