//! Enhancement, prompt-type and point-count ablations.

use serde::{Deserialize, Serialize};

use crate::backends::Backends;
use crate::classifier::{extract_labels, node_f1};
use crate::datasets::GranularityMap;
use crate::error::Result;
use crate::image::{Image, LabelMask};
use crate::metrics::MetricSummary;
use crate::prompts::PromptType;

use super::config::JobConfig;
use super::jobs::{evaluate_predictor, run_train, TrainedPipeline};
use super::parallel_map;

/// One ablation setting. With `enhancement` off no text prompts are used, so
/// the classifier sees bare detector descriptors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub enhancement: bool,
    pub prompt_type: PromptType,
    pub point_samples: usize,
}

impl AblationVariant {
    /// The four settings of the reference comparison. The 25-point row is
    /// capped at the largest allowed sample count.
    pub fn standard() -> Vec<Self> {
        let v = |enhancement, prompt_type, point_samples| Self {
            enhancement,
            prompt_type,
            point_samples,
        };
        vec![
            v(true, PromptType::PointAndBox, 10),
            v(false, PromptType::Point, 10),
            v(true, PromptType::Point, 20),
            v(true, PromptType::Point, 10),
        ]
    }

    pub fn apply(&self, cfg: &mut JobConfig) {
        if !self.enhancement {
            cfg.text_prompts.clear();
        }
        cfg.prompts.prompt_type = self.prompt_type;
        cfg.prompts.point_samples = self.point_samples;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub input_dim: usize,
    /// Mean node F1 over the test items.
    pub node_f1: f64,
    pub metrics: MetricSummary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Values on the 0-100 scale.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("enhancement,prompt,points,input_dim,node_f1,dice,j_and_f\n");
        for r in &self.rows {
            let m = r.metrics.percent();
            out += &format!(
                "{},{},{},{},{:.1},{:.1},{:.1}\n",
                if r.variant.enhancement { "on" } else { "off" },
                r.variant.prompt_type,
                r.variant.point_samples,
                r.input_dim,
                r.node_f1 * 100.0,
                m.mean_dice,
                m.j_and_f
            );
        }
        out
    }
}

/// Mean node F1 of `pipeline` over `test`, image `i` seeded with `ids[i]`.
pub fn mean_node_f1(pipeline: &TrainedPipeline, test: &[(Image, LabelMask)], ids: &[u64]) -> Result<f64> {
    let n = pipeline.num_classes();
    let scores = parallel_map(test, |i, (image, gt)| {
        let (graph, probs) = pipeline.classify(image, ids[i])?;
        node_f1(&probs.labels(), &extract_labels(graph.nodes(), gt, n)?, n)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len().max(1) as f64)
}

/// One row per variant. Training depends only on the enhancement flag, so at
/// most two models are trained and shared across prompt settings.
pub fn run_ablation(
    cfg: &JobConfig,
    backends: Backends,
    map: &GranularityMap,
    support: &[(Image, LabelMask)],
    test: &[(Image, LabelMask)],
    variants: &[AblationVariant],
) -> Result<AblationTable> {
    let ids: Vec<u64> = (0..test.len() as u64).collect();
    let mut trained: [Option<(TrainedPipeline, f64)>; 2] = [None, None];
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let mut vcfg = cfg.clone();
        v.apply(&mut vcfg);
        vcfg.validate()?;
        let slot = &mut trained[usize::from(v.enhancement)];
        if slot.is_none() {
            let (pipeline, _) = run_train(&vcfg, backends.clone(), map, support, None)?;
            let f1 = mean_node_f1(&pipeline, test, &ids)?;
            *slot = Some((pipeline, f1));
        }
        let (pipeline, f1) = slot.as_ref().expect("trained above");
        let mut pipeline = pipeline.clone();
        pipeline.prompts = vcfg.prompts.clone();
        let reports = evaluate_predictor(&pipeline, test, &ids, map.num_classes(), vcfg.prompts.background_class)?;
        rows.push(AblationRow {
            variant: *v,
            input_dim: pipeline.model.config().input_dim,
            node_f1: *f1,
            metrics: MetricSummary::from_reports(&reports),
        });
    }
    Ok(AblationTable { rows })
}
