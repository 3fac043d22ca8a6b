//! Train, infer and evaluate jobs.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::Backends;
use crate::classifier::{
    load_checkpoint, save_checkpoint, train_few_shot, CheckpointHeader, ClassifierModel, ForwardMode,
    NodeProbabilities, TrainingReport,
};
use crate::datasets::{sample_splits, FewShotSplit, GranularityMap};
use crate::error::{Error, Result};
use crate::graph::{GraphMode, GraphPipeline, SceneGraph};
use crate::image::{Image, LabelMask};
use crate::metrics::{evaluate_image, write_csv, write_jsonl, MetricReport, MetricSummary};
use crate::prompts::{build_prompts, PromptConfig, PromptSet};
use crate::rng;
use crate::segmenter::{run_segmentation, SegmentationResult};

use super::config::JobConfig;
use super::{config_hash, parallel_map};

pub const CHECKPOINT_FILE: &str = "model.gsckpt";

/// Wall-clock seconds of one job. Inference is split into node
/// classification (detection through the classifier forward pass) and
/// segmentation (prompt engineering, segmenter calls, fusion).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub train_secs: Option<f64>,
    pub classification_secs: f64,
    pub segmentation_secs: f64,
    pub total_secs: f64,
}

impl TimingRecord {
    pub fn inference(classification_secs: f64, segmentation_secs: f64) -> Self {
        Self {
            train_secs: None,
            classification_secs,
            segmentation_secs,
            total_secs: classification_secs + segmentation_secs,
        }
    }
}

/// A trained classifier with everything needed to segment new images.
#[derive(Clone, Debug)]
pub struct TrainedPipeline {
    pub graph: GraphPipeline,
    pub model: ClassifierModel,
    pub prompts: PromptConfig,
    pub class_names: Vec<String>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct InferOutput {
    pub graph: SceneGraph,
    pub probs: NodeProbabilities,
    pub prompts: PromptSet,
    pub segmentation: SegmentationResult,
    pub timing: TimingRecord,
}

impl TrainedPipeline {
    pub fn num_classes(&self) -> usize {
        self.model.config().num_classes
    }

    /// Per-image seed, so results never depend on evaluation order.
    pub fn image_seed(&self, image_id: u64) -> u64 {
        rng::derive_str(self.seed, "image", &[image_id])
    }

    pub fn classify(&self, image: &Image, image_id: u64) -> Result<(SceneGraph, NodeProbabilities)> {
        let graph = self.graph.build(image, GraphMode::Inference, self.image_seed(image_id))?;
        let probs = self.model.forward(&graph, ForwardMode::Eval)?;
        Ok((graph, probs))
    }

    /// Detect, enhance, build the inference graph, classify, prompt,
    /// segment and fuse.
    pub fn infer(&self, image: &Image, image_id: u64) -> Result<InferOutput> {
        let started = Instant::now();
        let (graph, probs) = self.classify(image, image_id)?;
        let classified = Instant::now();
        let prompts = build_prompts(&probs, &graph, &self.prompts, self.image_seed(image_id))?;
        let segmentation = run_segmentation(image, &prompts, self.graph.backends.segmenter.as_ref())?;
        let done = Instant::now();
        Ok(InferOutput {
            graph,
            probs,
            prompts,
            segmentation,
            timing: TimingRecord::inference(
                (classified - started).as_secs_f64(),
                (done - classified).as_secs_f64(),
            ),
        })
    }

    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            classifier: self.model.config().clone(),
            graph: self.graph.graph.clone(),
            class_names: self.class_names.clone(),
            descriptor_dim: self.graph.backends.detector.descriptor_dim(),
            logit_dim: self.graph.prompts.len(),
            extra: serde_json::json!({
                "text_prompts": self.graph.prompts,
                "detector": self.graph.detector,
                "prompts": self.prompts,
                "seed": self.seed,
                "backends": {
                    "detector": self.graph.backends.detector.name(),
                    "logits": self.graph.backends.logits.name(),
                    "segmenter": self.graph.backends.segmenter.name(),
                },
            }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        save_checkpoint(std::io::BufWriter::new(file), &self.model, &self.header())
    }

    /// Rebuilds a pipeline around a saved model. The text prompts come from
    /// the checkpoint; the detector must produce the descriptor length the
    /// model was trained on.
    pub fn load(path: &Path, cfg: &JobConfig, backends: Backends) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let (model, header) = load_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))?;
        let dim = backends.detector.descriptor_dim();
        if header.descriptor_dim != dim {
            return Err(Error::Checkpoint(format!(
                "{} was trained on {}-dimensional descriptors but detector `{}` produces {dim}",
                path.display(),
                header.descriptor_dim,
                backends.detector.name()
            )));
        }
        let text_prompts: Vec<String> = match header.extra.get("text_prompts") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => cfg.text_prompts.clone(),
        };
        if text_prompts.len() != header.logit_dim {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects {} logit features but {} text prompts are configured",
                header.logit_dim,
                text_prompts.len()
            )));
        }
        let mut graph = cfg.graph_pipeline(backends);
        graph.prompts = text_prompts;
        graph.graph = header.graph.clone();
        Ok(Self {
            graph,
            model,
            prompts: cfg.prompts.clone(),
            class_names: header.class_names,
            seed: cfg.seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainJobReport {
    pub config_hash: String,
    pub seed: u64,
    pub train_seed: u64,
    pub granularity: String,
    pub class_names: Vec<String>,
    pub input_dim: usize,
    pub support_size: usize,
    pub num_parameters: usize,
    pub training: TrainingReport,
    pub timing: TimingRecord,
}

impl TrainJobReport {
    /// Copy with every wall-clock field zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.training.wall_time_secs = 0.0;
        r.timing = TimingRecord::default();
        r
    }
}

/// Trains on `support` (masks already at the job's granularity). With `out`
/// set, writes `model.gsckpt` and `train_report.json` there.
pub fn run_train(
    cfg: &JobConfig,
    backends: Backends,
    map: &GranularityMap,
    support: &[(Image, LabelMask)],
    out: Option<&Path>,
) -> Result<(TrainedPipeline, TrainJobReport)> {
    if support.is_empty() {
        return Err(Error::Config("the support set is empty".into()));
    }
    let graph = cfg.graph_pipeline(backends);
    let classifier_cfg = cfg.classifier.to_config(map.num_classes(), graph.input_dim());
    let train_cfg = cfg.train_config();
    let started = Instant::now();
    let (model, training) =
        train_few_shot(support, &graph, &classifier_cfg, &train_cfg).map_err(|e| e.context("training"))?;
    let train_secs = started.elapsed().as_secs_f64();
    let pipeline = TrainedPipeline {
        graph,
        model,
        prompts: cfg.prompts.clone(),
        class_names: map.class_names.clone(),
        seed: cfg.seed,
    };
    let report = TrainJobReport {
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        train_seed: train_cfg.seed,
        granularity: map.name.clone(),
        class_names: map.class_names.clone(),
        input_dim: classifier_cfg.input_dim,
        support_size: support.len(),
        num_parameters: pipeline.model.num_parameters(),
        training,
        timing: TimingRecord {
            train_secs: Some(train_secs),
            ..TimingRecord::default()
        },
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        pipeline.save(&dir.join(CHECKPOINT_FILE))?;
        std::fs::write(dir.join("train_report.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok((pipeline, report))
}

/// Anything that turns an image into a fused label mask.
pub trait Predictor: Sync {
    fn predict(&self, image: &Image, image_id: u64) -> Result<LabelMask>;
}

impl Predictor for TrainedPipeline {
    fn predict(&self, image: &Image, image_id: u64) -> Result<LabelMask> {
        Ok(self.infer(image, image_id)?.segmentation.fused)
    }
}

/// Scores `predictor` on `test`, one worker per core. Item `i` is predicted
/// with image id `ids[i]`. A pipeline failure on one image (for example no
/// prompts) is scored as an all-background prediction; configuration errors
/// abort.
pub fn evaluate_predictor(
    predictor: &dyn Predictor,
    test: &[(Image, LabelMask)],
    ids: &[u64],
    num_classes: usize,
    background: Option<usize>,
) -> Result<Vec<MetricReport>> {
    if ids.len() != test.len() {
        return Err(Error::InvalidInput(format!("{} ids for {} test items", ids.len(), test.len())));
    }
    let bg = background.unwrap_or(0) as u8;
    parallel_map(test, |i, (image, gt)| {
        let fused = match predictor.predict(image, ids[i]) {
            Ok(m) => m,
            Err(e) if e.is_config() => return Err(e),
            Err(e) => {
                log::warn!("test image {}: {e}; scored as background", ids[i]);
                LabelMask::filled(gt.width(), gt.height(), bg)
            }
        };
        evaluate_image(&fused, gt, num_classes, background.map(|b| b as u8))
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub support: Vec<usize>,
    pub summary: MetricSummary,
    pub per_image: Vec<(String, MetricReport)>,
}

/// Per-fold results with their mean and (population) standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldResult>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_folds(folds: Vec<FoldResult>) -> Self {
        let pick = |f: fn(&MetricSummary) -> f64| mean_std(&folds.iter().map(|r| f(&r.summary)).collect::<Vec<_>>());
        let (j, js) = pick(|s| s.mean_j);
        let (f, fs) = pick(|s| s.mean_f);
        let (d, ds) = pick(|s| s.mean_dice);
        let (jf, jfs) = pick(|s| s.j_and_f);
        let images = folds.iter().map(|r| r.summary.images).sum();
        Self {
            mean: MetricSummary {
                images,
                mean_j: j,
                mean_f: f,
                mean_dice: d,
                j_and_f: jf,
            },
            std: MetricSummary {
                images,
                mean_j: js,
                mean_f: fs,
                mean_dice: ds,
                j_and_f: jfs,
            },
            folds,
        }
    }

    /// `metrics.csv` (per image, fold-prefixed names, with a mean row),
    /// `metrics.jsonl` and `summary.json` on the 0-100 scale.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let rows: Vec<(String, MetricReport)> = self
            .folds
            .iter()
            .flat_map(|f| f.per_image.iter().map(move |(n, r)| (format!("fold{}/{n}", f.fold), r.clone())))
            .collect();
        write_csv(&dir.join("metrics.csv"), &rows)?;
        write_jsonl(&dir.join("metrics.jsonl"), &rows)?;
        let folds: Vec<_> = self
            .folds
            .iter()
            .map(|f| serde_json::json!({"fold": f.fold, "support": f.support, "metrics": f.summary.percent()}))
            .collect();
        let summary = serde_json::json!({
            "folds": folds,
            "mean": self.mean.percent(),
            "std": self.std.percent(),
        });
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }
}

/// Evaluates one predictor per fold on a shared test set.
pub fn run_evaluate(
    predictors: &[&dyn Predictor],
    test: &[(Image, LabelMask)],
    test_ids: &[u64],
    num_classes: usize,
    background: Option<usize>,
    out: Option<&Path>,
) -> Result<EvalReport> {
    let mut folds = Vec::with_capacity(predictors.len());
    for (fold, p) in predictors.iter().enumerate() {
        let reports = evaluate_predictor(*p, test, test_ids, num_classes, background)?;
        folds.push(FoldResult {
            fold,
            support: Vec::new(),
            summary: MetricSummary::from_reports(&reports),
            per_image: test_ids.iter().map(|i| format!("{i:04}")).zip(reports).collect(),
        });
    }
    let report = EvalReport::from_folds(folds);
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}

/// The few-shot protocol: `cfg.data.folds` support draws of
/// `cfg.data.n_support` items, one training run per fold, every fold scored
/// on the same test items. Those are `cfg.data.test` when given (supports
/// are then drawn from the remaining items), otherwise everything no fold
/// uses for support.
pub fn run_cross_validation(
    cfg: &JobConfig,
    backends: Backends,
    map: &GranularityMap,
    data: &[(Image, LabelMask)],
    out: Option<&Path>,
) -> Result<EvalReport> {
    if let Some(&i) = cfg.data.test.iter().find(|&&i| i >= data.len()) {
        return Err(Error::Config(format!("test index {i} but the dataset has {} items", data.len())));
    }
    // Supports are drawn from the items outside an explicit test set.
    let pool: Vec<usize> = (0..data.len()).filter(|i| !cfg.data.test.contains(i)).collect();
    let splits: Vec<FewShotSplit> = sample_splits(pool.len(), cfg.data.n_support, cfg.data.folds, cfg.seed)?
        .into_iter()
        .map(|mut s| {
            s.support = s.support.iter().map(|&i| pool[i]).collect();
            s.test = s.test.iter().map(|&i| pool[i]).collect();
            s
        })
        .collect();
    let test_ids: Vec<usize> = if cfg.data.test.is_empty() {
        splits[0].test.clone()
    } else {
        cfg.data.test.clone()
    };
    let test: Vec<(Image, LabelMask)> = test_ids.iter().map(|&i| data[i].clone()).collect();
    let ids: Vec<u64> = test_ids.iter().map(|&i| i as u64).collect();
    let mut folds = Vec::new();
    for split in &splits {
        let support: Vec<(Image, LabelMask)> = split.support.iter().map(|&i| data[i].clone()).collect();
        let mut fold_cfg = cfg.clone();
        fold_cfg.train.seed = rng::derive_str(cfg.train.seed, "fold", &[split.fold as u64]);
        let fold_out = out.map(|d| d.join(format!("fold{}", split.fold)));
        let (pipeline, _) = run_train(&fold_cfg, backends.clone(), map, &support, fold_out.as_deref())
            .map_err(|e| e.context(format!("fold {}", split.fold)))?;
        let reports = evaluate_predictor(&pipeline, &test, &ids, map.num_classes(), cfg.prompts.background_class)?;
        folds.push(FoldResult {
            fold: split.fold,
            support: split.support.clone(),
            summary: MetricSummary::from_reports(&reports),
            per_image: ids.iter().map(|i| format!("{i:04}")).zip(reports).collect(),
        });
    }
    let report = EvalReport::from_folds(folds);
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}

/// J&F (0-100) by support size (rows) and granularity (columns).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FewShotTable {
    pub granularities: Vec<String>,
    pub rows: Vec<(usize, Vec<Option<f64>>)>,
}

impl FewShotTable {
    pub fn new(granularities: Vec<String>) -> Self {
        Self {
            granularities,
            rows: Vec::new(),
        }
    }

    /// Records `summary` (0-1 scale) at `(samples, granularity)`.
    pub fn insert(&mut self, samples: usize, granularity: &str, summary: &MetricSummary) -> Result<()> {
        let col = self
            .granularities
            .iter()
            .position(|g| g == granularity)
            .ok_or_else(|| Error::Config(format!("granularity `{granularity}` is not a table column")))?;
        let width = self.granularities.len();
        let pos = match self.rows.iter().position(|(s, _)| *s >= samples) {
            Some(p) if self.rows[p].0 == samples => p,
            Some(p) => {
                self.rows.insert(p, (samples, vec![None; width]));
                p
            }
            None => {
                self.rows.push((samples, vec![None; width]));
                self.rows.len() - 1
            }
        };
        self.rows[pos].1[col] = Some(summary.j_and_f * 100.0);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("Samples,{}\n", self.granularities.join(","));
        for (samples, values) in &self.rows {
            let cells: Vec<String> = values
                .iter()
                .map(|v| v.map(|x| format!("{x:.1}")).unwrap_or_default())
                .collect();
            out += &format!("{samples},{}\n", cells.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oracle(Vec<LabelMask>);

    impl Predictor for Oracle {
        fn predict(&self, _: &Image, id: u64) -> Result<LabelMask> {
            Ok(self.0[id as usize].clone())
        }
    }

    fn items() -> Vec<(Image, LabelMask)> {
        (0..4)
            .map(|i| {
                let mask = LabelMask::from_fn(40, 40, |x, y| ((x / (8 + i)) % 3) as u8 * u8::from(y > 10));
                (Image::filled(40, 40, [9, 9, 9]).unwrap(), mask)
            })
            .collect()
    }

    #[test]
    fn oracle_scores_full_marks() {
        let data = items();
        let oracle = Oracle(data.iter().map(|(_, m)| m.clone()).collect());
        let r = run_evaluate(&[&oracle, &oracle], &data, &[0, 1, 2, 3], 3, Some(0), None).unwrap();
        assert_eq!(r.mean.percent().j_and_f, 100.0);
        assert_eq!(r.std.j_and_f, 0.0);
    }

    #[test]
    fn aggregate_is_mean_of_folds() {
        let data = items();
        let good = Oracle(data.iter().map(|(_, m)| m.clone()).collect());
        let blank = Oracle(data.iter().map(|(_, m)| LabelMask::filled(m.width(), m.height(), 0)).collect());
        let r = run_evaluate(&[&good, &blank], &data, &[0, 1, 2, 3], 3, Some(0), None).unwrap();
        let fold_jf: Vec<f64> = r.folds.iter().map(|f| f.summary.j_and_f).collect();
        assert!((r.mean.j_and_f - (fold_jf[0] + fold_jf[1]) / 2.0).abs() < 1e-12);
        assert!((r.std.j_and_f - (fold_jf[0] - fold_jf[1]).abs() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn timing_total_is_sum() {
        let t = TimingRecord::inference(0.25, 0.5);
        assert_eq!(t.total_secs, 0.75);
    }

    #[test]
    fn few_shot_table_layout() {
        let names: Vec<String> = ["Truck", "TruckCrane"].iter().map(|s| s.to_string()).collect();
        let mut t = FewShotTable::new(names);
        let s = |v: f64| MetricSummary {
            images: 1,
            mean_j: v,
            mean_f: v,
            mean_dice: v,
            j_and_f: v,
        };
        t.insert(5, "TruckCrane", &s(0.757)).unwrap();
        t.insert(1, "Truck", &s(0.892)).unwrap();
        assert!(t.insert(1, "Low", &s(0.5)).is_err());
        assert_eq!(t.to_csv(), "Samples,Truck,TruckCrane\n1,89.2,\n5,,75.7\n");
    }
}
