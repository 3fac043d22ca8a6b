//! Random hyperparameter search.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backends::Backends;
use crate::classifier::{extract_labels, node_f1, ModelType};
use crate::datasets::GranularityMap;
use crate::error::{Error, Result};
use crate::image::{Image, LabelMask};
use crate::prompts::PromptType;
use crate::rng;

use super::config::{JobConfig, TuneStage};
use super::jobs::{evaluate_predictor, run_train};
use super::parallel_map;

/// Candidate values per hyperparameter. The continuous ranges are
/// discretized on the grid the reported runs use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub nms_radius: Vec<u32>,
    pub min_points: Vec<usize>,
    pub k: Vec<usize>,
    pub hidden_dim: Vec<usize>,
    pub integration_dim: Vec<usize>,
    pub confidence_threshold: Vec<f32>,
    pub model_type: Vec<ModelType>,
    pub dropout: Vec<f64>,
    pub edge_dropout: Vec<f64>,
    pub prompt_type: Vec<PromptType>,
    pub point_threshold: Vec<f64>,
    pub box_threshold: Vec<f64>,
    pub point_samples: Vec<usize>,
    pub trials: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        let tenths = |lo: u32, hi: u32| (lo..=hi).map(|t| t as f64 / 10.0).collect::<Vec<_>>();
        Self {
            nms_radius: (2..=6).collect(),
            min_points: vec![512, 1024, 1536, 2048],
            k: vec![8, 16, 24, 32],
            hidden_dim: vec![256, 512, 768, 1024],
            integration_dim: vec![128, 256, 384, 512],
            confidence_threshold: vec![1.0e-4, 2.0e-4, 3.0e-4, 4.0e-4, 5.0e-4],
            model_type: ModelType::ALL.to_vec(),
            dropout: tenths(1, 3),
            edge_dropout: tenths(3, 8),
            prompt_type: PromptType::ALL.to_vec(),
            point_threshold: tenths(6, 10),
            box_threshold: tenths(6, 10),
            point_samples: vec![5, 10, 15, 20],
            trials: 20,
        }
    }
}

/// The hyperparameters one trial varies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub nms_radius: u32,
    pub min_points: usize,
    pub k: usize,
    pub hidden_dim: usize,
    pub integration_dim: usize,
    pub confidence_threshold: f32,
    pub model_type: ModelType,
    pub dropout: f64,
    pub edge_dropout: f64,
    pub prompt_type: PromptType,
    pub point_threshold: f64,
    pub box_threshold: f64,
    pub point_samples: usize,
}

impl TrialParams {
    pub fn of(cfg: &JobConfig) -> Self {
        Self {
            nms_radius: cfg.detector.nms_radius,
            min_points: cfg.detector.min_points,
            k: cfg.graph.k,
            hidden_dim: cfg.classifier.hidden_dim,
            integration_dim: cfg.classifier.integration_dim,
            confidence_threshold: cfg.detector.confidence_threshold,
            model_type: cfg.classifier.model_type,
            dropout: cfg.classifier.dropout,
            edge_dropout: cfg.classifier.edge_dropout,
            prompt_type: cfg.prompts.prompt_type,
            point_threshold: cfg.prompts.point_threshold,
            box_threshold: cfg.prompts.box_threshold,
            point_samples: cfg.prompts.point_samples,
        }
    }

    pub fn apply(&self, cfg: &mut JobConfig) {
        cfg.detector.nms_radius = self.nms_radius;
        cfg.detector.min_points = self.min_points;
        cfg.graph.k = self.k;
        cfg.classifier.hidden_dim = self.hidden_dim;
        cfg.classifier.integration_dim = self.integration_dim;
        cfg.detector.confidence_threshold = self.confidence_threshold;
        cfg.classifier.model_type = self.model_type;
        cfg.classifier.dropout = self.dropout;
        cfg.classifier.edge_dropout = self.edge_dropout;
        cfg.prompts.prompt_type = self.prompt_type;
        cfg.prompts.point_threshold = self.point_threshold;
        cfg.prompts.box_threshold = self.box_threshold;
        cfg.prompts.point_samples = self.point_samples;
    }
}

impl SearchSpace {
    /// Draws the stage's hyperparameters and keeps the rest of `base`: the
    /// classification stage varies graph and classifier settings, the
    /// segmentation stage varies prompt settings.
    pub fn sample(&self, base: &JobConfig, stage: TuneStage, rng: &mut impl Rng) -> Result<TrialParams> {
        fn pick<T: Copy>(v: &[T], name: &str, rng: &mut impl Rng) -> Result<T> {
            v.choose(rng)
                .copied()
                .ok_or_else(|| Error::Config(format!("search space `{name}` is empty")))
        }
        let mut p = TrialParams::of(base);
        match stage {
            TuneStage::Classification => {
                p.nms_radius = pick(&self.nms_radius, "nms_radius", rng)?;
                p.min_points = pick(&self.min_points, "min_points", rng)?;
                p.k = pick(&self.k, "k", rng)?;
                p.hidden_dim = pick(&self.hidden_dim, "hidden_dim", rng)?;
                p.integration_dim = pick(&self.integration_dim, "integration_dim", rng)?;
                p.confidence_threshold = pick(&self.confidence_threshold, "confidence_threshold", rng)?;
                p.model_type = pick(&self.model_type, "model_type", rng)?;
                p.dropout = pick(&self.dropout, "dropout", rng)?;
                p.edge_dropout = pick(&self.edge_dropout, "edge_dropout", rng)?;
            }
            TuneStage::Segmentation => {
                p.prompt_type = pick(&self.prompt_type, "prompt_type", rng)?;
                p.point_threshold = pick(&self.point_threshold, "point_threshold", rng)?;
                p.box_threshold = pick(&self.box_threshold, "box_threshold", rng)?;
                p.point_samples = pick(&self.point_samples, "point_samples", rng)?;
            }
        }
        Ok(p)
    }

    /// Whether every field of `p` is one of the candidates.
    pub fn contains(&self, p: &TrialParams) -> bool {
        self.nms_radius.contains(&p.nms_radius)
            && self.min_points.contains(&p.min_points)
            && self.k.contains(&p.k)
            && self.hidden_dim.contains(&p.hidden_dim)
            && self.integration_dim.contains(&p.integration_dim)
            && self.confidence_threshold.contains(&p.confidence_threshold)
            && self.model_type.contains(&p.model_type)
            && self.dropout.contains(&p.dropout)
            && self.edge_dropout.contains(&p.edge_dropout)
            && self.prompt_type.contains(&p.prompt_type)
            && self.point_threshold.contains(&p.point_threshold)
            && self.box_threshold.contains(&p.box_threshold)
            && self.point_samples.contains(&p.point_samples)
    }
}

/// Scores one sampled configuration: per-test-item metric values.
pub trait TrialEvaluator: Sync {
    fn score(&self, cfg: &JobConfig, train: &[usize], test: &[usize]) -> Result<Vec<f64>>;
}

impl<F> TrialEvaluator for F
where
    F: Fn(&JobConfig, &[usize], &[usize]) -> Result<Vec<f64>> + Sync,
{
    fn score(&self, cfg: &JobConfig, train: &[usize], test: &[usize]) -> Result<Vec<f64>> {
        self(cfg, train, test)
    }
}

/// Trains on the train pool and scores the test pool with node F1 or
/// segmentation Dice, depending on the stage.
pub struct PipelineEvaluator<'a> {
    pub data: &'a [(Image, LabelMask)],
    pub backends: Backends,
    pub map: GranularityMap,
    pub stage: TuneStage,
}

impl TrialEvaluator for PipelineEvaluator<'_> {
    fn score(&self, cfg: &JobConfig, train: &[usize], test: &[usize]) -> Result<Vec<f64>> {
        let support: Vec<(Image, LabelMask)> = train.iter().map(|&i| self.data[i].clone()).collect();
        let items: Vec<(Image, LabelMask)> = test.iter().map(|&i| self.data[i].clone()).collect();
        let ids: Vec<u64> = test.iter().map(|&i| i as u64).collect();
        let (pipeline, _) = run_train(cfg, self.backends.clone(), &self.map, &support, None)?;
        let n = self.map.num_classes();
        match self.stage {
            TuneStage::Classification => parallel_map(&items, |i, (image, gt)| {
                let (graph, probs) = pipeline.classify(image, ids[i])?;
                node_f1(&probs.labels(), &extract_labels(graph.nodes(), gt, n)?, n)
            })
            .into_iter()
            .collect(),
            TuneStage::Segmentation => Ok(evaluate_predictor(&pipeline, &items, &ids, n, cfg.prompts.background_class)?
                .iter()
                .map(|r| r.mean_dice)
                .collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub params: TrialParams,
    pub config_hash: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub error: Option<String>,
}

/// Trials ranked by mean metric, best first; failed trials last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneTable {
    pub stage: TuneStage,
    pub rows: Vec<TrialRow>,
}

impl TuneTable {
    pub fn best(&self) -> Option<&TrialRow> {
        self.rows.first().filter(|r| r.mean.is_some())
    }

    pub fn to_csv(&self) -> String {
        let metric = match self.stage {
            TuneStage::Classification => "F1",
            TuneStage::Segmentation => "Dice",
        };
        let mut out = format!("RUN,NR,I,k,HD,ID,SPT,MT,DR,DRE,SP,PT,BT,SPS,{metric},std,best,error\n");
        let best = self.best().map(|r| r.trial);
        for r in &self.rows {
            let p = &r.params;
            let num = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
            out += &format!(
                "{},{},{},{},{},{},{:.1e},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.trial,
                p.nms_radius,
                p.min_points,
                p.k,
                p.hidden_dim,
                p.integration_dim,
                p.confidence_threshold,
                p.model_type,
                p.dropout,
                p.edge_dropout,
                p.prompt_type,
                p.point_threshold,
                p.box_threshold,
                p.point_samples,
                num(r.mean),
                num(r.std),
                if Some(r.trial) == best { "*" } else { "" },
                r.error.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
        out
    }
}

/// Runs `space.trials` random trials around `base`. Trial `t` draws from its
/// own stream, so the table depends only on `seed`. A failing trial is
/// recorded with its error and the search moves on.
pub fn run_tune(
    space: &SearchSpace,
    base: &JobConfig,
    stage: TuneStage,
    train_pool: &[usize],
    test_pool: &[usize],
    seed: u64,
    evaluator: &dyn TrialEvaluator,
) -> Result<TuneTable> {
    if train_pool.is_empty() || test_pool.is_empty() {
        return Err(Error::Config("tuning pools must be non-empty".into()));
    }
    if let Some(i) = train_pool.iter().find(|i| test_pool.contains(i)) {
        return Err(Error::Config(format!("item {i} is in both the train and the test pool")));
    }
    let mut rows = Vec::with_capacity(space.trials);
    for trial in 0..space.trials {
        let params = space.sample(base, stage, &mut rng::stream(seed, "tune", &[trial as u64]))?;
        let mut cfg = base.clone();
        params.apply(&mut cfg);
        let hash = super::config_hash(&cfg);
        let scored = cfg
            .validate()
            .and_then(|_| evaluator.score(&cfg, train_pool, test_pool))
            .and_then(|v| {
                if v.is_empty() {
                    Err(Error::InvalidInput("no test scores".into()))
                } else {
                    Ok(v)
                }
            });
        let row = match scored {
            Ok(values) => {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                log::info!("trial {trial}: {mean:.4} +- {std:.4}");
                TrialRow {
                    trial,
                    params,
                    config_hash: hash,
                    mean: Some(mean),
                    std: Some(std),
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("trial {trial} failed: {e}");
                TrialRow {
                    trial,
                    params,
                    config_hash: hash,
                    mean: None,
                    std: None,
                    error: Some(e.to_string()),
                }
            }
        };
        rows.push(row);
    }
    rows.sort_by(|a, b| match (a.mean, b.mean) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.trial.cmp(&b.trial)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.trial.cmp(&b.trial),
    });
    Ok(TuneTable { stage, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(cfg: &JobConfig, _: &[usize], test: &[usize]) -> Result<Vec<f64>> {
        if cfg.classifier.model_type == ModelType::Gat {
            return Err(Error::Segmentation("gat unsupported here".into()));
        }
        Ok(test.iter().map(|&i| (cfg.graph.k + i) as f64 / 100.0).collect())
    }

    #[test]
    fn samples_stay_in_space() {
        let space = SearchSpace::default();
        let base = JobConfig::default();
        for stage in [TuneStage::Classification, TuneStage::Segmentation] {
            for t in 0..200 {
                let p = space.sample(&base, stage, &mut rng::stream(3, "t", &[t])).unwrap();
                assert!(space.contains(&p), "{p:?}");
            }
        }
    }

    #[test]
    fn table_is_ranked_and_records_failures() {
        let space = SearchSpace::default();
        let t = run_tune(&space, &JobConfig::default(), TuneStage::Classification, &[0, 1], &[2, 3], 7, &fake).unwrap();
        assert_eq!(t.rows.len(), 20);
        let means: Vec<f64> = t.rows.iter().filter_map(|r| r.mean).collect();
        assert!(means.windows(2).all(|w| w[0] >= w[1]));
        let best = t.best().unwrap().mean.unwrap();
        assert!(means.iter().all(|&m| best >= m));
        assert!(t.rows.iter().any(|r| r.error.is_some()));
        assert!(t.rows.iter().skip_while(|r| r.mean.is_some()).all(|r| r.mean.is_none()));
        assert_eq!(t.to_csv().lines().count(), 21);
    }

    #[test]
    fn single_trial_and_determinism() {
        let space = SearchSpace {
            trials: 1,
            ..SearchSpace::default()
        };
        let base = JobConfig::default();
        let a = run_tune(&space, &base, TuneStage::Segmentation, &[0], &[1], 1, &fake).unwrap();
        let b = run_tune(&space, &base, TuneStage::Segmentation, &[0], &[1], 1, &fake).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a, b);
    }

    #[test]
    fn overlapping_pools_rejected() {
        let e = run_tune(&SearchSpace::default(), &JobConfig::default(), TuneStage::Classification, &[0, 1], &[1], 0, &fake)
            .unwrap_err();
        assert!(e.is_config());
    }
}
