use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{augment_image, class_weights, extract_labels, Adam, ClassifierConfig, ClassifierModel, ForwardMode, StepLr};
use crate::error::{Error, Result};
use crate::graph::{augment_graph_indexed, GraphAugmentConfig, GraphMode, GraphPipeline};
use crate::image::{Image, LabelMask};
use crate::rng;

/// Epoch budget by class count; counts between the anchors are interpolated
/// linearly, counts outside them clamp to the nearest anchor.
pub fn epochs_for_classes(num_classes: usize) -> usize {
    const ANCHORS: [(usize, usize); 5] = [(2, 500), (3, 750), (8, 1200), (16, 1500), (22, 2500)];
    if num_classes <= ANCHORS[0].0 {
        return ANCHORS[0].1;
    }
    for pair in ANCHORS.windows(2) {
        let ((c0, e0), (c1, e1)) = (pair[0], pair[1]);
        if num_classes <= c1 {
            let t = (num_classes - c0) as f64 / (c1 - c0) as f64;
            return (e0 as f64 + t * (e1 as f64 - e0 as f64)).round() as usize;
        }
    }
    ANCHORS[ANCHORS.len() - 1].1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// `None` picks the budget from the class count.
    pub epochs: Option<usize>,
    pub learning_rate: f32,
    /// `None` means a third of the epoch budget.
    pub step_size: Option<usize>,
    pub gamma: f32,
    /// `None` means `max(50, epochs / 10)`.
    pub patience: Option<usize>,
    /// Relative loss decrease that counts as an improvement.
    pub min_rel_improvement: f32,
    pub early_stopping: bool,
    pub seed: u64,
    /// Class weights pooled over the whole support set instead of per sample.
    pub pooled_class_weights: bool,
    /// Image and graph augmentation. When off, every epoch sees the same
    /// graphs and dropout draws.
    pub augment: bool,
    pub graph_augment: GraphAugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: None,
            learning_rate: 1e-3,
            step_size: None,
            gamma: 0.5,
            patience: None,
            min_rel_improvement: 1e-4,
            early_stopping: true,
            seed: 0,
            pooled_class_weights: false,
            augment: true,
            graph_augment: GraphAugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn resolved_epochs(&self, num_classes: usize) -> usize {
        self.epochs.unwrap_or_else(|| epochs_for_classes(num_classes))
    }

    pub fn resolved_patience(&self, epochs: usize) -> usize {
        self.patience.unwrap_or((epochs / 10).max(50))
    }

    pub fn schedule(&self, epochs: usize) -> StepLr {
        StepLr {
            base: self.learning_rate,
            step_size: self.step_size.unwrap_or((epochs / 3).max(1)),
            gamma: self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 || self.gamma.is_nan() || self.gamma <= 0.0 {
            return Err(Error::Config("learning_rate must be >= 0 and gamma > 0".into()));
        }
        if self.epochs == Some(0) {
            return Err(Error::Config("epochs must be positive".into()));
        }
        self.graph_augment.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs_planned: usize,
    pub epochs_run: usize,
    /// Mean loss over the samples of each epoch.
    pub loss_curve: Vec<f32>,
    pub best_epoch: usize,
    pub best_loss: f32,
    pub stopped_early: bool,
    pub optimizer_steps: usize,
    pub wall_time_secs: f64,
    pub skipped_samples: BTreeSet<usize>,
    pub warnings: Vec<String>,
}

fn skippable(e: &Error) -> bool {
    matches!(
        e.root(),
        Error::EmptyDetection(_) | Error::DegenerateGraph(_) | Error::InvalidInput(_)
    )
}

/// Few-shot training: one optimizer step per support sample per epoch.
///
/// Each step augments the sample, detects and enhances points, builds a
/// training-mode graph, augments it, and minimizes the class-weighted NLL of
/// the node labels read from the mask. The learning rate follows a step
/// schedule; training stops early once the epoch loss has not improved for
/// `patience` epochs, and the parameters of the best epoch are returned.
pub fn train_few_shot(
    support: &[(Image, LabelMask)],
    pipeline: &GraphPipeline,
    classifier_cfg: &ClassifierConfig,
    train_cfg: &TrainConfig,
) -> Result<(ClassifierModel, TrainingReport)> {
    if support.is_empty() {
        return Err(Error::Training("no support samples".into()));
    }
    train_cfg.validate()?;
    if classifier_cfg.input_dim != pipeline.input_dim() {
        return Err(Error::Config(format!(
            "classifier input_dim {} but the pipeline produces {} features",
            classifier_cfg.input_dim,
            pipeline.input_dim()
        )));
    }
    let started = Instant::now();
    let num_classes = classifier_cfg.num_classes;
    let epochs = train_cfg.resolved_epochs(num_classes);
    let patience = train_cfg.resolved_patience(epochs);
    let schedule = train_cfg.schedule(epochs);
    let seed = train_cfg.seed;

    let mut model = ClassifierModel::new(classifier_cfg.clone(), rng::derive_str(seed, "init", &[]))?;
    let mut adam = Adam::default();
    let mut report = TrainingReport {
        epochs_planned: epochs,
        best_loss: f32::INFINITY,
        ..TrainingReport::default()
    };

    let pooled = if train_cfg.pooled_class_weights {
        let mut all = Vec::new();
        for (i, (img, mask)) in support.iter().enumerate() {
            match pipeline.build(img, GraphMode::Inference, rng::derive(seed, &[i as u64])) {
                Ok(g) => all.extend(extract_labels(g.nodes(), mask, num_classes)?),
                Err(e) if skippable(&e) => {}
                Err(e) => return Err(e),
            }
        }
        Some(class_weights(&all, num_classes))
    } else {
        None
    };

    let mut best = model.snapshot();
    let mut since_best = 0usize;
    for epoch in 0..epochs {
        let lr = schedule.at(epoch);
        let mut losses = Vec::with_capacity(support.len());
        for (s, (img, mask)) in support.iter().enumerate() {
            let sample_seed = if train_cfg.augment {
                rng::derive(seed, &[epoch as u64, s as u64])
            } else {
                rng::derive(seed, &[s as u64])
            };
            let augmented;
            let (img, mask) = if train_cfg.augment {
                augmented = augment_image(img, mask, sample_seed)?;
                (&augmented.0, &augmented.1)
            } else {
                (img, mask)
            };
            let graph = match pipeline.build(img, GraphMode::Training, sample_seed) {
                Ok(g) => g,
                Err(e) if skippable(&e) => {
                    if report.skipped_samples.insert(s) {
                        let msg = format!("support sample {s} skipped: {e}");
                        log::warn!("{msg}");
                        report.warnings.push(msg);
                    }
                    continue;
                }
                Err(e) => return Err(e),
            };
            let labels = extract_labels(graph.nodes(), mask, num_classes)?;
            let (graph, labels) = if train_cfg.augment {
                let (g, kept) =
                    augment_graph_indexed(&graph, &train_cfg.graph_augment, rng::derive(sample_seed, &[1]));
                let l = kept.iter().map(|&i| labels[i]).collect::<Vec<_>>();
                (g, l)
            } else {
                (graph, labels)
            };
            let weights = pooled.clone().unwrap_or_else(|| class_weights(&labels, num_classes));
            model.zero_grad();
            let loss = model.accumulate_gradients(
                &graph,
                &labels,
                &weights,
                ForwardMode::Train {
                    seed: rng::derive(sample_seed, &[2]),
                },
            )?;
            adam.step(&mut model.params_mut(), lr);
            report.optimizer_steps += 1;
            losses.push(loss);
        }
        if losses.is_empty() {
            if epoch == 0 {
                return Err(Error::Training("every support sample failed graph construction".into()));
            }
            continue;
        }
        let epoch_loss = losses.iter().sum::<f32>() / losses.len() as f32;
        report.loss_curve.push(epoch_loss);
        report.epochs_run = epoch + 1;
        let threshold = report.best_loss - train_cfg.min_rel_improvement * report.best_loss.abs();
        if !report.best_loss.is_finite() || epoch_loss < threshold {
            report.best_loss = epoch_loss;
            report.best_epoch = epoch;
            best = model.snapshot();
            since_best = 0;
        } else {
            since_best += 1;
            if train_cfg.early_stopping && since_best >= patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    model.set_param_values(best)?;
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_schedule() {
        assert_eq!(epochs_for_classes(2), 500);
        assert_eq!(epochs_for_classes(3), 750);
        assert_eq!(epochs_for_classes(8), 1200);
        assert_eq!(epochs_for_classes(16), 1500);
        assert_eq!(epochs_for_classes(22), 2500);
        assert_eq!(epochs_for_classes(12), 1350);
        assert_eq!(epochs_for_classes(40), 2500);
    }

    #[test]
    fn default_patience_and_step() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.resolved_patience(750), 75);
        assert_eq!(cfg.resolved_patience(300), 50);
        assert_eq!(cfg.schedule(750).step_size, 250);
    }
}
