//! Trains a 3-class (background, truck, crane) model from synthetic support
//! scenes, saves it, reloads it and segments an unseen scene.
//!
//! ```text
//! cargo run --release --example train_and_infer -- [shots] [epochs]
//! ```

use graphseg::backends::BackendRegistry;
use graphseg::datasets::{remap_granularity, synth, Granularity, GranularityMap};
use graphseg::harness::config::JobConfig;
use graphseg::harness::jobs::{run_train, TrainedPipeline, CHECKPOINT_FILE};
use graphseg::metrics::evaluate_image;

fn main() -> graphseg::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let shots = args.next().flatten().unwrap_or(1);
    let epochs = args.next().flatten().unwrap_or(300);

    let mut cfg = JobConfig::desk(Granularity::TruckCrane);
    cfg.train.epochs = Some(epochs);
    let map = GranularityMap::builtin(Granularity::TruckCrane);
    let scenes: Vec<_> = synth::generate_dataset(shots + 1, (96, 96), 21, false)?
        .into_iter()
        .map(|(img, mask)| Ok((img, remap_granularity(&mask, &map)?)))
        .collect::<graphseg::Result<_>>()?;
    let (support, query) = scenes.split_at(shots);

    let dir = std::env::temp_dir().join("graphseg-train-and-infer");
    let backends = cfg.build_backends(&BackendRegistry::with_defaults())?;
    let (_, report) = run_train(&cfg, backends.clone(), &map, support, Some(&dir))?;
    println!(
        "trained {} parameters for {} epochs (best {} at loss {:.4}) in {:.1}s",
        report.num_parameters,
        report.training.epochs_run,
        report.training.best_epoch,
        report.training.best_loss,
        report.timing.train_secs.unwrap_or(0.0)
    );

    let pipeline = TrainedPipeline::load(&dir.join(CHECKPOINT_FILE), &cfg, backends)?;
    let (image, truth) = &query[0];
    let out = pipeline.infer(image, 0)?;
    let m = evaluate_image(&out.segmentation.fused, truth, map.num_classes(), Some(0))?;
    println!(
        "inference {:.3}s (classification {:.3}s, segmentation {:.3}s)",
        out.timing.total_secs, out.timing.classification_secs, out.timing.segmentation_secs
    );
    println!("J&F {:.1}, Dice {:.1}", m.j_and_f * 100.0, m.mean_dice * 100.0);
    out.segmentation.fused.save_png(&dir.join("query_mask.png"))?;
    println!("checkpoint and mask in {}", dir.display());
    Ok(())
}
