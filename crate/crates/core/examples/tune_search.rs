//! A short random search over prompt settings, scored by segmentation Dice.
//!
//! ```text
//! cargo run --release --example tune_search -- [trials]
//! ```

use graphseg::backends::BackendRegistry;
use graphseg::datasets::{remap_granularity, synth, Granularity, GranularityMap};
use graphseg::harness::config::{JobConfig, TuneStage};
use graphseg::harness::tune::{run_tune, PipelineEvaluator, SearchSpace};

fn main() -> graphseg::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let map = GranularityMap::builtin(Granularity::TruckCrane);
    let data: Vec<_> = synth::generate_dataset(12, (96, 96), 2, false)?
        .into_iter()
        .map(|(img, mask)| Ok((img, remap_granularity(&mask, &map)?)))
        .collect::<graphseg::Result<_>>()?;

    let mut base = JobConfig::desk(Granularity::TruckCrane);
    base.train.epochs = Some(150);
    let evaluator = PipelineEvaluator {
        data: &data,
        backends: base.build_backends(&BackendRegistry::with_defaults())?,
        map,
        stage: TuneStage::Segmentation,
    };
    let space = SearchSpace {
        trials,
        ..SearchSpace::default()
    };
    let train: Vec<usize> = (0..2).collect();
    let test: Vec<usize> = (2..12).collect();
    let table = run_tune(&space, &base, TuneStage::Segmentation, &train, &test, 17, &evaluator)?;
    print!("{}", table.to_csv());
    if let Some(best) = table.best() {
        println!("best: trial {} ({:?}, PT {}, BT {}, SPS {})", best.trial, best.params.prompt_type, best.params.point_threshold, best.params.box_threshold, best.params.point_samples);
    }
    Ok(())
}
