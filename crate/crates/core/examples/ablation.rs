//! Compares text-logit enhancement on and off, prompt types and point counts.
//!
//! ```text
//! cargo run --release --example ablation -- [shots] [epochs]
//! ```

use graphseg::backends::BackendRegistry;
use graphseg::datasets::{remap_granularity, synth, Granularity, GranularityMap};
use graphseg::harness::ablation::{run_ablation, AblationVariant};
use graphseg::harness::config::JobConfig;

fn main() -> graphseg::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let shots = args.next().flatten().unwrap_or(1);
    let epochs = args.next().flatten().unwrap_or(200);
    let map = GranularityMap::builtin(Granularity::TruckCrane);
    let data: Vec<_> = synth::generate_dataset(shots + 10, (96, 96), 8, true)?
        .into_iter()
        .map(|(img, mask)| Ok((img, remap_granularity(&mask, &map)?)))
        .collect::<graphseg::Result<_>>()?;
    let (support, test) = data.split_at(shots);

    let mut cfg = JobConfig::desk(Granularity::TruckCrane);
    cfg.train.epochs = Some(epochs);
    let backends = cfg.build_backends(&BackendRegistry::with_defaults())?;
    let table = run_ablation(&cfg, backends, &map, support, test, &AblationVariant::standard())?;
    print!("{}", table.to_csv());
    Ok(())
}
