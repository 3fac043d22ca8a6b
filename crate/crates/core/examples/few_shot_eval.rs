//! K-fold few-shot evaluation on synthetic scenes, collected into a
//! samples-by-granularity J&F table.
//!
//! ```text
//! cargo run --release --example few_shot_eval -- [folds] [epochs]
//! ```

use graphseg::backends::BackendRegistry;
use graphseg::datasets::{remap_granularity, synth, Granularity, GranularityMap};
use graphseg::harness::config::JobConfig;
use graphseg::harness::jobs::{run_cross_validation, FewShotTable};

fn main() -> graphseg::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let folds = args.next().flatten().unwrap_or(2);
    let epochs = args.next().flatten().unwrap_or(200);

    let fine = synth::generate_dataset(30, (96, 96), 5, false)?;
    let columns = [Granularity::Truck, Granularity::TruckCrane];
    let mut table = FewShotTable::new(columns.iter().map(|g| g.name().to_string()).collect());
    for g in columns {
        let map = GranularityMap::builtin(g);
        let data: Vec<_> = fine
            .iter()
            .map(|(img, mask)| Ok((img.clone(), remap_granularity(mask, &map)?)))
            .collect::<graphseg::Result<_>>()?;
        for shots in [1, 3] {
            let mut cfg = JobConfig::desk(g);
            cfg.train.epochs = Some(epochs);
            cfg.data.n_support = shots;
            cfg.data.folds = folds;
            cfg.data.test = (20..30).collect();
            let backends = cfg.build_backends(&BackendRegistry::with_defaults())?;
            let report = run_cross_validation(&cfg, backends, &map, &data, None)?;
            let (m, s) = (report.mean.percent(), report.std.percent());
            println!("{:<10} {shots} shot(s): J&F {:.1} +- {:.1}, Dice {:.1}", g.name(), m.j_and_f, s.j_and_f, m.mean_dice);
            table.insert(shots, g.name(), &report.mean)?;
        }
    }
    print!("{}", table.to_csv());
    Ok(())
}
