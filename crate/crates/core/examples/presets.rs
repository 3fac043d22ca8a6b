//! Prints the tuned settings of every granularity, then one job
//! configuration as TOML: the tuned defaults, or the desk-scale variant with
//! `--desk`.
//!
//! ```text
//! cargo run --example presets -- Low > configs/low.toml
//! cargo run --example presets -- TruckCrane --desk > job.toml
//! ```

use graphseg::datasets::Granularity;
use graphseg::harness::config::JobConfig;
use graphseg::harness::presets::BEST_ROWS;

fn main() -> graphseg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let desk = args.iter().any(|a| a == "--desk");
    let g: Granularity = args.iter().find(|a| !a.starts_with("--")).map_or("TruckCrane", |s| s.as_str()).parse()?;
    eprintln!("{:<11} {:>2} {:>5} {:>3} {:>5} {:>3} {:>4} {:>4} {:>4}", "granularity", "NR", "I", "k", "MT", "SP", "BT", "PT", "SPS");
    for r in BEST_ROWS {
        eprintln!(
            "{:<11} {:>2} {:>5} {:>3} {:>5} {:>3} {:>4} {:>4} {:>4}",
            r.granularity.name(),
            r.nms_radius,
            r.min_points,
            r.k,
            r.model_type,
            r.prompt_type,
            r.box_threshold,
            r.point_threshold,
            r.point_samples
        );
    }
    let cfg = if desk { JobConfig::desk(g) } else { JobConfig::for_granularity(g) };
    cfg.validate()?;
    print!("{}", cfg.to_toml());
    Ok(())
}
