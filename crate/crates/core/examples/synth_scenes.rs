//! Generates articulated-machine scenes and writes them in the dataset layout.
//!
//! ```text
//! cargo run --example synth_scenes -- /tmp/scenes 20
//! ```

use graphseg::datasets::{remap_granularity, synth, write_dataset, Granularity, GranularityFile, GranularityMap};

fn main() -> graphseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "scenes".into());
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let items = synth::generate_dataset(count, (96, 96), 7, false)?;
    write_dataset(out.as_ref(), &items, &GranularityFile::builtin())?;

    // Pixel share of every class at each granularity, first scene.
    let (_, fine) = &items[0];
    for g in Granularity::ALL {
        let map = GranularityMap::builtin(g);
        let mask = remap_granularity(fine, &map)?;
        let total = (mask.width() * mask.height()) as f64;
        let shares: Vec<String> = map
            .class_names
            .iter()
            .enumerate()
            .map(|(c, name)| format!("{name} {:.1}%", 100.0 * mask.count(c as u8) as f64 / total))
            .collect();
        println!("{:<10} {}", g.name(), shares.join(", "));
    }

    // A variant with a cut-out in the truck body.
    let spec = synth::SceneSpec::random(3, (96, 96), true);
    let (_, mask) = synth::generate_scene(&spec, (96, 96))?;
    let solid = synth::SceneSpec { hole: false, ..spec.clone() };
    let (_, full) = synth::generate_scene(&solid, (96, 96))?;
    println!(
        "hole scene: {} base pixels, {} without the window",
        mask.count(synth::BASE),
        full.count(synth::BASE)
    );
    println!("wrote {count} scenes to {out}");
    Ok(())
}
