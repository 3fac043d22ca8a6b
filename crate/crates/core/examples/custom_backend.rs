//! Registers a custom segmenter under a new name and selects it from a job
//! configuration, the same way a real foundation-model adapter plugs in.

use std::collections::BTreeMap;
use std::sync::Arc;

use graphseg::backends::{BackendRegistry, ClassPrompt, MaskTriplet, PromptableSegmenter};
use graphseg::harness::config::JobConfig;
use graphseg::image::{BinaryMask, Image};

/// Fills the prompt box, or a small disc around each point.
struct BoxFill;

impl PromptableSegmenter for BoxFill {
    fn name(&self) -> &str {
        "box-fill"
    }

    fn segment(&self, image: &Image, prompts: &[ClassPrompt]) -> graphseg::Result<BTreeMap<usize, MaskTriplet>> {
        let (w, h) = image.size();
        let mut out = BTreeMap::new();
        for prompt in prompts {
            let exact = BinaryMask::from_fn(w, h, |x, y| {
                let (fx, fy) = (x as f32, y as f32);
                match &prompt.bbox {
                    Some(b) => b.contains(fx, fy),
                    None => prompt.points.iter().any(|p| (p[0] - fx).powi(2) + (p[1] - fy).powi(2) <= 9.0),
                }
            });
            let triplet = MaskTriplet {
                masks: [exact.erode(1), exact.clone(), exact.dilate(1)],
                scores: [0.5, 0.9, 0.6],
            };
            out.insert(prompt.class_id, triplet);
        }
        Ok(out)
    }
}

fn main() -> graphseg::Result<()> {
    let mut registry = BackendRegistry::with_defaults();
    registry.register_segmenter("box-fill", |_| Ok(Arc::new(BoxFill)));

    let mut cfg = JobConfig::from_toml_str("[backend]\nsegmenter = \"box-fill\"\n")?;
    cfg.seed = 1;
    let backends = cfg.build_backends(&registry)?;
    println!(
        "detector {}, logits {}, segmenter {}",
        backends.detector.name(),
        backends.logits.name(),
        backends.segmenter.name()
    );

    // Unregistered adapters fail as configuration errors.
    cfg.backend.segmenter = "sam".into();
    match cfg.build_backends(&registry) {
        Err(e) => println!("sam: {e} (config error: {})", e.is_config()),
        Ok(_) => println!("sam adapter available"),
    }
    Ok(())
}
