//! Prompt generation from node classes: grouping, isolation-forest and
//! Mahalanobis filtering, boxes and farthest-point samples. Node classes
//! come straight from the ground truth here, so the example isolates the
//! prompt stage from the classifier.

use graphseg::backends::{BackendOptions, Backends, DetectorConfig};
use graphseg::classifier::{extract_labels, NodeProbabilities};
use graphseg::datasets::{remap_granularity, synth, Granularity, GranularityMap};
use graphseg::graph::{GraphBuildConfig, GraphMode, GraphPipeline};
use graphseg::metrics::evaluate_image;
use graphseg::prompts::{build_prompts, PromptConfig, PromptType};
use graphseg::segmenter::run_segmentation;
use ndarray::Array2;

fn main() -> graphseg::Result<()> {
    let map = GranularityMap::builtin(Granularity::TruckCrane);
    let (image, fine) = synth::generate_scene(&synth::SceneSpec::random(4, (96, 96), false), (96, 96))?;
    let truth = remap_granularity(&fine, &map)?;
    let pipeline = GraphPipeline {
        backends: Backends::mock(&BackendOptions::default()),
        detector: DetectorConfig {
            nms_radius: 2,
            min_points: 512,
            ..DetectorConfig::default()
        },
        prompts: Vec::new(),
        graph: GraphBuildConfig::default(),
    };
    let graph = pipeline.build(&image, GraphMode::Inference, 0)?;
    let labels = extract_labels(graph.nodes(), &truth, 3)?;
    let mut log_probs = Array2::from_elem((labels.len(), 3), -30.0f32);
    for (v, &c) in labels.iter().enumerate() {
        log_probs[[v, c]] = 0.0;
    }
    let probs = NodeProbabilities::from_log_probs(&log_probs);

    for prompt_type in PromptType::ALL {
        let cfg = PromptConfig {
            prompt_type,
            point_threshold: 0.8,
            box_threshold: 1.0,
            point_samples: 15,
            ..PromptConfig::default()
        };
        let prompts = build_prompts(&probs, &graph, &cfg, 9)?;
        let seg = run_segmentation(&image, &prompts, pipeline.backends.segmenter.as_ref())?;
        let m = evaluate_image(&seg.fused, &truth, 3, Some(0))?;
        println!("{prompt_type:>2}: Dice {:.1}, J&F {:.1}", m.mean_dice * 100.0, m.j_and_f * 100.0);
        if prompt_type == PromptType::PointAndBox {
            for (c, t) in prompts.trace.iter().enumerate().skip(1) {
                println!(
                    "    {}: {} nodes -> forest {} -> points {} / box {} survivors, box {:?}",
                    map.class_names[c],
                    t.raw,
                    t.forest,
                    t.point_survivors,
                    t.box_survivors,
                    prompts.class_box(c).map(|b| [b.x_min, b.y_min, b.x_max, b.y_max])
                );
            }
            println!("{}", serde_json::to_string(&prompts.to_json()).unwrap_or_default().chars().take(160).collect::<String>());
        }
    }
    Ok(())
}
