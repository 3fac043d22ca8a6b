//! Turns one synthetic scene into a k-NN graph of enhanced interest points.

use graphseg::backends::{BackendOptions, Backends, DetectorConfig};
use graphseg::datasets::synth;
use graphseg::graph::{GraphBuildConfig, GraphMode, GraphPipeline};

fn main() -> graphseg::Result<()> {
    let (image, _) = synth::generate_scene(&synth::SceneSpec::random(1, (96, 96), false), (96, 96))?;
    let opts = BackendOptions {
        color_keys: synth::Palette::default().prompt_keys(),
        ..BackendOptions::default()
    };
    let pipeline = GraphPipeline {
        backends: Backends::mock(&opts),
        detector: DetectorConfig {
            nms_radius: 2,
            min_points: 512,
            ..DetectorConfig::default()
        },
        prompts: vec!["crane".into(), "truck".into()],
        graph: GraphBuildConfig {
            k: 16,
            ..GraphBuildConfig::default()
        },
    };

    for mode in [GraphMode::Inference, GraphMode::Training] {
        let g = pipeline.build(&image, mode, 11)?;
        let degrees = g.degrees();
        let mean_w = g.weights().iter().sum::<f32>() / g.weights().len() as f32;
        println!(
            "{mode:?}: {} nodes, {} edges, features {} = {} descriptor + {} logits, degree {}..{}, mean weight {mean_w:.3}",
            g.node_count(),
            g.edges().len(),
            g.feature_dim(),
            g.descriptor_dim(),
            g.logit_dim(),
            degrees.iter().min().unwrap(),
            degrees.iter().max().unwrap(),
        );
    }

    // The appended logit features separate crane points from the rest.
    let g = pipeline.build(&image, GraphMode::Inference, 11)?;
    let d = g.descriptor_dim();
    let on_crane = g.nodes().iter().filter(|p| p.features[d] > 0.5).count();
    println!("{on_crane} of {} nodes score above 0.5 for `crane`", g.node_count());
    Ok(())
}
