//! The `graphseg` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;

use crate::backends::BackendRegistry;
use crate::datasets::{remap_granularity, synth, write_dataset, Dataset, GranularityFile, GranularityMap};
use crate::error::{Error, Result};
use crate::image::{Image, LabelMask};
use crate::rng;

use super::ablation::{run_ablation, AblationVariant};
use super::config::JobConfig;
use super::jobs::{run_cross_validation, run_evaluate, run_train, Predictor, TrainedPipeline, CHECKPOINT_FILE};
use super::tune::{run_tune, PipelineEvaluator, SearchSpace};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_PIPELINE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "graphseg", version, about = "Few-shot part segmentation over interest-point graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML job configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write the prompts of every inferred image as JSON.
    #[arg(long, global = true)]
    pub dump_prompts: bool,
    /// Write every per-class mask next to the fused one.
    #[arg(long, global = true)]
    pub debug_masks: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the support items and write a checkpoint.
    Train,
    /// Segment one image with a trained checkpoint.
    Infer {
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Cross-validate, or score a checkpoint on the test items.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Random hyperparameter search.
    Tune,
    /// Enhancement, prompt-type and point-count comparison.
    Ablate,
    /// Write a synthetic dataset.
    Synth,
}

/// Parses `args`, runs the command and maps errors to exit codes.
pub fn main_with(args: impl IntoIterator<Item = OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("graphseg: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_PIPELINE })
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<JobConfig> {
    let mut cfg = match &common.config {
        Some(path) => JobConfig::load(path)?,
        None => {
            let mut c = JobConfig::default();
            c.apply_env(|k| std::env::var_os(k));
            c.validate()?;
            c
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.paths.out = out.clone();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let out = cfg.paths.out.clone();
    match &cli.command {
        Command::Synth => synth_command(&cfg, &out),
        Command::Train => {
            let backends = cfg.build_backends(&BackendRegistry::with_defaults())?;
            let (map, data) = load_data(&cfg)?;
            let support = support_items(&cfg, &data)?;
            let (_, report) = run_train(&cfg, backends, &map, &support, Some(&out))?;
            println!(
                "trained {} classes on {} items in {:.1}s ({} epochs); checkpoint {}",
                report.class_names.len(),
                report.support_size,
                report.timing.train_secs.unwrap_or(0.0),
                report.training.epochs_run,
                out.join(CHECKPOINT_FILE).display()
            );
            Ok(())
        }
        Command::Infer { image, checkpoint } => {
            let image = image
                .clone()
                .or_else(|| cfg.paths.image.clone())
                .ok_or_else(|| Error::Config("infer needs --image or paths.image".into()))?;
            let pipeline = load_pipeline(&cfg, checkpoint.as_deref(), &out)?;
            infer_command(&cli.common, &pipeline, &image, &out)
        }
        Command::Eval { checkpoint } => {
            let (map, data) = load_data(&cfg)?;
            let report = match checkpoint.as_deref().or(cfg.paths.checkpoint.as_deref()) {
                Some(path) => {
                    let pipeline = load_pipeline(&cfg, Some(path), &out)?;
                    let test_ids = test_indices(&cfg, data.len())?;
                    let test: Vec<_> = test_ids.iter().map(|&i| data[i].clone()).collect();
                    let ids: Vec<u64> = test_ids.iter().map(|&i| i as u64).collect();
                    let p: &dyn Predictor = &pipeline;
                    run_evaluate(&[p], &test, &ids, map.num_classes(), cfg.prompts.background_class, Some(&out))?
                }
                None => {
                    let backends = cfg.build_backends(&BackendRegistry::with_defaults())?;
                    run_cross_validation(&cfg, backends, &map, &data, Some(&out))?
                }
            };
            let (m, s) = (report.mean.percent(), report.std.percent());
            println!(
                "{} folds: J&F {:.1} +- {:.1}, J {:.1}, F {:.1}, Dice {:.1}",
                report.folds.len(),
                m.j_and_f,
                s.j_and_f,
                m.mean_j,
                m.mean_f,
                m.mean_dice
            );
            Ok(())
        }
        Command::Tune => {
            let backends = cfg.build_backends(&BackendRegistry::with_defaults())?;
            let (map, data) = load_data(&cfg)?;
            let (train, test) = tune_pools(&cfg, data.len())?;
            let space = SearchSpace {
                trials: cfg.tune.trials,
                ..SearchSpace::default()
            };
            let evaluator = PipelineEvaluator {
                data: &data,
                backends,
                map,
                stage: cfg.tune.stage,
            };
            let table = run_tune(&space, &cfg, cfg.tune.stage, &train, &test, cfg.seed, &evaluator)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("tune.csv"), table.to_csv())?;
            std::fs::write(out.join("tune.json"), serde_json::to_string_pretty(&table)?)?;
            print!("{}", table.to_csv());
            Ok(())
        }
        Command::Ablate => {
            let backends = cfg.build_backends(&BackendRegistry::with_defaults())?;
            let (map, data) = load_data(&cfg)?;
            let support = support_items(&cfg, &data)?;
            let test: Vec<_> = test_indices(&cfg, data.len())?.iter().map(|&i| data[i].clone()).collect();
            let table = run_ablation(&cfg, backends, &map, &support, &test, &AblationVariant::standard())?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("ablation.csv"), table.to_csv())?;
            print!("{}", table.to_csv());
            Ok(())
        }
    }
}

fn synth_command(cfg: &JobConfig, out: &Path) -> Result<()> {
    let s = &cfg.synth;
    let items = synth::generate_dataset(s.count, (s.width, s.height), cfg.seed, s.hole)?;
    write_dataset(out, &items, &GranularityFile::builtin())?;
    println!("wrote {} scenes to {}", items.len(), out.display());
    Ok(())
}

/// Items at the job's granularity: from `data.root` when set, otherwise
/// generated from the `[synth]` section.
pub fn load_data(cfg: &JobConfig) -> Result<(GranularityMap, Vec<(Image, LabelMask)>)> {
    match &cfg.data.root {
        Some(root) => {
            let ds = Dataset::open(root)?;
            let map = cfg.granularity_map(Some(&ds))?;
            let items = (0..ds.len())
                .map(|i| ds.load_at(i, &map.name))
                .collect::<Result<Vec<_>>>()?;
            Ok((map, items))
        }
        None => {
            log::info!("no data.root; generating {} synthetic scenes", cfg.synth.count);
            let map = cfg.granularity_map(None)?;
            let s = &cfg.synth;
            let items = synth::generate_dataset(s.count, (s.width, s.height), cfg.seed, s.hole)?
                .into_iter()
                .map(|(img, mask)| Ok((img, remap_granularity(&mask, &map)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((map, items))
        }
    }
}

fn check_indices(indices: &[usize], len: usize, what: &str) -> Result<()> {
    match indices.iter().find(|&&i| i >= len) {
        Some(i) => Err(Error::Config(format!("{what} index {i} but the dataset has {len} items"))),
        None => Ok(()),
    }
}

/// `data.support`, or `data.n_support` items drawn (seeded) from those
/// outside `data.test`.
pub fn support_indices(cfg: &JobConfig, len: usize) -> Result<Vec<usize>> {
    check_indices(&cfg.data.test, len, "test")?;
    if !cfg.data.support.is_empty() {
        check_indices(&cfg.data.support, len, "support")?;
        if let Some(i) = cfg.data.support.iter().find(|i| cfg.data.test.contains(i)) {
            return Err(Error::Config(format!("item {i} is both a support and a test item")));
        }
        return Ok(cfg.data.support.clone());
    }
    let pool: Vec<usize> = (0..len).filter(|i| !cfg.data.test.contains(i)).collect();
    let split = crate::datasets::sample_splits(pool.len(), cfg.data.n_support, 1, cfg.seed)?;
    Ok(split[0].support.iter().map(|&i| pool[i]).collect())
}

fn support_items(cfg: &JobConfig, data: &[(Image, LabelMask)]) -> Result<Vec<(Image, LabelMask)>> {
    Ok(support_indices(cfg, data.len())?.iter().map(|&i| data[i].clone()).collect())
}

/// `data.test`, or every item outside the support set.
pub fn test_indices(cfg: &JobConfig, len: usize) -> Result<Vec<usize>> {
    let support = support_indices(cfg, len)?;
    if !cfg.data.test.is_empty() {
        return Ok(cfg.data.test.clone());
    }
    Ok((0..len).filter(|i| !support.contains(i)).collect())
}

/// Disjoint train and test pools drawn from one seeded shuffle.
pub fn tune_pools(cfg: &JobConfig, len: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let (a, b) = (cfg.tune.train_pool, cfg.tune.test_pool);
    if a == 0 || b == 0 || a + b > len {
        return Err(Error::Config(format!(
            "tuning pools of {a} + {b} items need a dataset of at least that size (have {len})"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng::stream(cfg.seed, "tune-pools", &[]));
    Ok((order[..a].to_vec(), order[a..a + b].to_vec()))
}

fn load_pipeline(cfg: &JobConfig, checkpoint: Option<&Path>, out: &Path) -> Result<TrainedPipeline> {
    let path = checkpoint
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.checkpoint.clone())
        .unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    let backends = cfg.build_backends(&BackendRegistry::with_defaults())?;
    TrainedPipeline::load(&path, cfg, backends)
}

fn infer_command(common: &CommonArgs, pipeline: &TrainedPipeline, image: &Path, out: &Path) -> Result<()> {
    let img = Image::load_png(image)?;
    let result = pipeline.infer(&img, 0)?;
    std::fs::create_dir_all(out)?;
    let stem = image.file_stem().map_or("image".into(), |s| s.to_string_lossy().into_owned());
    result.segmentation.fused.save_png(&out.join(format!("{stem}_mask.png")))?;
    std::fs::write(
        out.join(format!("{stem}_timing.json")),
        serde_json::to_string_pretty(&result.timing)?,
    )?;
    if common.dump_prompts {
        std::fs::write(
            out.join(format!("{stem}_prompts.json")),
            serde_json::to_string_pretty(&result.prompts.to_json())?,
        )?;
    }
    if common.debug_masks {
        for (c, m) in &result.segmentation.per_class {
            let mask = LabelMask::from_fn(m.mask.width(), m.mask.height(), |x, y| if m.mask.get(x, y) { 255 } else { 0 });
            mask.save_png(&out.join(format!("{stem}_class{c}.png")))?;
        }
    }
    let t = result.timing;
    println!(
        "{}: classification {:.3}s, segmentation {:.3}s, total {:.3}s",
        image.display(),
        t.classification_secs,
        t.segmentation_secs,
        t.total_secs
    );
    Ok(())
}
