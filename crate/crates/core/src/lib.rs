//! Few-shot part segmentation over interest-point graphs.
//!
//! An image is turned into a k-NN graph of interest points whose descriptors
//! are enhanced with text-conditioned logits. A small graph network, trained
//! from a handful of annotated support images, classifies every node. The
//! classified nodes are filtered into point and box prompts for a promptable
//! segmenter, and the per-class masks are fused into one label image.
//!
//! The three foundation models involved (interest-point detector, logit
//! provider, promptable segmenter) sit behind traits in [`backends`]. The crate
//! ships deterministic mock implementations of all three so the full pipeline
//! runs on a laptop against scenes from [`datasets::synth`].
//!
//! Module map:
//!
//! - [`backends`]: backend traits, mock implementations, plugin registry
//! - [`graph`]: point enhancement, k-NN graph construction, graph augmentation
//! - [`classifier`]: graph-convolution node classifier and few-shot training
//! - [`prompts`]: class grouping, outlier filtering, box and point prompts
//! - [`segmenter`]: per-class segmentation and mask fusion
//! - [`metrics`]: Dice, region J, contour F, J&F
//! - [`datasets`]: granularity maps, splits, sequence protocols, scene synthesis
//! - [`harness`]: job configuration, orchestration, tuning, ablation, CLI

pub mod backends;
pub mod classifier;
pub mod datasets;
pub mod error;
pub mod graph;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod prompts;
pub mod rng;
pub mod segmenter;

pub use error::{Error, Result};
pub use image::{BinaryMask, Image, LabelMask};
