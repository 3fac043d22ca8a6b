//! Label vocabularies, dataset layout, support sampling and sequence
//! protocols.
//!
//! Masks on disk carry fine labels from [`FINE_CLASSES`]; a
//! [`GranularityMap`] coarsens them to one of five label levels.

pub mod synth;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, LabelMask};
use crate::rng;

/// Fine part vocabulary of the synthetic machines, indexed by label.
pub const FINE_CLASSES: [&str; 10] = [
    "background",
    "base",
    "cab",
    "wheel_front",
    "wheel_rear",
    "arm_link1",
    "arm_link2",
    "arm_link3",
    "hook",
    "platform",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Granularity {
    Truck,
    TruckCrane,
    Low,
    Medium,
    High,
}

impl Granularity {
    pub const ALL: [Granularity; 5] = [
        Granularity::Truck,
        Granularity::TruckCrane,
        Granularity::Low,
        Granularity::Medium,
        Granularity::High,
    ];

    pub fn class_count(self) -> usize {
        match self {
            Granularity::Truck => 2,
            Granularity::TruckCrane => 3,
            Granularity::Low => 8,
            Granularity::Medium => 16,
            Granularity::High => 22,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Truck => "Truck",
            Granularity::TruckCrane => "TruckCrane",
            Granularity::Low => "Low",
            Granularity::Medium => "Medium",
            Granularity::High => "High",
        }
    }
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Granularity::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown granularity `{s}`")))
    }
}

/// Fine label to coarse label table with coarse class names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GranularityMap {
    pub name: String,
    pub class_names: Vec<String>,
    /// `mapping[fine] = coarse`.
    pub mapping: Vec<u8>,
}

impl GranularityMap {
    /// Built-in map from the synthetic fine vocabulary.
    pub fn builtin(g: Granularity) -> Self {
        let (names, mapping): (Vec<String>, Vec<u8>) = match g {
            Granularity::Truck => (vec!["background".into(), "truck".into()], vec![0, 1, 1, 1, 1, 1, 1, 1, 1, 1]),
            Granularity::TruckCrane => (
                vec!["background".into(), "truck".into(), "crane".into()],
                vec![0, 1, 1, 1, 1, 2, 2, 2, 2, 1],
            ),
            Granularity::Low => (
                ["background", "base", "cab", "wheel", "platform", "lower_arm", "upper_arm", "hook"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                vec![0, 1, 2, 3, 3, 5, 6, 6, 7, 4],
            ),
            Granularity::Medium | Granularity::High => {
                let n = g.class_count();
                let names = (0..n)
                    .map(|i| FINE_CLASSES.get(i).map_or_else(|| format!("part_{i}"), |s| s.to_string()))
                    .collect();
                (names, (0..FINE_CLASSES.len() as u8).collect())
            }
        };
        Self {
            name: g.name().to_string(),
            class_names: names,
            mapping,
        }
    }

    pub fn identity(num_classes: usize) -> Self {
        Self {
            name: "identity".into(),
            class_names: (0..num_classes).map(|i| format!("class_{i}")).collect(),
            mapping: (0..num_classes.min(256)).map(|i| i as u8).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mapping.first().is_some_and(|&b| b != 0) {
            return Err(Error::Config(format!("map `{}` does not send background to background", self.name)));
        }
        if let Some(&bad) = self.mapping.iter().find(|&&c| c as usize >= self.class_names.len()) {
            return Err(Error::Config(format!(
                "map `{}` targets class {bad} but names only {}",
                self.name,
                self.class_names.len()
            )));
        }
        Ok(())
    }

    /// Map from this level's labels to a coarser level's labels, when every
    /// label of this level lands in a single class of `coarser`.
    pub fn coarsen_to(&self, coarser: &GranularityMap) -> Result<GranularityMap> {
        let mut table: Vec<Option<u8>> = vec![None; self.num_classes()];
        for (fine, &here) in self.mapping.iter().enumerate() {
            let there = *coarser
                .mapping
                .get(fine)
                .ok_or(Error::UnmappedLabel(fine as u8))?;
            match table[here as usize] {
                None => table[here as usize] = Some(there),
                Some(prev) if prev == there => {}
                Some(_) => {
                    return Err(Error::Config(format!(
                        "`{}` is not a refinement of `{}`",
                        self.name, coarser.name
                    )))
                }
            }
        }
        Ok(GranularityMap {
            name: format!("{}->{}", self.name, coarser.name),
            class_names: coarser.class_names.clone(),
            // Classes that never occur map to background.
            mapping: table.into_iter().map(|t| t.unwrap_or(0)).collect(),
        })
    }
}

/// Pointwise application of a granularity map.
pub fn remap_granularity(mask: &LabelMask, map: &GranularityMap) -> Result<LabelMask> {
    for l in mask.labels() {
        if l as usize >= map.mapping.len() {
            return Err(Error::UnmappedLabel(l));
        }
    }
    Ok(mask.map(|l| map.mapping[l as usize]))
}

/// One few-shot split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSplit {
    pub fold: usize,
    pub seed: u64,
    pub support: Vec<usize>,
    pub test: Vec<usize>,
}

/// Allowed support sizes for the few-shot protocol.
pub const SUPPORT_SIZES: [usize; 5] = [1, 3, 5, 10, 25];

/// `folds` support draws of `n_support` indices from `0..dataset_size`.
///
/// Supports of different folds are pairwise disjoint whenever
/// `folds * n_support < dataset_size`, which leaves at least one test item;
/// otherwise each fold draws independently. The test set is shared by all folds: every index not used
/// by any support.
pub fn sample_splits(dataset_size: usize, n_support: usize, folds: usize, seed: u64) -> Result<Vec<FewShotSplit>> {
    if n_support == 0 || n_support >= dataset_size {
        return Err(Error::Config(format!(
            "support size {n_support} must lie in [1, {dataset_size})"
        )));
    }
    if folds == 0 {
        return Err(Error::Config("at least one fold is required".into()));
    }
    let mut order: Vec<usize> = (0..dataset_size).collect();
    order.shuffle(&mut rng::stream(seed, "splits", &[]));
    let disjoint = folds * n_support < dataset_size;
    let supports: Vec<Vec<usize>> = (0..folds)
        .map(|f| {
            let mut s = if disjoint {
                order[f * n_support..(f + 1) * n_support].to_vec()
            } else {
                let mut o: Vec<usize> = (0..dataset_size).collect();
                o.shuffle(&mut rng::stream(seed, "splits", &[f as u64 + 1]));
                o.truncate(n_support);
                o
            };
            s.sort_unstable();
            s
        })
        .collect();
    let mut used = vec![false; dataset_size];
    for s in &supports {
        for &i in s {
            used[i] = true;
        }
    }
    let test: Vec<usize> = (0..dataset_size).filter(|&i| !used[i]).collect();
    Ok(supports
        .into_iter()
        .enumerate()
        .map(|(fold, support)| FewShotSplit {
            fold,
            seed,
            support,
            test: test.clone(),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceProtocol {
    /// First frame.
    F,
    /// First and last.
    FL,
    /// First, last and middle.
    FLM,
}

impl std::str::FromStr for SequenceProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "F" => Ok(Self::F),
            "FL" => Ok(Self::FL),
            "FLM" => Ok(Self::FLM),
            _ => Err(Error::Config(format!("unknown sequence protocol `{s}`"))),
        }
    }
}

/// Support frame indices for a sequence of `len` frames, sorted and
/// deduplicated.
pub fn sequence_frames(len: usize, protocol: SequenceProtocol) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::InvalidInput("empty sequence".into()));
    }
    let last = len - 1;
    let mut frames = match protocol {
        SequenceProtocol::F => vec![0],
        SequenceProtocol::FL => vec![0, last],
        SequenceProtocol::FLM => vec![0, last / 2, last],
    };
    frames.sort_unstable();
    frames.dedup();
    Ok(frames)
}

/// File written next to `images/` and `masks/`.
pub const GRANULARITY_FILE: &str = "granularity.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GranularityFile {
    pub fine_classes: Vec<String>,
    pub maps: Vec<GranularityMap>,
}

impl GranularityFile {
    pub fn builtin() -> Self {
        Self {
            fine_classes: FINE_CLASSES.iter().map(|s| s.to_string()).collect(),
            maps: Granularity::ALL.iter().map(|&g| GranularityMap::builtin(g)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&GranularityMap> {
        self.maps
            .iter()
            .find(|m| m.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("granularity `{name}` not in mapping file")))
    }
}

/// A dataset directory: `images/NNNN.png`, `masks/NNNN.png`,
/// `granularity.json`.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    names: Vec<String>,
    pub granularity: GranularityFile,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let images = root.join("images");
        if !images.is_dir() {
            return Err(Error::MissingFile(images));
        }
        let mut names: Vec<String> = std::fs::read_dir(&images)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                (p.extension().is_some_and(|x| x == "png"))
                    .then(|| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
                    .flatten()
            })
            .collect();
        names.sort();
        let gpath = root.join(GRANULARITY_FILE);
        let granularity = if gpath.is_file() {
            serde_json::from_str(&std::fs::read_to_string(&gpath)?)?
        } else {
            GranularityFile::builtin()
        };
        Ok(Self {
            root: root.to_path_buf(),
            names,
            granularity,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Image and fine-label mask of item `i`.
    pub fn load(&self, i: usize) -> Result<(Image, LabelMask)> {
        let name = self
            .names
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("item {i} of {}", self.names.len())))?;
        let img = Image::load_png(&self.root.join("images").join(format!("{name}.png")))?;
        let mask = LabelMask::load_png(&self.root.join("masks").join(format!("{name}.png")))?;
        if img.size() != mask.size() {
            return Err(Error::DimensionMismatch(format!("item {name}: image and mask sizes differ")));
        }
        Ok((img, mask))
    }

    /// Item `i` with its mask coarsened to `granularity`.
    pub fn load_at(&self, i: usize, granularity: &str) -> Result<(Image, LabelMask)> {
        let (img, mask) = self.load(i)?;
        let map = self.granularity.get(granularity)?;
        Ok((img, remap_granularity(&mask, map)?))
    }
}

/// Writes `items` in the dataset layout, numbering from zero.
pub fn write_dataset(root: &Path, items: &[(Image, LabelMask)], granularity: &GranularityFile) -> Result<()> {
    std::fs::create_dir_all(root.join("images"))?;
    std::fs::create_dir_all(root.join("masks"))?;
    for (i, (img, mask)) in items.iter().enumerate() {
        img.save_png(&root.join("images").join(format!("{i:04}.png")))?;
        mask.save_png(&root.join("masks").join(format!("{i:04}.png")))?;
    }
    std::fs::write(root.join(GRANULARITY_FILE), serde_json::to_string_pretty(granularity)?)?;
    Ok(())
}
