//! Whole-slide tiling into fixed-size labeled patches and slide-level
//! train/test splitting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Diagnostic class. The index mapping `EE=0, CD=1, Normal=2` is fixed in
/// every artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Ee,
    Cd,
    Normal,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Ee, ClassLabel::Cd, ClassLabel::Normal];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Ee => "EE",
            ClassLabel::Cd => "CD",
            ClassLabel::Normal => "Normal",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "EE" => Ok(ClassLabel::Ee),
            "CD" => Ok(ClassLabel::Cd),
            "Normal" => Ok(ClassLabel::Normal),
            _ => Err(Error::invalid(format!("unknown class label `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Cluster {
    #[default]
    Unassigned,
    Useful,
    NotUseful,
}

impl Cluster {
    pub fn as_str(self) -> &'static str {
        match self {
            Cluster::Unassigned => "unassigned",
            Cluster::Useful => "useful",
            Cluster::NotUseful => "not_useful",
        }
    }
}

impl FromStr for Cluster {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unassigned" => Ok(Cluster::Unassigned),
            "useful" => Ok(Cluster::Useful),
            "not_useful" => Ok(Cluster::NotUseful),
            _ => Err(Error::invalid(format!("unknown cluster `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Split {
    #[default]
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchRecord {
    pub patch_id: String,
    pub slide_id: String,
    pub class_label: ClassLabel,
    pub grid_x: usize,
    pub grid_y: usize,
    pub cluster: Cluster,
    pub split: Split,
}

pub fn patch_id(slide_id: &str, grid_x: usize, grid_y: usize) -> String {
    format!("{slide_id}_x{grid_x}_y{grid_y}")
}

/// Tiles `slide` into non-overlapping `patch_size` squares, row-major from
/// the top-left. Partial strips at the right and bottom borders are dropped.
pub fn extract_patches(
    slide: &RgbImage,
    patch_size: usize,
    slide_id: &str,
    class_label: ClassLabel,
) -> Result<Vec<(PatchRecord, RgbImage)>> {
    if patch_size == 0 {
        return Err(Error::invalid("patch size must be positive"));
    }
    if slide.width() < patch_size || slide.height() < patch_size {
        return Err(Error::invalid(format!(
            "slide `{slide_id}` is {}x{}, smaller than one {patch_size}x{patch_size} patch",
            slide.width(),
            slide.height()
        )));
    }
    let (cols, rows) = (slide.width() / patch_size, slide.height() / patch_size);
    let mut out = Vec::with_capacity(cols * rows);
    for gy in 0..rows {
        for gx in 0..cols {
            let img = slide.crop(gx * patch_size, gy * patch_size, patch_size, patch_size)?;
            let rec = PatchRecord {
                patch_id: patch_id(slide_id, gx, gy),
                slide_id: slide_id.to_string(),
                class_label,
                grid_x: gx,
                grid_y: gy,
                cluster: Cluster::Unassigned,
                split: Split::Train,
            };
            out.push((rec, img));
        }
    }
    Ok(out)
}

/// Assigns whole slides to the test split, `round(n · test_fraction)` per
/// class (at least one, at most `n − 1`), chosen by a seeded shuffle.
pub fn assign_split(records: &mut [PatchRecord], test_fraction: f64, seed: u64) -> Result<()> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut slides: BTreeMap<ClassLabel, BTreeSet<&str>> = BTreeMap::new();
    let mut slide_class: BTreeMap<&str, ClassLabel> = BTreeMap::new();
    for r in records.iter() {
        if let Some(prev) = slide_class.insert(&r.slide_id, r.class_label) {
            if prev != r.class_label {
                return Err(Error::invalid(format!(
                    "slide `{}` carries two class labels ({prev}, {})",
                    r.slide_id, r.class_label
                )));
            }
        }
        slides.entry(r.class_label).or_default().insert(&r.slide_id);
    }

    let mut test_slides: BTreeSet<String> = BTreeSet::new();
    for (class, ids) in &slides {
        if ids.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {} slide(s); a slide-level split needs at least 2",
                ids.len()
            )));
        }
        let mut ids: Vec<&str> = ids.iter().copied().collect();
        let n_test = ((ids.len() as f64 * test_fraction).round() as usize).clamp(1, ids.len() - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x5eed_0000 + class.index() as u64));
        ids.shuffle(&mut rng);
        test_slides.extend(ids[..n_test].iter().map(|s| s.to_string()));
    }

    for r in records.iter_mut() {
        r.split = if test_slides.contains(&r.slide_id) {
            Split::Test
        } else {
            Split::Train
        };
    }
    Ok(())
}
