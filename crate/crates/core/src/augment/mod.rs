//! Dataset expansion by within-class permutation of upper and lower face
//! halves, stratified splitting, and the packed sample format.
//!
//! A class with `n` curated stills yields `n²` composites: every upper half
//! paired with every lower half, self-pairs included. Composites are kept as
//! index pairs into their [`HalfBank`] and materialized on demand, so a full
//! 80,143-sample dataset costs a few megabytes instead of gigabytes.

pub mod pack;
pub mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmark::{
    concat_halves, normalize, rasterize, split_halves, EmotionLabel, HalfImage, LandmarkError,
    LandmarkSet, RasterImage,
};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("half bank for {0} is empty")]
    EmptyBank(EmotionLabel),
    #[error("half bank for {label}: {uppers} upper halves but {lowers} lower halves")]
    UnevenBank {
        label: EmotionLabel,
        uppers: usize,
        lowers: usize,
    },
    #[error("duplicate source id {id:?} in the {label} bank")]
    DuplicateSource { label: EmotionLabel, id: String },
    #[error("no half bank for class {0}")]
    MissingClass(EmotionLabel),
    #[error("more than one half bank for class {0}")]
    DuplicateClass(EmotionLabel),
    #[error("class {0} has no samples to split")]
    EmptyClass(EmotionLabel),
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("landmark set {subject:?} has no emotion label")]
    Unlabeled { subject: String },
    #[error("landmark set {subject:?}: {source}")]
    Landmark {
        subject: String,
        #[source]
        source: LandmarkError,
    },
    #[error("packed dataset: {0}")]
    Pack(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type SourceId = String;

/// Upper and lower halves of one class's curated stills.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfBank {
    label: EmotionLabel,
    uppers: Vec<(SourceId, HalfImage)>,
    lowers: Vec<(SourceId, HalfImage)>,
}

impl HalfBank {
    pub fn new(
        label: EmotionLabel,
        uppers: Vec<(SourceId, HalfImage)>,
        lowers: Vec<(SourceId, HalfImage)>,
    ) -> Result<Self, AugmentError> {
        if uppers.len() != lowers.len() {
            return Err(AugmentError::UnevenBank {
                label,
                uppers: uppers.len(),
                lowers: lowers.len(),
            });
        }
        for list in [&uppers, &lowers] {
            let mut seen = HashSet::new();
            for (id, _) in list {
                if !seen.insert(id) {
                    return Err(AugmentError::DuplicateSource {
                        label,
                        id: id.clone(),
                    });
                }
            }
        }
        Ok(HalfBank {
            label,
            uppers,
            lowers,
        })
    }

    /// Splits each raster at the seam; the raster's id sources both halves.
    pub fn from_rasters(
        label: EmotionLabel,
        rasters: impl IntoIterator<Item = (SourceId, RasterImage)>,
    ) -> Result<Self, AugmentError> {
        let (uppers, lowers): (Vec<_>, Vec<_>) = rasters
            .into_iter()
            .map(|(id, img)| {
                let (u, l) = split_halves(&img);
                ((id.clone(), u), (id, l))
            })
            .unzip();
        Self::new(label, uppers, lowers)
    }

    pub fn label(&self) -> EmotionLabel {
        self.label
    }

    pub fn len(&self) -> usize {
        self.uppers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uppers.is_empty()
    }

    pub fn upper(&self, i: usize) -> &(SourceId, HalfImage) {
        &self.uppers[i]
    }

    pub fn lower(&self, i: usize) -> &(SourceId, HalfImage) {
        &self.lowers[i]
    }

    pub fn compose(&self, r: CompositeRef) -> RasterImage {
        concat_halves(&self.uppers[r.upper].1, &self.lowers[r.lower].1)
    }
}

/// Groups labeled landmark sets by class and renders them into half banks,
/// in canonical label order. Classes with no sets are omitted.
pub fn banks_from_landmarks(sets: &[LandmarkSet]) -> Result<Vec<HalfBank>, AugmentError> {
    let mut by_class: BTreeMap<EmotionLabel, Vec<(SourceId, RasterImage)>> = BTreeMap::new();
    for s in sets {
        let label = s.label.ok_or_else(|| AugmentError::Unlabeled {
            subject: s.subject_id.clone(),
        })?;
        let wrap = |source| AugmentError::Landmark {
            subject: s.subject_id.clone(),
            source,
        };
        let img = rasterize(&normalize(s).map_err(wrap)?).map_err(wrap)?;
        by_class
            .entry(label)
            .or_default()
            .push((s.subject_id.clone(), img));
    }
    by_class
        .into_iter()
        .map(|(label, rasters)| HalfBank::from_rasters(label, rasters))
        .collect()
}

/// A composite as (upper index, lower index) into its class bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompositeRef {
    pub label: EmotionLabel,
    pub upper: usize,
    pub lower: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSample {
    pub label: EmotionLabel,
    pub upper_src: SourceId,
    pub lower_src: SourceId,
    pub image: RasterImage,
}

/// All `n²` pairings, lexicographic by (upper, lower).
pub fn composite_refs(bank: &HalfBank) -> Result<Vec<CompositeRef>, AugmentError> {
    if bank.is_empty() {
        return Err(AugmentError::EmptyBank(bank.label));
    }
    let n = bank.len();
    Ok((0..n)
        .flat_map(|upper| {
            (0..n).map(move |lower| CompositeRef {
                label: bank.label,
                upper,
                lower,
            })
        })
        .collect())
}

pub fn generate_composites(bank: &HalfBank) -> Result<Vec<CompositeSample>, AugmentError> {
    Ok(composite_refs(bank)?
        .into_iter()
        .map(|r| CompositeSample {
            label: r.label,
            upper_src: bank.upper(r.upper).0.clone(),
            lower_src: bank.lower(r.lower).0.clone(),
            image: bank.compose(r),
        })
        .collect())
}

/// The expanded dataset: seven banks plus every composite, class-major.
#[derive(Debug, Clone)]
pub struct Dataset {
    banks: Vec<HalfBank>,
    samples: Vec<CompositeRef>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn banks(&self) -> &[HalfBank] {
        &self.banks
    }

    pub fn sample(&self, i: usize) -> CompositeRef {
        self.samples[i]
    }

    pub fn label(&self, i: usize) -> EmotionLabel {
        self.samples[i].label
    }

    pub fn image(&self, i: usize) -> RasterImage {
        let r = self.samples[i];
        self.banks[r.label.index()].compose(r)
    }

    pub fn sources(&self, i: usize) -> (&str, &str) {
        let r = self.samples[i];
        let bank = &self.banks[r.label.index()];
        (&bank.upper(r.upper).0, &bank.lower(r.lower).0)
    }

    pub fn class_counts(&self) -> [usize; EmotionLabel::COUNT] {
        let mut counts = [0; EmotionLabel::COUNT];
        for s in &self.samples {
            counts[s.label.index()] += 1;
        }
        counts
    }

    /// Index range of one class's samples.
    fn class_range(&self, label: EmotionLabel) -> std::ops::Range<usize> {
        let start = self.samples.partition_point(|s| s.label < label);
        let end = self.samples.partition_point(|s| s.label <= label);
        start..end
    }
}

/// Requires exactly one bank per label. Total size is `Σ n_c²`.
pub fn build_dataset(banks: Vec<HalfBank>) -> Result<Dataset, AugmentError> {
    let mut slots: Vec<Option<HalfBank>> = vec![None; EmotionLabel::COUNT];
    for bank in banks {
        let slot = &mut slots[bank.label.index()];
        if slot.is_some() {
            return Err(AugmentError::DuplicateClass(bank.label));
        }
        *slot = Some(bank);
    }
    let mut ordered = Vec::with_capacity(EmotionLabel::COUNT);
    for (label, slot) in EmotionLabel::ALL.into_iter().zip(slots) {
        ordered.push(slot.ok_or(AugmentError::MissingClass(label))?);
    }
    let mut samples = Vec::new();
    for bank in &ordered {
        samples.extend(composite_refs(bank)?);
    }
    Ok(Dataset {
        banks: ordered,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeakageMode {
    /// Shuffle composites freely; halves of one still can appear in every split.
    #[serde(rename = "paper", alias = "leaky")]
    Leaky,
    /// Assign whole source stills to splits; composites mixing splits are dropped.
    SourceDisjoint,
}

impl std::str::FromStr for LeakageMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" | "leaky" => Ok(LeakageMode::Leaky),
            "source-disjoint" => Ok(LeakageMode::SourceDisjoint),
            other => Err(format!("unknown leakage mode {other:?}")),
        }
    }
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.70, 0.10, 0.20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Largest-remainder rounding of `total` into (train, val, test).
/// Leftover units go to the largest fractional parts; ties prefer test,
/// then train, then val.
pub fn split_sizes(total: usize, fractions: [f64; 3]) -> Result<[usize; 3], AugmentError> {
    check_fractions(fractions)?;
    let quotas = fractions.map(|f| total as f64 * f);
    Ok(largest_remainder(total, &quotas, &[2, 0, 1])
        .try_into()
        .expect("three parts"))
}

fn check_fractions(fractions: [f64; 3]) -> Result<(), AugmentError> {
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0)
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(AugmentError::BadFractions(fractions));
    }
    Ok(())
}

/// Apportions `total` by `quotas` (which sum to `total`). `priority` lists the
/// part indices in tie-break order.
fn largest_remainder(total: usize, quotas: &[f64], priority: &[usize]) -> Vec<usize> {
    // Quotas such as 45 × 0.7 land a hair off their exact value; snap within
    // EPS so floors and ties follow exact arithmetic.
    const EPS: f64 = 1e-9;
    let floor = |q: f64| (q + EPS).floor().max(0.0);
    let rem = |q: f64| (q - floor(q)).max(0.0);
    let mut sizes: Vec<usize> = quotas.iter().map(|q| floor(*q) as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = priority.to_vec();
    // Stable sort keeps the priority order among equal remainders.
    order.sort_by(|&a, &b| {
        let (ra, rb) = (rem(quotas[a]), rem(quotas[b]));
        if (ra - rb).abs() < EPS {
            std::cmp::Ordering::Equal
        } else {
            rb.partial_cmp(&ra).expect("finite quotas")
        }
    });
    let mut left = total.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

/// Split assignment and provenance for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub v: u32,
    pub seed: u64,
    pub leakage_mode: LeakageMode,
    pub fractions: [f64; 3],
    /// Composites per class, keyed by label name.
    pub class_counts: BTreeMap<String, usize>,
    pub total: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Composites dropped by the source-disjoint rule; always empty in leaky mode.
    #[serde(default)]
    pub excluded: Vec<usize>,
}

impl DatasetManifest {
    pub fn split(&self, which: Split) -> &[usize] {
        match which {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Stratified train/val/test assignment, reproducible for a seed.
///
/// In leaky (`paper`) mode the split totals come from largest-remainder rounding of
/// the dataset size (test first), apportioned over classes by size, and each
/// class's composites are shuffled before assignment. In `source-disjoint`
/// mode each class's source stills are rounded and shuffled into the three
/// splits instead; a composite belongs to a split only if both of its halves
/// do.
pub fn stratified_split(
    dataset: &Dataset,
    fractions: [f64; 3],
    seed: u64,
    mode: LeakageMode,
) -> Result<DatasetManifest, AugmentError> {
    check_fractions(fractions)?;
    let counts = dataset.class_counts();
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(AugmentError::EmptyClass(EmotionLabel::ALL[i]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut excluded = Vec::new();

    match mode {
        LeakageMode::Leaky => {
            let totals = split_sizes(dataset.len(), fractions)?;
            let n = dataset.len() as f64;
            let per_class = |target: usize| {
                let quotas: Vec<f64> = counts.iter().map(|&c| target as f64 * c as f64 / n).collect();
                let prio: Vec<usize> = (0..counts.len()).collect();
                largest_remainder(target, &quotas, &prio)
            };
            let val_c = per_class(totals[1]);
            let test_c = per_class(totals[2]);
            for label in EmotionLabel::ALL {
                let c = label.index();
                let mut idx: Vec<usize> = dataset.class_range(label).collect();
                idx.shuffle(&mut rng);
                let (test, rest) = idx.split_at(test_c[c]);
                let (val, train) = rest.split_at(val_c[c]);
                parts[0].extend_from_slice(train);
                parts[1].extend_from_slice(val);
                parts[2].extend_from_slice(test);
            }
        }
        LeakageMode::SourceDisjoint => {
            for (bank, label) in dataset.banks.iter().zip(EmotionLabel::ALL) {
                let sizes = split_sizes(bank.len(), fractions)?;
                let mut ids: Vec<&str> = (0..bank.len()).map(|i| bank.upper(i).0.as_str()).collect();
                ids.shuffle(&mut rng);
                let mut home: HashMap<&str, usize> = HashMap::new();
                for (pos, id) in ids.into_iter().enumerate() {
                    let part = if pos < sizes[2] {
                        2
                    } else if pos < sizes[2] + sizes[1] {
                        1
                    } else {
                        0
                    };
                    home.insert(id, part);
                }
                for i in dataset.class_range(label) {
                    let r = dataset.samples[i];
                    let up = home.get(bank.upper(r.upper).0.as_str());
                    let lo = home.get(bank.lower(r.lower).0.as_str());
                    match (up, lo) {
                        (Some(a), Some(b)) if a == b => parts[*a].push(i),
                        _ => excluded.push(i),
                    }
                }
            }
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    excluded.sort_unstable();
    let [train, val, test] = parts;
    Ok(DatasetManifest {
        v: 1,
        seed,
        leakage_mode: mode,
        fractions,
        class_counts: EmotionLabel::ALL
            .iter()
            .map(|l| (l.name().to_string(), counts[l.index()]))
            .collect(),
        total: dataset.len(),
        train,
        val,
        test,
        excluded,
    })
}
