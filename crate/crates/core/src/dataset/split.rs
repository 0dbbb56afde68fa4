//! Group-atomic train/val/test splitting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::table::{self, Align};

/// Ratios must sum to one within this tolerance.
pub const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("no records to split")]
    NoRecords,
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("group {group_id} appears in splits {splits:?}")]
    LeakageDetected { group_id: String, splits: Vec<Split> },
    #[error("group {0} has no split assignment")]
    Unassigned(String),
    #[error("manifest counts for {split} disagree with the records")]
    CountMismatch { split: Split },
}

/// Something that can be split: one image belonging to a video and exam.
pub trait GroupKeyed {
    fn exam_id(&self) -> &str;
    fn video_id(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Video,
    Exam,
}

impl Granularity {
    pub fn group_of<R: GroupKeyed>(self, record: &R) -> &str {
        match self {
            Granularity::Video => record.video_id(),
            Granularity::Exam => record.exam_id(),
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "video" => Ok(Granularity::Video),
            "exam" | "patient" => Ok(Granularity::Exam),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        for s in Split::ALL {
            let r = self.get(s);
            if !(r.is_finite() && r > 0.0) {
                return Err(SplitError::InvalidRatios(format!("{s} ratio {r} is not positive")));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > RATIO_TOLERANCE {
            return Err(SplitError::InvalidRatios(format!("ratios sum to {sum}")));
        }
        Ok(())
    }
}

/// Tables 1-2 columns: distinct exams, distinct videos, images.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub cases: usize,
    pub videos: usize,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitWarning {
    EmptySplit(Split),
}

impl fmt::Display for SplitWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitWarning::EmptySplit(s) => write!(f, "split {s} received no groups"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub granularity: Granularity,
    pub seed: u64,
    pub ratios: SplitRatios,
    /// Group id to split, sorted by group id. Serialized as a JSON object;
    /// repeated keys in input are kept so validation can see them.
    #[serde(serialize_with = "ser_assignment", deserialize_with = "de_assignment")]
    pub assignment: Vec<(String, Split)>,
    pub counts: BTreeMap<Split, SplitCounts>,
}

impl SplitManifest {
    pub fn split_of(&self, group_id: &str) -> Option<Split> {
        self.assignment
            .binary_search_by(|(g, _)| g.as_str().cmp(group_id))
            .ok()
            .map(|i| self.assignment[i].1)
    }

    /// Indices of `records` per split, in input order.
    pub fn partition<R: GroupKeyed>(&self, records: &[R]) -> BTreeMap<Split, Vec<usize>> {
        let mut out: BTreeMap<Split, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if let Some(s) = self.split_of(self.granularity.group_of(r)) {
                out.entry(s).or_default().push(i);
            }
        }
        out
    }
}

fn ser_assignment<S: Serializer>(v: &[(String, Split)], s: S) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(v.len()))?;
    for (g, split) in v {
        map.serialize_entry(g, split)?;
    }
    map.end()
}

fn de_assignment<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(String, Split)>, D::Error> {
    struct V;
    impl<'de> Visitor<'de> for V {
        type Value = Vec<(String, Split)>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map of group id to split")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut out = Vec::new();
            while let Some(entry) = map.next_entry::<String, Split>()? {
                out.push(entry);
            }
            out.sort();
            Ok(out)
        }
    }
    d.deserialize_map(V)
}

fn counts_of<'a, R: GroupKeyed + 'a>(records: impl Iterator<Item = &'a R>) -> SplitCounts {
    let mut exams = BTreeSet::new();
    let mut videos = BTreeSet::new();
    let mut images = 0;
    for r in records {
        exams.insert(r.exam_id());
        videos.insert(r.video_id());
        images += 1;
    }
    SplitCounts { cases: exams.len(), videos: videos.len(), images }
}

/// Assigns whole groups to splits. Groups are shuffled with a ChaCha8 stream
/// seeded from `seed`, then each goes to the split whose image deficit
/// relative to its target is largest (ties: train, val, test).
pub fn split_by_group<R: GroupKeyed>(
    records: &[R],
    granularity: Granularity,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(SplitManifest, Vec<SplitWarning>), SplitError> {
    ratios.validate()?;
    if records.is_empty() {
        return Err(SplitError::NoRecords);
    }
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *sizes.entry(granularity.group_of(r)).or_default() += 1;
    }
    let mut groups: Vec<(&str, usize)> = sizes.into_iter().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = records.len() as f64;
    let mut assigned = [0usize; 3];
    let mut assignment = Vec::with_capacity(groups.len());
    for (group, size) in groups {
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for (i, split) in Split::ALL.into_iter().enumerate() {
            let target = ratios.get(split) * total;
            let deficit = (target - assigned[i] as f64) / target;
            if deficit > best_deficit {
                best = i;
                best_deficit = deficit;
            }
        }
        assigned[best] += size;
        assignment.push((group.to_string(), Split::ALL[best]));
    }
    assignment.sort();

    let mut manifest = SplitManifest {
        granularity,
        seed,
        ratios,
        assignment,
        counts: BTreeMap::new(),
    };
    let parts = manifest.partition(records);
    let mut warnings = Vec::new();
    for split in Split::ALL {
        let idx = parts.get(&split).map(Vec::as_slice).unwrap_or_default();
        if idx.is_empty() {
            warnings.push(SplitWarning::EmptySplit(split));
        }
        manifest.counts.insert(split, counts_of(idx.iter().map(|&i| &records[i])));
    }
    Ok((manifest, warnings))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReportRow {
    pub split: Split,
    #[serde(flatten)]
    pub counts: SplitCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub granularity: Granularity,
    pub rows: Vec<SplitReportRow>,
}

impl SplitReport {
    pub fn render_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.split.to_string(),
                    r.counts.cases.to_string(),
                    r.counts.videos.to_string(),
                    r.counts.images.to_string(),
                ]
            })
            .collect();
        table::render(
            &["Split", "Cases", "Videos", "Images"],
            &[Align::Left, Align::Right, Align::Right, Align::Right],
            &rows,
        )
    }
}

/// Checks that no group or video spans more than one split and that the
/// manifest counts match `records`.
pub fn validate_split<R: GroupKeyed>(manifest: &SplitManifest, records: &[R]) -> Result<SplitReport, SplitError> {
    let mut by_group: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    for (g, s) in &manifest.assignment {
        by_group.entry(g.as_str()).or_default().insert(*s);
    }
    if let Some((g, splits)) = by_group.iter().find(|(_, s)| s.len() > 1) {
        return Err(SplitError::LeakageDetected {
            group_id: g.to_string(),
            splits: splits.iter().copied().collect(),
        });
    }

    // Exam groups are whole by construction once keys are unique; a video
    // id shared by two groups can still straddle splits.
    let mut by_video: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    let mut members: BTreeMap<Split, Vec<&R>> = BTreeMap::new();
    for r in records {
        let group = manifest.granularity.group_of(r);
        let split = *by_group
            .get(group)
            .and_then(|s| s.first())
            .ok_or_else(|| SplitError::Unassigned(group.to_string()))?;
        by_video.entry(r.video_id()).or_default().insert(split);
        members.entry(split).or_default().push(r);
    }
    if let Some((v, splits)) = by_video.iter().find(|(_, s)| s.len() > 1) {
        return Err(SplitError::LeakageDetected {
            group_id: v.to_string(),
            splits: splits.iter().copied().collect(),
        });
    }

    let mut rows = Vec::with_capacity(3);
    for split in Split::ALL {
        let counts = counts_of(members.get(&split).into_iter().flatten().copied());
        if manifest.counts.get(&split).copied().unwrap_or_default() != counts {
            return Err(SplitError::CountMismatch { split });
        }
        rows.push(SplitReportRow { split, counts });
    }
    Ok(SplitReport { granularity: manifest.granularity, rows })
}
