use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Combined laterality and key-frame quality class.
///
/// Declaration order is the fixed class order used for probability vectors
/// and argmax tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SixClassLabel {
    #[serde(rename = "LCA_better")]
    LcaBetter,
    #[serde(rename = "LCA_bad")]
    LcaBad,
    #[serde(rename = "LCA_other")]
    LcaOther,
    #[serde(rename = "RCA_better")]
    RcaBetter,
    #[serde(rename = "RCA_bad")]
    RcaBad,
    #[serde(rename = "RCA_other")]
    RcaOther,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Laterality {
    #[serde(rename = "LCA")]
    Lca,
    #[serde(rename = "RCA")]
    Rca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Better,
    Bad,
    Other,
}

/// Three-way key-frame view: the two `better` classes and everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KeyFrameClass {
    #[serde(rename = "LCA_better")]
    LcaBetter,
    #[serde(rename = "RCA_better")]
    RcaBetter,
    #[serde(rename = "others")]
    Others,
}

impl SixClassLabel {
    pub const ALL: [SixClassLabel; 6] = [
        SixClassLabel::LcaBetter,
        SixClassLabel::LcaBad,
        SixClassLabel::LcaOther,
        SixClassLabel::RcaBetter,
        SixClassLabel::RcaBad,
        SixClassLabel::RcaOther,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SixClassLabel::LcaBetter => "LCA_better",
            SixClassLabel::LcaBad => "LCA_bad",
            SixClassLabel::LcaOther => "LCA_other",
            SixClassLabel::RcaBetter => "RCA_better",
            SixClassLabel::RcaBad => "RCA_bad",
            SixClassLabel::RcaOther => "RCA_other",
        }
    }

    pub fn position(self) -> usize {
        self as usize
    }

    pub fn laterality(self) -> Laterality {
        collapse_laterality(self)
    }

    pub fn quality(self) -> Quality {
        match self {
            SixClassLabel::LcaBetter | SixClassLabel::RcaBetter => Quality::Better,
            SixClassLabel::LcaBad | SixClassLabel::RcaBad => Quality::Bad,
            SixClassLabel::LcaOther | SixClassLabel::RcaOther => Quality::Other,
        }
    }
}

impl fmt::Display for SixClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SixClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SixClassLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

impl Laterality {
    pub fn as_str(self) -> &'static str {
        match self {
            Laterality::Lca => "LCA",
            Laterality::Rca => "RCA",
        }
    }
}

impl fmt::Display for Laterality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for KeyFrameClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyFrameClass::LcaBetter => "LCA_better",
            KeyFrameClass::RcaBetter => "RCA_better",
            KeyFrameClass::Others => "others",
        })
    }
}

pub fn collapse_laterality(label: SixClassLabel) -> Laterality {
    match label {
        SixClassLabel::LcaBetter | SixClassLabel::LcaBad | SixClassLabel::LcaOther => {
            Laterality::Lca
        }
        SixClassLabel::RcaBetter | SixClassLabel::RcaBad | SixClassLabel::RcaOther => {
            Laterality::Rca
        }
    }
}

pub fn collapse_keyframe3(label: SixClassLabel) -> KeyFrameClass {
    match label {
        SixClassLabel::LcaBetter => KeyFrameClass::LcaBetter,
        SixClassLabel::RcaBetter => KeyFrameClass::RcaBetter,
        _ => KeyFrameClass::Others,
    }
}
