use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CorpusRecord, DatasetError};
use crate::classify::Laterality;

pub const PROMPT_TEMPLATE_VERSION: &str = "v1";

const TEMPLATE_EN_V1: &str = include_str!("../../templates/prompt_en_v1.txt");
const TEMPLATE_JP_V1: &str = include_str!("../../templates/prompt_jp_v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Jp,
    En,
}

impl Lang {
    pub fn as_str(self) -> &'static str {
        match self {
            Lang::Jp => "jp",
            Lang::En => "en",
        }
    }

    fn laterality_word(self, lat: Laterality) -> &'static str {
        match (self, lat) {
            (Lang::En, Laterality::Lca) => "left",
            (Lang::En, Laterality::Rca) => "right",
            (Lang::Jp, Laterality::Lca) => "左",
            (Lang::Jp, Laterality::Rca) => "右",
        }
    }

    fn template(self) -> &'static str {
        match self {
            Lang::Jp => TEMPLATE_JP_V1,
            Lang::En => TEMPLATE_EN_V1,
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jp" | "ja" => Ok(Lang::Jp),
            "en" => Ok(Lang::En),
            other => Err(format!("unknown language {other:?}")),
        }
    }
}

/// Instantiates the prompt template with the record's laterality and report.
pub fn build_prompt(record: &CorpusRecord, lang: Lang) -> Result<String, DatasetError> {
    let report = match lang {
        Lang::Jp => &record.report_jp,
        Lang::En => &record.report_en,
    };
    if report.is_empty() {
        return Err(DatasetError::MissingLanguage { case_id: record.case_id(), lang });
    }
    Ok(lang
        .template()
        .replace("{laterality}", lang.laterality_word(record.laterality))
        .replace("{report}", report))
}
