use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnnotationRecord, Revisioned};
use crate::classify::SixClassLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub video_id: String,
    pub frame_index: usize,
    /// Latest label of each disagreeing annotator.
    pub labels: BTreeMap<String, SixClassLabel>,
}

/// Frames whose annotators' latest labels disagree and that have no
/// resolving annotation newer than all of those labels. Output is sorted by
/// video and frame.
pub fn find_conflicts(annotations: &[Revisioned<AnnotationRecord>]) -> Vec<Conflict> {
    type Latest<'a> = BTreeMap<&'a str, &'a Revisioned<AnnotationRecord>>;
    let mut frames: BTreeMap<(&str, usize), Latest> = BTreeMap::new();
    let mut resolved_at: BTreeMap<(&str, usize), u64> = BTreeMap::new();
    for a in annotations {
        let frame = (a.record.video_id.as_str(), a.record.frame_index);
        if a.record.resolving {
            let at = resolved_at.entry(frame).or_default();
            *at = (*at).max(a.seq);
        }
        let slot = frames
            .entry(frame)
            .or_default()
            .entry(a.record.annotator_id.as_str())
            .or_insert(a);
        if a.seq > slot.seq {
            *slot = a;
        }
    }

    let mut out = Vec::new();
    for (key @ (video, frame), latest) in frames {
        let labelled: Vec<_> = latest.values().filter(|a| !a.record.resolving).collect();
        let Some(first) = labelled.first() else { continue };
        if labelled.iter().all(|a| a.record.label == first.record.label) {
            continue;
        }
        let newest_label = labelled.iter().map(|a| a.seq).max().unwrap_or(0);
        if resolved_at.get(&key).is_none_or(|&at| at < newest_label) {
            out.push(Conflict {
                video_id: video.to_string(),
                frame_index: frame,
                labels: labelled
                    .iter()
                    .map(|a| (a.record.annotator_id.clone(), a.record.label))
                    .collect(),
            });
        }
    }
    out
}
