//! Append-only JSONL event store.
//!
//! `events.jsonl` is the source of truth: one event per line, each fsynced
//! before the append is acknowledged. `snapshot.json` caches the replayed
//! state together with the log offset it covers, so opening only replays the
//! tail. A torn final line (a crash mid-append) is cut off on open.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnnotationRecord, ReviewRecord, Revisioned};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store at {path} is not writable: {reason}")]
    StoreUnwritable { path: PathBuf, reason: String },
    #[error("event log line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Event {
    Annotation(Revisioned<AnnotationRecord>),
    Review(Revisioned<ReviewRecord>),
}

impl Event {
    pub fn seq(&self) -> u64 {
        match self {
            Event::Annotation(r) => r.seq,
            Event::Review(r) => r.seq,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogReplay {
    pub events: Vec<Event>,
    /// Bytes covered by complete lines.
    pub valid_len: usize,
    /// An unterminated final line was present.
    pub torn_tail: bool,
}

/// Parses log bytes. Every newline-terminated line must be a valid event
/// with a sequence number above its predecessor's; an unterminated last line
/// is reported as torn and excluded.
pub fn parse_log(bytes: &[u8]) -> Result<LogReplay, StoreError> {
    let mut events = Vec::new();
    let mut offset = 0;
    let mut last_seq = 0;
    for (i, line) in bytes.split_inclusive(|&b| b == b'\n').enumerate() {
        if line.last() != Some(&b'\n') {
            return Ok(LogReplay { events, valid_len: offset, torn_tail: true });
        }
        let corrupt = |reason: String| StoreError::Corrupt { line: i + 1, reason };
        let event: Event = serde_json::from_slice(line).map_err(|e| corrupt(e.to_string()))?;
        if event.seq() <= last_seq {
            return Err(corrupt(format!("sequence {} follows {last_seq}", event.seq())));
        }
        last_seq = event.seq();
        events.push(event);
        offset += line.len();
    }
    Ok(LogReplay { events, valid_len: offset, torn_tail: false })
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    log_offset: u64,
    next_seq: u64,
    annotations: Vec<Revisioned<AnnotationRecord>>,
    reviews: Vec<Revisioned<ReviewRecord>>,
}

type AnnotationKey = (String, usize, String);
type ReviewKey = (String, String, String);

pub struct ReviewStore {
    dir: PathBuf,
    log: File,
    log_len: u64,
    next_seq: u64,
    annotation_revs: HashMap<AnnotationKey, u64>,
    review_revs: HashMap<ReviewKey, u64>,
    annotations: Vec<Revisioned<AnnotationRecord>>,
    reviews: Vec<Revisioned<ReviewRecord>>,
    since_snapshot: usize,
    snapshot_every: usize,
}

impl ReviewStore {
    /// Opens or creates the store in `dir`. A snapshot is written after every
    /// `snapshot_every` appends (0 disables periodic snapshots).
    pub fn open(dir: &Path, snapshot_every: usize) -> Result<Self, StoreError> {
        let unwritable = |reason: String| StoreError::StoreUnwritable { path: dir.to_path_buf(), reason };
        fs::create_dir_all(dir).map_err(|e| unwritable(e.to_string()))?;
        let probe = dir.join(".write-probe");
        File::create(&probe).map_err(|e| unwritable(e.to_string()))?;
        let _ = fs::remove_file(&probe);

        let log_path = dir.join(EVENTS_FILE);
        let mut log = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(|e| unwritable(e.to_string()))?;
        let io = |source| StoreError::Io { path: log_path.clone(), source };
        let mut bytes = Vec::new();
        log.read_to_end(&mut bytes).map_err(io)?;

        let mut store = ReviewStore {
            dir: dir.to_path_buf(),
            log_len: 0,
            log,
            next_seq: 1,
            annotation_revs: HashMap::new(),
            review_revs: HashMap::new(),
            annotations: Vec::new(),
            reviews: Vec::new(),
            since_snapshot: 0,
            snapshot_every,
        };

        let mut start = 0usize;
        if let Some(snap) = read_snapshot(&dir.join(SNAPSHOT_FILE)) {
            let offset = snap.log_offset as usize;
            // A snapshot is only trusted if it ends on a line boundary of
            // the current log.
            if offset <= bytes.len() && (offset == 0 || bytes[offset - 1] == b'\n') {
                start = offset;
                store.next_seq = snap.next_seq;
                for a in snap.annotations {
                    store.index_annotation(a);
                }
                for r in snap.reviews {
                    store.index_review(r);
                }
            }
        }
        let replay = parse_log(&bytes[start..])?;
        for event in replay.events {
            if event.seq() < store.next_seq {
                return Err(StoreError::Corrupt {
                    line: 0,
                    reason: format!("sequence {} already covered by snapshot", event.seq()),
                });
            }
            store.next_seq = event.seq() + 1;
            match event {
                Event::Annotation(a) => store.index_annotation(a),
                Event::Review(r) => store.index_review(r),
            }
        }
        store.log_len = (start + replay.valid_len) as u64;
        if replay.torn_tail {
            store.log.set_len(store.log_len).map_err(io)?;
            store.log.sync_all().map_err(io)?;
        }
        Ok(store)
    }

    fn index_annotation(&mut self, a: Revisioned<AnnotationRecord>) {
        let key = (a.record.video_id.clone(), a.record.frame_index, a.record.annotator_id.clone());
        let rev = self.annotation_revs.entry(key).or_default();
        *rev = (*rev).max(a.revision);
        self.annotations.push(a);
    }

    fn index_review(&mut self, r: Revisioned<ReviewRecord>) {
        let key = (r.record.case_id.clone(), r.record.model_id.clone(), r.record.reviewer_id.clone());
        let rev = self.review_revs.entry(key).or_default();
        *rev = (*rev).max(r.revision);
        self.reviews.push(r);
    }

    fn write_event(&mut self, event: &Event) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(event).expect("event serializes");
        line.push(b'\n');
        let path = self.dir.join(EVENTS_FILE);
        let result = self.log.write_all(&line).and_then(|_| self.log.sync_data());
        if let Err(source) = result {
            // Drop whatever part of the line made it out.
            let _ = self.log.set_len(self.log_len);
            return Err(StoreError::Io { path, source });
        }
        self.log_len += line.len() as u64;
        self.next_seq += 1;
        self.since_snapshot += 1;
        Ok(())
    }

    fn after_append(&mut self) -> Result<(), StoreError> {
        if self.snapshot_every > 0 && self.since_snapshot >= self.snapshot_every {
            self.snapshot()?;
        }
        Ok(())
    }

    /// Appends an annotation once it is durable on disk.
    pub fn append_annotation(&mut self, record: AnnotationRecord) -> Result<Revisioned<AnnotationRecord>, StoreError> {
        let key = (record.video_id.clone(), record.frame_index, record.annotator_id.clone());
        let revision = self.annotation_revs.get(&key).copied().unwrap_or(0) + 1;
        let stored = Revisioned { seq: self.next_seq, revision, record };
        self.write_event(&Event::Annotation(stored.clone()))?;
        self.index_annotation(stored.clone());
        self.after_append()?;
        Ok(stored)
    }

    pub fn append_review(&mut self, record: ReviewRecord) -> Result<Revisioned<ReviewRecord>, StoreError> {
        let key = (record.case_id.clone(), record.model_id.clone(), record.reviewer_id.clone());
        let revision = self.review_revs.get(&key).copied().unwrap_or(0) + 1;
        let stored = Revisioned { seq: self.next_seq, revision, record };
        self.write_event(&Event::Review(stored.clone()))?;
        self.index_review(stored.clone());
        self.after_append()?;
        Ok(stored)
    }

    /// Writes the snapshot atomically (temp file, fsync, rename).
    pub fn snapshot(&mut self) -> Result<(), StoreError> {
        let snap = Snapshot {
            log_offset: self.log_len,
            next_seq: self.next_seq,
            annotations: self.annotations.clone(),
            reviews: self.reviews.clone(),
        };
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut f = File::create(&tmp).map_err(io)?;
        f.write_all(&serde_json::to_vec(&snap).expect("snapshot serializes")).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        self.since_snapshot = 0;
        Ok(())
    }

    pub fn annotations(&self) -> &[Revisioned<AnnotationRecord>] {
        &self.annotations
    }

    pub fn reviews(&self) -> &[Revisioned<ReviewRecord>] {
        &self.reviews
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

fn read_snapshot(path: &Path) -> Option<Snapshot> {
    serde_json::from_slice(&fs::read(path).ok()?).ok()
}
