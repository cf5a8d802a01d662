use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::emotion::Emotion;
use crate::jsonl::{self, JsonlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Repost,
    RepostWithComment,
    NoRepost,
}

impl Behavior {
    pub const ALL: [Behavior; 3] = [Behavior::Repost, Behavior::RepostWithComment, Behavior::NoRepost];
}

/// One reader agent's reaction to one post.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulatedFeedback {
    pub reader_id: String,
    pub post_id: String,
    pub behavior: Behavior,
    /// `None` when the agent named no valid emotion.
    pub emotion: Option<Emotion>,
    pub comment: String,
    pub raw: String,
}

impl SimulatedFeedback {
    pub fn from_raw(reader_id: &str, post_id: &str, raw: String) -> Self {
        let parsed = parse_feedback(&raw);
        Self {
            reader_id: reader_id.to_string(),
            post_id: post_id.to_string(),
            behavior: parsed.behavior,
            emotion: parsed.emotion,
            comment: parsed.comment,
            raw,
        }
    }

    /// Text encoded as the reader's feedback content: emotion and comment.
    /// `None` when neither was produced.
    pub fn content_text(&self) -> Option<String> {
        match (self.emotion, self.comment.is_empty()) {
            (None, true) => None,
            (Some(e), true) => Some(format!("Emotion: {e}")),
            (None, false) => Some(format!("Comment: {}", self.comment)),
            (Some(e), false) => Some(format!("Emotion: {e}\nComment: {}", self.comment)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFeedback {
    pub behavior: Behavior,
    pub emotion: Option<Emotion>,
    pub comment: String,
}

fn normalize_phrase(s: &str) -> String {
    s.to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

fn parse_behavior(value: &str) -> Option<Behavior> {
    match normalize_phrase(value).as_str() {
        "repost with comment" | "repost with a comment" | "reposting with a comment" | "reposting with comment" | "quote"
        | "quote repost" | "retweet with comment" | "repost with comments" => Some(Behavior::RepostWithComment),
        "repost" | "reposting" | "retweet" | "forward" => Some(Behavior::Repost),
        "no repost" | "no" | "none" | "not repost" | "do not repost" | "no reposting" | "skip" => Some(Behavior::NoRepost),
        _ => None,
    }
}

/// Total parser for agent output. Reads `Behavior:`, `Emotion:` and
/// `Comment:` lines case-insensitively; anything missing or unrecognized
/// degrades to `no_repost` / no emotion / empty comment.
pub fn parse_feedback(raw: &str) -> ParsedFeedback {
    let mut behavior = None;
    let mut emotion = None;
    let mut comment = String::new();
    for line in raw.lines() {
        let Some((key, value)) = line.split_once(':') else { continue };
        let key = key.trim().trim_start_matches(['-', '*', '#']).trim().to_lowercase();
        let value = value.trim();
        match key.as_str() {
            "behavior" | "behaviour" if behavior.is_none() => behavior = parse_behavior(value),
            "emotion" if emotion.is_none() => {
                emotion = value
                    .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
                    .parse::<Emotion>()
                    .ok()
            }
            "comment" if comment.is_empty() => comment = value.to_string(),
            _ => {}
        }
    }
    let mut behavior = behavior.unwrap_or(Behavior::NoRepost);
    if behavior != Behavior::RepostWithComment {
        comment.clear();
    } else if comment.is_empty() {
        behavior = Behavior::Repost;
    }
    ParsedFeedback { behavior, emotion, comment }
}

/// Serialized ledger line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub reader_id: String,
    pub post_id: String,
    pub behavior: Behavior,
    /// One of the seven labels or `"unparsed"`.
    pub emotion: String,
    pub comment: String,
    pub raw: String,
}

pub const UNPARSED: &str = "unparsed";

impl From<&SimulatedFeedback> for LedgerRecord {
    fn from(f: &SimulatedFeedback) -> Self {
        Self {
            reader_id: f.reader_id.clone(),
            post_id: f.post_id.clone(),
            behavior: f.behavior,
            emotion: f.emotion.map_or_else(|| UNPARSED.to_string(), |e| e.name().to_string()),
            comment: f.comment.clone(),
            raw: f.raw.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("ledger already holds feedback of {0} on {1}")]
    Duplicate(String, String),
    #[error("invalid ledger record for ({0}, {1}): {2}")]
    Invalid(String, String, String),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Feedback keyed by `(reader_id, post_id)`; iteration is sorted by key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeedbackLedger {
    entries: BTreeMap<(String, String), SimulatedFeedback>,
}

impl FeedbackLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, reader_id: &str, post_id: &str) -> bool {
        self.entries.contains_key(&(reader_id.to_string(), post_id.to_string()))
    }

    /// Rejects a second record for the same pair unless `overwrite` is set.
    pub fn insert(&mut self, feedback: SimulatedFeedback, overwrite: bool) -> Result<(), LedgerError> {
        let key = (feedback.reader_id.clone(), feedback.post_id.clone());
        if !overwrite && self.entries.contains_key(&key) {
            return Err(LedgerError::Duplicate(key.0, key.1));
        }
        self.entries.insert(key, feedback);
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = &SimulatedFeedback> {
        self.entries.values()
    }

    pub fn counts(&self) -> BTreeMap<Behavior, usize> {
        let mut counts: BTreeMap<Behavior, usize> = Behavior::ALL.iter().map(|&b| (b, 0)).collect();
        for e in self.entries.values() {
            *counts.get_mut(&e.behavior).expect("all behaviors present") += 1;
        }
        counts
    }

    pub fn save(&self, path: &Path) -> Result<(), LedgerError> {
        let records: Vec<LedgerRecord> = self.entries.values().map(LedgerRecord::from).collect();
        let mut bytes = Vec::new();
        for r in &records {
            serde_json::to_writer(&mut bytes, r).expect("ledger record serializes");
            bytes.push(b'\n');
        }
        crate::jsonl::write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LedgerError> {
        let mut ledger = Self::new();
        for (_, r) in jsonl::read_records::<LedgerRecord>(path)? {
            let emotion = if r.emotion == UNPARSED {
                None
            } else {
                Some(r.emotion.parse::<Emotion>().map_err(|e| LedgerError::Invalid(r.reader_id.clone(), r.post_id.clone(), e.to_string()))?)
            };
            if r.behavior != Behavior::RepostWithComment && !r.comment.is_empty() {
                return Err(LedgerError::Invalid(r.reader_id, r.post_id, "comment without repost_with_comment".into()));
            }
            ledger.insert(
                SimulatedFeedback {
                    reader_id: r.reader_id,
                    post_id: r.post_id,
                    behavior: r.behavior,
                    emotion,
                    comment: r.comment,
                    raw: r.raw,
                },
                false,
            )?;
        }
        Ok(ledger)
    }
}

/// One row of the behavior-statistics table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorRow {
    pub top_k: usize,
    pub agent: String,
    pub reposting: usize,
    pub reposting_with_comment: usize,
    pub no_repost: usize,
    pub total: usize,
}

impl BehaviorRow {
    pub fn from_ledger(ledger: &FeedbackLedger, top_k: usize, agent: impl Into<String>) -> Self {
        let c = ledger.counts();
        Self {
            top_k,
            agent: agent.into(),
            reposting: c[&Behavior::Repost],
            reposting_with_comment: c[&Behavior::RepostWithComment],
            no_repost: c[&Behavior::NoRepost],
            total: ledger.len(),
        }
    }
}

pub const BEHAVIOR_COLUMNS: [&str; 6] = ["top-k", "Agent in datasets", "Reposting", "Reposting with a comment", "No repost", "Total"];

/// Plain-text behavior statistics, one row per (k, agent) run.
pub fn behavior_table(rows: &[BehaviorRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", BEHAVIOR_COLUMNS.join(" | "));
    for r in rows {
        let _ = writeln!(
            out,
            "{} | {} | {} | {} | {} | {}",
            r.top_k, r.agent, r.reposting, r.reposting_with_comment, r.no_repost, r.total
        );
    }
    out
}
