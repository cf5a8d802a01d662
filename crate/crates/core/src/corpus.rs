//! Posts, users, follow relations and labels: ingestion, splitting and
//! Table-style statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::emotion::{Emotion, Split, NUM_EMOTIONS};
use crate::jsonl::{self, JsonlError};
use crate::tape::seeded_rng;

/// Author id reserved for augmented posts that have no real author.
pub const SYNTHETIC_USER_ID: &str = "__synthetic__";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed record at {path}:{line}: {message}")]
    MalformedRecord { path: String, line: usize, message: String },
    #[error("dangling reference to {0:?}")]
    DanglingReference(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<JsonlError> for CorpusError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::Io { source, .. } => CorpusError::Io(source),
            JsonlError::Malformed { path, line, message } => CorpusError::MalformedRecord { path, line, message },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub author_id: String,
    pub text: String,
    pub emotion_label: Option<Emotion>,
    pub is_augmented: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub gender: String,
    pub region: String,
    pub tag: String,
    /// Post ids in publication order.
    pub history: Vec<String>,
}

impl UserProfile {
    pub fn new(user_id: impl Into<String>, gender: &str, region: &str, tag: &str) -> Self {
        Self {
            user_id: user_id.into(),
            gender: gender.into(),
            region: region.into(),
            tag: tag.into(),
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FollowEdge {
    pub follower_id: String,
    pub followee_id: String,
}

/// On-disk post record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostRecord {
    pub post_id: String,
    pub author_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<String>,
    #[serde(default)]
    pub is_augmented: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRecord {
    pub post_id: String,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub posts: BTreeMap<String, Post>,
    pub users: BTreeMap<String, UserProfile>,
    pub follows: BTreeSet<FollowEdge>,
    pub splits: BTreeMap<String, Split>,
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRecord {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn post_from_record(path: &Path, line: usize, r: PostRecord) -> Result<Post, CorpusError> {
    if r.text.trim().is_empty() {
        return Err(malformed(path, line, "empty text"));
    }
    let emotion_label = match r.emotion {
        Some(label) => Some(label.parse::<Emotion>().map_err(|e| malformed(path, line, e.to_string()))?),
        None => None,
    };
    Ok(Post {
        post_id: r.post_id,
        author_id: r.author_id,
        text: r.text,
        emotion_label,
        is_augmented: r.is_augmented,
    })
}

/// Loads the line-delimited posts, users and (optionally) follows files and
/// cross-links them.
pub fn load_corpus(posts_path: &Path, users_path: &Path, follows_path: Option<&Path>) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();

    for (_, user) in jsonl::read_records::<UserProfile>(users_path)? {
        if corpus.users.contains_key(&user.user_id) {
            return Err(CorpusError::DuplicateId(user.user_id));
        }
        corpus.users.insert(user.user_id.clone(), user);
    }

    for (line, record) in jsonl::read_records::<PostRecord>(posts_path)? {
        let post = post_from_record(posts_path, line, record)?;
        if !corpus.users.contains_key(&post.author_id) {
            return Err(CorpusError::DanglingReference(post.author_id));
        }
        if corpus.posts.contains_key(&post.post_id) {
            return Err(CorpusError::DuplicateId(post.post_id));
        }
        corpus.posts.insert(post.post_id.clone(), post);
    }

    for user in corpus.users.values() {
        if let Some(missing) = user.history.iter().find(|p| !corpus.posts.contains_key(*p)) {
            return Err(CorpusError::DanglingReference(missing.clone()));
        }
    }

    if let Some(path) = follows_path {
        for (line, edge) in jsonl::read_records::<FollowEdge>(path)? {
            for id in [&edge.follower_id, &edge.followee_id] {
                if !corpus.users.contains_key(id) {
                    return Err(CorpusError::DanglingReference(id.clone()));
                }
            }
            if edge.follower_id == edge.followee_id {
                return Err(malformed(path, line, "self-loop follow edge"));
            }
            corpus.follows.insert(edge);
        }
    }
    Ok(corpus)
}

/// Reads a splits file written by [`Corpus::save`].
pub fn load_splits(corpus: &mut Corpus, path: &Path) -> Result<(), CorpusError> {
    for (_, r) in jsonl::read_records::<SplitRecord>(path)? {
        if !corpus.posts.contains_key(&r.post_id) {
            return Err(CorpusError::DanglingReference(r.post_id));
        }
        corpus.splits.insert(r.post_id, r.split);
    }
    Ok(())
}

impl Corpus {
    pub fn post_records(&self) -> Vec<PostRecord> {
        self.posts
            .values()
            .map(|p| PostRecord {
                post_id: p.post_id.clone(),
                author_id: p.author_id.clone(),
                text: p.text.clone(),
                emotion: p.emotion_label.map(|e| e.name().to_string()),
                is_augmented: p.is_augmented,
            })
            .collect()
    }

    /// Writes `posts.jsonl`, `users.jsonl`, `follows.jsonl` and `splits.jsonl`
    /// into `dir`.
    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        jsonl::write_records(&dir.join("posts.jsonl"), &self.post_records())?;
        jsonl::write_records(&dir.join("users.jsonl"), self.users.values())?;
        jsonl::write_records(&dir.join("follows.jsonl"), &self.follows)?;
        let splits: Vec<_> = self
            .splits
            .iter()
            .map(|(post_id, &split)| SplitRecord {
                post_id: post_id.clone(),
                split,
            })
            .collect();
        jsonl::write_records(&dir.join("splits.jsonl"), &splits)
    }

    pub fn split_of(&self, post_id: &str) -> Option<Split> {
        self.splits.get(post_id).copied()
    }

    /// Posts not held out for validation or test; these may feed prompts
    /// and similarity history without leaking evaluation content.
    pub fn is_training_visible(&self, post_id: &str) -> bool {
        !matches!(self.split_of(post_id), Some(Split::Validate | Split::Test))
    }

    pub fn labeled_posts(&self) -> impl Iterator<Item = &Post> {
        self.posts.values().filter(|p| p.emotion_label.is_some())
    }

    pub fn posts_in(&self, split: Split) -> Vec<&Post> {
        self.labeled_posts().filter(|p| self.split_of(&p.post_id) == Some(split)).collect()
    }

    pub fn user_ids(&self) -> Vec<String> {
        self.users.keys().cloned().collect()
    }

    pub fn has_follows(&self) -> bool {
        !self.follows.is_empty()
    }
}

fn floor_eps(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

/// Distributes `target` units over classes, each receiving the floor of its
/// exact share plus at most one leftover unit by largest remainder.
fn apportion(class_sizes: &[usize], ratio: f64, target: usize, capacity: &[usize]) -> Vec<usize> {
    let mut quota: Vec<usize> = class_sizes.iter().map(|&n| floor_eps(n as f64 * ratio)).collect();
    let mut left = target.saturating_sub(quota.iter().sum());
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    let fracs: Vec<f64> = (0..class_sizes.len()).map(|c| class_sizes[c] as f64 * ratio - quota[c] as f64).collect();
    let frac = |c: usize| fracs[c];
    order.sort_by(|&a, &b| frac(b).partial_cmp(&frac(a)).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    for c in order {
        if left == 0 {
            break;
        }
        if quota[c] < capacity[c] && frac(c) > 1e-12 {
            quota[c] += 1;
            left -= 1;
        }
    }
    quota
}

/// Stratified, seeded split of the non-augmented labeled posts; augmented
/// posts always go to train.
pub fn split_dataset(mut corpus: Corpus, ratios: (f64, f64, f64), seed: u64) -> Result<Corpus, CorpusError> {
    let (tr, va, te) = ratios;
    if tr < 0.0 || va < 0.0 || te < 0.0 || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    corpus.splits.clear();

    let mut by_class: Vec<Vec<String>> = vec![Vec::new(); NUM_EMOTIONS];
    for post in corpus.labeled_posts() {
        if post.is_augmented {
            continue;
        }
        by_class[post.emotion_label.expect("labeled").index()].push(post.post_id.clone());
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let n: usize = sizes.iter().sum();

    let val = apportion(&sizes, va, floor_eps(n as f64 * va), &sizes);
    let remaining: Vec<usize> = sizes.iter().zip(&val).map(|(s, v)| s - v).collect();
    let test = apportion(&sizes, te, floor_eps(n as f64 * te), &remaining);

    let mut rng = seeded_rng(seed);
    for (c, mut ids) in by_class.into_iter().enumerate() {
        ids.sort();
        ids.shuffle(&mut rng);
        for (i, id) in ids.into_iter().enumerate() {
            let split = if i < val[c] {
                Split::Validate
            } else if i < val[c] + test[c] {
                Split::Test
            } else {
                Split::Train
            };
            corpus.splits.insert(id, split);
        }
    }
    let augmented: Vec<String> = corpus
        .labeled_posts()
        .filter(|p| p.is_augmented)
        .map(|p| p.post_id.clone())
        .collect();
    for id in augmented {
        corpus.splits.insert(id, Split::Train);
    }
    Ok(corpus)
}

/// Appends pre-generated augmented posts to the training split.
pub fn merge_augmented(mut corpus: Corpus, augmented_path: &Path) -> Result<Corpus, CorpusError> {
    let records = jsonl::read_records::<PostRecord>(augmented_path)?;
    let mut staged = Vec::with_capacity(records.len());
    for (line, record) in records {
        let mut post = post_from_record(augmented_path, line, record)?;
        if post.emotion_label.is_none() {
            return Err(malformed(augmented_path, line, "augmented record without emotion label"));
        }
        if post.author_id != SYNTHETIC_USER_ID && !corpus.users.contains_key(&post.author_id) {
            return Err(CorpusError::DanglingReference(post.author_id));
        }
        if corpus.posts.contains_key(&post.post_id) {
            return Err(CorpusError::DuplicateId(post.post_id));
        }
        post.is_augmented = true;
        staged.push(post);
    }
    for post in staged {
        if post.author_id == SYNTHETIC_USER_ID {
            corpus
                .users
                .entry(SYNTHETIC_USER_ID.to_string())
                .or_insert_with(|| UserProfile::new(SYNTHETIC_USER_ID, "", "", ""));
        }
        corpus.splits.insert(post.post_id.clone(), Split::Train);
        corpus.posts.insert(post.post_id.clone(), post);
    }
    Ok(corpus)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    /// Augmented posts in train, shown in parentheses in the text table.
    pub train_augmented: usize,
    pub validate: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.train_augmented + self.validate + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub per_emotion: BTreeMap<Emotion, SplitCounts>,
    pub totals: SplitCounts,
    pub posts: usize,
    pub users: usize,
    pub follows: usize,
}

pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let mut per_emotion: BTreeMap<Emotion, SplitCounts> = Emotion::ALL.iter().map(|&e| (e, SplitCounts::default())).collect();
    for post in corpus.labeled_posts() {
        let Some(split) = corpus.split_of(&post.post_id) else { continue };
        let counts = per_emotion.get_mut(&post.emotion_label.expect("labeled")).expect("all emotions present");
        match (split, post.is_augmented) {
            (Split::Train, true) => counts.train_augmented += 1,
            (Split::Train, false) => counts.train += 1,
            (Split::Validate, _) => counts.validate += 1,
            (Split::Test, _) => counts.test += 1,
        }
    }
    let mut totals = SplitCounts::default();
    for c in per_emotion.values() {
        totals.train += c.train;
        totals.train_augmented += c.train_augmented;
        totals.validate += c.validate;
        totals.test += c.test;
    }
    StatsReport {
        per_emotion,
        totals,
        posts: corpus.posts.len(),
        users: corpus.users.len(),
        follows: corpus.follows.len(),
    }
}

impl StatsReport {
    /// Emotion x split table with users and follow counts underneath.
    pub fn to_table(&self) -> String {
        fn train_cell(c: &SplitCounts) -> String {
            if c.train_augmented > 0 {
                format!("{} ({})", c.train, c.train_augmented)
            } else {
                c.train.to_string()
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "{:<12}{:>16}{:>10}{:>10}", "Emotion", "Train", "Validate", "Test");
        for (e, c) in &self.per_emotion {
            let _ = writeln!(out, "{:<12}{:>16}{:>10}{:>10}", e.name(), train_cell(c), c.validate, c.test);
        }
        let _ = writeln!(
            out,
            "{:<12}{:>16}{:>10}{:>10}",
            "Total",
            train_cell(&self.totals),
            self.totals.validate,
            self.totals.test
        );
        let _ = writeln!(out, "{:<12}{:>16}", "# Users", self.users);
        let follows = if self.follows == 0 { "-".to_string() } else { self.follows.to_string() };
        let _ = writeln!(out, "{:<12}{:>16}", "# Following", follows);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, lines: &[&str]) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        p
    }

    fn toy(dir: &Path) -> Corpus {
        let posts = write(
            dir,
            "posts.jsonl",
            &[
                r#"{"post_id":"p1","author_id":"u1","text":"rain again","emotion":"Sad"}"#,
                r#"{"post_id":"p2","author_id":"u1","text":"new shoes","emotion":"Happy"}"#,
                r#"{"post_id":"p3","author_id":"u2","text":"train late"}"#,
            ],
        );
        let users = write(
            dir,
            "users.jsonl",
            &[
                r#"{"user_id":"u1","gender":"female","region":"Shanxi","tag":"reader","history":["p1","p2"]}"#,
                r#"{"user_id":"u2","gender":"","region":"","tag":"","history":["p3"]}"#,
            ],
        );
        let follows = write(dir, "follows.jsonl", &[r#"{"follower_id":"u1","followee_id":"u2"}"#]);
        load_corpus(&posts, &users, Some(&follows)).unwrap()
    }

    #[test]
    fn loads_three_posts_two_users_one_follow() {
        let dir = tempfile::tempdir().unwrap();
        let c = toy(dir.path());
        assert_eq!((c.posts.len(), c.users.len(), c.follows.len()), (3, 2, 1));
        assert_eq!(c.posts["p3"].emotion_label, None);
    }

    #[test]
    fn unknown_author_is_dangling() {
        let dir = tempfile::tempdir().unwrap();
        let posts = write(dir.path(), "posts.jsonl", &[r#"{"post_id":"p1","author_id":"u9","text":"x"}"#]);
        let users = write(dir.path(), "users.jsonl", &[r#"{"user_id":"u1","gender":"","region":"","tag":"","history":[]}"#]);
        match load_corpus(&posts, &users, None) {
            Err(CorpusError::DanglingReference(id)) => assert_eq!(id, "u9"),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_malformed_records() {
        let dir = tempfile::tempdir().unwrap();
        let users = write(dir.path(), "users.jsonl", &[r#"{"user_id":"u1","gender":"","region":"","tag":"","history":[]}"#]);
        let dup = write(
            dir.path(),
            "dup.jsonl",
            &[
                r#"{"post_id":"p1","author_id":"u1","text":"x"}"#,
                r#"{"post_id":"p1","author_id":"u1","text":"y"}"#,
            ],
        );
        assert!(matches!(load_corpus(&dup, &users, None), Err(CorpusError::DuplicateId(id)) if id == "p1"));
        let bad = write(dir.path(), "bad.jsonl", &[r#"{"post_id":"p1","author_id":"u1","text":"x"}"#, "not json"]);
        assert!(matches!(load_corpus(&bad, &users, None), Err(CorpusError::MalformedRecord { line: 2, .. })));
        let missing_attr = write(dir.path(), "u2.jsonl", &[r#"{"user_id":"u1","gender":"","tag":"","history":[]}"#]);
        assert!(matches!(load_corpus(&dup, &missing_attr, None), Err(CorpusError::MalformedRecord { line: 1, .. })));
    }

    #[test]
    fn absent_follows_file_gives_empty_set() {
        let dir = tempfile::tempdir().unwrap();
        let c = toy(dir.path());
        let c2 = load_corpus(&dir.path().join("posts.jsonl"), &dir.path().join("users.jsonl"), None).unwrap();
        assert!(c2.follows.is_empty());
        assert_eq!(c.posts, c2.posts);
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let c = split_dataset(toy(dir.path()), (0.5, 0.5, 0.0), 1).unwrap();
        let out = dir.path().join("out");
        c.save(&out).unwrap();
        let mut back = load_corpus(&out.join("posts.jsonl"), &out.join("users.jsonl"), Some(&out.join("follows.jsonl"))).unwrap();
        load_splits(&mut back, &out.join("splits.jsonl")).unwrap();
        assert_eq!(back, c);
    }

    fn labeled(n: usize, augmented: usize) -> Corpus {
        let mut c = Corpus::default();
        c.users.insert("u".into(), UserProfile::new("u", "", "", ""));
        for i in 0..n {
            let id = format!("p{i:03}");
            c.posts.insert(
                id.clone(),
                Post {
                    post_id: id,
                    author_id: "u".into(),
                    text: format!("text {i}"),
                    emotion_label: Some(Emotion::ALL[i % 7]),
                    is_augmented: i < augmented,
                },
            );
        }
        c
    }

    fn sizes(c: &Corpus) -> (usize, usize, usize) {
        let t = corpus_stats(c).totals;
        (t.train + t.train_augmented, t.validate, t.test)
    }

    #[test]
    fn eighty_ten_ten_is_deterministic() {
        let a = split_dataset(labeled(100, 0), (0.8, 0.1, 0.1), 7).unwrap();
        let b = split_dataset(labeled(100, 0), (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(sizes(&a), (80, 10, 10));
        assert_eq!(a.splits, b.splits);
        let c = split_dataset(labeled(100, 0), (0.8, 0.1, 0.1), 8).unwrap();
        assert_eq!(sizes(&c), (80, 10, 10));
        assert_ne!(a.splits, c.splits);
    }

    #[test]
    fn bad_ratios_rejected() {
        assert!(matches!(split_dataset(labeled(10, 0), (0.5, 0.5, 0.5), 1), Err(CorpusError::BadRatios(_))));
    }

    #[test]
    fn augmented_posts_forced_to_train() {
        let c = split_dataset(labeled(10, 2), (0.8, 0.1, 0.1), 3).unwrap();
        for id in ["p000", "p001"] {
            assert_eq!(c.split_of(id), Some(Split::Train));
        }
    }

    #[test]
    fn stats_edge_cases() {
        let empty = corpus_stats(&Corpus::default());
        assert_eq!(empty.totals, SplitCounts::default());
        assert!(empty.per_emotion.values().all(|c| c.total() == 0));

        let c = split_dataset(labeled(7, 0), (1.0, 0.0, 0.0), 1).unwrap();
        let s = corpus_stats(&c);
        assert!(s.per_emotion.values().all(|c| c.train == 1 && c.total() == 1));
    }

    #[test]
    fn merge_augmented_paths() {
        let dir = tempfile::tempdir().unwrap();
        let base = split_dataset(toy(dir.path()), (1.0, 0.0, 0.0), 1).unwrap();

        let empty = write(dir.path(), "aug0.jsonl", &[]);
        assert_eq!(merge_augmented(base.clone(), &empty).unwrap(), base);

        let bad = write(dir.path(), "aug1.jsonl", &[r#"{"post_id":"a1","author_id":"u1","text":"x","emotion":"joyful"}"#]);
        assert!(matches!(merge_augmented(base.clone(), &bad), Err(CorpusError::MalformedRecord { .. })));

        let dangling = write(dir.path(), "aug2.jsonl", &[r#"{"post_id":"a1","author_id":"zz","text":"x","emotion":"Fear"}"#]);
        assert!(matches!(merge_augmented(base.clone(), &dangling), Err(CorpusError::DanglingReference(_))));

        let ok = write(
            dir.path(),
            "aug3.jsonl",
            &[
                r#"{"post_id":"a1","author_id":"__synthetic__","text":"x","emotion":"Fear"}"#,
                r#"{"post_id":"a2","author_id":"u2","text":"y","emotion":"Anger"}"#,
            ],
        );
        let merged = merge_augmented(base, &ok).unwrap();
        assert!(merged.posts["a1"].is_augmented);
        assert_eq!(merged.split_of("a2"), Some(Split::Train));
        assert!(merged.users.contains_key(SYNTHETIC_USER_ID));
        assert_eq!(corpus_stats(&merged).totals.train_augmented, 2);
    }
}
