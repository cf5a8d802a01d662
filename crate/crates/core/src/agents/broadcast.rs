use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::corpus::{Corpus, Post, UserProfile, SYNTHETIC_USER_ID};
use crate::emotion::Split;
use crate::gateway::{chat_generate, ChatBackend, ChatHints, GatewayError};
use crate::hashing::derive_seed;

use super::feedback::{FeedbackLedger, LedgerError, SimulatedFeedback};
use super::prompt::{build_agent_prompt, sample_history, visible_history, HISTORY_SAMPLE};
use super::tfidf::{CandidatePool, RankError};

#[derive(Debug, thiserror::Error)]
pub enum BroadcastError {
    #[error("backend failed after {completed} ledger entries: {source}")]
    Backend {
        completed: usize,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Attribute fingerprint the mock backend uses to give each reader a
/// stable behavioral tendency.
pub fn reader_key(reader: &UserProfile) -> String {
    format!("{}|{}|{}|{}", reader.user_id, reader.gender, reader.region, reader.tag)
}

pub fn simulate_feedback(
    backend: &dyn ChatBackend,
    reader: &UserProfile,
    history_texts: &[String],
    post: &Post,
    seed: u64,
) -> Result<SimulatedFeedback, GatewayError> {
    let prompt = build_agent_prompt(reader, history_texts, &post.post_id, &post.text);
    let pair_seed = derive_seed(&[&seed.to_le_bytes(), reader.user_id.as_bytes(), post.post_id.as_bytes()]);
    let hints = ChatHints {
        reader_key: Some(reader_key(reader)),
        post_label: post.emotion_label,
        post_text: Some(post.text.clone()),
    };
    let raw = chat_generate(backend, &prompt.rendered, pair_seed, hints)?;
    Ok(SimulatedFeedback::from_raw(&reader.user_id, &post.post_id, raw))
}

#[derive(Debug, Clone)]
pub struct BroadcastOptions {
    pub k: usize,
    pub seed: u64,
    pub max_inflight: usize,
    /// Ledger snapshot path, rewritten every `checkpoint_every` entries.
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
}

impl BroadcastOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_inflight: 4,
            checkpoint: None,
            checkpoint_every: 1000,
        }
    }
}

/// Training-split, non-augmented posts eligible for broadcast.
pub fn broadcast_pool(corpus: &Corpus) -> CandidatePool {
    CandidatePool::new(
        corpus
            .posts
            .values()
            .filter(|p| !p.is_augmented && corpus.split_of(&p.post_id) == Some(Split::Train))
            .map(|p| (p.post_id.as_str(), p.author_id.as_str(), p.text.as_str())),
    )
}

/// `(reader_id, post_id)` pairs to simulate: each reader's top-k candidates
/// among other authors' training posts. Readers without visible history are
/// skipped since they cannot be ranked against.
pub fn broadcast_plan(corpus: &Corpus, k: usize) -> Result<Vec<(String, String)>, RankError> {
    if k == 0 {
        return Err(RankError::ZeroK);
    }
    let pool = broadcast_pool(corpus);
    let mut plan = Vec::new();
    for reader in corpus.users.values().filter(|u| u.user_id != SYNTHETIC_USER_ID) {
        let history = visible_history(corpus, reader);
        match pool.rank(&history, Some(&reader.user_id), k) {
            Ok(ids) => plan.extend(ids.into_iter().map(|p| (reader.user_id.clone(), p))),
            Err(RankError::EmptyHistory) => log::debug!("reader {} has no visible history; skipped", reader.user_id),
            Err(e) => return Err(e),
        }
    }
    Ok(plan)
}

pub fn run_broadcast(corpus: &Corpus, backend: &dyn ChatBackend, k: usize, seed: u64) -> Result<FeedbackLedger, BroadcastError> {
    run_broadcast_with(corpus, backend, &BroadcastOptions::new(k, seed), FeedbackLedger::new())
}

/// Broadcast with checkpointing. Pairs already present in `resume` are not
/// re-simulated. On a backend error the completed part is checkpointed
/// before the error is returned.
pub fn run_broadcast_with(
    corpus: &Corpus,
    backend: &dyn ChatBackend,
    options: &BroadcastOptions,
    resume: FeedbackLedger,
) -> Result<FeedbackLedger, BroadcastError> {
    let plan: Vec<(String, String)> = broadcast_plan(corpus, options.k)?
        .into_iter()
        .filter(|(r, p)| !resume.contains(r, p))
        .collect();
    let mut ledger = resume;
    let chunk = options.checkpoint_every.max(1);
    let workers = options.max_inflight.max(1);

    for batch in plan.chunks(chunk) {
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<SimulatedFeedback, GatewayError>>>> = Mutex::new((0..batch.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..workers.min(batch.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some((reader_id, post_id)) = batch.get(i) else { break };
                    let reader = &corpus.users[reader_id];
                    let post = &corpus.posts[post_id];
                    let history = sample_history(corpus, reader, HISTORY_SAMPLE, options.seed);
                    let out = simulate_feedback(backend, reader, &history, post, options.seed);
                    let failed = out.is_err();
                    results.lock().expect("results lock")[i] = Some(out);
                    if failed {
                        next.store(batch.len(), Ordering::SeqCst);
                    }
                });
            }
        });
        let mut first_error = None;
        for r in results.into_inner().expect("results lock").into_iter().flatten() {
            match r {
                Ok(f) => ledger.insert(f, false)?,
                Err(e) => first_error = first_error.or(Some(e)),
            }
        }
        if let Some(path) = &options.checkpoint {
            ledger.save(path)?;
        }
        if let Some(source) = first_error {
            return Err(BroadcastError::Backend {
                completed: ledger.len(),
                source,
            });
        }
    }
    Ok(ledger)
}
