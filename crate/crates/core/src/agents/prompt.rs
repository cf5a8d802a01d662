use rand::seq::index::sample;

use crate::corpus::{Corpus, UserProfile};
use crate::hashing::derive_seed;
use crate::tape::seeded_rng;

pub const HISTORY_SEPARATOR: &str = "[sep]";
pub const HISTORY_SAMPLE: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentPrompt {
    pub reader_id: String,
    pub post_id: String,
    pub rendered: String,
}

pub(crate) fn slot(value: &str) -> &str {
    if value.trim().is_empty() {
        "unknown"
    } else {
        value
    }
}

pub fn build_agent_prompt(reader: &UserProfile, history_texts: &[String], post_id: &str, post_text: &str) -> AgentPrompt {
    let history = if history_texts.is_empty() {
        "none".to_string()
    } else {
        history_texts.join(HISTORY_SEPARATOR)
    };
    let rendered = format!(
        "You are a social media user. Your gender is {}, your region is {}, and your tag is {}.\n\
         Your historical posts are: {}\n\
         You see the following post: {}\n\
         Decide how you react to it. Answer with exactly these lines:\n\
         Behavior: <repost | repost with comment | no repost>\n\
         Emotion: <Happy | Anger | Sad | Disgust | Fear | Surprise | Neutral>\n\
         Comment: <your comment, only when reposting with a comment>",
        slot(&reader.gender),
        slot(&reader.region),
        slot(&reader.tag),
        history,
        post_text.trim(),
    );
    AgentPrompt {
        reader_id: reader.user_id.clone(),
        post_id: post_id.to_string(),
        rendered,
    }
}

/// Texts of the reader's history posts that are not held out for
/// validation or test, in history order.
pub fn visible_history(corpus: &Corpus, reader: &UserProfile) -> Vec<String> {
    reader
        .history
        .iter()
        .filter(|id| corpus.is_training_visible(id))
        .filter_map(|id| corpus.posts.get(id))
        .map(|p| p.text.clone())
        .collect()
}

/// Up to `max` visible history texts, chosen by a seed derived from the
/// reader id and kept in history order.
pub fn sample_history(corpus: &Corpus, reader: &UserProfile, max: usize, seed: u64) -> Vec<String> {
    let all = visible_history(corpus, reader);
    if all.len() <= max {
        return all;
    }
    let mut rng = seeded_rng(derive_seed(&[b"history", &seed.to_le_bytes(), reader.user_id.as_bytes()]));
    let mut picked = sample(&mut rng, all.len(), max).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i].clone()).collect()
}
