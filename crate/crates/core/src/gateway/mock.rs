//! Deterministic offline backends.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{fit_rows, ChatBackend, ChatRequest, Decoding, EmbeddingMatrix, EncoderBackend, GatewayError};
use crate::agents::Behavior;
use crate::emotion::Emotion;
use crate::hashing::derive_seed;
use crate::tokenize;

/// One row of the mock's rule table. A rule matches when every present
/// condition holds; the first matching rule fixes the fields it sets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub label: Option<Emotion>,
    #[serde(default)]
    pub keyword: Option<String>,
    #[serde(default)]
    pub behavior: Option<Behavior>,
    #[serde(default)]
    pub emotion: Option<Emotion>,
}

impl MockRule {
    fn matches(&self, label: Option<Emotion>, post_text: &str) -> bool {
        self.label.is_none_or(|l| Some(l) == label)
            && self.keyword.as_deref().is_none_or(|k| post_text.to_lowercase().contains(&k.to_lowercase()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockChatConfig {
    pub name: String,
    pub max_prompt_length: usize,
    pub decoding: Decoding,
    pub rules: Vec<MockRule>,
    /// Probability that the emitted emotion equals the post's gold label.
    pub label_fidelity: f64,
    /// Base weights for (repost, repost with comment, no repost).
    pub behavior_weights: [f64; 3],
}

impl Default for MockChatConfig {
    fn default() -> Self {
        Self {
            name: "mock-chat".into(),
            max_prompt_length: 4096,
            decoding: Decoding::default(),
            rules: Vec::new(),
            label_fidelity: 0.9,
            behavior_weights: [0.3, 0.35, 0.35],
        }
    }
}

/// Rule-table chat backend. Output is a pure function of the request.
#[derive(Debug)]
pub struct MockChat {
    config: MockChatConfig,
    calls: AtomicUsize,
}

fn comment_phrase(e: Emotion) -> &'static str {
    match e {
        Emotion::Happy => "this really made my day",
        Emotion::Anger => "this is outrageous and unacceptable",
        Emotion::Sad => "this is heartbreaking to read",
        Emotion::Disgust => "this is revolting honestly",
        Emotion::Fear => "this is frightening to think about",
        Emotion::Surprise => "wow I did not expect this",
        Emotion::Neutral => "noted, sharing for reference",
    }
}

fn behavior_text(b: Behavior) -> &'static str {
    match b {
        Behavior::Repost => "repost",
        Behavior::RepostWithComment => "repost with comment",
        Behavior::NoRepost => "no repost",
    }
}

impl MockChat {
    pub fn new(config: MockChatConfig) -> Self {
        Self {
            config,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &MockChatConfig {
        &self.config
    }

    /// Number of `generate` invocations so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn sample_behavior(&self, rng: &mut ChaCha8Rng, reader_key: &str) -> Behavior {
        let mut w = self.config.behavior_weights;
        for (i, wi) in w.iter_mut().enumerate() {
            let pref = derive_seed(&[reader_key.as_bytes(), &[i as u8]]) as f64 / u64::MAX as f64;
            *wi *= 0.5 + pref;
        }
        let total: f64 = w.iter().sum();
        let mut x = rng.random::<f64>() * total;
        for (i, wi) in w.iter().enumerate() {
            if x < *wi {
                return [Behavior::Repost, Behavior::RepostWithComment, Behavior::NoRepost][i];
            }
            x -= wi;
        }
        Behavior::NoRepost
    }

    fn sample_emotion(&self, rng: &mut ChaCha8Rng, label: Option<Emotion>) -> Emotion {
        let draw: f64 = rng.random();
        match label {
            Some(l) if draw < self.config.label_fidelity => l,
            Some(l) => {
                let others: Vec<Emotion> = Emotion::ALL.into_iter().filter(|e| *e != l).collect();
                others[rng.random_range(0..others.len())]
            }
            None => Emotion::ALL[rng.random_range(0..Emotion::ALL.len())],
        }
    }
}

impl ChatBackend for MockChat {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn max_prompt_length(&self) -> usize {
        self.config.max_prompt_length
    }

    fn decoding(&self) -> Decoding {
        self.config.decoding
    }

    fn generate(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let hints = &request.hints;
        let reader_key = hints.reader_key.clone().unwrap_or_default();
        let post_text = hints.post_text.clone().unwrap_or_default();
        let seed = derive_seed(&[
            self.config.name.as_bytes(),
            &request.seed.to_le_bytes(),
            request.prompt.as_bytes(),
            reader_key.as_bytes(),
            hints.post_label.map(|e| e.name()).unwrap_or("").as_bytes(),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let rule = self.config.rules.iter().find(|r| r.matches(hints.post_label, &post_text));
        let behavior = match rule.and_then(|r| r.behavior) {
            Some(b) => b,
            None => self.sample_behavior(&mut rng, &reader_key),
        };
        let emotion = match rule.and_then(|r| r.emotion) {
            Some(e) => e,
            None => self.sample_emotion(&mut rng, hints.post_label),
        };

        let mut out = format!("Behavior: {}\nEmotion: {}", behavior_text(behavior), emotion.name());
        if behavior == Behavior::RepostWithComment {
            let snippet: Vec<String> = tokenize::tokens(&post_text).into_iter().take(4).collect();
            out.push_str(&format!("\nComment: {} {}", comment_phrase(emotion), snippet.join(" ")).trim_end().to_string());
        }
        Ok(out)
    }
}

/// Hash-seeded projection encoder: each token maps to a fixed Gaussian
/// vector, row 0 is the `<CLS>` vector, rows past the text are zero.
#[derive(Debug)]
pub struct MockEncoder {
    name: String,
    dim: usize,
    max_len: usize,
    seed: u64,
    calls: AtomicUsize,
}

pub const CLS_TOKEN: &str = "<CLS>";

impl MockEncoder {
    pub fn new(dim: usize, max_len: usize, seed: u64) -> Self {
        assert!(dim > 0 && max_len > 0, "encoder dimensions must be positive");
        Self {
            name: format!("mock-encoder-{dim}x{max_len}"),
            dim,
            max_len,
            seed,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn token_vector(&self, token: &str, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[&self.seed.to_le_bytes(), token.as_bytes()]));
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
    }
}

impl EncoderBackend for MockEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn encode(&self, text: &str) -> Result<EmbeddingMatrix, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut tokens = vec![CLS_TOKEN.to_string()];
        tokens.extend(tokenize::tokens(text).into_iter().take(self.max_len - 1));
        let mut rows = Array2::zeros((tokens.len(), self.dim));
        for (i, t) in tokens.iter().enumerate() {
            self.token_vector(t, rows.row_mut(i).as_slice_mut().expect("contiguous row"));
        }
        Ok(fit_rows(rows, self.max_len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{chat_generate, encode_text, ChatHints};

    #[test]
    fn same_prompt_same_seed_same_output() {
        let chat = MockChat::new(MockChatConfig::default());
        let a = chat_generate(&chat, "hello there", 42, ChatHints::default()).unwrap();
        let b = chat_generate(&chat, "hello there", 42, ChatHints::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(chat.calls(), 2);
    }

    #[test]
    fn prompt_too_long_rejected() {
        let chat = MockChat::new(MockChatConfig {
            max_prompt_length: 3,
            ..Default::default()
        });
        assert!(matches!(
            chat_generate(&chat, "one two three four", 1, ChatHints::default()),
            Err(GatewayError::PromptTooLong { tokens: 4, limit: 3 })
        ));
        assert_eq!(chat.calls(), 0);
    }

    #[test]
    fn planted_rule_fixes_behavior_line() {
        let chat = MockChat::new(MockChatConfig {
            rules: vec![MockRule {
                label: Some(Emotion::Anger),
                behavior: Some(Behavior::RepostWithComment),
                ..Default::default()
            }],
            ..Default::default()
        });
        for seed in 0..20 {
            let hints = ChatHints {
                post_label: Some(Emotion::Anger),
                post_text: Some("the bus never came".into()),
                ..Default::default()
            };
            let out = chat_generate(&chat, "prompt text", seed, hints).unwrap();
            assert_eq!(out.lines().next().unwrap(), "Behavior: repost with comment");
            assert!(out.lines().any(|l| l.starts_with("Comment: ")));
        }
    }

    #[test]
    fn fidelity_one_always_copies_label() {
        let chat = MockChat::new(MockChatConfig {
            label_fidelity: 1.0,
            ..Default::default()
        });
        for seed in 0..20 {
            let hints = ChatHints {
                post_label: Some(Emotion::Fear),
                ..Default::default()
            };
            let out = chat_generate(&chat, "p", seed, hints).unwrap();
            assert!(out.contains("Emotion: Fear"));
        }
    }

    #[test]
    fn encoder_shape_and_padding() {
        let enc = MockEncoder::new(8, 6, 0);
        let m = encode_text(&enc, "a b c").unwrap();
        assert_eq!(m.shape(), (6, 8));
        assert_eq!(m.valid_rows, 4);
        for r in 4..6 {
            assert!(m.values.row(r).iter().all(|&x| x == 0.0));
        }
        let long = encode_text(&enc, "1 2 3 4 5 6 7 8 9").unwrap();
        assert_eq!(long.valid_rows, 6);
    }

    #[test]
    fn encoder_is_deterministic_and_sensitive() {
        let enc = MockEncoder::new(16, 8, 5);
        let a = encode_text(&enc, "the cat sat").unwrap();
        assert_eq!(a, encode_text(&enc, "the cat sat").unwrap());
        assert_ne!(a, encode_text(&enc, "the bat sat").unwrap());
        assert_eq!(a.values.row(0), encode_text(&enc, "different").unwrap().values.row(0));
    }

    #[test]
    fn empty_text_rejected() {
        let enc = MockEncoder::new(4, 4, 0);
        assert!(matches!(encode_text(&enc, "   "), Err(GatewayError::EmptyInput)));
    }
}
