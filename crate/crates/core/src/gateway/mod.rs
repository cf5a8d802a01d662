//! Uniform access to chat (generation) and encoder backends.
//!
//! Backends are trait objects so the pipeline can swap the deterministic
//! mocks for remote providers. Both traits require `Send + Sync`; every call
//! is independent, so concurrent use is safe.

mod cache;
mod mock;
mod remote;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::emotion::Emotion;
use crate::tokenize;

pub use cache::{with_cache, CachedChat, CachedEncoder};
pub use mock::{MockChat, MockChatConfig, MockEncoder, MockRule};
pub use remote::{HttpChat, HttpChatConfig, HttpEncoder, HttpEncoderConfig, RetryPolicy};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("backend {backend} unavailable: {reason}")]
    BackendUnavailable { backend: String, reason: String },
    #[error("prompt has {tokens} tokens, limit is {limit}")]
    PromptTooLong { tokens: usize, limit: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("cache entry {0} is corrupt")]
    CacheCorrupt(String),
    #[error("matrix has only padding rows")]
    AllPadding,
    #[error("cache io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_new_tokens: usize,
}

impl Default for Decoding {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_new_tokens: 256,
        }
    }
}

/// Side information that only offline backends may use. Remote providers
/// see the prompt alone.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatHints {
    /// Stable digest of the reader's attributes.
    pub reader_key: Option<String>,
    pub post_label: Option<Emotion>,
    pub post_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt: String,
    pub seed: u64,
    pub hints: ChatHints,
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    /// Limit in tokens as counted by [`prompt_tokens`].
    fn max_prompt_length(&self) -> usize;
    fn decoding(&self) -> Decoding;
    fn generate(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

/// Token count used for prompt-length checks.
pub fn prompt_tokens(prompt: &str) -> usize {
    tokenize::tokens(prompt).len()
}

pub fn chat_generate(backend: &dyn ChatBackend, prompt: &str, seed: u64, hints: ChatHints) -> Result<String, GatewayError> {
    let tokens = prompt_tokens(prompt);
    if tokens == 0 {
        return Err(GatewayError::EmptyInput);
    }
    if tokens > backend.max_prompt_length() {
        return Err(GatewayError::PromptTooLong {
            tokens,
            limit: backend.max_prompt_length(),
        });
    }
    let request = ChatRequest {
        prompt: prompt.to_string(),
        seed,
        hints,
    };
    let out = backend.generate(&request)?;
    if out.trim().is_empty() {
        return Err(GatewayError::BackendUnavailable {
            backend: backend.name().to_string(),
            reason: "empty completion".into(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisLabel {
    Tokens,
    Features,
    Views,
    Roles,
    Users,
}

/// Dense matrix with declared row/column semantics. Rows at index
/// `valid_rows` and beyond are padding and are exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub values: Array2<f64>,
    pub axes: (AxisLabel, AxisLabel),
    pub valid_rows: usize,
}

impl EmbeddingMatrix {
    pub fn new(values: Array2<f64>, axes: (AxisLabel, AxisLabel)) -> Self {
        let valid_rows = values.nrows();
        Self { values, axes, valid_rows }
    }

    pub fn tokens(values: Array2<f64>, valid_rows: usize) -> Self {
        assert!(valid_rows <= values.nrows());
        Self {
            values,
            axes: (AxisLabel::Tokens, AxisLabel::Features),
            valid_rows,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;
    /// Feature dimension.
    fn dim(&self) -> usize;
    /// Unified maximum sequence length; every matrix has exactly this many rows.
    fn max_len(&self) -> usize;
    /// Row 0 of the result is the `<CLS>` row.
    fn encode(&self, text: &str) -> Result<EmbeddingMatrix, GatewayError>;
}

pub fn encode_text(backend: &dyn EncoderBackend, text: &str) -> Result<EmbeddingMatrix, GatewayError> {
    if tokenize::tokens(text).is_empty() {
        return Err(GatewayError::EmptyInput);
    }
    let m = backend.encode(text)?;
    debug_assert_eq!(m.shape(), (backend.max_len(), backend.dim()));
    Ok(m)
}

/// Mean over the non-padding token rows.
pub fn pool_mean(m: &EmbeddingMatrix) -> Result<Array1<f64>, GatewayError> {
    if m.valid_rows == 0 {
        return Err(GatewayError::AllPadding);
    }
    let real = m.values.slice(ndarray::s![..m.valid_rows, ..]);
    Ok(real.sum_axis(Axis(0)) / m.valid_rows as f64)
}

/// Pads with zero rows or truncates to exactly `n` rows.
pub fn fit_rows(rows: Array2<f64>, n: usize) -> EmbeddingMatrix {
    let keep = rows.nrows().min(n);
    let mut values = Array2::zeros((n, rows.ncols()));
    values.slice_mut(ndarray::s![..keep, ..]).assign(&rows.slice(ndarray::s![..keep, ..]));
    EmbeddingMatrix::tokens(values, keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pool_mean_of_two_rows() {
        let m = EmbeddingMatrix::tokens(array![[1.0, 3.0], [3.0, 5.0]], 2);
        assert_eq!(pool_mean(&m).unwrap().to_vec(), vec![2.0, 4.0]);
    }

    #[test]
    fn pool_mean_single_row() {
        let m = EmbeddingMatrix::tokens(array![[0.5, -2.0]], 1);
        assert_eq!(pool_mean(&m).unwrap().to_vec(), vec![0.5, -2.0]);
    }

    #[test]
    fn pool_mean_excludes_padding() {
        let m = EmbeddingMatrix::tokens(array![[1.0, 2.0, 7.0], [5.0, -4.0, 1.0], [0.0, 0.0, 0.0]], 2);
        let mut brute = [0.0; 3];
        for r in 0..2 {
            for c in 0..3 {
                brute[c] += m.values[[r, c]];
            }
        }
        let expected: Vec<f64> = brute.iter().map(|x| x / 2.0).collect();
        assert_eq!(pool_mean(&m).unwrap().to_vec(), expected);
    }

    #[test]
    fn pool_mean_all_padding_errors() {
        let m = EmbeddingMatrix::tokens(Array2::zeros((3, 2)), 0);
        assert!(matches!(pool_mean(&m), Err(GatewayError::AllPadding)));
    }

    #[test]
    fn fit_rows_pads_and_truncates() {
        let m = fit_rows(array![[1.0], [2.0]], 4);
        assert_eq!(m.values, array![[1.0], [2.0], [0.0], [0.0]]);
        assert_eq!(m.valid_rows, 2);
        let t = fit_rows(array![[1.0], [2.0], [3.0]], 2);
        assert_eq!(t.values, array![[1.0], [2.0]]);
        assert_eq!(t.valid_rows, 2);
    }
}
