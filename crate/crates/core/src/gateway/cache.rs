//! Content-addressed on-disk cache in front of any backend.
//!
//! One file per key. Each file starts with the SHA-256 of its payload so a
//! torn or edited entry is detected, reported once as `CacheCorrupt`, and
//! removed so the next call recomputes it.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use ndarray::Array2;

use super::{ChatBackend, ChatRequest, Decoding, EmbeddingMatrix, EncoderBackend, GatewayError};
use crate::hashing::{content_key, sha256_hex};
use crate::jsonl::write_atomic;

#[derive(Debug)]
pub struct Cached<B> {
    inner: B,
    dir: PathBuf,
    hits: AtomicUsize,
}

pub type CachedChat<B> = Cached<B>;
pub type CachedEncoder<B> = Cached<B>;

pub fn with_cache<B>(backend: B, cache_dir: &Path) -> io::Result<Cached<B>> {
    fs::create_dir_all(cache_dir)?;
    Ok(Cached {
        inner: backend,
        dir: cache_dir.to_path_buf(),
        hits: AtomicUsize::new(0),
    })
}

impl<B> Cached<B> {
    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn entry_count(&self) -> io::Result<usize> {
        Ok(fs::read_dir(&self.dir)?
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "entry"))
            .count())
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.entry"))
    }

    fn read(&self, key: &str) -> Result<Option<Vec<u8>>, GatewayError> {
        let path = self.entry_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let valid = bytes
            .iter()
            .position(|&b| b == b'\n')
            .and_then(|nl| {
                let header = std::str::from_utf8(&bytes[..nl]).ok()?;
                let payload = &bytes[nl + 1..];
                (header.strip_prefix("sha256:")? == sha256_hex(payload)).then(|| payload.to_vec())
            });
        match valid {
            Some(payload) => {
                self.hits.fetch_add(1, Ordering::SeqCst);
                Ok(Some(payload))
            }
            None => {
                let _ = fs::remove_file(&path);
                Err(GatewayError::CacheCorrupt(key.to_string()))
            }
        }
    }

    fn write(&self, key: &str, payload: &[u8]) -> Result<(), GatewayError> {
        let mut bytes = format!("sha256:{}\n", sha256_hex(payload)).into_bytes();
        bytes.extend_from_slice(payload);
        write_atomic(&self.entry_path(key), &bytes)?;
        Ok(())
    }
}

impl<B: ChatBackend> ChatBackend for Cached<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn max_prompt_length(&self) -> usize {
        self.inner.max_prompt_length()
    }

    fn decoding(&self) -> Decoding {
        self.inner.decoding()
    }

    fn generate(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let hints = serde_json::to_vec(&request.hints).expect("hints serialize");
        let key = content_key(&[b"chat", self.inner.name().as_bytes(), &request.seed.to_le_bytes(), request.prompt.as_bytes(), &hints]);
        if let Some(payload) = self.read(&key)? {
            if let Ok(s) = String::from_utf8(payload) {
                return Ok(s);
            }
        }
        let out = self.inner.generate(request)?;
        self.write(&key, out.as_bytes())?;
        Ok(out)
    }
}

fn encode_matrix(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + m.values.len() * 8);
    for x in [m.valid_rows, m.values.nrows(), m.values.ncols()] {
        out.extend_from_slice(&(x as u64).to_le_bytes());
    }
    for x in m.values.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn decode_matrix(bytes: &[u8]) -> Option<EmbeddingMatrix> {
    let word = |i: usize| -> Option<u64> { Some(u64::from_le_bytes(bytes.get(i * 8..i * 8 + 8)?.try_into().ok()?)) };
    let (valid, rows, cols) = (word(0)? as usize, word(1)? as usize, word(2)? as usize);
    let data = bytes.get(24..)?;
    if data.len() != rows * cols * 8 || valid > rows {
        return None;
    }
    let values: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Some(EmbeddingMatrix::tokens(Array2::from_shape_vec((rows, cols), values).ok()?, valid))
}

impl<B: EncoderBackend> EncoderBackend for Cached<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn max_len(&self) -> usize {
        self.inner.max_len()
    }

    fn encode(&self, text: &str) -> Result<EmbeddingMatrix, GatewayError> {
        let key = content_key(&[b"encode", self.inner.name().as_bytes(), text.as_bytes()]);
        if let Some(m) = self.read(&key)?.as_deref().and_then(decode_matrix) {
            return Ok(m);
        }
        let m = self.inner.encode(text)?;
        self.write(&key, &encode_matrix(&m))?;
        Ok(m)
    }
}

macro_rules! forward_chat {
    ($($ty:ty),*) => {$(
        impl<T: ChatBackend + ?Sized> ChatBackend for $ty {
            fn name(&self) -> &str { (**self).name() }
            fn max_prompt_length(&self) -> usize { (**self).max_prompt_length() }
            fn decoding(&self) -> Decoding { (**self).decoding() }
            fn generate(&self, request: &ChatRequest) -> Result<String, GatewayError> { (**self).generate(request) }
        }
        impl<T: EncoderBackend + ?Sized> EncoderBackend for $ty {
            fn name(&self) -> &str { (**self).name() }
            fn dim(&self) -> usize { (**self).dim() }
            fn max_len(&self) -> usize { (**self).max_len() }
            fn encode(&self, text: &str) -> Result<EmbeddingMatrix, GatewayError> { (**self).encode(text) }
        }
    )*};
}

forward_chat!(Box<T>, Arc<T>, &T);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{chat_generate, encode_text, ChatHints, MockChat, MockChatConfig, MockEncoder};

    #[test]
    fn second_call_is_a_hit() {
        let dir = tempfile::tempdir().unwrap();
        let cached = with_cache(MockChat::new(MockChatConfig::default()), dir.path()).unwrap();
        let a = chat_generate(&cached, "same prompt", 1, ChatHints::default()).unwrap();
        let b = chat_generate(&cached, "same prompt", 1, ChatHints::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(cached.inner().calls(), 1);
        assert_eq!(cached.hits(), 1);
    }

    #[test]
    fn distinct_prompts_get_distinct_entries() {
        let dir = tempfile::tempdir().unwrap();
        let cached = with_cache(MockChat::new(MockChatConfig::default()), dir.path()).unwrap();
        for i in 0..100 {
            chat_generate(&cached, &format!("prompt number {i}"), 0, ChatHints::default()).unwrap();
        }
        assert_eq!(cached.entry_count().unwrap(), 100);
    }

    #[test]
    fn corrupt_entry_reported_then_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let cached = with_cache(MockChat::new(MockChatConfig::default()), dir.path()).unwrap();
        let original = chat_generate(&cached, "p q r", 3, ChatHints::default()).unwrap();
        let entry = fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
        let mut bytes = fs::read(&entry).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x55;
        fs::write(&entry, bytes).unwrap();

        assert!(matches!(
            chat_generate(&cached, "p q r", 3, ChatHints::default()),
            Err(GatewayError::CacheCorrupt(_))
        ));
        let again = chat_generate(&cached, "p q r", 3, ChatHints::default()).unwrap();
        assert_eq!(again, original);
        assert_eq!(cached.inner().calls(), 2);
        assert_eq!(chat_generate(&cached, "p q r", 3, ChatHints::default()).unwrap(), original);
        assert_eq!(cached.inner().calls(), 2);
    }

    #[test]
    fn encoder_cache_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cached = with_cache(MockEncoder::new(12, 5, 9), dir.path()).unwrap();
        let a = encode_text(&cached, "some words here").unwrap();
        let b = encode_text(&cached, "some words here").unwrap();
        assert_eq!(cached.inner().calls(), 1);
        assert_eq!(a, b);
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
