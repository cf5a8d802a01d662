//! Content addressing and seed derivation.

use sha2::{Digest, Sha256};

/// Length-prefixed SHA-256 over `parts`, hex encoded.
pub fn content_key(parts: &[&[u8]]) -> String {
    hex::encode(digest(parts))
}

/// First eight bytes of the length-prefixed digest of `parts`.
pub fn derive_seed(parts: &[&[u8]]) -> u64 {
    let d = digest(parts);
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
