//! Reader-feedback simulation, role-aware user embeddings over a
//! multi-behavior interaction graph, and gated-attention emotion
//! classification.

pub mod agents;
pub mod classifier;
pub mod corpus;
pub mod emotion;
pub mod encoding;
pub mod gateway;
pub mod graph;
pub mod hashing;
pub mod jsonl;
pub mod matrix_io;
pub mod nn;
pub mod pipeline;
pub mod tape;
pub mod tokenize;

pub use corpus::{Corpus, Post, UserProfile};
pub use emotion::{Emotion, Split, NUM_EMOTIONS};
