use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::classifier::{Ablation, ModelShape, TrainConfig};
use crate::emotion::NUM_EMOTIONS;
use crate::graph::ViewTrainConfig;
use crate::hashing::{derive_seed, sha256_hex};

/// Every knob of a run. Precedence, lowest first: built-in defaults, the
/// TOML file, command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub posts: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub follows: Option<PathBuf>,
    /// Fixed split assignment; when absent the corpus is split by
    /// `split_ratios` under the `split` seed.
    pub splits: Option<PathBuf>,
    pub augmented: Option<PathBuf>,
    /// Generate the synthetic planted-signal corpus instead of reading files.
    pub planted: bool,
    pub planted_users: usize,
    pub planted_per_class: usize,
    pub split_ratios: [f64; 3],

    /// `mock` or `http`.
    pub backend: String,
    pub chat_endpoint: String,
    pub chat_model: String,
    pub encoder_endpoint: String,
    pub encoder_model: String,
    pub api_key_env: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub mock_fidelity: f64,
    pub max_inflight: usize,

    pub d1: usize,
    pub seq_len: usize,
    pub d2: usize,
    pub self_heads: usize,
    pub role_heads: usize,
    pub fusion_heads: usize,

    pub k: usize,
    pub sweep_k: Vec<usize>,
    pub rounds: usize,
    pub sweep_rounds: Vec<usize>,
    pub negatives: usize,
    pub view_epochs: usize,
    pub view_lr: f64,

    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
    pub patience: usize,
    pub freeze_upstream: bool,
    pub ablation: Ablation,

    /// Master seed; every named seed below defaults to a digest of it.
    pub seed: u64,
    pub corpus_seed: Option<u64>,
    pub split_seed: Option<u64>,
    pub sampling_seed: Option<u64>,
    pub encoder_seed: Option<u64>,
    pub negative_seed: Option<u64>,
    pub init_seed: Option<u64>,
    pub shuffle_seed: Option<u64>,

    pub out: PathBuf,
    pub resume: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            posts: None,
            users: None,
            follows: None,
            splits: None,
            augmented: None,
            planted: false,
            planted_users: 30,
            planted_per_class: 40,
            split_ratios: [0.8, 0.1, 0.1],
            backend: "mock".into(),
            chat_endpoint: "http://localhost:8000/v1/chat/completions".into(),
            chat_model: "chatglm3-6b".into(),
            encoder_endpoint: "http://localhost:8001/encode".into(),
            encoder_model: "chatglm3-6b".into(),
            api_key_env: None,
            cache_dir: None,
            mock_fidelity: 0.9,
            max_inflight: 4,
            d1: 64,
            seq_len: 16,
            d2: 32,
            self_heads: 4,
            role_heads: 4,
            fusion_heads: 4,
            k: 100,
            sweep_k: Vec::new(),
            rounds: 1,
            sweep_rounds: Vec::new(),
            negatives: 1,
            view_epochs: 10,
            view_lr: 2e-6,
            lr: 2e-6,
            batch_size: 8,
            epochs: 30,
            l2: 1e-5,
            patience: 5,
            freeze_upstream: false,
            ablation: Ablation::Full,
            seed: 0,
            corpus_seed: None,
            split_seed: None,
            sampling_seed: None,
            encoder_seed: None,
            negative_seed: None,
            init_seed: None,
            shuffle_seed: None,
            out: PathBuf::from("runs/default"),
            resume: false,
        }
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub backend: Option<String>,
    pub k: Option<usize>,
    pub rounds: Option<usize>,
    pub resume: bool,
    pub freeze_upstream: bool,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), PipelineError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(b) = &o.backend {
            self.backend = b.clone();
        }
        if let Some(k) = o.k {
            self.k = k;
        }
        if let Some(r) = o.rounds {
            self.rounds = r;
        }
        self.resume |= o.resume;
        self.freeze_upstream |= o.freeze_upstream;
        self.validate()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Usage(m));
        if !matches!(self.backend.as_str(), "mock" | "http") {
            return bad(format!("unknown backend {:?}", self.backend));
        }
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        for (name, heads, dim) in [("self_heads", self.self_heads, self.d1), ("role_heads", self.role_heads, self.d1), ("fusion_heads", self.fusion_heads, self.d1)] {
            if heads == 0 || dim % heads != 0 {
                return bad(format!("{name}={heads} must divide d1={dim}"));
            }
        }
        if self.d1 == 0 || self.d2 == 0 || self.seq_len < 2 {
            return bad("d1, d2 must be positive and seq_len at least 2".into());
        }
        if !self.planted && (self.posts.is_none() || self.users.is_none()) {
            return bad("either planted = true or both posts and users paths are required".into());
        }
        Ok(())
    }

    /// Digest of the canonical serialization, ignoring where output goes
    /// and whether the run resumes.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.resume = false;
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }

    pub fn named_seed(&self, name: &str) -> u64 {
        let explicit = match name {
            "corpus" => self.corpus_seed,
            "split" => self.split_seed,
            "sampling" => self.sampling_seed,
            "encoder" => self.encoder_seed,
            "negatives" => self.negative_seed,
            "init" => self.init_seed,
            "shuffle" => self.shuffle_seed,
            _ => None,
        };
        explicit.unwrap_or_else(|| derive_seed(&[&self.seed.to_le_bytes(), name.as_bytes()]))
    }

    pub fn model_shape(&self) -> ModelShape {
        ModelShape {
            n: self.seq_len,
            d1: self.d1,
            d2: self.d2,
            classes: NUM_EMOTIONS,
            self_heads: self.self_heads,
            role_heads: self.role_heads,
            fusion_heads: self.fusion_heads,
        }
    }

    pub fn view_config(&self, rounds: usize) -> ViewTrainConfig {
        ViewTrainConfig {
            negatives_per_positive: self.negatives,
            epochs: self.view_epochs,
            rounds,
            lr: self.view_lr,
            seed: self.named_seed("negatives"),
        }
    }

    pub fn train_config(&self, checkpoint_dir: Option<PathBuf>) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            l2: self.l2,
            patience: self.patience,
            seed: self.named_seed("shuffle"),
            freeze_upstream: self.freeze_upstream,
            checkpoint_dir,
            resume: self.resume,
            config_hash: self.hash(),
        }
    }
}
