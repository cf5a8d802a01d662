//! Role-aware initial user embeddings: comment-set compression, author
//! attributes, their fusion, and propagation-role attachment.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::FeedbackLedger;
use crate::corpus::UserProfile;
use crate::gateway::{chat_generate, encode_text, pool_mean, ChatBackend, ChatHints, EmbeddingMatrix, EncoderBackend, GatewayError};
use crate::nn::{affine, Mha};
use crate::tape::{ParamId, ParamStore, Tape, Var};

#[derive(Debug, thiserror::Error)]
pub enum EncodingError {
    #[error("comment set is empty")]
    EmptySet,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    EmotionalPerson,
    Gatekeeper,
    Onlooker,
    Rationalist,
}

impl Role {
    /// Row order of the role matrix.
    pub const ALL: [Role; 4] = [Role::EmotionalPerson, Role::Gatekeeper, Role::Onlooker, Role::Rationalist];

    pub fn name(self) -> &'static str {
        match self {
            Role::EmotionalPerson => "Emotional person",
            Role::Gatekeeper => "Gatekeeper",
            Role::Onlooker => "Onlooker",
            Role::Rationalist => "Rationalist",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleProfile {
    pub role: Role,
    pub description: String,
    pub example: String,
    pub enriched: String,
    pub embedding: Option<Array1<f64>>,
}

macro_rules! role_asset {
    ($role:expr, $slug:literal) => {
        RoleProfile {
            role: $role,
            description: include_str!(concat!("../assets/roles/", $slug, ".description.txt")).trim().to_string(),
            example: include_str!(concat!("../assets/roles/", $slug, ".example.txt")).trim().to_string(),
            enriched: include_str!(concat!("../assets/roles/", $slug, ".enriched.txt")).trim().to_string(),
            embedding: None,
        }
    };
}

/// The four roles with their shipped descriptions and enriched texts.
pub fn shipped_roles() -> [RoleProfile; 4] {
    [
        role_asset!(Role::EmotionalPerson, "emotional_person"),
        role_asset!(Role::Gatekeeper, "gatekeeper"),
        role_asset!(Role::Onlooker, "onlooker"),
        role_asset!(Role::Rationalist, "rationalist"),
    ]
}

pub fn enrichment_prompt(role: &RoleProfile) -> String {
    format!(
        "The description of the propagation role is [{}], with an example [{}]. Explain the role [{}] based on the above description and example.",
        role.description,
        role.example,
        role.role.name()
    )
}

pub fn rewriting_prompt(enriched: &str) -> String {
    format!("Please repeat the following content: [{enriched}]")
}

/// Encodes each role's enriched explanation into one row of a `4 x d1`
/// matrix. With `chat` set, the explanation is regenerated from the
/// description and example first; otherwise the shipped text is used.
pub fn build_role_matrix(
    roles: &mut [RoleProfile; 4],
    chat: Option<&dyn ChatBackend>,
    encoder: &dyn EncoderBackend,
    seed: u64,
) -> Result<Array2<f64>, EncodingError> {
    let mut m = Array2::zeros((4, encoder.dim()));
    for (i, role) in roles.iter_mut().enumerate() {
        if let Some(chat) = chat {
            role.enriched = chat_generate(chat, &enrichment_prompt(role), seed, ChatHints::default())?;
        }
        let e = pool_mean(&encode_text(encoder, &rewriting_prompt(&role.enriched))?)?;
        m.row_mut(i).assign(&e);
        role.embedding = Some(e);
    }
    Ok(m)
}

fn slot(v: &str) -> &str {
    if v.trim().is_empty() {
        "unknown"
    } else {
        v
    }
}

pub fn attribute_prompt(profile: &UserProfile) -> String {
    format!(
        "User individual information=[gender:{}, region:{}, tag:{}]",
        slot(&profile.gender),
        slot(&profile.region),
        slot(&profile.tag)
    )
}

pub fn encode_author_attributes(profile: &UserProfile, encoder: &dyn EncoderBackend) -> Result<Array1<f64>, EncodingError> {
    Ok(pool_mean(&encode_text(encoder, &attribute_prompt(profile))?)?)
}

/// Encoded feedback texts of each reader, at most `cap` per reader, in
/// ledger order.
pub fn encode_reader_comments(
    ledger: &FeedbackLedger,
    encoder: &dyn EncoderBackend,
    cap: usize,
) -> Result<BTreeMap<String, Vec<EmbeddingMatrix>>, EncodingError> {
    let mut out: BTreeMap<String, Vec<EmbeddingMatrix>> = BTreeMap::new();
    for f in ledger.entries() {
        let Some(text) = f.content_text() else { continue };
        let slot = out.entry(f.reader_id.clone()).or_default();
        if slot.len() < cap {
            slot.push(encode_text(encoder, &text)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserEncoder {
    pub layer1: Mha,
    pub layer2: Mha,
    pub w1: ParamId,
    pub b1: ParamId,
    pub roles: Mha,
    pub w2: ParamId,
    pub b2: ParamId,
    pub d1: usize,
}

impl UserEncoder {
    pub fn new(store: &mut ParamStore, d1: usize, self_heads: usize, role_heads: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            layer1: Mha::new(store, "comments.layer1", d1, self_heads, rng),
            layer2: Mha::new(store, "comments.layer2", d1, self_heads, rng),
            w1: store.add_random("fuse.w1", (d1, 2 * d1), 2 * d1, rng),
            b1: store.add_zeros("fuse.b1", (1, d1)),
            roles: Mha::new(store, "roles.matt", d1, role_heads, rng),
            w2: store.add_random("roles.w2", (d1, 2 * d1), 2 * d1, rng),
            b2: store.add_zeros("roles.b2", (1, d1)),
            d1,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for m in [self.layer1, self.layer2, self.roles] {
            ids.extend(m.ids());
        }
        ids.extend([self.w1, self.b1, self.w2, self.b2]);
        ids
    }

    /// Two-layer self-attention compression of `K` comment matrices. Layer
    /// one reads row 0 of each matrix; layer two stacks the `K` results and
    /// reads row 0 again. Returns a `1 x d1` row.
    pub fn encode_comment_set(&self, tape: &mut Tape, store: &ParamStore, comments: &[EmbeddingMatrix]) -> Result<Var, EncodingError> {
        if comments.is_empty() {
            return Err(EncodingError::EmptySet);
        }
        let mut rows = Vec::with_capacity(comments.len());
        for c in comments {
            if c.values.ncols() != self.d1 {
                return Err(EncodingError::DimensionMismatch(format!("comment width {} vs d1 {}", c.values.ncols(), self.d1)));
            }
            let m = tape.constant(c.values.clone());
            let cls = tape.slice_rows(m, 0, 1);
            rows.push(self.layer1.forward(tape, store, cls, m, m, Some(c.valid_rows.max(1))).out);
        }
        let stacked = if rows.len() == 1 { rows[0] } else { tape.concat_rows(&rows) };
        let first = tape.slice_rows(stacked, 0, 1);
        Ok(self.layer2.forward(tape, store, first, stacked, stacked, None).out)
    }

    /// `W1 (h_at ⊕ h_cr) + b1`.
    pub fn fuse_author_reader(&self, tape: &mut Tape, store: &ParamStore, h_at: Var, h_cr: Var) -> Var {
        let x = tape.concat_cols(&[h_at, h_cr]);
        affine(tape, store, x, self.w1, self.b1)
    }

    /// Role attention output `M_apr` for query `h_ap` over the role rows.
    pub fn role_attention(&self, tape: &mut Tape, store: &ParamStore, h_ap: Var, role_matrix: Var) -> Var {
        self.roles.forward(tape, store, h_ap, role_matrix, role_matrix, None).out
    }

    /// `W2 (h_ap ⊕ m_apr) + b2`.
    pub fn attach_roles(&self, tape: &mut Tape, store: &ParamStore, h_ap: Var, m_apr: Var) -> Var {
        let x = tape.concat_cols(&[h_ap, m_apr]);
        affine(tape, store, x, self.w2, self.b2)
    }
}

/// Switches that remove parts of the user encoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingAblation {
    /// Zero the role attention output before the final fusion.
    pub no_roles: bool,
}

/// Per-user inputs that stay constant during training.
#[derive(Debug, Clone)]
pub struct UserInputs {
    pub user_ids: Vec<String>,
    pub h_at: Array2<f64>,
    /// Comment matrices per user, aligned with `user_ids`; empty means no
    /// simulated comments.
    pub comments: Vec<Vec<EmbeddingMatrix>>,
    pub role_matrix: Array2<f64>,
}

impl UserInputs {
    pub fn d1(&self) -> usize {
        self.h_at.ncols()
    }
}

/// Builds `H_apr` for all users on the tape, one row per user.
pub fn user_embeddings(
    enc: &UserEncoder,
    tape: &mut Tape,
    store: &ParamStore,
    inputs: &UserInputs,
    ablation: EncodingAblation,
) -> Result<Var, EncodingError> {
    let d1 = inputs.d1();
    if d1 != enc.d1 || inputs.role_matrix.dim() != (4, d1) {
        return Err(EncodingError::DimensionMismatch(format!("inputs d1 {d1}, encoder d1 {}", enc.d1)));
    }
    let roles = tape.constant(inputs.role_matrix.clone());
    let zero = tape.constant(Array2::zeros((1, d1)));
    let mut rows = Vec::with_capacity(inputs.user_ids.len());
    for (i, comments) in inputs.comments.iter().enumerate() {
        let h_at = tape.constant(inputs.h_at.row(i).to_owned().insert_axis(Axis(0)));
        let h_cr = if comments.is_empty() { zero } else { enc.encode_comment_set(tape, store, comments)? };
        let h_ap = enc.fuse_author_reader(tape, store, h_at, h_cr);
        let m_apr = if ablation.no_roles { zero } else { enc.role_attention(tape, store, h_ap, roles) };
        rows.push(enc.attach_roles(tape, store, h_ap, m_apr));
    }
    Ok(tape.concat_rows(&rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEmbeddingBundle {
    pub user_id: String,
    pub h_at: Vec<f64>,
    pub h_cr: Vec<f64>,
    pub h_ap: Vec<f64>,
    pub h_apr: Vec<f64>,
}

/// Evaluates every stage of the encoding for each user.
pub fn embedding_bundles(enc: &UserEncoder, store: &ParamStore, inputs: &UserInputs) -> Result<Vec<UserEmbeddingBundle>, EncodingError> {
    let mut out = Vec::new();
    for (i, uid) in inputs.user_ids.iter().enumerate() {
        let mut tape = Tape::new();
        let d1 = inputs.d1();
        let h_at = tape.constant(inputs.h_at.row(i).to_owned().insert_axis(Axis(0)));
        let h_cr = if inputs.comments[i].is_empty() {
            tape.constant(Array2::zeros((1, d1)))
        } else {
            enc.encode_comment_set(&mut tape, store, &inputs.comments[i])?
        };
        let h_ap = enc.fuse_author_reader(&mut tape, store, h_at, h_cr);
        let roles = tape.constant(inputs.role_matrix.clone());
        let m_apr = enc.role_attention(&mut tape, store, h_ap, roles);
        let h_apr = enc.attach_roles(&mut tape, store, h_ap, m_apr);
        let row = |v: Var| tape.value(v).iter().copied().collect::<Vec<f64>>();
        out.push(UserEmbeddingBundle {
            user_id: uid.clone(),
            h_at: row(h_at),
            h_cr: row(h_cr),
            h_ap: row(h_ap),
            h_apr: row(h_apr),
        });
    }
    Ok(out)
}

/// Plain evaluation of `W (a ⊕ b) + bias` with shape checks.
pub fn affine_concat(w: &Array2<f64>, bias: &Array1<f64>, a: &Array1<f64>, b: &Array1<f64>) -> Result<Array1<f64>, EncodingError> {
    let d = a.len();
    if b.len() != d || w.dim() != (d, 2 * d) || bias.len() != d {
        return Err(EncodingError::DimensionMismatch(format!("W {:?}, bias {}, inputs {} and {}", w.dim(), bias.len(), a.len(), b.len())));
    }
    let x = ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("1-d concat");
    Ok(w.dot(&x) + bias)
}

pub fn fuse_author_reader(h_at: &Array1<f64>, h_cr: &Array1<f64>, w1: &Array2<f64>, b1: &Array1<f64>) -> Result<Array1<f64>, EncodingError> {
    affine_concat(w1, b1, h_at, h_cr)
}
