use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{evaluate, FusionHead, FusionSwitches, MetricsError, MetricsReport, Prediction};
use crate::encoding::{user_embeddings, EncodingAblation, EncodingError, UserEncoder, UserInputs};
use crate::graph::{train_or_pass, GraphError, OverlappingNetwork, ViewGraph, ViewId, ViewTrainConfig};
use crate::hashing::derive_seed;
use crate::matrix_io::{read_matrices, write_manifest, write_matrices, MatrixIoError, NamedMatrix};
use crate::tape::{seeded_rng, Adam, ParamId, ParamStore, SparseRows, Tape, Var};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Matrix(#[from] MatrixIoError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    /// Content rows (encoder sequence length).
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub classes: usize,
    pub self_heads: usize,
    pub role_heads: usize,
    pub fusion_heads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoReaderFeedback,
    NoRoleFusion,
    NoRoleInit,
    ContentAttributes,
    ContentOnly,
    NoRepostView,
    NoCommentView,
    NoFollowView,
}

pub const ABLATION_ROWS: [Ablation; 9] = [
    Ablation::Full,
    Ablation::NoReaderFeedback,
    Ablation::NoRoleFusion,
    Ablation::NoRoleInit,
    Ablation::ContentAttributes,
    Ablation::ContentOnly,
    Ablation::NoRepostView,
    Ablation::NoCommentView,
    Ablation::NoFollowView,
];

impl Ablation {
    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoReaderFeedback => "w/o M_rf",
            Ablation::NoRoleFusion => "w/o M_role",
            Ablation::NoRoleInit => "w/o H_role",
            Ablation::ContentAttributes => "M_s+H_at",
            Ablation::ContentOnly => "M_s only",
            Ablation::NoRepostView => "w/o V_r",
            Ablation::NoCommentView => "w/o V_c",
            Ablation::NoFollowView => "w/o V_f",
        }
    }

    fn switches(self) -> FusionSwitches {
        FusionSwitches {
            content_query: matches!(self, Ablation::NoReaderFeedback | Ablation::ContentOnly),
            no_role_branch: matches!(self, Ablation::NoRoleFusion | Ablation::ContentAttributes | Ablation::ContentOnly),
        }
    }

    fn encoding(self) -> EncodingAblation {
        EncodingAblation {
            no_roles: self == Ablation::NoRoleInit,
        }
    }

    fn dropped_view(self) -> Option<ViewId> {
        match self {
            Ablation::NoRepostView => Some(ViewId::Repost),
            Ablation::NoCommentView => Some(ViewId::Comment),
            Ablation::NoFollowView => Some(ViewId::Follow),
            _ => None,
        }
    }
}

/// `Models | Macro-F1`, one row per ablation in the given order.
pub fn ablation_table(rows: &[(Ablation, MetricsReport)]) -> String {
    let mut out = String::from("Models | Macro-F1\n");
    for (a, r) in rows {
        let _ = writeln!(out, "{} | {}", a.label(), r.macro_cell());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub post_id: String,
    /// Row of the author in the user tables.
    pub author: usize,
    /// `N x d1` content matrix.
    pub content: Array2<f64>,
    pub gold: usize,
}

#[derive(Debug, Clone)]
pub struct TrainingData {
    pub inputs: UserInputs,
    pub network: OverlappingNetwork,
    pub train: Vec<Example>,
    pub validate: Vec<Example>,
    pub test: Vec<Example>,
}

/// Per-view propagation operators plus the constant offsets that carry the
/// trained view embeddings while gradients still reach the user encoder:
/// `H_v = P_v H_apr + (T_v - P_v H_apr_init)`.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub props: [Arc<SparseRows>; 3],
    pub offsets: [Array2<f64>; 3],
    pub trained: [Array2<f64>; 3],
    pub view_trained: [bool; 3],
}

impl GraphContext {
    pub fn build(network: &OverlappingNetwork, base: &Array2<f64>, config: &ViewTrainConfig) -> Result<Self, GraphError> {
        let mut props = Vec::new();
        let mut offsets = Vec::new();
        let mut trained = Vec::new();
        let mut flags = [false; 3];
        for view in ViewId::ALL {
            let vg = ViewGraph::from_network(network, view, base.clone())?;
            let cfg = ViewTrainConfig {
                seed: derive_seed(&[&config.seed.to_le_bytes(), view.tag().as_bytes()]),
                ..*config
            };
            let t = train_or_pass(&vg, &cfg);
            let p = vg.propagation(config.rounds);
            offsets.push(&t.embeddings - &p.apply(base));
            flags[view.index()] = t.trained;
            trained.push(t.embeddings);
            props.push(Arc::new(p));
        }
        let arr = |v: Vec<Array2<f64>>| -> [Array2<f64>; 3] { v.try_into().expect("three views") };
        Ok(Self {
            props: props.try_into().expect("three views"),
            offsets: arr(offsets),
            trained: arr(trained),
            view_trained: flags,
        })
    }

    pub fn to_named(&self) -> Vec<NamedMatrix> {
        let mut out = Vec::new();
        for v in ViewId::ALL {
            out.push((format!("trained.{}", v.tag()), self.trained[v.index()].clone()));
            out.push((format!("offset.{}", v.tag()), self.offsets[v.index()].clone()));
        }
        out
    }

    /// Rebuilds the context from [`GraphContext::to_named`] output; the
    /// operators are recomputed from the network.
    pub fn from_named(network: &OverlappingNetwork, rounds: usize, named: &[NamedMatrix], view_trained: [bool; 3]) -> Result<Self, TrainError> {
        let get = |name: String| {
            named
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, m)| m.clone())
                .ok_or_else(|| TrainError::MissingArtifact(format!("graph block {name}")))
        };
        let mut props = Vec::new();
        let mut offsets = Vec::new();
        let mut trained = Vec::new();
        for v in ViewId::ALL {
            let t = get(format!("trained.{}", v.tag()))?;
            let vg = ViewGraph::from_network(network, v, Array2::zeros((network.nodes.len(), t.ncols())))?;
            props.push(Arc::new(vg.propagation(rounds)));
            offsets.push(get(format!("offset.{}", v.tag()))?);
            trained.push(t);
        }
        let arr = |v: Vec<Array2<f64>>| -> [Array2<f64>; 3] { v.try_into().expect("three views") };
        Ok(Self {
            props: props.try_into().expect("three views"),
            offsets: arr(offsets),
            trained: arr(trained),
            view_trained,
        })
    }
}

fn init_parts(shape: ModelShape, init_seed: u64) -> (ParamStore, UserEncoder, FusionHead) {
    let mut rng = seeded_rng(init_seed);
    let mut store = ParamStore::new();
    let encoder = UserEncoder::new(&mut store, shape.d1, shape.self_heads, shape.role_heads, &mut rng);
    let head = FusionHead::new(&mut store, shape.n, shape.d1, shape.d2, shape.fusion_heads, shape.classes, &mut rng);
    (store, encoder, head)
}

#[derive(Debug, Clone)]
pub struct Model {
    pub shape: ModelShape,
    pub store: ParamStore,
    pub encoder: UserEncoder,
    pub head: FusionHead,
    pub ablation: Ablation,
    pub graph: GraphContext,
}

impl Model {
    /// Initializes all parameters from `init_seed`, evaluates the initial
    /// user embeddings and trains the three views on them.
    pub fn new(shape: ModelShape, data: &TrainingData, view_config: &ViewTrainConfig, ablation: Ablation, init_seed: u64) -> Result<Self, TrainError> {
        let base = Self::initial_embeddings(shape, &data.inputs, ablation, init_seed)?;
        let graph = GraphContext::build(&data.network, &base, view_config)?;
        Ok(Self::with_graph(shape, ablation, init_seed, graph))
    }

    /// `H_apr` under the freshly initialized encoder.
    pub fn initial_embeddings(shape: ModelShape, inputs: &UserInputs, ablation: Ablation, init_seed: u64) -> Result<Array2<f64>, TrainError> {
        let (store, encoder, _) = init_parts(shape, init_seed);
        let mut tape = Tape::new();
        let h = user_embeddings(&encoder, &mut tape, &store, inputs, ablation.encoding())?;
        Ok(tape.value(h).clone())
    }

    pub fn with_graph(shape: ModelShape, ablation: Ablation, init_seed: u64, graph: GraphContext) -> Self {
        let (store, encoder, head) = init_parts(shape, init_seed);
        Self {
            shape,
            store,
            encoder,
            head,
            ablation,
            graph,
        }
    }

    pub fn freeze_upstream(&mut self) {
        for id in self.encoder.param_ids() {
            self.store.set_trainable(id, false);
        }
    }

    pub fn upstream_frozen(&self) -> bool {
        !self.store.is_trainable(self.encoder.w1)
    }

    fn reader_views(&self, tape: &mut Tape, inputs: &UserInputs) -> Result<[Var; 3], TrainError> {
        let mut views = if self.ablation == Ablation::ContentAttributes {
            let h = tape.constant(inputs.h_at.clone());
            [h, h, h]
        } else if self.upstream_frozen() {
            let t = &self.graph.trained;
            [tape.constant(t[0].clone()), tape.constant(t[1].clone()), tape.constant(t[2].clone())]
        } else {
            let h = user_embeddings(&self.encoder, tape, &self.store, inputs, self.ablation.encoding())?;
            let mut out = Vec::with_capacity(3);
            for v in 0..3 {
                let mixed = tape.mix(h, self.graph.props[v].clone());
                let offset = tape.constant(self.graph.offsets[v].clone());
                out.push(tape.add(mixed, offset));
            }
            [out[0], out[1], out[2]]
        };
        if let Some(v) = self.ablation.dropped_view() {
            views[v.index()] = tape.constant(Array2::zeros((inputs.user_ids.len(), self.shape.d1)));
        }
        Ok(views)
    }

    fn example_probs(&self, tape: &mut Tape, views: &[Var; 3], roles: Var, ex: &Example) -> Var {
        let rows: Vec<Var> = views.iter().map(|&v| tape.slice_rows(v, ex.author, ex.author + 1)).collect();
        let h_rf = tape.concat_rows(&rows);
        let h_s = tape.constant(ex.content.clone());
        let fused = self.head.fuse(tape, &self.store, h_s, h_rf, roles, self.ablation.switches());
        self.head.predict(tape, &self.store, fused.g_o)
    }

    /// Mean NLL over `batch` plus `l2` times the squared norm of the head.
    pub fn batch_loss(&self, tape: &mut Tape, inputs: &UserInputs, batch: &[&Example], l2: f64) -> Result<Var, TrainError> {
        let views = self.reader_views(tape, inputs)?;
        let roles = tape.constant(inputs.role_matrix.clone());
        let probs: Vec<Var> = batch.iter().map(|ex| self.example_probs(tape, &views, roles, ex)).collect();
        let stacked = tape.concat_rows(&probs);
        let gold: Vec<usize> = batch.iter().map(|e| e.gold).collect();
        let nll = tape.nll(stacked, &gold);
        if l2 == 0.0 {
            return Ok(nll);
        }
        let norm = self.head.l2(tape, &self.store);
        let reg = tape.scale(norm, l2);
        Ok(tape.add(nll, reg))
    }

    pub fn probabilities(&self, inputs: &UserInputs, examples: &[Example]) -> Result<Vec<Array1<f64>>, TrainError> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(64) {
            let mut tape = Tape::new();
            let views = self.reader_views(&mut tape, inputs)?;
            let roles = tape.constant(inputs.role_matrix.clone());
            for ex in chunk {
                let p = self.example_probs(&mut tape, &views, roles, ex);
                out.push(tape.value(p).row(0).to_owned());
            }
        }
        Ok(out)
    }

    /// Argmax classes; ties resolve to the lowest index.
    pub fn predict(&self, inputs: &UserInputs, examples: &[Example]) -> Result<Vec<Prediction>, TrainError> {
        Ok(self
            .probabilities(inputs, examples)?
            .iter()
            .map(|p| {
                let best = p.iter().enumerate().fold(0, |b, (i, &x)| if x > p[b] { i } else { b });
                Prediction::Class(best)
            })
            .collect())
    }

    pub fn evaluate(&self, inputs: &UserInputs, examples: &[Example]) -> Result<MetricsReport, TrainError> {
        let preds = self.predict(inputs, examples)?;
        let golds: Vec<usize> = examples.iter().map(|e| e.gold).collect();
        Ok(evaluate(&preds, &golds, self.shape.classes)?)
    }

    pub fn named_params(&self) -> Vec<NamedMatrix> {
        self.store.ids().map(|id| (self.store.name(id).to_string(), self.store.value(id).clone())).collect()
    }

    pub fn load_params(&mut self, params: &[NamedMatrix]) -> Result<(), TrainError> {
        for (name, value) in params {
            let id = self.store.find(name).ok_or_else(|| TrainError::Checkpoint(format!("unknown parameter {name}")))?;
            if self.store.value(id).dim() != value.dim() {
                return Err(TrainError::Checkpoint(format!("shape mismatch for {name}")));
            }
            self.store.set(id, value.clone());
        }
        Ok(())
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.store.find(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
    pub patience: usize,
    pub seed: u64,
    pub freeze_upstream: bool,
    pub checkpoint_dir: Option<PathBuf>,
    pub resume: bool,
    /// Recorded in checkpoint manifests.
    pub config_hash: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-6,
            batch_size: 8,
            epochs: 30,
            l2: 1e-5,
            patience: 5,
            seed: 0,
            freeze_upstream: false,
            checkpoint_dir: None,
            resume: false,
            config_hash: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
    pub val_accuracy: f64,
    pub val_per_class_f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_val_macro_f1: f64,
    pub trainable_params: usize,
    pub stopped_early: bool,
}

/// Training progress that survives between invocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epochs_done: usize,
    pub adam_steps: u64,
    pub best_epoch: Option<usize>,
    pub best_val_macro_f1: f64,
    pub since_best: usize,
    pub stopped_early: bool,
    pub logs: Vec<EpochLog>,
}

#[derive(Serialize)]
struct CheckpointManifest<'a> {
    stage: &'a str,
    d1: usize,
    d2: usize,
    n: usize,
    l: usize,
    seed: u64,
    config_hash: &'a str,
    trainable_params: usize,
    epochs_done: usize,
}

const STATE_FILE: &str = "state.json";
const PARAMS_FILE: &str = "params.rpmx";
const BEST_FILE: &str = "best.rpmx";
const ADAM_FILE: &str = "adam.rpmx";

impl Checkpoint {
    pub fn exists(dir: &Path) -> bool {
        dir.join(STATE_FILE).exists()
    }

    pub fn load(dir: &Path) -> Result<Self, TrainError> {
        let bytes = std::fs::read(dir.join(STATE_FILE)).map_err(|_| TrainError::MissingArtifact(dir.join(STATE_FILE).display().to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| TrainError::Checkpoint(e.to_string()))
    }

    pub fn best_params(dir: &Path) -> Result<Vec<NamedMatrix>, TrainError> {
        Ok(read_matrices(&dir.join(BEST_FILE))?)
    }
}

fn adam_entries(adam: &Adam, store: &ParamStore) -> Vec<NamedMatrix> {
    let mut out = Vec::new();
    for (id, m, v) in adam.moments() {
        out.push((format!("m:{}", store.name(id)), m));
        out.push((format!("v:{}", store.name(id)), v));
    }
    out
}

fn restore_adam(adam: &mut Adam, store: &ParamStore, steps: u64, entries: Vec<NamedMatrix>) -> Result<(), TrainError> {
    let mut moments = Vec::new();
    let mut it = entries.into_iter();
    while let (Some((mn, m)), Some((vn, v))) = (it.next(), it.next()) {
        let name = mn.strip_prefix("m:").filter(|n| vn.strip_prefix("v:") == Some(n)).ok_or_else(|| TrainError::Checkpoint(format!("bad moment pair {mn}/{vn}")))?;
        let id = store.find(name).ok_or_else(|| TrainError::Checkpoint(format!("unknown parameter {name}")))?;
        moments.push((id, m, v));
    }
    adam.restore(steps, moments);
    Ok(())
}

fn save_checkpoint(dir: &Path, model: &Model, adam: &Adam, best: &[NamedMatrix], state: &Checkpoint, config: &TrainConfig) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir)?;
    let params = dir.join(PARAMS_FILE);
    write_matrices(&params, &model.named_params())?;
    write_matrices(&dir.join(BEST_FILE), best)?;
    write_matrices(&dir.join(ADAM_FILE), &adam_entries(adam, &model.store))?;
    for (path, stage) in [(&params, "checkpoint"), (&dir.join(BEST_FILE), "best"), (&dir.join(ADAM_FILE), "optimizer")] {
        write_manifest(
            path,
            &CheckpointManifest {
                stage,
                d1: model.shape.d1,
                d2: model.shape.d2,
                n: model.shape.n,
                l: model.shape.classes,
                seed: config.seed,
                config_hash: &config.config_hash,
                trainable_params: model.store.trainable_count(),
                epochs_done: state.epochs_done,
            },
        )?;
    }
    let json = serde_json::to_vec_pretty(state).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    crate::jsonl::write_atomic(&dir.join(STATE_FILE), &json)?;
    write_manifest(&dir.join(STATE_FILE), &serde_json::json!({ "stage": "training-state", "config_hash": config.config_hash, "seed": config.seed }))?;
    Ok(())
}

/// Mini-batch Adam on the regularized cross-entropy with per-epoch
/// validation; the best-on-validation parameters are left in `model`.
pub fn train_classifier(model: &mut Model, data: &TrainingData, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    if data.train.is_empty() {
        return Err(TrainError::MissingArtifact("training split is empty".into()));
    }
    if config.freeze_upstream {
        model.freeze_upstream();
    }
    let mut adam = Adam::new(config.lr);
    let mut state = Checkpoint {
        epochs_done: 0,
        adam_steps: 0,
        best_epoch: None,
        best_val_macro_f1: f64::NEG_INFINITY,
        since_best: 0,
        stopped_early: false,
        logs: Vec::new(),
    };
    let mut best = model.named_params();
    if let (true, Some(dir)) = (config.resume, &config.checkpoint_dir) {
        if Checkpoint::exists(dir) {
            state = Checkpoint::load(dir)?;
            model.load_params(&read_matrices(&dir.join(PARAMS_FILE))?)?;
            best = read_matrices(&dir.join(BEST_FILE))?;
            restore_adam(&mut adam, &model.store, state.adam_steps, read_matrices(&dir.join(ADAM_FILE))?)?;
            log::info!("resuming after epoch {}", state.epochs_done);
        }
    }
    let batch_size = config.batch_size.max(1);
    while state.epochs_done < config.epochs && !state.stopped_early {
        let epoch = state.epochs_done;
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut seeded_rng(derive_seed(&[&config.seed.to_le_bytes(), &(epoch as u64).to_le_bytes()])));
        let mut total = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data.train[i]).collect();
            let mut tape = Tape::new();
            let loss = model.batch_loss(&mut tape, &data.inputs, &batch, config.l2)?;
            total += tape.scalar(loss) * batch.len() as f64;
            let grads = tape.backward(loss);
            adam.step(&mut model.store, &grads);
        }
        let val = model.evaluate(&data.inputs, &data.validate)?;
        state.logs.push(EpochLog {
            epoch,
            train_loss: total / data.train.len() as f64,
            val_macro_f1: val.macro_f1,
            val_accuracy: val.accuracy,
            val_per_class_f1: val.per_class_f1.clone(),
        });
        log::info!("epoch {epoch}: loss {:.4}, val macro-F1 {:.4}", total / data.train.len() as f64, val.macro_f1);
        if val.macro_f1 > state.best_val_macro_f1 || data.validate.is_empty() {
            state.best_val_macro_f1 = val.macro_f1;
            state.best_epoch = Some(epoch);
            state.since_best = 0;
            best = model.named_params();
        } else {
            state.since_best += 1;
        }
        state.epochs_done += 1;
        state.adam_steps = adam.steps_taken();
        state.stopped_early = state.since_best >= config.patience.max(1);
        if let Some(dir) = &config.checkpoint_dir {
            save_checkpoint(dir, model, &adam, &best, &state, config)?;
        }
    }
    model.load_params(&best)?;
    Ok(TrainOutcome {
        best_epoch: state.best_epoch,
        best_val_macro_f1: if state.best_epoch.is_some() { state.best_val_macro_f1 } else { f64::NAN },
        logs: state.logs,
        trainable_params: model.store.trainable_count(),
        stopped_early: state.stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::EmbeddingMatrix;
    use ndarray::Array2;

    fn toy(classes: usize) -> (ModelShape, TrainingData) {
        let shape = ModelShape {
            n: 3,
            d1: 4,
            d2: 2,
            classes,
            self_heads: 2,
            role_heads: 1,
            fusion_heads: 2,
        };
        let users: Vec<String> = (0..4).map(|i| format!("u{i}")).collect();
        let f = |seed: usize, r: usize, c: usize| Array2::from_shape_fn((r, c), |(i, j)| (((seed * 31 + i * 7 + j * 3) % 11) as f64 - 5.0) / 5.0);
        let inputs = UserInputs {
            user_ids: users.clone(),
            h_at: f(1, 4, 4),
            comments: (0..4).map(|u| if u == 3 { vec![] } else { vec![EmbeddingMatrix::tokens(f(u + 2, 3, 4), 2)] }).collect(),
            role_matrix: f(9, 4, 4),
        };
        let mut network = OverlappingNetwork {
            nodes: users.clone(),
            ..Default::default()
        };
        network.e_rp.insert(("u0".into(), "u1".into()));
        network.e_rc.insert(("u2".into(), "u1".into()));
        let examples: Vec<Example> = (0..8)
            .map(|i| Example {
                post_id: format!("p{i}"),
                author: i % 4,
                content: f(i + 20, 3, 4),
                gold: (i % 4) % classes,
            })
            .collect();
        let data = TrainingData {
            inputs,
            network,
            train: examples[..6].to_vec(),
            validate: examples[6..].to_vec(),
            test: vec![],
        };
        (shape, data)
    }

    fn view_cfg() -> ViewTrainConfig {
        ViewTrainConfig {
            epochs: 2,
            lr: 1e-2,
            ..Default::default()
        }
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let (shape, data) = toy(3);
        let mut m = Model::new(shape, &data, &view_cfg(), Ablation::Full, 1).unwrap();
        let before = m.named_params();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 1,
            ..Default::default()
        };
        train_classifier(&mut m, &data, &cfg).unwrap();
        assert_eq!(before, m.named_params());
    }

    #[test]
    fn offsets_reproduce_trained_views() {
        let (shape, data) = toy(3);
        let m = Model::new(shape, &data, &view_cfg(), Ablation::Full, 4).unwrap();
        assert_eq!(m.graph.view_trained, [false, true, true]);
        let mut tape = Tape::new();
        let views = m.reader_views(&mut tape, &data.inputs).unwrap();
        for v in 0..3 {
            let diff = (tape.value(views[v]) - &m.graph.trained[v]).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn freeze_changes_trainable_count() {
        let (shape, data) = toy(3);
        let mut m = Model::new(shape, &data, &view_cfg(), Ablation::Full, 2).unwrap();
        let all = m.store.trainable_count();
        m.freeze_upstream();
        assert!(m.store.trainable_count() < all);
        assert!(m.upstream_frozen());
    }

    #[test]
    fn dropped_view_is_zero() {
        let (shape, data) = toy(3);
        let m = Model::new(shape, &data, &view_cfg(), Ablation::NoCommentView, 3).unwrap();
        let mut tape = Tape::new();
        let views = m.reader_views(&mut tape, &data.inputs).unwrap();
        assert!(tape.value(views[ViewId::Comment.index()]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn resumed_equals_uninterrupted() {
        let (shape, data) = toy(3);
        let dir = tempfile::tempdir().unwrap();
        let base = TrainConfig {
            lr: 1e-2,
            epochs: 4,
            patience: 100,
            ..Default::default()
        };
        let mut full = Model::new(shape, &data, &view_cfg(), Ablation::Full, 7).unwrap();
        let a = train_classifier(&mut full, &data, &base).unwrap();

        let mut first = Model::new(shape, &data, &view_cfg(), Ablation::Full, 7).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..base.clone()
        };
        train_classifier(&mut first, &data, &cfg).unwrap();
        let mut second = Model::new(shape, &data, &view_cfg(), Ablation::Full, 7).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            resume: true,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..base
        };
        let b = train_classifier(&mut second, &data, &cfg).unwrap();
        assert_eq!(a.logs, b.logs);
        assert_eq!(full.named_params(), second.named_params());
    }

    #[test]
    fn ablation_rows_in_order() {
        let r = evaluate(&[Prediction::Class(0)], &[0], 7).unwrap();
        let rows: Vec<_> = ABLATION_ROWS.iter().map(|&a| (a, r.clone())).collect();
        let t = ablation_table(&rows);
        let labels: Vec<&str> = t.lines().skip(1).map(|l| l.split(" | ").next().unwrap()).collect();
        assert_eq!(labels, ["full", "w/o M_rf", "w/o M_role", "w/o H_role", "M_s+H_at", "M_s only", "w/o V_r", "w/o V_c", "w/o V_f"]);
    }
}
