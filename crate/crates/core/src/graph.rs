//! Multi-behavior interaction network, per-behavior views, neighbor-mean
//! propagation and edge-prediction training of view embeddings.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Behavior, FeedbackLedger};
use crate::corpus::Corpus;
use crate::nn::affine;
use crate::tape::{seeded_rng, Adam, ParamStore, SparseRows, Tape};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("unknown id {0}")]
    DanglingReference(String),
    #[error("view {0:?} has no edges")]
    NoEdges(ViewId),
    #[error("views are built over different node sets")]
    NodeSetMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViewId {
    #[serde(rename = "follow")]
    Follow,
    #[serde(rename = "repost")]
    Repost,
    #[serde(rename = "comment")]
    Comment,
}

impl ViewId {
    /// Row order of the reader-feature matrix.
    pub const ALL: [ViewId; 3] = [ViewId::Follow, ViewId::Repost, ViewId::Comment];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> &'static str {
        match self {
            ViewId::Follow => "follow",
            ViewId::Repost => "repost",
            ViewId::Comment => "comment",
        }
    }
}

pub type Edge = (String, String);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlappingNetwork {
    pub nodes: Vec<String>,
    pub e_fw: BTreeSet<Edge>,
    pub e_rp: BTreeSet<Edge>,
    pub e_rc: BTreeSet<Edge>,
}

impl OverlappingNetwork {
    pub fn edges(&self, view: ViewId) -> &BTreeSet<Edge> {
        match view {
            ViewId::Follow => &self.e_fw,
            ViewId::Repost => &self.e_rp,
            ViewId::Comment => &self.e_rc,
        }
    }

    /// Edge lists as text sections, one `[tag]` header per type.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in ViewId::ALL {
            out.push_str(&format!("[{}]\n", v.tag()));
            for (a, b) in self.edges(v) {
                out.push_str(&format!("{a}\t{b}\n"));
            }
        }
        out
    }
}

/// Follow edges from the corpus; reader-to-author edges from the ledger
/// for reposts and quotes. Repeated pairs collapse per type.
pub fn build_overlapping_network(corpus: &Corpus, ledger: &FeedbackLedger) -> Result<OverlappingNetwork, GraphError> {
    let mut net = OverlappingNetwork {
        nodes: corpus.user_ids(),
        ..Default::default()
    };
    for f in &corpus.follows {
        net.e_fw.insert((f.follower_id.clone(), f.followee_id.clone()));
    }
    for e in ledger.entries() {
        if !corpus.users.contains_key(&e.reader_id) {
            return Err(GraphError::DanglingReference(e.reader_id.clone()));
        }
        let post = corpus.posts.get(&e.post_id).ok_or_else(|| GraphError::DanglingReference(e.post_id.clone()))?;
        if post.author_id == e.reader_id {
            continue;
        }
        let edge = (e.reader_id.clone(), post.author_id.clone());
        match e.behavior {
            Behavior::Repost => net.e_rp.insert(edge),
            Behavior::RepostWithComment => net.e_rc.insert(edge),
            Behavior::NoRepost => false,
        };
    }
    Ok(net)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewGraph {
    pub view: ViewId,
    /// Directed edges as node indices.
    pub edges: Vec<(usize, usize)>,
    /// Symmetrized neighbor lists, sorted, without self.
    pub neighbors: Vec<Vec<usize>>,
    pub embeddings: Array2<f64>,
}

impl ViewGraph {
    pub fn new(view: ViewId, n: usize, edges: Vec<(usize, usize)>, embeddings: Array2<f64>) -> Self {
        assert_eq!(embeddings.nrows(), n, "one embedding row per node");
        let mut sets = vec![BTreeSet::new(); n];
        for &(a, b) in &edges {
            if a != b {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        Self {
            view,
            edges,
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            embeddings,
        }
    }

    pub fn from_network(net: &OverlappingNetwork, view: ViewId, embeddings: Array2<f64>) -> Result<Self, GraphError> {
        let index: BTreeMap<&str, usize> = net.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let lookup = |id: &str| index.get(id).copied().ok_or_else(|| GraphError::DanglingReference(id.to_string()));
        let edges = net
            .edges(view)
            .iter()
            .map(|(a, b)| Ok((lookup(a)?, lookup(b)?)))
            .collect::<Result<Vec<_>, GraphError>>()?;
        Ok(Self::new(view, net.nodes.len(), edges, embeddings))
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    /// One propagation round as a sparse row operator; isolated nodes map
    /// to themselves.
    pub fn mixing(&self) -> SparseRows {
        let rows = self
            .neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                if nb.is_empty() {
                    vec![(i, 1.0)]
                } else {
                    let w = 1.0 / nb.len() as f64;
                    nb.iter().map(|&j| (j, w)).collect()
                }
            })
            .collect();
        SparseRows {
            n_cols: self.n_nodes(),
            rows,
        }
    }

    /// `rounds` applications of [`ViewGraph::mixing`] composed into one.
    pub fn propagation(&self, rounds: usize) -> SparseRows {
        let step = self.mixing();
        (0..rounds).fold(SparseRows::identity(self.n_nodes()), |acc, _| step.compose(&acc))
    }
}

/// `rounds` synchronous neighbor-mean rounds over the view's embeddings.
pub fn propagate(view: &ViewGraph, rounds: usize) -> Array2<f64> {
    let step = view.mixing();
    let mut e = view.embeddings.clone();
    for _ in 0..rounds {
        e = step.apply(&e);
    }
    e
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewTrainConfig {
    pub negatives_per_positive: usize,
    pub epochs: usize,
    pub rounds: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ViewTrainConfig {
    fn default() -> Self {
        Self {
            negatives_per_positive: 1,
            epochs: 10,
            rounds: 1,
            lr: 2e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedView {
    pub view: ViewId,
    /// Propagated embeddings after the final epoch.
    pub embeddings: Array2<f64>,
    /// Trained pre-propagation embeddings.
    pub base: Array2<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array2<f64>,
    pub losses: Vec<f64>,
    pub trained: bool,
}

impl TrainedView {
    /// Edge probability of the ordered pair under the trained head.
    pub fn edge_probability(&self, i: usize, j: usize) -> f64 {
        edge_probability(&self.embeddings, &self.w_v, &self.b_v, i, j)
    }
}

pub fn edge_probability(emb: &Array2<f64>, w_v: &Array2<f64>, b_v: &Array2<f64>, i: usize, j: usize) -> f64 {
    let x = ndarray::concatenate(ndarray::Axis(0), &[emb.row(i), emb.row(j)]).expect("row concat");
    let logits = w_v.dot(&x) + b_v.row(0);
    let m = logits[0].max(logits[1]);
    let (a, b) = ((logits[0] - m).exp(), (logits[1] - m).exp());
    b / (a + b)
}

/// Uniform ordered non-edges, never self-pairs or positives. Returns fewer
/// than `count` only when the graph has fewer non-edges than that.
pub fn sample_negatives(n: usize, positives: &HashSet<(usize, usize)>, count: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let capacity = (n * n.saturating_sub(1)).saturating_sub(positives.len());
    let target = count.min(capacity);
    let mut out = Vec::with_capacity(target);
    if target == 0 {
        return out;
    }
    if target * 4 > capacity {
        let mut all: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| i != j && !positives.contains(&(i, j))).collect();
        for i in 0..target {
            let k = rng.random_range(i..all.len());
            all.swap(i, k);
        }
        all.truncate(target);
        return all;
    }
    while out.len() < target {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i != j && !positives.contains(&(i, j)) {
            out.push((i, j));
        }
    }
    out
}

fn selector(n: usize, picks: impl Iterator<Item = usize>) -> Arc<SparseRows> {
    Arc::new(SparseRows {
        n_cols: n,
        rows: picks.map(|i| vec![(i, 1.0)]).collect(),
    })
}

/// Trains node embeddings and the edge head of one view with full-batch
/// Adam on two-class cross-entropy over positives and fresh negatives.
pub fn train_view(view: &ViewGraph, config: &ViewTrainConfig) -> Result<TrainedView, GraphError> {
    if view.edges.is_empty() {
        return Err(GraphError::NoEdges(view.view));
    }
    let n = view.n_nodes();
    let d = view.embeddings.ncols();
    let mut rng = seeded_rng(config.seed);
    let mut store = ParamStore::new();
    let e0 = store.add("view.e0", view.embeddings.clone());
    let w_v = store.add_random("view.w", (2, 2 * d), 2 * d, &mut rng);
    let b_v = store.add_zeros("view.b", (1, 2));
    let prop = Arc::new(view.propagation(config.rounds));
    let positives: HashSet<(usize, usize)> = view.edges.iter().copied().collect();
    let mut adam = Adam::new(config.lr);
    let mut losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let negatives = sample_negatives(n, &positives, view.edges.len() * config.negatives_per_positive, &mut rng);
        let pairs: Vec<(usize, usize)> = view.edges.iter().copied().chain(negatives.iter().copied()).collect();
        let gold: Vec<usize> = (0..pairs.len()).map(|i| usize::from(i < view.edges.len())).collect();
        let mut tape = Tape::new();
        let e = tape.param(&store, e0);
        let e = tape.mix(e, prop.clone());
        let left = tape.mix(e, selector(n, pairs.iter().map(|p| p.0)));
        let right = tape.mix(e, selector(n, pairs.iter().map(|p| p.1)));
        let x = tape.concat_cols(&[left, right]);
        let logits = affine(&mut tape, &store, x, w_v, b_v);
        let probs = tape.softmax_rows(logits);
        let loss = tape.nll(probs, &gold);
        losses.push(tape.scalar(loss));
        let grads = tape.backward(loss);
        adam.step(&mut store, &grads);
    }

    let base = store.value(e0).clone();
    Ok(TrainedView {
        view: view.view,
        embeddings: view.propagation(config.rounds).apply(&base),
        base,
        w_v: store.value(w_v).clone(),
        b_v: store.value(b_v).clone(),
        losses,
        trained: true,
    })
}

/// Trains the view, or passes the propagated initial embeddings through
/// when the view has no edges.
pub fn train_or_pass(view: &ViewGraph, config: &ViewTrainConfig) -> TrainedView {
    match train_view(view, config) {
        Ok(t) => t,
        Err(_) => {
            log::info!("view {:?} has no edges; using untrained pass-through", view.view);
            TrainedView {
                view: view.view,
                embeddings: propagate(view, config.rounds),
                base: view.embeddings.clone(),
                w_v: Array2::zeros((2, 2 * view.embeddings.ncols())),
                b_v: Array2::zeros((1, 2)),
                losses: Vec::new(),
                trained: false,
            }
        }
    }
}

/// Per-user `3 x d1` matrices stacked as one `(3 * users) x d1` array,
/// rows `3u..3u+3` holding (follow, repost, comment) for user `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReaderFeatures {
    pub values: Array2<f64>,
}

impl ReaderFeatures {
    pub fn n_users(&self) -> usize {
        self.values.nrows() / 3
    }

    pub fn user(&self, u: usize) -> ndarray::ArrayView2<'_, f64> {
        self.values.slice(ndarray::s![3 * u..3 * u + 3, ..])
    }
}

pub fn collect_reader_features(views: &[Array2<f64>; 3]) -> Result<ReaderFeatures, GraphError> {
    let dim = views[0].dim();
    if views.iter().any(|v| v.dim() != dim) {
        return Err(GraphError::NodeSetMismatch);
    }
    let (n, d) = dim;
    let values = Array2::from_shape_fn((3 * n, d), |(r, c)| views[r % 3][[r / 3, c]]);
    Ok(ReaderFeatures { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::SimulatedFeedback;
    use crate::corpus::{FollowEdge, Post, UserProfile};
    use ndarray::array;

    fn triangle(values: Array2<f64>) -> ViewGraph {
        ViewGraph::new(ViewId::Repost, 3, vec![(0, 1), (1, 2), (2, 0)], values)
    }

    #[test]
    fn triangle_two_rounds() {
        let v = triangle(array![[1.0], [2.0], [3.0]]);
        assert_eq!(propagate(&v, 1), array![[2.5], [2.0], [1.5]]);
        assert_eq!(propagate(&v, 2), array![[1.75], [2.0], [2.25]]);
        assert_eq!(propagate(&v, 0), v.embeddings);
    }

    #[test]
    fn single_neighbor_and_isolated() {
        let v = ViewGraph::new(ViewId::Follow, 3, vec![(0, 1)], array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let p = propagate(&v, 1);
        assert_eq!(p.row(0), v.embeddings.row(1));
        assert_eq!(p.row(2), v.embeddings.row(2));
    }

    #[test]
    fn negatives_avoid_positives_and_self() {
        let pos: HashSet<_> = [(0, 1), (1, 2)].into_iter().collect();
        let mut rng = seeded_rng(1);
        for count in [1, 3, 4, 10] {
            let neg = sample_negatives(3, &pos, count, &mut rng);
            assert_eq!(neg.len(), count.min(4));
            assert!(neg.iter().all(|p| p.0 != p.1 && !pos.contains(p)));
        }
    }

    #[test]
    fn trained_edge_beats_non_edges() {
        let init = Array2::from_shape_fn((4, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.1);
        let v = ViewGraph::new(ViewId::Repost, 4, vec![(0, 1)], init);
        let cfg = ViewTrainConfig {
            epochs: 300,
            lr: 0.05,
            seed: 4,
            ..Default::default()
        };
        let t = train_view(&v, &cfg).unwrap();
        let p = t.edge_probability(0, 1);
        for i in 0..4 {
            for j in 0..4 {
                if i != j && (i, j) != (0, 1) {
                    assert!(p > t.edge_probability(i, j), "({i},{j})");
                }
            }
        }
        assert_eq!(t, train_view(&v, &cfg).unwrap());
    }

    #[test]
    fn zero_epochs_is_plain_propagation() {
        let v = triangle(array![[1.0, 0.0], [2.0, 1.0], [3.0, 5.0]]);
        let t = train_view(&v, &ViewTrainConfig { epochs: 0, ..Default::default() }).unwrap();
        assert_eq!(t.embeddings, propagate(&v, 1));
        let empty = ViewGraph::new(ViewId::Comment, 2, vec![], array![[1.0], [2.0]]);
        assert_eq!(train_view(&empty, &ViewTrainConfig::default()), Err(GraphError::NoEdges(ViewId::Comment)));
    }

    #[test]
    fn network_from_ledger() {
        let mut c = Corpus::default();
        for u in ["a", "b", "c"] {
            c.users.insert(u.into(), UserProfile::new(u, "", "", ""));
        }
        for (p, a) in [("pb", "b"), ("pc", "c"), ("pc2", "c")] {
            c.posts.insert(
                p.into(),
                Post {
                    post_id: p.into(),
                    author_id: a.into(),
                    text: "t".into(),
                    emotion_label: None,
                    is_augmented: false,
                },
            );
        }
        c.follows.insert(FollowEdge {
            follower_id: "a".into(),
            followee_id: "b".into(),
        });
        let mut l = FeedbackLedger::new();
        l.insert(SimulatedFeedback::from_raw("c", "pb", "Behavior: repost".into()), false).unwrap();
        l.insert(SimulatedFeedback::from_raw("a", "pc", "Behavior: quote\nComment: x".into()), false).unwrap();
        l.insert(SimulatedFeedback::from_raw("a", "pc2", "Behavior: quote\nComment: y".into()), false).unwrap();
        l.insert(SimulatedFeedback::from_raw("b", "pc", "Behavior: no repost".into()), false).unwrap();
        let net = build_overlapping_network(&c, &l).unwrap();
        assert_eq!((net.e_fw.len(), net.e_rp.len(), net.e_rc.len()), (1, 1, 1));
    }

    #[test]
    fn reader_features_row_order() {
        let views = [array![[1.0], [2.0]], array![[3.0], [4.0]], array![[5.0], [6.0]]];
        let f = collect_reader_features(&views).unwrap();
        assert_eq!(f.user(1), array![[2.0], [4.0], [6.0]]);
        assert!(collect_reader_features(&[array![[1.0]], array![[1.0]], array![[1.0], [2.0]]]).is_err());
    }
}
