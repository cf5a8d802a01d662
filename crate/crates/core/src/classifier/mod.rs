//! Gated multi-head attention fusion of content, reader-feedback features
//! and role semantics, the emotion head, its loss and evaluation metrics.

mod metrics;
mod model;

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use crate::nn::Mha;
use crate::tape::{ParamId, ParamStore, Tape, Var, LOG_CLAMP};

pub use metrics::{evaluate, metrics_table, MetricsError, MetricsReport, Prediction, METRICS_COLUMNS};
pub use model::{
    ablation_table, train_classifier, Ablation, Checkpoint, EpochLog, Example, GraphContext, Model, ModelShape, TrainConfig, TrainError,
    TrainOutcome, TrainingData, ABLATION_ROWS,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassifierError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionHead {
    pub w_s: ParamId,
    pub b_s: ParamId,
    pub w_r: ParamId,
    pub b_r: ParamId,
    pub w_e: ParamId,
    pub b_e: ParamId,
    pub matt_s: Mha,
    pub matt_role: Mha,
    pub w_gs: ParamId,
    pub b_gs: ParamId,
    pub w_gr: ParamId,
    pub b_gr: ParamId,
    pub w_o: ParamId,
    pub b_o: ParamId,
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub classes: usize,
}

/// Which parts of the fusion are active.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FusionSwitches {
    /// Query both attention blocks with the content projection instead of
    /// the reader-feedback projection.
    pub content_query: bool,
    /// Force the role branch to zero.
    pub no_role_branch: bool,
}

pub struct FusedVars {
    pub a_s: Var,
    pub a_role: Var,
    pub g_s: Var,
    pub g_role: Var,
    pub g_o: Var,
}

impl FusionHead {
    pub fn new(store: &mut ParamStore, n: usize, d1: usize, d2: usize, heads: usize, classes: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w_s: store.add_random("fusion.w_s", (n, d2), n, rng),
            b_s: store.add_zeros("fusion.b_s", (d2, 1)),
            w_r: store.add_random("fusion.w_r", (3, d2), 3, rng),
            b_r: store.add_zeros("fusion.b_r", (d2, 1)),
            w_e: store.add_random("fusion.w_e", (4, d2), 4, rng),
            b_e: store.add_zeros("fusion.b_e", (d2, 1)),
            matt_s: Mha::new(store, "fusion.matt_s", d1, heads, rng),
            matt_role: Mha::new(store, "fusion.matt_role", d1, heads, rng),
            w_gs: store.add_random("fusion.w_gs", (d2, d2), d2, rng),
            b_gs: store.add_zeros("fusion.b_gs", (1, d2)),
            w_gr: store.add_random("fusion.w_gr", (d2, d2), d2, rng),
            b_gr: store.add_zeros("fusion.b_gr", (1, d2)),
            w_o: store.add_random("fusion.w_o", (classes, 4 * d2), 4 * d2, rng),
            b_o: store.add_zeros("fusion.b_o", (1, classes)),
            n,
            d1,
            d2,
            classes,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.w_s, self.b_s, self.w_r, self.b_r, self.w_e, self.b_e];
        ids.extend(self.matt_s.ids());
        ids.extend(self.matt_role.ids());
        ids.extend([self.w_gs, self.b_gs, self.w_gr, self.b_gr, self.w_o, self.b_o]);
        ids
    }

    /// `W^T h + b`: contracts the leading axis of `h` to `d2`, bias added
    /// along the feature axis.
    pub fn project(&self, tape: &mut Tape, store: &ParamStore, h: Var, w: ParamId, b: ParamId) -> Var {
        let w = tape.param(store, w);
        let b = tape.param(store, b);
        let wt = tape.transpose(w);
        let m = tape.matmul(wt, h);
        tape.add_col_bias(m, b)
    }

    fn pooled_gate(tape: &mut Tape, store: &ParamStore, a: Var, w: ParamId, b: ParamId) -> (Var, Var) {
        let pooled = tape.mean_cols(a);
        let row = tape.transpose(pooled);
        let z = crate::nn::affine(tape, store, row, w, b);
        let gate = tape.sigmoid(z);
        (row, tape.mul(row, gate))
    }

    /// `h_s` is `N x d1`, `h_rf` is `3 x d1`, `h_role` is `4 x d1`.
    pub fn fuse(&self, tape: &mut Tape, store: &ParamStore, h_s: Var, h_rf: Var, h_role: Var, switches: FusionSwitches) -> FusedVars {
        let m_s = self.project(tape, store, h_s, self.w_s, self.b_s);
        let m_rf = self.project(tape, store, h_rf, self.w_r, self.b_r);
        let m_role = self.project(tape, store, h_role, self.w_e, self.b_e);
        let query = if switches.content_query { m_s } else { m_rf };
        let att_s = self.matt_s.forward(tape, store, query, m_s, m_s, None).out;
        let (a_s, g_s) = Self::pooled_gate(tape, store, att_s, self.w_gs, self.b_gs);
        let (a_role, g_role) = if switches.no_role_branch {
            let z = tape.constant(Array2::zeros((1, self.d2)));
            (z, z)
        } else {
            let att_r = self.matt_role.forward(tape, store, query, m_role, m_role, None).out;
            Self::pooled_gate(tape, store, att_r, self.w_gr, self.b_gr)
        };
        let sum = tape.add(g_s, g_role);
        let prod = tape.mul(g_s, g_role);
        let g_o = tape.concat_cols(&[g_s, g_role, sum, prod]);
        FusedVars {
            a_s,
            a_role,
            g_s,
            g_role,
            g_o,
        }
    }

    /// Class probabilities `softmax(W_o g_o + b_o)` as a `1 x classes` row.
    pub fn predict(&self, tape: &mut Tape, store: &ParamStore, g_o: Var) -> Var {
        let logits = crate::nn::affine(tape, store, g_o, self.w_o, self.b_o);
        tape.softmax_rows(logits)
    }

    /// Squared norm of all head parameters.
    pub fn l2(&self, tape: &mut Tape, store: &ParamStore) -> Var {
        let parts: Vec<Var> = self
            .param_ids()
            .into_iter()
            .map(|id| {
                let p = tape.param(store, id);
                tape.sum_squares(p)
            })
            .collect();
        parts[1..].iter().fold(parts[0], |acc, p| tape.add(acc, *p))
    }
}

/// `W^T h + b` evaluated directly; `h` is `rows x d1`, `W` is `rows x d2`.
pub fn project_inputs(h: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Result<Array2<f64>, ClassifierError> {
    if h.nrows() != w.nrows() || b.len() != w.ncols() {
        return Err(ClassifierError::DimensionMismatch(format!("h {:?}, W {:?}, b {}", h.dim(), w.dim(), b.len())));
    }
    let mut m = w.t().dot(h);
    for (mut row, bias) in m.rows_mut().into_iter().zip(b.iter()) {
        row += *bias;
    }
    Ok(m)
}

/// `g_s ⊕ g_role ⊕ (g_s + g_role) ⊕ (g_s ⊙ g_role)`.
pub fn combine(g_s: &Array1<f64>, g_role: &Array1<f64>) -> Array1<f64> {
    let sum = g_s + g_role;
    let prod = g_s * g_role;
    ndarray::concatenate(ndarray::Axis(0), &[g_s.view(), g_role.view(), sum.view(), prod.view()]).expect("1-d concat")
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.mapv(|x| (x - m).exp());
    let z = e.sum();
    e / z
}

pub fn predict(g_o: &Array1<f64>, w_o: &Array2<f64>, b_o: &Array1<f64>) -> Result<Array1<f64>, ClassifierError> {
    if w_o.ncols() != g_o.len() || w_o.nrows() != b_o.len() {
        return Err(ClassifierError::DimensionMismatch(format!("W_o {:?}, g_o {}, b_o {}", w_o.dim(), g_o.len(), b_o.len())));
    }
    Ok(softmax(&(w_o.dot(g_o) + b_o)))
}

/// Mean clamped negative log-likelihood of the gold classes plus
/// `l2_coeff * squared_norm`.
pub fn loss(predictions: &[Array1<f64>], golds: &[usize], l2_coeff: f64, squared_norm: f64) -> Result<f64, ClassifierError> {
    if predictions.is_empty() {
        return Err(ClassifierError::EmptyBatch);
    }
    if predictions.len() != golds.len() {
        return Err(ClassifierError::DimensionMismatch(format!("{} predictions, {} golds", predictions.len(), golds.len())));
    }
    let nll: f64 = predictions.iter().zip(golds).map(|(p, &g)| -p[g].max(LOG_CLAMP).ln()).sum::<f64>() / predictions.len() as f64;
    Ok(nll + l2_coeff * squared_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::seeded_rng;
    use ndarray::array;

    #[test]
    fn projection_hand_example() {
        let m = project_inputs(&array![[1.0, 2.0], [3.0, 4.0]], &array![[1.0], [1.0]], &array![0.0]).unwrap();
        assert_eq!(m, array![[4.0, 6.0]]);
        let z = project_inputs(&array![[1.0, 2.0], [3.0, 4.0]], &Array2::zeros((2, 3)), &Array1::zeros(3)).unwrap();
        assert_eq!(z, Array2::<f64>::zeros((3, 2)));
    }

    #[test]
    fn tape_projection_matches_direct() {
        let mut store = ParamStore::new();
        let head = FusionHead::new(&mut store, 4, 6, 3, 2, 7, &mut seeded_rng(1));
        store.set(head.b_s, array![[0.1], [0.2], [0.3]]);
        let h = Array2::from_shape_fn((4, 6), |(i, j)| (i as f64 - j as f64) * 0.3);
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone());
        let m = head.project(&mut tape, &store, hv, head.w_s, head.b_s);
        let direct = project_inputs(&h, store.value(head.w_s), &store.value(head.b_s).column(0).to_owned()).unwrap();
        for (a, b) in tape.value(m).iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn combine_identities() {
        let g = array![0.5, -2.0, 3.0];
        assert_eq!(combine(&g, &Array1::zeros(3)), array![0.5, -2.0, 3.0, 0.0, 0.0, 0.0, 0.5, -2.0, 3.0, 0.0, 0.0, 0.0]);
        assert_eq!(combine(&g, &g), array![0.5, -2.0, 3.0, 0.5, -2.0, 3.0, 1.0, -4.0, 6.0, 0.25, 4.0, 9.0]);
    }

    #[test]
    fn predict_examples() {
        let p = predict(&Array1::zeros(8), &Array2::zeros((7, 8)), &Array1::zeros(7)).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 7.0).abs() < 1e-15));
        let mut logits = Array1::zeros(7);
        logits[0] = 10.0;
        let q = softmax(&logits);
        let e10 = 10f64.exp();
        assert!((q[0] - e10 / (e10 + 6.0)).abs() < 1e-15);
        assert!((q[0] - 0.99973).abs() < 5e-6);
        assert!(predict(&Array1::zeros(3), &Array2::zeros((7, 8)), &Array1::zeros(7)).is_err());
    }

    #[test]
    fn loss_examples() {
        let uniform = Array1::from_elem(7, 1.0 / 7.0);
        assert!((loss(&[uniform], &[3], 0.0, 0.0).unwrap() - 7f64.ln()).abs() < 1e-12);
        let a = array![0.5, 0.5];
        let b = array![0.75, 0.25];
        assert!((loss(&[a, b], &[0, 1], 0.0, 0.0).unwrap() - 1.039_720_770_839_918).abs() < 1e-12);
        let mut one = Array1::zeros(7);
        one[2] = 1.0;
        assert_eq!(loss(&[one], &[2], 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(loss(&[], &[], 0.0, 0.0), Err(ClassifierError::EmptyBatch));
    }

    #[test]
    fn gate_never_amplifies() {
        let mut store = ParamStore::new();
        let head = FusionHead::new(&mut store, 4, 6, 3, 2, 7, &mut seeded_rng(5));
        let mut tape = Tape::new();
        let hs = tape.constant(Array2::from_shape_fn((4, 6), |(i, j)| ((i * 6 + j) as f64).sin()));
        let hrf = tape.constant(Array2::from_shape_fn((3, 6), |(i, j)| ((i + j) as f64).cos()));
        let hr = tape.constant(Array2::from_shape_fn((4, 6), |(i, j)| i as f64 * 0.5 - j as f64 * 0.2));
        let f = head.fuse(&mut tape, &store, hs, hrf, hr, FusionSwitches::default());
        for (g, a) in tape.value(f.g_s).iter().zip(tape.value(f.a_s).iter()) {
            assert!(g.abs() <= a.abs());
        }
        assert_eq!(tape.shape(f.g_o), (1, 12));
    }
}
