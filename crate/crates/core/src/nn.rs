//! Multi-head attention on the tape.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::tape::{ParamId, ParamStore, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mha {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub dim: usize,
    pub heads: usize,
}

pub struct MhaOutput {
    pub out: Var,
    /// Attention weights per head, `queries x keys`.
    pub weights: Vec<Var>,
}

impl Mha {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(heads > 0 && dim % heads == 0, "{prefix}: {heads} heads do not divide {dim}");
        let mut block = |n: &str, store: &mut ParamStore| store.add_random(format!("{prefix}.{n}"), (dim, dim), dim, rng);
        Self {
            wq: block("wq", store),
            wk: block("wk", store),
            wv: block("wv", store),
            wo: block("wo", store),
            dim,
            heads,
        }
    }

    /// All four projections set to the identity.
    pub fn identity(store: &mut ParamStore, prefix: &str, dim: usize, heads: usize) -> Self {
        assert!(heads > 0 && dim % heads == 0, "{prefix}: {heads} heads do not divide {dim}");
        let mut block = |n: &str| store.add(format!("{prefix}.{n}"), Array2::eye(dim));
        Self {
            wq: block("wq"),
            wk: block("wk"),
            wv: block("wv"),
            wo: block("wo"),
            dim,
            heads,
        }
    }

    pub fn ids(&self) -> [ParamId; 4] {
        [self.wq, self.wk, self.wv, self.wo]
    }

    /// `query` is `m x dim`, `key`/`value` are `n x dim`. Keys at index
    /// `valid_keys..` are padding and get zero weight.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, query: Var, key: Var, value: Var, valid_keys: Option<usize>) -> MhaOutput {
        let (m, dq) = tape.shape(query);
        let (n, dk) = tape.shape(key);
        assert_eq!((dq, dk, tape.shape(value)), (self.dim, self.dim, (n, self.dim)), "attention shape mismatch");
        let [wq, wk, wv, wo] = self.ids().map(|id| tape.param(store, id));
        let q = tape.matmul(query, wq);
        let k = tape.matmul(key, wk);
        let v = tape.matmul(value, wv);
        let dh = self.dim / self.heads;
        let mask = valid_keys.filter(|&valid| valid < n).map(|valid| {
            assert!(valid > 0, "attention needs at least one real key");
            let mut mask = Array2::zeros((m, n));
            mask.columns_mut().into_iter().skip(valid).for_each(|mut c| c.fill(f64::NEG_INFINITY));
            tape.constant(mask)
        });
        let mut heads = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (a, b) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, a, b);
            let kh = tape.slice_cols(k, a, b);
            let vh = tape.slice_cols(v, a, b);
            let kt = tape.transpose(kh);
            let raw = tape.matmul(qh, kt);
            let mut scores = tape.scale(raw, 1.0 / (dh as f64).sqrt());
            if let Some(mask) = mask {
                scores = tape.add(scores, mask);
            }
            let w = tape.softmax_rows(scores);
            weights.push(w);
            heads.push(tape.matmul(w, vh));
        }
        let cat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) };
        MhaOutput {
            out: tape.matmul(cat, wo),
            weights,
        }
    }
}

/// Affine map of a row vector: `x W^T + b`, with `W` stored `out x in` and
/// `b` stored `1 x out`.
pub fn affine(tape: &mut Tape, store: &ParamStore, x: Var, w: ParamId, b: ParamId) -> Var {
    let w = tape.param(store, w);
    let b = tape.param(store, b);
    let wt = tape.transpose(w);
    let y = tape.matmul(x, wt);
    tape.add_row_bias(y, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{seeded_rng, softmax_rows};
    use ndarray::array;

    #[test]
    fn single_head_identity_matches_hand_attention() {
        let mut store = ParamStore::new();
        let mha = Mha::identity(&mut store, "a", 2, 1);
        let x = array![[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]];
        let mut tape = Tape::new();
        let q = tape.constant(x.slice(ndarray::s![0..1, ..]).to_owned());
        let kv = tape.constant(x.clone());
        let out = mha.forward(&mut tape, &store, q, kv, kv, None).out;

        let scores: Vec<f64> = (0..3).map(|j| x.row(0).dot(&x.row(j)) / 2f64.sqrt()).collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let expect: Vec<f64> = (0..2).map(|c| (0..3).map(|j| scores[j].exp() / z * x[[j, c]]).sum()).collect();
        for c in 0..2 {
            assert!((tape.value(out)[[0, c]] - expect[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_are_convex_and_padding_ignored() {
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(3);
        let mha = Mha::new(&mut store, "a", 8, 4, &mut rng);
        let mut tape = Tape::new();
        let q = tape.constant(Array2::from_shape_fn((2, 8), |(i, j)| (i + j) as f64 * 0.1));
        let k = tape.constant(Array2::from_shape_fn((5, 8), |(i, j)| ((i * 3 + j) % 7) as f64 * 0.2));
        let o = mha.forward(&mut tape, &store, q, k, k, Some(3));
        for w in o.weights {
            let w = tape.value(w);
            for row in w.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&x| x >= 0.0));
                assert_eq!(row[3], 0.0);
                assert_eq!(row[4], 0.0);
            }
        }
        assert_eq!(softmax_rows(&array![[0.0, f64::NEG_INFINITY]]), array![[1.0, 0.0]]);
    }
}
