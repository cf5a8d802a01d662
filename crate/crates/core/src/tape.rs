//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every value on the tape is a 2-D matrix; vectors are `1 x d` rows and
//! scalars are `1 x 1`. Trainable parameters live in a [`ParamStore`] and are
//! pulled onto a tape with [`Tape::param`], which memoizes the leaf so a block
//! used by many examples in a batch is copied once.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{concatenate, s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Index of a parameter block in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Row-sparse constant mixing matrix: `out[i] = sum_j w_ij * in[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub n_cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn identity(n: usize) -> Self {
        Self {
            n_cols: n,
            rows: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    pub fn apply(&self, input: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), input.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let mut dst = out.row_mut(i);
            for &(j, w) in row {
                dst.scaled_add(w, &input.row(j));
            }
        }
        out
    }

    /// Product `self * other` (apply `other` first, then `self`).
    pub fn compose(&self, other: &SparseRows) -> SparseRows {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
                for &(j, w) in row {
                    for &(k, v) in &other.rows[j] {
                        *acc.entry(k).or_insert(0.0) += w * v;
                    }
                }
                acc.into_iter().collect()
            })
            .collect();
        SparseRows {
            n_cols: other.n_cols,
            rows,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBias(Var, Var),
    AddColBias(Var, Var),
    SoftmaxRows(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    MeanRows(Var),
    MeanCols(Var),
    Mix(Var, Arc<SparseRows>),
    Nll(Var, Vec<usize>),
    SumSquares(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Lower clamp applied to probabilities before taking logs in [`Tape::nll`].
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// Constant input (no gradient is reported for it).
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn row_vector(&mut self, values: &[f64]) -> Var {
        let a = Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape");
        self.constant(a)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    /// `x (r x c) + b (1 x c)` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Var {
        let value = self.value(x) + self.value(b);
        self.push(value, Op::AddRowBias(x, b))
    }

    /// `x (r x c) + b (r x 1)` broadcast over columns.
    pub fn add_col_bias(&mut self, x: Var, b: Var) -> Var {
        let value = self.value(x) + self.value(b);
        self.push(value, Op::AddColBias(x, b))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = concatenate(Axis(0), &views).expect("concat_rows: column counts differ");
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols(a, start, end))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(value, Op::SliceRows(a, start, end))
    }

    /// Mean over rows, giving `1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = m.sum_axis(Axis(0)).insert_axis(Axis(0)) / m.nrows() as f64;
        self.push(value, Op::MeanRows(a))
    }

    /// Mean over columns, giving `r x 1`.
    pub fn mean_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = m.sum_axis(Axis(1)).insert_axis(Axis(1)) / m.ncols() as f64;
        self.push(value, Op::MeanCols(a))
    }

    pub fn mix(&mut self, a: Var, mixing: Arc<SparseRows>) -> Var {
        assert_eq!(mixing.n_cols, self.value(a).nrows(), "mix: row count mismatch");
        let value = mixing.apply(self.value(a));
        self.push(value, Op::Mix(a, mixing))
    }

    /// Mean negative log-likelihood of `gold[b]` under probability row `b`,
    /// with probabilities clamped below at [`LOG_CLAMP`].
    pub fn nll(&mut self, probs: Var, gold: &[usize]) -> Var {
        let p = self.value(probs);
        assert_eq!(p.nrows(), gold.len(), "nll: batch size mismatch");
        let total: f64 = gold
            .iter()
            .enumerate()
            .map(|(b, &g)| -p[[b, g]].max(LOG_CLAMP).ln())
            .sum();
        let value = Array2::from_elem((1, 1), total / gold.len() as f64);
        self.push(value, Op::Nll(probs, gold.to_vec()))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).iter().map(|x| x * x).sum());
        self.push(value, Op::SumSquares(a))
    }

    /// Reverse pass from scalar `root`; returns gradients of all parameters
    /// that were pulled onto this tape.
    pub fn backward(&self, root: Var) -> HashMap<ParamId, Array2<f64>> {
        assert_eq!(self.shape(root), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, -g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::AddRowBias(x, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *x, g);
                    acc(&mut grads, *b, gb);
                }
                Op::AddColBias(x, b) => {
                    let gb = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut grads, *x, g);
                    acc(&mut grads, *b, gb);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Array2::zeros(y.dim());
                    for ((mut out, yr), gr) in ga.rows_mut().into_iter().zip(y.rows()).zip(g.rows()) {
                        let dot: f64 = yr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                        for ((o, &yy), &gg) in out.iter_mut().zip(yr.iter()).zip(gr.iter()) {
                            *o = yy * (gg - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = &g * &node.value.mapv(|y| y * (1.0 - y));
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        acc(&mut grads, *p, g.slice(s![start..start + h, ..]).to_owned());
                        start += h;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start, end) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    ga.slice_mut(s![*start..*end, ..]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.shape(*a);
                    let ga = g.broadcast((r, c)).expect("mean_rows grad").to_owned() / r as f64;
                    acc(&mut grads, *a, ga);
                }
                Op::MeanCols(a) => {
                    let (r, c) = self.shape(*a);
                    let ga = g.broadcast((r, c)).expect("mean_cols grad").to_owned() / c as f64;
                    acc(&mut grads, *a, ga);
                }
                Op::Mix(a, mixing) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    for (i, row) in mixing.rows.iter().enumerate() {
                        for &(j, w) in row {
                            ga.row_mut(j).scaled_add(w, &g.row(i));
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Nll(probs, gold) => {
                    let p = self.value(*probs);
                    let scale = g[[0, 0]] / gold.len() as f64;
                    let mut gp = Array2::zeros(p.dim());
                    for (b, &c) in gold.iter().enumerate() {
                        if p[[b, c]] > LOG_CLAMP {
                            gp[[b, c]] = -scale / p[[b, c]];
                        }
                    }
                    acc(&mut grads, *probs, gp);
                }
                Op::SumSquares(a) => {
                    let ga = self.value(*a) * (2.0 * g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
            }
        }

        self.param_vars
            .iter()
            .filter_map(|(id, v)| grads.get(v.0).and_then(|g| g.clone()).map(|g| (*id, g)))
            .collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax; `-inf` entries receive zero weight.
pub fn softmax_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    out
}

/// Named, shaped parameter blocks with a trainable flag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    trainable: Vec<bool>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        self.trainable.push(true);
        ParamId(self.values.len() - 1)
    }

    /// Gaussian init with standard deviation `1/sqrt(fan_in)`.
    pub fn add_random(&mut self, name: impl Into<String>, shape: (usize, usize), fan_in: usize, rng: &mut ChaCha8Rng) -> ParamId {
        let std = 1.0 / (fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let value = Array2::from_shape_simple_fn(shape, || normal.sample(rng));
        self.add(name, value)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: (usize, usize)) -> ParamId {
        self.add(name, Array2::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn set(&mut self, id: ParamId, value: Array2<f64>) {
        assert_eq!(value.dim(), self.values[id.0].dim(), "set: shape change for {}", self.names[id.0]);
        self.values[id.0] = value;
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.trainable[id.0] = trainable;
    }

    /// Number of scalar entries in trainable blocks.
    pub fn trainable_count(&self) -> usize {
        self.ids().filter(|id| self.is_trainable(*id)).map(|id| self.values[id.0].len()).sum()
    }

    pub fn total_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adam with bias correction; only updates trainable blocks.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: HashMap<ParamId, Array2<f64>>,
    second: HashMap<ParamId, Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: HashMap::new(),
            second: HashMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Moment estimates keyed by parameter, sorted by id.
    pub fn moments(&self) -> Vec<(ParamId, Array2<f64>, Array2<f64>)> {
        let mut ids: Vec<_> = self.first.keys().copied().collect();
        ids.sort();
        ids.into_iter().map(|id| (id, self.first[&id].clone(), self.second[&id].clone())).collect()
    }

    pub fn restore(&mut self, steps: u64, moments: Vec<(ParamId, Array2<f64>, Array2<f64>)>) {
        self.step = steps;
        self.first.clear();
        self.second.clear();
        for (id, m, v) in moments {
            self.first.insert(id, m);
            self.second.insert(id, v);
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &HashMap<ParamId, Array2<f64>>) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut ids: Vec<_> = grads.keys().copied().collect();
        ids.sort();
        for id in ids {
            if !store.is_trainable(id) {
                continue;
            }
            let g = &grads[&id];
            let m = self.first.entry(id).or_insert_with(|| Array2::zeros(g.dim()));
            m.zip_mut_with(g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            let v = self.second.entry(id).or_insert_with(|| Array2::zeros(g.dim()));
            v.zip_mut_with(g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            let (lr, eps) = (self.lr, self.eps);
            let m = &self.first[&id];
            let v = &self.second[&id];
            let p = store.value_mut(id);
            ndarray::Zip::from(p).and(m).and(v).for_each(|p, &m, &v| {
                *p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn finite_diff(store: &ParamStore, id: ParamId, f: &dyn Fn(&ParamStore) -> f64) -> Array2<f64> {
        let h = 1e-6;
        let mut out = Array2::zeros(store.value(id).dim());
        for idx in 0..out.len() {
            let (r, c) = (idx / out.ncols(), idx % out.ncols());
            let mut plus = store.clone();
            plus.value_mut(id)[[r, c]] += h;
            let mut minus = store.clone();
            minus.value_mut(id)[[r, c]] -= h;
            out[[r, c]] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    #[test]
    fn softmax_rows_are_convex() {
        let m = array![[1.0, 2.0, 3.0], [-5.0, 0.0, 5.0]];
        let s = softmax_rows(&m);
        for row in s.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn masked_softmax_zeroes_neg_infinity() {
        let m = array![[1.0, f64::NEG_INFINITY, 3.0]];
        let s = softmax_rows(&m);
        assert_eq!(s[[0, 1]], 0.0);
        assert!((s.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = seeded_rng(3);
        let mut store = ParamStore::new();
        let a = store.add_random("a", (3, 4), 1, &mut rng);
        let b = store.add_random("b", (4, 2), 1, &mut rng);
        let bias_row = store.add_random("br", (1, 2), 1, &mut rng);
        let bias_col = store.add_random("bc", (3, 1), 1, &mut rng);
        let mixing = Arc::new(SparseRows {
            n_cols: 3,
            rows: vec![vec![(1, 0.5), (2, 0.5)], vec![(0, 1.0)], vec![(0, 0.25), (1, 0.75)]],
        });

        let forward = |store: &ParamStore| -> (Tape, Var) {
            let mut t = Tape::new();
            let a = t.param(store, a);
            let b = t.param(store, b);
            let br = t.param(store, bias_row);
            let bc = t.param(store, bias_col);
            let ab = t.matmul(a, b);
            let x = t.add_row_bias(ab, br);
            let x = t.add_col_bias(x, bc);
            let x = t.mix(x, mixing.clone());
            let sig = t.sigmoid(x);
            let prod = t.mul(x, sig);
            let tr = t.transpose(prod);
            let tt = t.transpose(tr);
            let sm = t.softmax_rows(tt);
            let left = t.slice_cols(a, 0, 2);
            let top = t.slice_rows(left, 0, 2);
            let cat = t.concat_rows(&[sm, top]);
            let wide = t.concat_cols(&[cat, cat]);
            let mr = t.mean_rows(wide);
            let mc = t.mean_cols(wide);
            let diff = t.sub(mr, mr);
            let scaled = t.scale(mc, 3.0);
            let sq = t.sum_squares(scaled);
            let mrsq = t.sum_squares(mr);
            let s1 = t.add(sq, mrsq);
            let d = t.sum_squares(diff);
            let s2 = t.add(s1, d);
            let nll = t.nll(sm, &[0, 1, 1]);
            let root = t.add(s2, nll);
            (t, root)
        };
        let (tape, root) = forward(&store);
        let grads = tape.backward(root);
        let f = |s: &ParamStore| {
            let (t, r) = forward(s);
            t.scalar(r)
        };
        for id in store.ids() {
            let numeric = finite_diff(&store, id, &f);
            let analytic = &grads[&id];
            let err = (analytic - &numeric).mapv(f64::abs).fold(0.0f64, |m, &x| m.max(x));
            assert!(err < 1e-6, "{}: max err {err}", store.name(id));
        }
    }

    #[test]
    fn sparse_compose_matches_sequential_apply() {
        let p = SparseRows {
            n_cols: 2,
            rows: vec![vec![(1, 1.0)], vec![(0, 0.5), (1, 0.5)]],
        };
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let twice = p.apply(&p.apply(&x));
        assert_eq!(p.compose(&p).apply(&x), twice);
    }

    #[test]
    fn adam_skips_frozen_blocks() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[1.0]]);
        store.set_trainable(w, false);
        let mut grads = HashMap::new();
        grads.insert(w, array![[1.0]]);
        Adam::new(0.1).step(&mut store, &grads);
        assert_eq!(store.value(w)[[0, 0]], 1.0);
    }
}
