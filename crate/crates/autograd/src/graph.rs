use std::collections::HashMap;

use ndarray::{s, Array2, Axis};

use crate::params::{Gradients, ParamId, ParamStore};
use crate::Mat;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    /// a · bᵀ
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Log(Var),
    Recip(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm(Var, Vec<f64>),
    Gather(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    SumAll(Var),
    SumCols(Var),
    Pick(Var, Vec<(usize, usize)>),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

/// Tape of recorded operations.
///
/// Shape errors inside the tape are programming errors and panic; callers
/// that accept external shapes validate them before recording.
pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    params: HashMap<(ParamId, bool), Var>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self { store, nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "scalar() on non-scalar node");
        m[[0, 0]]
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable parameter leaf. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        self.param_leaf(id, true)
    }

    /// Parameter read as a constant: no gradient reaches it.
    pub fn frozen_param(&mut self, id: ParamId) -> Var {
        self.param_leaf(id, false)
    }

    /// Parameter leaf that is trainable only when `trainable` is set.
    pub fn param_leaf(&mut self, id: ParamId, trainable: bool) -> Var {
        if let Some(v) = self.params.get(&(id, trainable)) {
            return *v;
        }
        let value = self.store.get(id).clone();
        let op = if trainable { Op::Param(id) } else { Op::Leaf };
        let v = self.push(value, op, trainable);
        self.params.insert((id, trainable), v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::MatMulNt(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add: shape mismatch");
        let value = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub: shape mismatch");
        let value = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul: shape mismatch");
        let value = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    /// Adds a 1×n row to every row of an m×n matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "add_row: bad row shape");
        let value = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(value, Op::AddRow(a, row), ng)
    }

    /// Multiplies every row of an m×n matrix elementwise by a 1×n row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "mul_row: bad row shape");
        let value = self.value(a) * self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(value, Op::MulRow(a, row), ng)
    }

    /// Multiplies every column of an m×n matrix elementwise by an m×1 column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (m, _) = self.shape(a);
        assert_eq!(self.shape(col), (m, 1), "mul_col: bad column shape");
        let value = self.value(a) * self.value(col);
        let ng = self.ng(a) || self.ng(col);
        self.push(value, Op::MulCol(a, col), ng)
    }

    /// `scale · a + shift`
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).mapv(|x| scale * x + shift);
        let ng = self.ng(a);
        self.push(value, Op::Affine(a, scale), ng)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.affine(a, factor, 0.0)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .mapv(|x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()));
        let ng = self.ng(a);
        self.push(value, Op::Gelu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let ng = self.ng(a);
        self.push(value, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        let ng = self.ng(a);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::ln);
        let ng = self.ng(a);
        self.push(value, Op::Log(a), ng)
    }

    /// Elementwise `1 / a`.
    pub fn recip(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| 1.0 / x);
        let ng = self.ng(a);
        self.push(value, Op::Recip(a), ng)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        let ng = self.ng(a);
        self.push(value, Op::Softmax(a), ng)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        for mut row in value.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        let ng = self.ng(a);
        self.push(value, Op::LogSoftmax(a), ng)
    }

    /// Row-wise standardization `(x - mean) / sqrt(var + eps)` with no
    /// affine part.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let n = x.ncols() as f64;
        let mut value = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in value.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let ng = self.ng(a);
        self.push(value, Op::LayerNorm(a, inv_std), ng)
    }

    /// Selects rows of `table` by index (embedding lookup).
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Var {
        let t = self.value(table);
        let mut value = Array2::zeros((indices.len(), t.ncols()));
        for (r, &i) in indices.iter().enumerate() {
            assert!(i < t.nrows(), "gather: index {i} out of range {}", t.nrows());
            value.row_mut(r).assign(&t.row(i));
        }
        let ng = self.ng(table);
        self.push(value, Op::Gather(table, indices.to_vec()), ng)
    }

    /// Stacks matrices vertically. Parts may have zero rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: no parts");
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows: column mismatch");
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(value, Op::ConcatRows(parts.to_vec()), ng)
    }

    /// Stacks matrices horizontally.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no parts");
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![start..end, ..]).to_owned();
        let ng = self.ng(a);
        self.push(value, Op::SliceRows(a, start), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.ng(a);
        self.push(value, Op::SliceCols(a, start), ng)
    }

    /// Sum of all entries as a 1×1 node.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.ng(a);
        self.push(value, Op::SumAll(a), ng)
    }

    /// Row sums as an m×1 column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.ng(a);
        self.push(value, Op::SumCols(a), ng)
    }

    /// Collects the listed `(row, col)` entries into a k×1 column.
    pub fn pick(&mut self, a: Var, at: &[(usize, usize)]) -> Var {
        let x = self.value(a);
        let value = Array2::from_shape_fn((at.len(), 1), |(k, _)| x[at[k]]);
        let ng = self.ng(a);
        self.push(value, Op::Pick(a, at.to_vec()), ng)
    }

    /// Gradient of the 1×1 node `output` with respect to every trainable
    /// parameter reached from it.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward from non-scalar node");
        let mut grads: Vec<Option<Mat>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(Array2::ones((1, 1)));
        let mut result = Gradients::new();

        for i in (0..=output.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let val = |v: Var| &self.nodes[v.0].value;
            let ng = |v: Var| self.nodes[v.0].needs_grad;
            let mut acc = |v: Var, g: Mat| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(x) => *x += &g,
                    slot @ None => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => result.add(*id, &dy),
                Op::MatMul(a, b) => {
                    if ng(*a) {
                        acc(*a, dy.dot(&val(*b).t()));
                    }
                    if ng(*b) {
                        acc(*b, val(*a).t().dot(&dy));
                    }
                }
                Op::MatMulNt(a, b) => {
                    if ng(*a) {
                        acc(*a, dy.dot(val(*b)));
                    }
                    if ng(*b) {
                        acc(*b, dy.t().dot(val(*a)));
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, dy.clone());
                    acc(*b, dy);
                }
                Op::Sub(a, b) => {
                    acc(*a, dy.clone());
                    acc(*b, -dy);
                }
                Op::Mul(a, b) => {
                    if ng(*a) {
                        acc(*a, &dy * val(*b));
                    }
                    if ng(*b) {
                        acc(*b, &dy * val(*a));
                    }
                }
                Op::AddRow(a, r) => {
                    if ng(*r) {
                        acc(*r, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    acc(*a, dy);
                }
                Op::MulRow(a, r) => {
                    if ng(*r) {
                        let g = (&dy * val(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        acc(*r, g);
                    }
                    if ng(*a) {
                        acc(*a, &dy * val(*r));
                    }
                }
                Op::MulCol(a, c) => {
                    if ng(*c) {
                        let g = (&dy * val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                        acc(*c, g);
                    }
                    if ng(*a) {
                        acc(*a, &dy * val(*c));
                    }
                }
                Op::Affine(a, scale) => acc(*a, dy * *scale),
                Op::Gelu(a) => {
                    let x = val(*a);
                    let d = x.mapv(|x| {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
                    });
                    acc(*a, dy * d);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(*a, dy * &y.mapv(|s| s * (1.0 - s)));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(*a, dy * &y.mapv(|t| 1.0 - t * t));
                }
                Op::Log(a) => acc(*a, dy / val(*a)),
                Op::Recip(a) => {
                    let y = &node.value;
                    acc(*a, -(dy * &(y * y)));
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let dot = (&dy * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(*a, y * &(dy - &dot));
                }
                Op::LogSoftmax(a) => {
                    let p = node.value.mapv(f64::exp);
                    let total = dy.sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(*a, dy - &(p * &total));
                }
                Op::LayerNorm(a, inv_std) => {
                    let xhat = &node.value;
                    let n = xhat.ncols() as f64;
                    let mut dx = dy.clone();
                    for (r, mut row) in dx.rows_mut().into_iter().enumerate() {
                        let g = dy.row(r);
                        let h = xhat.row(r);
                        let mean_g = g.sum() / n;
                        let mean_gh = g.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
                        let inv = inv_std[r];
                        for (c, v) in row.iter_mut().enumerate() {
                            *v = inv * (g[c] - mean_g - h[c] * mean_gh);
                        }
                    }
                    acc(*a, dx);
                }
                Op::Gather(t, idx) => {
                    let mut g = Array2::zeros(val(*t).dim());
                    for (r, &i) in idx.iter().enumerate() {
                        let mut row = g.row_mut(i);
                        row += &dy.row(r);
                    }
                    acc(*t, g);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let rows = val(*p).nrows();
                        if ng(*p) {
                            acc(*p, dy.slice(s![start..start + rows, ..]).to_owned());
                        }
                        start += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let cols = val(*p).ncols();
                        if ng(*p) {
                            acc(*p, dy.slice(s![.., start..start + cols]).to_owned());
                        }
                        start += cols;
                    }
                }
                Op::SliceRows(a, start) => {
                    let mut g = Array2::zeros(val(*a).dim());
                    g.slice_mut(s![*start..*start + dy.nrows(), ..]).assign(&dy);
                    acc(*a, g);
                }
                Op::SliceCols(a, start) => {
                    let mut g = Array2::zeros(val(*a).dim());
                    g.slice_mut(s![.., *start..*start + dy.ncols()]).assign(&dy);
                    acc(*a, g);
                }
                Op::SumAll(a) => acc(*a, Array2::from_elem(val(*a).dim(), dy[[0, 0]])),
                Op::SumCols(a) => {
                    let (m, n) = val(*a).dim();
                    acc(*a, Array2::from_shape_fn((m, n), |(r, _)| dy[[r, 0]]));
                }
                Op::Pick(a, at) => {
                    let mut g = Array2::zeros(val(*a).dim());
                    for (k, &pos) in at.iter().enumerate() {
                        g[pos] += dy[[k, 0]];
                    }
                    acc(*a, g);
                }
            }
        }
        result
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Mat) -> Mat {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{max_relative_error, numeric_gradient};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn random(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        Array2::from_shape_fn((rows, cols), |_| n.sample(&mut rng))
    }

    /// Checks every parameter of `store` against central differences of `f`.
    fn check(store: &ParamStore, f: impl Fn(&mut Graph) -> Var) {
        let mut g = Graph::new(store);
        let out = f(&mut g);
        let grads = g.backward(out);
        for id in store.ids() {
            let numeric = numeric_gradient(store, id, 1e-5, |s| {
                let mut g = Graph::new(s);
                let out = f(&mut g);
                g.scalar(out)
            });
            let analytic = grads.get(id).cloned().unwrap_or_else(|| Array2::zeros(store.get(id).dim()));
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-6, "param {} rel err {err}", store.name(id));
        }
    }

    #[test]
    fn matmul_family() {
        let mut s = ParamStore::new();
        let a = s.add("a", random(3, 4, 1)).unwrap();
        let b = s.add("b", random(4, 2, 2)).unwrap();
        let c = s.add("c", random(5, 4, 3)).unwrap();
        check(&s, |g| {
            let (a, b, c) = (g.param(a), g.param(b), g.param(c));
            let ab = g.matmul(a, b);
            let act = g.matmul_nt(a, c);
            let x = g.tanh(ab);
            let y = g.gelu(act);
            let sx = g.sum_all(x);
            let sy = g.sum_all(y);
            g.add(sx, sy)
        });
    }

    #[test]
    fn broadcast_and_elementwise() {
        let mut s = ParamStore::new();
        let a = s.add("a", random(3, 4, 4)).unwrap();
        let r = s.add("r", random(1, 4, 5)).unwrap();
        let c = s.add("c", random(3, 1, 6)).unwrap();
        let b = s.add("b", random(3, 4, 7)).unwrap();
        check(&s, |g| {
            let (a, r, c, b) = (g.param(a), g.param(r), g.param(c), g.param(b));
            let x = g.add_row(a, r);
            let x = g.mul_row(x, r);
            let x = g.mul_col(x, c);
            let x = g.mul(x, b);
            let x = g.sub(x, b);
            let x = g.affine(x, 0.3, 2.0);
            let x = g.sigmoid(x);
            let x = g.recip(x);
            let x = g.log(x);
            g.sum_all(x)
        });
    }

    #[test]
    fn softmax_layernorm_pick() {
        let mut s = ParamStore::new();
        let a = s.add("a", random(3, 5, 8)).unwrap();
        let w = s.add("w", random(3, 5, 9)).unwrap();
        check(&s, |g| {
            let (a, w) = (g.param(a), g.param(w));
            let n = g.layer_norm(a, 1e-5);
            let n = g.mul(n, w);
            let p = g.softmax(n);
            let lp = g.log_softmax(a);
            let picked = g.pick(p, &[(0, 1), (2, 4), (0, 1)]);
            let lpicked = g.pick(lp, &[(1, 0), (2, 3)]);
            let l = g.log(picked);
            let s1 = g.sum_all(l);
            let s2 = g.sum_all(lpicked);
            let rs = g.sum_cols(p);
            let rs = g.mul(rs, rs);
            let s3 = g.sum_all(rs);
            let t = g.add(s1, s2);
            g.add(t, s3)
        });
    }

    #[test]
    fn gather_concat_slice() {
        let mut s = ParamStore::new();
        let t = s.add("t", random(6, 3, 10)).unwrap();
        let u = s.add("u", random(2, 3, 11)).unwrap();
        let w = s.add("w", random(8, 3, 12)).unwrap();
        check(&s, |g| {
            let (t, u, w) = (g.param(t), g.param(u), g.param(w));
            let e = g.gather(t, &[1, 4, 1, 0, 5, 5]);
            let c = g.concat_rows(&[u, e]);
            let c = g.mul(c, w);
            let left = g.slice_cols(c, 0, 2);
            let right = g.slice_cols(c, 2, 3);
            let mid = g.slice_rows(left, 2, 6);
            let both = g.concat_cols(&[right, right]);
            let x = g.matmul_nt(mid, both);
            let x = g.tanh(x);
            g.sum_all(x)
        });
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let mut s = ParamStore::new();
        let a = s.add("a", array![[1.0, 2.0]]).unwrap();
        let b = s.add("b", array![[3.0, 4.0]]).unwrap();
        let mut g = Graph::new(&s);
        let (va, vb) = (g.param(a), g.frozen_param(b));
        let m = g.mul(va, vb);
        let out = g.sum_all(m);
        let grads = g.backward(out);
        assert_eq!(grads.get(a).unwrap(), &array![[3.0, 4.0]]);
        assert!(grads.get(b).is_none());
    }

    #[test]
    fn zero_row_concat_is_identity() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let empty = g.constant(Array2::zeros((0, 3)));
        let x = g.constant(array![[1.0, 2.0, 3.0]]);
        let c = g.concat_rows(&[empty, x]);
        assert_eq!(g.value(c), &array![[1.0, 2.0, 3.0]]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(array![[1000.0, -1000.0, 0.0], [1.0, 2.0, 3.0]]);
        let p = g.softmax(x);
        for row in g.value(p).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
