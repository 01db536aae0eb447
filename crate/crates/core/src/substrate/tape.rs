//! Reverse-mode automatic differentiation over dense `f64` vectors and
//! matrices.
//!
//! A [`Tape`] records every operation of a forward pass. Parameters are
//! referenced from a borrowed [`ParamSet`] rather than copied, so building a
//! tape over a large embedding table is cheap. [`Tape::backward`] walks the
//! recorded nodes in reverse and returns gradients for every parameter that
//! influenced the root.

use super::params::{Grads, ParamId, ParamSet};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(ParamId),
    /// One row of a parameter matrix (embedding lookup).
    Row(ParamId, usize),
    MatVec(Var, Var),
    MatTVec(Var, Var),
    /// `a · bᵀ` for `a: n x d`, `b: m x d`.
    MatMulT(Var, Var),
    /// `out_j = v · tanh(m_j + q)`; caches the tanh values row by row.
    Additive(Var, Var, Var, Vec<f64>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    /// Vector times a length-1 node.
    MulScalar(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Dot(Var, Var),
    Sum(Var),
    Mean(Vec<Var>),
    Softmax(Var, Option<Vec<bool>>),
    LogSoftmax(Var, Option<Vec<bool>>),
    /// Elementwise max over same-length vectors; stores the winning input per entry.
    MaxPool(Vec<Var>, Vec<usize>),
    Stack(Vec<Var>),
    Scatter(Var, Vec<usize>),
    Pick(Var, usize),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    /// Empty for `Op::Param`; the value lives in the borrowed `ParamSet`.
    value: Vec<f64>,
    requires_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>, requires_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => &self.params.get(id).data,
            _ => &node.value,
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.len(), 1);
        val[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].rows * self.nodes[v.0].cols
    }

    // ---- leaves -------------------------------------------------------

    /// Constant vector; never receives a gradient.
    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        let n = value.len();
        self.push(Op::Const, n, 1, value, false)
    }

    pub fn constant_matrix(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(rows * cols, value.len());
        self.push(Op::Const, rows, cols, value, false)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(vec![0.0; n])
    }

    /// A parameter tensor. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let t = self.params.get(id);
        let v = self.push(Op::Param(id), t.rows, t.cols, Vec::new(), t.trainable);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Row `row` of a parameter matrix, as a vector.
    pub fn row(&mut self, id: ParamId, row: usize) -> Var {
        let t = self.params.get(id);
        let value = t.row(row).to_vec();
        let cols = t.cols;
        self.push(Op::Row(id, row), cols, 1, value, t.trainable)
    }

    /// Stops gradient flow: a constant copy of `v`'s current value.
    pub fn detach(&mut self, v: Var) -> Var {
        let (r, c) = self.shape(v);
        let value = self.value(v).to_vec();
        self.push(Op::Const, r, c, value, false)
    }

    // ---- linear algebra ----------------------------------------------

    /// `m · x` for an `r x c` matrix and a length-`c` vector.
    pub fn matvec(&mut self, m: Var, x: Var) -> Var {
        let (r, c) = self.shape(m);
        assert_eq!(self.dim(x), c, "matvec: {}x{} · {}", r, c, self.dim(x));
        let mv = self.value(m);
        let xv = self.value(x);
        let out: Vec<f64> = mv
            .chunks_exact(c)
            .map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        let rg = self.rg(m) || self.rg(x);
        self.push(Op::MatVec(m, x), r, 1, out, rg)
    }

    /// `mᵀ · x` for an `r x c` matrix and a length-`r` vector.
    pub fn matvec_t(&mut self, m: Var, x: Var) -> Var {
        let (r, c) = self.shape(m);
        assert_eq!(self.dim(x), r, "matvec_t: ({}x{})ᵀ · {}", r, c, self.dim(x));
        let mv = self.value(m);
        let xv = self.value(x);
        let mut out = vec![0.0; c];
        for (row, &xi) in mv.chunks_exact(c).zip(xv) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * xi;
            }
        }
        let rg = self.rg(m) || self.rg(x);
        self.push(Op::MatTVec(m, x), c, 1, out, rg)
    }

    /// `a · bᵀ`: projects every row of `a` (n x d) by `b` (m x d).
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (n, d) = self.shape(a);
        let (m, d2) = self.shape(b);
        assert_eq!(d, d2, "matmul_t: {}x{} · ({}x{})ᵀ", n, d, m, d2);
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(n * m);
        for arow in av.chunks_exact(d) {
            for brow in bv.chunks_exact(d) {
                out.push(arow.iter().zip(brow).map(|(x, y)| x * y).sum());
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::MatMulT(a, b), n, m, out, rg)
    }

    /// Additive attention scores `v · tanh(m_j + q)` for every row `m_j`.
    pub fn additive_scores(&mut self, m: Var, q: Var, v: Var) -> Var {
        let (n, d) = self.shape(m);
        assert_eq!(self.dim(q), d);
        assert_eq!(self.dim(v), d);
        let mv = self.value(m);
        let qv = self.value(q);
        let vv = self.value(v);
        let mut cache = Vec::with_capacity(n * d);
        let mut out = Vec::with_capacity(n);
        for row in mv.chunks_exact(d) {
            let mut s = 0.0;
            for k in 0..d {
                let th = (row[k] + qv[k]).tanh();
                cache.push(th);
                s += vv[k] * th;
            }
            out.push(s);
        }
        let rg = self.rg(m) || self.rg(q) || self.rg(v);
        self.push(Op::Additive(m, q, v, cache), n, 1, out, rg)
    }

    /// `w · x + b`.
    pub fn affine(&mut self, w: ParamId, x: Var, b: ParamId) -> Var {
        let wv = self.param(w);
        let bv = self.param(b);
        let y = self.matvec(wv, x);
        self.add(y, bv)
    }

    /// `w · x` without bias.
    pub fn linear(&mut self, w: ParamId, x: Var) -> Var {
        let wv = self.param(w);
        self.matvec(wv, x)
    }

    // ---- elementwise --------------------------------------------------

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(self.dim(a), self.dim(b), "elementwise shape mismatch");
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(a) || self.rg(b);
        self.push(op, r, c, out, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out: Vec<f64> = self.value(a).iter().map(|&x| f(x)).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(a);
        self.push(op, r, c, out, rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| x * k, Op::Scale(a, k))
    }

    /// `a + k` elementwise.
    pub fn shift(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| x + k, Op::Shift(a))
    }

    /// `1 - a` elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.shift(neg, 1.0)
    }

    /// Vector `a` scaled by the single value held in `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        assert_eq!(self.dim(s), 1);
        let k = self.value(s)[0];
        let out: Vec<f64> = self.value(a).iter().map(|x| x * k).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(a) || self.rg(s);
        self.push(Op::MulScalar(a, s), r, c, out, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    // ---- structure ----------------------------------------------------

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let n = out.len();
        self.push(Op::Concat(parts.to_vec()), n, 1, out, rg)
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a)[start..start + len].to_vec();
        let rg = self.rg(a);
        self.push(Op::Slice(a, start), len, 1, out, rg)
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty());
        let cols = self.dim(rows[0]);
        let mut out = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            assert_eq!(self.dim(r), cols, "stack: ragged rows");
            out.extend_from_slice(self.value(r));
        }
        let rg = rows.iter().any(|&r| self.rg(r));
        self.push(Op::Stack(rows.to_vec()), rows.len(), cols, out, rg)
    }

    /// `out[map[i]] += a[i]` into a zero vector of length `out_len`.
    pub fn scatter(&mut self, a: Var, map: &[usize], out_len: usize) -> Var {
        assert_eq!(self.dim(a), map.len());
        let mut out = vec![0.0; out_len];
        for (&v, &m) in self.value(a).iter().zip(map) {
            out[m] += v;
        }
        let rg = self.rg(a);
        self.push(Op::Scatter(a, map.to_vec()), out_len, 1, out, rg)
    }

    pub fn pick(&mut self, a: Var, idx: usize) -> Var {
        let v = self.value(a)[idx];
        let rg = self.rg(a);
        self.push(Op::Pick(a, idx), 1, 1, vec![v], rg)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dim(a), self.dim(b));
        let v: f64 = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::Dot(a, b), 1, 1, vec![v], rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v: f64 = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(Op::Sum(a), 1, 1, vec![v], rg)
    }

    /// Sum of several scalars (or equal-length vectors).
    pub fn add_all(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = self.add(acc, p);
        }
        acc
    }

    /// Elementwise mean of equal-length vectors.
    pub fn mean(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.dim(parts[0]);
        let mut out = vec![0.0; n];
        for &p in parts {
            assert_eq!(self.dim(p), n);
            for (o, v) in out.iter_mut().zip(self.value(p)) {
                *o += v;
            }
        }
        let k = parts.len() as f64;
        out.iter_mut().for_each(|v| *v /= k);
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Op::Mean(parts.to_vec()), n, 1, out, rg)
    }

    /// Elementwise max over equal-length vectors (ties go to the earliest input).
    pub fn max_pool(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.dim(parts[0]);
        let mut out = self.value(parts[0]).to_vec();
        let mut arg = vec![0usize; n];
        for (k, &p) in parts.iter().enumerate().skip(1) {
            for (i, &v) in self.value(p).iter().enumerate() {
                if v > out[i] {
                    out[i] = v;
                    arg[i] = k;
                }
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Op::MaxPool(parts.to_vec(), arg), n, 1, out, rg)
    }

    /// Softmax; entries with `mask[i] == false` are excluded and get
    /// probability exactly zero.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let out = softmax_values(self.value(a), mask);
        let (r, c) = self.shape(a);
        let rg = self.rg(a);
        self.push(Op::Softmax(a, mask.map(<[bool]>::to_vec)), r, c, out, rg)
    }

    /// Log-softmax; masked entries hold `-inf`.
    pub fn log_softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let out = log_softmax_values(self.value(a), mask);
        let (r, c) = self.shape(a);
        let rg = self.rg(a);
        self.push(Op::LogSoftmax(a, mask.map(<[bool]>::to_vec)), r, c, out, rg)
    }

    // ---- backward -----------------------------------------------------

    /// Gradients of the scalar `root` with respect to every trainable
    /// parameter reached from it.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.dim(root), 1, "backward root must be a scalar");
        let mut grads = Grads::for_params(self.params);
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        node_grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = node_grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Const => {}
                Op::Param(id) => {
                    let dst = grads.entry(*id, g.len());
                    dst.iter_mut().zip(&g).for_each(|(d, s)| *d += s);
                }
                Op::Row(id, row) => {
                    let t = self.params.get(*id);
                    let dst = grads.entry(*id, t.len());
                    let off = row * t.cols;
                    dst[off..off + t.cols]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(d, s)| *d += s);
                }
                Op::MatVec(m, x) => {
                    let (_, c) = self.shape(*m);
                    if self.rg(*m) {
                        let xv = self.value(*x);
                        let dm = acc(&mut node_grads, self, *m);
                        for (row, &gi) in dm.chunks_exact_mut(c).zip(&g) {
                            if gi != 0.0 {
                                row.iter_mut().zip(xv).for_each(|(d, &xj)| *d += gi * xj);
                            }
                        }
                    }
                    if self.rg(*x) {
                        let mv = self.value(*m);
                        let dx = acc(&mut node_grads, self, *x);
                        for (row, &gi) in mv.chunks_exact(c).zip(&g) {
                            if gi != 0.0 {
                                dx.iter_mut().zip(row).for_each(|(d, &mij)| *d += gi * mij);
                            }
                        }
                    }
                }
                Op::MatTVec(m, x) => {
                    // y_j = Σ_i m_ij x_i
                    let (_, c) = self.shape(*m);
                    if self.rg(*m) {
                        let xv = self.value(*x);
                        let dm = acc(&mut node_grads, self, *m);
                        for (row, &xi) in dm.chunks_exact_mut(c).zip(xv) {
                            row.iter_mut().zip(&g).for_each(|(d, &gj)| *d += xi * gj);
                        }
                    }
                    if self.rg(*x) {
                        let mv = self.value(*m);
                        let dx = acc(&mut node_grads, self, *x);
                        for (d, row) in dx.iter_mut().zip(mv.chunks_exact(c)) {
                            *d += row.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
                Op::MatMulT(a, b) => {
                    let (_, d) = self.shape(*a);
                    let m = node.cols;
                    if self.rg(*a) {
                        let bv = self.value(*b);
                        let da = acc(&mut node_grads, self, *a);
                        for (darow, grow) in da.chunks_exact_mut(d).zip(g.chunks_exact(m)) {
                            for (brow, &gij) in bv.chunks_exact(d).zip(grow) {
                                if gij != 0.0 {
                                    darow.iter_mut().zip(brow).for_each(|(x, y)| *x += gij * y);
                                }
                            }
                        }
                    }
                    if self.rg(*b) {
                        let av = self.value(*a);
                        let db = acc(&mut node_grads, self, *b);
                        for (arow, grow) in av.chunks_exact(d).zip(g.chunks_exact(m)) {
                            for (dbrow, &gij) in db.chunks_exact_mut(d).zip(grow) {
                                if gij != 0.0 {
                                    dbrow.iter_mut().zip(arow).for_each(|(x, y)| *x += gij * y);
                                }
                            }
                        }
                    }
                }
                Op::Additive(m, q, v, cache) => {
                    let (_, d) = self.shape(*m);
                    let vv = self.value(*v).to_vec();
                    // d(pre-activation) per row
                    let mut dpre = vec![0.0; cache.len()];
                    for (j, &gj) in g.iter().enumerate() {
                        for k in 0..d {
                            let th = cache[j * d + k];
                            dpre[j * d + k] = gj * vv[k] * (1.0 - th * th);
                        }
                    }
                    if self.rg(*v) {
                        let dv = acc(&mut node_grads, self, *v);
                        for (j, &gj) in g.iter().enumerate() {
                            for k in 0..d {
                                dv[k] += gj * cache[j * d + k];
                            }
                        }
                    }
                    if self.rg(*q) {
                        let dq = acc(&mut node_grads, self, *q);
                        for row in dpre.chunks_exact(d) {
                            dq.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                        }
                    }
                    if self.rg(*m) {
                        let dm = acc(&mut node_grads, self, *m);
                        dm.iter_mut().zip(&dpre).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Add(a, b) => {
                    add_into(&mut node_grads, self, *a, &g, 1.0);
                    add_into(&mut node_grads, self, *b, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(&mut node_grads, self, *a, &g, 1.0);
                    add_into(&mut node_grads, self, *b, &g, -1.0);
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        let bv = self.value(*b);
                        let da = acc(&mut node_grads, self, *a);
                        da.iter_mut().zip(&g).zip(bv).for_each(|((d, gi), y)| *d += gi * y);
                    }
                    if self.rg(*b) {
                        let av = self.value(*a);
                        let db = acc(&mut node_grads, self, *b);
                        db.iter_mut().zip(&g).zip(av).for_each(|((d, gi), x)| *d += gi * x);
                    }
                }
                Op::Scale(a, k) => add_into(&mut node_grads, self, *a, &g, *k),
                Op::Shift(a) => add_into(&mut node_grads, self, *a, &g, 1.0),
                Op::MulScalar(a, s) => {
                    let k = self.value(*s)[0];
                    add_into(&mut node_grads, self, *a, &g, k);
                    if self.rg(*s) {
                        let av = self.value(*a);
                        let ds: f64 = g.iter().zip(av).map(|(x, y)| x * y).sum();
                        acc(&mut node_grads, self, *s)[0] += ds;
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let da = acc(&mut node_grads, self, *a);
                    da.iter_mut().zip(&g).zip(y).for_each(|((d, gi), yi)| *d += gi * (1.0 - yi * yi));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let da = acc(&mut node_grads, self, *a);
                    da.iter_mut().zip(&g).zip(y).for_each(|((d, gi), yi)| *d += gi * yi * (1.0 - yi));
                }
                Op::Relu(a) => {
                    let y = &node.value;
                    let da = acc(&mut node_grads, self, *a);
                    da.iter_mut().zip(&g).zip(y).for_each(|((d, gi), yi)| {
                        if *yi > 0.0 {
                            *d += gi
                        }
                    });
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    let da = acc(&mut node_grads, self, *a);
                    da.iter_mut().zip(&g).zip(y).for_each(|((d, gi), yi)| *d += gi * yi);
                }
                Op::Ln(a) => {
                    let x = self.value(*a).to_vec();
                    let da = acc(&mut node_grads, self, *a);
                    da.iter_mut().zip(&g).zip(&x).for_each(|((d, gi), xi)| *d += gi / xi);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.dim(p);
                        if self.rg(p) {
                            let dp = acc(&mut node_grads, self, p);
                            dp.iter_mut().zip(&g[off..off + n]).for_each(|(d, s)| *d += s);
                        }
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let da = acc(&mut node_grads, self, *a);
                    da[*start..*start + g.len()]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(d, s)| *d += s);
                }
                Op::Stack(rows) => {
                    let cols = node.cols;
                    for (k, &r) in rows.iter().enumerate() {
                        if self.rg(r) {
                            let dr = acc(&mut node_grads, self, r);
                            dr.iter_mut()
                                .zip(&g[k * cols..(k + 1) * cols])
                                .for_each(|(d, s)| *d += s);
                        }
                    }
                }
                Op::Scatter(a, map) => {
                    let da = acc(&mut node_grads, self, *a);
                    da.iter_mut().zip(map).for_each(|(d, &m)| *d += g[m]);
                }
                Op::Pick(a, idx) => {
                    acc(&mut node_grads, self, *a)[*idx] += g[0];
                }
                Op::Dot(a, b) => {
                    let k = g[0];
                    if self.rg(*a) {
                        let bv = self.value(*b);
                        let da = acc(&mut node_grads, self, *a);
                        da.iter_mut().zip(bv).for_each(|(d, y)| *d += k * y);
                    }
                    if self.rg(*b) {
                        let av = self.value(*a);
                        let db = acc(&mut node_grads, self, *b);
                        db.iter_mut().zip(av).for_each(|(d, x)| *d += k * x);
                    }
                }
                Op::Sum(a) => {
                    let k = g[0];
                    acc(&mut node_grads, self, *a).iter_mut().for_each(|d| *d += k);
                }
                Op::Mean(parts) => {
                    let k = 1.0 / parts.len() as f64;
                    for &p in parts {
                        add_into(&mut node_grads, self, p, &g, k);
                    }
                }
                Op::MaxPool(parts, arg) => {
                    for (i, &k) in arg.iter().enumerate() {
                        let p = parts[k];
                        if self.rg(p) {
                            acc(&mut node_grads, self, p)[i] += g[i];
                        }
                    }
                }
                Op::Softmax(a, mask) => {
                    let y = &node.value;
                    let inner: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                    let da = acc(&mut node_grads, self, *a);
                    for (i, d) in da.iter_mut().enumerate() {
                        if mask.as_ref().is_none_or(|m| m[i]) {
                            *d += y[i] * (g[i] - inner);
                        }
                    }
                }
                Op::LogSoftmax(a, mask) => {
                    let y = &node.value;
                    let live = |i: usize| mask.as_ref().is_none_or(|m| m[i]);
                    let total: f64 = (0..g.len()).filter(|&i| live(i)).map(|i| g[i]).sum();
                    let da = acc(&mut node_grads, self, *a);
                    for (i, d) in da.iter_mut().enumerate() {
                        if live(i) {
                            *d += g[i] - y[i].exp() * total;
                        }
                    }
                }
            }
        }
        grads
    }
}

fn acc<'a>(node_grads: &'a mut [Option<Vec<f64>>], tape: &Tape<'_>, v: Var) -> &'a mut Vec<f64> {
    let n = tape.dim(v);
    node_grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

fn add_into(node_grads: &mut [Option<Vec<f64>>], tape: &Tape<'_>, v: Var, g: &[f64], k: f64) {
    if !tape.rg(v) {
        return;
    }
    let dv = acc(node_grads, tape, v);
    dv.iter_mut().zip(g).for_each(|(d, s)| *d += k * s);
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable (optionally masked) softmax on plain values.
pub fn softmax_values(x: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let live = |i: usize| mask.is_none_or(|m| m[i]);
    let max = (0..x.len())
        .filter(|&i| live(i))
        .map(|i| x[i])
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "softmax over an empty or non-finite support");
    let mut out: Vec<f64> = (0..x.len())
        .map(|i| if live(i) { (x[i] - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}

pub fn log_softmax_values(x: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let live = |i: usize| mask.is_none_or(|m| m[i]);
    let max = (0..x.len())
        .filter(|&i| live(i))
        .map(|i| x[i])
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "log-softmax over an empty or non-finite support");
    let lse = max
        + (0..x.len())
            .filter(|&i| live(i))
            .map(|i| (x[i] - max).exp())
            .sum::<f64>()
            .ln();
    (0..x.len())
        .map(|i| if live(i) { x[i] - lse } else { f64::NEG_INFINITY })
        .collect()
}
