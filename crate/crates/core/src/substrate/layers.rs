//! Reusable building blocks expressed on the [`Tape`].

use rand_chacha::ChaCha8Rng;

use super::params::{Init, ParamId, ParamSet};
use super::tape::{Tape, Var};

/// Default range of the uniform initializer.
pub const INIT_RANGE: f64 = 0.1;
/// Standard deviation of embedding initialization.
pub const EMB_STD: f64 = 0.1;

/// Single-layer LSTM cell. Gate order in the stacked weight matrix is
/// input, forget, output, candidate.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn register(params: &mut ParamSet, prefix: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = params.add(&format!("{prefix}.w"), 4 * hidden, input + hidden, Init::Uniform(INIT_RANGE), rng);
        let b = params.add(&format!("{prefix}.b"), 4 * hidden, 1, Init::Uniform(INIT_RANGE), rng);
        Self { w, b, input, hidden }
    }

    pub fn lookup(params: &ParamSet, prefix: &str, input: usize, hidden: usize) -> crate::Result<Self> {
        Ok(Self {
            w: params.id(&format!("{prefix}.w"))?,
            b: params.id(&format!("{prefix}.b"))?,
            input,
            hidden,
        })
    }

    /// One step; returns `(h', c')`.
    pub fn step(&self, t: &mut Tape<'_>, x: Var, h: Var, c: Var) -> (Var, Var) {
        let hd = self.hidden;
        let xh = t.concat(&[x, h]);
        let gates = t.affine(self.w, xh, self.b);
        let i = t.slice(gates, 0, hd);
        let f = t.slice(gates, hd, hd);
        let o = t.slice(gates, 2 * hd, hd);
        let g = t.slice(gates, 3 * hd, hd);
        let i = t.sigmoid(i);
        let f = t.sigmoid(f);
        let o = t.sigmoid(o);
        let g = t.tanh(g);
        let fc = t.mul(f, c);
        let ig = t.mul(i, g);
        let c2 = t.add(fc, ig);
        let tc = t.tanh(c2);
        let h2 = t.mul(o, tc);
        (h2, c2)
    }

    /// Runs over `xs` from `(h0, c0)`; returns every hidden state and the
    /// final `(h, c)`.
    pub fn run(&self, t: &mut Tape<'_>, xs: &[Var], h0: Var, c0: Var) -> (Vec<Var>, (Var, Var)) {
        let mut h = h0;
        let mut c = c0;
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            (h, c) = self.step(t, x, h, c);
            out.push(h);
        }
        (out, (h, c))
    }
}

/// Affine layer `W x + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn register(params: &mut ParamSet, prefix: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = params.add(&format!("{prefix}.w"), output, input, Init::Uniform(INIT_RANGE), rng);
        let b = params.add(&format!("{prefix}.b"), output, 1, Init::Uniform(INIT_RANGE), rng);
        Self { w, b }
    }

    pub fn lookup(params: &ParamSet, prefix: &str) -> crate::Result<Self> {
        Ok(Self {
            w: params.id(&format!("{prefix}.w"))?,
            b: params.id(&format!("{prefix}.b"))?,
        })
    }

    pub fn forward(&self, t: &mut Tape<'_>, x: Var) -> Var {
        t.affine(self.w, x, self.b)
    }
}
