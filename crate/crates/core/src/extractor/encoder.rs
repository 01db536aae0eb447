//! Hierarchical sentence representation: a convolutional encoder per
//! sentence followed by a bidirectional LSTM across sentences.

use crate::corpus::PAD;
use crate::substrate::layers::{Linear, Lstm, EMB_STD, INIT_RANGE};
use crate::substrate::{Init, ParamId, ParamSet, Rng, Tape, Var};

/// Convolution window sizes; every sentence is padded to the largest.
pub const WINDOWS: [usize; 3] = [3, 4, 5];

#[derive(Debug, Clone, Copy)]
pub struct SentenceEncoder {
    pub emb: ParamId,
    pub convs: [Linear; 3],
    pub fwd: Lstm,
    pub bwd: Lstm,
    pub fwd_h0: ParamId,
    pub fwd_c0: ParamId,
    pub bwd_h0: ParamId,
    pub bwd_c0: ParamId,
    pub emb_dim: usize,
    pub filters: usize,
    pub hidden: usize,
}

/// Per-sentence vectors of one document.
#[derive(Debug, Clone)]
pub struct SentenceReps {
    /// Convolutional sentence vectors, `3 * filters` wide.
    pub r: Vec<Var>,
    /// Context-aware vectors, forward state then backward state, `2 * hidden` wide.
    pub h: Vec<Var>,
}

impl SentenceEncoder {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        vocab_size: usize,
        emb_dim: usize,
        filters: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        let emb = params.add(&format!("{prefix}.emb"), vocab_size, emb_dim, Init::Normal(EMB_STD), rng);
        let convs = WINDOWS.map(|k| Linear::register(params, &format!("{prefix}.conv{k}"), k * emb_dim, filters, rng));
        let r_dim = WINDOWS.len() * filters;
        let fwd = Lstm::register(params, &format!("{prefix}.fwd"), r_dim, hidden, rng);
        let bwd = Lstm::register(params, &format!("{prefix}.bwd"), r_dim, hidden, rng);
        let mut init = |name: &str| params.add(&format!("{prefix}.{name}"), hidden, 1, Init::Uniform(INIT_RANGE), rng);
        let fwd_h0 = init("fwd.h0");
        let fwd_c0 = init("fwd.c0");
        let bwd_h0 = init("bwd.h0");
        let bwd_c0 = init("bwd.c0");
        Self {
            emb,
            convs,
            fwd,
            bwd,
            fwd_h0,
            fwd_c0,
            bwd_h0,
            bwd_c0,
            emb_dim,
            filters,
            hidden,
        }
    }

    pub fn lookup(params: &ParamSet, prefix: &str, emb_dim: usize, filters: usize, hidden: usize) -> crate::Result<Self> {
        let r_dim = WINDOWS.len() * filters;
        let id = |name: &str| params.id(&format!("{prefix}.{name}"));
        Ok(Self {
            emb: id("emb")?,
            convs: [
                Linear::lookup(params, &format!("{prefix}.conv3"))?,
                Linear::lookup(params, &format!("{prefix}.conv4"))?,
                Linear::lookup(params, &format!("{prefix}.conv5"))?,
            ],
            fwd: Lstm::lookup(params, &format!("{prefix}.fwd"), r_dim, hidden)?,
            bwd: Lstm::lookup(params, &format!("{prefix}.bwd"), r_dim, hidden)?,
            fwd_h0: id("fwd.h0")?,
            fwd_c0: id("fwd.c0")?,
            bwd_h0: id("bwd.h0")?,
            bwd_c0: id("bwd.c0")?,
            emb_dim,
            filters,
            hidden,
        })
    }

    pub fn r_dim(&self) -> usize {
        WINDOWS.len() * self.filters
    }

    pub fn h_dim(&self) -> usize {
        2 * self.hidden
    }

    /// `r_j`: concatenation over window sizes of max-over-time(relu(conv)).
    /// Sentences shorter than the largest window are padded with zero vectors.
    pub fn encode_sentence(&self, t: &mut Tape<'_>, tokens: &[usize]) -> Var {
        let max_w = WINDOWS[WINDOWS.len() - 1];
        let len = tokens.len().max(max_w);
        let embs: Vec<Var> = (0..len)
            .map(|i| match tokens.get(i) {
                Some(&tok) if tok != PAD => t.row(self.emb, tok),
                _ => t.zeros(self.emb_dim),
            })
            .collect();
        let pooled: Vec<Var> = WINDOWS
            .iter()
            .zip(&self.convs)
            .map(|(&k, conv)| {
                let acts: Vec<Var> = (0..=len - k)
                    .map(|p| {
                        let window = t.concat(&embs[p..p + k]);
                        let pre = conv.forward(t, window);
                        t.relu(pre)
                    })
                    .collect();
                t.max_pool(&acts)
            })
            .collect();
        t.concat(&pooled)
    }

    /// `h_j = [forward_j; backward_j]` over the sentence vectors `r`.
    pub fn encode_context(&self, t: &mut Tape<'_>, r: &[Var]) -> Vec<Var> {
        assert!(!r.is_empty(), "document without sentences");
        let (fh, fc) = (t.param(self.fwd_h0), t.param(self.fwd_c0));
        let (fwd, _) = self.fwd.run(t, r, fh, fc);
        let rev: Vec<Var> = r.iter().rev().copied().collect();
        let (bh, bc) = (t.param(self.bwd_h0), t.param(self.bwd_c0));
        let (mut bwd, _) = self.bwd.run(t, &rev, bh, bc);
        bwd.reverse();
        fwd.iter().zip(&bwd).map(|(&f, &b)| t.concat(&[f, b])).collect()
    }

    pub fn encode(&self, t: &mut Tape<'_>, doc: &[Vec<usize>]) -> SentenceReps {
        let r: Vec<Var> = doc.iter().map(|s| self.encode_sentence(t, s)).collect();
        let h = self.encode_context(t, &r);
        SentenceReps { r, h }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::rng;

    fn encoder(filters: usize, hidden: usize) -> (ParamSet, SentenceEncoder) {
        let mut p = ParamSet::new();
        let mut r = rng(7);
        let e = SentenceEncoder::register(&mut p, "enc", 20, 6, filters, hidden, &mut r);
        (p, e)
    }

    #[test]
    fn r_dimension_is_three_times_filters() {
        let (p, e) = encoder(100, 4);
        let mut t = Tape::new(&p);
        let r = e.encode_sentence(&mut t, &[4, 5, 6]);
        assert_eq!(t.dim(r), 300);
    }

    #[test]
    fn zero_embeddings_give_pooled_biases() {
        let (mut p, e) = encoder(3, 4);
        p.get_mut(e.emb).data.iter_mut().for_each(|v| *v = 0.0);
        let mut t = Tape::new(&p);
        let r = e.encode_sentence(&mut t, &[4, 5, 6, 7, 8, 9]);
        let expect: Vec<f64> = e
            .convs
            .iter()
            .flat_map(|c| p.get(c.b).data.iter().map(|b| b.max(0.0)).collect::<Vec<_>>())
            .collect();
        assert_eq!(t.value(r), expect.as_slice());
    }

    #[test]
    fn identical_sentences_identical_vectors() {
        let (p, e) = encoder(3, 4);
        let mut t = Tape::new(&p);
        let a = e.encode_sentence(&mut t, &[4, 9, 11]);
        let b = e.encode_sentence(&mut t, &[4, 9, 11]);
        assert_eq!(t.value(a), t.value(b));
    }

    #[test]
    fn h_dimension_and_single_sentence() {
        let (p, e) = encoder(3, 256);
        let mut t = Tape::new(&p);
        let reps = e.encode(&mut t, &[vec![4, 5]]);
        assert_eq!(t.dim(reps.h[0]), 512);
    }

    #[test]
    fn reversal_swaps_directions() {
        // Forward half of h_j on the original order equals the backward half
        // of h_{n-1-j} on the reversed order once the two directions share
        // weights and initial states.
        let (mut p, e) = encoder(3, 5);
        let copy = |p: &mut ParamSet, from: ParamId, to: ParamId| {
            let d = p.get(from).data.clone();
            p.get_mut(to).data.copy_from_slice(&d);
        };
        copy(&mut p, e.fwd.w, e.bwd.w);
        copy(&mut p, e.fwd.b, e.bwd.b);
        copy(&mut p, e.fwd_h0, e.bwd_h0);
        copy(&mut p, e.fwd_c0, e.bwd_c0);
        let doc = vec![vec![4, 5, 6], vec![7, 8], vec![9, 10, 11, 12], vec![13]];
        let rev: Vec<Vec<usize>> = doc.iter().rev().cloned().collect();
        let mut t = Tape::new(&p);
        let a = e.encode(&mut t, &doc);
        let b = e.encode(&mut t, &rev);
        let n = doc.len();
        for j in 0..n {
            let ha = t.value(a.h[j]).to_vec();
            let hb = t.value(b.h[n - 1 - j]).to_vec();
            assert_eq!(&ha[..5], &hb[5..]);
            assert_eq!(&ha[5..], &hb[..5]);
        }
    }

    #[test]
    fn order_sensitive_context() {
        let (p, e) = encoder(3, 5);
        let mut t = Tape::new(&p);
        let a = e.encode(&mut t, &[vec![4, 5, 6], vec![7, 8, 9], vec![10, 11]]);
        let b = e.encode(&mut t, &[vec![7, 8, 9], vec![4, 5, 6], vec![10, 11]]);
        // same sentence, different position → different h
        assert_ne!(t.value(a.h[0]), t.value(b.h[1]));
        assert_eq!(t.value(a.r[0]), t.value(b.r[1]));
    }
}
