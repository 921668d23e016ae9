//! Building blocks of a binary sequence labeler: a bidirectional stacked GRU
//! encoder and an autoregressive GRU label decoder.
//!
//! The first decoder layer reads `[enc_fwd_t ; enc_bwd_t ; ctx_t ; emb(prev)]`
//! where `ctx_t` is an optional per-position context vector supplied by the
//! caller and `emb(prev)` comes from a three-row table (start, label 0,
//! label 1). Label 0 is the identity label and wins exact score ties.

use std::cmp::Ordering;

use crate::neuralnet::gru::{GradSink, GruLayer, GruSeqCache, GruStack, StackCache};
use crate::neuralnet::{log_softmax2, matmul, outer_acc, ParamLayout, Real};

pub(crate) const START: usize = 0;

/// Forward and backward GRU stacks over the same input sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiEncoder {
    pub input: usize,
    pub hidden: usize,
    fwd: GruStack,
    bwd: GruStack,
}

/// Label decoder over encoder outputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelDecoder {
    /// Width of the encoder output per position (both directions).
    pub enc: usize,
    pub ctx: usize,
    pub lab: usize,
    pub dec: usize,
    labemb: usize,
    dec_layers: Vec<GruLayer>,
    out_w: usize,
    out_b: usize,
}

/// Encoder plus decoder with no external context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeqTagger {
    pub encoder: BiEncoder,
    pub decoder: LabelDecoder,
}

/// Encoder activations for one sequence.
#[derive(Clone, Debug)]
pub struct Encoded<T> {
    pub steps: usize,
    f: StackCache<T>,
    b: StackCache<T>,
    /// `steps x 2·enc`, forward then backward state per position.
    pub out: Vec<T>,
}

/// Decoder inputs precomputed for step-wise inference.
#[derive(Clone, Debug)]
pub struct Prepared<T> {
    pub steps: usize,
    base: Vec<T>,
    labproj: Vec<T>,
}

/// A scored label sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub labels: Vec<u8>,
    pub score: f64,
}

/// Score descending, then label sequence ascending (identity label first).
pub(crate) fn rank(a: &Scored, b: &Scored) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.labels.cmp(&b.labels))
}

impl BiEncoder {
    pub fn new(layout: &mut ParamLayout, prefix: &str, input: usize, hidden: usize, fwd_layers: usize, bwd_layers: usize) -> BiEncoder {
        let fwd = GruStack::new(layout, &format!("{prefix}.fwd"), input, hidden, fwd_layers, false);
        let bwd = GruStack::new(layout, &format!("{prefix}.bwd"), input, hidden, bwd_layers, true);
        BiEncoder { input, hidden, fwd, bwd }
    }

    /// Output width per position.
    pub fn width(&self) -> usize {
        2 * self.hidden
    }

    pub fn encode<T: Real>(&self, p: &[T], x: &[T], steps: usize) -> Encoded<T> {
        let f = self.fwd.forward(p, x, steps);
        let b = self.bwd.forward(p, x, steps);
        let h = self.hidden;
        let mut out = Vec::with_capacity(steps * 2 * h);
        for t in 0..steps {
            out.extend_from_slice(&f.output[t * h..(t + 1) * h]);
            out.extend_from_slice(&b.output[t * h..(t + 1) * h]);
        }
        Encoded { steps, f, b, out }
    }

    /// Gradient with respect to the encoder input, `steps x input`.
    pub fn backward<T: Real>(&self, p: &[T], g: &mut GradSink<'_, T>, e: &Encoded<T>, d_enc: &[T]) -> Vec<T> {
        let h = self.hidden;
        let steps = e.steps;
        let mut df = Vec::with_capacity(steps * h);
        let mut db = Vec::with_capacity(steps * h);
        for t in 0..steps {
            df.extend_from_slice(&d_enc[t * 2 * h..t * 2 * h + h]);
            db.extend_from_slice(&d_enc[t * 2 * h + h..(t + 1) * 2 * h]);
        }
        let mut dx = self.fwd.backward(p, g, &e.f, &df, true).expect("input gradient requested");
        let dxb = self.bwd.backward(p, g, &e.b, &db, true).expect("input gradient requested");
        for (a, b) in dx.iter_mut().zip(&dxb) {
            *a += *b;
        }
        dx
    }
}

impl SeqTagger {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        layout: &mut ParamLayout,
        prefix: &str,
        input: usize,
        enc: usize,
        fwd_layers: usize,
        bwd_layers: usize,
        lab: usize,
        dec: usize,
        dec_layers: usize,
    ) -> SeqTagger {
        let encoder = BiEncoder::new(layout, &format!("{prefix}.enc"), input, enc, fwd_layers, bwd_layers);
        let decoder = LabelDecoder::new(layout, prefix, 2 * enc, 0, lab, dec, dec_layers);
        SeqTagger { encoder, decoder }
    }
}

impl LabelDecoder {
    pub fn new(layout: &mut ParamLayout, prefix: &str, enc: usize, ctx: usize, lab: usize, dec: usize, dec_layers: usize) -> LabelDecoder {
        let labemb = layout.add(format!("{prefix}.label_emb"), &[3, lab]);
        let d1 = enc + ctx + lab;
        let dec_layers = (0..dec_layers)
            .map(|l| {
                let inp = if l == 0 { d1 } else { dec };
                GruLayer::new(layout, &format!("{prefix}.dec.l{l}"), inp, dec)
            })
            .collect();
        let out_w = layout.add(format!("{prefix}.out.w"), &[dec, 2]);
        let out_b = layout.add(format!("{prefix}.out.b"), &[2]);
        LabelDecoder {
            enc,
            ctx,
            lab,
            dec,
            labemb,
            dec_layers,
            out_w,
            out_b,
        }
    }

    fn d1(&self) -> usize {
        self.enc + self.ctx + self.lab
    }

    fn state_len(&self) -> usize {
        self.dec * self.dec_layers.len()
    }

    /// Teacher-forced decoder loss over `labels`, skipping `forced`
    /// positions. With `g` present, gradients are accumulated and the
    /// gradients on `enc` and `ctx` are returned.
    pub fn decode_train<T: Real>(
        &self,
        p: &[T],
        g: Option<&mut GradSink<'_, T>>,
        enc: &[T],
        ctx: &[T],
        labels: &[usize],
        forced: &[bool],
    ) -> (f64, Vec<T>, Vec<T>) {
        let steps = labels.len();
        let d1 = self.d1();
        let (h2, c, o) = (self.enc, self.ctx, self.lab);
        let lab = &p[self.labemb..self.labemb + 3 * o];
        let mut x1 = Vec::with_capacity(steps * d1);
        let mut prev = vec![START; steps];
        for t in 0..steps {
            x1.extend_from_slice(&enc[t * h2..(t + 1) * h2]);
            x1.extend_from_slice(&ctx[t * c..(t + 1) * c]);
            if t > 0 {
                prev[t] = labels[t - 1] + 1;
            }
            x1.extend_from_slice(&lab[prev[t] * o..(prev[t] + 1) * o]);
        }
        let mut caches: Vec<GruSeqCache<T>> = Vec::with_capacity(self.dec_layers.len());
        for (l, layer) in self.dec_layers.iter().enumerate() {
            let below = if l == 0 { &x1[..] } else { caches[l - 1].outputs() };
            let pre = layer.input_preact(p, below, steps);
            caches.push(layer.forward_seq(p, &pre, steps, &vec![T::zero(); self.dec]));
        }
        let top = caches.last().expect("at least one decoder layer").outputs();
        let hd = self.dec;
        let mut logits = Vec::with_capacity(steps * 2);
        for _ in 0..steps {
            logits.extend_from_slice(&p[self.out_b..self.out_b + 2]);
        }
        matmul(steps, hd, 2, top, hd, &p[self.out_w..self.out_w + hd * 2], 2, 0, &mut logits, 2, true);
        let mut loss = 0.0;
        let mut dlogits = vec![T::zero(); steps * 2];
        for t in 0..steps {
            if forced[t] {
                continue;
            }
            let lp = log_softmax2(logits[2 * t], logits[2 * t + 1]);
            loss -= lp[labels[t]].as_f64();
            for k in 0..2 {
                let target = if k == labels[t] { T::one() } else { T::zero() };
                dlogits[2 * t + k] = lp[k].exp() - target;
            }
        }
        let Some(g) = g else {
            return (loss, Vec::new(), Vec::new());
        };
        let wo = &p[self.out_w..self.out_w + hd * 2];
        let mut dtop = vec![T::zero(); steps * hd];
        for t in 0..steps {
            let (d0, d1v) = (dlogits[2 * t], dlogits[2 * t + 1]);
            if d0 == T::zero() && d1v == T::zero() {
                continue;
            }
            for j in 0..hd {
                dtop[t * hd + j] = wo[2 * j] * d0 + wo[2 * j + 1] * d1v;
            }
            outer_acc(&top[t * hd..(t + 1) * hd], &dlogits[2 * t..2 * t + 2], &mut g.flat[self.out_w..], 2, 0);
            g.flat[self.out_b] += d0;
            g.flat[self.out_b + 1] += d1v;
        }
        let mut d = dtop;
        for l in (0..self.dec_layers.len()).rev() {
            let below = if l == 0 { &x1[..] } else { caches[l - 1].outputs() };
            let (dx, _) = self.dec_layers[l].backward_seq(p, g, below, &caches[l], &d, true);
            d = dx.expect("input gradient requested");
        }
        let mut d_enc = Vec::with_capacity(steps * h2);
        let mut d_ctx = Vec::with_capacity(steps * c);
        for t in 0..steps {
            let row = &d[t * d1..(t + 1) * d1];
            d_enc.extend_from_slice(&row[..h2]);
            d_ctx.extend_from_slice(&row[h2..h2 + c]);
            let gl = &mut g.flat[self.labemb + prev[t] * o..self.labemb + (prev[t] + 1) * o];
            for (a, &b) in gl.iter_mut().zip(&row[h2 + c..]) {
                *a += b;
            }
        }
        (loss, d_enc, d_ctx)
    }

    /// Fold the encoder outputs and context into the first decoder layer's
    /// input preactivation once per sequence.
    pub fn prepare<T: Real>(&self, p: &[T], enc: &[T], ctx: &[T], steps: usize) -> Prepared<T> {
        let layer = &self.dec_layers[0];
        let g3 = 3 * self.dec;
        let (h2, c, o) = (self.enc, self.ctx, self.lab);
        let w = layer.w(p);
        let mut base = Vec::with_capacity(steps * g3);
        for _ in 0..steps {
            base.extend_from_slice(layer.b(p));
        }
        matmul(steps, h2, g3, enc, h2, w, g3, 0, &mut base, g3, true);
        if c > 0 {
            matmul(steps, c, g3, ctx, c, &w[h2 * g3..], g3, 0, &mut base, g3, true);
        }
        let lab = &p[self.labemb..self.labemb + 3 * o];
        let mut labproj = vec![T::zero(); 3 * g3];
        matmul(3, o, g3, lab, o, &w[(h2 + c) * g3..], g3, 0, &mut labproj, g3, false);
        Prepared { steps, base, labproj }
    }

    pub fn initial_state<T: Real>(&self) -> Vec<T> {
        vec![T::zero(); self.state_len()]
    }

    /// Advance the decoder by one position given the previous label row
    /// (`START`, or label + 1). Returns the new state and log-probabilities
    /// of the two labels.
    pub fn step<T: Real>(&self, p: &[T], prep: &Prepared<T>, t: usize, prev: usize, state: &[T]) -> (Vec<T>, [f64; 2]) {
        let g3 = 3 * self.dec;
        let hd = self.dec;
        let mut pre: Vec<T> = prep.base[t * g3..(t + 1) * g3].to_vec();
        for (a, &b) in pre.iter_mut().zip(&prep.labproj[prev * g3..(prev + 1) * g3]) {
            *a += b;
        }
        let mut next = Vec::with_capacity(self.state_len());
        for (l, layer) in self.dec_layers.iter().enumerate() {
            if l > 0 {
                pre = layer.input_preact(p, &next[(l - 1) * hd..l * hd], 1);
            }
            let h = layer.step(p, &pre, &state[l * hd..(l + 1) * hd]);
            next.extend_from_slice(&h);
        }
        let top = &next[(self.dec_layers.len() - 1) * hd..];
        let wo = &p[self.out_w..self.out_w + hd * 2];
        let (mut a, mut b) = (p[self.out_b], p[self.out_b + 1]);
        for j in 0..hd {
            a += top[j] * wo[2 * j];
            b += top[j] * wo[2 * j + 1];
        }
        let lp = log_softmax2(a, b);
        (next, [lp[0].as_f64(), lp[1].as_f64()])
    }

    /// Log-probabilities at `prefix.len()` after teacher-forcing `prefix`.
    /// A forced position yields `[0, -inf]`.
    pub fn next_logprobs<T: Real>(&self, p: &[T], prep: &Prepared<T>, prefix: &[u8], forced: &[bool]) -> [f64; 2] {
        let t = prefix.len();
        let mut state = self.initial_state();
        let mut prev = START;
        for (i, &l) in prefix.iter().enumerate() {
            state = self.step(p, prep, i, prev, &state).0;
            prev = l as usize + 1;
        }
        if forced[t] {
            return [0.0, f64::NEG_INFINITY];
        }
        self.step(p, prep, t, prev, &state).1
    }

    /// Sum of log-probabilities of a full label sequence along the same step
    /// path beam search uses. Labels other than 0 at forced positions score
    /// `-inf`.
    pub fn sequence_score<T: Real>(&self, p: &[T], prep: &Prepared<T>, labels: &[u8], forced: &[bool]) -> f64 {
        let mut state = self.initial_state();
        let mut prev = START;
        let mut score = 0.0;
        for (t, &l) in labels.iter().enumerate() {
            let (next, lp) = self.step(p, prep, t, prev, &state);
            if forced[t] {
                if l != 0 {
                    return f64::NEG_INFINITY;
                }
            } else {
                score += lp[l as usize];
            }
            state = next;
            prev = l as usize + 1;
        }
        score
    }

    /// Beam search over full label sequences, best first.
    pub fn beam<T: Real>(&self, p: &[T], prep: &Prepared<T>, k: usize, forced: &[bool]) -> Vec<Scored> {
        assert_eq!(forced.len(), prep.steps, "one forced flag per step");
        let k = k.max(1);
        let mut beam: Vec<(Scored, Vec<T>)> = vec![(
            Scored {
                labels: Vec::with_capacity(prep.steps),
                score: 0.0,
            },
            self.initial_state(),
        )];
        for (t, &is_forced) in forced.iter().enumerate() {
            let mut cand: Vec<(Scored, Vec<T>)> = Vec::with_capacity(2 * beam.len());
            for (hyp, state) in &beam {
                let prev = hyp.labels.last().map_or(START, |&l| l as usize + 1);
                let (next, lp) = self.step(p, prep, t, prev, state);
                let labels: &[u8] = if is_forced { &[0] } else { &[0, 1] };
                for &l in labels {
                    let mut seq = hyp.labels.clone();
                    seq.push(l);
                    let score = if forced[t] { hyp.score } else { hyp.score + lp[l as usize] };
                    cand.push((Scored { labels: seq, score }, next.clone()));
                }
            }
            cand.sort_by(|a, b| rank(&a.0, &b.0));
            cand.truncate(k);
            beam = cand;
        }
        beam.into_iter().map(|(s, _)| s).collect()
    }
}
