//! GRU layers over a flat parameter vector.
//!
//! Gate layout along the `3h` axis is `[update z | reset r | candidate n]`:
//!
//! ```text
//! z  = σ(x·Wz + h·Uz + bz)
//! r  = σ(x·Wr + h·Ur + br)
//! n  = tanh(x·Wn + (r ⊙ h)·Un + bn)
//! h' = (1 - z) ⊙ n + z ⊙ h
//! ```

use crate::error::{Error, Result};
use crate::neuralnet::params::ParamLayout;
use crate::neuralnet::real::{mat_vec_t_acc, matmul, sigmoid, vec_mat_acc, Real};

/// Sequences shorter than this use row-by-row kernels instead of GEMM.
const SMALL_SEQ: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GruLayer {
    pub input: usize,
    pub hidden: usize,
    w: usize,
    u: usize,
    b: usize,
}

/// Forward activations of one layer over a sequence, kept for backprop.
#[derive(Clone, Debug, Default)]
pub struct GruSeqCache<T> {
    pub steps: usize,
    /// `(steps + 1) x h`; row 0 is the initial state.
    pub hs: Vec<T>,
    z: Vec<T>,
    r: Vec<T>,
    n: Vec<T>,
    rh: Vec<T>,
}

impl<T: Real> GruSeqCache<T> {
    /// Output states, `steps x h`.
    pub fn outputs(&self) -> &[T] {
        let h = self.hs.len() / (self.steps + 1);
        &self.hs[h..]
    }

    pub fn last(&self) -> &[T] {
        let h = self.hs.len() / (self.steps + 1);
        &self.hs[self.steps * h..]
    }
}

/// Gradient destination for backpropagation. Recurrent weight gradients
/// are collected per layer and applied with one GEMM each when the sink is
/// flushed (or dropped), which is much cheaper than one GEMM per short
/// sequence. Everything else is written to `flat` directly.
pub struct GradSink<'a, T: Real> {
    pub flat: &'a mut [T],
    pending: Vec<Pending<T>>,
}

struct Pending<T> {
    layer: GruLayer,
    rows: usize,
    x: Vec<T>,
    h_prev: Vec<T>,
    rh: Vec<T>,
    da: Vec<T>,
}

impl<'a, T: Real> GradSink<'a, T> {
    pub fn new(flat: &'a mut [T]) -> GradSink<'a, T> {
        GradSink {
            flat,
            pending: Vec::new(),
        }
    }

    fn defer(&mut self, layer: &GruLayer, x: &[T], h_prev: &[T], rh: &[T], da: &[T], rows: usize) {
        let i = match self.pending.iter().position(|q| q.layer == *layer) {
            Some(i) => i,
            None => {
                self.pending.push(Pending {
                    layer: layer.clone(),
                    rows: 0,
                    x: Vec::new(),
                    h_prev: Vec::new(),
                    rh: Vec::new(),
                    da: Vec::new(),
                });
                self.pending.len() - 1
            }
        };
        let q = &mut self.pending[i];
        q.rows += rows;
        q.x.extend_from_slice(x);
        q.h_prev.extend_from_slice(h_prev);
        q.rh.extend_from_slice(rh);
        q.da.extend_from_slice(da);
    }

    /// Apply all collected weight gradients.
    pub fn flush(&mut self) {
        for q in self.pending.drain(..) {
            let l = &q.layer;
            let (hd, g3, n) = (l.hidden, 3 * l.hidden, q.rows);
            // dW += xᵀ·dA
            T::gemm(l.input, n, g3, &q.x, 1, l.input, &q.da, g3, 1, T::one(), &mut self.flat[l.w..], g3, 1);
            // dU[:, :2h] += h_prevᵀ·dA[:, :2h]
            T::gemm(hd, n, 2 * hd, &q.h_prev, 1, hd, &q.da, g3, 1, T::one(), &mut self.flat[l.u..], g3, 1);
            // dU[:, 2h:] += (r ⊙ h_prev)ᵀ·dA[:, 2h:]
            T::gemm(hd, n, hd, &q.rh, 1, hd, &q.da[2 * hd..], g3, 1, T::one(), &mut self.flat[l.u + 2 * hd..], g3, 1);
        }
    }
}

impl<T: Real> Drop for GradSink<'_, T> {
    fn drop(&mut self) {
        self.flush();
    }
}

impl GruLayer {
    pub fn new(layout: &mut ParamLayout, prefix: &str, input: usize, hidden: usize) -> GruLayer {
        let w = layout.add(format!("{prefix}.w"), &[input, 3 * hidden]);
        let u = layout.add(format!("{prefix}.u"), &[hidden, 3 * hidden]);
        let b = layout.add(format!("{prefix}.b"), &[3 * hidden]);
        GruLayer { input, hidden, w, u, b }
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        3 * (input * hidden + hidden * hidden + hidden)
    }

    pub fn w<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.w..self.w + self.input * 3 * self.hidden]
    }

    pub fn u<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.u..self.u + self.hidden * 3 * self.hidden]
    }

    pub fn b<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.b..self.b + 3 * self.hidden]
    }

    pub fn w_offset(&self) -> usize {
        self.w
    }

    pub fn b_offset(&self) -> usize {
        self.b
    }

    /// Input preactivations `x·W + b` for `rows` stacked inputs.
    pub fn input_preact<T: Real>(&self, p: &[T], x: &[T], rows: usize) -> Vec<T> {
        let g = 3 * self.hidden;
        let mut out = Vec::with_capacity(rows * g);
        for _ in 0..rows {
            out.extend_from_slice(self.b(p));
        }
        matmul(rows, self.input, g, x, self.input, self.w(p), g, 0, &mut out, g, true);
        out
    }

    /// One recurrent step from an input preactivation.
    pub fn step<T: Real>(&self, p: &[T], pre: &[T], h_prev: &[T]) -> Vec<T> {
        let hd = self.hidden;
        let mut scratch = vec![T::zero(); 5 * hd];
        let (z, rest) = scratch.split_at_mut(hd);
        let (r, rest) = rest.split_at_mut(hd);
        let (n, rest) = rest.split_at_mut(hd);
        let (rh, h) = rest.split_at_mut(hd);
        self.step_into(p, pre, h_prev, z, r, n, rh, h);
        h.to_vec()
    }

    #[allow(clippy::too_many_arguments)]
    fn step_into<T: Real>(
        &self,
        p: &[T],
        pre: &[T],
        h_prev: &[T],
        z: &mut [T],
        r: &mut [T],
        n: &mut [T],
        rh: &mut [T],
        h: &mut [T],
    ) {
        let hd = self.hidden;
        let u = self.u(p);
        let mut zr = pre[..2 * hd].to_vec();
        vec_mat_acc(h_prev, u, 3 * hd, 0, &mut zr);
        for j in 0..hd {
            z[j] = sigmoid(zr[j]);
            r[j] = sigmoid(zr[hd + j]);
            rh[j] = r[j] * h_prev[j];
        }
        let mut an = pre[2 * hd..3 * hd].to_vec();
        vec_mat_acc(rh, u, 3 * hd, 2 * hd, &mut an);
        for j in 0..hd {
            n[j] = an[j].tanh();
            h[j] = (T::one() - z[j]) * n[j] + z[j] * h_prev[j];
        }
    }

    /// Run over `steps` rows of input preactivations from state `h0`.
    pub fn forward_seq<T: Real>(&self, p: &[T], pre: &[T], steps: usize, h0: &[T]) -> GruSeqCache<T> {
        let hd = self.hidden;
        let mut c = GruSeqCache {
            steps,
            hs: vec![T::zero(); (steps + 1) * hd],
            z: vec![T::zero(); steps * hd],
            r: vec![T::zero(); steps * hd],
            n: vec![T::zero(); steps * hd],
            rh: vec![T::zero(); steps * hd],
        };
        c.hs[..hd].copy_from_slice(h0);
        for t in 0..steps {
            let (prev, next) = c.hs.split_at_mut((t + 1) * hd);
            let rows = t * hd..(t + 1) * hd;
            self.step_into(
                p,
                &pre[t * 3 * hd..(t + 1) * 3 * hd],
                &prev[t * hd..],
                &mut c.z[rows.clone()],
                &mut c.r[rows.clone()],
                &mut c.n[rows.clone()],
                &mut c.rh[rows],
                &mut next[..hd],
            );
        }
        c
    }

    /// Backpropagate through a sequence. `x` is the layer input (`steps x
    /// input`) that produced the cached preactivations, `d_out` the gradient
    /// on each output state. Weight gradients go to `g`. Returns the
    /// input gradient (when requested) and the gradient on `h0`.
    pub fn backward_seq<T: Real>(
        &self,
        p: &[T],
        g: &mut GradSink<'_, T>,
        x: &[T],
        cache: &GruSeqCache<T>,
        d_out: &[T],
        want_dx: bool,
    ) -> (Option<Vec<T>>, Vec<T>) {
        let hd = self.hidden;
        let g3 = 3 * hd;
        let steps = cache.steps;
        let u = self.u(p);
        let mut da = vec![T::zero(); steps * g3];
        let mut carry = vec![T::zero(); hd];
        let mut dh = vec![T::zero(); hd];
        let mut drh = vec![T::zero(); hd];
        for t in (0..steps).rev() {
            let row = t * hd..(t + 1) * hd;
            let (z, r, n) = (&cache.z[row.clone()], &cache.r[row.clone()], &cache.n[row.clone()]);
            let hp = &cache.hs[row.clone()];
            for j in 0..hd {
                dh[j] = d_out[t * hd + j] + carry[j];
            }
            let da_t = &mut da[t * g3..(t + 1) * g3];
            for j in 0..hd {
                let dn = dh[j] * (T::one() - z[j]);
                let dz = dh[j] * (hp[j] - n[j]);
                carry[j] = dh[j] * z[j];
                da_t[2 * hd + j] = dn * (T::one() - n[j] * n[j]);
                da_t[j] = dz * z[j] * (T::one() - z[j]);
            }
            drh.iter_mut().for_each(|v| *v = T::zero());
            mat_vec_t_acc(u, g3, 2 * hd, &da_t[2 * hd..], &mut drh);
            for j in 0..hd {
                da_t[hd + j] = drh[j] * hp[j] * r[j] * (T::one() - r[j]);
                carry[j] += drh[j] * r[j];
            }
            mat_vec_t_acc(u, g3, 0, &da_t[..2 * hd], &mut carry);
        }
        if steps > 0 {
            g.defer(self, &x[..steps * self.input], &cache.hs[..steps * hd], &cache.rh, &da, steps);
            let gb = &mut g.flat[self.b..self.b + g3];
            for t in 0..steps {
                for (acc, &v) in gb.iter_mut().zip(&da[t * g3..(t + 1) * g3]) {
                    *acc += v;
                }
            }
        }
        let dx = want_dx.then(|| {
            let mut dx = vec![T::zero(); steps * self.input];
            if steps >= SMALL_SEQ {
                T::gemm(steps, g3, self.input, &da, g3, 1, self.w(p), 1, g3, T::zero(), &mut dx, self.input, 1);
            } else {
                // short sequences: avoid packing the whole of W
                let w = self.w(p);
                for t in 0..steps {
                    mat_vec_t_acc(w, g3, 0, &da[t * g3..(t + 1) * g3], &mut dx[t * self.input..(t + 1) * self.input]);
                }
            }
            dx
        });
        (dx, carry)
    }
}

/// Layers run in one direction, each consuming the outputs of the one below.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GruStack {
    pub layers: Vec<GruLayer>,
    pub reverse: bool,
}

#[derive(Clone, Debug, Default)]
pub struct StackCache<T> {
    steps: usize,
    /// Input of the first layer in processing order.
    input: Vec<T>,
    layers: Vec<GruSeqCache<T>>,
    /// Top-layer outputs in original (not processing) order.
    pub output: Vec<T>,
}

impl<T> StackCache<T> {
    pub fn steps(&self) -> usize {
        self.steps
    }
}

fn reverse_rows<T: Copy>(x: &[T], width: usize) -> Vec<T> {
    if width == 0 {
        return Vec::new();
    }
    x.chunks_exact(width).rev().flatten().copied().collect()
}

impl GruStack {
    pub fn new(
        layout: &mut ParamLayout,
        prefix: &str,
        input: usize,
        hidden: usize,
        depth: usize,
        reverse: bool,
    ) -> GruStack {
        let layers = (0..depth)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                GruLayer::new(layout, &format!("{prefix}.l{l}"), inp, hidden)
            })
            .collect();
        GruStack { layers, reverse }
    }

    pub fn hidden(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden)
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T], steps: usize) -> StackCache<T> {
        let input = if self.reverse {
            reverse_rows(x, self.layers[0].input)
        } else {
            x.to_vec()
        };
        let mut layers: Vec<GruSeqCache<T>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let below = if l == 0 { &input[..] } else { layers[l - 1].outputs() };
            let pre = layer.input_preact(p, below, steps);
            let h0 = vec![T::zero(); layer.hidden];
            layers.push(layer.forward_seq(p, &pre, steps, &h0));
        }
        let top = layers.last().map(|c| c.outputs().to_vec()).unwrap_or_default();
        let output = if self.reverse {
            reverse_rows(&top, self.hidden())
        } else {
            top
        };
        StackCache { steps, input, layers, output }
    }

    /// `d_out` is in original order; returns the input gradient in original
    /// order when requested.
    pub fn backward<T: Real>(
        &self,
        p: &[T],
        g: &mut GradSink<'_, T>,
        cache: &StackCache<T>,
        d_out: &[T],
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let mut d = if self.reverse {
            reverse_rows(d_out, self.hidden())
        } else {
            d_out.to_vec()
        };
        for l in (0..self.layers.len()).rev() {
            let below = if l == 0 { &cache.input[..] } else { cache.layers[l - 1].outputs() };
            let need = l > 0 || want_dx;
            let (dx, _) = self.layers[l].backward_seq(p, g, below, &cache.layers[l], &d, need);
            d = dx?;
        }
        Some(if self.reverse {
            reverse_rows(&d, self.layers[0].input)
        } else {
            d
        })
    }
}

/// Single GRU step over explicit tensors, with dimension checks.
pub fn gru_step<T: Real>(layer: &GruLayer, p: &[T], x: &[T], h_prev: &[T]) -> Result<Vec<T>> {
    if x.len() != layer.input || h_prev.len() != layer.hidden {
        return Err(Error::Dimension(format!(
            "gru_step expects x[{}] and h[{}], got x[{}] and h[{}]",
            layer.input,
            layer.hidden,
            x.len(),
            h_prev.len()
        )));
    }
    let pre = layer.input_preact(p, x, 1);
    let h = layer.step(p, &pre, h_prev);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gru_step output".into()));
    }
    Ok(h)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layer(input: usize, hidden: usize, seed: u64) -> (GruLayer, Vec<f64>) {
        let mut layout = ParamLayout::new();
        let layer = GruLayer::new(&mut layout, "g", input, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = (0..layout.total()).map(|_| rng.gen_range(-0.8..0.8)).collect();
        (layer, p)
    }

    /// Independent textbook GRU: weights addressed gate by gate with explicit
    /// index arithmetic, no shared kernels.
    fn oracle_step(input: usize, hidden: usize, p: &[f64], x: &[f64], h: &[f64]) -> Vec<f64> {
        let w = |i: usize, gate: usize, j: usize| p[i * 3 * hidden + gate * hidden + j];
        let uo = input * 3 * hidden;
        let u = |k: usize, gate: usize, j: usize| p[uo + k * 3 * hidden + gate * hidden + j];
        let bo = uo + hidden * 3 * hidden;
        let b = |gate: usize, j: usize| p[bo + gate * hidden + j];
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let gate = |g: usize, j: usize, hv: &[f64]| -> f64 {
            let mut s = b(g, j);
            for i in 0..input {
                s += x[i] * w(i, g, j);
            }
            for k in 0..hidden {
                s += hv[k] * u(k, g, j);
            }
            s
        };
        let z: Vec<f64> = (0..hidden).map(|j| sig(gate(0, j, h))).collect();
        let r: Vec<f64> = (0..hidden).map(|j| sig(gate(1, j, h))).collect();
        let rh: Vec<f64> = (0..hidden).map(|k| r[k] * h[k]).collect();
        (0..hidden)
            .map(|j| {
                let n = gate(2, j, &rh).tanh();
                (1.0 - z[j]) * n + z[j] * h[j]
            })
            .collect()
    }

    #[test]
    fn zero_weights_zero_state() {
        let mut layout = ParamLayout::new();
        let layer = GruLayer::new(&mut layout, "g", 3, 2);
        let p = vec![0.0f64; layout.total()];
        let h = gru_step(&layer, &p, &[1.0, -2.0, 0.5], &[0.0, 0.0]).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
    }

    #[test]
    fn param_count_formula() {
        let mut layout = ParamLayout::new();
        GruLayer::new(&mut layout, "g", 7, 5);
        assert_eq!(layout.total(), GruLayer::param_count(7, 5));
        assert_eq!(GruLayer::param_count(7, 5), 3 * (7 * 5 + 25 + 5));
    }

    #[test]
    fn matches_oracle() {
        for seed in 0..20 {
            let (layer, p) = random_layer(3, 2, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let h0: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = gru_step(&layer, &p, &x, &h0).unwrap();
            let want = oracle_step(3, 2, &p, &x, &h0);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn input_permutation_invariance() {
        let (layer, p) = random_layer(4, 3, 9);
        let x = [0.3, -1.2, 0.7, 2.0];
        let h0 = [0.1, -0.4, 0.2];
        let perm = [2usize, 0, 3, 1];
        let mut p2 = p.clone();
        let g3 = 9;
        for (new_i, &old_i) in perm.iter().enumerate() {
            p2[new_i * g3..(new_i + 1) * g3].copy_from_slice(&p[old_i * g3..(old_i + 1) * g3]);
        }
        let x2: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
        let a = gru_step(&layer, &p, &x, &h0).unwrap();
        let b = gru_step(&layer, &p2, &x2, &h0).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_errors() {
        let (layer, p) = random_layer(3, 2, 1);
        assert!(gru_step(&layer, &p, &[0.0; 2], &[0.0; 2]).is_err());
        assert!(gru_step(&layer, &p, &[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn sequence_matches_repeated_steps() {
        let (layer, p) = random_layer(3, 4, 5);
        let x: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).sin()).collect();
        let pre = layer.input_preact(&p, &x, 5);
        let cache = layer.forward_seq(&p, &pre, 5, &[0.0; 4]);
        let mut h = vec![0.0; 4];
        for t in 0..5 {
            h = gru_step(&layer, &p, &x[t * 3..t * 3 + 3], &h).unwrap();
            for j in 0..4 {
                assert!((h[j] - cache.outputs()[t * 4 + j]).abs() < 1e-12);
            }
        }
    }

    /// Loss = Σ c·h over all outputs of a two-layer reversed stack; compares
    /// the analytic gradient with central differences.
    #[test]
    fn stack_backward_matches_finite_differences() {
        let mut layout = ParamLayout::new();
        let stack = GruStack::new(&mut layout, "s", 3, 4, 2, true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p: Vec<f64> = (0..layout.total()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let x: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coef: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &[f64], x: &[f64]| -> f64 {
            let c = stack.forward(p, x, 5);
            c.output.iter().zip(&coef).map(|(a, b)| a * b).sum()
        };
        let cache = stack.forward(&p, &x, 5);
        let mut g = vec![0.0; p.len()];
        let dx = stack.backward(&p, &mut GradSink::new(&mut g), &cache, &coef, true).unwrap();
        let eps = 1e-6;
        for i in 0..p.len() {
            let orig = p[i];
            p[i] = orig + eps;
            let up = loss(&p, &x);
            p[i] = orig - eps;
            let down = loss(&p, &x);
            p[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
        let mut xm = x.clone();
        for i in 0..x.len() {
            xm[i] = x[i] + eps;
            let up = loss(&p, &xm);
            xm[i] = x[i] - eps;
            let down = loss(&p, &xm);
            xm[i] = x[i];
            let fd = (up - down) / (2.0 * eps);
            assert!((fd - dx[i]).abs() < 1e-7 * (1.0 + fd.abs()));
        }
    }
}
