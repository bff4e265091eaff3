//! Tape-based reverse-mode autodiff over [`Tensor`]s.
//!
//! Every op appends a node holding its forward value. [`Graph::backward`]
//! walks the tape in reverse, so parents always precede children. Nodes that
//! cannot reach a gradient-requiring leaf are skipped, and
//! [`Graph::stop_gradient`] cuts the walk completely.

use rayon::prelude::*;

use super::tensor::{gemm, Tensor};
use super::NnError;

pub const GEM_CLAMP: f64 = 1e-6;
pub const ATTN_POOL_EPS: f64 = 1e-8;
pub const ARCCOS_GUARD: f64 = 1e-7;
const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Relu(Var),
    Softplus(Var),
    Add(Var, Var),
    StopGradient,
    Gem { x: Var, p: f64 },
    Linear { x: Var, w: Var, b: Var },
    L2Normalize { x: Var, norms: Vec<f64> },
    AttnPool { s: Var, a: Var },
    MatMulNT(Var, Var),
    ArcMargin { x: Var, labels: Vec<usize>, m: f64 },
    ScaleBy { x: Var, s: Var },
    ScaleConst { x: Var, c: f64 },
    SoftmaxCe { x: Var, labels: Vec<usize>, probs: Vec<f64> },
    Dot { x: Var, w: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` for nodes that received none.
pub struct Grads(Vec<Option<Tensor>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0.get_mut(v.0).and_then(|g| g.take())
    }
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Unfolds one `C×H×W` sample into `(C·k·k) × (Ho·Wo)` columns.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let p = self.ho * self.wo;
        for ci in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = &mut cols[((ci * self.k + ky) * self.k + kx) * p..][..p];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let dst = &mut row[oy * self.wo..(oy + 1) * self.wo];
                        if iy < 0 || iy >= self.h as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &x[(ci * self.h + iy as usize) * self.w..][..self.w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *d = if ix < 0 || ix >= self.w as isize { 0.0 } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], x: &mut [f64]) {
        let p = self.ho * self.wo;
        for ci in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = &cols[((ci * self.k + ky) * self.k + kx) * p..][..p];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut x[(ci * self.h + iy as usize) * self.w..][..self.w];
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += row[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn clamp_cos(c: f64) -> f64 {
    c.clamp(-1.0 + ARCCOS_GUARD, 1.0 - ARCCOS_GUARD)
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant input or a trainable parameter.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// 2-D convolution with square kernel `w: [O, C, k, k]` and bias `b: [O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (n, c, h, wd) = self.value(x).dims4();
        let (o, wc, k, k2) = self.value(w).dims4();
        assert_eq!((wc, k), (c, k2), "conv weight {:?} vs input {:?}", self.value(w).shape, self.value(x).shape);
        assert_eq!(self.value(b).shape, vec![o]);
        let geom = ConvGeom { c, h, w: wd, k, stride, pad, ho: conv_out(h, k, stride, pad), wo: conv_out(wd, k, stride, pad) };
        let p = geom.ho * geom.wo;
        let mut out = Tensor::zeros(&[n, o, geom.ho, geom.wo]);
        {
            let xs = &self.value(x).data;
            let ws = &self.value(w).data;
            let bs = &self.value(b).data;
            out.data.par_chunks_mut(o * p).enumerate().for_each(|(s, dst)| {
                let xn = &xs[s * c * h * wd..(s + 1) * c * h * wd];
                if geom.is_pointwise() {
                    gemm(o, c, p, ws, false, xn, false, dst, 0.0);
                } else {
                    let mut cols = vec![0.0; c * k * k * p];
                    geom.im2col(xn, &mut cols);
                    gemm(o, c * k * k, p, ws, false, &cols, false, dst, 0.0);
                }
                for (oc, row) in dst.chunks_mut(p).enumerate() {
                    row.iter_mut().for_each(|v| *v += bs[oc]);
                }
            });
        }
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(out, Op::Conv2d { x, w, b, stride, pad }, ng)
    }

    /// 2×2 max pooling with stride 2 (odd trailing rows/columns dropped).
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let (ho, wo) = (h / 2, w / 2);
        let xs = &self.value(x).data;
        let mut out = Tensor::zeros(&[n, c, ho, wo]);
        let mut argmax = vec![0usize; out.numel()];
        for plane in 0..n * c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = usize::MAX;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let i = plane * h * w + (2 * oy + dy) * w + 2 * ox + dx;
                        if best == usize::MAX || xs[i] > xs[best] {
                            best = i;
                        }
                    }
                    let o = plane * ho * wo + oy * wo + ox;
                    out.data[o] = xs[best];
                    argmax[o] = best;
                }
            }
        }
        let ng = self.ng(x);
        self.push(out, Op::MaxPool2 { x, argmax }, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = v.max(0.0));
        let ng = self.ng(x);
        self.push(out, Op::Relu(x), ng)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = softplus(*v));
        let ng = self.ng(x);
        self.push(out, Op::Softplus(x), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape, self.value(b).shape);
        let mut out = self.value(a).clone();
        out.data.iter_mut().zip(&self.value(b).data).for_each(|(o, v)| *o += v);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    /// Identity in the forward pass; no gradient ever flows back through it.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let out = self.value(x).clone();
        self.push(out, Op::StopGradient, false)
    }

    /// Generalized-mean pooling `[N,C,H,W] → [N,C]`:
    /// `(mean(max(x, 1e-6)^p))^(1/p)` per channel.
    pub fn gem(&mut self, x: Var, p: f64) -> Var {
        assert!(p > 0.0);
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let xs = &self.value(x).data;
        let data = (0..n * c)
            .map(|i| {
                let m = xs[i * hw..(i + 1) * hw].iter().map(|v| v.max(GEM_CLAMP).powf(p)).sum::<f64>() / hw as f64;
                m.powf(1.0 / p)
            })
            .collect();
        let ng = self.ng(x);
        self.push(Tensor::from_vec(&[n, c], data), Op::Gem { x, p }, ng)
    }

    /// `x·wᵀ + b` for `x: [N,D]`, `w: [O,D]`, `b: [O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (n, d) = self.value(x).dims2();
        let (o, wd) = self.value(w).dims2();
        assert_eq!(d, wd);
        assert_eq!(self.value(b).shape, vec![o]);
        let mut out = Tensor::zeros(&[n, o]);
        gemm(n, d, o, &self.value(x).data, false, &self.value(w).data, true, &mut out.data, 0.0);
        let bs = &self.value(b).data;
        out.data.chunks_mut(o).for_each(|row| row.iter_mut().zip(bs).for_each(|(v, bb)| *v += bb));
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(out, Op::Linear { x, w, b }, ng)
    }

    /// Row-wise unit normalization of a matrix.
    pub fn l2_normalize(&mut self, x: Var) -> Var {
        let (_, d) = self.value(x).dims2();
        let mut out = self.value(x).clone();
        let norms: Vec<f64> = out
            .data
            .chunks_mut(d)
            .map(|row| {
                let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
                row.iter_mut().for_each(|v| *v /= nrm);
                nrm
            })
            .collect();
        let ng = self.ng(x);
        self.push(out, Op::L2Normalize { x, norms }, ng)
    }

    /// Attention-weighted spatial average `Σ a·s / (Σ a + ε)`,
    /// `s: [N,C,H,W]`, `a: [N,1,H,W]` → `[N,C]`.
    pub fn attn_pool(&mut self, s: Var, a: Var) -> Var {
        let (n, c, h, w) = self.value(s).dims4();
        assert_eq!(self.value(a).shape, vec![n, 1, h, w]);
        let hw = h * w;
        let (ss, aa) = (&self.value(s).data, &self.value(a).data);
        let mut out = Tensor::zeros(&[n, c]);
        for i in 0..n {
            let ai = &aa[i * hw..(i + 1) * hw];
            let z = ai.iter().sum::<f64>() + ATTN_POOL_EPS;
            for ch in 0..c {
                let si = &ss[(i * c + ch) * hw..][..hw];
                out.data[i * c + ch] = si.iter().zip(ai).map(|(x, y)| x * y).sum::<f64>() / z;
            }
        }
        let ng = self.ng(s) || self.ng(a);
        self.push(out, Op::AttnPool { s, a }, ng)
    }

    /// `a·bᵀ` for `a: [N,D]`, `b: [K,D]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (n, d) = self.value(a).dims2();
        let (k, bd) = self.value(b).dims2();
        assert_eq!(d, bd);
        let mut out = Tensor::zeros(&[n, k]);
        gemm(n, d, k, &self.value(a).data, false, &self.value(b).data, true, &mut out.data, 0.0);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMulNT(a, b), ng)
    }

    /// Replaces each row's target cosine `cos θ` by `cos(θ + m)`.
    pub fn arc_margin(&mut self, x: Var, labels: &[usize], m: f64) -> Var {
        let (n, k) = self.value(x).dims2();
        assert_eq!(labels.len(), n);
        let mut out = self.value(x).clone();
        let (cm, sm) = (m.cos(), m.sin());
        for (i, &y) in labels.iter().enumerate() {
            assert!(y < k, "label {y} out of {k} classes");
            let c = &mut out.data[i * k + y];
            // cos(θ + m) without going through arccos, exact at θ = 0
            let cc = c.clamp(-1.0, 1.0);
            *c = cc * cm - (1.0 - cc * cc).max(0.0).sqrt() * sm;
        }
        let ng = self.ng(x);
        self.push(out, Op::ArcMargin { x, labels: labels.to_vec(), m }, ng)
    }

    /// Multiplies by a learnable scalar `s: [1]`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Var {
        let sv = self.value(s).item();
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v *= sv);
        let ng = self.ng(x) || self.ng(s);
        self.push(out, Op::ScaleBy { x, s }, ng)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        let ng = self.ng(x);
        self.push(out, Op::ScaleConst { x, c }, ng)
    }

    /// Mean softmax cross-entropy of logits `[N,K]` against class labels.
    pub fn softmax_ce(&mut self, x: Var, labels: &[usize]) -> Var {
        let (n, k) = self.value(x).dims2();
        assert_eq!(labels.len(), n);
        let mut probs = self.value(x).data.clone();
        let mut loss = 0.0;
        for (row, &y) in probs.chunks_mut(k).zip(labels) {
            assert!(y < k, "label {y} out of {k} classes");
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() + mx;
            loss += lse - row[y];
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        let ng = self.ng(x);
        self.push(Tensor::scalar(loss / n as f64), Op::SoftmaxCe { x, labels: labels.to_vec(), probs }, ng)
    }

    /// `Σ x·w` against constant weights; turns any tensor into a scalar probe.
    pub fn dot(&mut self, x: Var, w: &[f64]) -> Var {
        assert_eq!(self.value(x).numel(), w.len());
        let v = self.value(x).data.iter().zip(w).map(|(a, b)| a * b).sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(v), Op::Dot { x, w: w.to_vec() }, ng)
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Grads, NnError> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(NnError::GraphNotBuilt);
        }
        if self.value(loss).numel() != 1 {
            return Err(NnError::ShapeMismatch(format!("backward from non-scalar {:?}", self.value(loss).shape)));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.backprop(i, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        Ok(Grads(grads))
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b),
            slot => *slot = Some(g),
        }
    }

    fn backprop(&self, i: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::Conv2d { x, w, b, stride, pad } => self.conv_backward(*x, *w, *b, *stride, *pad, dy, grads),
            Op::MaxPool2 { x, argmax } => {
                let mut dx = Tensor::zeros(&self.value(*x).shape);
                for (o, &src) in argmax.iter().enumerate() {
                    dx.data[src] += dy.data[o];
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Relu(x) => {
                let mut dx = dy.clone();
                dx.data.iter_mut().zip(&out.data).for_each(|(d, o)| {
                    if *o <= 0.0 {
                        *d = 0.0
                    }
                });
                self.accumulate(grads, *x, dx);
            }
            Op::Softplus(x) => {
                let mut dx = dy.clone();
                dx.data.iter_mut().zip(&self.value(*x).data).for_each(|(d, v)| *d *= sigmoid(*v));
                self.accumulate(grads, *x, dx);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, dy.clone());
                self.accumulate(grads, *b, dy.clone());
            }
            Op::Gem { x, p } => {
                let xv = self.value(*x);
                let (_, _, h, w) = xv.dims4();
                let hw = h * w;
                let mut dx = Tensor::zeros(&xv.shape);
                for (plane, (&yv, &g)) in out.data.iter().zip(&dy.data).enumerate() {
                    // d/dz_i = y^(1-p) · z_i^(p-1) / HW, zero where clamped
                    let coef = g * yv.powf(1.0 - p) / hw as f64;
                    let src = &xv.data[plane * hw..(plane + 1) * hw];
                    for (d, &v) in dx.data[plane * hw..(plane + 1) * hw].iter_mut().zip(src) {
                        if v > GEM_CLAMP {
                            *d = coef * v.powf(p - 1.0);
                        }
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Linear { x, w, b } => {
                let (n, d) = self.value(*x).dims2();
                let (o, _) = self.value(*w).dims2();
                if self.ng(*x) {
                    let mut dx = Tensor::zeros(&[n, d]);
                    gemm(n, o, d, &dy.data, false, &self.value(*w).data, false, &mut dx.data, 0.0);
                    self.accumulate(grads, *x, dx);
                }
                if self.ng(*w) {
                    let mut dw = Tensor::zeros(&[o, d]);
                    gemm(o, n, d, &dy.data, true, &self.value(*x).data, false, &mut dw.data, 0.0);
                    self.accumulate(grads, *w, dw);
                }
                if self.ng(*b) {
                    let mut db = Tensor::zeros(&[o]);
                    dy.data.chunks(o).for_each(|row| db.data.iter_mut().zip(row).for_each(|(a, v)| *a += v));
                    self.accumulate(grads, *b, db);
                }
            }
            Op::L2Normalize { x, norms } => {
                let (_, d) = out.dims2();
                let mut dx = Tensor::zeros(&out.shape);
                for (r, nrm) in norms.iter().enumerate() {
                    let y = &out.data[r * d..(r + 1) * d];
                    let g = &dy.data[r * d..(r + 1) * d];
                    let proj: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                    for j in 0..d {
                        dx.data[r * d + j] = (g[j] - y[j] * proj) / nrm;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::AttnPool { s, a } => {
                let sv = self.value(*s);
                let av = self.value(*a);
                let (n, c, h, w) = sv.dims4();
                let hw = h * w;
                let mut ds = Tensor::zeros(&sv.shape);
                let mut da = Tensor::zeros(&av.shape);
                for i in 0..n {
                    let ai = &av.data[i * hw..(i + 1) * hw];
                    let z = ai.iter().sum::<f64>() + ATTN_POOL_EPS;
                    for ch in 0..c {
                        let g = dy.data[i * c + ch];
                        let y = out.data[i * c + ch];
                        let base = (i * c + ch) * hw;
                        for p in 0..hw {
                            ds.data[base + p] = g * ai[p] / z;
                            da.data[i * hw + p] += g * (sv.data[base + p] - y) / z;
                        }
                    }
                }
                self.accumulate(grads, *s, ds);
                self.accumulate(grads, *a, da);
            }
            Op::MatMulNT(a, b) => {
                let (n, d) = self.value(*a).dims2();
                let (k, _) = self.value(*b).dims2();
                if self.ng(*a) {
                    let mut da = Tensor::zeros(&[n, d]);
                    gemm(n, k, d, &dy.data, false, &self.value(*b).data, false, &mut da.data, 0.0);
                    self.accumulate(grads, *a, da);
                }
                if self.ng(*b) {
                    let mut db = Tensor::zeros(&[k, d]);
                    gemm(k, n, d, &dy.data, true, &self.value(*a).data, false, &mut db.data, 0.0);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::ArcMargin { x, labels, m } => {
                let xv = self.value(*x);
                let (_, k) = xv.dims2();
                let mut dx = dy.clone();
                for (r, &y) in labels.iter().enumerate() {
                    // d cos(θ+m)/d cos θ = sin(θ+m)/sin θ, with θ from the
                    // guarded cosine so the ratio stays finite at θ = 0
                    let idx = r * k + y;
                    let c = xv.data[idx];
                    if c.abs() > 1.0 {
                        dx.data[idx] = 0.0;
                    } else {
                        let t = clamp_cos(c).acos();
                        dx.data[idx] *= (t + m).sin() / t.sin();
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::ScaleBy { x, s } => {
                let sv = self.value(*s).item();
                if self.ng(*x) {
                    let mut dx = dy.clone();
                    dx.data.iter_mut().for_each(|v| *v *= sv);
                    self.accumulate(grads, *x, dx);
                }
                if self.ng(*s) {
                    let ds = dy.data.iter().zip(&self.value(*x).data).map(|(a, b)| a * b).sum();
                    self.accumulate(grads, *s, Tensor::scalar(ds));
                }
            }
            Op::ScaleConst { x, c } => {
                let mut dx = dy.clone();
                dx.data.iter_mut().for_each(|v| *v *= c);
                self.accumulate(grads, *x, dx);
            }
            Op::SoftmaxCe { x, labels, probs } => {
                let (n, k) = self.value(*x).dims2();
                let g = dy.item() / n as f64;
                let mut dx = Tensor::from_vec(&[n, k], probs.clone());
                for (r, &y) in labels.iter().enumerate() {
                    dx.data[r * k + y] -= 1.0;
                }
                dx.data.iter_mut().for_each(|v| *v *= g);
                self.accumulate(grads, *x, dx);
            }
            Op::Dot { x, w } => {
                let g = dy.item();
                let dx = Tensor::from_vec(&self.value(*x).shape, w.iter().map(|v| v * g).collect());
                self.accumulate(grads, *x, dx);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(&self, x: Var, w: Var, b: Var, stride: usize, pad: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let xv = self.value(x);
        let wv = self.value(w);
        let (n, c, h, wd) = xv.dims4();
        let (o, _, k, _) = wv.dims4();
        let geom = ConvGeom { c, h, w: wd, k, stride, pad, ho: conv_out(h, k, stride, pad), wo: conv_out(wd, k, stride, pad) };
        let p = geom.ho * geom.wo;
        let ck = c * k * k;
        let (need_x, need_w) = (self.ng(x), self.ng(w));

        if self.ng(b) {
            let mut db = Tensor::zeros(&[o]);
            for s in 0..n {
                for (oc, acc) in db.data.iter_mut().enumerate() {
                    *acc += dy.data[(s * o + oc) * p..][..p].iter().sum::<f64>();
                }
            }
            self.accumulate(grads, b, db);
        }
        if !need_x && !need_w {
            return;
        }
        // Per-sample partials, reduced below in sample order so the result
        // does not depend on the worker count.
        let partials: Vec<(Option<Vec<f64>>, Option<Vec<f64>>)> = (0..n)
            .into_par_iter()
            .map(|s| {
                let xn = &xv.data[s * c * h * wd..(s + 1) * c * h * wd];
                let dyn_ = &dy.data[s * o * p..(s + 1) * o * p];
                let dw = need_w.then(|| {
                    let mut dw = vec![0.0; o * ck];
                    if geom.is_pointwise() {
                        gemm(o, p, ck, dyn_, false, xn, true, &mut dw, 0.0);
                    } else {
                        let mut cols = vec![0.0; ck * p];
                        geom.im2col(xn, &mut cols);
                        gemm(o, p, ck, dyn_, false, &cols, true, &mut dw, 0.0);
                    }
                    dw
                });
                let dx = need_x.then(|| {
                    let mut dcols = vec![0.0; ck * p];
                    gemm(ck, o, p, &wv.data, true, dyn_, false, &mut dcols, 0.0);
                    if geom.is_pointwise() {
                        dcols
                    } else {
                        let mut dx = vec![0.0; c * h * wd];
                        geom.col2im(&dcols, &mut dx);
                        dx
                    }
                });
                (dw, dx)
            })
            .collect();
        if need_w {
            let mut dw = Tensor::zeros(&wv.shape);
            for (part, _) in &partials {
                dw.data.iter_mut().zip(part.as_ref().unwrap()).for_each(|(a, v)| *a += v);
            }
            self.accumulate(grads, w, dw);
        }
        if need_x {
            let mut dx = Vec::with_capacity(xv.numel());
            for (_, part) in partials {
                dx.extend(part.unwrap());
            }
            self.accumulate(grads, x, Tensor::from_vec(&xv.shape, dx));
        }
    }
}
