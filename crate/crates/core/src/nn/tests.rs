use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::model::{self, ModelConfig, ModelParams, StageConfig};
use super::tensor::Tensor;
use super::train::{self, batch_gradients, LabeledImage, TrainConfig};
use super::{Checkpoint, NnError};
use crate::pipeline::{ChannelSelection, ImageTensor};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect())
}

/// Values bounded away from zero, for ops with a kink there.
fn rand_off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = rand_tensor(rng, shape, -1.0, 1.0);
    t.data.iter_mut().for_each(|v| *v = v.signum() * (v.abs() + 0.05));
    t
}

/// Norm-based relative error between analytic and central-difference
/// gradients of `Σ r·f(inputs)` for a random probe `r`, worst over inputs.
fn grad_check(inputs: &[Tensor], seed: u64, f: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    let eval = |vals: &[Tensor], probe: &[f64], grad: bool| -> (f64, Vec<Option<Tensor>>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone(), grad)).collect();
        let out = f(&mut g, &vars);
        let loss = g.dot(out, probe);
        let v = g.value(loss).item();
        if !grad {
            return (v, vec![]);
        }
        let mut grads = g.backward(loss).unwrap();
        (v, vars.iter().map(|x| grads.take(*x)).collect())
    };
    let numel = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let out = f(&mut g, &vars);
        g.value(out).numel()
    };
    let probe: Vec<f64> = (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, analytic) = eval(inputs, &probe, true);
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let an = analytic[i].clone().unwrap_or_else(|| Tensor::zeros(&input.shape));
        let mut fd = vec![0.0; input.numel()];
        let mut vals = inputs.to_vec();
        for (j, slot) in fd.iter_mut().enumerate() {
            let orig = input.data[j];
            vals[i].data[j] = orig + H;
            let up = eval(&vals, &probe, false).0;
            vals[i].data[j] = orig - H;
            let down = eval(&vals, &probe, false).0;
            vals[i].data[j] = orig;
            *slot = (up - down) / (2.0 * H);
        }
        let diff = an.data.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = an.norm().max(fd.iter().map(|v| v * v).sum::<f64>().sqrt()).max(1e-8);
        worst = worst.max(diff / scale);
    }
    worst
}

fn shapes(seed: u64) -> impl Iterator<Item = (u64, ChaCha8Rng)> {
    (0..6u64).map(move |k| (k, ChaCha8Rng::seed_from_u64(seed * 100 + k)))
}

#[test]
fn grad_conv2d() {
    for (k, mut rng) in shapes(1) {
        let (n, c, o) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
        let ks = [1, 3, 3, 1, 3, 3][k as usize];
        let stride = [1, 1, 2, 2, 1, 2][k as usize];
        let pad = if ks == 3 { (k % 2) as usize } else { 0 };
        let (h, w) = (rng.gen_range(3..7), rng.gen_range(3..7));
        let x = rand_tensor(&mut rng, &[n, c, h, w], -1.0, 1.0);
        let wt = rand_tensor(&mut rng, &[o, c, ks, ks], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[o], -1.0, 1.0);
        let err = grad_check(&[x, wt, b], k, |g, v| g.conv2d(v[0], v[1], v[2], stride, pad));
        assert!(err < TOL, "shape {k}: {err}");
    }
}

#[test]
fn grad_pointwise_ops() {
    for (k, mut rng) in shapes(2) {
        let shape = [rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(2..5), rng.gen_range(2..5)];
        let x = rand_off_zero(&mut rng, &shape);
        let y = rand_tensor(&mut rng, &shape, -2.0, 2.0);
        assert!(grad_check(std::slice::from_ref(&x), k, |g, v| g.relu(v[0])) < TOL);
        assert!(grad_check(std::slice::from_ref(&y), k, |g, v| g.softplus(v[0])) < TOL);
        assert!(grad_check(&[x.clone(), y.clone()], k, |g, v| g.add(v[0], v[1])) < TOL);
        assert!(grad_check(std::slice::from_ref(&y), k, |g, v| g.scale(v[0], -0.7)) < TOL);
        let mut even = shape;
        even[2] = 2 * rng.gen_range(1..3);
        even[3] = 2 * rng.gen_range(1..3);
        let z = rand_tensor(&mut rng, &even, -1.0, 1.0);
        assert!(grad_check(&[z], k, |g, v| g.max_pool2(v[0])) < TOL);
    }
}

#[test]
fn grad_gem() {
    for (k, mut rng) in shapes(3) {
        let shape = [rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..5)];
        let x = rand_tensor(&mut rng, &shape, 0.1, 2.0);
        for p in [1.0, 3.0, 4.5] {
            let err = grad_check(std::slice::from_ref(&x), k, |g, v| g.gem(v[0], p));
            assert!(err < TOL, "p={p} shape {k}: {err}");
        }
    }
}

#[test]
fn grad_dense_ops() {
    for (k, mut rng) in shapes(4) {
        let (n, d, o) = (rng.gen_range(1..4), rng.gen_range(2..6), rng.gen_range(1..5));
        let x = rand_tensor(&mut rng, &[n, d], -1.0, 1.0);
        let w = rand_tensor(&mut rng, &[o, d], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[o], -1.0, 1.0);
        assert!(grad_check(&[x.clone(), w.clone(), b], k, |g, v| g.linear(v[0], v[1], v[2])) < TOL);
        assert!(grad_check(std::slice::from_ref(&x), k, |g, v| g.l2_normalize(v[0])) < TOL);
        assert!(grad_check(&[x.clone(), w.clone()], k, |g, v| g.matmul_nt(v[0], v[1])) < TOL);
        let s = Tensor::scalar(rng.gen_range(0.5..3.0));
        assert!(grad_check(&[x.clone(), s], k, |g, v| g.scale_by(v[0], v[1])) < TOL);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..d)).collect();
        let logits = rand_tensor(&mut rng, &[n, d], -3.0, 3.0);
        assert!(grad_check(&[logits], k, |g, v| g.softmax_ce(v[0], &labels)) < TOL);
        let cos = rand_tensor(&mut rng, &[n, d], -0.95, 0.95);
        let err = grad_check(&[cos], k, |g, v| g.arc_margin(v[0], &labels, 0.15));
        assert!(err < TOL, "arc margin {k}: {err}");
    }
}

#[test]
fn grad_attention_pool() {
    for (k, mut rng) in shapes(5) {
        // a single cell makes dA ≈ s·ε/Z², below finite-difference resolution
        let (n, c, h, w) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(2..4), rng.gen_range(1..4));
        let s = rand_tensor(&mut rng, &[n, c, h, w], -1.0, 1.0);
        let a = rand_tensor(&mut rng, &[n, 1, h, w], 0.05, 2.0);
        let err = grad_check(&[s, a], k, |g, v| g.attn_pool(v[0], v[1]));
        assert!(err < TOL, "shape {k}: {err}");
    }
}

#[test]
fn grad_composite_losses() {
    for (k, mut rng) in shapes(6) {
        let (n, d, classes) = (rng.gen_range(1..4), rng.gen_range(2..6), rng.gen_range(2..5));
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let emb = rand_tensor(&mut rng, &[n, d], -1.0, 1.0);
        let w = rand_tensor(&mut rng, &[classes, d], -1.0, 1.0);
        let gamma = Tensor::scalar(30.0);
        let err = grad_check(&[emb, w, gamma], k, |g, v| {
            let e = g.l2_normalize(v[0]);
            let wn = g.l2_normalize(v[1]);
            let cos = g.matmul_nt(e, wn);
            let m = g.arc_margin(cos, &labels, 0.15);
            let logits = g.scale_by(m, v[2]);
            g.softmax_ce(logits, &labels)
        });
        assert!(err < TOL, "arcface {k}: {err}");
    }
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        input: model::InputKind::Dct,
        input_channels: 3,
        input_size: 4,
        stem_width: 3,
        stages: vec![StageConfig { width: 4, blocks: 1, stride: 1 }, StageConfig { width: 5, blocks: 1, stride: 2 }],
        shallow_tap: 0,
        deep_tap: 1,
        global_dim: 4,
        gem_p: 3.0,
        attention_hidden: 3,
        num_classes: 3,
    }
}

fn model_loss(params: &ModelParams, cfg: &ModelConfig, x: &Tensor, labels: &[usize], beta: f64) -> f64 {
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let xv = g.leaf(x.clone(), false);
    let fv = model::build_forward(&mut g, params, &vars, cfg, xv).unwrap();
    let lv = model::build_losses(&mut g, params, &vars, &fv, labels, 0.15, beta);
    g.value(lv.total).item()
}

/// The barrier only acts on the reverse pass, so finite differences of the
/// total loss see the attention loss through S. Backbone parameters are
/// therefore checked at β = 0 (where the analytic and numeric gradients agree
/// by construction) and everything else at β = 1.
#[test]
fn grad_full_model_matches_finite_differences() {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut params = ModelParams::init(&cfg, 3).unwrap();
    // zero biases would put all-zero cells of S exactly on the attention ReLU kink
    for p in params.params.iter_mut().filter(|p| p.name.ends_with(".b")) {
        p.value.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.2..0.2));
    }
    let x = rand_tensor(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
    let labels = [0, 2];
    for beta in [0.0, 1.0] {
        let res = batch_gradients(&params, &cfg, &x, &labels, 0.15, beta).unwrap();
        for (pi, p) in params.params.iter().enumerate() {
            if p.is_backbone() != (beta == 0.0) {
                continue;
            }
            let mut fd = vec![0.0; p.value.numel()];
            for (j, slot) in fd.iter_mut().enumerate() {
                let mut q = params.clone();
                q.params[pi].value.data[j] += H;
                let up = model_loss(&q, &cfg, &x, &labels, beta);
                q.params[pi].value.data[j] -= 2.0 * H;
                let down = model_loss(&q, &cfg, &x, &labels, beta);
                *slot = (up - down) / (2.0 * H);
            }
            let an = &res.grads[pi];
            let diff = an.data.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = an.norm().max(fd.iter().map(|v| v * v).sum::<f64>().sqrt());
            if scale < 1e-10 {
                continue;
            }
            assert!(diff / scale < TOL, "{} (beta {beta}): {}", p.name, diff / scale);
        }
    }
}

#[test]
fn stop_gradient_and_beta() {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = ModelParams::init(&cfg, 9).unwrap();
    let x = rand_tensor(&mut rng, &[3, 3, 4, 4], -1.0, 1.0);
    let labels = [1, 0, 2];
    let r0 = batch_gradients(&params, &cfg, &x, &labels, 0.15, 0.0).unwrap();
    let r1 = batch_gradients(&params, &cfg, &x, &labels, 0.15, 1.0).unwrap();
    for (i, p) in params.params.iter().enumerate() {
        if p.is_backbone() {
            let same = r0.grads[i].data.iter().zip(&r1.grads[i].data).all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "{} changed with beta", p.name);
        }
        if p.is_attention_branch() {
            assert!(r0.grads[i].data.iter().all(|&v| v == 0.0), "{} nonzero at beta=0", p.name);
            assert!(r1.grads[i].data.iter().any(|&v| v != 0.0), "{} zero at beta=1", p.name);
        }
    }
}

#[test]
fn clipping_keeps_groups_separate() {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = ModelParams::init(&cfg, 9).unwrap();
    let x = rand_tensor(&mut rng, &[3, 3, 4, 4], -1.0, 1.0);
    let labels = [1, 0, 2];
    let group_norm = |g: &train::ParamGrads, attn: bool| {
        let s: f64 = params.params.iter().zip(g).filter(|(p, _)| p.is_attention_branch() == attn).map(|(_, t)| t.data.iter().map(|v| v * v).sum::<f64>()).sum();
        s.sqrt()
    };
    let base = batch_gradients(&params, &cfg, &x, &labels, 0.15, 1.0).unwrap().grads;
    let (n_main, n_attn) = (group_norm(&base, false), group_norm(&base, true));
    assert!(n_main > 0.0 && n_attn > 0.0);

    // a loose clip is a no-op
    let mut g = base.clone();
    train::clip_gradients(&params, &mut g, n_main.max(n_attn) * 2.0);
    assert_eq!(g, base);

    // a tight clip caps each group at the limit, keeping directions
    let limit = n_main.min(n_attn) / 4.0;
    let mut g = base.clone();
    train::clip_gradients(&params, &mut g, limit);
    assert!((group_norm(&g, false) - limit).abs() < 1e-9 * limit);
    assert!((group_norm(&g, true) - limit).abs() < 1e-9 * limit);
    let ratio = limit / n_main;
    for (i, p) in params.params.iter().enumerate() {
        if !p.is_attention_branch() {
            for (a, b) in g[i].data.iter().zip(&base[i].data) {
                assert!((a - b * ratio).abs() <= 1e-12 * b.abs().max(1e-300));
            }
        }
    }

    // the backbone update does not depend on beta even with clipping
    let mut other = batch_gradients(&params, &cfg, &x, &labels, 0.15, 7.0).unwrap().grads;
    let mut g = base.clone();
    train::clip_gradients(&params, &mut g, limit);
    train::clip_gradients(&params, &mut other, limit);
    for (i, p) in params.params.iter().enumerate() {
        if p.is_backbone() {
            assert_eq!(g[i], other[i], "{}", p.name);
        }
    }
}

#[test]
fn backward_without_graph() {
    let g = Graph::new();
    let mut other = Graph::new();
    let v = other.leaf(Tensor::scalar(1.0), true);
    assert!(matches!(g.backward(v), Err(NnError::GraphNotBuilt)));
}

#[test]
fn gem_reference_values() {
    let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
    assert!((model::gem(&x, 1.0).item() - 2.5).abs() < 1e-12);
    let want = ((1.0f64 + 8.0 + 27.0 + 64.0) / 4.0).powf(1.0 / 3.0);
    assert!((model::gem(&x, 3.0).item() - want).abs() < 1e-12);
    assert!((want - 2.92402).abs() < 1e-5);
    let c = Tensor::from_vec(&[1, 2, 2, 2], vec![0.7, 0.7, 0.7, 0.7, 5.0, 5.0, 5.0, 5.0]);
    for p in [0.5, 1.0, 3.0, 10.0] {
        let out = model::gem(&c, p);
        assert!((out.data[0] - 0.7).abs() < 1e-12 && (out.data[1] - 5.0).abs() < 1e-12);
    }
}

#[test]
fn gem_bounds_and_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let (h, w) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let x = rand_tensor(&mut rng, &[1, 1, h, w], 0.01, 3.0);
        let (mn, mx) = x.data.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let mut prev = 0.0;
        for p in [0.25, 0.5, 1.0, 2.0, 3.0, 8.0, 32.0, 64.0, 256.0] {
            let v = model::gem(&x, p).item();
            assert!(v >= mn - 1e-12 && v <= mx + 1e-12);
            assert!(v >= prev - 1e-12, "not monotone in p");
            // tight lower bound: max · N^(-1/p)
            assert!(v >= mx * ((h * w) as f64).powf(-1.0 / p) - 1e-12);
            prev = v;
        }
    }
}

#[test]
fn arcface_values() {
    let w = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let e = Tensor::from_vec(&[1, 3], vec![1.0, 0.0, 0.0]);
    let logits = model::arcface_logits(&e, &w, &[0], 0.15, 30.0);
    assert!((logits.data[0] - 30.0 * 0.15f64.cos()).abs() < 1e-5);
    assert!((logits.data[0] - 29.6631).abs() < 1e-4);
    assert!(logits.data[1].abs() < 1e-12);

    // m = 0 is plain scaled-softmax cross-entropy
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut e = rand_tensor(&mut rng, &[3, 4], -1.0, 1.0);
        e.data.chunks_mut(4).for_each(|r| {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.iter_mut().for_each(|v| *v /= n);
        });
        let w = rand_tensor(&mut rng, &[5, 4], -1.0, 1.0);
        let labels = [0, 3, 4];
        let got = model::arcface_loss(&e, &w, &labels, 0.0, 30.0);
        let mut want = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let logits: Vec<f64> = (0..5)
                .map(|k| {
                    let wr = &w.data[k * 4..k * 4 + 4];
                    let n = wr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    30.0 * (0..4).map(|j| e.data[i * 4 + j] * wr[j]).sum::<f64>() / n
                })
                .collect();
            let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
            want += lse - logits[y];
        }
        // the arccos guard perturbs the target cosine by at most ~1e-7·γ
        assert!((got - want / 3.0).abs() < 1e-12 || (got - want / 3.0).abs() < 1e-11 * want.abs().max(1.0));
    }

    // larger target cosine, lower loss
    let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
    let mut last = f64::INFINITY;
    for t in [1.2f64, 0.9, 0.6, 0.3, 0.0] {
        let e = Tensor::from_vec(&[1, 2], vec![t.cos(), t.sin()]);
        let l = model::arcface_loss(&e, &w, &[0], 0.15, 30.0);
        assert!(l < last);
        last = l;
    }
}

#[test]
fn attention_pool_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = rand_tensor(&mut rng, &[2, 3, 2, 3], -1.0, 1.0);
    let pool = |a: &Tensor| {
        let mut g = Graph::new();
        let (sv, av) = (g.leaf(s.clone(), false), g.leaf(a.clone(), false));
        let out = g.attn_pool(sv, av);
        g.value(out).clone()
    };
    let uniform = Tensor::from_vec(&[2, 1, 2, 3], vec![0.5; 12]);
    let avg = pool(&uniform);
    for n in 0..2 {
        for c in 0..3 {
            let mean = s.data[(n * 3 + c) * 6..][..6].iter().sum::<f64>() / 6.0;
            assert!((avg.data[n * 3 + c] - mean).abs() < 1e-7);
        }
    }
    let mut onehot = Tensor::zeros(&[2, 1, 2, 3]);
    onehot.data[4] = 1.0;
    onehot.data[6] = 1.0;
    let picked = pool(&onehot);
    for c in 0..3 {
        assert!((picked.data[c] - s.data[c * 6 + 4]).abs() < 1e-7);
        assert!((picked.data[3 + c] - s.data[(3 + c) * 6]).abs() < 1e-7);
    }
    let a = rand_tensor(&mut rng, &[2, 1, 2, 3], 0.0, 2.0);
    let got = pool(&a);
    for n in 0..2 {
        let mut z = 1e-8;
        for p in 0..6 {
            z += a.data[n * 6 + p];
        }
        for c in 0..3 {
            let mut acc = 0.0;
            for p in 0..6 {
                acc += a.data[n * 6 + p] * s.data[(n * 3 + c) * 6 + p];
            }
            assert!((got.data[n * 3 + c] - acc / z).abs() < 1e-12);
        }
    }
    let aux_w = rand_tensor(&mut rng, &[4, 3], -1.0, 1.0);
    let aux_b = Tensor::zeros(&[4]);
    let l = model::attention_loss(&s, &a, &[1, 3], &aux_w, &aux_b);
    assert!(l.is_finite() && l > 0.0);
}

#[test]
fn global_descriptor_is_unit_norm_and_attention_positive() {
    let cfg = tiny_config();
    let params = ModelParams::init(&cfg, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&mut rng, &[4, 3, 6, 5], -3.0, 3.0);
    let out = model::forward(&params, &cfg, &x).unwrap();
    for row in out.global.data.chunks(cfg.global_dim) {
        assert!((row.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-6);
    }
    assert!(out.attention.data.iter().all(|&a| a > 0.0));
    assert_eq!(out.shallow.shape, vec![4, 4, 6, 5]);
    assert_eq!(out.deep.shape, vec![4, 5, 3, 3]);
    let bad = rand_tensor(&mut rng, &[1, 2, 4, 4], -1.0, 1.0);
    assert!(matches!(model::forward(&params, &cfg, &bad), Err(NnError::ShapeMismatch(_))));
}

#[test]
fn lr_schedule_and_median() {
    let tc = TrainConfig::default();
    let lrs: Vec<f64> = (0..40).map(|e| tc.lr_at(e)).collect();
    for (e, lr) in lrs.iter().enumerate() {
        let want = [0.1, 0.01, 0.001, 0.0001][e / 10];
        assert!((lr - want).abs() < 1e-15 * want.max(1.0) + 1e-18, "epoch {}: {lr}", e + 1);
    }
    assert_eq!(train::median(&mut [3.0, 1.0, 2.0]), 2.0);
    assert_eq!(train::median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
}

fn smoke_images(n_per_class: usize, classes: usize, size: usize) -> Vec<LabeledImage> {
    let mut out = Vec::new();
    for label in 0..classes {
        for i in 0..n_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64((label * 100 + i) as u64);
            let mut img = ImageTensor::new(size, size);
            for r in 0..size {
                for c in 0..size {
                    let stripe = if label == 0 { (c / 4) % 2 } else { (r / 4) % 2 } as f64;
                    for ch in 0..3 {
                        img.data[(r * size + c) * 3 + ch] = (60.0 + 120.0 * stripe + rng.gen_range(-20.0..20.0)).clamp(0.0, 255.0);
                    }
                }
            }
            out.push(LabeledImage { image: img, label });
        }
    }
    out
}

fn smoke_model() -> (ModelConfig, ChannelSelection) {
    let sel = ChannelSelection::lowest(4, 2, 2).unwrap();
    let cfg = ModelConfig {
        input_channels: 8,
        input_size: 4,
        stem_width: 4,
        stages: vec![StageConfig { width: 6, blocks: 1, stride: 1 }, StageConfig { width: 8, blocks: 1, stride: 2 }],
        global_dim: 6,
        attention_hidden: 4,
        num_classes: 2,
        ..ModelConfig::default()
    };
    (cfg, sel)
}

#[test]
fn train_smoke_and_checkpoint_round_trip() {
    let data = smoke_images(4, 2, 40);
    let (cfg, sel) = smoke_model();
    let tc = TrainConfig { epochs: 1, seed: 11, ..TrainConfig::default() };
    let (ckpt, log) = train::train(&data, &cfg, &tc, &sel).unwrap();
    assert_eq!(log.epochs.len(), 1);
    assert!(log.epochs[0].loss.is_finite());
    assert!(ckpt.params.tau > 0.0);
    let init = ModelParams::init(&cfg, 11).unwrap();
    for (p, q) in ckpt.params.params.iter().zip(&init.params) {
        assert_ne!(p.value, q.value, "{} unchanged", p.name);
    }

    let bytes = ckpt.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(back, ckpt);
    for (p, q) in back.params.params.iter().zip(&ckpt.params.params) {
        assert!(p.value.data.iter().zip(&q.value.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    // determinism
    let (again, _) = train::train(&data, &cfg, &tc, &sel).unwrap();
    assert_eq!(again.to_bytes(), bytes);

    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(NnError::CorruptCheckpoint(_))));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..20]), Err(NnError::CorruptCheckpoint(_))));
    let mut wrong_version = bytes.clone();
    wrong_version[4] = 9;
    assert!(matches!(Checkpoint::from_bytes(&wrong_version), Err(NnError::VersionMismatch { found: 9, .. })));

    let other = ModelConfig { global_dim: 7, ..cfg.clone() };
    assert!(matches!(ckpt.ensure_compatible(&other), Err(NnError::ShapeMismatch(_))));
    assert!(ckpt.ensure_compatible(&cfg).is_ok());
}

#[test]
fn train_rejects_bad_datasets() {
    let (cfg, sel) = smoke_model();
    let tc = TrainConfig { epochs: 1, ..TrainConfig::default() };
    assert!(matches!(train::train(&[], &cfg, &tc, &sel), Err(NnError::EmptyDataset)));
    let one = smoke_images(3, 1, 40);
    assert!(matches!(train::train(&one, &cfg, &tc, &sel), Err(NnError::SingleClassDataset)));
}

