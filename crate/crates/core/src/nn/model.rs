use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use super::NnError;
use crate::pipeline::{self, ChannelSelection, ImageTensor, NormStats};

/// What the first convolution consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputKind {
    /// Selected DCT cube channels; stem is a 3×3 stride-1 conv, no pooling.
    Dct,
    /// Spatial RGB planes; stem is a 3×3 stride-2 conv followed by 2×2 max
    /// pooling, the conventional downsampling front end.
    Rgb,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub width: usize,
    pub blocks: usize,
    /// Stride of the stage's first block.
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input: InputKind,
    pub input_channels: usize,
    /// Spatial side of the training input (cube cells for DCT, pixels for RGB).
    pub input_size: usize,
    pub stem_width: usize,
    pub stages: Vec<StageConfig>,
    /// Stage whose output is the shallow map S (local features, attention).
    pub shallow_tap: usize,
    /// Stage whose output is the deep map D (global descriptor).
    pub deep_tap: usize,
    pub global_dim: usize,
    pub gem_p: f64,
    pub attention_hidden: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input: InputKind::Dct,
            input_channels: 64,
            input_size: 56,
            stem_width: 64,
            stages: vec![
                StageConfig { width: 128, blocks: 1, stride: 1 },
                StageConfig { width: 256, blocks: 1, stride: 2 },
            ],
            shallow_tap: 0,
            deep_tap: 1,
            global_dim: 128,
            gem_p: 3.0,
            attention_hidden: 128,
            num_classes: 17,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.to_string()));
        if self.input_channels == 0 || self.stem_width == 0 || self.global_dim == 0 || self.attention_hidden == 0 {
            return bad("zero-sized layer");
        }
        if self.stages.iter().any(|s| s.width == 0 || s.blocks == 0 || s.stride == 0) {
            return bad("stage with zero width, blocks or stride");
        }
        if self.deep_tap >= self.stages.len() || self.shallow_tap >= self.deep_tap {
            return bad("taps must satisfy shallow < deep < stage count");
        }
        if !(self.gem_p > 0.0) {
            return bad("GeM power must be positive");
        }
        if self.num_classes < 2 {
            return bad("need at least two classes");
        }
        if self.input == InputKind::Rgb && self.input_channels != 3 {
            return bad("RGB input has 3 channels");
        }
        Ok(())
    }

    pub fn shallow_width(&self) -> usize {
        self.stages[self.shallow_tap].width
    }

    pub fn deep_width(&self) -> usize {
        self.stages[self.deep_tap].width
    }

    /// Input side in pixels of the training image.
    pub fn image_size(&self) -> usize {
        match self.input {
            InputKind::Dct => self.input_size * 8,
            InputKind::Rgb => self.input_size,
        }
    }

    /// Pixels per shallow-map cell: 8 per DCT cell (or the stem's downsampling
    /// for RGB) times the stage strides up to the shallow tap.
    pub fn shallow_stride_pixels(&self) -> usize {
        let front = match self.input {
            InputKind::Dct => 8,
            InputKind::Rgb => 4,
        };
        front * self.stages[..=self.shallow_tap].iter().map(|s| s.stride).product::<usize>()
    }

    /// Ordered parameter names and shapes.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            ("stem.w".to_string(), vec![self.stem_width, self.input_channels, 3, 3]),
            ("stem.b".to_string(), vec![self.stem_width]),
        ];
        let mut cin = self.stem_width;
        for (si, st) in self.stages.iter().enumerate() {
            for bi in 0..st.blocks {
                let stride = if bi == 0 { st.stride } else { 1 };
                let p = format!("s{si}.b{bi}");
                out.push((format!("{p}.conv1.w"), vec![st.width, cin, 3, 3]));
                out.push((format!("{p}.conv1.b"), vec![st.width]));
                out.push((format!("{p}.conv2.w"), vec![st.width, st.width, 3, 3]));
                out.push((format!("{p}.conv2.b"), vec![st.width]));
                if cin != st.width || stride != 1 {
                    out.push((format!("{p}.proj.w"), vec![st.width, cin, 1, 1]));
                    out.push((format!("{p}.proj.b"), vec![st.width]));
                }
                cin = st.width;
            }
        }
        let (sw, dw, k) = (self.shallow_width(), self.deep_width(), self.num_classes);
        out.extend([
            ("whiten.w".to_string(), vec![self.global_dim, dw]),
            ("whiten.b".to_string(), vec![self.global_dim]),
            ("attn.c1.w".to_string(), vec![self.attention_hidden, sw, 1, 1]),
            ("attn.c1.b".to_string(), vec![self.attention_hidden]),
            ("attn.c2.w".to_string(), vec![1, self.attention_hidden, 1, 1]),
            ("attn.c2.b".to_string(), vec![1]),
            ("aux.w".to_string(), vec![k, sw]),
            ("aux.b".to_string(), vec![k]),
            ("arc.w".to_string(), vec![k, self.global_dim]),
            ("arc.gamma".to_string(), vec![1]),
        ]);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    /// Whether weight decay applies: kernels and matrices, not biases or γ.
    pub fn decays(&self) -> bool {
        self.name.ends_with(".w")
    }

    /// Backbone parameters (stem and residual stages).
    pub fn is_backbone(&self) -> bool {
        self.name.starts_with("stem.") || self.name.starts_with('s') && self.name.as_bytes().get(1).is_some_and(u8::is_ascii_digit)
    }

    pub fn is_attention_branch(&self) -> bool {
        self.name.starts_with("attn.") || self.name.starts_with("aux.")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub params: Vec<Param>,
    /// Attention threshold frozen for inference.
    pub tau: f64,
}

pub const GAMMA_INIT: f64 = 30.0;
const RESIDUAL_INIT_SCALE: f64 = 0.1;

impl ModelParams {
    /// Kaiming fan-in normal init for kernels, zero biases, a down-scaled
    /// second conv in every residual branch (each block starts close to its
    /// shortcut, which keeps activations bounded without normalization
    /// layers), and γ = 30.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = cfg
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let mut t = Tensor::zeros(&shape);
                let fan_in: usize = shape[1..].iter().product();
                let gain = match name.as_str() {
                    "arc.gamma" => {
                        t.data[0] = GAMMA_INIT;
                        None
                    }
                    n if n.ends_with(".b") => None,
                    n if n.ends_with("conv2.w") => Some(2.0 * RESIDUAL_INIT_SCALE * RESIDUAL_INIT_SCALE),
                    n if n.starts_with("stem") || n.contains(".conv1.") || n.contains(".proj.") || n == "attn.c1.w" => Some(2.0),
                    _ => Some(1.0),
                };
                if let Some(gain) = gain {
                    let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).unwrap();
                    t.data.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
                }
                Param { name, value: t }
            })
            .collect();
        Ok(ModelParams { params, tau: 0.0 })
    }

    pub fn index(&self, name: &str) -> usize {
        self.params.iter().position(|p| p.name == name).unwrap_or_else(|| panic!("no parameter {name}"))
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.params[self.index(name)].value
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self.index(name);
        &mut self.params[i].value
    }

    pub fn gamma(&self) -> f64 {
        self.get("arc.gamma").item()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Error unless the parameter names and shapes are exactly those `cfg`
    /// produces.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<(), NnError> {
        let want = cfg.param_shapes();
        if want.len() != self.params.len() {
            return Err(NnError::ShapeMismatch(format!("{} parameters, config expects {}", self.params.len(), want.len())));
        }
        for ((name, shape), p) in want.iter().zip(&self.params) {
            if *name != p.name || *shape != p.value.shape {
                return Err(NnError::ShapeMismatch(format!(
                    "parameter {} {:?}, config expects {} {:?}",
                    p.name, p.value.shape, name, shape
                )));
            }
        }
        Ok(())
    }

    /// Puts every parameter on the graph as a leaf.
    pub fn bind(&self, g: &mut Graph, requires_grad: bool) -> Vec<Var> {
        self.params.iter().map(|p| g.leaf(p.value.clone(), requires_grad)).collect()
    }
}

/// Variables for the four model outputs.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    /// Shallow map S, `[N, shallow_width, h, w]`.
    pub shallow: Var,
    /// Deep map D.
    pub deep: Var,
    /// Attention A = softplus(conv₂(relu(conv₁(S)))), `[N, 1, h, w]`.
    pub attention: Var,
    /// Unit-norm global descriptor g, `[N, global_dim]`.
    pub global: Var,
    /// Attention-weighted pooling of S, input to the auxiliary classifier.
    pub attn_pooled: Var,
}

struct Binder<'a> {
    params: &'a ModelParams,
    vars: &'a [Var],
}

impl Binder<'_> {
    fn v(&self, name: &str) -> Var {
        self.vars[self.params.index(name)]
    }
}

/// Builds the forward pass for `x: [N, input_channels, H, W]`.
pub fn build_forward(g: &mut Graph, params: &ModelParams, vars: &[Var], cfg: &ModelConfig, x: Var) -> Result<ForwardVars, NnError> {
    let shape = &g.value(x).shape;
    if shape.len() != 4 || shape[1] != cfg.input_channels {
        return Err(NnError::ShapeMismatch(format!("input {:?}, model expects {} channels", shape, cfg.input_channels)));
    }
    let b = Binder { params, vars };
    let mut h = match cfg.input {
        InputKind::Dct => g.conv2d(x, b.v("stem.w"), b.v("stem.b"), 1, 1),
        InputKind::Rgb => g.conv2d(x, b.v("stem.w"), b.v("stem.b"), 2, 1),
    };
    h = g.relu(h);
    if cfg.input == InputKind::Rgb {
        h = g.max_pool2(h);
    }
    let mut taps = Vec::with_capacity(cfg.stages.len());
    for (si, st) in cfg.stages.iter().enumerate() {
        for bi in 0..st.blocks {
            let stride = if bi == 0 { st.stride } else { 1 };
            let p = format!("s{si}.b{bi}");
            let mut r = g.conv2d(h, b.v(&format!("{p}.conv1.w")), b.v(&format!("{p}.conv1.b")), stride, 1);
            r = g.relu(r);
            r = g.conv2d(r, b.v(&format!("{p}.conv2.w")), b.v(&format!("{p}.conv2.b")), 1, 1);
            let proj = format!("{p}.proj.w");
            let shortcut = if params.params.iter().any(|q| q.name == proj) {
                g.conv2d(h, b.v(&proj), b.v(&format!("{p}.proj.b")), stride, 0)
            } else {
                h
            };
            let sum = g.add(r, shortcut);
            h = g.relu(sum);
        }
        taps.push(h);
    }
    let (shallow, deep) = (taps[cfg.shallow_tap], taps[cfg.deep_tap]);

    let pooled = g.gem(deep, cfg.gem_p);
    let white = g.linear(pooled, b.v("whiten.w"), b.v("whiten.b"));
    let global = g.l2_normalize(white);

    // Local branch sees S through a gradient barrier.
    let s = g.stop_gradient(shallow);
    let a1 = g.conv2d(s, b.v("attn.c1.w"), b.v("attn.c1.b"), 1, 0);
    let a1 = g.relu(a1);
    let a2 = g.conv2d(a1, b.v("attn.c2.w"), b.v("attn.c2.b"), 1, 0);
    let attention = g.softplus(a2);
    let attn_pooled = g.attn_pool(s, attention);
    Ok(ForwardVars { shallow, deep, attention, global, attn_pooled })
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub arcface: Var,
    pub attention: Var,
}

/// `L = L_arcface + β·L_attention` on top of a forward pass.
pub fn build_losses(
    g: &mut Graph,
    params: &ModelParams,
    vars: &[Var],
    fv: &ForwardVars,
    labels: &[usize],
    margin: f64,
    beta: f64,
) -> LossVars {
    let b = Binder { params, vars };
    let arcface = arcface_graph(g, fv.global, b.v("arc.w"), b.v("arc.gamma"), labels, margin);
    let aux = g.linear(fv.attn_pooled, b.v("aux.w"), b.v("aux.b"));
    let attention = g.softmax_ce(aux, labels);
    let weighted = g.scale(attention, beta);
    let total = g.add(arcface, weighted);
    LossVars { total, arcface, attention }
}

fn arcface_logits_graph(g: &mut Graph, emb: Var, weights: Var, gamma: Var, labels: &[usize], margin: f64) -> Var {
    let wn = g.l2_normalize(weights);
    let cos = g.matmul_nt(emb, wn);
    let marg = g.arc_margin(cos, labels, margin);
    g.scale_by(marg, gamma)
}

fn arcface_graph(g: &mut Graph, emb: Var, weights: Var, gamma: Var, labels: &[usize], margin: f64) -> Var {
    let logits = arcface_logits_graph(g, emb, weights, gamma, labels, margin);
    g.softmax_ce(logits, labels)
}

/// ArcFace logits: `γ·cos(θ_y + m)` for the target class, `γ·cos θ` otherwise,
/// with class weight rows normalized. `emb` rows should be unit-norm.
pub fn arcface_logits(emb: &Tensor, weights: &Tensor, labels: &[usize], margin: f64, gamma: f64) -> Tensor {
    let mut g = Graph::new();
    let (e, w, s) = (g.leaf(emb.clone(), false), g.leaf(weights.clone(), false), g.leaf(Tensor::scalar(gamma), false));
    let out = arcface_logits_graph(&mut g, e, w, s, labels, margin);
    g.value(out).clone()
}

pub fn arcface_loss(emb: &Tensor, weights: &Tensor, labels: &[usize], margin: f64, gamma: f64) -> f64 {
    let mut g = Graph::new();
    let (e, w, s) = (g.leaf(emb.clone(), false), g.leaf(weights.clone(), false), g.leaf(Tensor::scalar(gamma), false));
    let out = arcface_graph(&mut g, e, w, s, labels, margin);
    g.value(out).item()
}

/// Cross-entropy of the auxiliary classifier `(aux_w, aux_b)` applied to the
/// attention-weighted pooling of `shallow` by `attention`.
pub fn attention_loss(shallow: &Tensor, attention: &Tensor, labels: &[usize], aux_w: &Tensor, aux_b: &Tensor) -> f64 {
    let mut g = Graph::new();
    let s = g.leaf(shallow.clone(), false);
    let a = g.leaf(attention.clone(), false);
    let (w, b) = (g.leaf(aux_w.clone(), false), g.leaf(aux_b.clone(), false));
    let pooled = g.attn_pool(s, a);
    let logits = g.linear(pooled, w, b);
    let loss = g.softmax_ce(logits, labels);
    g.value(loss).item()
}

/// GeM pooling of an `[N,C,H,W]` tensor.
pub fn gem(x: &Tensor, p: f64) -> Tensor {
    let mut g = Graph::new();
    let v = g.leaf(x.clone(), false);
    let out = g.gem(v, p);
    g.value(out).clone()
}

/// Inference outputs.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub shallow: Tensor,
    pub deep: Tensor,
    pub attention: Tensor,
    pub global: Tensor,
}

pub fn forward(params: &ModelParams, cfg: &ModelConfig, batch: &Tensor) -> Result<ForwardOutput, NnError> {
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let x = g.leaf(batch.clone(), false);
    let fv = build_forward(&mut g, params, &vars, cfg, x)?;
    Ok(ForwardOutput {
        shallow: g.value(fv.shallow).clone(),
        deep: g.value(fv.deep).clone(),
        attention: g.value(fv.attention).clone(),
        global: g.value(fv.global).clone(),
    })
}

/// Un-normalized network input `[C, H, W]` for one image at its own size:
/// the selected DCT cube channels, or RGB planes.
pub fn raw_input(image: &ImageTensor, cfg: &ModelConfig, selection: &ChannelSelection) -> Result<Tensor, NnError> {
    match cfg.input {
        InputKind::Dct => {
            let cube = pipeline::select_channels(&pipeline::to_dct_cube(image), selection)?;
            Ok(cube_tensor(&cube))
        }
        InputKind::Rgb => {
            let (w, h) = (image.width, image.height);
            let mut data = vec![0.0; 3 * w * h];
            for i in 0..w * h {
                for ch in 0..3 {
                    data[ch * w * h + i] = image.data[i * 3 + ch];
                }
            }
            Ok(Tensor::from_vec(&[3, h, w], data))
        }
    }
}

pub fn cube_tensor(cube: &pipeline::DctCube) -> Tensor {
    Tensor::from_vec(&[cube.num_channels(), cube.blocks_high, cube.blocks_wide], cube.data.clone())
}

/// Per-channel mean and population variance over a set of `[C, H, W]`
/// inputs, pooled over all positions (two-pass).
pub fn input_stats(inputs: &[Tensor]) -> Result<NormStats, NnError> {
    let first = inputs.first().ok_or(pipeline::PipelineError::EmptyTrainingSet)?;
    let c = first.shape[0];
    if let Some(t) = inputs.iter().find(|t| t.shape[0] != c) {
        return Err(NnError::ShapeMismatch(format!("input with {} channels among {c}-channel inputs", t.shape[0])));
    }
    let planes = |ch: usize| inputs.iter().flat_map(move |t| {
        let n = t.numel() / c;
        t.data[ch * n..(ch + 1) * n].iter()
    });
    let count = inputs.iter().map(|t| t.numel() / c).sum::<usize>() as f64;
    let mean: Vec<f64> = (0..c).map(|ch| planes(ch).sum::<f64>() / count).collect();
    let var = (0..c).map(|ch| planes(ch).map(|v| (v - mean[ch]).powi(2)).sum::<f64>() / count).collect();
    Ok(NormStats { mean, var })
}

/// Applies `(x − mean)/sqrt(var + ε)` per channel in place.
pub fn normalize_input(t: &mut Tensor, stats: &NormStats) -> Result<(), NnError> {
    let c = t.shape[0];
    if stats.mean.len() != c {
        return Err(NnError::ShapeMismatch(format!("norm stats for {} channels, input has {c}", stats.mean.len())));
    }
    let plane = t.numel() / c;
    for ch in 0..c {
        let inv = 1.0 / (stats.var[ch] + pipeline::NORM_EPS).sqrt();
        t.data[ch * plane..(ch + 1) * plane].iter_mut().for_each(|v| *v = (*v - stats.mean[ch]) * inv);
    }
    Ok(())
}
