use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::graph::Graph;
use super::model::{self, ModelConfig, ModelParams};
use super::tensor::Tensor;
use super::NnError;
use crate::pipeline::{self, ChannelSelection, ImageTensor, NormStats};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// The learning rate is multiplied by `lr_decay` every `lr_step_epochs`.
    pub lr_step_epochs: usize,
    pub lr_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// ArcFace additive angular margin.
    pub margin: f64,
    /// Weight of the attention loss.
    pub beta: f64,
    pub seed: u64,
    /// Random aspect jitter and flips; off means plain resizing.
    pub augment: bool,
    /// Rescale gradients whose L2 norm exceeds this. The attention branch and
    /// the rest of the network are clipped separately, so attention gradients
    /// never scale a backbone update.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_step_epochs: 10,
            lr_decay: 0.1,
            epochs: 40,
            batch_size: 32,
            margin: 0.15,
            beta: 1.0,
            seed: 0,
            augment: true,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay >= 0.0
            && self.lr_step_epochs >= 1
            && self.lr_decay > 0.0
            && self.epochs >= 1
            && self.batch_size >= 1
            && self.margin >= 0.0
            && self.beta >= 0.0
            && self.grad_clip.map_or(true, |c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidConfig(format!("training config out of range: {self:?}")))
        }
    }

    /// Learning rate of a 0-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.lr_step_epochs) as i32)
    }
}

#[derive(Clone, Debug)]
pub struct LabeledImage {
    pub image: ImageTensor,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub arcface_loss: f64,
    pub attention_loss: f64,
    pub tau: f64,
    pub gamma: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

/// Per-parameter gradients in [`ModelParams`] order.
pub type ParamGrads = Vec<Tensor>;

/// Losses and parameter gradients of one batch.
pub struct BatchResult {
    pub loss: f64,
    pub arcface_loss: f64,
    pub attention_loss: f64,
    pub grads: ParamGrads,
    /// Attention map values of the batch.
    pub attention: Vec<f64>,
}

/// Forward and backward pass on one normalized batch `[N, C, H, W]`.
pub fn batch_gradients(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &Tensor,
    labels: &[usize],
    margin: f64,
    beta: f64,
) -> Result<BatchResult, NnError> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= cfg.num_classes) {
        return Err(NnError::InvalidConfig(format!("label {bad} with {} classes", cfg.num_classes)));
    }
    let mut g = Graph::new();
    let vars = params.bind(&mut g, true);
    let x = g.leaf(batch.clone(), false);
    let fv = model::build_forward(&mut g, params, &vars, cfg, x)?;
    let lv = model::build_losses(&mut g, params, &vars, &fv, labels, margin, beta);
    let mut grads = g.backward(lv.total)?;
    let grads = vars
        .iter()
        .zip(&params.params)
        .map(|(v, p)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(&p.value.shape)))
        .collect();
    Ok(BatchResult {
        loss: g.value(lv.total).item(),
        arcface_loss: g.value(lv.arcface).item(),
        attention_loss: g.value(lv.attention).item(),
        grads,
        attention: g.value(fv.attention).data.clone(),
    })
}

/// SGD with momentum: `v ← μ·v + (g + λ·w)`, `w ← w − lr·v`; decay only on
/// kernels and matrices.
pub fn sgd_step(params: &mut ModelParams, grads: &ParamGrads, velocity: &mut [Tensor], lr: f64, momentum: f64, weight_decay: f64) {
    for ((p, g), v) in params.params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let wd = if p.decays() { weight_decay } else { 0.0 };
        for ((w, gi), vi) in p.value.data.iter_mut().zip(&g.data).zip(v.data.iter_mut()) {
            *vi = momentum * *vi + gi + wd * *w;
            *w -= lr * *vi;
        }
    }
}

/// Clip each group (attention branch, everything else) to `max_norm`.
pub fn clip_gradients(params: &ModelParams, grads: &mut ParamGrads, max_norm: f64) {
    for attention_group in [false, true] {
        let members: Vec<usize> =
            (0..grads.len()).filter(|&i| params.params[i].is_attention_branch() == attention_group).collect();
        let norm = members.iter().map(|&i| grads[i].data.iter().map(|g| g * g).sum::<f64>()).sum::<f64>().sqrt();
        if norm > max_norm {
            let s = max_norm / norm;
            for &i in &members {
                grads[i].data.iter_mut().for_each(|g| *g *= s);
            }
        }
    }
}

/// Median, averaging the two middle values of an even-sized set.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    let n = values.len();
    let (_, hi, _) = values.select_nth_unstable_by(n / 2, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        return hi;
    }
    let lo = values[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    0.5 * (lo + hi)
}

/// Builds the normalized input of one image at the model's training size.
fn prepare(
    img: &ImageTensor,
    cfg: &ModelConfig,
    selection: &ChannelSelection,
    stats: Option<&NormStats>,
    augment_seed: Option<u64>,
) -> Result<Tensor, NnError> {
    let size = cfg.image_size();
    let spatial = match augment_seed {
        Some(seed) => pipeline::augment(img, seed, size)?,
        None => pipeline::eval_resize(img, size),
    };
    let mut t = model::raw_input(&spatial, cfg, selection)?;
    if let Some(stats) = stats {
        model::normalize_input(&mut t, stats)?;
    }
    Ok(t)
}

/// Trains from scratch. Normalization statistics come from the plainly resized
/// training images; every epoch sees a fresh shuffle and fresh augmentations,
/// all derived from `train.seed`. τ is reset after each iteration to the
/// median attention value of that batch.
pub fn train(
    data: &[LabeledImage],
    cfg: &ModelConfig,
    tc: &TrainConfig,
    selection: &ChannelSelection,
) -> Result<(Checkpoint, TrainLog), NnError> {
    train_with(data, cfg, tc, selection, |_| {})
}

/// [`train`] with a callback after each epoch.
pub fn train_with(
    data: &[LabeledImage],
    cfg: &ModelConfig,
    tc: &TrainConfig,
    selection: &ChannelSelection,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(Checkpoint, TrainLog), NnError> {
    cfg.validate()?;
    tc.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut labels: Vec<usize> = data.iter().map(|d| d.label).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(NnError::SingleClassDataset);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= cfg.num_classes) {
        return Err(NnError::InvalidConfig(format!("label {bad} with {} classes", cfg.num_classes)));
    }
    if cfg.input == model::InputKind::Dct && selection.count() != cfg.input_channels {
        return Err(NnError::ShapeMismatch(format!(
            "selection keeps {} channels, model expects {}",
            selection.count(),
            cfg.input_channels
        )));
    }

    let plain: Vec<Tensor> = data
        .par_iter()
        .map(|d| prepare(&d.image, cfg, selection, None, None))
        .collect::<Result<_, _>>()?;
    let stats = model::input_stats(&plain)?;
    drop(plain);

    let mut params = ModelParams::init(cfg, tc.seed)?;
    let mut velocity: Vec<Tensor> = params.params.iter().map(|p| Tensor::zeros(&p.value.shape)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 0..tc.epochs {
        let start = Instant::now();
        let lr = tc.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut sum, mut sum_arc, mut sum_att) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(tc.batch_size) {
            let seeds: Vec<u64> = chunk.iter().map(|_| rng.gen()).collect();
            let inputs: Vec<Tensor> = chunk
                .par_iter()
                .zip(&seeds)
                .map(|(&i, &seed)| prepare(&data[i].image, cfg, selection, Some(&stats), tc.augment.then_some(seed)))
                .collect::<Result<_, _>>()?;
            let batch = Tensor::stack(&inputs);
            let labels: Vec<usize> = chunk.iter().map(|&i| data[i].label).collect();
            let mut res = batch_gradients(&params, cfg, &batch, &labels, tc.margin, tc.beta)?;
            if !res.loss.is_finite() {
                return Err(NnError::Diverged { epoch: epoch + 1 });
            }
            if let Some(c) = tc.grad_clip {
                clip_gradients(&params, &mut res.grads, c);
            }
            sgd_step(&mut params, &res.grads, &mut velocity, lr, tc.momentum, tc.weight_decay);
            params.tau = median(&mut res.attention);
            let w = chunk.len() as f64;
            sum += res.loss * w;
            sum_arc += res.arcface_loss * w;
            sum_att += res.attention_loss * w;
        }
        let n = data.len() as f64;
        let entry = EpochLog {
            epoch: epoch + 1,
            lr,
            loss: sum / n,
            arcface_loss: sum_arc / n,
            attention_loss: sum_att / n,
            tau: params.tau,
            gamma: params.gamma(),
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    let ckpt = Checkpoint { config: cfg.clone(), selection: selection.clone(), norm: stats, params };
    Ok((ckpt, log))
}
