//! `dctir bench`: per-epoch training and per-image extraction time for the
//! DCT-cube input against a spatial RGB input on the same backbone.

use std::time::Instant;

use dctir::nn::{self, InputKind, LabeledImage, ModelConfig};
use dctir::retrieval;
use dctir::workflow::{ExperimentConfig, WorkflowError};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Sample variance (n - 1 denominator); 0 for a single sample.
    pub variance: f64,
}

impl Timing {
    fn from_samples(samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = if samples.len() > 1 { samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Timing { samples, mean, variance }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub input: InputKind,
    pub channels: usize,
    /// Spatial size of what the stem convolves: cube cells or pixels.
    pub size: [usize; 2],
    pub stem_input_area: usize,
    pub epoch_seconds: Timing,
    pub extract_seconds_per_image: Timing,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub images: usize,
    pub repeats: usize,
    pub rows: Vec<BenchRow>,
    /// DCT stem area over RGB stem area.
    pub stem_area_ratio: f64,
}

/// The two configurations compared: a 56×56 cube with the configured channel
/// selection, and 224×224×3 pixels through the stride-2 stem.
pub fn variants(cfg: &ExperimentConfig, num_classes: usize) -> Vec<(String, ModelConfig)> {
    let base = ModelConfig { num_classes, ..cfg.model.clone() };
    vec![
        ("dct".to_string(), ModelConfig { input: InputKind::Dct, input_channels: cfg.selection.count(), input_size: 56, ..base.clone() }),
        ("rgb".to_string(), ModelConfig { input: InputKind::Rgb, input_channels: 3, input_size: 224, ..base }),
    ]
}

/// Every `k`-th image so that a capped subset still spans the classes.
pub fn subsample(data: Vec<LabeledImage>, max_images: usize) -> Vec<LabeledImage> {
    let step = data.len().div_ceil(max_images.max(1)).max(1);
    data.into_iter().step_by(step).collect()
}

pub fn run(data: &[LabeledImage], num_classes: usize, cfg: &ExperimentConfig, repeats: usize) -> Result<BenchReport, WorkflowError> {
    let mut rows = Vec::new();
    let train = nn::TrainConfig { epochs: 1, ..cfg.train.clone() };
    for (name, model) in variants(cfg, num_classes) {
        let (mut epochs, mut extracts) = (Vec::new(), Vec::new());
        for _ in 0..repeats {
            let (ckpt, log) = nn::train(data, &model, &train, &cfg.selection)?;
            epochs.push(log.epochs.iter().map(|e| e.seconds).sum::<f64>());
            let t = Instant::now();
            for d in data {
                retrieval::extract(&ckpt, &d.image, &cfg.retrieval)?;
            }
            extracts.push(t.elapsed().as_secs_f64() / data.len() as f64);
        }
        rows.push(BenchRow {
            name,
            input: model.input,
            channels: model.input_channels,
            size: [model.input_size, model.input_size],
            stem_input_area: model.input_size * model.input_size,
            epoch_seconds: Timing::from_samples(epochs),
            extract_seconds_per_image: Timing::from_samples(extracts),
        });
    }
    let stem_area_ratio = rows[0].stem_input_area as f64 / rows[1].stem_input_area as f64;
    Ok(BenchReport { images: data.len(), repeats, rows, stem_area_ratio })
}
