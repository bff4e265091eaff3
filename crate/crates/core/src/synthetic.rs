//! Deterministic synthetic data: a landmark-style retrieval dataset, an
//! affine correspondence scene for RANSAC, and single-patch images.
//!
//! Each class is one procedural scene (gradient background plus textured
//! polygons). Instances view that scene through a random affine camera with
//! photometric jitter, sensor noise and unrelated clutter. Gallery images come
//! in three flavours: mild views (easy), extreme views with occlusion (hard)
//! and 50/50 blends with another class (junk for both classes).

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::{GroundTruth, GtQuery};
use crate::image::RgbImage;
use crate::jpeg::{self, JpegError, Subsampling};
use crate::retrieval::{AffineModel, LocalFeature};

#[derive(Debug, thiserror::Error)]
pub enum SyntheticError {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Jpeg(#[from] JpegError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub images_per_class: usize,
    pub size: usize,
    /// Share of each class going to training; the rest is gallery.
    pub train_fraction: f64,
    pub queries_per_class: usize,
    pub shapes_per_scene: usize,
    /// Stripe/checker frequency range in cycles per scene width.
    pub texture_frequency: [f64; 2],
    pub jpeg_quality: u8,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 17,
            images_per_class: 50,
            size: 448,
            train_fraction: 0.8,
            queries_per_class: 3,
            shapes_per_scene: 7,
            texture_frequency: [2.0, 8.0],
            jpeg_quality: 90,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::InvalidSpec(m.to_string()));
        if self.classes < 2 {
            return bad("need at least 2 classes");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train fraction must lie strictly between 0 and 1");
        }
        let (t, g) = self.split();
        if t == 0 || g == 0 {
            return bad("split leaves a class with no training or gallery images");
        }
        if self.size < 16 {
            return bad("image size below 16 pixels");
        }
        let [lo, hi] = self.texture_frequency;
        if !(lo > 0.0 && hi >= lo) {
            return bad("texture frequency range must be positive and ordered");
        }
        if !(1..=100).contains(&self.jpeg_quality) {
            return bad("jpeg quality must be in 1..=100");
        }
        Ok(())
    }

    /// Per-class (train, gallery) counts.
    pub fn split(&self) -> (usize, usize) {
        let t = (self.images_per_class as f64 * self.train_fraction).round() as usize;
        (t.min(self.images_per_class), self.images_per_class - t.min(self.images_per_class))
    }

    /// Per-class gallery composition (easy, hard, junk).
    pub fn gallery_mix(&self) -> (usize, usize, usize) {
        let g = self.split().1;
        let junk = g / 5;
        let hard = ((g - junk) as f64 * 3.0 / 8.0).round() as usize;
        (g - junk - hard, hard, junk)
    }
}

fn mix(parts: &[u64]) -> u64 {
    // splitmix64 fold
    parts.iter().fold(0x9E37_79B9_7F4A_7C15u64, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(parts))
}

#[derive(Clone, Copy, Debug)]
enum Texture {
    Solid,
    Stripes { freq: f64, angle: f64 },
    Checker { freq: f64 },
    Rings { freq: f64 },
}

#[derive(Clone, Debug)]
struct Shape {
    vertices: Vec<[f64; 2]>,
    colors: [[f64; 3]; 2],
    texture: Texture,
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, center_range: f64, radius: (f64, f64), freq: [f64; 2]) -> Shape {
        let c = [rng.gen_range(-center_range..center_range), rng.gen_range(-center_range..center_range)];
        let n = rng.gen_range(3..=7);
        let base = rng.gen_range(radius.0..radius.1);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let vertices = angles
            .iter()
            .map(|a| {
                let r = base * rng.gen_range(0.6..1.0);
                [c[0] + r * a.cos(), c[1] + r * a.sin()]
            })
            .collect();
        let color = |rng: &mut ChaCha8Rng| [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)];
        let colors = [color(rng), color(rng)];
        let f = rng.gen_range(freq[0]..=freq[1]) * std::f64::consts::PI;
        let texture = match rng.gen_range(0..4) {
            0 => Texture::Solid,
            1 => Texture::Stripes { freq: f, angle: rng.gen_range(0.0..std::f64::consts::PI) },
            2 => Texture::Checker { freq: f },
            _ => Texture::Rings { freq: f },
        };
        Shape { vertices, colors, texture }
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    fn color(&self, p: [f64; 2]) -> [f64; 3] {
        let second = match self.texture {
            Texture::Solid => false,
            Texture::Stripes { freq, angle } => (freq * (p[0] * angle.cos() + p[1] * angle.sin())).sin() > 0.0,
            Texture::Checker { freq } => ((freq * p[0]).sin() * (freq * p[1]).sin()) > 0.0,
            Texture::Rings { freq } => (freq * (p[0] * p[0] + p[1] * p[1]).sqrt() * 2.0).sin() > 0.0,
        };
        self.colors[second as usize]
    }
}

/// One class: background gradient and a stack of textured polygons in scene
/// coordinates `[-1, 1]²`.
#[derive(Clone, Debug)]
struct Scene {
    bg: [[f64; 3]; 2],
    bg_dir: f64,
    shapes: Vec<Shape>,
}

impl Scene {
    fn new(spec: &SyntheticSpec, class: usize) -> Scene {
        let mut rng = rng_for(&[spec.seed, 1, class as u64]);
        let color = |rng: &mut ChaCha8Rng| [rng.gen_range(20.0..235.0), rng.gen_range(20.0..235.0), rng.gen_range(20.0..235.0)];
        let bg = [color(&mut rng), color(&mut rng)];
        let bg_dir = rng.gen_range(0.0..std::f64::consts::TAU);
        let shapes = (0..spec.shapes_per_scene).map(|_| Shape::random(&mut rng, 0.7, (0.2, 0.5), spec.texture_frequency)).collect();
        Scene { bg, bg_dir, shapes }
    }

    fn color(&self, p: [f64; 2]) -> [f64; 3] {
        if let Some(s) = self.shapes.iter().rev().find(|s| s.contains(p)) {
            return s.color(p);
        }
        let t = ((p[0] * self.bg_dir.cos() + p[1] * self.bg_dir.sin()) * 0.5 + 0.5).clamp(0.0, 1.0);
        [0, 1, 2].map(|k| self.bg[0][k] * (1.0 - t) + self.bg[1][k] * t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Easy,
    Hard,
}

struct View {
    /// image `[-1, 1]²` → scene coordinates
    camera: AffineModel,
    gain: f64,
    bias: f64,
    noise: f64,
    clutter: Vec<Shape>,
    occluder: Option<([f64; 4], [f64; 3])>,
}

impl View {
    fn random(rng: &mut ChaCha8Rng, variant: Variant, spec: &SyntheticSpec) -> View {
        let (rot, scale, shift, gain, bias, noise) = match variant {
            Variant::Easy => (8.0, (0.9, 1.1), 0.1, (0.9, 1.1), 10.0, 2.0),
            Variant::Hard => (25.0, (0.55, 0.75), 0.3, (0.7, 1.3), 25.0, 5.0),
        };
        let theta = rng.gen_range(-rot..=rot as f64).to_radians();
        let mut s = rng.gen_range(scale.0..scale.1);
        if variant == Variant::Hard && rng.gen_bool(0.5) {
            // zoom out instead of in
            s = 1.0 / s;
        }
        let aniso = rng.gen_range(0.95..1.05);
        let t = [rng.gen_range(-shift..=shift), rng.gen_range(-shift..=shift)];
        let (c, sn) = (theta.cos(), theta.sin());
        let camera = AffineModel { m: [[s * aniso * c, -s * sn, t[0]], [s * aniso * sn, s * c, t[1]]] };
        let n_clutter = rng.gen_range(1..=2);
        let clutter = (0..n_clutter).map(|_| Shape::random(rng, 0.9, (0.08, 0.18), spec.texture_frequency)).collect();
        let occluder = (variant == Variant::Hard).then(|| {
            let (w, h) = (rng.gen_range(0.5..0.9), rng.gen_range(0.5..0.9));
            let (x, y) = (rng.gen_range(-1.0..1.0 - w), rng.gen_range(-1.0..1.0 - h));
            let g = rng.gen_range(40.0..215.0);
            ([x, y, x + w, y + h], [g, g, g])
        });
        View {
            camera,
            gain: rng.gen_range(gain.0..gain.1),
            bias: rng.gen_range(-bias..=bias),
            noise,
            clutter,
            occluder,
        }
    }

    fn color(&self, scene: &Scene, p: [f64; 2]) -> [f64; 3] {
        if let Some(s) = self.clutter.iter().rev().find(|s| s.contains(p)) {
            return s.color(p);
        }
        if let Some(([x1, y1, x2, y2], c)) = self.occluder {
            if p[0] >= x1 && p[0] < x2 && p[1] >= y1 && p[1] < y2 {
                return c;
            }
        }
        scene.color(self.camera.apply(p)).map(|v| v * self.gain + self.bias)
    }
}

/// 2×2 supersampled render into linear values, before noise and rounding.
fn render_linear(size: usize, f: impl Fn([f64; 2]) -> [f64; 3]) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(size * size);
    let step = 2.0 / size as f64;
    for r in 0..size {
        for c in 0..size {
            let mut acc = [0.0; 3];
            for (dy, dx) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
                let p = [-1.0 + (c as f64 + dx) * step, -1.0 + (r as f64 + dy) * step];
                let v = f(p);
                for k in 0..3 {
                    acc[k] += v[k] / 4.0;
                }
            }
            out.push(acc);
        }
    }
    out
}

fn finish(size: usize, linear: &[[f64; 3]], noise: f64, rng: &mut ChaCha8Rng) -> RgbImage {
    let normal = Normal::new(0.0, noise.max(1e-12)).expect("valid sigma");
    let mut img = RgbImage::new(size, size);
    for (i, px) in linear.iter().enumerate() {
        let v = px.map(|x| (x + normal.sample(rng)).round().clamp(0.0, 255.0) as u8);
        img.put(i / size, i % size, v);
    }
    img
}

fn render_view(spec: &SyntheticSpec, scene: &Scene, variant: Variant, parts: &[u64]) -> RgbImage {
    let mut rng = rng_for(parts);
    let view = View::random(&mut rng, variant, spec);
    let lin = render_linear(spec.size, |p| view.color(scene, p));
    finish(spec.size, &lin, view.noise, &mut rng)
}

fn render_blend(spec: &SyntheticSpec, a: &Scene, b: &Scene, parts: &[u64]) -> RgbImage {
    let mut rng = rng_for(parts);
    let va = View::random(&mut rng, Variant::Easy, spec);
    let vb = View::random(&mut rng, Variant::Easy, spec);
    let lin = render_linear(spec.size, |p| {
        let (x, y) = (va.color(a, p), vb.color(b, p));
        [0, 1, 2].map(|k| 0.5 * (x[k] + y[k]))
    });
    finish(spec.size, &lin, va.noise, &mut rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainItem {
    pub name: String,
    pub class: usize,
    pub variant: Variant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalleryItem {
    pub id: String,
    pub class: usize,
    /// `None` marks a blend.
    pub variant: Option<Variant>,
    /// Second class of a blend.
    pub blend_with: Option<usize>,
}

/// Images plus their labels, held in memory.
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub class_names: Vec<String>,
    pub train: Vec<(TrainItem, RgbImage)>,
    pub gallery: Vec<(GalleryItem, RgbImage)>,
    pub queries: Vec<(String, usize, RgbImage)>,
    pub ground_truth: GroundTruth,
}

pub fn class_name(c: usize) -> String {
    format!("class_{c:02}")
}

/// Render every image. Each image has its own seed, so the work runs in
/// parallel without affecting the output.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset, SyntheticError> {
    spec.validate()?;
    let scenes: Vec<Scene> = (0..spec.classes).map(|c| Scene::new(spec, c)).collect();
    let class_names: Vec<String> = (0..spec.classes).map(class_name).collect();
    let (n_train, _) = spec.split();
    let (n_easy, n_hard, n_junk) = spec.gallery_mix();

    let mut train_items = Vec::new();
    let mut gallery_items = Vec::new();
    for c in 0..spec.classes {
        let mut rng = rng_for(&[spec.seed, 2, c as u64]);
        for i in 0..n_train {
            let variant = if rng.gen_bool(0.7) { Variant::Easy } else { Variant::Hard };
            train_items.push(TrainItem { name: format!("{}_{i:03}", class_names[c]), class: c, variant });
        }
        for i in 0..n_easy + n_hard + n_junk {
            let id = format!("g_{}_{i:03}", class_names[c]);
            let item = if i < n_easy {
                GalleryItem { id, class: c, variant: Some(Variant::Easy), blend_with: None }
            } else if i < n_easy + n_hard {
                GalleryItem { id, class: c, variant: Some(Variant::Hard), blend_with: None }
            } else {
                let other = (c + 1 + (i - n_easy - n_hard) % (spec.classes - 1)) % spec.classes;
                GalleryItem { id, class: c, variant: None, blend_with: Some(other) }
            };
            gallery_items.push(item);
        }
    }
    let query_items: Vec<(String, usize)> = (0..spec.classes)
        .flat_map(|c| (0..spec.queries_per_class).map(move |q| (format!("q_{}_{q:02}", class_name(c)), c)))
        .collect();

    let train = train_items
        .par_iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), render_view(spec, &scenes[t.class], t.variant, &[spec.seed, 3, i as u64])))
        .collect();
    let gallery = gallery_items
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let parts = [spec.seed, 4, i as u64];
            let img = match (g.variant, g.blend_with) {
                (Some(v), _) => render_view(spec, &scenes[g.class], v, &parts),
                (None, Some(o)) => render_blend(spec, &scenes[g.class], &scenes[o], &parts),
                (None, None) => unreachable!("gallery item without variant or blend"),
            };
            (g.clone(), img)
        })
        .collect();
    let queries = query_items
        .par_iter()
        .enumerate()
        .map(|(i, (name, c))| (name.clone(), *c, render_view(spec, &scenes[*c], Variant::Easy, &[spec.seed, 5, i as u64])))
        .collect();

    let ground_truth = ground_truth(&gallery_items, &query_items);
    ground_truth.validate().map_err(|e| SyntheticError::InvalidSpec(e.to_string()))?;
    Ok(SyntheticDataset { spec: spec.clone(), class_names, train, gallery, queries, ground_truth })
}

fn ground_truth(gallery: &[GalleryItem], queries: &[(String, usize)]) -> GroundTruth {
    let queries = queries
        .iter()
        .map(|(name, c)| {
            let mut q = GtQuery { name: name.clone(), bbox: None, easy: vec![], hard: vec![], junk: vec![] };
            for g in gallery {
                match (g.variant, g.class == *c, g.blend_with == Some(*c)) {
                    (Some(Variant::Easy), true, _) => q.easy.push(g.id.clone()),
                    (Some(Variant::Hard), true, _) => q.hard.push(g.id.clone()),
                    (None, true, _) | (None, _, true) => q.junk.push(g.id.clone()),
                    _ => {}
                }
            }
            q
        })
        .collect();
    GroundTruth { gallery: gallery.iter().map(|g| g.id.clone()).collect(), queries }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

/// Written as `dataset.json` at the dataset root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: SyntheticSpec,
    pub classes: Vec<String>,
    pub train: Vec<TrainItem>,
    pub gallery: Vec<GalleryItem>,
    pub queries: Vec<String>,
    pub files: Vec<FileEntry>,
}

pub const GROUND_TRUTH_FILE: &str = "gt.json";
pub const DATASET_MANIFEST_FILE: &str = "dataset.json";

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Encode and write the dataset:
/// `train/<class>/<name>.jpg`, `gallery/<id>.jpg`, `queries/<name>.jpg`,
/// `gt.json` and `dataset.json`.
pub fn write_dataset(ds: &SyntheticDataset, dir: &Path) -> Result<DatasetManifest, SyntheticError> {
    let mut jobs: Vec<(PathBuf, &RgbImage)> = Vec::new();
    for (t, img) in &ds.train {
        jobs.push((Path::new("train").join(&ds.class_names[t.class]).join(format!("{}.jpg", t.name)), img));
    }
    for (g, img) in &ds.gallery {
        jobs.push((Path::new("gallery").join(format!("{}.jpg", g.id)), img));
    }
    for (name, _, img) in &ds.queries {
        jobs.push((Path::new("queries").join(format!("{name}.jpg")), img));
    }
    for c in &ds.class_names {
        std::fs::create_dir_all(dir.join("train").join(c))?;
    }
    std::fs::create_dir_all(dir.join("gallery"))?;
    std::fs::create_dir_all(dir.join("queries"))?;
    let quality = ds.spec.jpeg_quality;
    let files = jobs
        .par_iter()
        .map(|(rel, img)| {
            let bytes = jpeg::encode_rgb(img, quality, Subsampling::Half)?;
            std::fs::write(dir.join(rel), &bytes)?;
            let path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok(FileEntry { path, sha256: hex(&Sha256::digest(&bytes)) })
        })
        .collect::<Result<Vec<_>, SyntheticError>>()?;
    std::fs::write(dir.join(GROUND_TRUTH_FILE), ds.ground_truth.to_json())?;
    let manifest = DatasetManifest {
        spec: ds.spec.clone(),
        classes: ds.class_names.clone(),
        train: ds.train.iter().map(|(t, _)| t.clone()).collect(),
        gallery: ds.gallery.iter().map(|(g, _)| g.clone()).collect(),
        queries: ds.queries.iter().map(|(n, _, _)| n.clone()).collect(),
        files,
    };
    std::fs::write(dir.join(DATASET_MANIFEST_FILE), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(manifest)
}

/// Correspondence scene with a known affine map.
pub struct AffineScene {
    pub truth: AffineModel,
    pub query: Vec<LocalFeature>,
    pub candidate: Vec<LocalFeature>,
    /// Query positions of the true matches.
    pub inlier_points: Vec<[f64; 2]>,
}

/// `inliers` points mapped by a 20° rotation, 1.2 scale and (30, −10)
/// translation with 0.3 px position noise, plus `outliers` pairs whose
/// candidate position is uniform. Every pair shares a random 32-d tag; each
/// side sees the tag with independent noise.
pub fn affine_scene(seed: u64, inliers: usize, outliers: usize) -> AffineScene {
    let mut rng = rng_for(&[seed, 6]);
    let (c, s) = (20f64.to_radians().cos() * 1.2, 20f64.to_radians().sin() * 1.2);
    let truth = AffineModel { m: [[c, -s, 30.0], [s, c, -10.0]] };
    let unit = Normal::new(0.0, 1.0).unwrap();
    let pos_noise = Normal::new(0.0, 0.3).unwrap();
    let dim = 32;
    let mut query = Vec::new();
    let mut candidate = Vec::new();
    let mut inlier_points = Vec::new();
    let noisy = |tag: &[f64], rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = tag.iter().map(|t| t + 0.05 * unit.sample(rng)).collect();
        crate::retrieval::normalize_descriptor(&v)
    };
    for i in 0..inliers + outliers {
        let tag: Vec<f64> = (0..dim).map(|_| unit.sample(&mut rng)).collect();
        let q = [rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)];
        let p = if i < inliers {
            inlier_points.push(q);
            let t = truth.apply(q);
            [t[0] + pos_noise.sample(&mut rng), t[1] + pos_noise.sample(&mut rng)]
        } else {
            [rng.gen_range(0.0..800.0), rng.gen_range(0.0..800.0)]
        };
        let feat = |xy: [f64; 2], d: Vec<f32>| LocalFeature { x: xy[0] as f32, y: xy[1] as f32, scale: 1.0, attention: 1.0, descriptor: d };
        query.push(feat(q, noisy(&tag, &mut rng)));
        candidate.push(feat(p, noisy(&tag, &mut rng)));
    }
    AffineScene { truth, query, candidate, inlier_points }
}

/// A flat background with one textured, high-contrast square patch. The class
/// decides the patch texture; the seed decides its placement, the background
/// level and noise. Returns the image and the patch box `[x1, y1, x2, y2)`.
pub fn patch_image(class: usize, seed: u64, size: usize) -> (RgbImage, [usize; 4]) {
    let mut rng = rng_for(&[seed, 7, class as u64]);
    let side = size * 3 / 8;
    let x1 = rng.gen_range(0..=size - side);
    let y1 = rng.gen_range(0..=size - side);
    let bg = rng.gen_range(100.0..156.0);
    let freq = std::f64::consts::PI / (2.0 + 2.0 * class as f64);
    let lin: Vec<[f64; 3]> = (0..size * size)
        .map(|i| {
            let (r, c) = (i / size, i % size);
            if (x1..x1 + side).contains(&c) && (y1..y1 + side).contains(&r) {
                let (u, v) = ((c - x1) as f64, (r - y1) as f64);
                let on = match class % 3 {
                    0 => (freq * u).sin() > 0.0,
                    1 => (freq * v).sin() > 0.0,
                    _ => ((freq * u).sin() * (freq * v).sin()) > 0.0,
                };
                if on { [250.0, 250.0, 250.0] } else { [5.0, 5.0, 5.0] }
            } else {
                [bg, bg, bg]
            }
        })
        .collect();
    (finish(size, &lin, 2.0, &mut rng), [x1, y1, x1 + side, y1 + side])
}
