use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LocalFeature, RansacConfig};

/// `[a b tx; c d ty]`, mapping query pixels to candidate pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineModel {
    pub m: [[f64; 3]; 2],
}

impl AffineModel {
    pub const IDENTITY: AffineModel = AffineModel { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] };

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = &self.m;
        [m[0][0] * p[0] + m[0][1] * p[1] + m[0][2], m[1][0] * p[0] + m[1][1] * p[1] + m[1][2]]
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Singular values of the linear part, largest first.
    pub fn singular_values(&self) -> (f64, f64) {
        let [[a, b, _], [c, d, _]] = self.m;
        let fro = a * a + b * b + c * c + d * d;
        let det = self.det();
        let disc = (fro * fro - 4.0 * det * det).max(0.0).sqrt();
        (((fro + disc) / 2.0).sqrt(), ((fro - disc) / 2.0).max(0.0).sqrt())
    }

    fn plausible(&self, cfg: &RansacConfig) -> bool {
        let (s1, s2) = self.singular_values();
        s2 > 0.0 && s1 <= cfg.max_scale_change && s2 >= 1.0 / cfg.max_scale_change && s1 <= s2 * cfg.max_anisotropy
    }
}

/// A putative match: query point, candidate point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub query: [f64; 2],
    pub candidate: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub inliers: usize,
    pub model: Option<AffineModel>,
}

impl MatchResult {
    const NONE: MatchResult = MatchResult { inliers: 0, model: None };
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum()
}

fn nearest(from: &LocalFeature, to: &[LocalFeature]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, t) in to.iter().enumerate() {
        let d = sq_dist(&from.descriptor, &t.descriptor);
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

/// Pairs `(i, j)` where query feature `i` and candidate feature `j` are each
/// other's nearest neighbour in descriptor space. Ties go to the lower index.
pub fn mutual_nearest_neighbors(query: &[LocalFeature], candidate: &[LocalFeature]) -> Vec<(usize, usize)> {
    if query.is_empty() || candidate.is_empty() {
        return Vec::new();
    }
    let back: Vec<usize> = candidate.iter().map(|c| nearest(c, query)).collect();
    query.iter().enumerate().filter_map(|(i, q)| {
        let j = nearest(q, candidate);
        (back[j] == i).then_some((i, j))
    })
    .collect()
}

/// Least-squares affine fit. `None` if the query points are (near) collinear
/// or the result is degenerate.
pub fn fit_affine(pairs: &[Correspondence]) -> Option<AffineModel> {
    if pairs.len() < 3 {
        return None;
    }
    // centre the query points for conditioning
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(x, y), p| (x + p.query[0] / n, y + p.query[1] / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let mut rhs = [[0.0; 3]; 2];
    for p in pairs {
        let (x, y) = (p.query[0] - mx, p.query[1] - my);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        for (k, r) in rhs.iter_mut().enumerate() {
            r[0] += x * p.candidate[k];
            r[1] += y * p.candidate[k];
            r[2] += p.candidate[k];
        }
    }
    let det = sxx * syy - sxy * sxy;
    if !(det.abs() > 1e-9 * (sxx + syy).powi(2).max(1e-300)) {
        return None;
    }
    let mut m = [[0.0; 3]; 2];
    for k in 0..2 {
        let a = (syy * rhs[k][0] - sxy * rhs[k][1]) / det;
        let b = (sxx * rhs[k][1] - sxy * rhs[k][0]) / det;
        let t = rhs[k][2] / n;
        m[k] = [a, b, t - a * mx - b * my];
    }
    let model = AffineModel { m };
    (model.det().abs() > 1e-12 && m.iter().flatten().all(|v| v.is_finite())).then_some(model)
}

fn inlier_mask(model: &AffineModel, pairs: &[Correspondence], threshold: f64) -> Vec<bool> {
    let t2 = threshold * threshold;
    pairs
        .iter()
        .map(|p| {
            let q = model.apply(p.query);
            (q[0] - p.candidate[0]).powi(2) + (q[1] - p.candidate[1]).powi(2) <= t2
        })
        .collect()
}

/// Affine RANSAC over correspondences. The input order does not matter: pairs
/// are put in a canonical order before sampling.
pub fn ransac_affine(pairs: &[Correspondence], cfg: &RansacConfig, seed: u64) -> MatchResult {
    if pairs.len() < 3 || pairs.len() < cfg.min_inliers {
        return MatchResult::NONE;
    }
    let mut pairs = pairs.to_vec();
    pairs.sort_by(|a, b| {
        let ka = [a.query[0], a.query[1], a.candidate[0], a.candidate[1]];
        let kb = [b.query[0], b.query[1], b.candidate[0], b.candidate[1]];
        ka.iter().zip(&kb).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let n = pairs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, AffineModel)> = None;
    let mut needed = cfg.max_iterations;
    let mut iter = 0;
    while iter < needed.min(cfg.max_iterations) {
        iter += 1;
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.gen_range(0..n - 2);
        for lo in [i.min(j), i.max(j)] {
            if k >= lo {
                k += 1;
            }
        }
        let Some(model) = fit_affine(&[pairs[i], pairs[j], pairs[k]]).filter(|m| m.plausible(cfg)) else { continue };
        let count = inlier_mask(&model, &pairs, cfg.threshold).iter().filter(|b| **b).count();
        if best.map_or(true, |(c, _)| count > c) {
            best = Some((count, model));
            let w = count as f64 / n as f64;
            let p_good = w.powi(3);
            needed = if p_good >= 1.0 {
                0
            } else {
                ((1.0 - cfg.confidence).ln() / (1.0 - p_good).ln()).ceil().max(0.0) as usize
            };
        }
    }
    let Some((mut count, mut model)) = best else { return MatchResult::NONE };
    // polish on the consensus set while it keeps growing
    for _ in 0..5 {
        let mask = inlier_mask(&model, &pairs, cfg.threshold);
        let inl: Vec<Correspondence> = pairs.iter().zip(&mask).filter(|(_, m)| **m).map(|(p, _)| *p).collect();
        let Some(refit) = fit_affine(&inl).filter(|m| m.plausible(cfg)) else { break };
        let c = inlier_mask(&refit, &pairs, cfg.threshold).iter().filter(|b| **b).count();
        if c < count {
            break;
        }
        let done = c == count && refit == model;
        count = c;
        model = refit;
        if done {
            break;
        }
    }
    if count < cfg.min_inliers.max(3) {
        return MatchResult::NONE;
    }
    MatchResult { inliers: count, model: Some(model) }
}

/// Mutual nearest neighbours followed by affine RANSAC.
pub fn match_and_verify(query: &[LocalFeature], candidate: &[LocalFeature], cfg: &RansacConfig, seed: u64) -> MatchResult {
    let pairs: Vec<Correspondence> = mutual_nearest_neighbors(query, candidate)
        .into_iter()
        .map(|(i, j)| Correspondence {
            query: [query[i].x as f64, query[i].y as f64],
            candidate: [candidate[j].x as f64, candidate[j].y as f64],
        })
        .collect();
    ransac_affine(&pairs, cfg, seed)
}
