use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{match_and_verify, ImageFeatures, RetrievalConfig, RetrievalIndex};

/// Cosine similarity, computed in f64.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalHit {
    pub id: String,
    /// Position in the index.
    pub index: usize,
    pub cosine: f64,
}

/// Exact ranking by descending cosine, ties by ascending id. Returns at most `k`.
pub fn global_search(index: &RetrievalIndex, query: &[f32], k: usize) -> Vec<GlobalHit> {
    let mut hits: Vec<GlobalHit> = index
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| GlobalHit { id: id.clone(), index: i, cosine: cosine(query, index.global(i)) })
        .collect();
    hits.sort_by(|a, b| b.cosine.total_cmp(&a.cosine).then_with(|| a.id.cmp(&b.id)));
    hits.truncate(k);
    hits
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub cosine: f64,
    /// 0-based position after the global stage.
    pub global_rank: usize,
    /// Verified inliers; `None` for items outside the re-ranked block or when
    /// re-ranking is off.
    pub inliers: Option<usize>,
}

/// RANSAC seed for a (query, candidate) pair.
pub fn pair_seed(query_id: &str, candidate_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(query_id.as_bytes());
    h.update([0]);
    h.update(candidate_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Order the first `top` hits by (inliers desc, cosine desc), keeping the
/// global order for equal keys and for everything after the block.
pub fn rerank(mut hits: Vec<SearchHit>, top: usize) -> Vec<SearchHit> {
    let top = top.min(hits.len());
    hits[..top].sort_by(|a, b| {
        b.inliers.unwrap_or(0).cmp(&a.inliers.unwrap_or(0)).then_with(|| b.cosine.total_cmp(&a.cosine)).then(a.global_rank.cmp(&b.global_rank))
    });
    hits
}

/// Full two-stage search over the whole gallery.
pub fn search(index: &RetrievalIndex, query_id: &str, query: &ImageFeatures, cfg: &RetrievalConfig, rerank_on: bool) -> Vec<SearchHit> {
    let global = global_search(index, &query.global, index.len());
    let top = if rerank_on { cfg.rerank_top.min(global.len()) } else { 0 };
    let verified: Vec<usize> = global[..top]
        .par_iter()
        .map(|h| {
            let seed = pair_seed(query_id, &h.id);
            match_and_verify(&query.locals, &index.features[h.index].locals, &cfg.ransac, seed).inliers
        })
        .collect();
    let hits = global
        .into_iter()
        .enumerate()
        .map(|(rank, h)| SearchHit { id: h.id, cosine: h.cosine, global_rank: rank, inliers: verified.get(rank).copied() })
        .collect();
    if rerank_on {
        rerank(hits, top)
    } else {
        hits
    }
}
