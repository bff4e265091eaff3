//! Feature extraction, the gallery index and two-stage search.
//!
//! Stage one ranks the whole gallery by exact cosine similarity of global
//! descriptors. Stage two matches local features against the top candidates,
//! verifies them with an affine RANSAC and reorders that block by inlier count.

mod extract;
mod index;
mod ransac;
mod search;

pub use extract::{extract, extract_jpeg, normalize_descriptor, ImageFeatures, LocalFeature};
pub use index::{build_index, RetrievalIndex, INDEX_VERSION};
pub use ransac::{fit_affine, match_and_verify, mutual_nearest_neighbors, ransac_affine, AffineModel, Correspondence, MatchResult};
pub use search::{cosine, global_search, pair_seed, rerank, search, GlobalHit, SearchHit};

use serde::{Deserialize, Serialize};

use crate::jpeg::JpegError;
use crate::nn::NnError;
use crate::pipeline::PipelineError;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("index version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("index was built with a different checkpoint")]
    ChecksumMismatch,
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("duplicate gallery id {0}")]
    DuplicateId(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Jpeg(#[from] JpegError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Reprojection error (pixels) under which a correspondence is an inlier.
    pub threshold: f64,
    pub max_iterations: usize,
    /// Early exit once a sample free of outliers has been drawn with this
    /// probability.
    pub confidence: f64,
    /// Fewer verified inliers than this count as no match.
    pub min_inliers: usize,
    /// Reject models whose singular values fall outside
    /// `[1/max_scale_change, max_scale_change]`.
    pub max_scale_change: f64,
    /// Reject models whose singular value ratio exceeds this.
    pub max_anisotropy: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            threshold: 10.0,
            max_iterations: 1000,
            confidence: 0.99,
            min_inliers: 4,
            max_scale_change: 4.0,
            max_anisotropy: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Pyramid scales for local features. The global descriptor always uses scale 1.
    pub scales: Vec<f64>,
    pub max_local_features: usize,
    /// Size of the globally ranked block that gets geometric verification.
    pub rerank_top: usize,
    pub ransac: RansacConfig,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            scales: vec![std::f64::consts::FRAC_1_SQRT_2, 1.0, std::f64::consts::SQRT_2],
            max_local_features: 200,
            rerank_top: 100,
            ransac: RansacConfig::default(),
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |m: &str| Err(RetrievalError::InvalidConfig(m.to_string()));
        if self.scales.is_empty() || self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("scales must be positive");
        }
        let r = &self.ransac;
        if !(r.threshold > 0.0) || !(0.0..1.0).contains(&r.confidence) || r.max_iterations == 0 {
            return bad("ransac needs threshold > 0, confidence in [0, 1) and at least one iteration");
        }
        if !(r.max_scale_change >= 1.0 && r.max_anisotropy >= 1.0) {
            return bad("ransac scale and anisotropy limits must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
