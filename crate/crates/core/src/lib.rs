//! Image retrieval computed from JPEG DCT coefficients.
//!
//! The crate covers the whole path from a JPEG byte stream to a ranked list:
//!
//! * [`dct`]: 8×8 transforms, zig-zag order, quantization, colour conversion.
//! * [`jpeg`]: baseline JPEG parsing to quantized coefficients and encoding.
//! * [`pipeline`]: DCT cube construction, channel selection, normalization.
//! * [`nn`]: a small residual network with a GeM global head and an attention
//!   local head, trained with exact reverse-mode gradients.
//! * [`retrieval`]: feature extraction, gallery index, global search and
//!   RANSAC-verified re-ranking.
//! * [`eval`]: Easy/Medium/Hard mAP evaluation.
//! * [`synthetic`]: deterministic datasets and fixtures.

pub mod dct;
pub mod eval;
pub mod image;
pub mod jpeg;
pub mod nn;
pub mod pipeline;
pub mod retrieval;
pub mod synthetic;
pub mod workflow;
