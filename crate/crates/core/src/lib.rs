//! Black-box adversarial patch placement toolkit.
//!
//! The crate answers one question end to end: given a sign image, where can
//! a small sticker-like patch be pasted so that a classifier changes its
//! answer, without access to the classifier's internals?
//!
//! - [`raster`]: owned 8-bit images (gray/RGB/RGBA) with PNG codec support.
//! - [`imaging`]: the geometry and vision primitives the pipeline is built
//!   from — grayscale, Gaussian blur, Canny edges, morphological closing,
//!   contour tracing and filling, bilinear resize/rotation, and alpha
//!   compositing.
//! - [`mask`]: turning a sign photo into a binary placement mask, grid
//!   placement enumeration, and area-preserving mask shrinking.
//! - [`classifier`]: the oracle abstraction, a builtin CNN inference engine
//!   with a binary weights format, and deterministic stub oracles.
//! - [`search`]: the exhaustive baseline placement search and the optimized
//!   multi-patch search that shrinks the region after the first hit.
//!
//! Everything is deterministic: identical inputs produce bit-identical
//! results regardless of thread count (parallel evaluation merges in a
//! canonical order).

pub mod classifier;
pub mod imaging;
pub mod mask;
pub mod raster;
pub mod search;

pub use classifier::{
    BuiltinClassifier, ClassLabel, Oracle, OracleError, StubClassifier, StubRule, Verdict,
};
pub use mask::{generate_mask, shrink_mask, valid_placements, BinaryMask, MaskParams};
pub use raster::{Channels, Raster};
pub use search::{
    baseline_search, optimized_search, AttackResult, CandidateScore, Patch, Placement,
    SearchConfig, SearchError,
};
