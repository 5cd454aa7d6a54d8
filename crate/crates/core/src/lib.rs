//! Skeletal muscle segmentation of 2-D grayscale slices.
//!
//! The pipeline has two stages:
//!
//! 1. **Tissue classification.** Each slice is cut into non-overlapping
//!    16×16 blocks. Every block gets a 54-component texture descriptor
//!    (36 HOG bins, mean/variance/skewness/kurtosis of the raw and
//!    LoG-filtered block, and 10 Haar wavelet energies). A discrete AdaBoost
//!    ensemble of decision stumps labels each block muscle / non-muscle.
//! 2. **Muscle labeling.** Training masks are aligned to a reference slice
//!    using two keypoints (bone centroid and the most distal convex-hull
//!    vertex) and overlaid into per-muscle probability maps truncated at half
//!    their peak. The binary classifier output is aligned the same way and
//!    each foreground pixel takes the label of the atlas region it lands in.
//!
//! The [`phantom`] module generates deterministic synthetic thigh slices with
//! exact ground truth so that the whole pipeline can be trained and scored
//! without clinical data. [`pipeline`] wires everything into the stage
//! commands exposed by the `myoseg` binary, including leave-one-volume-out
//! cross-validation.
//!
//! Runnable walkthroughs live in `examples/`:
//!
//! ```text
//! cargo run --example phantom_dataset    # synthetic volumes with ground truth
//! cargo run --example texture_features   # block descriptors of one slice
//! cargo run --example train_classifier   # boosting plus a held-out slice
//! cargo run --example registration       # keypoints and alignment
//! cargo run --example atlas_labeling     # atlas construction and label transfer
//! cargo run --example evaluate_masks     # overlap metrics and summaries
//! cargo run --example cross_validation   # leave-one-volume-out on phantoms
//! ```

pub mod atlas;
pub mod boost;
pub mod config;
pub mod error;
pub mod features;
pub mod imgio;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod preproc;

pub use error::{Error, Result};
pub use imgio::{GrayImage, LabelMask, Plane};
