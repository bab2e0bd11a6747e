//! Cover-pair synchronization: beat tracking, beat-synchronous block
//! features, fused cross-similarity, top-k binarization, Smith-Waterman
//! alignment and beat-wise time stretching.

pub mod beats;
pub mod features;
pub mod fusion;
pub mod smith_waterman;
pub mod sync;

pub use beats::{onset_envelope, track_beats, BeatGrid};
pub use features::{beat_chroma, beat_sync_features, FeatureKind, FeatureMatrix};
pub use fusion::{affinity, fuse_similarity, FusionConfig};
pub use smith_waterman::{smith_waterman, threshold_count, threshold_top, AlignmentPath, Scoring};
pub use sync::{
    extract_and_stretch, select_window, synchronize, synchronize_with_beats, Snippets, SyncConfig, Synchronization,
};
