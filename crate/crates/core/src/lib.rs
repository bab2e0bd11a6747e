//! Cover song analogies: given a song `A`, a cover `A'` of it, and another
//! song `B` by the artist of `A`, synthesize `B'`, a rendition of `B` in the
//! style of `A'`.
//!
//! The pipeline synchronizes `A` and `A'` beat by beat ([`alignment`]),
//! learns paired time-frequency templates with a joint 2D convolutional NMF
//! over their constant-Q spectrograms ([`nmf2d`]), splits `B` into tracks
//! with the templates of `A`, rebuilds each track from grains of the
//! matching track of `A'` ([`musaicing`]), and mixes the result
//! ([`pipeline`]).

pub mod alignment;
pub mod audio;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod musaicing;
pub mod nmf2d;
pub mod pipeline;
pub mod spectral;

pub use audio::{AudioClip, SAMPLE_RATE};
pub use error::{Error, Result};
