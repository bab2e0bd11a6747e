//! End-to-end orchestration: audio I/O, tempo bookkeeping, stage
//! sequencing, intermediate artifacts and the binary tensor format.

mod config;
mod run;
mod tempo;
pub mod tensor_io;

pub use config::{PipelineConfig, RunManifest, StageTiming};
pub use run::{factorize_clips, loudest_window, match_length, run_pipeline, Factorization, PipelineOutput};
pub use tempo::{output_tempo_factor, post_scale_b_prime, pre_scale_b};
pub use tensor_io::{decode_tensor, dump_array, dump_tensor, encode_tensor, load_tensor, Tensor};
