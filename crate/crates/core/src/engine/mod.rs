//! Path simulation of the statistics (A), (Apr), (B), (Bpr) and the running
//! maximum, with incremental updates and dyadic checkpoints.

pub mod accum;
pub mod embed;
pub mod path;

pub use embed::{blocked_sum_of_squares, decoupled_block_embed, BlockEmbedding};
pub use path::{draw_sample, run_path, Checkpoint, NewSample, PathDiagnostics, PathMode, PathOptions, PathState};
