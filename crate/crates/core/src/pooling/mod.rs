//! Target selection and candidate pooling for the judging study.
//!
//! The pipeline: estimate how many targets are needed ([`required_sample_size`]),
//! score every candidate target for difficulty ([`difficulty_score`]), draw a
//! difficulty-stratified sample ([`stratified_sample`]), then assemble a
//! deduplicated pool of candidates per sampled target from several systems'
//! nearest neighbours and final-turn results ([`build_pool`]).

mod pool;
mod power;
mod runs;
mod sampling;

pub use pool::{build_pool, load_pools, save_pools, Pool, PoolCandidate, SourceKind, SourceList};
pub use power::{
    cohen_d_to_probability, correlation_to_cohens_d, required_sample_size, PowerSpec,
};
pub use runs::{load_run, save_run, Run};
pub use sampling::{band_bounds, difficulty_score, stratified_sample, DIFFICULTY_DEPTH};
