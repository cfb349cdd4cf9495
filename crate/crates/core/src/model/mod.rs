//! The sequential recommender: embedding fusion, causal self-attention blocks and scoring.

pub mod checkpoint;
pub mod forward;
pub mod params;

pub use checkpoint::Checkpoint;
pub use forward::{
    add_positional, attention_block, bind, embed_contexts, embed_items, embed_pairs, encode, forward, fuse,
    score_candidates, score_instances, Bound, Dropout, ForwardOutput, Mode,
};
pub use params::{BlockLayout, ModelConfig, ModelParams, ParamLayout};
