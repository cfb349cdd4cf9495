//! Interaction logs, leave-one-out splits, training sequences and evaluation candidates.

pub mod candidates;
pub mod log;
pub mod sequences;
pub mod split;
pub mod synthetic;

pub use candidates::{build_eval_instances, sample_eval_candidates, Candidates, EvalInstance, NUM_EVAL_NEGATIVES};
pub use log::{Event, Interaction, InteractionLog, LoadOptions, UserHistory};
pub use sequences::{build_row, left_pad, SequenceBatch, SequenceBuilder, SequenceRow};
pub use split::{leave_one_out_split, HeldOut, Split, SplitOptions};
