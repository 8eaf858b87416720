//! Rank-parallel solver over a patch partition.
//!
//! Every rank owns a contiguous block of patches and stores vectors over
//! the dofs of its patches, interface dofs replicated. A vector is either
//! accumulated (replicas hold the true value) or distributed (the true
//! value is the sum over replicas); the two forms are distinct types.

mod comm;
mod layout;
mod solver;
mod vector;

pub use comm::{
    decode_frame, encode_frame, make_tag, op, run_ranks, tag_op, Backend, Communicator, InProc, Loopback,
    MessageRecord,
};
pub use layout::{Exchange, RankLayout, RankPartition, SharedSum};
pub use solver::{parallel_dot, parallel_solve, ParallelOptions, ParallelSolve, RankHierarchy, RankLevel, RankOutcome};
pub use vector::{AccumulatedVector, DistributedVector, RankVector};
