//! Labeling passes.
//!
//! Two families: true-spend identification (zero-mixin, ten-block,
//! differ-by-one, pool output merging) and decoy identification
//! (Mordinal, coinbase). Each pass is a pure function of the chain and
//! its parameters; repeated runs produce identical label sets. Passes
//! never apply consequence propagation themselves — see
//! [`propagate_consequences`] and the reaction module for that.

mod coinbase;
mod differ_by_one;
mod mordinal;
mod p2pool;
mod propagate;
mod ten_block;
mod zero_mixin;

pub use coinbase::{
    coinbase_decoys, coinbase_threshold_sweep, default_since, SweepRow, DEFAULT_MAX_INPUTS,
};
pub use differ_by_one::differ_by_one;
pub use mordinal::{
    mordinal_decoys, mordinal_transactions, MORDINAL_MINT_TAG, MORDINAL_TRANSFER_TAG,
};
pub use p2pool::{p2pool_output_merging, HeuristicError};
pub use propagate::propagate_consequences;
pub use ten_block::{ten_block_decoy_bug, TimeWindow, TEN_BLOCK_AGE};
pub use zero_mixin::zero_mixin;
