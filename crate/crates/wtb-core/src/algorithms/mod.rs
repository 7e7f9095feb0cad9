//! The epoch-based elimination algorithm and the baselines it is compared
//! against. Every runner emits a [`RunTrace`](crate::trace::RunTrace) of
//! exactly the requested horizon and is deterministic given its seed.

mod epoch_ucb;
mod exp3;
mod schedule;
mod se;

pub use epoch_ucb::{run_epoch_ucb, EPOCH_UCB_ID};
pub use exp3::{
    default_learning_rate, run_exp3, run_exp3_batched, Exp3Params, Exp3State, EXP3_BATCHED_ID,
    EXP3_ID,
};
pub use schedule::{se_schedule, se_schedule_horizonless, EpochSchedule};
pub use se::{run_se, EpochRecord, SeParams, SeRun, SE_ID};

/// Index of the smallest value, preferring the lowest index on exact ties.
pub(crate) fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}
