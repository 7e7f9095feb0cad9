//! Paired-instance demonstration: every algorithm is run with identical
//! seeds on the memory-one instance and its memory-M sibling. A run that
//! never plays the hidden action M times in a row must observe identical
//! loss sequences on both, since the instances differ only in that context.

use rand::SeedableRng;
use wtb_core::algorithms::{
    run_epoch_ucb, run_exp3, run_exp3_batched, run_se, Exp3Params, SeParams, EPOCH_UCB_ID,
    EXP3_BATCHED_ID, EXP3_ID, SE_ID,
};
use wtb_core::instances::make_adaptivity_pair;
use wtb_core::seeding::derive_seed;
use wtb_core::{Result, RunTrace, WtbError};

/// The hidden action whose loss collapses after M consecutive plays.
pub const HIDDEN_ACTION: usize = 1;

#[derive(Debug, Clone)]
pub struct AlgorithmAdaptivityRow {
    pub algorithm_id: String,
    /// Longest consecutive run of the hidden action on each instance.
    pub longest_run_a: usize,
    pub longest_run_b: usize,
    /// Set when the run never repeated the hidden action M times on the
    /// memory-one instance, in which case it must be true.
    pub observations_identical: Option<bool>,
    pub expected_loss_a: f64,
    pub expected_loss_b: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptivityReport {
    pub memory_bound: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub rows: Vec<AlgorithmAdaptivityRow>,
    /// Cumulative expected loss of always playing the first action (the
    /// memory-one optimum): T/2 on either instance.
    pub always_first_loss: f64,
    /// Cumulative expected loss of always playing the hidden action on the
    /// memory-M instance: exactly M - 1.
    pub always_hidden_loss_b: f64,
}

impl AdaptivityReport {
    /// The indistinguishability property: every run that never repeated
    /// the hidden action observed identical sequences.
    pub fn identities_hold(&self) -> bool {
        self.rows
            .iter()
            .all(|row| row.observations_identical != Some(false))
    }
}

fn longest_run(trace: &RunTrace, action: usize) -> usize {
    let mut best = 0usize;
    let mut current = 0usize;
    for &a in &trace.actions {
        current = if a == action { current + 1 } else { 0 };
        best = best.max(current);
    }
    best
}

pub fn adaptivity_demo(
    memory_bound: usize,
    num_actions: usize,
    horizon: usize,
    master_seed: u64,
) -> Result<AdaptivityReport> {
    if horizon <= 4 * memory_bound {
        return Err(WtbError::Parameter(format!(
            "horizon {horizon} must exceed 4 * memory bound = {}",
            4 * memory_bound
        )));
    }
    let (tb_a, tb_b) = make_adaptivity_pair(memory_bound, num_actions)?;

    let mut rows = Vec::new();
    type Runner<'a> = Box<dyn Fn(&wtb_core::WtbInstance, u64) -> Result<RunTrace> + 'a>;
    let se_params = SeParams::new(memory_bound, 0.1);
    let exp3_params = Exp3Params::default();
    let runners: Vec<(&str, Runner)> = vec![
        (
            SE_ID,
            Box::new(|instance, seed| {
                run_se(instance, horizon, &se_params, seed).map(|r| r.trace)
            }),
        ),
        (
            EXP3_ID,
            Box::new(|instance, seed| run_exp3(instance, horizon, &exp3_params, seed)),
        ),
        (
            EXP3_BATCHED_ID,
            Box::new(|instance, seed| {
                run_exp3_batched(instance, horizon, memory_bound, &exp3_params, seed)
            }),
        ),
        (
            EPOCH_UCB_ID,
            Box::new(|instance, seed| run_epoch_ucb(instance, horizon, memory_bound, seed)),
        ),
    ];
    for (id, runner) in &runners {
        let seed = derive_seed(master_seed, id, 0);
        let trace_a = runner(&tb_a, seed)?;
        let trace_b = runner(&tb_b, seed)?;
        let longest_run_a = longest_run(&trace_a, HIDDEN_ACTION);
        let observations_identical = if longest_run_a < memory_bound {
            Some(trace_a.observed_losses == trace_b.observed_losses)
        } else {
            None
        };
        rows.push(AlgorithmAdaptivityRow {
            algorithm_id: id.to_string(),
            longest_run_a,
            longest_run_b: longest_run(&trace_b, HIDDEN_ACTION),
            observations_identical,
            expected_loss_a: trace_a.cumulative_expected_loss(),
            expected_loss_b: trace_b.cumulative_expected_loss(),
        });
    }

    // Fixed reference policies.
    let always_first_loss = horizon as f64 * 0.5;
    let mut window = tb_b.new_window();
    let mut rng = rand::rngs::StdRng::seed_from_u64(0);
    let always_hidden_loss_b: f64 = (0..horizon)
        .map(|_| {
            tb_b.step(&mut window, HIDDEN_ACTION, &mut rng)
                .map(|obs| obs.expected_loss)
        })
        .sum::<Result<f64>>()?;

    Ok(AdaptivityReport {
        memory_bound,
        num_actions,
        horizon,
        rows,
        always_first_loss,
        always_hidden_loss_b,
    })
}
