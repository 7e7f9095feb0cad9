//! Exact computation of the best fixed action sequence and of complete
//! policy regret.
//!
//! The dynamic program's state is the ordered tuple of the last `m-1`
//! actions (shorter near game start, so early-game zero padding is exact);
//! the chosen action completes the window and is charged its expected loss
//! at the resulting tally. A sequence-enumeration brute force serves as an
//! independent cross-check on small horizons.

use std::collections::HashMap;

use crate::env::WtbInstance;
use crate::error::{Result, WtbError};
use crate::trace::RunTrace;

/// Default cap on `K^m * T` state-transitions for the dynamic program.
pub const DEFAULT_DP_BUDGET: f64 = 1e8;

/// Cap on `K^T` for the brute-force enumeration.
pub const BRUTE_FORCE_BUDGET: f64 = 1e6;

/// Largest `(T+1) * states` value table for which the argmin sequence is
/// materialized; above it only the exact value is computed.
const SEQUENCE_TABLE_LIMIT: usize = 10_000_000;

/// Minimum cumulative expected loss over all length-`T` action sequences.
#[derive(Debug, Clone)]
pub struct PolicyValue {
    pub value: f64,
    /// One optimal sequence (lexicographically smallest among exact-tie
    /// optima); omitted when the value table would exceed the memory cap.
    pub sequence: Option<Vec<usize>>,
    pub horizon: usize,
}

/// Window states and per-(state, action) transitions for an instance.
struct TransitionTable {
    /// `next[s][a]` = successor state index.
    next: Vec<Vec<usize>>,
    /// `loss[s][a]` = expected loss of playing `a` from state `s`.
    loss: Vec<Vec<f64>>,
}

impl TransitionTable {
    fn states(&self) -> usize {
        self.next.len()
    }
}

/// Enumerates every window state reachable from the empty history, in
/// deterministic breadth-first order (state 0 is the empty window).
fn build_transitions(instance: &WtbInstance) -> Result<TransitionTable> {
    let k = instance.num_actions();
    let depth = instance.memory() - 1;
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut states: Vec<Vec<usize>> = vec![vec![]];
    index.insert(vec![], 0);
    let mut next: Vec<Vec<usize>> = Vec::new();
    let mut loss: Vec<Vec<f64>> = Vec::new();
    let mut cursor = 0;
    while cursor < states.len() {
        let state = states[cursor].clone();
        let mut row_next = Vec::with_capacity(k);
        let mut row_loss = Vec::with_capacity(k);
        for action in 0..k {
            // Window after playing `action`, most recent first.
            let mut window = Vec::with_capacity(depth + 1);
            window.push(action);
            window.extend_from_slice(&state);
            let w = instance.weights_of(action)?;
            let tally: f64 = window
                .iter()
                .enumerate()
                .filter(|&(_, &played)| played == action)
                .map(|(i, _)| w[i])
                .sum();
            row_loss.push(instance.loss_at(action, tally)?);
            window.truncate(depth);
            let successor = *index.entry(window.clone()).or_insert_with(|| {
                states.push(window);
                states.len() - 1
            });
            row_next.push(successor);
        }
        next.push(row_next);
        loss.push(row_loss);
        cursor += 1;
    }
    Ok(TransitionTable { next, loss })
}

fn check_dp_budget(instance: &WtbInstance, horizon: usize, budget: f64) -> Result<()> {
    let transitions = (instance.num_actions() as f64).powi(instance.memory() as i32)
        * horizon as f64;
    if transitions > budget {
        return Err(WtbError::Capacity(format!(
            "dynamic program needs ~{transitions:.3e} state-transitions, budget is {budget:.3e}"
        )));
    }
    Ok(())
}

/// Exact optimum via backward induction, with the argmin sequence
/// reconstructed by a forward greedy walk that prefers the smallest action
/// among exact ties.
pub fn optimal_value_dp(instance: &WtbInstance, horizon: usize) -> Result<PolicyValue> {
    optimal_value_dp_with_budget(instance, horizon, DEFAULT_DP_BUDGET)
}

pub fn optimal_value_dp_with_budget(
    instance: &WtbInstance,
    horizon: usize,
    budget: f64,
) -> Result<PolicyValue> {
    if horizon == 0 {
        return Err(WtbError::Parameter("horizon must be >= 1".into()));
    }
    check_dp_budget(instance, horizon, budget)?;
    let table = build_transitions(instance)?;
    let n = table.states();
    let k = instance.num_actions();

    let materialize = (horizon + 1).saturating_mul(n) <= SEQUENCE_TABLE_LIMIT;
    if materialize {
        // cost_to_go[t][s] = min cost of steps t+1..T from window state s.
        let mut cost_to_go = vec![vec![0.0f64; n]; horizon + 1];
        for t in (0..horizon).rev() {
            for s in 0..n {
                let mut best = f64::INFINITY;
                for a in 0..k {
                    let v = table.loss[s][a] + cost_to_go[t + 1][table.next[s][a]];
                    if v < best {
                        best = v;
                    }
                }
                cost_to_go[t][s] = best;
            }
        }
        let mut sequence = Vec::with_capacity(horizon);
        let mut state = 0usize;
        for t in 0..horizon {
            let target = cost_to_go[t][state];
            let mut chosen = 0usize;
            for a in 0..k {
                let v = table.loss[state][a] + cost_to_go[t + 1][table.next[state][a]];
                if v == target {
                    chosen = a;
                    break;
                }
            }
            sequence.push(chosen);
            state = table.next[state][chosen];
        }
        Ok(PolicyValue {
            value: cost_to_go[0][0],
            sequence: Some(sequence),
            horizon,
        })
    } else {
        let mut future = vec![0.0f64; n];
        let mut current = vec![0.0f64; n];
        for _ in 0..horizon {
            for s in 0..n {
                let mut best = f64::INFINITY;
                for a in 0..k {
                    let v = table.loss[s][a] + future[table.next[s][a]];
                    if v < best {
                        best = v;
                    }
                }
                current[s] = best;
            }
            std::mem::swap(&mut future, &mut current);
        }
        Ok(PolicyValue {
            value: future[0],
            sequence: None,
            horizon,
        })
    }
}

/// Minimum cumulative expected loss over every prefix length in
/// `checkpoints` (ascending timesteps, each `>= 1`), computed in one
/// forward sweep with O(states) memory.
pub fn optimal_prefix_values(
    instance: &WtbInstance,
    checkpoints: &[usize],
    budget: f64,
) -> Result<Vec<f64>> {
    let horizon = *checkpoints.last().ok_or_else(|| {
        WtbError::Parameter("at least one checkpoint is required".into())
    })?;
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints[0] == 0 {
        return Err(WtbError::Parameter(
            "checkpoints must be strictly increasing and >= 1".into(),
        ));
    }
    check_dp_budget(instance, horizon, budget)?;
    let table = build_transitions(instance)?;
    let n = table.states();
    let k = instance.num_actions();

    // reach[s] = min cost over sequences of length t ending in state s.
    let mut reach = vec![f64::INFINITY; n];
    reach[0] = 0.0;
    let mut next_reach = vec![f64::INFINITY; n];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut pending = checkpoints.iter().copied().peekable();
    for t in 1..=horizon {
        next_reach.iter_mut().for_each(|v| *v = f64::INFINITY);
        for s in 0..n {
            let base = reach[s];
            if !base.is_finite() {
                continue;
            }
            for a in 0..k {
                let v = base + table.loss[s][a];
                let target = &mut next_reach[table.next[s][a]];
                if v < *target {
                    *target = v;
                }
            }
        }
        std::mem::swap(&mut reach, &mut next_reach);
        if pending.peek() == Some(&t) {
            pending.next();
            out.push(reach.iter().copied().fold(f64::INFINITY, f64::min));
        }
    }
    Ok(out)
}

/// Independent oracle: enumerates all `K^T` sequences and returns the exact
/// minimum with its lexicographically smallest argmin.
pub fn optimal_value_bruteforce(instance: &WtbInstance, horizon: usize) -> Result<PolicyValue> {
    if horizon == 0 {
        return Err(WtbError::Parameter("horizon must be >= 1".into()));
    }
    let k = instance.num_actions();
    let total = (k as f64).powi(horizon as i32);
    if total > BRUTE_FORCE_BUDGET {
        return Err(WtbError::Capacity(format!(
            "brute force would enumerate {total:.3e} sequences, budget is {BRUTE_FORCE_BUDGET:.3e}"
        )));
    }
    let mut best_value = f64::INFINITY;
    let mut best_sequence = vec![0usize; horizon];
    let mut sequence = vec![0usize; horizon];
    loop {
        let mut window = instance.new_window();
        let mut cost = 0.0;
        for &action in &sequence {
            window.push(action);
            cost += instance.expected_loss(&window, action)?;
        }
        // Lexicographic enumeration plus strict improvement keeps the
        // lexicographically smallest optimum.
        if cost < best_value {
            best_value = cost;
            best_sequence.copy_from_slice(&sequence);
        }
        // Odometer increment, most significant digit first.
        let mut pos = horizon;
        loop {
            if pos == 0 {
                return Ok(PolicyValue {
                    value: best_value,
                    sequence: Some(best_sequence),
                    horizon,
                });
            }
            pos -= 1;
            sequence[pos] += 1;
            if sequence[pos] < k {
                break;
            }
            sequence[pos] = 0;
        }
    }
}

/// Complete policy regret of a recorded run against a precomputed optimum:
/// the trace's cumulative expected loss minus the optimal value. Always
/// non-negative when the optimum covers the same horizon.
pub fn cpr(trace: &RunTrace, optimal: &PolicyValue) -> Result<f64> {
    if trace.len() != optimal.horizon {
        return Err(WtbError::Shape(format!(
            "trace has {} steps but the optimum was computed for horizon {}",
            trace.len(),
            optimal.horizon
        )));
    }
    Ok(trace.cumulative_expected_loss() - optimal.value)
}

/// Checks the floor on the optimal value implied by repeated-exposure
/// optimality: the optimum over `T` steps is at least
/// `T * mu(x*) - alpha * T`. Holds on every valid instance.
pub fn reo_floor_check(instance: &WtbInstance, horizon: usize) -> Result<bool> {
    let (best_action, alpha) = instance.minimal_reo_alpha()?;
    let mu = instance.eventual_loss(best_action)?;
    let optimum = optimal_value_dp(instance, horizon)?;
    let floor = horizon as f64 * mu - alpha * horizon as f64;
    // Small slack absorbs float summation noise in the DP.
    Ok(optimum.value >= floor - 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Feedback, LossRule, WtbInstance};
    use crate::instances;
    use approx::assert_abs_diff_eq;

    fn unweighted(k: usize, m: usize) -> WtbInstance {
        instances::make_synthetic_unweighted(k, m).unwrap()
    }

    #[test]
    fn dp_single_step_picks_cheapest_first_play() {
        let instance = unweighted(2, 2);
        let optimum = optimal_value_dp(&instance, 1).unwrap();
        // Every first play has a partial window, so the loss is 0.5.
        assert_eq!(optimum.value, 0.5);
        assert_eq!(optimum.sequence, Some(vec![0]));
    }

    #[test]
    fn dp_unweighted_small_horizon_value() {
        // K=2, m=2, T=5: playing the distinguished action throughout costs
        // 0.5 on the opening step and 0.35 on the remaining four.
        let instance = unweighted(2, 2);
        let optimum = optimal_value_dp(&instance, 5).unwrap();
        let brute = optimal_value_bruteforce(&instance, 5).unwrap();
        assert_abs_diff_eq!(optimum.value, 1.9, epsilon = 1e-12);
        assert_abs_diff_eq!(brute.value, 1.9, epsilon = 1e-12);
        assert_eq!(optimum.sequence, Some(vec![0; 5]));
    }

    #[test]
    fn dp_matches_bruteforce_on_hidden_pattern_instance() {
        // Hidden bits (1, 0): the only zero-loss context plays the second
        // action now and one step ago but not two steps ago, so the cyclic
        // sequence (x1, x2, x2) scores 0 on every third step and 1 elsewhere.
        let instance = instances::make_prop1(3, &[1, 0]).unwrap();
        let optimum = optimal_value_dp(&instance, 6).unwrap();
        let brute = optimal_value_bruteforce(&instance, 6).unwrap();
        assert_abs_diff_eq!(optimum.value, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(brute.value, 4.0, epsilon = 1e-12);
        for t in 1..=8 {
            let dp = optimal_value_dp(&instance, t).unwrap();
            let bf = optimal_value_bruteforce(&instance, t).unwrap();
            assert_abs_diff_eq!(dp.value, bf.value, epsilon = 1e-12);
        }
    }

    #[test]
    fn dp_matches_bruteforce_on_unweighted_horizons() {
        let instance = unweighted(2, 2);
        for t in 1..=10 {
            let dp = optimal_value_dp(&instance, t).unwrap();
            let bf = optimal_value_bruteforce(&instance, t).unwrap();
            assert_abs_diff_eq!(dp.value, bf.value, epsilon = 1e-12);
        }
    }

    #[test]
    fn bruteforce_single_action_sums_losses() {
        let instance = WtbInstance::new(
            vec![vec![1.0, 1.0]],
            vec![LossRule::Table {
                entries: vec![(2.0, 0.2)],
                default: Some(0.9),
            }],
            Feedback::Deterministic,
        )
        .unwrap();
        let optimum = optimal_value_bruteforce(&instance, 4).unwrap();
        // Only one policy exists: 0.9 on the opening step, then 0.2.
        assert_abs_diff_eq!(optimum.value, 0.9 + 3.0 * 0.2, epsilon = 1e-12);
    }

    #[test]
    fn dp_value_is_monotone_in_horizon() {
        let instance = unweighted(3, 2);
        let mut previous = 0.0;
        for t in 1..=12 {
            let value = optimal_value_dp(&instance, t).unwrap().value;
            assert!(value + 1e-12 >= previous);
            previous = value;
        }
    }

    #[test]
    fn prefix_values_match_per_horizon_dp() {
        let instance = unweighted(3, 3);
        let checkpoints: Vec<usize> = (1..=12).collect();
        let prefix = optimal_prefix_values(&instance, &checkpoints, DEFAULT_DP_BUDGET).unwrap();
        for (i, &t) in checkpoints.iter().enumerate() {
            let dp = optimal_value_dp(&instance, t).unwrap();
            assert_abs_diff_eq!(prefix[i], dp.value, epsilon = 1e-12);
        }
    }

    #[test]
    fn cpr_of_replayed_optimum_is_zero() {
        let instance = unweighted(2, 2);
        let optimum = optimal_value_dp(&instance, 5).unwrap();
        let sequence = optimum.sequence.clone().unwrap();
        let mut trace = RunTrace::new("replay", 0, 5);
        let mut window = instance.new_window();
        for &a in &sequence {
            window.push(a);
            let expected = instance.expected_loss(&window, a).unwrap();
            trace.push(a, expected, expected);
        }
        assert_abs_diff_eq!(cpr(&trace, &optimum).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cpr_of_suboptimal_arm_matches_hand_value() {
        let instance = unweighted(2, 2);
        let optimum = optimal_value_dp(&instance, 5).unwrap();
        let mut trace = RunTrace::new("always-worst", 0, 5);
        let mut window = instance.new_window();
        for _ in 0..5 {
            window.push(1);
            let expected = instance.expected_loss(&window, 1).unwrap();
            trace.push(1, expected, expected);
        }
        assert_abs_diff_eq!(cpr(&trace, &optimum).unwrap(), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn cpr_rejects_horizon_mismatch() {
        let instance = unweighted(2, 2);
        let optimum = optimal_value_dp(&instance, 5).unwrap();
        let trace = RunTrace::new("short", 0, 3);
        assert!(matches!(cpr(&trace, &optimum), Err(WtbError::Shape(_))));
    }

    #[test]
    fn floor_holds_on_unweighted_instance() {
        let instance = unweighted(2, 2);
        // Optimal value at T=20 is 0.5 + 19 * 0.35 = 7.15 >= 20 * 0.35.
        let optimum = optimal_value_dp(&instance, 20).unwrap();
        assert_abs_diff_eq!(optimum.value, 7.15, epsilon = 1e-12);
        assert!(reo_floor_check(&instance, 20).unwrap());
    }

    #[test]
    fn floor_holds_with_equality_for_single_memory() {
        let instance = unweighted(3, 1);
        let optimum = optimal_value_dp(&instance, 15).unwrap();
        assert_abs_diff_eq!(optimum.value, 15.0 * 0.35, epsilon = 1e-12);
        assert!(reo_floor_check(&instance, 15).unwrap());
    }

    #[test]
    fn floor_holds_on_positive_alpha_instance() {
        let instance = instances::make_synthetic_alpha(5, 4).unwrap();
        assert!(reo_floor_check(&instance, 16).unwrap());
    }

    #[test]
    fn dp_budget_is_enforced() {
        let instance = unweighted(5, 3);
        assert!(matches!(
            optimal_value_dp_with_budget(&instance, 10, 100.0),
            Err(WtbError::Capacity(_))
        ));
    }

    #[test]
    fn bruteforce_budget_is_enforced() {
        let instance = unweighted(3, 2);
        assert!(matches!(
            optimal_value_bruteforce(&instance, 20),
            Err(WtbError::Capacity(_))
        ));
    }

    #[test]
    fn argmin_sequence_is_lexicographically_smallest_on_ties() {
        // All losses identical: every sequence is optimal, so the reported
        // one must be all zeros.
        let instance = WtbInstance::new(
            vec![vec![1.0, 1.0]; 3],
            vec![
                LossRule::Table {
                    entries: vec![],
                    default: Some(0.5),
                };
                3
            ],
            Feedback::Deterministic,
        )
        .unwrap();
        let dp = optimal_value_dp(&instance, 6).unwrap();
        let brute = optimal_value_bruteforce(&instance, 6).unwrap();
        assert_eq!(dp.sequence, Some(vec![0; 6]));
        assert_eq!(brute.sequence, Some(vec![0; 6]));
    }
}
