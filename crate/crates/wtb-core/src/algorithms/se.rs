use rand::rngs::StdRng;
use rand::SeedableRng;

use super::schedule::{se_schedule, se_schedule_horizonless, EpochSchedule};
use super::argmin_first;
use crate::env::WtbInstance;
use crate::error::{Result, WtbError};
use crate::trace::RunTrace;

pub const SE_ID: &str = "se";

#[derive(Debug, Clone)]
pub struct SeParams {
    /// Upper bound `M` on the (unknown) memory capacity. The regret
    /// guarantee needs `M >= m`; the algorithm itself never reads `m`.
    pub m_upper: usize,
    pub delta: f64,
    /// Use the horizon-free radii (requires `delta < 0.009`).
    pub horizonless: bool,
}

impl SeParams {
    pub fn new(m_upper: usize, delta: f64) -> Self {
        SeParams {
            m_upper,
            delta,
            horizonless: false,
        }
    }
}

/// What one completed epoch did: who was alive, how many recorded pulls
/// each got, the radius, the per-action estimates, and the outcome.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub surviving_before: Vec<usize>,
    pub pulls: usize,
    pub radius: f64,
    /// Aligned with `surviving_before`.
    pub estimates: Vec<f64>,
    pub incumbent: usize,
    pub surviving_after: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SeRun {
    pub trace: RunTrace,
    /// Actions never eliminated.
    pub surviving: Vec<usize>,
    pub epochs: Vec<EpochRecord>,
    pub schedule: EpochSchedule,
}

/// Runs successive elimination over eventual losses: per epoch each
/// surviving action is played `n_s` discarded times (to fill its window)
/// and `n_s` recorded times, the empirical means are compared, and every
/// action more than twice the radius above the incumbent is dropped. After
/// the final epoch, or as soon as the next epoch would not fit in the
/// remaining budget, the incumbent is played for all remaining timesteps.
pub fn run_se(
    instance: &WtbInstance,
    horizon: usize,
    params: &SeParams,
    seed: u64,
) -> Result<SeRun> {
    let k = instance.num_actions();
    let schedule = if params.horizonless {
        se_schedule_horizonless(params.m_upper, k, params.delta)?
    } else {
        se_schedule(horizon, params.m_upper, k, params.delta)?
    };
    if horizon == 0 {
        return Err(WtbError::Parameter("horizon must be >= 1".into()));
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let mut window = instance.new_window();
    let mut trace = RunTrace::new(SE_ID, seed, horizon);
    let mut surviving: Vec<usize> = (0..k).collect();
    let mut incumbent = surviving[0];
    let mut epochs: Vec<EpochRecord> = Vec::new();

    let mut epoch = 1usize;
    while trace.len() < horizon && epoch <= schedule.num_epochs {
        let pulls = schedule.pulls(epoch, surviving.len());
        if !schedule.horizonless {
            let needed = 2usize
                .saturating_mul(pulls)
                .saturating_mul(surviving.len());
            if trace.len().saturating_add(needed) > horizon {
                break;
            }
        }
        let mut estimates = Vec::with_capacity(surviving.len());
        let mut truncated = false;
        'sweep: for &action in &surviving {
            for _ in 0..pulls {
                if trace.len() == horizon {
                    truncated = true;
                    break 'sweep;
                }
                let obs = instance.step(&mut window, action, &mut rng)?;
                trace.push(action, obs.observed_loss, obs.expected_loss);
            }
            let mut sum = 0.0;
            let mut recorded = 0usize;
            for _ in 0..pulls {
                if trace.len() == horizon {
                    truncated = true;
                    break 'sweep;
                }
                let obs = instance.step(&mut window, action, &mut rng)?;
                trace.push(action, obs.observed_loss, obs.expected_loss);
                sum += obs.observed_loss;
                recorded += 1;
            }
            estimates.push(sum / recorded as f64);
        }
        if truncated {
            // Horizon ran out mid-sweep: the partial epoch's estimates are
            // not comparable, so no elimination happens.
            break;
        }
        let best = argmin_first(&estimates);
        incumbent = surviving[best];
        let radius = schedule.radius(pulls);
        let threshold = estimates[best] + 2.0 * radius;
        let surviving_after: Vec<usize> = surviving
            .iter()
            .zip(&estimates)
            .filter(|&(_, &est)| est <= threshold)
            .map(|(&x, _)| x)
            .collect();
        epochs.push(EpochRecord {
            epoch,
            surviving_before: surviving.clone(),
            pulls,
            radius,
            estimates,
            incumbent,
            surviving_after: surviving_after.clone(),
        });
        surviving = surviving_after;
        epoch += 1;
    }

    while trace.len() < horizon {
        let obs = instance.step(&mut window, incumbent, &mut rng)?;
        trace.push(incumbent, obs.observed_loss, obs.expected_loss);
    }
    Ok(SeRun {
        trace,
        surviving,
        epochs,
        schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Feedback, LossRule, WtbInstance};
    use crate::instances;

    /// Unweighted two-arm instance with the noise removed, so empirical
    /// means equal 0.35 / 0.5 exactly.
    fn deterministic_two_arm() -> WtbInstance {
        instances::make_synthetic_unweighted(2, 2)
            .unwrap()
            .with_feedback(Feedback::Deterministic)
            .unwrap()
    }

    #[test]
    fn eliminates_exactly_when_radius_crosses_the_gap() {
        // With K=2, M=2, delta=0.1, T=6e5 the schedule has 15 epochs; the
        // radius first satisfies 2*C_s < 0.15 at epoch 15 (2*C_15 = 0.112
        // against 2*C_14 = 0.158), so with zero-variance feedback the
        // suboptimal arm is dropped exactly there and every remaining step
        // plays the good arm.
        let run = run_se(
            &deterministic_two_arm(),
            600_000,
            &SeParams::new(2, 0.1),
            3,
        )
        .unwrap();
        assert_eq!(run.schedule.num_epochs, 15);
        assert_eq!(run.surviving, vec![0]);
        for record in &run.epochs {
            let eliminated = record.surviving_after.len() < record.surviving_before.len();
            if 2.0 * record.radius >= 0.15 {
                assert!(!eliminated, "epoch {} eliminated too early", record.epoch);
            } else {
                assert!(eliminated, "epoch {} failed to eliminate", record.epoch);
            }
            assert_eq!(record.incumbent, 0);
            assert!(record.estimates.iter().all(|e| (0.0..=1.0).contains(e)));
        }
        assert_eq!(run.epochs.last().unwrap().epoch, 15);
        // Post-epoch steps all play the incumbent.
        let epoch_steps: usize = run.epochs.iter().map(|r| 2 * r.pulls * r.surviving_before.len()).sum();
        assert!(run.trace.actions[epoch_steps..].iter().all(|&a| a == 0));
        assert_eq!(run.trace.len(), 600_000);
    }

    #[test]
    fn single_action_runs_to_completion() {
        let instance = WtbInstance::new(
            vec![vec![1.0, 1.0]],
            vec![LossRule::Table {
                entries: vec![(2.0, 0.2)],
                default: Some(0.9),
            }],
            Feedback::Deterministic,
        )
        .unwrap();
        let run = run_se(&instance, 500, &SeParams::new(2, 0.1), 0).unwrap();
        assert_eq!(run.trace.len(), 500);
        assert_eq!(run.surviving, vec![0]);
        assert!(run.trace.actions.iter().all(|&a| a == 0));
    }

    #[test]
    fn surviving_set_never_grows_and_incumbent_survives() {
        let instance = instances::make_synthetic_unweighted(5, 3).unwrap();
        let run = run_se(&instance, 20_000, &SeParams::new(3, 0.1), 11).unwrap();
        for record in &run.epochs {
            assert!(record.surviving_after.len() <= record.surviving_before.len());
            assert!(record.surviving_after.contains(&record.incumbent));
        }
        assert_eq!(run.trace.len(), 20_000);
    }

    #[test]
    fn identical_seeds_reproduce_the_trace() {
        let instance = instances::make_synthetic_unweighted(4, 2).unwrap();
        let a = run_se(&instance, 5_000, &SeParams::new(2, 0.1), 9).unwrap();
        let b = run_se(&instance, 5_000, &SeParams::new(2, 0.1), 9).unwrap();
        assert_eq!(a.trace, b.trace);
        let c = run_se(&instance, 5_000, &SeParams::new(2, 0.1), 10).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn horizonless_variant_truncates_mid_sweep() {
        let instance = deterministic_two_arm();
        let params = SeParams {
            m_upper: 2,
            delta: 0.005,
            horizonless: true,
        };
        let run = run_se(&instance, 1_000, &params, 1).unwrap();
        // Epochs keep growing until the budget cuts a sweep short.
        assert_eq!(run.trace.len(), 1_000);
        assert!(run.schedule.horizonless);
        let horizon_mode = run_se(&instance, 1_000, &SeParams::new(2, 0.05), 1).unwrap();
        assert_eq!(horizon_mode.trace.len(), 1_000);
    }

    #[test]
    fn horizonless_delta_gate() {
        let instance = deterministic_two_arm();
        let params = SeParams {
            m_upper: 2,
            delta: 0.05,
            horizonless: true,
        };
        assert!(run_se(&instance, 100, &params, 0).is_err());
    }
}
