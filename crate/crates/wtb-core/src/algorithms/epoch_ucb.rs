use rand::rngs::StdRng;
use rand::SeedableRng;

use super::argmin_first;
use crate::env::WtbInstance;
use crate::error::{Result, WtbError};
use crate::trace::RunTrace;

pub const EPOCH_UCB_ID: &str = "epoch-ucb";

/// Confidence-bound baseline in epochs of length `M`: at each epoch start
/// the arm minimizing `mean - sqrt(2 ln t / n)` is played `M` times in a
/// row, and only the final observation is recorded (it estimates the arm's
/// eventual loss). Unvisited arms are selected first in index order; `t`
/// counts epochs. A trailing partial epoch plays its arm without recording.
pub fn run_epoch_ucb(
    instance: &WtbInstance,
    horizon: usize,
    m_upper: usize,
    seed: u64,
) -> Result<RunTrace> {
    if m_upper == 0 {
        return Err(WtbError::Parameter("memory bound must be >= 1".into()));
    }
    if m_upper > horizon {
        return Err(WtbError::Parameter(format!(
            "memory bound {m_upper} exceeds horizon {horizon}"
        )));
    }
    let k = instance.num_actions();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut window = instance.new_window();
    let mut trace = RunTrace::new(EPOCH_UCB_ID, seed, horizon);
    let mut episodes = vec![0usize; k];
    let mut means = vec![0.0f64; k];
    let mut epoch = 0usize;
    while trace.len() < horizon {
        epoch += 1;
        let arm = match episodes.iter().position(|&n| n == 0) {
            Some(unvisited) => unvisited,
            None => {
                let bonus = (2.0 * (epoch as f64).ln()).sqrt();
                let indices: Vec<f64> = (0..k)
                    .map(|a| means[a] - bonus / (episodes[a] as f64).sqrt())
                    .collect();
                argmin_first(&indices)
            }
        };
        let steps = m_upper.min(horizon - trace.len());
        let mut last = 0.0;
        for _ in 0..steps {
            let obs = instance.step(&mut window, arm, &mut rng)?;
            trace.push(arm, obs.observed_loss, obs.expected_loss);
            last = obs.observed_loss;
        }
        if steps == m_upper {
            episodes[arm] += 1;
            means[arm] += (last - means[arm]) / episodes[arm] as f64;
        }
    }
    Ok(trace)
}
