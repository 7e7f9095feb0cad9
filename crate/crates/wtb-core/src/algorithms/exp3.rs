use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::env::WtbInstance;
use crate::error::{Result, WtbError};
use crate::trace::RunTrace;

pub const EXP3_ID: &str = "exp3";
pub const EXP3_BATCHED_ID: &str = "exp3b";

#[derive(Debug, Clone, Default)]
pub struct Exp3Params {
    /// Defaults to `sqrt(2 ln K / (rounds * K))`.
    pub learning_rate: Option<f64>,
    /// Uniform-mixing weight in [0, 1]; 0 is plain exponential weights.
    pub exploration_mix: f64,
}

/// Exponential-weights state over losses. Log-domain weights keep the
/// induced distribution normalized and strictly positive after any number
/// of updates.
#[derive(Debug, Clone)]
pub struct Exp3State {
    log_weights: Vec<f64>,
    learning_rate: f64,
    exploration_mix: f64,
}

/// `sqrt(2 ln K / (rounds * K))`; zero for a single action.
pub fn default_learning_rate(num_actions: usize, rounds: usize) -> f64 {
    if num_actions <= 1 || rounds == 0 {
        return 0.0;
    }
    (2.0 * (num_actions as f64).ln() / (rounds as f64 * num_actions as f64)).sqrt()
}

impl Exp3State {
    pub fn new(num_actions: usize, learning_rate: f64, exploration_mix: f64) -> Result<Self> {
        if num_actions == 0 {
            return Err(WtbError::Parameter("need at least one action".into()));
        }
        if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
            return Err(WtbError::Parameter(format!(
                "learning rate {learning_rate} must be finite and >= 0"
            )));
        }
        if !(0.0..=1.0).contains(&exploration_mix) {
            return Err(WtbError::Parameter(format!(
                "exploration mix {exploration_mix} must lie in [0, 1]"
            )));
        }
        Ok(Exp3State {
            log_weights: vec![0.0; num_actions],
            learning_rate,
            exploration_mix,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.log_weights.len()
    }

    /// Sampling distribution: `(1 - mix) * softmax(log weights) + mix / K`.
    pub fn probabilities(&self) -> Vec<f64> {
        let k = self.log_weights.len();
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.log_weights.iter().map(|w| (w - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter()
            .map(|e| (1.0 - self.exploration_mix) * e / total + self.exploration_mix / k as f64)
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let probs = self.probabilities();
        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        for (action, &p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                return (action, p);
            }
        }
        (probs.len() - 1, probs[probs.len() - 1])
    }

    /// Importance-weighted loss update: the estimate `loss / probability`
    /// is unbiased for the played action's loss and zero elsewhere.
    pub fn update(&mut self, action: usize, loss: f64, probability: f64) {
        self.log_weights[action] -= self.learning_rate * loss / probability;
    }
}

/// Plain exponential weights on observed losses.
pub fn run_exp3(
    instance: &WtbInstance,
    horizon: usize,
    params: &Exp3Params,
    seed: u64,
) -> Result<RunTrace> {
    if horizon == 0 {
        return Err(WtbError::Parameter("horizon must be >= 1".into()));
    }
    let k = instance.num_actions();
    let rate = params
        .learning_rate
        .unwrap_or_else(|| default_learning_rate(k, horizon));
    let mut state = Exp3State::new(k, rate, params.exploration_mix)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut window = instance.new_window();
    let mut trace = RunTrace::new(EXP3_ID, seed, horizon);
    for _ in 0..horizon {
        let (action, probability) = state.sample(&mut rng);
        let obs = instance.step(&mut window, action, &mut rng)?;
        trace.push(action, obs.observed_loss, obs.expected_loss);
        state.update(action, obs.observed_loss, probability);
    }
    Ok(trace)
}

/// Batched exponential weights: the horizon is split into blocks of `2 M`
/// steps; each block commits to one sampled arm, the first `M` in-block
/// steps warm its window up, and the mean observed loss of the last `M`
/// steps feeds one importance-weighted update. A trailing partial block
/// plays one further sample without updating.
pub fn run_exp3_batched(
    instance: &WtbInstance,
    horizon: usize,
    m_upper: usize,
    params: &Exp3Params,
    seed: u64,
) -> Result<RunTrace> {
    if m_upper == 0 {
        return Err(WtbError::Parameter("memory bound must be >= 1".into()));
    }
    let block = 2 * m_upper;
    if block > horizon {
        return Err(WtbError::Parameter(format!(
            "block length {block} exceeds horizon {horizon}"
        )));
    }
    let k = instance.num_actions();
    let num_blocks = horizon / block;
    let rate = params
        .learning_rate
        .unwrap_or_else(|| default_learning_rate(k, num_blocks));
    let mut state = Exp3State::new(k, rate, params.exploration_mix)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut window = instance.new_window();
    let mut trace = RunTrace::new(EXP3_BATCHED_ID, seed, horizon);
    for _ in 0..num_blocks {
        let (action, probability) = state.sample(&mut rng);
        let mut fed = 0.0;
        for step in 0..block {
            let obs = instance.step(&mut window, action, &mut rng)?;
            trace.push(action, obs.observed_loss, obs.expected_loss);
            if step >= m_upper {
                fed += obs.observed_loss;
            }
        }
        state.update(action, fed / m_upper as f64, probability);
    }
    if trace.len() < horizon {
        let (action, _) = state.sample(&mut rng);
        while trace.len() < horizon {
            let obs = instance.step(&mut window, action, &mut rng)?;
            trace.push(action, obs.observed_loss, obs.expected_loss);
        }
    }
    Ok(trace)
}
