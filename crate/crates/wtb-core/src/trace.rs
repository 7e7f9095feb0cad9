/// Per-timestep record of one seeded run: the action played, the sampled
/// loss, and its expectation at the realized window.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub algorithm_id: String,
    pub seed: u64,
    pub actions: Vec<usize>,
    pub observed_losses: Vec<f64>,
    pub expected_losses: Vec<f64>,
}

impl RunTrace {
    pub fn new(algorithm_id: impl Into<String>, seed: u64, horizon: usize) -> Self {
        RunTrace {
            algorithm_id: algorithm_id.into(),
            seed,
            actions: Vec::with_capacity(horizon),
            observed_losses: Vec::with_capacity(horizon),
            expected_losses: Vec::with_capacity(horizon),
        }
    }

    pub fn push(&mut self, action: usize, observed: f64, expected: f64) {
        self.actions.push(action);
        self.observed_losses.push(observed);
        self.expected_losses.push(expected);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn cumulative_expected_loss(&self) -> f64 {
        self.expected_losses.iter().sum()
    }
}
