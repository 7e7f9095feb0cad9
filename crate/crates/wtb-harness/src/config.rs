use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wtb_core::instances::InstanceSpec;
use wtb_core::{Result, WtbError};

/// How per-seed curves are referenced: against the exact optimal value at
/// every checkpoint, or against a reference algorithm's own loss (used when
/// the optimum is out of the oracle's budget).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegretMode {
    #[default]
    ExactCpr,
    ExcessVsReference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum AlgorithmConfig {
    Se {
        #[serde(rename = "M")]
        m_upper: usize,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default)]
        horizonless: bool,
    },
    Exp3 {
        #[serde(default)]
        learning_rate: Option<f64>,
        #[serde(default)]
        exploration_mix: f64,
    },
    #[serde(rename = "exp3b")]
    Exp3Batched {
        #[serde(rename = "M")]
        m_upper: usize,
    },
    EpochUcb {
        #[serde(rename = "M")]
        m_upper: usize,
    },
}

fn default_delta() -> f64 {
    0.1
}

impl AlgorithmConfig {
    pub fn id(&self) -> &'static str {
        match self {
            AlgorithmConfig::Se { .. } => wtb_core::algorithms::SE_ID,
            AlgorithmConfig::Exp3 { .. } => wtb_core::algorithms::EXP3_ID,
            AlgorithmConfig::Exp3Batched { .. } => wtb_core::algorithms::EXP3_BATCHED_ID,
            AlgorithmConfig::EpochUcb { .. } => wtb_core::algorithms::EPOCH_UCB_ID,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub algorithms: Vec<AlgorithmConfig>,
    pub horizon: usize,
    /// Distinct stream seeds; randomized families regenerate the instance
    /// per seed, so averaging over seeds averages over problem instances.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub regret_mode: RegretMode,
    #[serde(default)]
    pub reference_algorithm: Option<String>,
    pub output_dir: PathBuf,
    /// Timesteps between emitted curve points; defaults to `horizon / 200`.
    #[serde(default)]
    pub checkpoint_stride: Option<usize>,
    /// Cap on `K^m * T` for the exact oracle (exact-cpr mode only).
    #[serde(default)]
    pub dp_budget: Option<f64>,
    #[serde(default = "default_true")]
    pub write_traces: bool,
    /// Memory bounds for the `sweep-m` subcommand; ignored by `run`.
    #[serde(default)]
    pub m_values: Option<Vec<usize>>,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn stride(&self) -> usize {
        self.checkpoint_stride
            .unwrap_or(self.horizon / 200)
            .max(1)
    }

    pub fn dp_budget(&self) -> f64 {
        self.dp_budget.unwrap_or(wtb_core::oracle::DEFAULT_DP_BUDGET)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(WtbError::Parameter("horizon must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(WtbError::Parameter("seed list must be nonempty".into()));
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(WtbError::Parameter("seed list has duplicates".into()));
        }
        if self.algorithms.is_empty() {
            return Err(WtbError::Parameter("algorithm list must be nonempty".into()));
        }
        let mut ids = HashSet::new();
        for algorithm in &self.algorithms {
            if !ids.insert(algorithm.id()) {
                return Err(WtbError::Parameter(format!(
                    "duplicate algorithm entry `{}`",
                    algorithm.id()
                )));
            }
        }
        if let Some(stride) = self.checkpoint_stride {
            if stride == 0 {
                return Err(WtbError::Parameter("checkpoint stride must be >= 1".into()));
            }
        }
        match self.regret_mode {
            RegretMode::ExactCpr => {
                // The oracle runs per seed; refuse up front when it cannot.
                let probe = self.instance.build(self.seeds[0])?;
                let transitions = (probe.num_actions() as f64).powi(probe.memory() as i32)
                    * self.horizon as f64;
                if transitions > self.dp_budget() {
                    return Err(WtbError::Capacity(format!(
                        "exact regret needs ~{transitions:.3e} oracle transitions but the budget \
                         is {:.3e}; switch regret_mode to `excess-vs-reference` (with a \
                         reference_algorithm) or raise dp_budget",
                        self.dp_budget()
                    )));
                }
            }
            RegretMode::ExcessVsReference => {
                let reference = self.reference_algorithm.as_deref().ok_or_else(|| {
                    WtbError::Parameter(
                        "excess-vs-reference mode needs a reference_algorithm".into(),
                    )
                })?;
                if !self.algorithms.iter().any(|a| a.id() == reference) {
                    return Err(WtbError::Parameter(format!(
                        "reference algorithm `{reference}` is not among the configured algorithms"
                    )));
                }
            }
        }
        Ok(())
    }
}
