use std::path::PathBuf;

use rayon::prelude::*;
use wtb_core::algorithms::{
    run_epoch_ucb, run_exp3, run_exp3_batched, run_se, Exp3Params, SeParams,
};
use wtb_core::env::WtbInstance;
use wtb_core::seeding::derive_seed;
use wtb_core::{oracle, Result, RunTrace, WtbError};

use crate::config::{AlgorithmConfig, ExperimentConfig, RegretMode};
use crate::output;

#[derive(Debug, Clone)]
pub struct AlgorithmSummary {
    pub algorithm_id: String,
    /// Terminal regret (or excess loss) per seed, in seed-list order.
    pub terminal: Vec<f64>,
    pub terminal_mean: f64,
    pub terminal_std_error: f64,
    pub aggregate_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub checkpoints: Vec<usize>,
    pub algorithms: Vec<AlgorithmSummary>,
    pub output_dir: PathBuf,
}

impl ExperimentSummary {
    pub fn algorithm(&self, id: &str) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.algorithm_id == id)
    }
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub m_values: Vec<usize>,
    pub terminal_mean: Vec<f64>,
    pub terminal_std_error: Vec<f64>,
    pub sweep_path: PathBuf,
    pub per_m: Vec<ExperimentSummary>,
}

/// Checkpoint timesteps: every multiple of the stride, always including the
/// horizon itself.
pub fn checkpoints(horizon: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=horizon / stride).map(|i| i * stride).collect();
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

fn run_algorithm(
    algorithm: &AlgorithmConfig,
    instance: &WtbInstance,
    horizon: usize,
    seed: u64,
) -> Result<RunTrace> {
    match algorithm {
        AlgorithmConfig::Se {
            m_upper,
            delta,
            horizonless,
        } => {
            let params = SeParams {
                m_upper: *m_upper,
                delta: *delta,
                horizonless: *horizonless,
            };
            run_se(instance, horizon, &params, seed).map(|run| run.trace)
        }
        AlgorithmConfig::Exp3 {
            learning_rate,
            exploration_mix,
        } => run_exp3(
            instance,
            horizon,
            &Exp3Params {
                learning_rate: *learning_rate,
                exploration_mix: *exploration_mix,
            },
            seed,
        ),
        AlgorithmConfig::Exp3Batched { m_upper } => {
            run_exp3_batched(instance, horizon, *m_upper, &Exp3Params::default(), seed)
        }
        AlgorithmConfig::EpochUcb { m_upper } => run_epoch_ucb(instance, horizon, *m_upper, seed),
    }
}

/// Cumulative expected loss captured at each checkpoint, accumulated in
/// trace order so the final entry equals the trace's own total exactly.
fn cumulative_at(trace: &RunTrace, marks: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(marks.len());
    let mut pending = marks.iter().copied().peekable();
    let mut acc = 0.0;
    for (i, &loss) in trace.expected_losses.iter().enumerate() {
        acc += loss;
        if pending.peek() == Some(&(i + 1)) {
            pending.next();
            out.push(acc);
        }
    }
    out
}

/// Runs the configured grid: one seeded run per (algorithm, seed), one
/// trace CSV per run (unless disabled), and one aggregate CSV per
/// algorithm with the mean regret curve and its standard error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let marks = checkpoints(config.horizon, config.stride());

    // One instance per seed; deterministic families share a single build.
    let instances: Vec<WtbInstance> = if config.instance.is_randomized() {
        config
            .seeds
            .iter()
            .map(|&seed| config.instance.build(seed))
            .collect::<Result<_>>()?
    } else {
        let shared = config.instance.build(0)?;
        vec![shared; config.seeds.len()]
    };

    // Per-seed optimal prefix values (exact mode only). Deterministic
    // families need the oracle once.
    let oracle_curves: Option<Vec<Vec<f64>>> = match config.regret_mode {
        RegretMode::ExactCpr => Some(if config.instance.is_randomized() {
            instances
                .par_iter()
                .map(|instance| oracle::optimal_prefix_values(instance, &marks, config.dp_budget()))
                .collect::<Result<_>>()?
        } else {
            let curve = oracle::optimal_prefix_values(&instances[0], &marks, config.dp_budget())?;
            vec![curve; config.seeds.len()]
        }),
        RegretMode::ExcessVsReference => None,
    };

    // All (algorithm, seed) runs in parallel; collect preserves order.
    let jobs: Vec<(usize, usize)> = (0..config.algorithms.len())
        .flat_map(|a| (0..config.seeds.len()).map(move |s| (a, s)))
        .collect();
    let runs: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(algorithm_index, seed_index)| {
            let algorithm = &config.algorithms[algorithm_index];
            let seed_value = config.seeds[seed_index];
            let run_seed = derive_seed(config.master_seed, algorithm.id(), seed_value);
            let trace = run_algorithm(
                algorithm,
                &instances[seed_index],
                config.horizon,
                run_seed,
            )?;
            debug_assert_eq!(trace.len(), config.horizon);
            if config.write_traces {
                let path = config
                    .output_dir
                    .join(format!("trace_{}_{}.csv", algorithm.id(), seed_value));
                output::write_trace_csv(path, &trace)?;
            }
            Ok(cumulative_at(&trace, &marks))
        })
        .collect::<Result<_>>()?;

    let curve_of = |algorithm_index: usize, seed_index: usize| -> &Vec<f64> {
        &runs[algorithm_index * config.seeds.len() + seed_index]
    };
    let reference_index = config.reference_algorithm.as_deref().and_then(|reference| {
        config
            .algorithms
            .iter()
            .position(|a| a.id() == reference)
    });

    let mut summaries = Vec::with_capacity(config.algorithms.len());
    for (algorithm_index, algorithm) in config.algorithms.iter().enumerate() {
        // Per-seed regret (or excess) at every checkpoint.
        let per_seed: Vec<Vec<f64>> = (0..config.seeds.len())
            .map(|seed_index| {
                let cumulative = curve_of(algorithm_index, seed_index);
                match (&oracle_curves, reference_index) {
                    (Some(oracle_curves), _) => cumulative
                        .iter()
                        .zip(&oracle_curves[seed_index])
                        .map(|(c, o)| c - o)
                        .collect(),
                    (None, Some(reference)) => cumulative
                        .iter()
                        .zip(curve_of(reference, seed_index))
                        .map(|(c, r)| c - r)
                        .collect(),
                    (None, None) => unreachable!("validated config"),
                }
            })
            .collect();
        let mut mean = Vec::with_capacity(marks.len());
        let mut std_error = Vec::with_capacity(marks.len());
        for j in 0..marks.len() {
            let column: Vec<f64> = per_seed.iter().map(|c| c[j]).collect();
            let (m, se) = output::mean_and_std_error(&column);
            mean.push(m);
            std_error.push(se);
        }
        let aggregate_path = config
            .output_dir
            .join(format!("aggregate_{}.csv", algorithm.id()));
        output::write_aggregate_csv(&aggregate_path, &marks, &mean, &std_error)?;
        let terminal: Vec<f64> = per_seed.iter().map(|c| *c.last().unwrap()).collect();
        let (terminal_mean, terminal_std_error) = output::mean_and_std_error(&terminal);
        summaries.push(AlgorithmSummary {
            algorithm_id: algorithm.id().to_string(),
            terminal,
            terminal_mean,
            terminal_std_error,
            aggregate_path,
        });
    }
    Ok(ExperimentSummary {
        checkpoints: marks,
        algorithms: summaries,
        output_dir: config.output_dir.clone(),
    })
}

/// Runs the elimination algorithm once per memory bound in
/// `config.m_values` (every bound must be at least the instance's true
/// memory capacity) and reports terminal regret as a curve over the bound.
pub fn m_scaling_sweep(config: &ExperimentConfig) -> Result<SweepSummary> {
    let m_values = config
        .m_values
        .clone()
        .ok_or_else(|| WtbError::Parameter("sweep needs an m_values list".into()))?;
    if m_values.is_empty() {
        return Err(WtbError::Parameter("m_values must be nonempty".into()));
    }
    let memory = config.instance.memory();
    if let Some(&bad) = m_values.iter().find(|&&m| m < memory) {
        return Err(WtbError::Parameter(format!(
            "memory bound {bad} is below the instance's memory capacity {memory}"
        )));
    }
    let template = config
        .algorithms
        .iter()
        .find_map(|a| match a {
            AlgorithmConfig::Se {
                delta, horizonless, ..
            } => Some((*delta, *horizonless)),
            _ => None,
        })
        .ok_or_else(|| {
            WtbError::Parameter("sweep needs an `se` entry to take delta from".into())
        })?;

    let mut per_m = Vec::with_capacity(m_values.len());
    let mut terminal_mean = Vec::with_capacity(m_values.len());
    let mut terminal_std_error = Vec::with_capacity(m_values.len());
    for &m_upper in &m_values {
        let mut sub = config.clone();
        sub.algorithms = vec![AlgorithmConfig::Se {
            m_upper,
            delta: template.0,
            horizonless: template.1,
        }];
        sub.output_dir = config.output_dir.join(format!("M{m_upper}"));
        sub.m_values = None;
        let summary = run_experiment(&sub)?;
        let se = summary.algorithm("se").expect("sweep runs se");
        terminal_mean.push(se.terminal_mean);
        terminal_std_error.push(se.terminal_std_error);
        per_m.push(summary);
    }
    std::fs::create_dir_all(&config.output_dir)?;
    let sweep_path = config.output_dir.join("sweep_se.csv");
    output::write_sweep_csv(&sweep_path, &m_values, &terminal_mean, &terminal_std_error)?;
    Ok(SweepSummary {
        m_values,
        terminal_mean,
        terminal_std_error,
        sweep_path,
        per_m,
    })
}
