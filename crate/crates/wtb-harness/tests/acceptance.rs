//! Acceptance suite: one test per shipped guarantee, each ending in a
//! single PASS line (assertion failures are the FAIL lines). Run with
//! `cargo test -p wtb-harness --test acceptance -- --nocapture` to see the
//! per-criterion lines.

use std::sync::OnceLock;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use wtb_core::algorithms::{run_se, SeParams};
use wtb_core::env::{Feedback, LossRule, WtbInstance};
use wtb_core::instances::{
    self, bundled_reo_examples, make_adaptivity_pair, make_synthetic_alpha,
    make_synthetic_unweighted, InstanceSpec,
};
use wtb_core::{f1, oracle};
use wtb_harness::{m_scaling_sweep, run_experiment, AlgorithmConfig, ExperimentConfig, RegretMode};

const DESK_HORIZON: usize = 10_000;
const DESK_SEEDS: usize = 20;

fn desk_config(output_dir: std::path::PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        instance: InstanceSpec::SyntheticUnweighted {
            num_actions: 5,
            memory: 3,
            x_star: None,
        },
        algorithms: vec![
            AlgorithmConfig::Se {
                m_upper: 3,
                delta: 0.1,
                horizonless: false,
            },
            AlgorithmConfig::Exp3 {
                learning_rate: None,
                exploration_mix: 0.0,
            },
            AlgorithmConfig::Exp3Batched { m_upper: 3 },
            AlgorithmConfig::EpochUcb { m_upper: 3 },
        ],
        horizon: DESK_HORIZON,
        seeds: (0..DESK_SEEDS as u64).collect(),
        master_seed: 0,
        regret_mode: RegretMode::ExactCpr,
        reference_algorithm: None,
        output_dir,
        checkpoint_stride: None,
        dp_budget: None,
        write_traces: false,
        m_values: None,
    }
}

/// Criteria 1 and 2 share one grid of runs.
fn desk_summary() -> &'static wtb_harness::ExperimentSummary {
    static DESK: OnceLock<(tempfile::TempDir, wtb_harness::ExperimentSummary)> = OnceLock::new();
    let (_, summary) = DESK.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_experiment(&desk_config(dir.path().to_path_buf())).unwrap();
        (dir, summary)
    });
    summary
}

#[test]
fn criterion_01_regret_envelope() {
    // Every seed's regret stays beneath
    // 4KM + K m ln T + 800 sqrt(K T ln(2 K ln T / delta)).
    let (k, m, m_upper, delta) = (5.0f64, 3.0f64, 3.0f64, 0.1f64);
    let t = DESK_HORIZON as f64;
    let envelope =
        4.0 * k * m_upper + k * m * t.ln() + 800.0 * (k * t * (2.0 * k * t.ln() / delta).ln()).sqrt();
    let se = desk_summary().algorithm("se").unwrap();
    assert_eq!(se.terminal.len(), DESK_SEEDS);
    for (seed, &regret) in se.terminal.iter().enumerate() {
        assert!(
            regret <= envelope,
            "seed {seed}: regret {regret} exceeds the envelope {envelope}"
        );
    }
    println!(
        "criterion 01 (regret envelope): PASS - max per-seed regret {:.1} <= {:.1}",
        se.terminal.iter().cloned().fold(f64::MIN, f64::max),
        envelope
    );
}

#[test]
fn criterion_02_desk_scale_ordering() {
    // Mean terminal regret of the elimination algorithm below every
    // baseline's, with each gap exceeding twice the pooled standard error.
    let summary = desk_summary();
    let se = summary.algorithm("se").unwrap();
    let mut lines = Vec::new();
    let mut all_hold = true;
    for baseline in ["exp3", "exp3b", "epoch-ucb"] {
        let other = summary.algorithm(baseline).unwrap();
        let gap = other.terminal_mean - se.terminal_mean;
        let pooled = (se.terminal_std_error.powi(2) + other.terminal_std_error.powi(2)).sqrt();
        let holds = gap > 2.0 * pooled;
        all_hold &= holds;
        lines.push(format!(
            "  se {:.1} vs {baseline} {:.1}: gap {:+.1}, 2 x pooled se {:.1} -> {}",
            se.terminal_mean,
            other.terminal_mean,
            gap,
            2.0 * pooled,
            if holds { "ordered" } else { "NOT ordered" }
        ));
    }
    let detail = lines.join("\n");
    println!(
        "criterion 02 (desk-scale ordering): {}\n{detail}",
        if all_hold { "PASS" } else { "FAIL" }
    );
    assert!(
        all_hold,
        "criterion 02 (desk-scale ordering): FAIL\n{detail}"
    );
}

#[test]
fn criterion_03_oracle_equivalence() {
    // The exact-1.9 case first.
    let pinned = make_synthetic_unweighted(2, 2).unwrap();
    let dp = oracle::optimal_value_dp(&pinned, 5).unwrap();
    let brute = oracle::optimal_value_bruteforce(&pinned, 5).unwrap();
    assert!((dp.value - 1.9).abs() < 1e-12);
    assert!((brute.value - 1.9).abs() < 1e-12);

    // 50 randomized small instances with arbitrary weights and loss tables.
    let mut rng = StdRng::seed_from_u64(2024);
    let mut worst_gap = 0.0f64;
    for _ in 0..50 {
        let k = rng.gen_range(2..=3usize);
        let m = rng.gen_range(1..=3usize);
        let horizon = rng.gen_range(3..=10usize);
        let weights: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.gen_range(0.05..=1.0)).collect())
            .collect();
        let losses: Vec<LossRule> = weights
            .iter()
            .map(|w| {
                let mut entries = Vec::new();
                for mask in 0u64..(1 << (m - 1)) {
                    let mut tally = w[0];
                    for j in 1..m {
                        if mask >> (j - 1) & 1 == 1 {
                            tally += w[j];
                        }
                    }
                    entries.push((tally, rng.gen_range(0.0..=1.0)));
                }
                LossRule::Table {
                    entries,
                    default: Some(0.5),
                }
            })
            .collect();
        let instance = WtbInstance::new(weights, losses, Feedback::Deterministic).unwrap();
        let dp = oracle::optimal_value_dp(&instance, horizon).unwrap();
        let brute = oracle::optimal_value_bruteforce(&instance, horizon).unwrap();
        worst_gap = worst_gap.max((dp.value - brute.value).abs());
        assert!(
            (dp.value - brute.value).abs() < 1e-12,
            "K={k} m={m} T={horizon}: dp {} vs brute {}",
            dp.value,
            brute.value
        );
    }
    println!("criterion 03 (oracle equivalence): PASS - worst |dp - brute| = {worst_gap:.2e}");
}

#[test]
fn criterion_04_optimal_value_floor() {
    let mut checked = 0;
    for (name, instance) in bundled_reo_examples() {
        assert!(instance.memory() <= 6, "{name} belongs in this check");
        assert!(
            oracle::reo_floor_check(&instance, 500).unwrap(),
            "{name} violates the floor at T=500"
        );
        checked += 1;
    }
    println!("criterion 04 (optimal-value floor): PASS - {checked} bundled instances at T=500");
}

#[test]
fn criterion_05_dyadic_tally_injectivity() {
    // For dyadic weights 1/2^i, every window context maps to a distinct
    // tally; scaled by 2^m the tallies are exact integers.
    for m in 2..=20usize {
        let instance = instances::make_prop1(m, &vec![0u8; m - 1]).unwrap();
        let weights = instance.weights_of(1).unwrap().to_vec();
        let scale = (1u64 << m) as f64;
        let mut seen = std::collections::HashSet::with_capacity(1 << (m - 1));
        for mask in 0u64..(1 << (m - 1)) {
            let mut tally = weights[0];
            for j in 1..m {
                if mask >> (j - 1) & 1 == 1 {
                    tally += weights[j];
                }
            }
            let scaled = tally * scale;
            assert_eq!(scaled, scaled.round(), "tally not exactly dyadic at m={m}");
            assert!(
                seen.insert(scaled as u64),
                "duplicate tally at m={m}, mask={mask}"
            );
        }
        assert_eq!(seen.len(), 1 << (m - 1));
    }
    println!("criterion 05 (dyadic injectivity): PASS - all contexts distinct for m in 2..=20");
}

#[test]
fn criterion_06_pair_indistinguishability() {
    let memory_bound = 10usize;
    let horizon = 500usize;
    let (tb_a, tb_b) = make_adaptivity_pair(memory_bound, 3).unwrap();
    let mut rng = StdRng::seed_from_u64(66);
    for trial in 0..100 {
        // Random sequence that never plays the hidden action M times in a
        // row (a forced break caps every run at M-1).
        let mut sequence = Vec::with_capacity(horizon);
        let mut run_length = 0usize;
        for _ in 0..horizon {
            let mut action = rng.gen_range(0..3usize);
            if run_length == memory_bound - 1 && action == 1 {
                action = 0;
            }
            run_length = if action == 1 { run_length + 1 } else { 0 };
            sequence.push(action);
        }
        let observe = |instance: &WtbInstance| -> Vec<f64> {
            let mut window = instance.new_window();
            let mut step_rng = StdRng::seed_from_u64(trial);
            sequence
                .iter()
                .map(|&a| {
                    instance
                        .step(&mut window, a, &mut step_rng)
                        .unwrap()
                        .observed_loss
                })
                .collect()
        };
        let a = observe(&tb_a);
        let b = observe(&tb_b);
        assert!(
            a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()),
            "trial {trial}: observation sequences differ"
        );
    }
    // Always playing the hidden action on the memory-M instance costs
    // exactly M - 1 in expectation.
    let mut window = tb_b.new_window();
    let mut step_rng = StdRng::seed_from_u64(0);
    let total: f64 = (0..horizon)
        .map(|_| {
            tb_b.step(&mut window, 1, &mut step_rng)
                .unwrap()
                .expected_loss
        })
        .sum();
    assert_eq!(total, (memory_bound - 1) as f64);
    println!(
        "criterion 06 (pair indistinguishability): PASS - 100 sequences bit-identical, hidden payoff exactly {}",
        memory_bound - 1
    );
}

#[test]
fn criterion_07_retention_and_gap() {
    let instance = make_synthetic_unweighted(5, 3).unwrap();
    let params = SeParams::new(3, 0.1);
    let mu_star = instance.eventual_loss(0).unwrap();
    let mut retained = 0usize;
    let mut worst_gap_ratio = 0.0f64;
    for seed in 0..100u64 {
        let run = run_se(&instance, DESK_HORIZON, &params, seed).unwrap();
        if !run.surviving.contains(&0) {
            continue;
        }
        retained += 1;
        assert!(run.epochs.len() >= 2);
        let prior_radius = run.epochs[run.epochs.len() - 2].radius;
        for &survivor in &run.surviving {
            let gap = instance.eventual_loss(survivor).unwrap() - mu_star;
            assert!(
                gap <= 4.0 * prior_radius,
                "seed {seed}: survivor {survivor} gap {gap} exceeds {}",
                4.0 * prior_radius
            );
            worst_gap_ratio = worst_gap_ratio.max(gap / (4.0 * prior_radius));
        }
    }
    assert!(retained >= 85, "best action retained in only {retained}/100 runs");
    println!(
        "criterion 07 (retention and gap): PASS - retained {retained}/100, worst gap ratio {worst_gap_ratio:.3}"
    );
}

#[test]
fn criterion_08_reported_slack_closed_form() {
    for m in 2..=10usize {
        let instance = make_synthetic_alpha(5, m).unwrap();
        let (_, alpha) = instance.minimal_reo_alpha().unwrap();
        let mf = m as f64;
        let expected = (-0.2 + (2.0 * mf - 3.0) / (4.0 * mf)).max(0.0);
        assert!(
            (alpha - expected).abs() < 1e-12,
            "m={m}: alpha {alpha} vs closed form {expected}"
        );
        if m == 4 {
            assert!((alpha - 0.1125).abs() < 1e-12);
        }
    }
    println!("criterion 08 (slack closed form): PASS - matches for m in 2..=10, 0.1125 at m=4");
}

#[test]
fn criterion_09_lap_model_recovery() {
    let (alpha, beta, gamma) = (0.8f64, 0.6f64, 0.01f64);
    let mean = |k: usize| beta * (-(k as f64) * alpha).exp() - gamma.abs() * k as f64;
    let clean: Vec<f64> = (1..=10).map(mean).collect();
    let fit = f1::fit_lap_model(&clean, 1, 1).unwrap();
    for k in 1..=10 {
        assert!(
            (fit.mean_at(k) - mean(k)).abs() < 1e-6,
            "lap {k}: predicted {} vs generator {}",
            fit.mean_at(k),
            mean(k)
        );
    }

    use rand_distr::Distribution;
    let true_terminal = mean(10);
    let mut errors: Vec<f64> = Vec::with_capacity(1000);
    for seed in 0..1000u64 {
        let mut rng = StdRng::seed_from_u64(seed);
        let noise = rand_distr::Normal::new(0.0, 0.02).unwrap();
        let noisy: Vec<f64> = clean.iter().map(|y| y + noise.sample(&mut rng)).collect();
        let fit = f1::fit_lap_model(&noisy, 1, 1).unwrap();
        errors.push((fit.terminal_mean - true_terminal).abs());
    }
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = errors[errors.len() / 2];
    assert!(median < 0.02, "median terminal error {median}");
    println!(
        "criterion 09 (lap model recovery): PASS - noiseless within 1e-6, median terminal error {median:.4}"
    );
}

#[test]
fn criterion_10_memory_bound_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = desk_config(dir.path().to_path_buf());
    config.instance = InstanceSpec::SyntheticUnweighted {
        num_actions: 5,
        memory: 4,
        x_star: None,
    };
    config.algorithms = vec![AlgorithmConfig::Se {
        m_upper: 4,
        delta: 0.1,
        horizonless: false,
    }];
    config.m_values = Some(vec![4, 8, 16, 32]);
    let sweep = m_scaling_sweep(&config).unwrap();
    let mut ratios = Vec::new();
    for pair in sweep.terminal_mean.windows(2) {
        let ratio = pair[1] / pair[0];
        ratios.push(ratio);
        assert!(
            ratio <= 2.5,
            "terminal regret grew by {ratio:.2}x on one doubling of the bound: {:?}",
            sweep.terminal_mean
        );
    }
    println!(
        "criterion 10 (memory-bound scaling): PASS - terminal regrets {:?}, per-doubling ratios {:?}",
        sweep.terminal_mean, ratios
    );
}

#[test]
fn criterion_11_byte_identical_reruns() {
    let run_into = |dir: &std::path::Path| {
        let mut config = desk_config(dir.to_path_buf());
        config.horizon = 2_000;
        config.seeds = (0..5).collect();
        config.write_traces = true;
        run_experiment(&config).unwrap();
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_into(dir_a.path());
    run_into(dir_b.path());
    let mut names: Vec<String> = std::fs::read_dir(dir_a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 4 + 4 * 5);
    for name in &names {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
    println!(
        "criterion 11 (byte-identical reruns): PASS - {} files identical",
        names.len()
    );
}
