//! Constructors for every bundled problem family: the synthetic losses used
//! in the experiment grids, the simulated darts tournament, the
//! hidden-bit-pattern hard instance, and the indistinguishable pair used to
//! demonstrate the price of adaptivity.

use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::env::{Feedback, LossRule, WtbInstance};
use crate::error::{Result, WtbError};
use crate::f1;
use crate::seeding;

/// Config-addressable description of a problem family. Regenerating a spec
/// with the same seed is bit-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum InstanceSpec {
    /// All-ones weights; every loss 0.5 except the distinguished action's
    /// full-window loss of 0.35. Bernoulli feedback.
    SyntheticUnweighted {
        #[serde(rename = "K")]
        num_actions: usize,
        #[serde(rename = "m")]
        memory: usize,
        #[serde(default)]
        x_star: Option<usize>,
    },
    /// Geometrically decaying weights normalized to norm 1/2; affine losses
    /// with the distinguished action's full-window loss lowered by 0.15.
    SyntheticWeighted {
        #[serde(rename = "K")]
        num_actions: usize,
        #[serde(rename = "m")]
        memory: usize,
    },
    /// Uniform weights 1/(4m) with two discounted contexts; satisfies the
    /// repeated-exposure condition only up to a positive slack.
    SyntheticAlpha {
        #[serde(rename = "K")]
        num_actions: usize,
        #[serde(rename = "m")]
        memory: usize,
    },
    /// Two-toss calibration tournament: per-player first-toss loss drawn
    /// from Unif[0.68, 0.72] and calibrated loss from Unif[0.58, 0.62].
    Darts {
        #[serde(rename = "K")]
        num_actions: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Two actions with dyadic weights and a single zero-loss context
    /// selected by a hidden bit string.
    HiddenPattern {
        #[serde(rename = "m")]
        memory: usize,
        hidden_bits: Vec<u8>,
    },
    /// Memory-one half of the adaptivity pair.
    AdaptivityA {
        #[serde(rename = "M")]
        memory_bound: usize,
        #[serde(rename = "K")]
        num_actions: usize,
    },
    /// Memory-M half of the adaptivity pair; indistinguishable from the A
    /// half for any play that never repeats the hidden action M times.
    AdaptivityB {
        #[serde(rename = "M")]
        memory_bound: usize,
        #[serde(rename = "K")]
        num_actions: usize,
    },
    /// Two-driver instance assembled from a fitted lap-time model file.
    F1 {
        fits_csv: PathBuf,
        race_id: u32,
        driver_a: u32,
        driver_b: u32,
        #[serde(rename = "m")]
        memory: usize,
    },
}

impl InstanceSpec {
    /// Memory capacity of the generated instance, available without I/O.
    pub fn memory(&self) -> usize {
        match self {
            InstanceSpec::SyntheticUnweighted { memory, .. }
            | InstanceSpec::SyntheticWeighted { memory, .. }
            | InstanceSpec::SyntheticAlpha { memory, .. }
            | InstanceSpec::HiddenPattern { memory, .. }
            | InstanceSpec::F1 { memory, .. } => *memory,
            InstanceSpec::Darts { .. } => 2,
            InstanceSpec::AdaptivityA { .. } => 1,
            InstanceSpec::AdaptivityB { memory_bound, .. } => *memory_bound,
        }
    }

    /// Whether distinct streams regenerate distinct instances.
    pub fn is_randomized(&self) -> bool {
        matches!(self, InstanceSpec::Darts { .. })
    }

    /// Builds the instance for one experiment stream. Deterministic
    /// families ignore the stream; randomized families fold it into their
    /// base seed so that averaging over streams averages over instances.
    pub fn build(&self, stream: u64) -> Result<WtbInstance> {
        match self {
            InstanceSpec::SyntheticUnweighted {
                num_actions,
                memory,
                x_star,
            } => make_synthetic_unweighted_at(*num_actions, *memory, x_star.unwrap_or(0)),
            InstanceSpec::SyntheticWeighted {
                num_actions,
                memory,
            } => make_synthetic_weighted(*num_actions, *memory),
            InstanceSpec::SyntheticAlpha {
                num_actions,
                memory,
            } => make_synthetic_alpha(*num_actions, *memory),
            InstanceSpec::Darts { num_actions, seed } => {
                let mut rng = StdRng::seed_from_u64(seeding::derive_seed(*seed, "darts", stream));
                make_darts(*num_actions, &mut rng)
            }
            InstanceSpec::HiddenPattern {
                memory,
                hidden_bits,
            } => make_prop1(*memory, hidden_bits),
            InstanceSpec::AdaptivityA {
                memory_bound,
                num_actions,
            } => Ok(make_adaptivity_pair(*memory_bound, *num_actions)?.0),
            InstanceSpec::AdaptivityB {
                memory_bound,
                num_actions,
            } => Ok(make_adaptivity_pair(*memory_bound, *num_actions)?.1),
            InstanceSpec::F1 {
                fits_csv,
                race_id,
                driver_a,
                driver_b,
                memory,
            } => {
                let fits = f1::read_fits_csv(fits_csv)?;
                let find = |driver: u32| {
                    fits.iter()
                        .find(|f| f.race_id == *race_id && f.driver_id == driver)
                        .cloned()
                        .ok_or_else(|| {
                            WtbError::Parameter(format!(
                                "no fit for driver {driver} in race {race_id} in {}",
                                fits_csv.display()
                            ))
                        })
                };
                f1::make_f1_instance(&find(*driver_a)?, &find(*driver_b)?, *memory)
            }
        }
    }
}

fn constant_rule(loss: f64) -> LossRule {
    LossRule::Table {
        entries: vec![],
        default: Some(loss),
    }
}

/// All-ones weights, losses 0.5 everywhere except the distinguished
/// action's full-window loss of 0.35; Bernoulli feedback. Satisfies the
/// repeated-exposure condition with zero slack.
pub fn make_synthetic_unweighted(num_actions: usize, memory: usize) -> Result<WtbInstance> {
    make_synthetic_unweighted_at(num_actions, memory, 0)
}

/// Same family with the distinguished action at an arbitrary index, so
/// position-sensitive tie-breaking cannot be exploited.
pub fn make_synthetic_unweighted_at(
    num_actions: usize,
    memory: usize,
    x_star: usize,
) -> Result<WtbInstance> {
    if num_actions < 2 {
        return Err(WtbError::Parameter(
            "unweighted family needs at least 2 actions".into(),
        ));
    }
    if memory == 0 {
        return Err(WtbError::Parameter("memory capacity must be >= 1".into()));
    }
    if x_star >= num_actions {
        return Err(WtbError::Parameter(format!(
            "distinguished action {x_star} out of range for {num_actions} actions"
        )));
    }
    let mut losses = vec![constant_rule(0.5); num_actions];
    losses[x_star] = LossRule::Table {
        entries: vec![(memory as f64, 0.35)],
        default: Some(0.5),
    };
    WtbInstance::new(
        vec![vec![1.0; memory]; num_actions],
        losses,
        Feedback::Bernoulli,
    )
}

/// Geometric weights `v_i = 1/2^i` normalized by `2 * |v|_1` (norm exactly
/// 1/2), affine loss `1 - tally`, with the distinguished action's
/// full-window loss lowered by a further 0.15. Bernoulli feedback.
pub fn make_synthetic_weighted(num_actions: usize, memory: usize) -> Result<WtbInstance> {
    if num_actions < 2 {
        return Err(WtbError::Parameter(
            "weighted family needs at least 2 actions".into(),
        ));
    }
    if memory < 2 {
        return Err(WtbError::Parameter(
            "weighted family needs memory capacity >= 2".into(),
        ));
    }
    let v: Vec<f64> = (1..=memory).map(|i| 0.5f64.powi(i as i32)).collect();
    let norm_v: f64 = v.iter().sum();
    let weights: Vec<f64> = v.iter().map(|vi| vi / (2.0 * norm_v)).collect();
    let full: f64 = weights.iter().sum();
    let plain = LossRule::Affine {
        intercept: 1.0,
        slope: -1.0,
        overrides: vec![],
    };
    let mut losses = vec![plain; num_actions];
    losses[0] = LossRule::Affine {
        intercept: 1.0,
        slope: -1.0,
        overrides: vec![(full, 1.0 - full - 0.15)],
    };
    WtbInstance::new(
        vec![weights; num_actions],
        losses,
        Feedback::Bernoulli,
    )
}

/// Uniform weights `1/(4m)` and affine loss `1 - tally`, discounted at two
/// contexts: the first action's full window (to 0.6) and the second
/// action's isolated play. The discounts are arranged so exhaustive
/// enumeration yields a slack of exactly `max(0, -0.2 + (2m-3)/(4m))`.
pub fn make_synthetic_alpha(num_actions: usize, memory: usize) -> Result<WtbInstance> {
    if num_actions < 3 {
        return Err(WtbError::Parameter(
            "positive-slack family needs at least 3 actions".into(),
        ));
    }
    if memory < 2 {
        return Err(WtbError::Parameter(
            "positive-slack family needs memory capacity >= 2".into(),
        ));
    }
    let m = memory as f64;
    let weight = 1.0 / (4.0 * m);
    let weights = vec![vec![weight; memory]; num_actions];
    let plain = LossRule::Affine {
        intercept: 1.0,
        slope: -1.0,
        overrides: vec![],
    };
    let mut losses = vec![plain; num_actions];
    // Full window tally is exactly 1/4 regardless of m.
    losses[0] = LossRule::Affine {
        intercept: 1.0,
        slope: -1.0,
        overrides: vec![(0.25, 1.0 - 0.25 - 0.15)],
    };
    losses[1] = LossRule::Affine {
        intercept: 1.0,
        slope: -1.0,
        overrides: vec![(weight, 0.8 - (2.0 * m - 3.0) / (4.0 * m))],
    };
    WtbInstance::new(weights, losses, Feedback::Bernoulli)
}

/// Simulated two-toss calibration tournament: memory capacity 2, unit
/// weights, per-player first-toss loss drawn from Unif[0.68, 0.72] and
/// calibrated loss from Unif[0.58, 0.62]. Bernoulli feedback. Every draw
/// satisfies the repeated-exposure condition with zero slack, since the
/// largest calibrated loss stays below the smallest first-toss loss.
pub fn make_darts<R: Rng + ?Sized>(num_actions: usize, rng: &mut R) -> Result<WtbInstance> {
    if num_actions < 2 {
        return Err(WtbError::Parameter(
            "darts family needs at least 2 actions".into(),
        ));
    }
    let mut losses = Vec::with_capacity(num_actions);
    for _ in 0..num_actions {
        let first_toss = rng.gen_range(0.68..0.72);
        let calibrated = rng.gen_range(0.58..0.62);
        losses.push(LossRule::Table {
            entries: vec![(1.0, first_toss), (2.0, calibrated)],
            default: None,
        });
    }
    WtbInstance::new(
        vec![vec![1.0, 1.0]; num_actions],
        losses,
        Feedback::Bernoulli,
    )
}

/// Two actions with dyadic weights `w_i = 1/2^i` and deterministic
/// feedback. The first action always loses 1; the second loses 0 exactly
/// when its tally equals the tally of the hidden pattern `(1, bits)`,
/// compared as scaled integers so the equality carries no rounding.
pub fn make_prop1(memory: usize, hidden_bits: &[u8]) -> Result<WtbInstance> {
    if memory < 2 {
        return Err(WtbError::Parameter(
            "hidden-pattern family needs memory capacity >= 2".into(),
        ));
    }
    if memory > 63 {
        return Err(WtbError::Capacity(
            "hidden-pattern family supports memory capacity <= 63".into(),
        ));
    }
    if hidden_bits.len() != memory - 1 {
        return Err(WtbError::Shape(format!(
            "hidden bit string has length {}, expected {}",
            hidden_bits.len(),
            memory - 1
        )));
    }
    if hidden_bits.iter().any(|&b| b > 1) {
        return Err(WtbError::Parameter("hidden bits must be 0 or 1".into()));
    }
    let weights: Vec<f64> = (1..=memory).map(|i| 0.5f64.powi(i as i32)).collect();
    // Numerator of w . (1, bits) scaled by 2^m.
    let mut target = 1u64 << (memory - 1);
    for (j, &bit) in hidden_bits.iter().enumerate() {
        if bit == 1 {
            target += 1u64 << (memory - 2 - j);
        }
    }
    let losses = vec![
        constant_rule(1.0),
        LossRule::DyadicIndicator {
            scale_bits: memory as u32,
            target,
            hit: 0.0,
            miss: 1.0,
        },
    ];
    WtbInstance::new(vec![weights.clone(), weights], losses, Feedback::Deterministic)
}

/// The adaptivity pair: a memory-one instance where the first action is
/// best, and a memory-M instance identical to it except that the second
/// action's loss drops to zero once it has been played M times in a row.
/// Both are deterministic, so any play that never repeats the second
/// action M times observes identical losses on either instance.
pub fn make_adaptivity_pair(
    memory_bound: usize,
    num_actions: usize,
) -> Result<(WtbInstance, WtbInstance)> {
    if num_actions < 2 {
        return Err(WtbError::Parameter(
            "adaptivity pair needs at least 2 actions".into(),
        ));
    }
    if memory_bound < 2 {
        return Err(WtbError::Parameter(
            "adaptivity pair needs a memory bound >= 2".into(),
        ));
    }
    let mut losses_a = vec![constant_rule(1.0); num_actions];
    losses_a[0] = constant_rule(0.5);
    let tb_a = WtbInstance::new(
        vec![vec![1.0]; num_actions],
        losses_a,
        Feedback::Deterministic,
    )?;

    let mut losses_b = vec![constant_rule(1.0); num_actions];
    losses_b[0] = constant_rule(0.5);
    losses_b[1] = LossRule::Table {
        entries: vec![(memory_bound as f64, 0.0)],
        default: Some(1.0),
    };
    let tb_b = WtbInstance::new(
        vec![vec![1.0; memory_bound]; num_actions],
        losses_b,
        Feedback::Deterministic,
    )?;
    Ok((tb_a, tb_b))
}

/// Instances exercised by the cross-cutting property tests: one per
/// repeated-exposure family at sizes where the exact oracles stay cheap.
pub fn bundled_reo_examples() -> Vec<(String, WtbInstance)> {
    let mut out: Vec<(String, WtbInstance)> = vec![
        (
            "unweighted-k2-m2".into(),
            make_synthetic_unweighted(2, 2).unwrap(),
        ),
        (
            "unweighted-k5-m3".into(),
            make_synthetic_unweighted(5, 3).unwrap(),
        ),
        (
            "unweighted-k3-m6".into(),
            make_synthetic_unweighted(3, 6).unwrap(),
        ),
        (
            "weighted-k2-m2".into(),
            make_synthetic_weighted(2, 2).unwrap(),
        ),
        (
            "weighted-k5-m4".into(),
            make_synthetic_weighted(5, 4).unwrap(),
        ),
        ("alpha-k5-m4".into(), make_synthetic_alpha(5, 4).unwrap()),
        ("alpha-k3-m6".into(), make_synthetic_alpha(3, 6).unwrap()),
    ];
    for seed in [7u64, 11] {
        let mut rng = StdRng::seed_from_u64(seed);
        out.push((
            format!("darts-k20-seed{seed}"),
            make_darts(20, &mut rng).unwrap(),
        ));
    }
    let fit_a = f1::LapModelFit {
        driver_id: 1,
        race_id: 1,
        alpha: 0.6,
        beta: 0.7,
        gamma: 0.010,
        sigma: 0.03,
        terminal_mean: 0.0,
        num_laps: 10,
    };
    let fit_b = f1::LapModelFit {
        driver_id: 2,
        race_id: 1,
        alpha: 0.5,
        beta: 0.72,
        gamma: 0.012,
        sigma: 0.04,
        terminal_mean: 0.0,
        num_laps: 10,
    };
    out.push((
        "f1-synthetic-m5".into(),
        f1::make_f1_instance(&fit_a, &fit_b, 5).unwrap(),
    ));
    out
}
