//! Environment semantics for the weighted tallying bandit.
//!
//! An instance couples `K` actions with per-action weight vectors over the
//! last `m` plays and per-action loss functions over the weighted tally
//! `w_x . y`, where `y` is the binary vector marking, per recency position,
//! whether the action was played. Position 1 is the current play, so the
//! tally of the action just played always has its first component set.
//! Observed losses are unbiased samples of the expected loss under the
//! instance's feedback law and always lie in `[0, 1]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Result, WtbError};

/// Matching tolerance for loss lookups keyed by weighted-tally value.
pub const TALLY_TOLERANCE: f64 = 1e-9;

/// Hard cap on `m` for the exhaustive repeated-exposure-optimality check
/// (the check enumerates all `2^(m-1)` window contexts per action).
pub const REO_BRUTE_FORCE_CAP: usize = 20;

/// Expected loss as a function of the weighted-tally value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossRule {
    /// Explicit `(tally value, loss)` pairs, matched within
    /// [`TALLY_TOLERANCE`]. `default` applies when no entry matches.
    Table {
        entries: Vec<(f64, f64)>,
        #[serde(default)]
        default: Option<f64>,
    },
    /// `intercept + slope * tally`, with overrides (matched within
    /// [`TALLY_TOLERANCE`]) taking precedence.
    Affine {
        intercept: f64,
        slope: f64,
        #[serde(default)]
        overrides: Vec<(f64, f64)>,
    },
    /// Exact dyadic equality test: loss is `hit` iff
    /// `tally * 2^scale_bits == target` as integers, else `miss`. Intended
    /// for weight vectors of the form `w_i = 1/2^i`, whose tallies are exact
    /// binary fractions, so the comparison carries no rounding at all.
    DyadicIndicator {
        scale_bits: u32,
        target: u64,
        hit: f64,
        miss: f64,
    },
}

impl LossRule {
    /// Expected loss at the given tally value.
    pub fn eval(&self, tally: f64) -> Option<f64> {
        match self {
            LossRule::Table { entries, default } => entries
                .iter()
                .find(|(key, _)| (key - tally).abs() <= TALLY_TOLERANCE)
                .map(|&(_, loss)| loss)
                .or(*default),
            LossRule::Affine {
                intercept,
                slope,
                overrides,
            } => overrides
                .iter()
                .find(|(key, _)| (key - tally).abs() <= TALLY_TOLERANCE)
                .map(|&(_, loss)| loss)
                .or(Some(intercept + slope * tally)),
            LossRule::DyadicIndicator {
                scale_bits,
                target,
                hit,
                miss,
            } => {
                // Scaling by a power of two is exact; equality is intentional.
                let scaled = tally * (1u64 << scale_bits) as f64;
                Some(if scaled == *target as f64 { *hit } else { *miss })
            }
        }
    }
}

/// Law generating observed losses around the expected loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Feedback {
    /// Observation equals the expected loss.
    Deterministic,
    /// Observation is Bernoulli with mean equal to the expected loss.
    Bernoulli,
    /// Gaussian around the expected loss with a per-action std, clamped to
    /// `[0, 1]` after sampling (the clamp introduces a small bias when the
    /// mean sits within a few stds of either endpoint; accepted and
    /// documented, since observations must stay in `[0, 1]`).
    ClampedGaussian { stds: Vec<f64> },
}

/// One step's feedback: the sampled loss, its mean, and the tally it was
/// evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub observed_loss: f64,
    pub expected_loss: f64,
    pub weighted_tally: f64,
}

/// Record of the last `m` plays, most recent last. Appending when full
/// drops the oldest entry; at game start the window is empty, which makes
/// the missing positions of every tally vector zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryWindow {
    recent: VecDeque<usize>,
    capacity: usize,
}

impl HistoryWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be at least 1");
        HistoryWindow {
            recent: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, action: usize) {
        if self.recent.len() == self.capacity {
            self.recent.pop_front();
        }
        self.recent.push_back(action);
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Entries most recent first.
    pub fn iter_recent(&self) -> impl Iterator<Item = usize> + '_ {
        self.recent.iter().rev().copied()
    }

    /// Binary tally vector of length `capacity`: component `i` (0-based) is
    /// true iff the `i+1`-th most recent entry exists and equals `action`.
    pub fn tally_vector(&self, action: usize) -> Vec<bool> {
        let mut tally = vec![false; self.capacity];
        for (i, played) in self.iter_recent().enumerate() {
            tally[i] = played == action;
        }
        tally
    }
}

/// A complete environment description: `K` actions, memory capacity `m`,
/// per-action weight vectors in `(0, 1]^m`, per-action loss rules, and a
/// feedback law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WtbInstance {
    #[serde(rename = "K")]
    num_actions: usize,
    #[serde(rename = "m")]
    memory: usize,
    weights: Vec<Vec<f64>>,
    losses: Vec<LossRule>,
    feedback: Feedback,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon_hint: Option<u64>,
}

impl WtbInstance {
    /// Builds and validates an instance. `K` and `m` are derived from the
    /// weight matrix shape.
    pub fn new(weights: Vec<Vec<f64>>, losses: Vec<LossRule>, feedback: Feedback) -> Result<Self> {
        let num_actions = weights.len();
        let memory = weights.first().map(Vec::len).unwrap_or(0);
        let instance = WtbInstance {
            num_actions,
            memory,
            weights,
            losses,
            feedback,
            horizon_hint: None,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn with_horizon_hint(mut self, horizon: u64) -> Self {
        self.horizon_hint = Some(horizon);
        self
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn feedback(&self) -> &Feedback {
        &self.feedback
    }

    /// Replaces the feedback law, keeping losses and weights.
    pub fn with_feedback(mut self, feedback: Feedback) -> Result<Self> {
        self.feedback = feedback;
        self.validate()?;
        Ok(self)
    }

    pub fn horizon_hint(&self) -> Option<u64> {
        self.horizon_hint
    }

    pub fn weights_of(&self, action: usize) -> Result<&[f64]> {
        self.check_action(action)?;
        Ok(&self.weights[action])
    }

    /// `||w_x||_1`, the largest reachable tally for the action.
    pub fn weight_norm(&self, action: usize) -> Result<f64> {
        Ok(self.weights_of(action)?.iter().sum())
    }

    /// Fresh empty window sized to this instance's memory capacity.
    pub fn new_window(&self) -> HistoryWindow {
        HistoryWindow::new(self.memory)
    }

    /// Structural validation plus, when `m <= REO_BRUTE_FORCE_CAP`, an
    /// exhaustive check that every reachable context's loss lies in [0, 1].
    pub fn validate(&self) -> Result<()> {
        if self.num_actions == 0 {
            return Err(WtbError::Validation("instance has no actions".into()));
        }
        if self.memory == 0 {
            return Err(WtbError::Validation("memory capacity must be >= 1".into()));
        }
        if self.weights.len() != self.num_actions {
            return Err(WtbError::Shape(format!(
                "expected {} weight vectors, got {}",
                self.num_actions,
                self.weights.len()
            )));
        }
        if self.losses.len() != self.num_actions {
            return Err(WtbError::Shape(format!(
                "expected {} loss rules, got {}",
                self.num_actions,
                self.losses.len()
            )));
        }
        for (x, w) in self.weights.iter().enumerate() {
            if w.len() != self.memory {
                return Err(WtbError::Shape(format!(
                    "weight vector for action {x} has length {}, expected {}",
                    w.len(),
                    self.memory
                )));
            }
            if let Some(bad) = w.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
                return Err(WtbError::Validation(format!(
                    "weight {bad} for action {x} lies outside (0, 1]"
                )));
            }
        }
        if let Feedback::ClampedGaussian { stds } = &self.feedback {
            if stds.len() != self.num_actions {
                return Err(WtbError::Shape(format!(
                    "expected {} feedback stds, got {}",
                    self.num_actions,
                    stds.len()
                )));
            }
            if let Some(bad) = stds.iter().find(|&&s| !(s > 0.0) || !s.is_finite()) {
                return Err(WtbError::Validation(format!(
                    "feedback std {bad} must be positive and finite"
                )));
            }
        }
        if self.memory <= REO_BRUTE_FORCE_CAP {
            for x in 0..self.num_actions {
                for tally in self.reachable_tallies(x) {
                    let loss = self.loss_at(x, tally)?;
                    if !(0.0..=1.0).contains(&loss) {
                        return Err(WtbError::Validation(format!(
                            "loss {loss} for action {x} at tally {tally} lies outside [0, 1]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.num_actions {
            return Err(WtbError::InvalidAction {
                action,
                num_actions: self.num_actions,
            });
        }
        Ok(())
    }

    fn check_window(&self, history: &HistoryWindow) -> Result<()> {
        if history.capacity() != self.memory {
            return Err(WtbError::Shape(format!(
                "window capacity {} does not match memory capacity {}",
                history.capacity(),
                self.memory
            )));
        }
        Ok(())
    }

    /// Tally values of every context in which the action could be charged:
    /// the current play is marked, the remaining `m-1` positions range over
    /// all subsets. Only valid for `m <= REO_BRUTE_FORCE_CAP`.
    fn reachable_tallies(&self, action: usize) -> impl Iterator<Item = f64> + '_ {
        let w = &self.weights[action];
        let m = self.memory;
        (0u64..(1u64 << (m - 1))).map(move |mask| {
            let mut tally = w[0];
            for (i, &wi) in w.iter().enumerate().skip(1) {
                if mask >> (i - 1) & 1 == 1 {
                    tally += wi;
                }
            }
            tally
        })
    }

    /// Binary tally vector for `action` against the current window.
    pub fn tally_vector(&self, history: &HistoryWindow, action: usize) -> Result<Vec<bool>> {
        self.check_action(action)?;
        self.check_window(history)?;
        Ok(history.tally_vector(action))
    }

    /// Inner product of the action's weights with its tally vector. Lies in
    /// `[0, ||w_x||_1]` for every reachable window.
    pub fn weighted_tally(&self, history: &HistoryWindow, action: usize) -> Result<f64> {
        self.check_action(action)?;
        self.check_window(history)?;
        Ok(self.weighted_tally_unchecked(history, action))
    }

    fn weighted_tally_unchecked(&self, history: &HistoryWindow, action: usize) -> f64 {
        let w = &self.weights[action];
        history
            .iter_recent()
            .enumerate()
            .filter(|&(_, played)| played == action)
            .map(|(i, _)| w[i])
            .sum()
    }

    /// Expected loss of the action's loss rule at a raw tally value.
    pub fn loss_at(&self, action: usize, tally: f64) -> Result<f64> {
        self.check_action(action)?;
        self.losses[action]
            .eval(tally)
            .ok_or(WtbError::UnmappedTally { action, tally })
    }

    /// Expected loss charged for `action` given a window that already
    /// contains the current play of `action`.
    pub fn expected_loss(&self, history: &HistoryWindow, action: usize) -> Result<f64> {
        let tally = self.weighted_tally(history, action)?;
        self.loss_at(action, tally)
    }

    /// Loss after the action has filled its entire memory window,
    /// `h_x(||w_x||_1)`.
    pub fn eventual_loss(&self, action: usize) -> Result<f64> {
        let norm = self.weight_norm(action)?;
        self.loss_at(action, norm)
    }

    /// Appends the play to the window, evaluates the expected loss at the
    /// resulting tally, and samples the observed loss under the feedback
    /// law. Deterministic given the rng state.
    pub fn step<R: Rng + ?Sized>(
        &self,
        history: &mut HistoryWindow,
        action: usize,
        rng: &mut R,
    ) -> Result<Observation> {
        self.check_action(action)?;
        self.check_window(history)?;
        history.push(action);
        let weighted_tally = self.weighted_tally_unchecked(history, action);
        let expected_loss = self.loss_at(action, weighted_tally)?;
        let observed_loss = match &self.feedback {
            Feedback::Deterministic => expected_loss,
            Feedback::Bernoulli => {
                if rng.gen_bool(expected_loss.clamp(0.0, 1.0)) {
                    1.0
                } else {
                    0.0
                }
            }
            Feedback::ClampedGaussian { stds } => {
                let normal = Normal::new(expected_loss, stds[action])
                    .map_err(|e| WtbError::Parameter(format!("gaussian feedback: {e}")))?;
                normal.sample(rng).clamp(0.0, 1.0)
            }
        };
        Ok(Observation {
            observed_loss,
            expected_loss,
            weighted_tally,
        })
    }

    /// Smallest slack `alpha >= 0` such that some action's eventual loss
    /// undercuts every action's loss in every window context up to `alpha`,
    /// together with the action attaining it (ties favor the lowest index).
    ///
    /// Exhaustive over all `K * 2^(m-1)` contexts; refuses (rather than
    /// approximates) when `m` exceeds [`REO_BRUTE_FORCE_CAP`].
    pub fn minimal_reo_alpha(&self) -> Result<(usize, f64)> {
        self.minimal_reo_alpha_capped(REO_BRUTE_FORCE_CAP)
    }

    pub fn minimal_reo_alpha_capped(&self, cap: usize) -> Result<(usize, f64)> {
        if self.memory > cap {
            return Err(WtbError::Capacity(format!(
                "memory capacity {} exceeds the exhaustive check cap {cap}",
                self.memory
            )));
        }
        let mut min_context_loss = f64::INFINITY;
        for x in 0..self.num_actions {
            for tally in self.reachable_tallies(x) {
                min_context_loss = min_context_loss.min(self.loss_at(x, tally)?);
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for candidate in 0..self.num_actions {
            let alpha = (self.eventual_loss(candidate)? - min_context_loss).max(0.0);
            match best {
                Some((_, current)) if current <= alpha => {}
                _ => best = Some((candidate, alpha)),
            }
        }
        Ok(best.expect("validated instance has at least one action"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let instance: WtbInstance = serde_json::from_str(text)?;
        instance.validate()?;
        Ok(instance)
    }
}
