use serde::{Deserialize, Serialize};

use crate::error::{Result, WtbError};

/// Derived constants of the elimination schedule: the epoch count
/// `S = floor(log2(T / (4 K M) + 1))` plus the per-epoch pull counts and
/// confidence radii. Pull counts depend on the surviving-set size and are
/// therefore finalized lazily, epoch by epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub num_epochs: usize,
    pub horizon: usize,
    pub m_upper: usize,
    pub num_actions: usize,
    pub delta: f64,
    /// When set, radii use the horizon-free constants
    /// `sqrt(64 / n_s * ln(2 K / delta))` and `num_epochs` is not a bound.
    pub horizonless: bool,
}

impl EpochSchedule {
    /// Pulls per surviving action in the given 1-based epoch:
    /// `ceil(K * M * 2^s / surviving)`. Always at least `2 M`.
    pub fn pulls(&self, epoch: usize, surviving: usize) -> usize {
        let raw = (self.num_actions * self.m_upper) as f64 * 2f64.powi(epoch as i32)
            / surviving as f64;
        raw.ceil() as usize
    }

    /// Confidence radius for an epoch with the given pull count.
    pub fn radius(&self, pulls: usize) -> f64 {
        let k = self.num_actions as f64;
        if self.horizonless {
            (64.0 / pulls as f64 * (2.0 * k / self.delta).ln()).sqrt()
        } else {
            let s = self.num_epochs as f64;
            (32.0 / pulls as f64 * (2.0 * k * s / self.delta).ln()).sqrt()
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(WtbError::Parameter(format!(
            "failure probability {delta} must lie in (0, 1)"
        )));
    }
    Ok(())
}

/// Builds the horizon-aware schedule. Degenerate inputs with `4 K M >= T`
/// collapse to a single epoch (logged, not an error).
pub fn se_schedule(
    horizon: usize,
    m_upper: usize,
    num_actions: usize,
    delta: f64,
) -> Result<EpochSchedule> {
    check_delta(delta)?;
    if num_actions == 0 || m_upper == 0 || horizon == 0 {
        return Err(WtbError::Parameter(
            "horizon, action count, and memory bound must all be >= 1".into(),
        ));
    }
    if m_upper > horizon {
        return Err(WtbError::Parameter(format!(
            "memory bound {m_upper} exceeds horizon {horizon}"
        )));
    }
    let ratio = horizon as f64 / (4.0 * num_actions as f64 * m_upper as f64) + 1.0;
    let num_epochs = (ratio.log2().floor() as usize).max(1);
    if 4 * num_actions * m_upper >= horizon {
        log::warn!(
            "degenerate schedule: 4*K*M = {} >= horizon {horizon}, running a single epoch",
            4 * num_actions * m_upper
        );
    }
    Ok(EpochSchedule {
        num_epochs,
        horizon,
        m_upper,
        num_actions,
        delta,
        horizonless: false,
    })
}

/// Horizon-free variant: epochs continue until the runner's budget is
/// exhausted, with wider radii. Valid only for `delta < 0.009`.
pub fn se_schedule_horizonless(
    m_upper: usize,
    num_actions: usize,
    delta: f64,
) -> Result<EpochSchedule> {
    check_delta(delta)?;
    if delta >= 0.009 {
        return Err(WtbError::Parameter(format!(
            "horizon-free radii require delta < 0.009, got {delta}"
        )));
    }
    if num_actions == 0 || m_upper == 0 {
        return Err(WtbError::Parameter(
            "action count and memory bound must be >= 1".into(),
        ));
    }
    Ok(EpochSchedule {
        num_epochs: usize::MAX,
        horizon: 0,
        m_upper,
        num_actions,
        delta,
        horizonless: true,
    })
}
