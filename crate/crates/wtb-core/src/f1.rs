//! Lap-time ingestion, normalization, model fitting, and instance
//! construction.
//!
//! Raw lap records are normalized per race to `[0, 1]`, reduced to their
//! pre-first-pit-stop prefixes, and fitted with the mean model
//! `beta * exp(-k * alpha) - |gamma| * k` plus constant-variance Gaussian
//! noise. Driver pairs whose terminal means are mutually within the other
//! driver's sigma-squared half-width (an intentionally strict criterion;
//! note the squared units) define two-action instances.

use std::io::Read;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{Feedback, LossRule, WtbInstance};
use crate::error::{Result, WtbError};

/// One lap of one driver in one race.
#[derive(Debug, Clone, PartialEq)]
pub struct LapRecord {
    pub driver_id: u32,
    pub race_id: u32,
    /// 1-based lap number within the race.
    pub lap_index: u32,
    pub lap_time_sec: f64,
    pub pit_stop: bool,
}

/// Fitted lap-time model for one driver-race pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapModelFit {
    pub driver_id: u32,
    pub race_id: u32,
    /// Decay rate of the exponential warm-up term.
    pub alpha: f64,
    /// Initial amplitude of the exponential term.
    pub beta: f64,
    /// Linear slope; only its magnitude enters the mean model.
    pub gamma: f64,
    /// Observation standard deviation (floored at 1e-4).
    pub sigma: f64,
    /// Mean model evaluated at the final fitted lap index.
    pub terminal_mean: f64,
    pub num_laps: usize,
}

impl LapModelFit {
    /// Mean model at a 1-based lap index.
    pub fn mean_at(&self, lap_index: usize) -> f64 {
        self.beta * (-(lap_index as f64) * self.alpha).exp() - self.gamma.abs() * lap_index as f64
    }
}

const LAP_CSV_HEADER: [&str; 5] = ["driver_id", "race_id", "lap_index", "lap_time_sec", "pit_stop"];

/// Soft sanity range for series values and predicted means on the
/// normalized scale.
const SANITY_RANGE: (f64, f64) = (-0.5, 1.5);

/// Minimum number of consecutive pre-pit laps for a driver to be fitted.
pub const MIN_FIT_LAPS: usize = 8;

const SIGMA_FLOOR: f64 = 1e-4;

/// Parses lap records from a CSV stream with the exact header
/// `driver_id,race_id,lap_index,lap_time_sec,pit_stop`. Failures name the
/// 1-based data row and the offending column. `pit_stop` accepts
/// 0/1/true/false.
pub fn parse_lap_csv<R: Read>(reader: R) -> Result<Vec<LapRecord>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| WtbError::Parse {
            row: 0,
            column: "<header>".into(),
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        // Empty stream: no header, no rows.
        return Ok(Vec::new());
    }
    if headers.iter().collect::<Vec<_>>() != LAP_CSV_HEADER {
        return Err(WtbError::Parse {
            row: 0,
            column: "<header>".into(),
            message: format!(
                "expected header `{}`, got `{}`",
                LAP_CSV_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut records = Vec::new();
    for (i, row) in csv_reader.records().enumerate() {
        let row_number = i + 1;
        let row = row.map_err(|e| WtbError::Parse {
            row: row_number,
            column: "<row>".into(),
            message: e.to_string(),
        })?;
        let field = |idx: usize| -> Result<&str> {
            row.get(idx).ok_or_else(|| WtbError::Parse {
                row: row_number,
                column: LAP_CSV_HEADER[idx].into(),
                message: "missing field".into(),
            })
        };
        let parse_u32 = |idx: usize| -> Result<u32> {
            field(idx)?.parse::<u32>().map_err(|e| WtbError::Parse {
                row: row_number,
                column: LAP_CSV_HEADER[idx].into(),
                message: e.to_string(),
            })
        };
        let driver_id = parse_u32(0)?;
        let race_id = parse_u32(1)?;
        let lap_index = parse_u32(2)?;
        if lap_index < 1 {
            return Err(WtbError::Parse {
                row: row_number,
                column: "lap_index".into(),
                message: "lap index must be >= 1".into(),
            });
        }
        let lap_time_sec = field(3)?.parse::<f64>().map_err(|e| WtbError::Parse {
            row: row_number,
            column: "lap_time_sec".into(),
            message: e.to_string(),
        })?;
        if !(lap_time_sec > 0.0) || !lap_time_sec.is_finite() {
            return Err(WtbError::Parse {
                row: row_number,
                column: "lap_time_sec".into(),
                message: format!("lap time must be positive and finite, got {lap_time_sec}"),
            });
        }
        let pit_stop = match field(4)? {
            "0" | "false" => false,
            "1" | "true" => true,
            other => {
                return Err(WtbError::Parse {
                    row: row_number,
                    column: "pit_stop".into(),
                    message: format!("expected one of 0/1/true/false, got `{other}`"),
                })
            }
        };
        records.push(LapRecord {
            driver_id,
            race_id,
            lap_index,
            lap_time_sec,
            pit_stop,
        });
    }
    Ok(records)
}

pub fn parse_lap_csv_path(path: impl AsRef<Path>) -> Result<Vec<LapRecord>> {
    parse_lap_csv(std::fs::File::open(path)?)
}

/// Normalizes one race's lap times to `[0, 1]` (min/max over every lap of
/// the race) and reduces each driver to their consecutive pre-first-pit
/// prefix. Drivers with fewer than [`MIN_FIT_LAPS`] such laps are dropped,
/// and the survivors are truncated to the shortest surviving length.
/// Returns `(driver_id, normalized series)` sorted by driver.
pub fn normalize_and_filter(records: &[LapRecord], race_id: u32) -> Result<Vec<(u32, Vec<f64>)>> {
    let race: Vec<&LapRecord> = records.iter().filter(|r| r.race_id == race_id).collect();
    if race.is_empty() {
        return Err(WtbError::Normalization(format!(
            "race {race_id} has no lap records"
        )));
    }
    let min = race.iter().map(|r| r.lap_time_sec).fold(f64::INFINITY, f64::min);
    let max = race
        .iter()
        .map(|r| r.lap_time_sec)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(WtbError::Normalization(format!(
            "race {race_id} is degenerate: all {} lap times equal {min}",
            race.len()
        )));
    }
    let span = max - min;

    let mut by_driver: std::collections::BTreeMap<u32, Vec<&LapRecord>> = Default::default();
    for record in &race {
        by_driver.entry(record.driver_id).or_default().push(record);
    }
    let mut eligible: Vec<(u32, Vec<f64>)> = Vec::new();
    for (driver, mut laps) in by_driver {
        laps.sort_by_key(|r| r.lap_index);
        // Consecutive prefix from lap 1 up to (excluding) the first pit
        // stop; index gaps or duplicates end the prefix early.
        let mut series = Vec::new();
        let mut expected_index = 1u32;
        for lap in laps {
            if lap.lap_index != expected_index || lap.pit_stop {
                break;
            }
            series.push((lap.lap_time_sec - min) / span);
            expected_index += 1;
        }
        if series.len() >= MIN_FIT_LAPS {
            eligible.push((driver, series));
        }
    }
    if let Some(shortest) = eligible.iter().map(|(_, s)| s.len()).min() {
        for (_, series) in &mut eligible {
            series.truncate(shortest);
        }
    }
    Ok(eligible)
}

fn mean_model(params: &[f64; 3], lap_index: usize) -> f64 {
    params[1] * (-(lap_index as f64) * params[0]).exp() - params[2].abs() * lap_index as f64
}

fn sum_squared_residuals(params: &[f64; 3], series: &[f64]) -> f64 {
    series
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let r = mean_model(params, i + 1) - y;
            r * r
        })
        .sum()
}

/// Solves a 3x3 linear system in place via Gaussian elimination with
/// partial pivoting. Returns None when the system is effectively singular.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let factor = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
        if !x[row].is_finite() {
            return None;
        }
    }
    Some(x)
}

struct GaussNewtonOutcome {
    params: [f64; 3],
    sse: f64,
    converged: bool,
}

/// Damped Gauss-Newton from one start: numerical central-difference
/// Jacobian (step 1e-6), diagonal damping adjusted by accept/reject, and
/// convergence when the relative residual decrease falls below 1e-10.
fn gauss_newton(start: [f64; 3], series: &[f64]) -> GaussNewtonOutcome {
    const JACOBIAN_STEP: f64 = 1e-6;
    const RELATIVE_TOLERANCE: f64 = 1e-10;
    const MAX_ITERATIONS: usize = 200;

    let n = series.len();
    let mut params = start;
    let mut sse = sum_squared_residuals(&params, series);
    let mut damping = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        if sse == 0.0 {
            return GaussNewtonOutcome {
                params,
                sse,
                converged: true,
            };
        }
        let mut jt_j = [[0.0f64; 3]; 3];
        let mut jt_r = [0.0f64; 3];
        for i in 0..n {
            let residual = mean_model(&params, i + 1) - series[i];
            let mut grad = [0.0f64; 3];
            for p in 0..3 {
                let mut plus = params;
                let mut minus = params;
                plus[p] += JACOBIAN_STEP;
                minus[p] -= JACOBIAN_STEP;
                grad[p] =
                    (mean_model(&plus, i + 1) - mean_model(&minus, i + 1)) / (2.0 * JACOBIAN_STEP);
            }
            for p in 0..3 {
                for q in 0..3 {
                    jt_j[p][q] += grad[p] * grad[q];
                }
                jt_r[p] += grad[p] * residual;
            }
        }
        // Find an accepted damped step, raising the damping on rejection.
        let mut accepted: Option<([f64; 3], f64)> = None;
        let mut local_damping = damping;
        for _ in 0..40 {
            let mut system = jt_j;
            for p in 0..3 {
                system[p][p] += local_damping;
            }
            let rhs = [-jt_r[0], -jt_r[1], -jt_r[2]];
            if let Some(delta) = solve3(system, rhs) {
                let candidate = [
                    params[0] + delta[0],
                    params[1] + delta[1],
                    params[2] + delta[2],
                ];
                let candidate_sse = sum_squared_residuals(&candidate, series);
                if candidate_sse.is_finite() && candidate_sse <= sse {
                    accepted = Some((candidate, candidate_sse));
                    break;
                }
            }
            local_damping *= 10.0;
        }
        match accepted {
            None => {
                // No damped step improves: the start has stalled at its
                // optimum, which satisfies the relative-decrease criterion.
                return GaussNewtonOutcome {
                    params,
                    sse,
                    converged: true,
                };
            }
            Some((candidate, candidate_sse)) => {
                let relative_decrease = (sse - candidate_sse) / sse.max(f64::MIN_POSITIVE);
                params = candidate;
                sse = candidate_sse;
                damping = (local_damping / 10.0).max(1e-12);
                if relative_decrease < RELATIVE_TOLERANCE {
                    return GaussNewtonOutcome {
                        params,
                        sse,
                        converged: true,
                    };
                }
            }
        }
    }
    GaussNewtonOutcome {
        params,
        sse,
        converged: false,
    }
}

fn build_fit(params: [f64; 3], series: &[f64], driver_id: u32, race_id: u32) -> LapModelFit {
    let n = series.len();
    let residuals: Vec<f64> = series
        .iter()
        .enumerate()
        .map(|(i, &y)| mean_model(&params, i + 1) - y)
        .collect();
    let mean_residual = residuals.iter().sum::<f64>() / n as f64;
    let sigma = if n > 1 {
        (residuals
            .iter()
            .map(|r| (r - mean_residual) * (r - mean_residual))
            .sum::<f64>()
            / (n - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    LapModelFit {
        driver_id,
        race_id,
        alpha: params[0],
        beta: params[1],
        gamma: params[2],
        sigma: sigma.max(SIGMA_FLOOR),
        terminal_mean: mean_model(&params, n),
        num_laps: n,
    }
}

/// Least-squares fit of the mean model over lap indices `1..=len`, with a
/// multi-start grid (decay rates {0.1, 0.5, 1.0, 2.0}; amplitudes {data
/// max, twice data max}; slopes {0, least-squares slope of the last half}).
/// Deterministic given the series. Fails, carrying the best parameters
/// found, when no start reaches the convergence tolerance.
pub fn fit_lap_model(series: &[f64], driver_id: u32, race_id: u32) -> Result<LapModelFit> {
    let n = series.len();
    if n < MIN_FIT_LAPS {
        return Err(WtbError::Parameter(format!(
            "series has {n} laps, need at least {MIN_FIT_LAPS}"
        )));
    }
    if series
        .iter()
        .any(|y| !y.is_finite() || *y < SANITY_RANGE.0 || *y > SANITY_RANGE.1)
    {
        return Err(WtbError::Parameter(format!(
            "series values must lie in [{}, {}]",
            SANITY_RANGE.0, SANITY_RANGE.1
        )));
    }

    let data_max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let half_start = n / 2;
    let half: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .skip(half_start)
        .map(|(i, &y)| ((i + 1) as f64, y))
        .collect();
    let half_n = half.len() as f64;
    let mean_k = half.iter().map(|(k, _)| k).sum::<f64>() / half_n;
    let mean_y = half.iter().map(|(_, y)| y).sum::<f64>() / half_n;
    let denom: f64 = half.iter().map(|(k, _)| (k - mean_k) * (k - mean_k)).sum();
    let last_half_slope = if denom > 0.0 {
        half.iter()
            .map(|(k, y)| (k - mean_k) * (y - mean_y))
            .sum::<f64>()
            / denom
    } else {
        0.0
    };

    let mut best: Option<GaussNewtonOutcome> = None;
    let mut any_converged = false;
    for &alpha0 in &[0.1, 0.5, 1.0, 2.0] {
        for &beta0 in &[data_max, 2.0 * data_max] {
            for &gamma0 in &[0.0, last_half_slope] {
                let outcome = gauss_newton([alpha0, beta0, gamma0], series);
                any_converged |= outcome.converged;
                if best.as_ref().map_or(true, |b| outcome.sse < b.sse) {
                    best = Some(outcome);
                }
            }
        }
    }
    let best = best.expect("at least one start ran");
    let fit = build_fit(best.params, series, driver_id, race_id);
    if !any_converged {
        return Err(WtbError::FitFailure {
            message: format!(
                "no start reached the relative tolerance within the iteration cap (best sse {:.3e})",
                best.sse
            ),
            best: Box::new(fit),
        });
    }
    for lap in 1..=n {
        let mean = fit.mean_at(lap);
        if !(SANITY_RANGE.0..=SANITY_RANGE.1).contains(&mean) {
            return Err(WtbError::Validation(format!(
                "fitted mean {mean} at lap {lap} falls outside the sanity range"
            )));
        }
    }
    Ok(fit)
}

/// All unordered driver pairs whose terminal means lie within each other's
/// sigma-squared half-width (both symmetric interval conditions, verbatim
/// squared units). Pairs are returned with `driver_a < driver_b`, sorted.
pub fn eligible_pairs(fits: &[LapModelFit]) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for (i, a) in fits.iter().enumerate() {
        for b in fits.iter().skip(i + 1) {
            let gap = (a.terminal_mean - b.terminal_mean).abs();
            if gap <= b.sigma * b.sigma && gap <= a.sigma * a.sigma {
                let (lo, hi) = if a.driver_id <= b.driver_id {
                    (a.driver_id, b.driver_id)
                } else {
                    (b.driver_id, a.driver_id)
                };
                pairs.push((lo, hi));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Builds a two-action instance from a fitted driver pair: unit weights
/// over a window of `memory` laps, loss mean at in-window count `k` equal
/// to the fitted mean at lap index `k` (clamped to [0, 1]; clamping is
/// logged), and clamped-Gaussian feedback with each driver's sigma. The
/// unclamped mean curves must be strictly decreasing over `1..=memory`.
pub fn make_f1_instance(
    fit_a: &LapModelFit,
    fit_b: &LapModelFit,
    memory: usize,
) -> Result<WtbInstance> {
    if memory < 1 {
        return Err(WtbError::Parameter("memory capacity must be >= 1".into()));
    }
    if memory > fit_a.num_laps || memory > fit_b.num_laps {
        return Err(WtbError::Parameter(format!(
            "memory capacity {memory} exceeds fitted lap range ({}, {})",
            fit_a.num_laps, fit_b.num_laps
        )));
    }
    let mut losses = Vec::with_capacity(2);
    for fit in [fit_a, fit_b] {
        let means: Vec<f64> = (1..=memory).map(|k| fit.mean_at(k)).collect();
        if means.windows(2).any(|w| w[1] >= w[0]) {
            return Err(WtbError::Validation(format!(
                "driver {} in race {}: fitted mean curve is not strictly decreasing over laps 1..={memory}",
                fit.driver_id, fit.race_id
            )));
        }
        let mut clamped_count = 0usize;
        let entries: Vec<(f64, f64)> = means
            .iter()
            .enumerate()
            .map(|(i, &mean)| {
                let clamped = mean.clamp(0.0, 1.0);
                if clamped != mean {
                    clamped_count += 1;
                }
                ((i + 1) as f64, clamped)
            })
            .collect();
        if clamped_count > 0 {
            log::warn!(
                "driver {} in race {}: clamped {clamped_count} fitted means into [0, 1]",
                fit.driver_id,
                fit.race_id
            );
        }
        losses.push(LossRule::Table {
            entries,
            default: None,
        });
    }
    WtbInstance::new(
        vec![vec![1.0; memory]; 2],
        losses,
        Feedback::ClampedGaussian {
            stds: vec![fit_a.sigma, fit_b.sigma],
        },
    )
}

const FITS_CSV_HEADER: &str = "driver_id,race_id,alpha,beta,gamma,sigma,terminal_mean,num_laps";

pub fn write_fits_csv<W: std::io::Write>(writer: &mut W, fits: &[LapModelFit]) -> Result<()> {
    writeln!(writer, "{FITS_CSV_HEADER}")?;
    for f in fits {
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{}",
            f.driver_id, f.race_id, f.alpha, f.beta, f.gamma, f.sigma, f.terminal_mean, f.num_laps
        )?;
    }
    Ok(())
}

pub fn read_fits_csv(path: impl AsRef<Path>) -> Result<Vec<LapModelFit>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == FITS_CSV_HEADER => {}
        other => {
            return Err(WtbError::Parse {
                row: 0,
                column: "<header>".into(),
                message: format!("expected `{FITS_CSV_HEADER}`, got `{}`", other.unwrap_or("")),
            })
        }
    }
    let mut fits = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(WtbError::Parse {
                row: i + 1,
                column: "<row>".into(),
                message: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let err = |col: &str, msg: String| WtbError::Parse {
            row: i + 1,
            column: col.into(),
            message: msg,
        };
        fits.push(LapModelFit {
            driver_id: fields[0]
                .parse()
                .map_err(|e: std::num::ParseIntError| err("driver_id", e.to_string()))?,
            race_id: fields[1]
                .parse()
                .map_err(|e: std::num::ParseIntError| err("race_id", e.to_string()))?,
            alpha: fields[2]
                .parse()
                .map_err(|e: std::num::ParseFloatError| err("alpha", e.to_string()))?,
            beta: fields[3]
                .parse()
                .map_err(|e: std::num::ParseFloatError| err("beta", e.to_string()))?,
            gamma: fields[4]
                .parse()
                .map_err(|e: std::num::ParseFloatError| err("gamma", e.to_string()))?,
            sigma: fields[5]
                .parse()
                .map_err(|e: std::num::ParseFloatError| err("sigma", e.to_string()))?,
            terminal_mean: fields[6]
                .parse()
                .map_err(|e: std::num::ParseFloatError| err("terminal_mean", e.to_string()))?,
            num_laps: fields[7]
                .parse()
                .map_err(|e: std::num::ParseIntError| err("num_laps", e.to_string()))?,
        });
    }
    Ok(fits)
}

pub fn write_pairs_csv<W: std::io::Write>(
    writer: &mut W,
    pairs: &[(u32, u32, u32)],
) -> Result<()> {
    writeln!(writer, "race_id,driver_a,driver_b")?;
    for (race, a, b) in pairs {
        writeln!(writer, "{race},{a},{b}")?;
    }
    Ok(())
}

/// Configuration for the synthetic lap generator that stands in for real
/// telemetry (the repo does not bundle the real dataset).
#[derive(Debug, Clone)]
pub struct SyntheticLapsConfig {
    pub num_races: u32,
    pub drivers_per_race: u32,
    pub seed: u64,
}

impl Default for SyntheticLapsConfig {
    fn default() -> Self {
        SyntheticLapsConfig {
            num_races: 3,
            drivers_per_race: 6,
            seed: 0,
        }
    }
}

/// Generates lap records in the ingestion schema: per driver-race pair an
/// exponential-plus-linear mean on raw seconds with Gaussian noise, a pit
/// stop ending the usable prefix, and a couple of post-pit laps. Drivers 1
/// and 2 of each race share an identical series so at least one pair
/// survives the strict eligibility criterion. One driver per race pits too
/// early to be fitted.
pub fn generate_synthetic_laps(config: &SyntheticLapsConfig) -> Vec<LapRecord> {
    let mut rng = StdRng::seed_from_u64(config.seed);
    let mut records = Vec::new();
    for race_id in 1..=config.num_races {
        let base = rng.gen_range(85.0..95.0);
        let spread = rng.gen_range(8.0..12.0);
        let mut twin_series: Option<Vec<(f64, bool)>> = None;
        for driver_id in 1..=config.drivers_per_race {
            let alpha = rng.gen_range(0.3..1.0);
            let beta = rng.gen_range(0.4..0.8);
            let gamma = rng.gen_range(0.002..0.02);
            let sigma = rng.gen_range(0.01..0.04);
            let last_driver = driver_id == config.drivers_per_race;
            let pre_pit = if last_driver {
                4
            } else {
                rng.gen_range(9..=14)
            };
            let noise = Normal::new(0.0, sigma).expect("positive std");
            let mut series: Vec<(f64, bool)> = Vec::new();
            for k in 1..=pre_pit {
                let normalized =
                    beta * (-(k as f64) * alpha).exp() + 0.3 - gamma * k as f64
                        + noise.sample(&mut rng);
                series.push((base + spread * normalized, false));
            }
            // Pit lap plus two laps after the stop.
            series.push((base + spread * 0.4 + 22.0, true));
            for k in 1..=2u32 {
                let normalized = beta * (-(k as f64) * alpha).exp() + 0.3 - gamma * k as f64
                    + noise.sample(&mut rng);
                series.push((base + spread * normalized, false));
            }
            // Driver 2 replays driver 1's laps exactly.
            if driver_id == 1 {
                twin_series = Some(series.clone());
            } else if driver_id == 2 {
                if let Some(twin) = &twin_series {
                    series = twin.clone();
                }
            }
            for (i, (time, pit)) in series.iter().enumerate() {
                records.push(LapRecord {
                    driver_id,
                    race_id,
                    lap_index: (i + 1) as u32,
                    lap_time_sec: *time,
                    pit_stop: *pit,
                });
            }
        }
    }
    records
}

pub fn write_lap_csv<W: std::io::Write>(writer: &mut W, records: &[LapRecord]) -> Result<()> {
    writeln!(writer, "{}", LAP_CSV_HEADER.join(","))?;
    for r in records {
        writeln!(
            writer,
            "{},{},{},{},{}",
            r.driver_id,
            r.race_id,
            r.lap_index,
            r.lap_time_sec,
            if r.pit_stop { 1 } else { 0 }
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series_from(params: [f64; 3], n: usize) -> Vec<f64> {
        (1..=n).map(|k| mean_model(&params, k)).collect()
    }

    #[test]
    fn parse_header_only_yields_empty() {
        let csv = "driver_id,race_id,lap_index,lap_time_sec,pit_stop\n";
        assert!(parse_lap_csv(csv.as_bytes()).unwrap().is_empty());
        assert!(parse_lap_csv(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn parse_row_values() {
        let csv = "driver_id,race_id,lap_index,lap_time_sec,pit_stop\n3,17,1,92.45,0\n";
        let records = parse_lap_csv(csv.as_bytes()).unwrap();
        assert_eq!(
            records,
            vec![LapRecord {
                driver_id: 3,
                race_id: 17,
                lap_index: 1,
                lap_time_sec: 92.45,
                pit_stop: false,
            }]
        );
    }

    #[test]
    fn parse_accepts_boolean_pit_markers() {
        let csv = "driver_id,race_id,lap_index,lap_time_sec,pit_stop\n\
                   1,1,1,90,true\n1,1,2,90.5,false\n1,1,3,91,1\n";
        let records = parse_lap_csv(csv.as_bytes()).unwrap();
        assert_eq!(
            records.iter().map(|r| r.pit_stop).collect::<Vec<_>>(),
            vec![true, false, true]
        );
    }

    #[test]
    fn parse_errors_carry_row_and_column() {
        let csv = "driver_id,race_id,lap_index,lap_time_sec,pit_stop\n\
                   1,1,1,90,0\n1,1,2,-1,0\n";
        match parse_lap_csv(csv.as_bytes()) {
            Err(WtbError::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "lap_time_sec");
            }
            other => panic!("expected a parse error, got {other:?}"),
        }

        let bad_header = "driver,race,lap,time,pit\n";
        assert!(matches!(
            parse_lap_csv(bad_header.as_bytes()),
            Err(WtbError::Parse { row: 0, .. })
        ));
    }

    fn record(driver: u32, lap: u32, time: f64, pit: bool) -> LapRecord {
        LapRecord {
            driver_id: driver,
            race_id: 1,
            lap_index: lap,
            lap_time_sec: time,
            pit_stop: pit,
        }
    }

    #[test]
    fn normalize_truncates_to_shortest_eligible() {
        let mut records = Vec::new();
        for (driver, pre_pit) in [(1u32, 8u32), (2, 9), (3, 10)] {
            for lap in 1..=pre_pit {
                records.push(record(driver, lap, 90.0 + driver as f64 + lap as f64, false));
            }
            records.push(record(driver, pre_pit + 1, 115.0, true));
        }
        // Driver 4 pits on lap 5: only 4 pre-pit laps, so it is dropped.
        for lap in 1..=4 {
            records.push(record(4, lap, 95.0 + lap as f64, false));
        }
        records.push(record(4, 5, 120.0, true));

        let series = normalize_and_filter(&records, 1).unwrap();
        assert_eq!(series.len(), 3);
        for (_, s) in &series {
            assert_eq!(s.len(), 8);
        }
        assert!(series.iter().all(|(d, _)| *d != 4));
    }

    #[test]
    fn normalize_endpoints_map_to_unit_interval() {
        let mut records: Vec<LapRecord> = (1..=9)
            .map(|lap| record(1, lap, 100.0 - lap as f64, false))
            .collect();
        records.push(record(2, 1, 120.0, false)); // race max, different driver
        let series = normalize_and_filter(&records, 1).unwrap();
        let (_, s) = &series[0];
        let min = s.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(min, 0.0); // the race minimum (91.0) maps to zero
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn normalize_is_identity_on_unit_race() {
        // A race already spanning [0, 1] re-normalizes to itself.
        let times: Vec<f64> = vec![1.0, 0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.0];
        let records: Vec<LapRecord> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| record(1, (i + 1) as u32, t, false))
            .collect();
        let series = normalize_and_filter(&records, 1).unwrap();
        for (v, t) in series[0].1.iter().zip(&times) {
            assert_abs_diff_eq!(v, t, epsilon = 1e-15);
        }
    }

    #[test]
    fn normalize_rejects_degenerate_race() {
        let records: Vec<LapRecord> = (1..=9).map(|lap| record(1, lap, 90.0, false)).collect();
        assert!(matches!(
            normalize_and_filter(&records, 1),
            Err(WtbError::Normalization(_))
        ));
        assert!(normalize_and_filter(&records, 2).is_err());
    }

    #[test]
    fn fit_recovers_noiseless_generator_means() {
        let truth = [0.8, 0.6, 0.01];
        let series = series_from(truth, 10);
        let fit = fit_lap_model(&series, 1, 1).unwrap();
        for k in 1..=10 {
            assert_abs_diff_eq!(fit.mean_at(k), mean_model(&truth, k), epsilon = 1e-6);
        }
        assert_abs_diff_eq!(fit.terminal_mean, mean_model(&truth, 10), epsilon = 1e-6);
        assert_eq!(fit.sigma, SIGMA_FLOOR);
    }

    #[test]
    fn fit_constant_series_predicts_the_constant() {
        let series = vec![0.4; 9];
        let fit = fit_lap_model(&series, 1, 1).unwrap();
        for k in 1..=9 {
            assert_abs_diff_eq!(fit.mean_at(k), 0.4, epsilon = 1e-6);
        }
        assert_eq!(fit.sigma, SIGMA_FLOOR);
    }

    #[test]
    fn fit_is_deterministic() {
        let series = series_from([0.6, 0.5, 0.008], 12);
        let a = fit_lap_model(&series, 1, 1).unwrap();
        let b = fit_lap_model(&series, 1, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fit_terminal_mean_error_is_small_under_noise() {
        use rand::rngs::StdRng;
        use rand::SeedableRng;
        let truth = [0.8, 0.6, 0.01];
        let clean = series_from(truth, 10);
        let true_terminal = mean_model(&truth, 10);
        let mut errors: Vec<f64> = Vec::new();
        for seed in 0..200u64 {
            let mut rng = StdRng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.02).unwrap();
            let noisy: Vec<f64> = clean.iter().map(|y| y + noise.sample(&mut rng)).collect();
            let fit = fit_lap_model(&noisy, 1, 1).unwrap();
            errors.push((fit.terminal_mean - true_terminal).abs());
        }
        errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(errors[errors.len() / 2] < 0.02);
    }

    #[test]
    fn fit_rejects_short_or_wild_series() {
        assert!(fit_lap_model(&[0.1; 5], 1, 1).is_err());
        let mut wild = vec![0.2; 9];
        wild[3] = 9.0;
        assert!(fit_lap_model(&wild, 1, 1).is_err());
    }

    #[test]
    fn eligible_pairs_follow_the_squared_width() {
        let fit = |driver, mu: f64, sigma: f64| LapModelFit {
            driver_id: driver,
            race_id: 1,
            alpha: 0.5,
            beta: 0.6,
            gamma: 0.01,
            sigma,
            terminal_mean: mu,
            num_laps: 10,
        };
        // sigma^2 = 0.04 covers the 0.01 gap.
        let close = vec![fit(1, 0.30, 0.2), fit(2, 0.31, 0.2)];
        assert_eq!(eligible_pairs(&close), vec![(1, 2)]);
        // sigma^2 = 0.01 does not cover the 0.2 gap.
        let far = vec![fit(1, 0.30, 0.1), fit(2, 0.50, 0.1)];
        assert!(eligible_pairs(&far).is_empty());
        // Identical fits are always eligible.
        let same = vec![fit(1, 0.42, 0.05), fit(2, 0.42, 0.05)];
        assert_eq!(eligible_pairs(&same), vec![(1, 2)]);
    }

    fn decreasing_fit(driver: u32) -> LapModelFit {
        LapModelFit {
            driver_id: driver,
            race_id: 1,
            alpha: 0.6,
            beta: 0.7,
            gamma: 0.01,
            sigma: 0.03,
            terminal_mean: 0.0,
            num_laps: 10,
        }
    }

    #[test]
    fn instance_loss_mean_matches_model_at_count_one() {
        let a = decreasing_fit(1);
        let b = decreasing_fit(2);
        let instance = make_f1_instance(&a, &b, 10).unwrap();
        let expected = a.beta * (-a.alpha).exp() - a.gamma.abs();
        assert_abs_diff_eq!(instance.loss_at(0, 1.0).unwrap(), expected, epsilon = 1e-12);
        assert_eq!(instance.num_actions(), 2);
        assert_eq!(instance.memory(), 10);
    }

    #[test]
    fn instance_rejects_memory_beyond_fit_range() {
        let a = decreasing_fit(1);
        let b = decreasing_fit(2);
        assert!(matches!(
            make_f1_instance(&a, &b, 11),
            Err(WtbError::Parameter(_))
        ));
    }

    #[test]
    fn instance_rejects_non_decreasing_mean_curves() {
        let mut flat = decreasing_fit(1);
        flat.alpha = 0.0;
        flat.gamma = 0.0; // mean is constant beta
        let b = decreasing_fit(2);
        assert!(matches!(
            make_f1_instance(&flat, &b, 5),
            Err(WtbError::Validation(_))
        ));
    }

    #[test]
    fn instance_zero_slack_for_separated_decreasing_pairs() {
        let a = decreasing_fit(1);
        let b = decreasing_fit(2);
        let instance = make_f1_instance(&a, &b, 6).unwrap();
        let (_, alpha) = instance.minimal_reo_alpha().unwrap();
        assert_eq!(alpha, 0.0);
    }

    #[test]
    fn fits_csv_roundtrip() {
        let fits = vec![decreasing_fit(1), decreasing_fit(2)];
        let mut buffer = Vec::new();
        write_fits_csv(&mut buffer, &fits).unwrap();
        let dir = std::env::temp_dir().join("wtb-fits-roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fits.csv");
        std::fs::write(&path, &buffer).unwrap();
        let back = read_fits_csv(&path).unwrap();
        assert_eq!(back, fits);
    }

    #[test]
    fn synthetic_laps_feed_the_whole_pipeline() {
        let config = SyntheticLapsConfig {
            num_races: 2,
            drivers_per_race: 5,
            seed: 4,
        };
        let records = generate_synthetic_laps(&config);
        let mut buffer = Vec::new();
        write_lap_csv(&mut buffer, &records).unwrap();
        let parsed = parse_lap_csv(buffer.as_slice()).unwrap();
        assert_eq!(parsed, records);

        for race in 1..=2 {
            let series = normalize_and_filter(&records, race).unwrap();
            // The early-pit driver is dropped, the rest survive truncated.
            assert_eq!(series.len(), 4);
            let len = series[0].1.len();
            assert!(len >= MIN_FIT_LAPS);
            assert!(series.iter().all(|(_, s)| s.len() == len));
            let fits: Vec<LapModelFit> = series
                .iter()
                .map(|(driver, s)| fit_lap_model(s, *driver, race).unwrap())
                .collect();
            // The twin drivers share a series, hence a pair survives.
            assert!(eligible_pairs(&fits).contains(&(1, 2)));
        }
    }
}
