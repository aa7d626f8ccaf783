//! Monte-Carlo evaluation: trials, sweeps, relative RMSE, and a brute-force
//! full-rate reference.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Policies};
use crate::decoder::{decode_powers, Threshold};
use crate::error::{Error, Result};
use crate::pipeline::{acquire, Acquisition};
use crate::sampler::{
    average_periodogram, median, peak_search, snapshot_spectra, subsample, PeakPolicy,
};
use crate::scenario::{compose_capture, Modulation, ScenarioConfig, SwarmConfig};
use crate::seed::{self, TAG_CARRIER, TAG_TRIAL};
use crate::swarm_link::{fuse, SpectralReport};

/// Carrier draw band as fractions of the unambiguous span (0.35 GHz to 12 GHz of 12 GHz).
pub const CARRIER_BAND: (f64, f64) = (0.35 / 12.0, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub truths: Vec<f64>,
    /// Estimate matched to each truth, if any detection was left to match.
    pub estimates: Vec<Option<f64>>,
    /// Raw number of detections.
    pub detections: usize,
    /// Truths with a matched estimate within the match tolerance.
    pub hits: usize,
    /// Detections that are not a hit.
    pub false_alarms: usize,
    pub channels: usize,
    /// Median decoded power of non-signal channels relative to the strongest
    /// channel, with every bin reported.
    pub floor_rel: f64,
}

impl TrialResult {
    pub fn matched_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.truths
            .iter()
            .zip(&self.estimates)
            .filter_map(|(t, e)| e.map(|e| e - t))
    }

    pub fn misses(&self) -> usize {
        self.truths.len() - self.hits
    }
}

/// Greedy one-to-one matching: repeatedly pairs the closest remaining
/// (truth, estimate). Returns the estimate index for each truth.
pub fn match_estimates(truths: &[f64], estimates: &[f64]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = truths
        .iter()
        .enumerate()
        .flat_map(|(i, t)| {
            estimates
                .iter()
                .enumerate()
                .map(move |(j, e)| ((e - t).abs(), i, j))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; truths.len()];
    let mut used = vec![false; estimates.len()];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(j);
            used[j] = true;
        }
    }
    out
}

/// `(1/f_s) sqrt(mean squared error)` over all matched (truth, estimate) pairs.
pub fn relative_rmse(trials: &[TrialResult], nyquist_rate_hz: f64) -> Result<f64> {
    let (sum, count) = trials
        .iter()
        .flat_map(|t| t.matched_errors())
        .fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if count == 0 {
        return Err(Error::UndefinedMetric(
            "relative RMSE needs at least one matched pair",
        ));
    }
    Ok((sum / count as f64).sqrt() / nyquist_rate_hz)
}

fn score(
    trial: usize,
    seed: u64,
    truths: Vec<f64>,
    acq: &Acquisition,
    tolerance_hz: f64,
    floor_rel: f64,
) -> TrialResult {
    let est: Vec<f64> = acq
        .estimate
        .detections
        .iter()
        .map(|d| d.frequency_hz)
        .collect();
    let matched = match_estimates(&truths, &est);
    let estimates: Vec<Option<f64>> = matched.iter().map(|m| m.map(|j| est[j])).collect();
    let hits = truths
        .iter()
        .zip(&estimates)
        .filter(|(t, e)| e.is_some_and(|e| (e - *t).abs() <= tolerance_hz))
        .count();
    TrialResult {
        trial,
        seed,
        truths,
        estimates,
        detections: est.len(),
        hits,
        false_alarms: est.len() - hits,
        channels: acq.codebook.q_total(),
        floor_rel,
    }
}

/// Decoded noise floor: every bin reported, median power over channels
/// farther than `tolerance_bins` from any truth, relative to the peak.
pub fn decoded_floor(acq: &Acquisition, truths: &[f64], tolerance_bins: f64) -> Result<f64> {
    let dense = acq
        .spectra
        .iter()
        .map(SpectralReport::dense)
        .collect::<Result<Vec<_>>>()?;
    let powers = decode_powers(&fuse(&dense, &acq.codebook)?, &acq.codebook)?;
    let peak = powers.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Ok(0.0);
    }
    let df = acq.codebook.resolution_hz();
    let q_total = acq.codebook.q_total() as f64;
    let noise: Vec<f64> = powers
        .iter()
        .enumerate()
        .filter(|&(q, _)| {
            truths.iter().all(|t| {
                // Circular distance on the channel grid.
                let d = (q as f64 - t / df).rem_euclid(q_total);
                d.min(q_total - d) > tolerance_bins
            })
        })
        .map(|(_, &p)| p)
        .collect();
    if noise.is_empty() {
        return Ok(0.0);
    }
    Ok(median(&noise) / peak)
}

/// Runs the full pipeline once with the scenario reseeded to `seed`.
pub fn run_trial(
    scenario: &ScenarioConfig,
    swarm: &SwarmConfig,
    policies: &Policies,
    seed: u64,
) -> Result<TrialResult> {
    run_indexed_trial(0, scenario, swarm, policies, seed)
}

fn run_indexed_trial(
    trial: usize,
    scenario: &ScenarioConfig,
    swarm: &SwarmConfig,
    policies: &Policies,
    seed: u64,
) -> Result<TrialResult> {
    let mut scenario = scenario.clone();
    scenario.seed = seed;
    let acq = acquire(&scenario, swarm, policies)?;
    let truths: Vec<f64> = scenario.emitters.iter().map(|e| e.carrier_hz).collect();
    let floor = decoded_floor(&acq, &truths, policies.match_tolerance_bins)?;
    let tolerance_hz = policies.match_tolerance_bins * swarm.resolution_hz;
    Ok(score(trial, seed, truths, &acq, tolerance_hz, floor))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SweepAxis {
    SnrDb(Vec<f64>),
    ResolutionHz(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::SnrDb(_) => "snr_db",
            SweepAxis::ResolutionHz(_) => "resolution_hz",
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            SweepAxis::SnrDb(v) | SweepAxis::ResolutionHz(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    /// `None` when no trial produced a matched pair.
    pub rmse_relative: Option<f64>,
    pub p_detect: f64,
    pub p_false_alarm: f64,
    /// Median over trials of [`TrialResult::floor_rel`].
    pub decoded_floor_rel: f64,
    pub k_trials: usize,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub axis: &'static str,
    pub points: Vec<SweepPoint>,
    pub k_trials: usize,
    pub base_seed: u64,
    pub capture_duration_s: f64,
    pub runtime_s: f64,
}

fn aggregate(axis_value: f64, trials: Vec<TrialResult>, nyquist_rate_hz: f64) -> SweepPoint {
    let truths: usize = trials.iter().map(|t| t.truths.len()).sum();
    let hits: usize = trials.iter().map(|t| t.hits).sum();
    let fa: usize = trials.iter().map(|t| t.false_alarms).sum();
    let fa_cells: usize = trials.iter().map(|t| t.channels - t.hits).sum();
    let floors: Vec<f64> = trials.iter().map(|t| t.floor_rel).collect();
    SweepPoint {
        axis_value,
        rmse_relative: relative_rmse(&trials, nyquist_rate_hz).ok(),
        p_detect: if truths == 0 {
            0.0
        } else {
            hits as f64 / truths as f64
        },
        p_false_alarm: if fa_cells == 0 {
            0.0
        } else {
            fa as f64 / fa_cells as f64
        },
        decoded_floor_rel: median(&floors),
        k_trials: trials.len(),
        trials,
    }
}

/// Draws the emitter carriers for one trial on (or, with `off_grid`, near)
/// the channel grid, inside [`CARRIER_BAND`] of the unambiguous span.
pub fn draw_carriers(
    scenario: &ScenarioConfig,
    swarm: &SwarmConfig,
    seed: u64,
    off_grid: bool,
) -> Result<ScenarioConfig> {
    let mut scenario = scenario.clone();
    let df = swarm.resolution_hz;
    let span = crate::codebook::unambiguous_span(swarm)?;
    let q_total = swarm.q_total()? as f64;
    let max_bw = scenario
        .emitters
        .iter()
        .filter(|e| e.modulation == Modulation::Lfm)
        .map(|e| e.bandwidth_hz)
        .fold(0.0, f64::max);
    let lo = (CARRIER_BAND.0 * span / df).ceil().max(1.0) as usize;
    let hi = ((CARRIER_BAND.1 * span - max_bw) / df)
        .floor()
        .min(q_total - 1.0) as usize;
    let n = scenario.emitters.len();
    if hi < lo || hi - lo + 1 < n {
        return Err(Error::validation(
            "scenario.emitters",
            format!("cannot place {n} distinct carriers in channels {lo}..={hi}"),
        ));
    }
    let mut rng = seed::rng_for(seed, &[TAG_CARRIER]);
    let picks = index::sample(&mut rng, hi - lo + 1, n);
    for (e, q) in scenario.emitters.iter_mut().zip(picks.iter()) {
        let offset = if off_grid {
            rng.random_range(-0.5..0.5)
        } else {
            0.0
        };
        e.carrier_hz = ((lo + q) as f64 + offset) * df;
    }
    Ok(scenario)
}

/// K trials per axis point; trial seeds derive from `(base_seed, point, k)`.
pub fn sweep(
    axis: &SweepAxis,
    base: &ExperimentConfig,
    k: usize,
    base_seed: u64,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::validation("k", "need at least one trial per point"));
    }
    let start = Instant::now();
    let mut points = Vec::with_capacity(axis.values().len());
    for (pi, &value) in axis.values().iter().enumerate() {
        let mut scenario = base.scenario.clone();
        let mut swarm = base.swarm.clone();
        match axis {
            SweepAxis::SnrDb(_) => scenario.snr_db = Some(value),
            SweepAxis::ResolutionHz(_) => swarm.resolution_hz = value,
        }
        swarm.validate()?;
        let trials = (0..k)
            .into_par_iter()
            .map(|ki| {
                let seed = seed::derive_seed(base_seed, &[TAG_TRIAL, pi as u64, ki as u64]);
                let drawn = draw_carriers(&scenario, &swarm, seed, base.policies.off_grid)?;
                run_indexed_trial(ki, &drawn, &swarm, &base.policies, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        points.push(aggregate(value, trials, swarm.nyquist_rate_hz));
    }
    Ok(EvalReport {
        axis: axis.name(),
        points,
        k_trials: k,
        base_seed,
        capture_duration_s: base.scenario.capture_duration_s,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Full-rate reference: FFT the undecimated capture of the first node at
/// `resolution_hz`, run the same peak search and detection threshold, and
/// return the occupied channels.
pub fn nyquist_oracle(
    scenario: &ScenarioConfig,
    swarm: &SwarmConfig,
    resolution_hz: f64,
    policy: &PeakPolicy,
    threshold: Threshold,
) -> Result<BTreeSet<usize>> {
    let node = swarm
        .nodes
        .first()
        .ok_or_else(|| Error::config("swarm.nodes", "no nodes"))?;
    let capture = compose_capture(scenario, swarm, node.node_id)?;
    let spectra = snapshot_spectra(&subsample(&capture, 1)?, resolution_hz)?;
    let periodogram = average_periodogram(&spectra)?;
    let peaks = peak_search(&periodogram, policy);
    let peak = peaks.iter().map(|&m| periodogram[m]).fold(0.0, f64::max);
    let cut = match threshold {
        Threshold::RelativeDb(db) => peak * 10f64.powf(-db / 10.0),
        Threshold::Absolute(level) => level,
    };
    Ok(peaks
        .into_iter()
        .filter(|&m| periodogram[m] >= cut)
        .collect())
}
