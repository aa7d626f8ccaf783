//! One end-to-end acquisition: synthesize, bucketize, report, fuse, decode.

use rayon::prelude::*;

use crate::codebook::{build_codebook, Codebook};
use crate::config::Policies;
use crate::decoder::{decode_spectrum_with, SpectrumEstimate};
use crate::error::{Error, Result};
use crate::sampler::{
    average_periodogram, peak_search, snapshot_spectra, subsample, SnapshotSpectra,
};
use crate::scenario::{compose_capture, ScenarioConfig, SwarmConfig};
use crate::swarm_link::{fuse, CodedSpectrum, SpectralReport};

#[derive(Debug, Clone)]
pub struct Acquisition {
    pub codebook: Codebook,
    pub spectra: Vec<SnapshotSpectra>,
    pub reports: Vec<SpectralReport>,
    pub coded: CodedSpectrum,
    pub estimate: SpectrumEstimate,
}

/// Codebook for `swarm`, refusing an ambiguous grid unless the swarm allows it.
pub fn checked_codebook(swarm: &SwarmConfig) -> Result<Codebook> {
    let cb = build_codebook(swarm)?;
    if !swarm.allow_ambiguous {
        cb.require_unambiguous()?;
    }
    Ok(cb)
}

/// Snapshot spectra at every node, in swarm order. Nodes run in parallel.
pub fn node_spectra(
    scenario: &ScenarioConfig,
    swarm: &SwarmConfig,
) -> Result<Vec<SnapshotSpectra>> {
    swarm
        .nodes
        .par_iter()
        .map(|node| {
            let capture = compose_capture(scenario, swarm, node.node_id)?;
            let stream = subsample(&capture, node.decimation as i64)?;
            snapshot_spectra(&stream, swarm.resolution_hz)
        })
        .collect()
}

/// Applies the peak search to each node's averaged periodogram.
pub fn node_reports(
    spectra: &[SnapshotSpectra],
    policies: &Policies,
) -> Result<Vec<SpectralReport>> {
    spectra
        .iter()
        .map(|s| {
            let bins = peak_search(&average_periodogram(s)?, &policies.peak);
            SpectralReport::from_spectra(s, &bins)
        })
        .collect()
}

pub fn acquire(
    scenario: &ScenarioConfig,
    swarm: &SwarmConfig,
    policies: &Policies,
) -> Result<Acquisition> {
    swarm.validate()?;
    scenario.validate(swarm)?;
    policies.validate()?;
    let codebook = checked_codebook(swarm)?;
    let spectra = node_spectra(scenario, swarm)?;
    let expected_l = scenario.snapshot_count(swarm)?;
    if let Some(s) = spectra.iter().find(|s| s.snapshot_count != expected_l) {
        return Err(Error::validation(
            "scenario.capture_duration_s",
            format!(
                "node {} produced {} snapshots, expected {expected_l}",
                s.node_id, s.snapshot_count
            ),
        ));
    }
    let reports = node_reports(&spectra, policies)?;
    let coded = fuse(&reports, &codebook)?;
    let estimate = decode_spectrum_with(&coded, &codebook, policies.detection)?;
    Ok(Acquisition {
        codebook,
        spectra,
        reports,
        coded,
        estimate,
    })
}
