//! Per-node bucketization: decimation without anti-alias filtering, snapshot
//! FFTs at the shared resolution, and the peak search that decides which
//! buckets a node reports.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{integral_ratio, NodeCapture};

#[derive(Debug, Clone, PartialEq)]
pub struct SubNyquistStream {
    pub node_id: u16,
    pub samples: Vec<Complex64>,
    pub rate_hz: f64,
}

/// L snapshot spectra of M points each, stored row-major (one row per snapshot).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSpectra {
    pub node_id: u16,
    pub spectra: Vec<Complex64>,
    pub resolution_hz: f64,
    pub m_points: usize,
    pub snapshot_count: usize,
}

impl SnapshotSpectra {
    pub fn snapshot(&self, l: usize) -> &[Complex64] {
        &self.spectra[l * self.m_points..(l + 1) * self.m_points]
    }

    pub fn rate_hz(&self) -> f64 {
        self.m_points as f64 * self.resolution_hz
    }
}

/// A frequency folded into the first sub-rate Nyquist zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldResult {
    pub folded_hz: f64,
    pub zone: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorEstimator {
    #[default]
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakPolicy {
    #[serde(default)]
    pub floor_estimator: FloorEstimator,
    /// A bin is occupied when its power is this many dB above the floor.
    #[serde(default = "default_threshold_db")]
    pub threshold_factor_db: f64,
    #[serde(default)]
    pub max_peaks: Option<usize>,
    /// The floor is never taken below the strongest bin minus this many dB,
    /// so FFT round-off in noiseless spectra is not mistaken for signal.
    #[serde(default = "default_dynamic_range_db")]
    pub dynamic_range_db: f64,
}

fn default_threshold_db() -> f64 {
    10.0
}

fn default_dynamic_range_db() -> f64 {
    120.0
}

impl Default for PeakPolicy {
    fn default() -> Self {
        PeakPolicy {
            floor_estimator: FloorEstimator::Median,
            threshold_factor_db: default_threshold_db(),
            max_peaks: None,
            dynamic_range_db: default_dynamic_range_db(),
        }
    }
}

impl PeakPolicy {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.threshold_factor_db.is_finite() && self.threshold_factor_db > 0.0) {
            return Err(Error::validation(
                format!("{path}.threshold_factor_db"),
                "threshold factor must be > 0 dB",
            ));
        }
        if !(self.dynamic_range_db > 0.0) {
            return Err(Error::validation(
                format!("{path}.dynamic_range_db"),
                "dynamic range must be > 0 dB",
            ));
        }
        Ok(())
    }
}

/// Keeps every `r`-th sample. Aliasing is the point, so there is no filter.
pub fn subsample(capture: &NodeCapture, r: i64) -> Result<SubNyquistStream> {
    if r <= 0 {
        return Err(Error::validation(
            "decimation",
            format!("decimation {r} must be >= 1"),
        ));
    }
    let r = r as usize;
    let len = capture.samples.len() / r;
    Ok(SubNyquistStream {
        node_id: capture.node_id,
        samples: capture
            .samples
            .iter()
            .step_by(r)
            .take(len)
            .copied()
            .collect(),
        rate_hz: capture.rate_hz / r as f64,
    })
}

/// Splits the stream into contiguous `rate / resolution`-point windows and
/// takes an unnormalized, untapered forward DFT of each. A trailing partial
/// window is dropped.
pub fn snapshot_spectra(stream: &SubNyquistStream, resolution_hz: f64) -> Result<SnapshotSpectra> {
    let m = integral_ratio(
        stream.rate_hz,
        resolution_hz,
        "resolution_hz",
        "stream rate must be a whole multiple of the resolution",
    )? as usize;
    let l = stream.samples.len() / m;
    if l == 0 {
        return Err(Error::validation(
            "samples",
            format!(
                "stream of {} samples is shorter than one {m}-point window",
                stream.samples.len()
            ),
        ));
    }
    let fft = FftPlanner::new().plan_fft_forward(m);
    let mut spectra = stream.samples[..l * m].to_vec();
    fft.process(&mut spectra);
    Ok(SnapshotSpectra {
        node_id: stream.node_id,
        spectra,
        resolution_hz,
        m_points: m,
        snapshot_count: l,
    })
}

/// Mean of |Y|^2 over snapshots, per bin.
pub fn average_periodogram(spectra: &SnapshotSpectra) -> Result<Vec<f64>> {
    if spectra.snapshot_count == 0 || spectra.m_points == 0 {
        return Err(Error::validation("spectra", "no snapshots"));
    }
    let mut acc = vec![0.0; spectra.m_points];
    for row in spectra.spectra.chunks_exact(spectra.m_points) {
        for (a, y) in acc.iter_mut().zip(row) {
            *a += y.norm_sqr();
        }
    }
    let scale = 1.0 / spectra.snapshot_count as f64;
    acc.iter_mut().for_each(|a| *a *= scale);
    Ok(acc)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Bins whose power clears the floor by the policy's threshold, ascending.
pub fn peak_search(periodogram: &[f64], policy: &PeakPolicy) -> Vec<usize> {
    if periodogram.is_empty() {
        return Vec::new();
    }
    let peak = periodogram.iter().copied().fold(0.0, f64::max);
    let floor = match policy.floor_estimator {
        FloorEstimator::Median => median(periodogram),
    }
    .max(peak * 10f64.powf(-policy.dynamic_range_db / 10.0));
    let threshold = floor * 10f64.powf(policy.threshold_factor_db / 10.0);

    let mut hits: Vec<usize> = periodogram
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p > 0.0 && p >= threshold)
        .map(|(m, _)| m)
        .collect();
    if let Some(cap) = policy.max_peaks {
        if hits.len() > cap {
            hits.sort_by(|&a, &b| periodogram[b].total_cmp(&periodogram[a]).then(a.cmp(&b)));
            hits.truncate(cap);
        }
    }
    hits.sort_unstable();
    hits
}

/// Folds `f_hz` into `(-f_sp/2, f_sp/2]` and returns the zone index removed.
pub fn fold_frequency(f_hz: f64, f_sp_hz: f64) -> FoldResult {
    let zone = (f_hz / f_sp_hz - 0.5).ceil();
    let folded = (-zone).mul_add(f_sp_hz, f_hz);
    FoldResult {
        folded_hz: folded,
        zone: zone as i64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn stream(samples: Vec<Complex64>, rate_hz: f64) -> SubNyquistStream {
        SubNyquistStream {
            node_id: 1,
            samples,
            rate_hz,
        }
    }

    fn capture(samples: Vec<Complex64>, rate_hz: f64) -> NodeCapture {
        NodeCapture {
            node_id: 1,
            rate_hz,
            samples,
            noise_variance: 0.0,
            clock_offset_samples: 0,
        }
    }

    fn ramp(n: usize) -> Vec<Complex64> {
        (0..n).map(|i| Complex64::new(i as f64, 0.0)).collect()
    }

    /// Direct O(M^2) DFT used as the FFT oracle.
    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let m = x.len();
        (0..m)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(n, v)| {
                        v * Complex64::from_polar(1.0, -2.0 * PI * (k * n) as f64 / m as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn subsample_index_arithmetic() {
        let y = subsample(&capture(ramp(12), 12.0), 3).unwrap();
        let idx: Vec<f64> = y.samples.iter().map(|z| z.re).collect();
        assert_eq!(idx, vec![0.0, 3.0, 6.0, 9.0]);
        assert_eq!(y.rate_hz, 4.0);
        let y = subsample(&capture(ramp(13), 13.0), 3).unwrap();
        assert_eq!(y.samples.len(), 4);
    }

    #[test]
    fn subsample_identity_and_errors() {
        let c = capture(ramp(7), 7.0);
        assert_eq!(subsample(&c, 1).unwrap().samples, c.samples);
        assert!(subsample(&c, 0).is_err());
        assert!(subsample(&c, -2).is_err());
    }

    #[test]
    fn dc_and_on_grid_tone_spectra() {
        let s = snapshot_spectra(&stream(vec![Complex64::new(1.0, 0.0); 4], 4.0), 1.0).unwrap();
        assert_eq!(s.m_points, 4);
        assert_eq!(s.snapshot_count, 1);
        let expect = [4.0, 0.0, 0.0, 0.0];
        for (y, e) in s.snapshot(0).iter().zip(expect) {
            assert!((y - Complex64::new(e, 0.0)).norm() < 1e-12);
        }
        let tone: Vec<Complex64> = (0..4)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * n as f64 / 4.0))
            .collect();
        let s = snapshot_spectra(&stream(tone, 4.0), 1.0).unwrap();
        for (k, y) in s.snapshot(0).iter().enumerate() {
            let e = if k == 1 { 4.0 } else { 0.0 };
            assert!((y.norm() - e).abs() < 1e-12);
        }
    }

    #[test]
    fn spectra_match_naive_dft_and_drop_partial_window() {
        let x: Vec<Complex64> = (0..23)
            .map(|n| Complex64::new((n as f64 * 0.7).sin(), (n as f64 * 1.3).cos()))
            .collect();
        let s = snapshot_spectra(&stream(x.clone(), 5.0), 1.0).unwrap();
        assert_eq!(s.snapshot_count, 4);
        for l in 0..4 {
            let oracle = naive_dft(&x[l * 5..(l + 1) * 5]);
            for (a, b) in s.snapshot(l).iter().zip(&oracle) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn parseval_per_snapshot() {
        let x: Vec<Complex64> = (0..96)
            .map(|n| Complex64::new((n as f64).sqrt().sin(), (n as f64 * 0.37).cos()))
            .collect();
        let s = snapshot_spectra(&stream(x.clone(), 32.0), 1.0).unwrap();
        for l in 0..s.snapshot_count {
            let freq: f64 = s.snapshot(l).iter().map(|y| y.norm_sqr()).sum();
            let time: f64 = x[l * 32..(l + 1) * 32].iter().map(|y| y.norm_sqr()).sum();
            assert!((freq - 32.0 * time).abs() / freq < 1e-10);
        }
    }

    #[test]
    fn short_stream_is_rejected() {
        assert!(snapshot_spectra(&stream(ramp(3), 4.0), 1.0).is_err());
    }

    #[test]
    fn periodogram_averaging() {
        let single = SnapshotSpectra {
            node_id: 1,
            spectra: vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 1.0)],
            resolution_hz: 1.0,
            m_points: 2,
            snapshot_count: 1,
        };
        assert_eq!(average_periodogram(&single).unwrap(), vec![25.0, 1.0]);
        let two = SnapshotSpectra {
            spectra: vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)],
            m_points: 1,
            snapshot_count: 2,
            ..single
        };
        assert_eq!(average_periodogram(&two).unwrap(), vec![1.0]);
    }

    #[test]
    fn noise_periodogram_mean_is_m() {
        use crate::scenario::{ScenarioConfig, SwarmConfig};
        let swarm = SwarmConfig::new(256.0, 1.0, &[1, 2]);
        let scenario = ScenarioConfig {
            emitters: vec![],
            snr_db: Some(0.0),
            seed: 3,
            capture_duration_s: 100.0,
        };
        let cap = crate::scenario::compose_capture(&scenario, &swarm, 1).unwrap();
        let s = snapshot_spectra(&subsample(&cap, 1).unwrap(), 1.0).unwrap();
        assert_eq!((s.m_points, s.snapshot_count), (256, 100));
        let p = average_periodogram(&s).unwrap();
        for v in &p {
            assert!((v / 256.0 - 1.0).abs() < 0.4, "{v}");
        }
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!((mean / 256.0 - 1.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn peak_search_examples() {
        let policy = PeakPolicy::default();
        assert_eq!(peak_search(&[100.0, 1.0, 1.0, 1.0], &policy), vec![0]);
        assert!(peak_search(&[3.0; 8], &policy).is_empty());
        assert!(peak_search(&[0.0; 8], &policy).is_empty());
        assert!(peak_search(&[], &policy).is_empty());
    }

    #[test]
    fn peak_search_cap_keeps_strongest() {
        let policy = PeakPolicy {
            max_peaks: Some(2),
            ..PeakPolicy::default()
        };
        let p = [50.0, 1.0, 90.0, 1.0, 70.0, 1.0, 1.0];
        assert_eq!(peak_search(&p, &policy), vec![2, 4]);
    }

    #[test]
    fn noiseless_round_off_is_not_a_peak() {
        let mut p = vec![1e-25; 16];
        p[3] = 1.0;
        p[7] = 0.5;
        assert_eq!(peak_search(&p, &PeakPolicy::default()), vec![3, 7]);
    }

    #[test]
    fn noise_false_alarm_rate() {
        use crate::scenario::{ScenarioConfig, SwarmConfig};
        let swarm = SwarmConfig::new(300.0, 1.0, &[1, 2]);
        let policy = PeakPolicy::default();
        let mut false_alarms = 0usize;
        let runs = 100;
        for seed in 0..runs {
            let scenario = ScenarioConfig {
                emitters: vec![],
                snr_db: Some(0.0),
                seed,
                capture_duration_s: 100.0,
            };
            let cap = crate::scenario::compose_capture(&scenario, &swarm, 1).unwrap();
            let s = snapshot_spectra(&subsample(&cap, 1).unwrap(), 1.0).unwrap();
            false_alarms += peak_search(&average_periodogram(&s).unwrap(), &policy).len();
        }
        let rate = false_alarms as f64 / (runs as f64 * 300.0);
        assert!(rate < 0.01, "{rate}");
    }

    #[test]
    fn fold_examples() {
        assert_eq!(
            fold_frequency(1.0, 3.0),
            FoldResult {
                folded_hz: 1.0,
                zone: 0
            }
        );
        assert_eq!(
            fold_frequency(5.0, 3.0),
            FoldResult {
                folded_hz: -1.0,
                zone: 2
            }
        );
        assert_eq!(
            fold_frequency(10.5e9, 4e9),
            FoldResult {
                folded_hz: -1.5e9,
                zone: 3
            }
        );
        assert_eq!(
            fold_frequency(2.0, 4.0),
            FoldResult {
                folded_hz: 2.0,
                zone: 0
            }
        );
        assert_eq!(
            fold_frequency(-2.0, 4.0),
            FoldResult {
                folded_hz: 2.0,
                zone: -1
            }
        );
    }

    /// Every on-grid tone lands in bin q mod M at every node.
    #[test]
    fn aliasing_places_tones_at_residues() {
        use crate::scenario::{compose_capture, EmitterSpec, ScenarioConfig, SwarmConfig};
        let swarm = SwarmConfig::new(12.0, 1.0, &[4, 3]);
        for q in 1..12 {
            let scenario = ScenarioConfig {
                emitters: vec![EmitterSpec::tone(q as f64, 1.0)],
                snr_db: None,
                seed: 0,
                capture_duration_s: 2.0,
            };
            for node in &swarm.nodes {
                let cap = compose_capture(&scenario, &swarm, node.node_id).unwrap();
                let y = subsample(&cap, node.decimation as i64).unwrap();
                let s = snapshot_spectra(&y, 1.0).unwrap();
                let p = average_periodogram(&s).unwrap();
                let m = s.m_points;
                let peak = (0..m).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
                assert_eq!(peak, q % m, "q={q} m={m}");
                assert_eq!(peak_search(&p, &PeakPolicy::default()), vec![q % m]);
            }
        }
        // Global bin 5 folds to bin 2 at the 3-point node.
        assert_eq!(5 % 3, 2);
    }

    proptest! {
        #[test]
        fn fold_round_trip(f in -1_000_000_000i64..1_000_000_000, fsp in 1i64..100_000_000) {
            let r = fold_frequency(f as f64, fsp as f64);
            prop_assert_eq!(r.folded_hz + r.zone as f64 * fsp as f64, f as f64);
            prop_assert!(2.0 * r.folded_hz > -(fsp as f64) && 2.0 * r.folded_hz <= fsp as f64);
        }

        #[test]
        fn raising_threshold_never_adds_bins(
            p in proptest::collection::vec(0.0f64..1e6, 1..64),
            g1 in 0.1f64..30.0,
            dg in 0.0f64..30.0,
        ) {
            let lo = PeakPolicy { threshold_factor_db: g1, ..PeakPolicy::default() };
            let hi = PeakPolicy { threshold_factor_db: g1 + dg, ..PeakPolicy::default() };
            let a = peak_search(&p, &lo);
            let b = peak_search(&p, &hi);
            prop_assert!(b.iter().all(|m| a.contains(m)));
        }

        #[test]
        fn nested_subsampling_composes(n in 0usize..200, a in 1i64..6, b in 1i64..6) {
            let c = capture(ramp(n), 1.0);
            let first = subsample(&c, a).unwrap();
            let ab = subsample(&capture(first.samples, 1.0), b).unwrap();
            let direct = subsample(&c, a * b).unwrap();
            prop_assert_eq!(ab.samples, direct.samples);
        }
    }
}
