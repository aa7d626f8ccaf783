//! Covariance-minimum decoding of the coded spectrum.
//!
//! For each channel the P x P cross-node covariance of the reported
//! amplitudes is averaged over snapshots; its smallest-magnitude entry is the
//! channel's power. A channel whose bucket is empty at any node decodes to
//! exactly zero, which is what removes most collision ghosts.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::swarm_link::CodedSpectrum;

/// Snapshot-averaged P x P covariance of one channel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCovariance {
    pub channel: usize,
    pub dim: usize,
    pub matrix: Vec<Complex64>,
}

impl ChannelCovariance {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[i * self.dim + j]
    }

    pub fn is_hermitian(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| self.get(i, j) == self.get(j, i).conj()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Threshold {
    /// Keep channels within this many dB of the strongest one.
    RelativeDb(f64),
    /// Keep channels at or above this power.
    Absolute(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::RelativeDb(10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub channel: usize,
    pub frequency_hz: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    pub resolution_hz: f64,
    pub powers: Vec<f64>,
    /// Sorted by descending power.
    pub detections: Vec<Detection>,
}

/// `R_q = (1/L) sum_l v_l v_l^H` with `v_l` the P node values of channel `q`.
pub fn channel_covariance(ys: &CodedSpectrum, q: usize) -> ChannelCovariance {
    let p = ys.node_count();
    let l_count = ys.snapshot_count();
    let mut v = vec![Complex64::new(0.0, 0.0); p];
    let mut acc = vec![Complex64::new(0.0, 0.0); p * p];
    for l in 0..l_count {
        for (row, x) in v.iter_mut().enumerate() {
            *x = ys.value(row, q, l);
        }
        accumulate_outer(&mut acc, &v);
    }
    finish(q, p, l_count, acc)
}

#[inline]
fn accumulate_outer(acc: &mut [Complex64], v: &[Complex64]) {
    let p = v.len();
    for i in 0..p {
        acc[i * p + i].re += v[i].norm_sqr();
        for j in i + 1..p {
            acc[i * p + j] += v[i] * v[j].conj();
        }
    }
}

/// Scales by 1/L and mirrors the upper triangle, so the result is exactly Hermitian.
fn finish(channel: usize, p: usize, l_count: usize, mut acc: Vec<Complex64>) -> ChannelCovariance {
    let scale = if l_count == 0 {
        0.0
    } else {
        1.0 / l_count as f64
    };
    for i in 0..p {
        acc[i * p + i] = Complex64::new(acc[i * p + i].re * scale, 0.0);
        for j in i + 1..p {
            let x = acc[i * p + j] * scale;
            acc[i * p + j] = x;
            acc[j * p + i] = x.conj();
        }
    }
    ChannelCovariance {
        channel,
        dim: p,
        matrix: acc,
    }
}

/// Minimum magnitude over all entries of the covariance.
pub fn channel_power(r: &ChannelCovariance) -> f64 {
    if r.matrix.is_empty() {
        return 0.0;
    }
    r.matrix
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min)
}

/// Channels passing `threshold`, strongest first.
pub fn detect(est: &SpectrumEstimate, threshold: Threshold) -> Vec<Detection> {
    detect_powers(&est.powers, est.resolution_hz, threshold)
}

fn detect_powers(powers: &[f64], resolution_hz: f64, threshold: Threshold) -> Vec<Detection> {
    let cut = match threshold {
        Threshold::RelativeDb(db) => {
            let peak = powers.iter().copied().fold(0.0, f64::max);
            if peak <= 0.0 {
                return Vec::new();
            }
            peak * 10f64.powf(-db / 10.0)
        }
        Threshold::Absolute(level) => level,
    };
    let mut out: Vec<Detection> = powers
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p > 0.0 && p >= cut)
        .map(|(q, &p)| Detection {
            channel: q,
            frequency_hz: q as f64 * resolution_hz,
            power: p,
        })
        .collect();
    out.sort_by(|a, b| b.power.total_cmp(&a.power).then(a.channel.cmp(&b.channel)));
    out
}

/// Decodes with the default detection threshold (10 dB below the peak).
pub fn decode_spectrum(ys: &CodedSpectrum, cb: &Codebook) -> Result<SpectrumEstimate> {
    decode_spectrum_with(ys, cb, Threshold::default())
}

pub fn decode_spectrum_with(
    ys: &CodedSpectrum,
    cb: &Codebook,
    threshold: Threshold,
) -> Result<SpectrumEstimate> {
    let powers = decode_powers(ys, cb)?;
    let detections = detect_powers(&powers, cb.resolution_hz(), threshold);
    Ok(SpectrumEstimate {
        resolution_hz: cb.resolution_hz(),
        powers,
        detections,
    })
}

/// Per-channel power for every channel of the grid.
pub fn decode_powers(ys: &CodedSpectrum, cb: &Codebook) -> Result<Vec<f64>> {
    if ys.q_total() != cb.q_total() {
        return Err(Error::Decode(format!(
            "coded spectrum has {} channels, codebook {}",
            ys.q_total(),
            cb.q_total()
        )));
    }
    let cb_ids: Vec<u16> = cb.nodes().iter().map(|n| n.node_id).collect();
    if ys.node_ids() != cb_ids {
        return Err(Error::Decode(format!(
            "coded spectrum rows {:?} do not match codebook rows {:?}",
            ys.node_ids(),
            cb_ids
        )));
    }
    for (row, node) in cb.nodes().iter().enumerate() {
        if ys.m_points(row) != node.m_points {
            return Err(Error::Decode(format!(
                "node {} has {} points, codebook {}",
                node.node_id,
                ys.m_points(row),
                node.m_points
            )));
        }
    }

    let p = ys.node_count();
    let l_count = ys.snapshot_count();
    let mut v = vec![Complex64::new(0.0, 0.0); p];
    let powers = (0..ys.q_total())
        .map(|q| {
            let Some(slots) = ys.slots(q) else {
                return 0.0;
            };
            let mut acc = vec![Complex64::new(0.0, 0.0); p * p];
            for l in 0..l_count {
                for (row, x) in v.iter_mut().enumerate() {
                    *x = ys.amplitude(row, slots[row], l);
                }
                accumulate_outer(&mut acc, &v);
            }
            channel_power(&finish(q, p, l_count, acc))
        })
        .collect();
    Ok(powers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov(dim: usize, m: &[Complex64]) -> ChannelCovariance {
        ChannelCovariance {
            channel: 0,
            dim,
            matrix: m.to_vec(),
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn power_is_min_magnitude() {
        let r = cov(2, &[c(4.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(channel_power(&r), 1.0);
        let r = cov(2, &[c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(channel_power(&r), 0.0);
        let r = cov(2, &[c(4.0, 0.0), c(0.0, 3.0), c(0.0, -3.0), c(5.0, 0.0)]);
        assert_eq!(channel_power(&r), 3.0);
    }

    #[test]
    fn detection_examples() {
        let est = SpectrumEstimate {
            resolution_hz: 10.0,
            powers: vec![0.0, 9.0, 0.0, 1.0],
            detections: vec![],
        };
        let d = detect(&est, Threshold::RelativeDb(20.0));
        assert_eq!(d.iter().map(|d| d.channel).collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(d[0].frequency_hz, 10.0);
        let d = detect(&est, Threshold::RelativeDb(5.0));
        assert_eq!(d.len(), 1);
        let d = detect(&est, Threshold::Absolute(0.5));
        assert_eq!(d.len(), 2);
        let zero = SpectrumEstimate {
            powers: vec![0.0; 4],
            ..est
        };
        assert!(detect(&zero, Threshold::RelativeDb(10.0)).is_empty());
        assert!(detect(&zero, Threshold::Absolute(0.0)).is_empty());
    }

    #[test]
    fn threshold_config_shape() {
        let t: Threshold = serde_json::from_str(r#"{"mode":"relative_db","value":10}"#).unwrap();
        assert_eq!(t, Threshold::RelativeDb(10.0));
        let t: Threshold = serde_json::from_str(r#"{"mode":"absolute","value":2.5}"#).unwrap();
        assert_eq!(t, Threshold::Absolute(2.5));
    }
}
