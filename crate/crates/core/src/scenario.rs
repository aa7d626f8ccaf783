//! Scene synthesis at the equivalent Nyquist rate.
//!
//! Each node sees the sum of all emitters, delayed by the far-field plane-wave
//! delay for its position, plus circular complex white Gaussian noise. The
//! signal model is complex analytic: a tone at `f` produces a single spectral
//! line at `f` with no conjugate image.

use std::f64::consts::{FRAC_PI_3, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codebook;
use crate::error::{Error, Result};
use crate::seed::{self, TAG_CHIPS, TAG_CLOCK, TAG_NOISE};

/// Propagation speed used for inter-node delays, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Largest azimuth magnitude an emitter may have.
pub const MAX_AZIMUTH_RAD: f64 = FRAC_PI_3;

const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    #[default]
    Tone,
    Monopulse,
    Bpsk,
    Lfm,
}

/// One far-field emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    pub carrier_hz: f64,
    #[serde(default)]
    pub modulation: Modulation,
    /// Occupied bandwidth; the LFM sweep span when no explicit rate is given.
    #[serde(default)]
    pub bandwidth_hz: f64,
    #[serde(default = "unit_power")]
    pub power: f64,
    #[serde(default)]
    pub azimuth_rad: f64,
    #[serde(default)]
    pub pulse_start_s: f64,
    #[serde(default)]
    pub pulse_width_s: f64,
    #[serde(default)]
    pub chip_rate_hz: f64,
    /// Chirp rate. When absent the sweep covers `bandwidth_hz` over the capture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_rate_hz_per_s: Option<f64>,
}

fn unit_power() -> f64 {
    1.0
}

impl EmitterSpec {
    pub fn tone(carrier_hz: f64, power: f64) -> Self {
        EmitterSpec {
            carrier_hz,
            modulation: Modulation::Tone,
            bandwidth_hz: 0.0,
            power,
            azimuth_rad: 0.0,
            pulse_start_s: 0.0,
            pulse_width_s: 0.0,
            chip_rate_hz: 0.0,
            sweep_rate_hz_per_s: None,
        }
    }

    pub fn with_azimuth(mut self, azimuth_rad: f64) -> Self {
        self.azimuth_rad = azimuth_rad;
        self
    }

    /// Checks the emitter's own invariants (everything except the span bound).
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(Error::validation(
                format!("{path}.carrier_hz"),
                "carrier must be positive and finite",
            ));
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return Err(Error::validation(
                format!("{path}.power"),
                "power must be > 0",
            ));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz >= 0.0) {
            return Err(Error::validation(
                format!("{path}.bandwidth_hz"),
                "bandwidth must be >= 0",
            ));
        }
        if !(self.azimuth_rad.abs() <= MAX_AZIMUTH_RAD + 1e-12) {
            return Err(Error::validation(
                format!("{path}.azimuth_rad"),
                format!("azimuth {} outside [-pi/3, pi/3]", self.azimuth_rad),
            ));
        }
        match self.modulation {
            Modulation::Tone => {}
            Modulation::Monopulse => {
                if !(self.pulse_width_s >= 0.0 && self.pulse_start_s.is_finite()) {
                    return Err(Error::validation(
                        format!("{path}.pulse_width_s"),
                        "monopulse needs a finite start and a width >= 0",
                    ));
                }
            }
            Modulation::Bpsk => {
                if !(self.chip_rate_hz.is_finite() && self.chip_rate_hz > 0.0) {
                    return Err(Error::validation(
                        format!("{path}.chip_rate_hz"),
                        "bpsk needs a chip rate > 0",
                    ));
                }
            }
            Modulation::Lfm => {
                let has_rate = self.sweep_rate_hz_per_s.is_some_and(|r| r.is_finite());
                if !has_rate && self.bandwidth_hz <= 0.0 {
                    return Err(Error::validation(
                        format!("{path}.bandwidth_hz"),
                        "lfm needs a bandwidth > 0 or an explicit sweep rate",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Highest instantaneous frequency the emitter reaches.
    fn upper_edge_hz(&self) -> f64 {
        match self.modulation {
            Modulation::Lfm => self.carrier_hz + self.bandwidth_hz,
            _ => self.carrier_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub emitters: Vec<EmitterSpec>,
    /// Per-emitter SNR in dB against the per-sample noise variance at the
    /// Nyquist rate. `None` disables noise.
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub capture_duration_s: f64,
}

impl ScenarioConfig {
    /// Power the SNR is referenced to: the mean emitter power, or 1 with no emitters.
    pub fn reference_power(&self) -> f64 {
        if self.emitters.is_empty() {
            1.0
        } else {
            self.emitters.iter().map(|e| e.power).sum::<f64>() / self.emitters.len() as f64
        }
    }

    /// Per-sample complex noise variance, zero when noise is disabled or the SNR is +inf.
    pub fn noise_variance(&self) -> f64 {
        match self.snr_db {
            Some(snr) if snr.is_finite() => self.reference_power() * 10f64.powf(-snr / 10.0),
            _ => 0.0,
        }
    }

    pub fn validate(&self, swarm: &SwarmConfig) -> Result<()> {
        if !(self.capture_duration_s.is_finite() && self.capture_duration_s > 0.0) {
            return Err(Error::validation(
                "scenario.capture_duration_s",
                "capture duration must be positive",
            ));
        }
        if let Some(snr) = self.snr_db {
            if snr.is_nan() || snr == f64::NEG_INFINITY {
                return Err(Error::validation(
                    "scenario.snr_db",
                    "snr must be a number or +inf",
                ));
            }
        }
        integral_ratio(
            self.capture_duration_s * swarm.resolution_hz,
            1.0,
            "scenario.capture_duration_s",
            "capture_duration_s x resolution_hz must be a positive integer (whole snapshots)",
        )?;
        integral_ratio(
            self.capture_duration_s * swarm.nyquist_rate_hz,
            1.0,
            "scenario.capture_duration_s",
            "capture_duration_s x nyquist_rate_hz must be a whole number of samples",
        )?;
        let span = codebook::unambiguous_span(swarm)?;
        for (i, e) in self.emitters.iter().enumerate() {
            let path = format!("scenario.emitters[{i}]");
            e.validate(&path)?;
            if e.upper_edge_hz() > span * (1.0 + 1e-12) {
                return Err(Error::validation(
                    format!("{path}.carrier_hz"),
                    format!(
                        "emitter reaches {} Hz, above the unambiguous span {} Hz",
                        e.upper_edge_hz(),
                        span
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn capture_len(&self, swarm: &SwarmConfig) -> Result<usize> {
        integral_ratio(
            self.capture_duration_s * swarm.nyquist_rate_hz,
            1.0,
            "scenario.capture_duration_s",
            "capture must hold a whole number of Nyquist samples",
        )
        .map(|n| n as usize)
    }

    pub fn snapshot_count(&self, swarm: &SwarmConfig) -> Result<usize> {
        integral_ratio(
            self.capture_duration_s * swarm.resolution_hz,
            1.0,
            "scenario.capture_duration_s",
            "capture must hold a whole number of snapshots",
        )
        .map(|n| n as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub node_id: u16,
    #[serde(default)]
    pub position_m: [f64; 2],
    /// Decimation factor r_p relative to the Nyquist rate.
    pub decimation: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClockOffsetPolicy {
    #[default]
    None,
    /// Each node starts its capture a seeded whole number of Nyquist samples late.
    RandomIntegerSample,
}

fn default_max_offset() -> u32 {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmConfig {
    pub nyquist_rate_hz: f64,
    pub resolution_hz: f64,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub clock_offset_policy: ClockOffsetPolicy,
    #[serde(default = "default_max_offset")]
    pub max_clock_offset_samples: u32,
    /// Channel count override. Defaults to `nyquist_rate_hz / resolution_hz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    /// Accept a channel grid wider than the unambiguous span.
    #[serde(default)]
    pub allow_ambiguous: bool,
}

impl SwarmConfig {
    /// A swarm on the `nyquist_rate_hz` grid with nodes at the origin.
    pub fn new(nyquist_rate_hz: f64, resolution_hz: f64, decimations: &[u32]) -> Self {
        SwarmConfig {
            nyquist_rate_hz,
            resolution_hz,
            nodes: decimations
                .iter()
                .enumerate()
                .map(|(i, &r)| NodeConfig {
                    node_id: i as u16 + 1,
                    position_m: [0.0, 0.0],
                    decimation: r,
                })
                .collect(),
            clock_offset_policy: ClockOffsetPolicy::None,
            max_clock_offset_samples: default_max_offset(),
            channels: None,
            allow_ambiguous: false,
        }
    }

    pub fn node(&self, node_id: u16) -> Result<&NodeConfig> {
        self.nodes
            .iter()
            .find(|n| n.node_id == node_id)
            .ok_or_else(|| Error::config("swarm.nodes", format!("unknown node_id {node_id}")))
    }

    pub fn sub_rate_hz(&self, node: &NodeConfig) -> f64 {
        self.nyquist_rate_hz / node.decimation as f64
    }

    /// FFT size M_p = f_sp / resolution for one node.
    pub fn m_points(&self, node: &NodeConfig) -> Result<usize> {
        if node.decimation == 0 {
            return Err(Error::config(
                format!("swarm.nodes[{}].decimation", node.node_id),
                "decimation must be >= 1",
            ));
        }
        integral_ratio(
            self.sub_rate_hz(node),
            self.resolution_hz,
            "swarm.resolution_hz",
            &format!(
                "node {} rate {} Hz is not a whole multiple of the resolution",
                node.node_id,
                self.sub_rate_hz(node)
            ),
        )
        .map(|m| m as usize)
        .map_err(into_config)
    }

    /// Number of channels Q on the global grid.
    pub fn q_total(&self) -> Result<usize> {
        if let Some(q) = self.channels {
            if q == 0 {
                return Err(Error::config(
                    "swarm.channels",
                    "channel count must be >= 1",
                ));
            }
            return Ok(q);
        }
        integral_ratio(
            self.nyquist_rate_hz,
            self.resolution_hz,
            "swarm.resolution_hz",
            "nyquist_rate_hz must be a whole multiple of resolution_hz",
        )
        .map(|q| q as usize)
        .map_err(into_config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nyquist_rate_hz.is_finite() && self.nyquist_rate_hz > 0.0) {
            return Err(Error::validation(
                "swarm.nyquist_rate_hz",
                "rate must be positive",
            ));
        }
        if !(self.resolution_hz.is_finite() && self.resolution_hz > 0.0) {
            return Err(Error::validation(
                "swarm.resolution_hz",
                "resolution must be positive",
            ));
        }
        if self.nodes.len() < 2 {
            return Err(Error::validation(
                "swarm.nodes",
                "a swarm needs at least two nodes",
            ));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.decimation == 0 {
                return Err(Error::validation(
                    format!("swarm.nodes[{i}].decimation"),
                    "decimation must be >= 1",
                ));
            }
            if self.nodes[..i].iter().any(|o| o.node_id == node.node_id) {
                return Err(Error::validation(
                    format!("swarm.nodes[{i}].node_id"),
                    format!("duplicate node_id {}", node.node_id),
                ));
            }
            if self.nodes[..i]
                .iter()
                .any(|o| o.decimation == node.decimation)
            {
                return Err(Error::validation(
                    format!("swarm.nodes[{i}].decimation"),
                    "decimation factors must be distinct",
                ));
            }
            if !node.position_m.iter().all(|c| c.is_finite()) {
                return Err(Error::validation(
                    format!("swarm.nodes[{i}].position_m"),
                    "position must be finite",
                ));
            }
            self.m_points(node)?;
            integral_ratio(
                self.sub_rate_hz(node),
                1.0,
                &format!("swarm.nodes[{i}].decimation"),
                "sub-sampling rate must be a whole number of Hz",
            )?;
        }
        self.q_total()?;
        Ok(())
    }
}

fn into_config(e: Error) -> Error {
    match e {
        Error::Validation { path, message } => Error::Config { path, message },
        other => other,
    }
}

/// Returns `num / den` when it is a positive integer within relative tolerance.
pub(crate) fn integral_ratio(num: f64, den: f64, path: &str, message: &str) -> Result<u64> {
    let ratio = num / den;
    let rounded = ratio.round();
    if !ratio.is_finite()
        || rounded < 1.0
        || (ratio - rounded).abs() > RATIO_TOLERANCE * rounded.max(1.0)
    {
        return Err(Error::validation(path, format!("{message} (got {ratio})")));
    }
    Ok(rounded as u64)
}

/// One node's Nyquist-rate capture x_p[n].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCapture {
    pub node_id: u16,
    pub rate_hz: f64,
    pub samples: Vec<Complex64>,
    pub noise_variance: f64,
    pub clock_offset_samples: i64,
}

/// Plane-wave delay at `node_id` relative to the coordinate origin.
pub fn compute_delay(swarm: &SwarmConfig, node_id: u16, azimuth_rad: f64) -> Result<f64> {
    let node = swarm.node(node_id)?;
    if !(azimuth_rad.abs() <= MAX_AZIMUTH_RAD + 1e-12) {
        return Err(Error::validation(
            "azimuth_rad",
            format!("azimuth {azimuth_rad} outside [-pi/3, pi/3]"),
        ));
    }
    let [x, y] = node.position_m;
    Ok(-(x * azimuth_rad.sin() + y * azimuth_rad.cos()) / SPEED_OF_LIGHT)
}

/// Samples `spec` delayed by `delay_s` at `fs_hz`, starting at t = 0.
///
/// `chip_seed` keys the BPSK chip sequence; the same seed must be used at
/// every node so all nodes observe the same transmitted chips.
pub fn synthesize_emitter(
    spec: &EmitterSpec,
    n_samples: usize,
    fs_hz: f64,
    delay_s: f64,
    chip_seed: u64,
) -> Result<Vec<Complex64>> {
    if n_samples == 0 {
        return Err(Error::validation("n_samples", "need at least one sample"));
    }
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::validation("fs_hz", "sample rate must be positive"));
    }
    spec.validate("emitter")?;
    let mut out = vec![Complex64::new(0.0, 0.0); n_samples];
    accumulate_emitter(
        &mut out,
        spec,
        fs_hz,
        delay_s,
        0,
        n_samples as f64 / fs_hz,
        chip_seed,
    );
    Ok(out)
}

/// Adds the emitter into `buf`, sample `n` taken at t = (n + origin) / fs.
fn accumulate_emitter(
    buf: &mut [Complex64],
    spec: &EmitterSpec,
    fs_hz: f64,
    delay_s: f64,
    origin: i64,
    capture_s: f64,
    chip_seed: u64,
) {
    let amp = spec.power.sqrt();
    let fc = spec.carrier_hz;
    // Carrier cycles per sample, and the delay expressed as a cycle offset.
    let cycles_per_sample = fc / fs_hz;
    let delay_cycles = fc * delay_s;
    let sweep_rate = spec
        .sweep_rate_hz_per_s
        .unwrap_or(spec.bandwidth_hz / capture_s);

    for (n, out) in buf.iter_mut().enumerate() {
        let idx = n as i64 + origin;
        let t = idx as f64 / fs_hz - delay_s;
        let mut cycles = (cycles_per_sample * idx as f64).rem_euclid(1.0) - delay_cycles;
        let gain = match spec.modulation {
            Modulation::Tone => 1.0,
            Modulation::Monopulse => {
                let end = spec.pulse_start_s + spec.pulse_width_s;
                if t >= spec.pulse_start_s && t < end {
                    1.0
                } else {
                    0.0
                }
            }
            Modulation::Bpsk => chip_sign(chip_seed, (t * spec.chip_rate_hz).floor() as i64),
            Modulation::Lfm => {
                cycles += 0.5 * sweep_rate * t * t;
                1.0
            }
        };
        if gain == 0.0 {
            continue;
        }
        let (s, c) = (2.0 * PI * cycles.rem_euclid(1.0)).sin_cos();
        *out += Complex64::new(c, s) * (amp * gain);
    }
}

#[inline]
fn chip_sign(chip_seed: u64, chip: i64) -> f64 {
    if seed::splitmix64(chip_seed ^ (chip as u64).wrapping_mul(0xd6e8_feb8_6659_fd93)) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn clock_offset(scenario: &ScenarioConfig, swarm: &SwarmConfig, node_id: u16) -> i64 {
    match swarm.clock_offset_policy {
        ClockOffsetPolicy::None => 0,
        ClockOffsetPolicy::RandomIntegerSample => {
            let mut rng = seed::rng_for(scenario.seed, &[TAG_CLOCK, node_id as u64]);
            rng.random_range(0..=swarm.max_clock_offset_samples as i64)
        }
    }
}

/// Noiseless sum of all emitters as seen by `node_id`.
pub fn compose_signal(
    scenario: &ScenarioConfig,
    swarm: &SwarmConfig,
    node_id: u16,
) -> Result<NodeCapture> {
    scenario.validate(swarm)?;
    let n = scenario.capture_len(swarm)?;
    let fs = swarm.nyquist_rate_hz;
    let origin = clock_offset(scenario, swarm, node_id);
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    for (i, spec) in scenario.emitters.iter().enumerate() {
        let delay = compute_delay(swarm, node_id, spec.azimuth_rad)?;
        let chips = seed::derive_seed(scenario.seed, &[TAG_CHIPS, i as u64]);
        accumulate_emitter(
            &mut samples,
            spec,
            fs,
            delay,
            origin,
            scenario.capture_duration_s,
            chips,
        );
    }
    Ok(NodeCapture {
        node_id,
        rate_hz: fs,
        samples,
        noise_variance: 0.0,
        clock_offset_samples: origin,
    })
}

/// Full capture at `node_id`: delayed emitters plus the node's own AWGN stream.
pub fn compose_capture(
    scenario: &ScenarioConfig,
    swarm: &SwarmConfig,
    node_id: u16,
) -> Result<NodeCapture> {
    let mut capture = compose_signal(scenario, swarm, node_id)?;
    let variance = scenario.noise_variance();
    if variance > 0.0 {
        let mut rng = seed::rng_for(scenario.seed, &[TAG_NOISE, node_id as u64]);
        let normal = Normal::new(0.0, (variance / 2.0).sqrt())
            .map_err(|e| Error::validation("scenario.snr_db", e.to_string()))?;
        for x in capture.samples.iter_mut() {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            *x += Complex64::new(re, im);
        }
    }
    capture.noise_variance = variance;
    Ok(capture)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    fn toy_swarm() -> SwarmConfig {
        // f_s = 12 Hz, nodes at 3 Hz and 4 Hz, 1 Hz resolution.
        let mut s = SwarmConfig::new(12.0, 1.0, &[4, 3]);
        s.nodes[1].position_m = [1.5, 0.0];
        s
    }

    #[test]
    fn delay_reference_and_broadside() {
        let s = toy_swarm();
        assert_eq!(compute_delay(&s, 1, 0.7).unwrap(), 0.0);
        assert_eq!(compute_delay(&s, 2, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn delay_plane_wave_value() {
        let s = toy_swarm();
        let tau = compute_delay(&s, 2, PI / 6.0).unwrap();
        let expected = -1.5 * 0.5 / SPEED_OF_LIGHT;
        assert!((tau - expected).abs() < 1e-24);
        assert!((tau + 2.5017e-9).abs() < 1e-13);
    }

    #[test]
    fn delay_rejects_unknown_node_and_wide_azimuth() {
        let s = toy_swarm();
        assert!(matches!(
            compute_delay(&s, 9, 0.0),
            Err(Error::Config { .. })
        ));
        assert!(compute_delay(&s, 1, 1.2).is_err());
    }

    #[test]
    fn on_grid_tone_is_unit_magnitude_and_peaks_at_bin_one() {
        let m = 16;
        let spec = EmitterSpec::tone(1.0, 1.0);
        let x = synthesize_emitter(&spec, m, m as f64, 0.0, 0).unwrap();
        assert!(x.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        let mut buf = x.clone();
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        let peak = (0..m)
            .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
            .unwrap();
        assert_eq!(peak, 1);
    }

    #[test]
    fn zero_width_monopulse_is_silent() {
        let spec = EmitterSpec {
            modulation: Modulation::Monopulse,
            pulse_width_s: 0.0,
            ..EmitterSpec::tone(3.0, 1.0)
        };
        let x = synthesize_emitter(&spec, 64, 12.0, 0.0, 0).unwrap();
        assert!(x.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn monopulse_gates_the_tone() {
        let spec = EmitterSpec {
            modulation: Modulation::Monopulse,
            pulse_start_s: 1.0,
            pulse_width_s: 2.0,
            ..EmitterSpec::tone(3.0, 4.0)
        };
        let x = synthesize_emitter(&spec, 48, 12.0, 0.0, 0).unwrap();
        for (n, z) in x.iter().enumerate() {
            let on = (12..36).contains(&n);
            assert_eq!(z.norm() > 0.0, on, "sample {n}");
            if on {
                assert!((z.norm() - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lfm_instantaneous_frequency() {
        // 1 GHz swept in 1 us starting at 3.37 GHz; sample at 1 THz so a
        // one-sample phase difference resolves the instantaneous frequency.
        let fs = 1e12;
        let n = 1_000_001;
        let spec = EmitterSpec {
            modulation: Modulation::Lfm,
            bandwidth_hz: 1e9,
            sweep_rate_hz_per_s: Some(1e9 / 1e-6),
            ..EmitterSpec::tone(3.37e9, 1.0)
        };
        let x = synthesize_emitter(&spec, n, fs, 0.0, 0).unwrap();
        let d = (x[n - 1] * x[n - 2].conj()).arg();
        let f_inst = d / (2.0 * PI) * fs;
        // The backward difference sits half a sample before t = 1 us.
        let expected = 4.37e9 - 0.5 * 1e15 / fs;
        assert!(
            ((f_inst - expected) / expected).abs() < 1e-6,
            "{f_inst} vs {expected}"
        );
    }

    #[test]
    fn lfm_default_rate_spans_bandwidth_over_capture() {
        let fs = 1e6;
        let n = 1000;
        let spec = EmitterSpec {
            modulation: Modulation::Lfm,
            bandwidth_hz: 1e5,
            ..EmitterSpec::tone(1e5, 1.0)
        };
        let x = synthesize_emitter(&spec, n, fs, 0.0, 0).unwrap();
        let f_end = (x[n - 1] * x[n - 2].conj()).arg() / (2.0 * PI) * fs;
        assert!((f_end - 2e5).abs() < 200.0, "{f_end}");
    }

    #[test]
    fn bpsk_chips_are_plus_minus_one_and_held_per_chip() {
        let spec = EmitterSpec {
            modulation: Modulation::Bpsk,
            chip_rate_hz: 1.0,
            ..EmitterSpec::tone(1e-9, 1.0)
        };
        let x = synthesize_emitter(&spec, 400, 4.0, 0.0, 99).unwrap();
        let mut flips = 0;
        for chip in x.chunks(4) {
            let s = chip[0].re.signum();
            assert!(chip.iter().all(|z| z.re.signum() == s));
            flips += 1;
        }
        let signs: Vec<f64> = x.chunks(4).map(|c| c[0].re.signum()).collect();
        let pos = signs.iter().filter(|&&s| s > 0.0).count();
        assert_eq!(flips, 100);
        assert!(pos > 25 && pos < 75, "unbalanced chips: {pos}/100");
    }

    #[test]
    fn bpsk_without_chip_rate_is_rejected() {
        let spec = EmitterSpec {
            modulation: Modulation::Bpsk,
            ..EmitterSpec::tone(1.0, 1.0)
        };
        assert!(matches!(
            synthesize_emitter(&spec, 8, 8.0, 0.0, 0),
            Err(Error::Validation { .. })
        ));
    }

    fn scenario(emitters: Vec<EmitterSpec>, snr_db: Option<f64>) -> ScenarioConfig {
        ScenarioConfig {
            emitters,
            snr_db,
            seed: 5,
            capture_duration_s: 4.0,
        }
    }

    #[test]
    fn noiseless_capture_is_the_delayed_tone() {
        let s = toy_swarm();
        let e = EmitterSpec::tone(5.0, 1.0).with_azimuth(0.4);
        let sc = scenario(vec![e.clone()], None);
        let cap = compose_capture(&sc, &s, 2).unwrap();
        let tau = compute_delay(&s, 2, 0.4).unwrap();
        let direct = synthesize_emitter(&e, 48, 12.0, tau, 0).unwrap();
        assert_eq!(cap.samples.len(), 48);
        assert_eq!(cap.noise_variance, 0.0);
        for (a, b) in cap.samples.iter().zip(&direct) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_only_variance_matches() {
        let mut s = SwarmConfig::new(1e5, 1.0, &[4, 5]);
        s.nodes[0].node_id = 1;
        let sc = ScenarioConfig {
            emitters: vec![],
            snr_db: Some(0.0),
            seed: 11,
            capture_duration_s: 2.0,
        };
        let cap = compose_capture(&sc, &s, 1).unwrap();
        let n = cap.samples.len() as f64;
        assert_eq!(cap.samples.len(), 200_000);
        let var = cap.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn carrier_above_span_is_rejected() {
        let s = toy_swarm();
        let sc = scenario(vec![EmitterSpec::tone(13.0, 1.0)], None);
        let err = compose_capture(&sc, &s, 1).unwrap_err();
        assert!(
            err.to_string().contains("scenario.emitters[0].carrier_hz"),
            "{err}"
        );
    }

    #[test]
    fn fractional_snapshot_count_is_rejected() {
        let s = toy_swarm();
        let mut sc = scenario(vec![EmitterSpec::tone(5.0, 1.0)], None);
        sc.capture_duration_s = 2.5;
        assert!(compose_capture(&sc, &s, 1).is_err());
    }

    #[test]
    fn clock_offset_is_seeded_per_node() {
        let mut s = toy_swarm();
        s.clock_offset_policy = ClockOffsetPolicy::RandomIntegerSample;
        s.max_clock_offset_samples = 1000;
        let sc = scenario(vec![EmitterSpec::tone(5.0, 1.0)], None);
        let a = compose_capture(&sc, &s, 1).unwrap();
        let b = compose_capture(&sc, &s, 2).unwrap();
        assert_eq!(a, compose_capture(&sc, &s, 1).unwrap());
        assert_ne!(a.clock_offset_samples, b.clock_offset_samples);
        // The offset shifts the time origin of the synthesized waveform.
        let shifted = scenario(vec![EmitterSpec::tone(5.0, 1.0)], None);
        let mut plain = s.clone();
        plain.clock_offset_policy = ClockOffsetPolicy::None;
        let base = compose_capture(&shifted, &plain, 1).unwrap();
        let rot = Complex64::from_polar(1.0, 2.0 * PI * 5.0 * a.clock_offset_samples as f64 / 12.0);
        for (x, y) in a.samples.iter().zip(&base.samples) {
            assert!((x - y * rot).norm() < 1e-9);
        }
    }

    #[test]
    fn swarm_validation_paths() {
        let mut s = toy_swarm();
        s.nodes[1].decimation = 4;
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("swarm.nodes[1].decimation"), "{err}");

        let mut s = toy_swarm();
        s.resolution_hz = 5.0;
        assert!(matches!(s.validate(), Err(Error::Config { .. })));

        let mut s = toy_swarm();
        s.nodes.truncate(1);
        assert!(s.validate().is_err());
        assert!(toy_swarm().validate().is_ok());
    }
}
