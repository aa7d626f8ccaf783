//! Sparse coding Fourier transform (SCFT) for wideband spectrum acquisition by
//! a swarm of sub-Nyquist samplers.
//!
//! Each node decimates the wideband input by a distinct integer factor, so
//! every frequency aliases into a node-specific FFT bucket. Nodes share only
//! their occupied buckets and amplitudes. The fusion center maps the buckets
//! onto the global channel grid through the modular sensing codes and decodes
//! each channel from the minimum-magnitude entry of its cross-node covariance.
//!
//! The stages, in pipeline order:
//!
//! - [`scenario`]: emitters, swarm geometry, Nyquist-rate captures with AWGN.
//! - [`sampler`]: decimation, snapshot FFTs, averaged periodogram, peak search.
//! - [`codebook`]: the signed code matrix and its collision check.
//! - [`swarm_link`]: report wire format and fusion into the coded spectrum.
//! - [`decoder`]: per-channel covariance, channel power, detection.
//! - [`eval`]: Monte-Carlo trials, sweeps, relative RMSE and the full-rate oracle.

pub mod codebook;
pub mod config;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod sampler;
pub mod scenario;
pub mod seed;
pub mod swarm_link;

pub use codebook::{build_codebook, verify_code_uniqueness, Codebook, CollisionReport};
pub use config::{ExperimentConfig, Policies};
pub use decoder::{decode_spectrum, detect, SpectrumEstimate, Threshold};
pub use error::{Error, FusionError, Result, WireError};
pub use scenario::{EmitterSpec, Modulation, ScenarioConfig, SwarmConfig};
pub use swarm_link::{decode_report, encode_report, fuse, CodedSpectrum, SpectralReport};
