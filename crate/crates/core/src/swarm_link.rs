//! Spectral reports: the only data a node shares with the swarm, its wire
//! encoding, and fusion of all reports into the coded spectrum.
//!
//! Wire layout, little-endian:
//!
//! ```text
//! magic "SCFT" | version u16 | node_id u16 | f_sp_hz u64 | m_points u32
//! snapshot_count u32 | bin_count u32 | bin_count x u32 bins (strictly increasing)
//! snapshot_count x bin_count x (f64 re, f64 im), snapshot-major
//! ```

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::codebook::Codebook;
use crate::error::{Error, FusionError, Result, WireError};
use crate::sampler::SnapshotSpectra;

pub const MAGIC: [u8; 4] = *b"SCFT";
pub const WIRE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 2 + 8 + 4 + 4 + 4;
pub const FILE_EXTENSION: &str = "scft";

/// One node's occupied buckets and their per-snapshot complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub node_id: u16,
    pub f_sp_hz: u64,
    pub m_points: u32,
    pub snapshot_count: u32,
    pub occupied_bins: Vec<u32>,
    /// `snapshot_count x occupied_bins.len()`, snapshot-major.
    pub amplitudes: Vec<Complex64>,
}

impl SpectralReport {
    /// Extracts the amplitudes at `bins` (ascending) from every snapshot.
    pub fn from_spectra(spectra: &SnapshotSpectra, bins: &[usize]) -> Result<Self> {
        let m = spectra.m_points;
        let mut amplitudes = Vec::with_capacity(bins.len() * spectra.snapshot_count);
        for l in 0..spectra.snapshot_count {
            let row = spectra.snapshot(l);
            amplitudes.extend(bins.iter().map(|&b| row[b]));
        }
        let report = SpectralReport {
            node_id: spectra.node_id,
            f_sp_hz: spectra.rate_hz().round() as u64,
            m_points: m as u32,
            snapshot_count: spectra.snapshot_count as u32,
            occupied_bins: bins.iter().map(|&b| b as u32).collect(),
            amplitudes,
        };
        report.validate()?;
        Ok(report)
    }

    /// Reports every bin. Used to inspect the decoded noise floor.
    pub fn dense(spectra: &SnapshotSpectra) -> Result<Self> {
        let bins: Vec<usize> = (0..spectra.m_points).collect();
        Self::from_spectra(spectra, &bins)
    }

    pub fn bin_count(&self) -> usize {
        self.occupied_bins.len()
    }

    pub fn amplitude(&self, snapshot: usize, slot: usize) -> Complex64 {
        self.amplitudes[snapshot * self.bin_count() + slot]
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 4 * self.bin_count() + 16 * self.amplitudes.len()
    }

    pub fn validate(&self) -> std::result::Result<(), WireError> {
        for (i, w) in self.occupied_bins.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(WireError::NonIncreasingBins { position: i + 1 });
            }
        }
        if let Some(&last) = self.occupied_bins.last() {
            if last >= self.m_points {
                return Err(WireError::BinOutOfRange {
                    bin: last,
                    m_points: self.m_points,
                });
            }
        }
        let expected = self.snapshot_count as usize * self.bin_count();
        if self.amplitudes.len() != expected {
            return Err(WireError::DimensionMismatch {
                expected,
                found: self.amplitudes.len(),
            });
        }
        Ok(())
    }
}

pub fn encode_report(report: &SpectralReport) -> std::result::Result<Vec<u8>, WireError> {
    report.validate()?;
    let mut out = Vec::with_capacity(report.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&WIRE_VERSION.to_le_bytes());
    out.extend_from_slice(&report.node_id.to_le_bytes());
    out.extend_from_slice(&report.f_sp_hz.to_le_bytes());
    out.extend_from_slice(&report.m_points.to_le_bytes());
    out.extend_from_slice(&report.snapshot_count.to_le_bytes());
    out.extend_from_slice(&(report.bin_count() as u32).to_le_bytes());
    for bin in &report.occupied_bins {
        out.extend_from_slice(&bin.to_le_bytes());
    }
    for a in &report.amplitudes {
        out.extend_from_slice(&a.re.to_le_bytes());
        out.extend_from_slice(&a.im.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> std::result::Result<[u8; N], WireError> {
        let end = self.pos + N;
        let chunk = self.bytes.get(self.pos..end).ok_or(WireError::Truncated {
            needed: end,
            available: self.bytes.len(),
        })?;
        self.pos = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> std::result::Result<u16, WireError> {
        self.take().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> std::result::Result<u32, WireError> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> std::result::Result<u64, WireError> {
        self.take().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> std::result::Result<f64, WireError> {
        self.take().map(f64::from_le_bytes)
    }
}

/// Parses one report; rejects the whole buffer on any defect.
pub fn decode_report(bytes: &[u8]) -> std::result::Result<SpectralReport, WireError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take()?;
    if magic != MAGIC {
        return Err(WireError::BadMagic { found: magic });
    }
    let version = r.u16()?;
    if version != WIRE_VERSION {
        return Err(WireError::UnsupportedVersion(version));
    }
    let node_id = r.u16()?;
    let f_sp_hz = r.u64()?;
    let m_points = r.u32()?;
    let snapshot_count = r.u32()?;
    let bin_count = r.u32()? as usize;

    let needed = (bin_count as u128) * 4 + (bin_count as u128) * (snapshot_count as u128) * 16;
    if (HEADER_LEN as u128 + needed) > bytes.len() as u128 {
        return Err(WireError::Truncated {
            needed: usize::try_from(HEADER_LEN as u128 + needed).unwrap_or(usize::MAX),
            available: bytes.len(),
        });
    }
    let mut occupied_bins = Vec::with_capacity(bin_count);
    for _ in 0..bin_count {
        occupied_bins.push(r.u32()?);
    }
    let n_amp = bin_count * snapshot_count as usize;
    let mut amplitudes = Vec::with_capacity(n_amp);
    for _ in 0..n_amp {
        let re = r.f64()?;
        let im = r.f64()?;
        amplitudes.push(Complex64::new(re, im));
    }
    if r.pos != bytes.len() {
        return Err(WireError::TrailingBytes(bytes.len() - r.pos));
    }
    let report = SpectralReport {
        node_id,
        f_sp_hz,
        m_points,
        snapshot_count,
        occupied_bins,
        amplitudes,
    };
    report.validate()?;
    Ok(report)
}

/// Reports fused onto the global channel grid.
///
/// Storage is per node and per occupied bin; channel values are resolved
/// through `q mod M_p`, so the P x Q x L tensor is never materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedSpectrum {
    q_total: usize,
    snapshot_count: usize,
    rows: Vec<FusedRow>,
}

#[derive(Debug, Clone, PartialEq)]
struct FusedRow {
    node_id: u16,
    m_points: usize,
    /// Slot of each bin in `report`, if occupied.
    slot_of_bin: Vec<Option<usize>>,
    report: SpectralReport,
}

impl CodedSpectrum {
    pub fn q_total(&self) -> usize {
        self.q_total
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshot_count
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    pub fn node_ids(&self) -> Vec<u16> {
        self.rows.iter().map(|r| r.node_id).collect()
    }

    pub fn m_points(&self, row: usize) -> usize {
        self.rows[row].m_points
    }

    fn slot(&self, row: usize, q: usize) -> Option<usize> {
        let r = &self.rows[row];
        r.slot_of_bin[q % r.m_points]
    }

    /// Entry of the binary occupancy matrix.
    pub fn occupied(&self, row: usize, q: usize) -> bool {
        self.slot(row, q).is_some()
    }

    /// `Y_C[row][q][l]`; zero wherever the channel is unoccupied.
    pub fn value(&self, row: usize, q: usize, l: usize) -> Complex64 {
        match self.slot(row, q) {
            Some(s) => self.rows[row].report.amplitude(l, s),
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// True when every node's bucket for `q` is occupied.
    pub fn fully_occupied(&self, q: usize) -> bool {
        (0..self.rows.len()).all(|r| self.occupied(r, q))
    }

    /// Slot indices of `q` in each row, when all rows are occupied.
    pub(crate) fn slots(&self, q: usize) -> Option<Vec<usize>> {
        (0..self.rows.len()).map(|r| self.slot(r, q)).collect()
    }

    pub(crate) fn amplitude(&self, row: usize, slot: usize, l: usize) -> Complex64 {
        self.rows[row].report.amplitude(l, slot)
    }

    /// The report fused into `row`.
    pub fn report(&self, row: usize) -> &SpectralReport {
        &self.rows[row].report
    }
}

fn index_reports(
    reports: &[SpectralReport],
    cb: &Codebook,
) -> Result<BTreeMap<u16, SpectralReport>> {
    let mut by_node = BTreeMap::new();
    for r in reports {
        if cb.row_of(r.node_id).is_none() {
            return Err(FusionError::UnknownNode(r.node_id).into());
        }
        if by_node.insert(r.node_id, r.clone()).is_some() {
            return Err(FusionError::DuplicateNode(r.node_id).into());
        }
    }
    Ok(by_node)
}

/// Fuses one report per codebook node into the coded spectrum.
///
/// The output depends only on the set of reports, not their order.
pub fn fuse(reports: &[SpectralReport], cb: &Codebook) -> Result<CodedSpectrum> {
    let mut by_node = index_reports(reports, cb)?;
    for node in cb.nodes() {
        if !by_node.contains_key(&node.node_id) {
            return Err(FusionError::MissingNode(node.node_id).into());
        }
    }
    let mut snapshot_count: Option<u32> = None;
    let mut rows = Vec::with_capacity(cb.node_count());
    for node in cb.nodes() {
        let report = by_node.remove(&node.node_id).expect("presence checked");
        report.validate().map_err(Error::Wire)?;
        if report.m_points as usize != node.m_points {
            return Err(FusionError::GridMismatch {
                node_id: node.node_id,
                message: format!(
                    "{} points, codebook expects {}",
                    report.m_points, node.m_points
                ),
            }
            .into());
        }
        let expected_rate = node.m_points as f64 * cb.resolution_hz();
        if (report.f_sp_hz as f64 - expected_rate).abs() > 0.5 {
            return Err(FusionError::GridMismatch {
                node_id: node.node_id,
                message: format!(
                    "rate {} Hz, codebook expects {expected_rate} Hz",
                    report.f_sp_hz
                ),
            }
            .into());
        }
        match snapshot_count {
            None => snapshot_count = Some(report.snapshot_count),
            Some(l) if l != report.snapshot_count => {
                return Err(FusionError::SnapshotMismatch {
                    node_id: node.node_id,
                    expected: l,
                    found: report.snapshot_count,
                }
                .into())
            }
            Some(_) => {}
        }
        let mut slot_of_bin = vec![None; node.m_points];
        for (slot, &bin) in report.occupied_bins.iter().enumerate() {
            slot_of_bin[bin as usize] = Some(slot);
        }
        rows.push(FusedRow {
            node_id: node.node_id,
            m_points: node.m_points,
            slot_of_bin,
            report,
        });
    }
    Ok(CodedSpectrum {
        q_total: cb.q_total(),
        snapshot_count: snapshot_count.ok_or(FusionError::Empty)? as usize,
        rows,
    })
}

/// Fuses whatever reports arrived, dropping codebook rows of silent nodes.
///
/// Returns the restricted codebook alongside the coded spectrum; its
/// unambiguous span reflects only the reporting nodes.
pub fn fuse_partial(
    reports: &[SpectralReport],
    cb: &Codebook,
) -> Result<(CodedSpectrum, Codebook)> {
    if reports.is_empty() {
        return Err(FusionError::Empty.into());
    }
    let present: Vec<u16> = index_reports(reports, cb)?.into_keys().collect();
    let restricted = cb.restricted_to(&present)?;
    let coded = fuse(reports, &restricted)?;
    Ok((coded, restricted))
}
