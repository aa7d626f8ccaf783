//! Sensing codes over the global channel grid.
//!
//! Channel `q` (frequency `q * resolution`) lands in FFT bin `q mod M_p` at
//! node `p`. The signed code `c[p][q]` is that residue reduced into
//! `(-M_p/2, M_p/2]`, i.e. the folded frequency in units of the resolution.
//! Two channels are distinguishable iff their code columns differ, which by
//! the Chinese remainder theorem holds for all `q < lcm(M_p)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::SwarmConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CodebookNode {
    pub node_id: u16,
    pub m_points: usize,
    /// Number of sub-rate Nyquist zones the channel grid spans at this node.
    pub zone_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    q_total: usize,
    resolution_hz: f64,
    nodes: Vec<CodebookNode>,
    /// Row-major P x Q signed codes.
    codes: Vec<i64>,
    span_channels: u64,
}

impl Codebook {
    pub fn q_total(&self) -> usize {
        self.q_total
    }

    pub fn resolution_hz(&self) -> f64 {
        self.resolution_hz
    }

    pub fn nodes(&self) -> &[CodebookNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn row_of(&self, node_id: u16) -> Option<usize> {
        self.nodes.iter().position(|n| n.node_id == node_id)
    }

    pub fn code(&self, row: usize, q: usize) -> i64 {
        self.codes[row * self.q_total + q]
    }

    pub fn row(&self, row: usize) -> &[i64] {
        &self.codes[row * self.q_total..(row + 1) * self.q_total]
    }

    /// FFT bin that channel `q` occupies at codebook row `row`.
    pub fn bin(&self, row: usize, q: usize) -> usize {
        q % self.nodes[row].m_points
    }

    /// Unambiguous span expressed in channels, `lcm(M_p)`.
    pub fn span_channels(&self) -> u64 {
        self.span_channels
    }

    pub fn unambiguous_span_hz(&self) -> f64 {
        self.span_channels as f64 * self.resolution_hz
    }

    pub fn is_ambiguous(&self) -> bool {
        self.q_total as u64 > self.span_channels
    }

    /// Fails with [`Error::Ambiguity`] when the grid exceeds the span.
    pub fn require_unambiguous(&self) -> Result<()> {
        if self.is_ambiguous() {
            Err(Error::Ambiguity {
                q_total: self.q_total,
                span_channels: self.span_channels,
            })
        } else {
            Ok(())
        }
    }

    /// The same channel grid restricted to `node_ids`, with the span recomputed.
    pub fn restricted_to(&self, node_ids: &[u16]) -> Result<Codebook> {
        let rows: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| node_ids.contains(&n.node_id))
            .map(|(i, _)| i)
            .collect();
        if rows.is_empty() {
            return Err(Error::config("swarm.nodes", "no codebook rows left"));
        }
        let nodes: Vec<CodebookNode> = rows.iter().map(|&r| self.nodes[r].clone()).collect();
        let codes = rows
            .iter()
            .flat_map(|&r| self.row(r).iter().copied())
            .collect();
        let span_channels = lcm_all(nodes.iter().map(|n| n.m_points as u64));
        Ok(Codebook {
            q_total: self.q_total,
            resolution_hz: self.resolution_hz,
            nodes,
            codes,
            span_channels,
        })
    }
}

/// Residue of `q` reduced into `(-m/2, m/2]`, exact for odd and even `m`.
pub fn signed_code(q: u64, m: u64) -> i64 {
    let r = (q % m) as i64;
    if 2 * r > m as i64 {
        r - m as i64
    } else {
        r
    }
}

/// Maps a signed code back to its FFT bin in `[0, m)`.
pub fn signed_code_to_bin(code: i64, m_points: usize) -> Result<usize> {
    let m = m_points as i64;
    if m <= 0 || !(-m < 2 * code && 2 * code <= m) {
        return Err(Error::validation(
            "code",
            format!("code {code} outside (-{m_points}/2, {m_points}/2]"),
        ));
    }
    Ok(code.rem_euclid(m) as usize)
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn lcm(a: u64, b: u64) -> u64 {
    if a == 0 || b == 0 {
        0
    } else {
        a / gcd(a, b) * b
    }
}

fn lcm_all(values: impl IntoIterator<Item = u64>) -> u64 {
    values.into_iter().fold(1, lcm)
}

/// lcm of the node sub-sampling rates, in Hz on the resolution grid.
pub fn unambiguous_span(swarm: &SwarmConfig) -> Result<f64> {
    let mut span = 1u64;
    for node in &swarm.nodes {
        span = lcm(span, swarm.m_points(node)? as u64);
    }
    Ok(span as f64 * swarm.resolution_hz)
}

/// Builds the P x Q code matrix for `swarm`.
pub fn build_codebook(swarm: &SwarmConfig) -> Result<Codebook> {
    build_codebook_with_channels(swarm, swarm.q_total()?)
}

/// Builds the code matrix over an explicit channel count.
pub fn build_codebook_with_channels(swarm: &SwarmConfig, q_total: usize) -> Result<Codebook> {
    if swarm.nodes.is_empty() {
        return Err(Error::config("swarm.nodes", "no nodes"));
    }
    if q_total == 0 {
        return Err(Error::config(
            "swarm.channels",
            "channel count must be >= 1",
        ));
    }
    let mut nodes = Vec::with_capacity(swarm.nodes.len());
    for node in &swarm.nodes {
        let m = swarm.m_points(node)?;
        nodes.push(CodebookNode {
            node_id: node.node_id,
            m_points: m,
            zone_count: q_total.div_ceil(m),
        });
    }
    let mut codes = Vec::with_capacity(nodes.len() * q_total);
    for node in &nodes {
        let m = node.m_points as u64;
        codes.extend((0..q_total as u64).map(|q| signed_code(q, m)));
    }
    let span_channels = lcm_all(nodes.iter().map(|n| n.m_points as u64));
    Ok(Codebook {
        q_total,
        resolution_hz: swarm.resolution_hz,
        nodes,
        codes,
        span_channels,
    })
}

/// Channel pairs `(a, b)`, `a < b`, whose full code columns coincide.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CollisionReport {
    pub pairs: Vec<(usize, usize)>,
}

impl CollisionReport {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.pairs.binary_search(&key).is_ok()
    }
}

/// Finds every pair of channels with identical code columns.
///
/// Sorts channel indices by their code column, then expands each run of equal
/// columns into pairs.
pub fn verify_code_uniqueness(cb: &Codebook) -> CollisionReport {
    let mut order: Vec<usize> = (0..cb.q_total).collect();
    let column = |q: usize| (0..cb.node_count()).map(move |r| cb.code(r, q));
    order.sort_by(|&a, &b| column(a).cmp(column(b)).then(a.cmp(&b)));

    let mut pairs = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && column(order[start]).eq(column(order[end])) {
            end += 1;
        }
        for i in start..end {
            for j in i + 1..end {
                let (a, b) = (order[i], order[j]);
                pairs.push((a.min(b), a.max(b)));
            }
        }
        start = end;
    }
    pairs.sort_unstable();
    CollisionReport { pairs }
}
