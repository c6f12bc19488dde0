//! Labeled I/Q blocks and the collections they live in.
//!
//! A block is one baseband capture of [`BLOCK_LEN`] complex samples stored as a
//! 2×2048 real matrix (row 0 in-phase, row 1 quadrature). Blocks are labeled
//! with one of [`NUM_BEAMS`] transmit beams and a [`DomainTag`] naming the
//! hardware they were captured on.

mod hdf5io;
mod split;
mod synth;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hdf5io::{load_deepbeam_hdf5, write_deepbeam_hdf5, GainSelection, Hdf5Layout};
pub use split::{holdout, make_split, subset_per_beam, Protocol, Split};
pub use synth::{beam_signature, default_domains, rrc_pulse, synth_beam_block, synth_dataset, SyntheticDomainConfig};

pub const NUM_BEAMS: usize = 24;
pub const BLOCK_LEN: usize = 2048;
pub const SNR_RANGE_DB: (f64, f64) = (-15.0, 20.0);

/// One baseband capture, row-major `[I; Q]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IqBlock {
    samples: Vec<f32>,
}

impl IqBlock {
    /// Builds a block from row-major samples (`BLOCK_LEN` in-phase values
    /// followed by `BLOCK_LEN` quadrature values).
    pub fn new(samples: Vec<f32>) -> Result<Self> {
        if samples.len() != 2 * BLOCK_LEN {
            return Err(Error::Argument(format!(
                "I/Q block must hold 2x{BLOCK_LEN} values, got {}",
                samples.len()
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite sample at row {} column {}",
                pos / BLOCK_LEN,
                pos % BLOCK_LEN
            )));
        }
        Ok(IqBlock { samples })
    }

    pub fn from_rows(i: &[f32], q: &[f32]) -> Result<Self> {
        let mut samples = Vec::with_capacity(i.len() + q.len());
        samples.extend_from_slice(i);
        samples.extend_from_slice(q);
        Self::new(samples)
    }

    pub fn from_complex(z: &[Complex64]) -> Result<Self> {
        let mut samples = vec![0.0f32; 2 * z.len()];
        let (i, q) = samples.split_at_mut(z.len());
        for (n, v) in z.iter().enumerate() {
            i[n] = v.re as f32;
            q[n] = v.im as f32;
        }
        Self::new(samples)
    }

    /// Applies `f` to every entry. The result must stay finite.
    pub(crate) fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.samples.iter().map(|&v| f(v)).collect())
    }

    pub fn i(&self) -> &[f32] {
        &self.samples[..BLOCK_LEN]
    }

    pub fn q(&self) -> &[f32] {
        &self.samples[BLOCK_LEN..]
    }

    /// Row-major view, `[I; Q]`.
    pub fn as_slice(&self) -> &[f32] {
        &self.samples
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.i()
            .iter()
            .zip(self.q())
            .map(|(&re, &im)| Complex64::new(re as f64, im as f64))
            .collect()
    }

    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / BLOCK_LEN as f64
    }
}

/// Hardware identity of a capture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainTag {
    pub antenna_id: String,
    pub gain_setting: String,
    pub snr_db: f64,
}

impl DomainTag {
    pub fn new(antenna_id: impl Into<String>, gain_setting: impl Into<String>, snr_db: f64) -> Result<Self> {
        if !(SNR_RANGE_DB.0..=SNR_RANGE_DB.1).contains(&snr_db) {
            return Err(Error::Argument(format!(
                "snr {snr_db} dB outside [{}, {}]",
                SNR_RANGE_DB.0, SNR_RANGE_DB.1
            )));
        }
        Ok(DomainTag {
            antenna_id: antenna_id.into(),
            gain_setting: gain_setting.into(),
            snr_db,
        })
    }
}

/// Identity of a block, used to check split disjointness.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockKey {
    pub antenna_id: Arc<str>,
    pub gain_setting: Arc<str>,
    pub beam: u8,
    pub index: u32,
}

#[derive(Clone, Debug)]
pub struct LabeledBlock {
    pub block: Arc<IqBlock>,
    pub beam: u8,
    pub domain: Arc<DomainTag>,
    /// Position of the block within its beam in the source (file or generator).
    pub index: u32,
}

impl LabeledBlock {
    pub fn new(block: IqBlock, beam: u8, domain: Arc<DomainTag>, index: u32) -> Result<Self> {
        check_beam(beam as usize)?;
        Ok(LabeledBlock {
            block: Arc::new(block),
            beam,
            domain,
            index,
        })
    }

    pub fn key(&self) -> BlockKey {
        BlockKey {
            antenna_id: Arc::from(self.domain.antenna_id.as_str()),
            gain_setting: Arc::from(self.domain.gain_setting.as_str()),
            beam: self.beam,
            index: self.index,
        }
    }
}

pub(crate) fn check_beam(beam: usize) -> Result<()> {
    if beam >= NUM_BEAMS {
        return Err(Error::Argument(format!("beam {beam} outside [0, {}]", NUM_BEAMS - 1)));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Hdf5,
    Synthetic,
}

/// Read-only collection of labeled blocks in canonical order (beam-major, then
/// gain setting, then source index).
#[derive(Clone, Debug)]
pub struct DatasetHandle {
    source: DataSource,
    blocks: Vec<LabeledBlock>,
    by_beam: BTreeMap<u8, std::ops::Range<usize>>,
}

impl DatasetHandle {
    pub fn new(source: DataSource, mut blocks: Vec<LabeledBlock>) -> Self {
        blocks
            .sort_by(|a, b| (a.beam, &a.domain.gain_setting, a.index).cmp(&(b.beam, &b.domain.gain_setting, b.index)));
        let mut by_beam = BTreeMap::new();
        let mut start = 0;
        while start < blocks.len() {
            let beam = blocks[start].beam;
            let end = start + blocks[start..].iter().take_while(|b| b.beam == beam).count();
            by_beam.insert(beam, start..end);
            start = end;
        }
        DatasetHandle {
            source,
            blocks,
            by_beam,
        }
    }

    pub fn source(&self) -> DataSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Beams with at least one block, ascending.
    pub fn beams(&self) -> Vec<u8> {
        self.by_beam.keys().copied().collect()
    }

    pub fn beam_blocks(&self, beam: u8) -> &[LabeledBlock] {
        self.by_beam.get(&beam).map(|r| &self.blocks[r.clone()]).unwrap_or(&[])
    }

    pub fn count(&self, beam: u8) -> usize {
        self.beam_blocks(beam).len()
    }

    pub fn blocks(&self) -> &[LabeledBlock] {
        &self.blocks
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledBlock> {
        self.blocks.iter()
    }

    /// Distinct domain tags, in order of first appearance.
    pub fn domains(&self) -> Vec<DomainTag> {
        let mut out: Vec<DomainTag> = Vec::new();
        for b in &self.blocks {
            if !out.iter().any(|d| *d == *b.domain) {
                out.push((*b.domain).clone());
            }
        }
        out
    }

    /// Antenna ids present, sorted.
    pub fn antenna_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.blocks.iter().map(|b| b.domain.antenna_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn keys(&self) -> Vec<BlockKey> {
        self.blocks.iter().map(LabeledBlock::key).collect()
    }

    pub(crate) fn with_blocks(&self, blocks: Vec<LabeledBlock>) -> Self {
        DatasetHandle::new(self.source, blocks)
    }
}
