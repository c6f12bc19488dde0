//! HDF5 block files.
//!
//! Default layout (all names configurable through [`Hdf5Layout`]):
//!
//! ```text
//! /                       attrs: format, antenna_id
//! /beam_00/gain_<g>       f32 [N, 2048, 2]   attr snr_db
//! /beam_00/index_<g>      u32 [N]            optional source indices
//! ...
//! /beam_23/...
//! ```

use std::path::Path;
use std::sync::Arc;

use hdf5::types::VarLenUnicode;
use ndarray::{Array1, Array3, Ix3};
use serde::{Deserialize, Serialize};

use super::{DataSource, DatasetHandle, DomainTag, IqBlock, LabeledBlock, BLOCK_LEN, NUM_BEAMS};
use crate::error::{Error, Result};

const FORMAT_TAG: &str = "beam-protonet-iq/1";

/// Field-name map so foreign files can be read without code changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hdf5Layout {
    pub beam_group_prefix: String,
    pub gain_dataset_prefix: String,
    pub index_dataset_prefix: String,
    /// `true`: blocks stored as `[N, 2048, 2]`; `false`: `[N, 2, 2048]`.
    pub iq_last_axis: bool,
    pub snr_attr: String,
    /// SNR recorded in the domain tag when the file carries no SNR attribute.
    pub default_snr_db: f64,
}

impl Default for Hdf5Layout {
    fn default() -> Self {
        Hdf5Layout {
            beam_group_prefix: "beam_".into(),
            gain_dataset_prefix: "gain_".into(),
            index_dataset_prefix: "index_".into(),
            iq_last_axis: true,
            snr_attr: "snr_db".into(),
            default_snr_db: 0.0,
        }
    }
}

/// Which receiver gain settings to read.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainSelection {
    #[default]
    All,
    Only(String),
}

impl GainSelection {
    fn accepts(&self, gain: &str) -> bool {
        match self {
            GainSelection::All => true,
            GainSelection::Only(g) => g == gain,
        }
    }
}

impl std::str::FromStr for GainSelection {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s == "all" {
            GainSelection::All
        } else {
            GainSelection::Only(s.to_string())
        })
    }
}

/// Reads labeled blocks for one antenna pair, keeping at most
/// `max_blocks_per_beam` blocks per beam in file order (gain datasets sorted
/// by name, rows in order).
pub fn load_deepbeam_hdf5(
    path: &Path,
    antenna_pair: &str,
    gain: &GainSelection,
    max_blocks_per_beam: usize,
    layout: &Hdf5Layout,
) -> Result<DatasetHandle> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
        ));
    }
    let h5 = |e: hdf5::Error| Error::hdf5(path, e);
    let file = hdf5::File::open(path).map_err(h5)?;

    let mut groups = file.member_names().map_err(h5)?;
    groups.sort();
    let mut blocks = Vec::new();
    for group_name in groups {
        let Some(suffix) = group_name.strip_prefix(&layout.beam_group_prefix) else {
            continue;
        };
        let beam: usize = suffix
            .parse()
            .map_err(|_| Error::Format(format!("group '/{group_name}': cannot parse beam index")))?;
        if beam >= NUM_BEAMS {
            return Err(Error::Format(format!(
                "group '/{group_name}': unknown beam index {beam} (expected 0..{})",
                NUM_BEAMS - 1
            )));
        }
        let group = file.group(&group_name).map_err(h5)?;
        let mut members = group.member_names().map_err(h5)?;
        members.sort();
        let mut taken = 0usize;
        for ds_name in members {
            if taken >= max_blocks_per_beam {
                break;
            }
            let Some(gain_name) = ds_name.strip_prefix(&layout.gain_dataset_prefix) else {
                continue;
            };
            if !gain.accepts(gain_name) {
                continue;
            }
            let record = format!("/{group_name}/{ds_name}");
            let ds = group.dataset(&ds_name).map_err(h5)?;
            let shape = ds.shape();
            let expected = if layout.iq_last_axis {
                [BLOCK_LEN, 2]
            } else {
                [2, BLOCK_LEN]
            };
            if shape.len() != 3 || shape[1..] != expected {
                return Err(Error::Format(format!(
                    "record {record}: block shape {:?}, expected [N, {}, {}] ({BLOCK_LEN} samples per block)",
                    shape, expected[0], expected[1]
                )));
            }
            let n = shape[0].min(max_blocks_per_beam - taken);
            let snr_db = match ds.attr(&layout.snr_attr) {
                Ok(a) => a.read_scalar::<f64>().map_err(h5)?,
                Err(_) => layout.default_snr_db,
            };
            let tag = Arc::new(DomainTag::new(antenna_pair, gain_name, snr_db)?);
            let indices: Vec<u32> = match group.dataset(&format!("{}{gain_name}", layout.index_dataset_prefix)) {
                Ok(ids) => ids.read_raw::<u32>().map_err(h5)?,
                Err(_) => (0..shape[0] as u32).collect(),
            };
            if indices.len() != shape[0] {
                return Err(Error::Format(format!("record {record}: index dataset length mismatch")));
            }
            if n == 0 {
                continue;
            }
            let raw: Array3<f32> = ds.read_slice::<f32, _, Ix3>(ndarray::s![0..n, .., ..]).map_err(h5)?;
            for (row, slab) in raw.outer_iter().enumerate() {
                let mut samples = vec![0.0f32; 2 * BLOCK_LEN];
                for t in 0..BLOCK_LEN {
                    let (i, q) = if layout.iq_last_axis {
                        (slab[[t, 0]], slab[[t, 1]])
                    } else {
                        (slab[[0, t]], slab[[1, t]])
                    };
                    samples[t] = i;
                    samples[BLOCK_LEN + t] = q;
                }
                let block =
                    IqBlock::new(samples).map_err(|e| Error::Format(format!("record {record} row {row}: {e}")))?;
                blocks.push(LabeledBlock::new(block, beam as u8, tag.clone(), indices[row])?);
            }
            taken += n;
        }
    }
    Ok(DatasetHandle::new(DataSource::Hdf5, blocks))
}

/// Writes `handle` in `layout`, atomically (temporary file then rename).
/// Object timestamps are disabled so identical content gives identical bytes.
pub fn write_deepbeam_hdf5(path: &Path, handle: &DatasetHandle, layout: &Hdf5Layout) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::Builder::new()
        .prefix(".partial-")
        .suffix(".h5")
        .tempfile_in(dir)
        .map_err(|e| Error::io(dir, e))?;
    let tmp_path = tmp.path().to_path_buf();
    {
        let h5 = |e: hdf5::Error| Error::hdf5(path, e);
        let mut builder = hdf5::File::with_options();
        builder.with_fcpl(|p| p.obj_track_times(false));
        let file = builder.create(&tmp_path).map_err(h5)?;
        let write_str_attr = |loc: &hdf5::Location, name: &str, value: &str| -> Result<()> {
            let v: VarLenUnicode = value
                .parse()
                .map_err(|e| Error::Format(format!("attribute {name}: {e}")))?;
            loc.new_attr::<VarLenUnicode>()
                .create(name)
                .and_then(|a| a.write_scalar(&v))
                .map_err(h5)
        };
        write_str_attr(&file, "format", FORMAT_TAG)?;
        let antennas = handle.antenna_ids();
        write_str_attr(&file, "antenna_id", &antennas.join(","))?;

        for beam in handle.beams() {
            let group = file
                .create_group(&format!("{}{beam:02}", layout.beam_group_prefix))
                .map_err(h5)?;
            let blocks = handle.beam_blocks(beam);
            let mut gains: Vec<&str> = blocks.iter().map(|b| b.domain.gain_setting.as_str()).collect();
            gains.dedup();
            for gain in gains {
                let rows: Vec<&LabeledBlock> = blocks.iter().filter(|b| b.domain.gain_setting == gain).collect();
                let (d1, d2) = if layout.iq_last_axis {
                    (BLOCK_LEN, 2)
                } else {
                    (2, BLOCK_LEN)
                };
                let mut arr = Array3::<f32>::zeros((rows.len(), d1, d2));
                for (r, b) in rows.iter().enumerate() {
                    for t in 0..BLOCK_LEN {
                        let (i, q) = (b.block.i()[t], b.block.q()[t]);
                        if layout.iq_last_axis {
                            arr[[r, t, 0]] = i;
                            arr[[r, t, 1]] = q;
                        } else {
                            arr[[r, 0, t]] = i;
                            arr[[r, 1, t]] = q;
                        }
                    }
                }
                let ds = group
                    .new_dataset_builder()
                    .obj_track_times(false)
                    .with_data(&arr)
                    .create(format!("{}{gain}", layout.gain_dataset_prefix).as_str())
                    .map_err(h5)?;
                ds.new_attr::<f64>()
                    .create(layout.snr_attr.as_str())
                    .and_then(|a| a.write_scalar(&rows[0].domain.snr_db))
                    .map_err(h5)?;
                let idx: Array1<u32> = rows.iter().map(|b| b.index).collect();
                group
                    .new_dataset_builder()
                    .obj_track_times(false)
                    .with_data(&idx)
                    .create(format!("{}{gain}", layout.index_dataset_prefix).as_str())
                    .map_err(h5)?;
            }
        }
        file.close().map_err(h5)?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
