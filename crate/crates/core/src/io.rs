//! Binary containers: an 8-byte magic, a `u32` little-endian header length,
//! a UTF-8 JSON header, then a little-endian `f64` payload.
//!
//! `.mnod` holds pair datasets (input then output per record) or
//! trajectories (one snapshot per record); `.mnockpt` holds model parameters
//! block by block.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{Trajectory, TrajectoryMeta};
use crate::config::ExperimentConfig;
use crate::dissipativity::PostProcessConfig;
use crate::error::{MnoError, Result};
use crate::model::{Architecture, BlockSpec, Model, ModelParams};
use crate::state::StateSpace;
use crate::systems::{DatasetMeta, PairDataset, SystemKind};
use crate::training::TrainingSummary;

pub const DATA_MAGIC: &[u8; 8] = b"MNODATA1";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MNOCKPT1";
pub const FORMAT_VERSION: u32 = 1;
/// Bytes before the JSON header.
pub const PREFIX_LEN: usize = 12;
const MAX_HEADER_LEN: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Pairs,
    Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub version: u32,
    pub layout: Layout,
    pub system: Option<SystemKind>,
    pub grid_shape: Vec<usize>,
    pub domain_length: f64,
    pub dt: f64,
    pub h: f64,
    pub count: usize,
    pub dtype: String,
    pub seed: u64,
    pub n_trajectories: usize,
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataFile {
    Pairs(PairDataset),
    Trajectory(Trajectory),
}

fn frame(
    magic: &[u8; 8],
    header: &[u8],
    payload: impl Iterator<Item = f64>,
    payload_len: usize,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + payload_len * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Splits a container into its JSON header and payload bytes.
fn unframe<'a>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<(&'a str, &'a [u8])> {
    if bytes.len() < PREFIX_LEN {
        return Err(MnoError::Format(format!(
            "file of {} bytes is too short",
            bytes.len()
        )));
    }
    if &bytes[..8] != magic {
        return Err(MnoError::Format(format!(
            "bad magic, expected {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if header_len > MAX_HEADER_LEN || header_len > bytes.len() - PREFIX_LEN {
        return Err(MnoError::Format(format!(
            "header length {header_len} exceeds the file"
        )));
    }
    let header = std::str::from_utf8(&bytes[PREFIX_LEN..PREFIX_LEN + header_len])
        .map_err(|e| MnoError::Format(format!("header is not UTF-8: {e}")))?;
    Ok((header, &bytes[PREFIX_LEN + header_len..]))
}

fn read_f64s(payload: &[u8], expected: usize) -> Result<Vec<f64>> {
    let bytes = expected
        .checked_mul(8)
        .ok_or_else(|| MnoError::Format("declared payload size overflows".into()))?;
    if payload.len() != bytes {
        return Err(MnoError::Format(format!(
            "payload holds {} bytes, header declares {bytes}",
            payload.len()
        )));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn header_json<T: Serialize>(h: &T) -> Vec<u8> {
    serde_json::to_vec(h).expect("header serializes")
}

fn parse_header<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| MnoError::Format(format!("header: {e}")))
}

pub fn encode_pairs(data: &PairDataset) -> Vec<u8> {
    let m = &data.meta;
    let header = DatasetHeader {
        version: FORMAT_VERSION,
        layout: Layout::Pairs,
        system: Some(m.system),
        grid_shape: m.grid_shape.clone(),
        domain_length: m.domain_length,
        dt: m.dt,
        h: m.h,
        count: data.len(),
        dtype: "f64".into(),
        seed: m.seed,
        n_trajectories: m.n_trajectories,
        provenance: m.provenance.clone(),
    };
    let r = data.record_size;
    let payload = (0..data.len()).flat_map(|i| {
        data.inputs[i * r..(i + 1) * r]
            .iter()
            .chain(&data.outputs[i * r..(i + 1) * r])
            .copied()
    });
    frame(
        DATA_MAGIC,
        &header_json(&header),
        payload,
        2 * data.inputs.len(),
    )
}

pub fn encode_trajectory(traj: &Trajectory) -> Vec<u8> {
    let m = &traj.meta;
    let header = DatasetHeader {
        version: FORMAT_VERSION,
        layout: Layout::Trajectory,
        system: m.system,
        grid_shape: m.grid_shape.clone(),
        domain_length: m.domain_length,
        dt: m.h,
        h: m.h,
        count: traj.len(),
        dtype: "f64".into(),
        seed: m.seed,
        n_trajectories: 1,
        provenance: m.provenance.clone(),
    };
    frame(
        DATA_MAGIC,
        &header_json(&header),
        traj.data.iter().copied(),
        traj.data.len(),
    )
}

/// Parses a `.mnod` container. Never panics on malformed input.
pub fn decode_data(bytes: &[u8]) -> Result<DataFile> {
    let (text, payload) = unframe(DATA_MAGIC, bytes)?;
    let h: DatasetHeader = parse_header(text)?;
    if h.version != FORMAT_VERSION {
        return Err(MnoError::Format(format!(
            "unsupported version {}",
            h.version
        )));
    }
    if h.dtype != "f64" {
        return Err(MnoError::Format(format!("unsupported dtype {}", h.dtype)));
    }
    let record = h
        .grid_shape
        .iter()
        .try_fold(1usize, |a, b| a.checked_mul(*b))
        .filter(|r| *r > 0)
        .ok_or_else(|| MnoError::Format("grid shape is empty or overflows".into()))?;
    if h.count == 0 {
        return Err(MnoError::Format("file holds no records".into()));
    }
    let values = h
        .count
        .checked_mul(record)
        .and_then(|v| v.checked_mul(if h.layout == Layout::Pairs { 2 } else { 1 }))
        .ok_or_else(|| MnoError::Format("declared payload size overflows".into()))?;
    let data = read_f64s(payload, values)?;
    match h.layout {
        Layout::Pairs => {
            let system = h
                .system
                .ok_or_else(|| MnoError::Format("pair datasets must name their system".into()))?;
            let mut inputs = Vec::with_capacity(h.count * record);
            let mut outputs = Vec::with_capacity(h.count * record);
            for rec in data.chunks_exact(2 * record) {
                inputs.extend_from_slice(&rec[..record]);
                outputs.extend_from_slice(&rec[record..]);
            }
            let meta = DatasetMeta {
                system,
                grid_shape: h.grid_shape,
                domain_length: h.domain_length,
                dt: h.dt,
                h: h.h,
                seed: h.seed,
                n_trajectories: h.n_trajectories,
                provenance: h.provenance,
            };
            let ds = PairDataset::new(meta, record, inputs, outputs)
                .map_err(|e| MnoError::Format(e.to_string()))?;
            Ok(DataFile::Pairs(ds))
        }
        Layout::Trajectory => {
            let meta = TrajectoryMeta {
                system: h.system,
                grid_shape: h.grid_shape,
                domain_length: h.domain_length,
                h: h.h,
                seed: h.seed,
                provenance: h.provenance,
            };
            Ok(DataFile::Trajectory(
                Trajectory::new(meta, data).map_err(|e| MnoError::Format(e.to_string()))?,
            ))
        }
    }
}

/// Where a checkpointed model acts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateInfo {
    pub system: Option<SystemKind>,
    pub grid_shape: Vec<usize>,
    pub domain_length: f64,
    pub h: f64,
}

impl StateInfo {
    pub fn from_meta(m: &DatasetMeta) -> Self {
        StateInfo {
            system: Some(m.system),
            grid_shape: m.grid_shape.clone(),
            domain_length: m.domain_length,
            h: m.h,
        }
    }

    pub fn trajectory_meta(&self, provenance: impl Into<String>) -> TrajectoryMeta {
        TrajectoryMeta {
            system: self.system,
            grid_shape: self.grid_shape.clone(),
            domain_length: self.domain_length,
            h: self.h,
            seed: 0,
            provenance: provenance.into(),
        }
    }

    pub fn space(&self) -> StateSpace {
        self.trajectory_meta("").space()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: u32,
    pub architecture: Architecture,
    pub blocks: Vec<BlockSpec>,
    pub state: StateInfo,
    #[serde(default)]
    pub training: Option<TrainingSummary>,
    #[serde(default)]
    pub postprocess: Option<PostProcessConfig>,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub state: StateInfo,
    pub training: Option<TrainingSummary>,
    pub postprocess: Option<PostProcessConfig>,
    pub experiment: Option<ExperimentConfig>,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        architecture: ck.model.arch.clone(),
        blocks: ck.model.params.specs.clone(),
        state: ck.state.clone(),
        training: ck.training.clone(),
        postprocess: ck.postprocess,
        experiment: ck.experiment.clone(),
    };
    let flat = ck.model.params.to_flat();
    frame(
        CHECKPOINT_MAGIC,
        &header_json(&header),
        flat.iter().copied(),
        flat.len(),
    )
}

/// Parses a `.mnockpt` container. Never panics on malformed input.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (text, payload) = unframe(CHECKPOINT_MAGIC, bytes)?;
    let h: CheckpointHeader = parse_header(text)?;
    if h.version != FORMAT_VERSION {
        return Err(MnoError::Format(format!(
            "unsupported version {}",
            h.version
        )));
    }
    let fmt = |e: MnoError| MnoError::Format(e.to_string());
    h.architecture.validate().map_err(fmt)?;
    let total = h
        .blocks
        .iter()
        .try_fold(0usize, |acc, b| {
            let n = b.shape.iter().try_fold(1usize, |a, s| a.checked_mul(*s))?;
            acc.checked_add(n.checked_mul(if b.complex { 2 } else { 1 })?)
        })
        .ok_or_else(|| MnoError::Format("declared block sizes overflow".into()))?;
    let flat = read_f64s(payload, total)?;
    if h.blocks != h.architecture.block_specs() {
        return Err(MnoError::Format(
            "parameter blocks do not match the architecture".into(),
        ));
    }
    let params = ModelParams::from_flat(h.blocks, &flat).map_err(fmt)?;
    let model = Model::from_params(h.architecture, params).map_err(fmt)?;
    if let Some(p) = &h.postprocess {
        p.validate().map_err(fmt)?;
    }
    Ok(Checkpoint {
        model,
        state: h.state,
        training: h.training,
        postprocess: h.postprocess,
        experiment: h.experiment,
    })
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    builder.permissions(std::os::unix::fs::PermissionsExt::from_mode(0o644));
    let mut tmp = builder
        .tempfile_in(dir)
        .map_err(|e| MnoError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| MnoError::io(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| MnoError::io(path, e))?;
    tmp.persist(path).map_err(|e| MnoError::io(path, e.error))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| MnoError::io(path, e))
}

pub fn save_pairs(path: &Path, data: &PairDataset) -> Result<()> {
    write_atomic(path, &encode_pairs(data))
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_atomic(path, &encode_trajectory(traj))
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ck))
}

pub fn load_data(path: &Path) -> Result<DataFile> {
    decode_data(&read_bytes(path)?).map_err(|e| with_path(path, e))
}

pub fn load_pairs(path: &Path) -> Result<PairDataset> {
    match load_data(path)? {
        DataFile::Pairs(p) => Ok(p),
        DataFile::Trajectory(_) => Err(MnoError::Format(format!(
            "{}: holds a trajectory, not pairs",
            path.display()
        ))),
    }
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    match load_data(path)? {
        DataFile::Trajectory(t) => Ok(t),
        DataFile::Pairs(_) => Err(MnoError::Format(format!(
            "{}: holds pairs, not a trajectory",
            path.display()
        ))),
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_bytes(path)?).map_err(|e| with_path(path, e))
}

fn with_path(path: &Path, e: MnoError) -> MnoError {
    match e {
        MnoError::Format(m) => MnoError::Format(format!("{}: {m}", path.display())),
        other => other,
    }
}
