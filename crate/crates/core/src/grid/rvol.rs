//! RVOL volume container.
//!
//! Layout: 8-byte magic `RVOL0001`, little-endian `u32` header length,
//! UTF-8 JSON header `{"dims","spacing","origin","dtype"}`, then exactly
//! `D*H*W` little-endian elements in row-major order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dims, GridSpec, VoxelGrid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RVOL0001";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Uint8,
    Float32,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::Uint8 => 1,
            Dtype::Float32 => 4,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    dtype: Dtype,
}

/// Element types storable in RVOL.
pub trait RvolElement: super::Voxel {
    const DTYPE: Dtype;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl RvolElement for u8 {
    const DTYPE: Dtype = Dtype::Uint8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn read_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

impl RvolElement for f32 {
    const DTYPE: Dtype = Dtype::Float32;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

/// A decoded volume of either supported dtype.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyGrid {
    U8(VoxelGrid<u8>),
    F32(VoxelGrid<f32>),
}

impl AnyGrid {
    pub fn spec(&self) -> &GridSpec {
        match self {
            AnyGrid::U8(g) => g.spec(),
            AnyGrid::F32(g) => g.spec(),
        }
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            AnyGrid::U8(_) => Dtype::Uint8,
            AnyGrid::F32(_) => Dtype::Float32,
        }
    }

    /// Widen to f32 regardless of stored dtype.
    pub fn into_f32(self) -> VoxelGrid<f32> {
        match self {
            AnyGrid::U8(g) => g.map(|v| v as f32),
            AnyGrid::F32(g) => g,
        }
    }

    /// Interpret as a binary mask; float grids must hold only 0 and 1.
    pub fn into_binary(self) -> Result<VoxelGrid<u8>> {
        let g = match self {
            AnyGrid::U8(g) => g,
            AnyGrid::F32(g) => {
                if !g.is_binary() {
                    return Err(Error::Format("expected a binary mask, found non-{0,1} floats".into()));
                }
                g.map(|v| v as u8)
            }
        };
        g.ensure_binary("mask")?;
        Ok(g)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            AnyGrid::U8(g) => encode(g),
            AnyGrid::F32(g) => encode(g),
        }
    }
}

pub fn encode<T: RvolElement>(grid: &VoxelGrid<T>) -> Vec<u8> {
    let spec = grid.spec();
    let header = Header {
        dims: spec.dims.as_array(),
        spacing: spec.spacing,
        origin: spec.origin,
        dtype: T::DTYPE,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + grid.len() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for &v in grid.data() {
        v.write_le(&mut out);
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<AnyGrid> {
    if bytes.len() < 12 {
        return Err(Error::Format(format!("truncated RVOL: {} bytes, need at least 12", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic, expected RVOL0001".into()));
    }
    let hlen = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let body = &bytes[12..];
    if body.len() < hlen {
        return Err(Error::Format(format!(
            "truncated header: declared {hlen} bytes, {} available",
            body.len()
        )));
    }
    let header: Header = serde_json::from_slice(&body[..hlen])
        .map_err(|e| Error::Format(format!("header JSON: {e}")))?;
    let spec = GridSpec::new(Dims::from(header.dims), header.spacing, header.origin)?;
    let blob = &body[hlen..];
    let expected = spec.dims.len() * header.dtype.size();
    if blob.len() != expected {
        return Err(Error::Format(format!(
            "byte-count mismatch: dims {:?} of {:?} need {expected} data bytes, found {}",
            header.dims,
            header.dtype,
            blob.len()
        )));
    }
    Ok(match header.dtype {
        Dtype::Uint8 => AnyGrid::U8(VoxelGrid::new(spec, blob.to_vec())?),
        Dtype::Float32 => AnyGrid::F32(VoxelGrid::new(spec, blob.chunks_exact(4).map(f32::read_le).collect())?),
    })
}

pub fn read_file(path: impl AsRef<Path>) -> Result<AnyGrid> {
    decode(&std::fs::read(path)?)
}

pub fn write_file<T: RvolElement>(path: impl AsRef<Path>, grid: &VoxelGrid<T>) -> Result<()> {
    std::fs::write(path, encode(grid))?;
    Ok(())
}
