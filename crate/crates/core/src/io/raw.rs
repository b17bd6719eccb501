//! Portable raw volumes: a JSON sidecar `{dims, spacing, dtype}` next to a
//! flat little-endian voxel file with the same stem and a `.raw` extension.

use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Geometry, VesselMask, VoxelGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawDtype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl RawDtype {
    fn size(self) -> usize {
        match self {
            RawDtype::Uint8 => 1,
            RawDtype::Int16 => 2,
            RawDtype::Int32 | RawDtype::Float32 => 4,
            RawDtype::Float64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub dtype: RawDtype,
}

pub fn data_path(sidecar: &Path) -> PathBuf {
    sidecar.with_extension("raw")
}

fn read_values(sidecar_path: &Path) -> Result<(RawSidecar, Vec<f64>)> {
    let sidecar: RawSidecar = serde_json::from_slice(&fs::read(sidecar_path)?)?;
    let bytes = fs::read(data_path(sidecar_path))?;
    let n = sidecar.dims.iter().product::<usize>();
    if bytes.len() != n * sidecar.dtype.size() {
        return Err(Error::Format(format!(
            "raw file holds {} bytes, expected {}",
            bytes.len(),
            n * sidecar.dtype.size()
        )));
    }
    let values = match sidecar.dtype {
        RawDtype::Uint8 => bytes.iter().map(|&b| b as f64).collect(),
        RawDtype::Int16 => bytes
            .chunks_exact(2)
            .map(|c| LittleEndian::read_i16(c) as f64)
            .collect(),
        RawDtype::Int32 => bytes
            .chunks_exact(4)
            .map(|c| LittleEndian::read_i32(c) as f64)
            .collect(),
        RawDtype::Float32 => bytes
            .chunks_exact(4)
            .map(|c| LittleEndian::read_f32(c) as f64)
            .collect(),
        RawDtype::Float64 => bytes.chunks_exact(8).map(LittleEndian::read_f64).collect(),
    };
    Ok((sidecar, values))
}

pub fn read_grid(sidecar_path: &Path) -> Result<VoxelGrid> {
    let (meta, values) = read_values(sidecar_path)?;
    VoxelGrid::new(meta.dims, meta.spacing, values)
}

pub fn write_grid(sidecar_path: &Path, grid: &VoxelGrid) -> Result<()> {
    let meta = RawSidecar {
        dims: grid.dims(),
        spacing: grid.spacing(),
        dtype: RawDtype::Float64,
    };
    let mut bytes = vec![0u8; 8 * grid.data.len()];
    LittleEndian::write_f64_into(&grid.data, &mut bytes);
    fs::write(data_path(sidecar_path), bytes)?;
    fs::write(sidecar_path, serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

/// Masks are stored as int32 cluster labels (0 = background).
pub fn write_mask(sidecar_path: &Path, mask: &VesselMask) -> Result<()> {
    let meta = RawSidecar {
        dims: mask.geometry.dims,
        spacing: mask.geometry.spacing,
        dtype: RawDtype::Int32,
    };
    let labels: Vec<i32> = mask.labels.iter().map(|&l| l as i32).collect();
    let mut bytes = vec![0u8; 4 * labels.len()];
    LittleEndian::write_i32_into(&labels, &mut bytes);
    fs::write(data_path(sidecar_path), bytes)?;
    fs::write(sidecar_path, serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn read_mask(sidecar_path: &Path) -> Result<VesselMask> {
    let (meta, values) = read_values(sidecar_path)?;
    let geometry = Geometry::new(meta.dims, meta.spacing)?;
    if values.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
        return Err(Error::Format(
            "mask labels must be non-negative integers".into(),
        ));
    }
    VesselMask::from_labels(geometry, values.into_iter().map(|v| v as u32).collect())
}
