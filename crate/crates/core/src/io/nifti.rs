//! Minimal NIfTI-1 single-file reader.
//!
//! Little-endian `.nii` only, 3D volumes, datatypes uint8 / int16 / float32.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::volume::VoxelGrid;

pub const HEADER_SIZE: usize = 348;
pub const MAGIC: &[u8; 4] = b"n+1\0";

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const MAGIC: usize = 344;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Datatype {
    UInt8,
    Int16,
    Float32,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::UInt8 => 2,
            Datatype::Int16 => 4,
            Datatype::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Datatype::UInt8),
            4 => Ok(Datatype::Int16),
            16 => Ok(Datatype::Float32),
            other => Err(Error::UnsupportedDatatype(format!(
                "NIfTI datatype code {other}"
            ))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Datatype::UInt8 => 1,
            Datatype::Int16 => 2,
            Datatype::Float32 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub datatype: Datatype,
    pub vox_offset: usize,
    pub scl_slope: f32,
    pub scl_inter: f32,
}

pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader> {
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        return Err(Error::Format(
            "compressed NIfTI (.nii.gz) is not supported".into(),
        ));
    }
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Format(format!(
            "file too short for a NIfTI-1 header ({} bytes)",
            bytes.len()
        )));
    }
    let sizeof_hdr = LittleEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]);
    if sizeof_hdr != HEADER_SIZE as i32 {
        if byteorder::BigEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]) == HEADER_SIZE as i32 {
            return Err(Error::Format("big-endian NIfTI is not supported".into()));
        }
        return Err(Error::Format(format!(
            "sizeof_hdr is {sizeof_hdr}, expected 348"
        )));
    }
    if &bytes[offsets::MAGIC..offsets::MAGIC + 4] != MAGIC {
        return Err(Error::Format(
            "bad magic: only single-file NIfTI-1 (\"n+1\") is supported".into(),
        ));
    }

    let mut dim = [0i16; 8];
    LittleEndian::read_i16_into(&bytes[offsets::DIM..offsets::DIM + 16], &mut dim);
    if !(3..=7).contains(&dim[0]) {
        return Err(Error::Format(format!(
            "dim[0] = {} is not a 3D volume",
            dim[0]
        )));
    }
    if dim[1..=3].iter().any(|&d| d <= 0) {
        return Err(Error::Format(format!(
            "non-positive spatial dims {:?}",
            &dim[1..=3]
        )));
    }
    if dim[4..=dim[0] as usize].iter().any(|&d| d > 1) {
        return Err(Error::Format(
            "only single-frame 3D volumes are supported".into(),
        ));
    }
    let datatype = Datatype::from_code(LittleEndian::read_i16(&bytes[offsets::DATATYPE..]))?;
    let bitpix = LittleEndian::read_i16(&bytes[offsets::BITPIX..]);
    if bitpix as usize != 8 * datatype.size() {
        return Err(Error::Format(format!(
            "bitpix {bitpix} inconsistent with datatype"
        )));
    }

    let mut pixdim = [0f32; 8];
    LittleEndian::read_f32_into(&bytes[offsets::PIXDIM..offsets::PIXDIM + 32], &mut pixdim);
    let spacing = [pixdim[1] as f64, pixdim[2] as f64, pixdim[3] as f64];
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Format(format!(
            "non-positive voxel spacing {spacing:?}"
        )));
    }

    let vox_offset = LittleEndian::read_f32(&bytes[offsets::VOX_OFFSET..]);
    if !(vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::Format(format!(
            "vox_offset {vox_offset} inside header"
        )));
    }
    Ok(NiftiHeader {
        dims: [dim[1] as usize, dim[2] as usize, dim[3] as usize],
        spacing,
        datatype,
        vox_offset: vox_offset as usize,
        scl_slope: LittleEndian::read_f32(&bytes[offsets::SCL_SLOPE..]),
        scl_inter: LittleEndian::read_f32(&bytes[offsets::SCL_INTER..]),
    })
}

/// Decodes a complete `.nii` byte buffer.
pub fn decode_nifti(bytes: &[u8]) -> Result<VoxelGrid> {
    let header = parse_header(bytes)?;
    let n = header.dims.iter().product::<usize>();
    let start = header.vox_offset;
    let end = start + n * header.datatype.size();
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "voxel data truncated: need {end} bytes, have {}",
            bytes.len()
        )));
    }
    let body = &bytes[start..end];
    let mut data: Vec<f64> = match header.datatype {
        Datatype::UInt8 => body.iter().map(|&b| b as f64).collect(),
        Datatype::Int16 => body
            .chunks_exact(2)
            .map(|c| LittleEndian::read_i16(c) as f64)
            .collect(),
        Datatype::Float32 => body
            .chunks_exact(4)
            .map(|c| LittleEndian::read_f32(c) as f64)
            .collect(),
    };
    if header.scl_slope != 0.0 && header.scl_slope.is_finite() {
        let (m, b) = (header.scl_slope as f64, header.scl_inter as f64);
        data.iter_mut().for_each(|v| *v = *v * m + b);
    }
    VoxelGrid::new(header.dims, header.spacing, data)
}

pub fn read_nifti(path: &Path) -> Result<VoxelGrid> {
    decode_nifti(&fs::read(path)?)
}

/// Encodes a grid as float32 single-file NIfTI-1 (vox_offset 352).
pub fn encode_nifti_f32(grid: &VoxelGrid) -> Vec<u8> {
    let n = grid.data.len();
    let mut out = vec![0u8; 352 + 4 * n];
    LittleEndian::write_i32(&mut out[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
    let d = grid.dims();
    let dim = [3i16, d[0] as i16, d[1] as i16, d[2] as i16, 1, 1, 1, 1];
    LittleEndian::write_i16_into(&dim, &mut out[offsets::DIM..offsets::DIM + 16]);
    LittleEndian::write_i16(&mut out[offsets::DATATYPE..], Datatype::Float32.code());
    LittleEndian::write_i16(&mut out[offsets::BITPIX..], 32);
    let s = grid.spacing();
    let pixdim = [
        1.0f32,
        s[0] as f32,
        s[1] as f32,
        s[2] as f32,
        0.0,
        0.0,
        0.0,
        0.0,
    ];
    LittleEndian::write_f32_into(&pixdim, &mut out[offsets::PIXDIM..offsets::PIXDIM + 32]);
    LittleEndian::write_f32(&mut out[offsets::VOX_OFFSET..], 352.0);
    LittleEndian::write_f32(&mut out[offsets::SCL_SLOPE..], 1.0);
    out[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(MAGIC);
    for (i, v) in grid.data.iter().enumerate() {
        LittleEndian::write_f32(&mut out[352 + 4 * i..], *v as f32);
    }
    out
}

pub fn write_nifti_f32(path: &Path, grid: &VoxelGrid) -> Result<()> {
    fs::write(path, encode_nifti_f32(grid))?;
    Ok(())
}
