//! Volume file formats: single-file NIfTI-1 and a portable raw format.

pub mod nifti;
pub mod raw;

use std::path::Path;

use crate::error::Result;
use crate::volume::VoxelGrid;

/// Loads a `.nii` file or a raw-format JSON sidecar, chosen by extension.
pub fn read_volume(path: &Path) -> Result<VoxelGrid> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => raw::read_grid(path),
        _ => nifti::read_nifti(path),
    }
}
