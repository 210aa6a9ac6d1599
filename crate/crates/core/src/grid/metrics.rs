use super::{BinaryGrid, Voxel, VoxelGrid};
use crate::error::{param_err, Error, Result};

/// Intersection over union of two binary grids.
///
/// Two empty grids score 1.0 so that degenerate benchmark cells do not
/// drag averages down.
pub fn iou(a: &BinaryGrid, b: &BinaryGrid) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0, y != 0);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Binarize a probability grid: foreground iff `p >= gamma`, compared at
/// the grid's storage precision so an f32 0.95 passes `gamma = 0.95`.
pub fn threshold<T: Voxel>(p: &VoxelGrid<T>, gamma: f64) -> Result<BinaryGrid> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(param_err!("gamma must lie in (0, 1), got {gamma}"));
    }
    if !p.is_probability() {
        return Err(Error::Format("threshold: values outside [0, 1]".into()));
    }
    Ok(p.map(|v| v.at_least(gamma) as u8))
}
