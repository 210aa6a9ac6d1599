use serde::{Deserialize, Serialize};

use super::{edt_squared, BinaryGrid, VoxelGrid};
use crate::error::{param_err, Error, Result};

const NEIGHBORS_6: [[isize; 3]; 6] =
    [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

/// Foreground voxels with at least one 6-connected background or
/// out-of-bounds neighbour.
pub fn boundary_mask(binary: &BinaryGrid) -> BinaryGrid {
    let dims = binary.dims();
    let data = binary.data();
    let mut out = vec![0u8; data.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        if data[idx] == 0 {
            continue;
        }
        let [i, j, k] = dims.coords(idx);
        let on_surface = NEIGHBORS_6.iter().any(|[di, dj, dk]| {
            match dims.checked_index(i as isize + di, j as isize + dj, k as isize + dk) {
                Some(n) => data[n] == 0,
                None => true,
            }
        });
        *o = on_surface as u8;
    }
    VoxelGrid::new(*binary.spec(), out).expect("same geometry")
}

/// Band parameters for the reconstruction weight map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    /// Band radius in voxels.
    pub d: f64,
    pub w_hi: f32,
    pub w_lo: f32,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams { d: 3.0, w_hi: 1.0, w_lo: 0.1 }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d >= 0.0) {
            return Err(param_err!("band radius d must be >= 0, got {}", self.d));
        }
        if !(self.w_hi > self.w_lo && self.w_lo >= 0.0) {
            return Err(param_err!(
                "weights must satisfy w_hi > w_lo >= 0, got w_hi={} w_lo={}",
                self.w_hi,
                self.w_lo
            ));
        }
        Ok(())
    }
}

/// Two-level weight map: `w_hi` within distance `d` of the template boundary, `w_lo` elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    pub grid: VoxelGrid<f32>,
    pub params: WeightParams,
}

impl WeightMap {
    /// Uniform weight everywhere; handy when no template band applies.
    pub fn uniform(spec: super::GridSpec, w: f32) -> Self {
        WeightMap {
            grid: VoxelGrid::from_spec(spec, w),
            params: WeightParams { d: f64::INFINITY, w_hi: w, w_lo: 0.0 },
        }
    }

    pub fn high_count(&self) -> usize {
        self.grid.data().iter().filter(|&&w| w == self.params.w_hi).count()
    }
}

pub fn weight_map(template: &BinaryGrid, params: WeightParams) -> Result<WeightMap> {
    params.validate()?;
    template.ensure_binary("weight_map template")?;
    if template.count_foreground() == 0 {
        return Err(Error::Empty("weight map needs a non-empty template".into()));
    }
    let surface = boundary_mask(template);
    let dist2 = edt_squared(&surface)?;
    let d2 = params.d * params.d;
    let grid = dist2.map(|s| if (s as f64) <= d2 { params.w_hi } else { params.w_lo });
    Ok(WeightMap { grid, params })
}
