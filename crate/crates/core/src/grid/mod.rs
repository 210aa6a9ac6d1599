//! Dense voxel grids and the pure operations defined over them.
//!
//! Storage is row-major with index `(i, j, k) -> i*H*W + j*W + k`, where
//! `i` runs along depth (z), `j` along height (y) and `k` along width (x).

mod boundary;
mod edt;
mod metrics;
pub mod rvol;

pub use boundary::{boundary_mask, weight_map, WeightMap, WeightParams};
pub use edt::{edt, edt_squared};
pub use metrics::{iou, threshold};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point3;

/// Grid extent in voxels, `(depth, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Dims {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl From<[usize; 3]> for Dims {
    fn from(d: [usize; 3]) -> Self {
        Dims::new(d[0], d[1], d[2])
    }
}

impl From<Dims> for [usize; 3] {
    fn from(d: Dims) -> Self {
        d.as_array()
    }
}

impl Dims {
    pub const fn new(depth: usize, height: usize, width: usize) -> Self {
        Dims { depth, height, width }
    }

    pub const fn cube(n: usize) -> Self {
        Dims::new(n, n, n)
    }

    pub const fn as_array(self) -> [usize; 3] {
        [self.depth, self.height, self.width]
    }

    pub const fn len(self) -> usize {
        self.depth * self.height * self.width
    }

    pub const fn is_empty(self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(self, i: usize, j: usize, k: usize) -> usize {
        (i * self.height + j) * self.width + k
    }

    #[inline]
    pub const fn coords(self, idx: usize) -> [usize; 3] {
        let k = idx % self.width;
        let rest = idx / self.width;
        [rest / self.height, rest % self.height, k]
    }

    /// Bounds check for signed neighbour coordinates.
    #[inline]
    pub fn checked_index(self, i: isize, j: isize, k: isize) -> Option<usize> {
        let [d, h, w] = self.as_array();
        if i < 0 || j < 0 || k < 0 {
            return None;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        (i < d && j < h && k < w).then(|| self.index(i, j, k))
    }

    pub fn axis_len(self, axis: usize) -> usize {
        self.as_array()[axis]
    }
}

/// Scalar types a grid may hold.
pub trait Voxel: Copy + Default + PartialEq + Send + Sync + std::fmt::Debug + 'static {
    fn to_f64(self) -> f64;

    /// `self >= gamma`, compared at the storage precision.
    #[inline]
    fn at_least(self, gamma: f64) -> bool {
        self.to_f64() >= gamma
    }
}

impl Voxel for u8 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}
impl Voxel for u64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}
impl Voxel for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn at_least(self, gamma: f64) -> bool {
        self >= gamma as f32
    }
}
impl Voxel for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Physical placement of a grid: extent, per-axis spacing (mm) and origin (mm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: Dims,
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: Dims, spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let spec = GridSpec { dims, spacing, origin };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit spacing, zero origin.
    pub fn unit(dims: Dims) -> Self {
        GridSpec { dims, spacing: [1.0; 3], origin: [0.0; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Parameter(format!("grid dims must be positive, got {:?}", self.dims.as_array())));
        }
        if !self.spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::Parameter(format!("spacing must be positive, got {:?}", self.spacing)));
        }
        if !self.origin.iter().all(|o| o.is_finite()) {
            return Err(Error::Parameter("origin must be finite".into()));
        }
        Ok(())
    }

    /// Physical centre of voxel `(i, j, k)`: `origin + spacing * (idx + 0.5)`.
    #[inline]
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Point3 {
        Point3::new(
            self.origin[0] + self.spacing[0] * (i as f64 + 0.5),
            self.origin[1] + self.spacing[1] * (j as f64 + 0.5),
            self.origin[2] + self.spacing[2] * (k as f64 + 0.5),
        )
    }

    /// Continuous voxel coordinate of a physical point (voxel centres at `n + 0.5`).
    #[inline]
    pub fn to_voxel_coords(&self, p: &Point3) -> Point3 {
        Point3::new(
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        )
    }

    /// Whether a physical point lies inside the grid's bounding box.
    pub fn contains_point(&self, p: &Point3) -> bool {
        let v = self.to_voxel_coords(p);
        (0..3).all(|a| v[a] >= 0.0 && v[a] <= self.dims.axis_len(a) as f64)
    }

    pub fn translated(&self, offset: [f64; 3]) -> Self {
        let mut out = *self;
        for a in 0..3 {
            out.origin[a] += offset[a];
        }
        out
    }
}

/// A dense 3D scalar field with physical geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid<T> {
    spec: GridSpec,
    data: Vec<T>,
}

pub type BinaryGrid = VoxelGrid<u8>;

impl<T: Voxel> VoxelGrid<T> {
    pub fn new(spec: GridSpec, data: Vec<T>) -> Result<Self> {
        spec.validate()?;
        if data.len() != spec.dims.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match dims {:?} ({} voxels)",
                data.len(),
                spec.dims.as_array(),
                spec.dims.len()
            )));
        }
        Ok(VoxelGrid { spec, data })
    }

    /// Grid filled with `value`, unit spacing, zero origin.
    pub fn filled(dims: Dims, value: T) -> Self {
        VoxelGrid { spec: GridSpec::unit(dims), data: vec![value; dims.len()] }
    }

    pub fn from_spec(spec: GridSpec, value: T) -> Self {
        VoxelGrid { data: vec![value; spec.dims.len()], spec }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let d = spec.dims;
        let mut data = Vec::with_capacity(d.len());
        for i in 0..d.depth {
            for j in 0..d.height {
                for k in 0..d.width {
                    data.push(f(i, j, k));
                }
            }
        }
        VoxelGrid { spec, data }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn dims(&self) -> Dims {
        self.spec.dims
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.spec.spacing
    }
    pub fn origin(&self) -> [f64; 3] {
        self.spec.origin
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<T> {
        self.data
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.spec.dims.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let idx = self.spec.dims.index(i, j, k);
        self.data[idx] = v;
    }

    /// Replace the physical placement, keeping dims.
    pub fn with_geometry(mut self, spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let spec = GridSpec::new(self.spec.dims, spacing, origin)?;
        self.spec = spec;
        Ok(self)
    }

    /// Elementwise map onto a grid with identical geometry.
    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> VoxelGrid<U> {
        VoxelGrid { spec: self.spec, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn ensure_same_dims<U: Voxel>(&self, other: &VoxelGrid<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "dims {:?} vs {:?}",
                self.dims().as_array(),
                other.dims().as_array()
            )));
        }
        Ok(())
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Point3 {
        self.spec.voxel_center(i, j, k)
    }

    /// Every value within `[0, 1]`.
    pub fn is_probability(&self) -> bool {
        self.data.iter().all(|v| {
            let x = v.to_f64();
            (0.0..=1.0).contains(&x)
        })
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|v| {
            let x = v.to_f64();
            x == 0.0 || x == 1.0
        })
    }

    pub fn to_f64(&self) -> VoxelGrid<f64> {
        self.map(Voxel::to_f64)
    }
}

impl VoxelGrid<u8> {
    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn foreground_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i)
    }

    pub(crate) fn ensure_binary(&self, what: &str) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::Format(format!("{what}: expected binary values in {{0,1}}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let d = Dims::new(3, 4, 5);
        for idx in 0..d.len() {
            let [i, j, k] = d.coords(idx);
            assert_eq!(d.index(i, j, k), idx);
        }
        assert_eq!(d.index(1, 2, 3), 20 + 2 * 5 + 3);
    }

    #[test]
    fn rejects_bad_length_and_spacing() {
        let spec = GridSpec::unit(Dims::cube(2));
        assert!(matches!(VoxelGrid::new(spec, vec![0u8; 7]), Err(Error::Shape(_))));
        let bad = GridSpec { spacing: [1.0, 0.0, 1.0], ..spec };
        assert!(matches!(VoxelGrid::new(bad, vec![0u8; 8]), Err(Error::Parameter(_))));
    }

    #[test]
    fn voxel_center_convention() {
        let spec = GridSpec::new(Dims::cube(8), [2.0, 1.0, 0.5], [10.0, 0.0, -1.0]).unwrap();
        let c = spec.voxel_center(2, 3, 4);
        assert_eq!(c, Point3::new(15.0, 3.5, 1.25));
        let v = spec.to_voxel_coords(&c);
        assert_eq!(v, Point3::new(2.5, 3.5, 4.5));
    }
}
