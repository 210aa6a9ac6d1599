use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::grid::{BinaryGrid, Dims, GridSpec, VoxelGrid};
use crate::rng;

/// How the template departs from the true ellipsoid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateOffset {
    pub axis: usize,
    /// Change of the semi-axis along `axis` in mm; negative erodes.
    pub amount: f64,
    /// Apply the change only on the positive half of `axis`.
    pub one_sided: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid: GridSpec,
    /// Ellipsoid centre (mm).
    pub center: [f64; 3],
    /// Semi-axes (mm), ordered (z, y, x).
    pub semi_axes: [f64; 3],
    pub template: TemplateOffset,
    pub fg: f64,
    pub bg: f64,
    /// Gaussian noise standard deviation as a fraction of `|fg - bg|`.
    pub sigma: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            grid: GridSpec::unit(Dims::cube(64)),
            center: [32.0; 3],
            semi_axes: [20.0, 16.0, 12.0],
            template: TemplateOffset { axis: 0, amount: 2.0, one_sided: true },
            fg: 100.0,
            bg: 0.0,
            sigma: 0.05,
        }
    }
}

/// Image, true mask and template mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub image: VoxelGrid<f32>,
    pub truth: BinaryGrid,
    pub template: BinaryGrid,
}

impl PhantomSpec {
    fn template_axes(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = self.semi_axes;
        let mut hi = self.semi_axes;
        let t = self.template;
        hi[t.axis] += t.amount;
        if !t.one_sided {
            lo[t.axis] += t.amount;
        }
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.template.axis > 2 {
            return Err(param_err!("template axis must be 0, 1 or 2, got {}", self.template.axis));
        }
        if !self.semi_axes.iter().all(|a| a.is_finite() && *a > 0.0) {
            return Err(param_err!("semi-axes must be positive, got {:?}", self.semi_axes));
        }
        let (lo, hi) = self.template_axes();
        if !lo.iter().chain(&hi).all(|a| *a > 0.0) {
            return Err(param_err!("template offset {} collapses the shape", self.template.amount));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite() && self.fg.is_finite() && self.bg.is_finite()) {
            return Err(param_err!("intensities and sigma must be finite, sigma >= 0"));
        }
        for a in 0..3 {
            let extent = self.grid.spacing[a] * self.grid.dims.axis_len(a) as f64;
            let reach_lo = self.semi_axes[a].max(lo[a]);
            let reach_hi = self.semi_axes[a].max(hi[a]);
            let start = self.center[a] - self.grid.origin[a];
            if start - reach_lo < 0.0 || start + reach_hi > extent {
                return Err(param_err!("shape exceeds the grid along axis {a}"));
            }
        }
        Ok(())
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }
}

fn inside(p: [f64; 3], c: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> bool {
    let mut s = 0.0;
    for a in 0..3 {
        let d = p[a] - c[a];
        let r = if d > 0.0 { hi[a] } else { lo[a] };
        s += (d / r) * (d / r);
    }
    s <= 1.0
}

/// Synthesize `(X, true mask, template mask)`. Noise is drawn in row-major
/// order from a stream derived from `seed`.
pub fn make_phantom(spec: &PhantomSpec, seed: u64) -> Result<Phantom> {
    spec.validate()?;
    let g = spec.grid;
    let (lo, hi) = spec.template_axes();
    let at = |i, j, k| {
        let p = g.voxel_center(i, j, k);
        [p[0], p[1], p[2]]
    };
    let truth = VoxelGrid::from_fn(g, |i, j, k| inside(at(i, j, k), spec.center, spec.semi_axes, spec.semi_axes) as u8);
    let template = VoxelGrid::from_fn(g, |i, j, k| inside(at(i, j, k), spec.center, lo, hi) as u8);
    let noise = spec.sigma * (spec.fg - spec.bg).abs();
    let mut rng = rng::stream(seed, &[0x5048_414e]);
    let image = truth.map(|t| if t != 0 { spec.fg } else { spec.bg } as f32);
    let image = if noise > 0.0 {
        let mut img = image;
        for v in img.data_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = (*v as f64 + noise * z) as f32;
        }
        img
    } else {
        image
    };
    Ok(Phantom { image, truth, template })
}
