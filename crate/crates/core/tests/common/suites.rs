//! Randomized equivalence and gradient suites. Each returns a summary on
//! success and the first mismatch otherwise, so both the regular tests and
//! the acceptance runner can use them.

use rand::Rng;
use weakseg::asm::attraction_forces;
use weakseg::grid::{boundary_mask, edt, edt_squared, iou, weight_map, GridSpec, VoxelGrid, WeightParams};
use weakseg::loss::{cross_entropy, grad_cross_entropy, grad_weighted_mse, weighted_mse, CE_EPS};
use weakseg::varseg::{initial_logits, make_phantom, Init, Objective, PhantomSpec, TemplateOffset};
use weakseg::voxelize::rasterize;
use weakseg::Dims;

use super::*;

pub type Outcome = Result<String, String>;

pub const INSTANCES: usize = 200;

pub fn iou_suite(seed: u64) -> Outcome {
    let mut r = rng(seed);
    for n in 0..INSTANCES {
        let dims = random_dims(&mut r, 16);
        let a = random_mask(&mut r, dims);
        let b = random_mask(&mut r, dims);
        let got = iou(&a, &b).map_err(|e| e.to_string())?;
        let want = iou_oracle(a.data(), b.data());
        if got != want {
            return Err(format!("instance {n}: iou {got} vs oracle {want}"));
        }
    }
    Ok(format!("{INSTANCES} exact"))
}

pub fn edt_suite(seed: u64) -> Outcome {
    let mut r = rng(seed);
    for n in 0..INSTANCES {
        let dims = random_dims(&mut r, 12);
        let mut m = random_mask(&mut r, dims);
        if m.count_foreground() == 0 {
            m.data_mut()[0] = 1;
        }
        let got = edt_squared(&m).map_err(|e| e.to_string())?;
        let want = edt_sq_oracle(&m);
        if got.data() != want.as_slice() {
            return Err(format!("instance {n}: squared EDT differs on {dims:?}"));
        }
        let f = edt(&m).map_err(|e| e.to_string())?;
        if f.data().iter().zip(&want).any(|(&d, &s)| d != (s as f64).sqrt() as f32) {
            return Err(format!("instance {n}: EDT is not the root of the squared distance"));
        }
    }
    Ok(format!("{INSTANCES} exact"))
}

pub fn boundary_suite(seed: u64) -> Outcome {
    let mut r = rng(seed);
    for n in 0..INSTANCES {
        let dims = random_dims(&mut r, 16);
        let m = random_mask(&mut r, dims);
        if boundary_mask(&m).data() != boundary_oracle(&m).as_slice() {
            return Err(format!("instance {n}: boundary differs on {dims:?}"));
        }
    }
    Ok(format!("{INSTANCES} exact"))
}

fn random_probs(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| match r.random_range(0..10) {
            // exercise the clamp on both ends
            0 => 0.0,
            1 => 1.0,
            2 => r.random_range(0.0..1e-8),
            _ => r.random_range(0.0..1.0),
        })
        .collect()
}

pub fn ce_suite(seed: u64) -> Outcome {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for n in 0..INSTANCES {
        let dims = random_dims(&mut r, 16);
        let y = random_mask(&mut r, dims);
        let p = VoxelGrid::new(*y.spec(), random_probs(&mut r, dims.len())).unwrap();
        let got = cross_entropy(&y, &p).map_err(|e| e.to_string())?;
        let want = ce_oracle(y.data(), p.data(), CE_EPS);
        let e = rel_err(got, want);
        worst = worst.max(e);
        if e > 1e-12 {
            return Err(format!("instance {n}: CE {got} vs oracle {want} (rel {e:.2e})"));
        }
    }
    Ok(format!("{INSTANCES} within 1e-12 (worst {worst:.1e})"))
}

pub fn mse_suite(seed: u64) -> Outcome {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for n in 0..INSTANCES {
        let dims = random_dims(&mut r, 16);
        let mut t = random_mask(&mut r, dims);
        if t.count_foreground() == 0 {
            t.data_mut()[0] = 1;
        }
        let w = weight_map(&t, WeightParams { d: r.random_range(0.0..4.0), w_hi: 1.0, w_lo: 0.1 }).unwrap();
        let x: Vec<f64> = (0..dims.len()).map(|_| r.random_range(-50.0..150.0)).collect();
        let xh: Vec<f64> = (0..dims.len()).map(|_| r.random_range(-50.0..150.0)).collect();
        let xg = VoxelGrid::new(*t.spec(), x.clone()).unwrap();
        let xhg = VoxelGrid::new(*t.spec(), xh.clone()).unwrap();
        let got = weighted_mse(&xg, &xhg, &w).map_err(|e| e.to_string())?;
        let want = mse_oracle(&x, &xh, w.grid.data());
        let e = rel_err(got, want);
        worst = worst.max(e);
        if e > 1e-12 {
            return Err(format!("instance {n}: MSE {got} vs oracle {want} (rel {e:.2e})"));
        }
    }
    Ok(format!("{INSTANCES} within 1e-12 (worst {worst:.1e})"))
}

pub fn forces_suite(seed: u64) -> Outcome {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for n in 0..INSTANCES {
        let spec = random_grid_spec(&mut r);
        let mesh = random_star_mesh(&mut r, &spec);
        let count = r.random_range(1..60);
        let pts = points_near(&mut r, &mesh, count);
        let kappa = r.random_range(0.1..3.0);
        let got = attraction_forces(&mesh, &pts, kappa).map_err(|e| e.to_string())?;
        let want = forces_oracle(&mesh, &pts, kappa);
        let scale = want.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        for (v, (g, w)) in got.iter().zip(&want).enumerate() {
            let e = (g - w).norm() / scale;
            worst = worst.max(e);
            if e > 1e-12 {
                return Err(format!("instance {n}: vertex {v} force {g:?} vs oracle {w:?}"));
            }
        }
    }
    Ok(format!("{INSTANCES} within 1e-12 (worst {worst:.1e})"))
}

pub fn point_in_mesh_suite(seed: u64) -> Outcome {
    let mut r = rng(seed);
    let mut voxels = 0usize;
    for n in 0..INSTANCES {
        let spec = random_grid_spec(&mut r);
        let mesh = random_star_mesh(&mut r, &spec);
        let got = rasterize(&mesh, &spec).map_err(|e| e.to_string())?;
        let [d, h, w] = spec.dims.as_array();
        for i in 0..d {
            for j in 0..h {
                for k in 0..w {
                    let inside = winding_number(&mesh, &spec.voxel_center(i, j, k)).abs() > 0.5;
                    if inside != (got.get(i, j, k) != 0) {
                        return Err(format!("instance {n}: voxel ({i},{j},{k}) raster {} winding {inside}", got.get(i, j, k)));
                    }
                }
            }
        }
        voxels += spec.dims.len();
    }
    Ok(format!("{INSTANCES} meshes, {voxels} voxels exact"))
}

fn worst_relative(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|&(a, n)| rel_err(a, n)).fold(0.0, f64::max)
}

/// CE and weighted-MSE gradients against central differences at 64 random voxels each.
pub fn loss_gradient_suite(seed: u64) -> Outcome {
    let mut r = rng(seed);
    let dims = Dims::cube(10);
    let spec = GridSpec::unit(dims);
    let y = random_mask(&mut r, dims);
    let mut t = random_mask(&mut r, dims);
    t.data_mut()[0] = 1;
    let p: Vec<f64> = (0..dims.len()).map(|_| r.random_range(0.05..0.95)).collect();
    let pg = VoxelGrid::new(spec, p.clone()).unwrap();
    let g_ce = grad_cross_entropy(&y, &pg).unwrap();
    let w = weight_map(&t, WeightParams::default()).unwrap();
    let x: Vec<f64> = (0..dims.len()).map(|_| r.random_range(0.0..100.0)).collect();
    let xh: Vec<f64> = (0..dims.len()).map(|_| r.random_range(0.0..100.0)).collect();
    let xg = VoxelGrid::new(spec, x.clone()).unwrap();
    let g_mse = grad_weighted_mse(&xg, &VoxelGrid::new(spec, xh.clone()).unwrap(), &w).unwrap();

    let ce = |q: &[f64]| cross_entropy(&y, &VoxelGrid::new(spec, q.to_vec()).unwrap()).unwrap();
    let mse = |q: &[f64]| weighted_mse(&xg, &VoxelGrid::new(spec, q.to_vec()).unwrap(), &w).unwrap();
    let mut ce_pairs = Vec::new();
    let mut mse_pairs = Vec::new();
    for _ in 0..64 {
        let i = r.random_range(0..dims.len());
        ce_pairs.push((g_ce.data()[i] as f64, central_diff(ce, &p, i, 1e-6)));
        mse_pairs.push((g_mse.data()[i], central_diff(mse, &xh, i, 1e-4)));
    }
    let (wc, wm) = (worst_relative(&ce_pairs), worst_relative(&mse_pairs));
    if wc > 1e-4 || wm > 1e-4 {
        return Err(format!("worst relative error CE {wc:.2e}, MSE {wm:.2e} (limit 1e-4)"));
    }
    Ok(format!("64+64 coordinates, worst CE {wc:.1e}, MSE {wm:.1e}"))
}

/// Full objective gradient (cross-entropy plus the mean-dependent
/// reconstruction) against central differences at 64 random logits.
pub fn objective_gradient_suite(seed: u64) -> Outcome {
    let mut r = rng(seed);
    let spec = PhantomSpec {
        grid: GridSpec::unit(Dims::cube(16)),
        center: [8.0; 3],
        semi_axes: [5.0, 4.0, 3.0],
        template: TemplateOffset { axis: 0, amount: 1.0, one_sided: true },
        ..PhantomSpec::default()
    };
    let ph = make_phantom(&spec, seed).unwrap();
    let w = weight_map(&ph.template, WeightParams::default()).unwrap();
    let mut worst = 0.0f64;
    for (lambda, masked) in [(1e-4, false), (1e-2, false), (1e-3, true)] {
        let mask = masked.then(|| VoxelGrid::from_fn(spec.grid, |i, _, _| (i % 3 == 0) as u8));
        let obj = Objective::new(&ph.image, &ph.template, &w, mask.as_ref(), lambda).unwrap();
        // start off the template so the sigmoid is not saturated
        let z: Vec<f64> = initial_logits(&ph.template, Init::FromTemplate)
            .iter()
            .map(|v| v * 0.3 + r.random_range(-1.0..1.0))
            .collect();
        let g = obj.gradient(&z);
        let f = |q: &[f64]| obj.value(q).total;
        let pairs: Vec<(f64, f64)> = (0..64)
            .map(|_| {
                let i = r.random_range(0..z.len());
                (g[i], central_diff(f, &z, i, 1e-5))
            })
            .collect();
        let e = worst_relative(&pairs);
        worst = worst.max(e);
        if e > 1e-3 {
            return Err(format!("lambda {lambda} masked {masked}: worst relative error {e:.2e} (limit 1e-3)"));
        }
    }
    Ok(format!("3 x 64 coordinates, worst {worst:.1e}"))
}
