//! Brute-force oracles and fixtures shared by the integration tests.
//! Nothing here calls the library routine it checks.

#![allow(dead_code)]

pub mod suites;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weakseg::grid::{Dims, GridSpec, VoxelGrid};
use weakseg::mesh::{icosphere, TriMesh};
use weakseg::Point3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Neumaier-compensated sum, accurate well past the 1e-12 comparisons.
pub fn accurate_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn random_dims(r: &mut ChaCha8Rng, max: usize) -> Dims {
    Dims::new(r.random_range(1..=max), r.random_range(1..=max), r.random_range(1..=max))
}

/// Binary mask with foreground density drawn per instance.
pub fn random_mask(r: &mut ChaCha8Rng, dims: Dims) -> VoxelGrid<u8> {
    let density: f64 = r.random_range(0.02..0.7);
    let data = (0..dims.len()).map(|_| r.random_bool(density) as u8).collect();
    VoxelGrid::new(GridSpec::unit(dims), data).unwrap()
}

pub fn iou_oracle(a: &[u8], b: &[u8]) -> f64 {
    use std::collections::BTreeSet;
    let sa: BTreeSet<usize> = a.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i).collect();
    let sb: BTreeSet<usize> = b.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

fn coords(dims: Dims) -> Vec<[i64; 3]> {
    let [d, h, w] = dims.as_array();
    let mut out = Vec::with_capacity(dims.len());
    for i in 0..d {
        for j in 0..h {
            for k in 0..w {
                out.push([i as i64, j as i64, k as i64]);
            }
        }
    }
    out
}

/// Squared distance from every voxel to the nearest foreground voxel, by exhaustive search.
pub fn edt_sq_oracle(mask: &VoxelGrid<u8>) -> Vec<u64> {
    let all = coords(mask.dims());
    let fg: Vec<[i64; 3]> = all.iter().zip(mask.data()).filter(|(_, &v)| v != 0).map(|(c, _)| *c).collect();
    all.iter()
        .map(|p| {
            fg.iter()
                .map(|q| (0..3).map(|a| ((p[a] - q[a]) * (p[a] - q[a])) as u64).sum::<u64>())
                .min()
                .unwrap()
        })
        .collect()
}

/// Foreground minus its 6-connected erosion, with the grid padded by background.
pub fn boundary_oracle(mask: &VoxelGrid<u8>) -> Vec<u8> {
    let [d, h, w] = mask.dims().as_array();
    let (pd, ph, pw) = (d + 2, h + 2, w + 2);
    let mut pad = vec![0u8; pd * ph * pw];
    let at = |i: usize, j: usize, k: usize| (i * ph + j) * pw + k;
    for (idx, c) in coords(mask.dims()).into_iter().enumerate() {
        pad[at(c[0] as usize + 1, c[1] as usize + 1, c[2] as usize + 1)] = mask.data()[idx];
    }
    coords(mask.dims())
        .into_iter()
        .map(|c| {
            let (i, j, k) = (c[0] as usize + 1, c[1] as usize + 1, c[2] as usize + 1);
            let fg = pad[at(i, j, k)] != 0;
            let eroded = fg
                && pad[at(i - 1, j, k)] != 0
                && pad[at(i + 1, j, k)] != 0
                && pad[at(i, j - 1, k)] != 0
                && pad[at(i, j + 1, k)] != 0
                && pad[at(i, j, k - 1)] != 0
                && pad[at(i, j, k + 1)] != 0;
            (fg && !eroded) as u8
        })
        .collect()
}

/// Clamped two-class cross-entropy summed over voxels.
pub fn ce_oracle(y: &[u8], p: &[f64], eps: f64) -> f64 {
    accurate_sum(y.iter().zip(p).map(|(&t, &q)| {
        let q = q.max(eps).min(1.0 - eps);
        if t != 0 {
            -q.ln()
        } else {
            -(1.0 - q).ln()
        }
    }))
}

pub fn mse_oracle(x: &[f64], xhat: &[f64], w: &[f32]) -> f64 {
    accurate_sum(x.iter().zip(xhat).zip(w).map(|((&a, &b), &wv)| wv as f64 * (a - b) * (a - b)))
}

fn seg_closest(p: &Point3, a: &Point3, b: &Point3) -> (Point3, f64) {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.dot(&ab)).clamp(0.0, 1.0);
    (a + ab * t, t)
}

/// Closest point of a triangle and its barycentric weights, by plane
/// projection and falling back to the best of the three edges.
pub fn closest_on_triangle_oracle(p: &Point3, tri: [Point3; 3]) -> (Point3, [f64; 3]) {
    let [a, b, c] = tri;
    let n = (b - a).cross(&(c - a));
    let n2 = n.dot(&n);
    let q = p - n * ((p - a).dot(&n) / n2);
    let wa = (b - q).cross(&(c - q)).dot(&n) / n2;
    let wb = (c - q).cross(&(a - q)).dot(&n) / n2;
    let wc = 1.0 - wa - wb;
    if wa >= 0.0 && wb >= 0.0 && wc >= 0.0 {
        return (q, [wa, wb, wc]);
    }
    let cands = [
        (seg_closest(p, &a, &b), [0usize, 1]),
        (seg_closest(p, &b, &c), [1, 2]),
        (seg_closest(p, &c, &a), [2, 0]),
    ];
    let ((pt, t), [u, v]) = cands
        .into_iter()
        .min_by(|x, y| (p - x.0 .0).norm().total_cmp(&(p - y.0 .0).norm()))
        .unwrap();
    let mut w = [0.0; 3];
    w[u] = 1.0 - t;
    w[v] = t;
    (pt, w)
}

/// Springs to the closest point over all faces, spread by barycentric
/// weight; a vertex whose weights sum past 1 gets the weighted mean.
pub fn forces_oracle(mesh: &TriMesh, points: &[Point3], kappa: f64) -> Vec<Point3> {
    let mut f = vec![Point3::zeros(); mesh.vertices.len()];
    let mut wsum = vec![0.0; mesh.vertices.len()];
    for p in points {
        let mut best: Option<(f64, usize, Point3, [f64; 3])> = None;
        for (fi, face) in mesh.faces.iter().enumerate() {
            let tri = face.map(|v| mesh.vertices[v as usize]);
            let (q, w) = closest_on_triangle_oracle(p, tri);
            let d = (p - q).norm();
            if best.as_ref().is_none_or(|b| d < b.0) {
                best = Some((d, fi, q, w));
            }
        }
        let (_, fi, q, w) = best.unwrap();
        for (&v, &wt) in mesh.faces[fi].iter().zip(&w) {
            f[v as usize] += (p - q) * (kappa * wt);
            wsum[v as usize] += wt;
        }
    }
    f.iter().zip(&wsum).map(|(v, &s)| if s > 1.0 { v / s } else { *v }).collect()
}

/// Generalized winding number of a closed mesh about `q`.
pub fn winding_number(mesh: &TriMesh, q: &Point3) -> f64 {
    let total: f64 = mesh
        .faces
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|v| mesh.vertices[v as usize] - q);
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
            2.0 * num.atan2(den)
        })
        .sum();
    total / (4.0 * std::f64::consts::PI)
}

/// Star-shaped closed mesh: an icosphere (20 or 80 faces) with each
/// vertex pushed radially by a random factor, randomly placed in a grid.
pub fn random_star_mesh(r: &mut ChaCha8Rng, spec: &GridSpec) -> TriMesh {
    let sub = r.random_range(0..=1);
    let extent: Vec<f64> = (0..3).map(|a| spec.spacing[a] * spec.dims.axis_len(a) as f64).collect();
    let min_extent = extent.iter().cloned().fold(f64::INFINITY, f64::min);
    let radius = r.random_range(0.15..0.4) * min_extent;
    let center = Point3::from_fn(|a, _| spec.origin[a] + extent[a] * r.random_range(0.35..0.65));
    let mut m = icosphere(sub, 1.0, Point3::zeros()).unwrap();
    for v in &mut m.vertices {
        *v = center + *v * (radius * r.random_range(0.6..1.3));
    }
    m
}

/// Random closed-mesh fixture grid: up to 16 per side with anisotropic spacing.
pub fn random_grid_spec(r: &mut ChaCha8Rng) -> GridSpec {
    let dims = Dims::new(r.random_range(4..=16), r.random_range(4..=16), r.random_range(4..=16));
    let spacing = [r.random_range(0.5..2.0), r.random_range(0.5..2.0), r.random_range(0.5..2.0)];
    let origin = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)];
    GridSpec::new(dims, spacing, origin).unwrap()
}

/// Points scattered in a shell around a mesh's bounding box.
pub fn points_near(r: &mut ChaCha8Rng, mesh: &TriMesh, n: usize) -> Vec<Point3> {
    let (lo, hi) = mesh.bounds();
    let pad = (hi - lo) * 0.3;
    (0..n).map(|_| Point3::from_fn(|a, _| r.random_range(lo[a] - pad[a]..hi[a] + pad[a]))).collect()
}

/// Volume of the symmetric difference between a rasterized label and the
/// analytic ball. Voxels farther than half a diagonal from the sphere are
/// exactly in or out; the rest are estimated with `sub^3` sub-samples.
pub fn ball_symmetric_difference(r: &VoxelGrid<u8>, center: Point3, radius: f64, sub: usize) -> f64 {
    let h = r.spacing();
    let half = 0.5 * (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
    let cell = h[0] * h[1] * h[2];
    let [d, hh, w] = r.dims().as_array();
    let mut err = 0.0;
    for i in 0..d {
        for j in 0..hh {
            for k in 0..w {
                let p = r.voxel_center(i, j, k);
                let dist = (p - center).norm() - radius;
                let frac = if dist > half {
                    0.0
                } else if dist < -half {
                    1.0
                } else {
                    let mut inside = 0usize;
                    for a in 0..sub {
                        for b in 0..sub {
                            for c in 0..sub {
                                let o = [a, b, c].map(|t| (t as f64 + 0.5) / sub as f64 - 0.5);
                                let q = p + Point3::new(o[0] * h[0], o[1] * h[1], o[2] * h[2]);
                                inside += ((q - center).norm() <= radius) as usize;
                            }
                        }
                    }
                    inside as f64 / (sub * sub * sub) as f64
                };
                err += if r.get(i, j, k) != 0 { 1.0 - frac } else { frac } * cell;
            }
        }
    }
    err
}

/// Contour of a 2D mask: foreground with a 4-neighbour that is background or off-grid.
pub fn contour_2d_oracle(rows: usize, cols: usize, m: &[u8]) -> Vec<u8> {
    let get = |r: isize, c: isize| -> u8 {
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            0
        } else {
            m[r as usize * cols + c as usize]
        }
    };
    let mut out = vec![0u8; rows * cols];
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            if get(r, c) != 0 {
                let interior = get(r - 1, c) != 0 && get(r + 1, c) != 0 && get(r, c - 1) != 0 && get(r, c + 1) != 0;
                out[r as usize * cols + c as usize] = (!interior) as u8;
            }
        }
    }
    out
}

/// Central difference of `f` at `x[i]`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}
