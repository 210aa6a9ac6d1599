//! Solid rasterization of closed meshes and surface point extraction.
//!
//! A voxel is foreground iff its centre lies inside the mesh, decided by
//! the parity of ray crossings. The query point is the voxel centre plus a
//! fixed offset of `(1e-7, 2e-7, 3e-7)` voxels; shared edges are resolved
//! by a canonical orientation rule so each crossing counts exactly once.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{boundary_mask, BinaryGrid, VoxelGrid};
use crate::mesh::{validate, TriMesh};
use crate::Point3;

pub use crate::grid::GridSpec;

/// Ray-origin offset in voxel units, `(z, y, x)`.
pub const RAY_JITTER: [f64; 3] = [1e-7, 2e-7, 3e-7];

/// Rasterize along +x, the default ray direction.
pub fn rasterize(mesh: &TriMesh, spec: &GridSpec) -> Result<BinaryGrid> {
    rasterize_along(mesh, spec, 2)
}

/// Rasterize casting parity rays along grid axis `axis` (0 = z, 1 = y, 2 = x).
pub fn rasterize_along(mesh: &TriMesh, spec: &GridSpec, axis: usize) -> Result<BinaryGrid> {
    spec.validate()?;
    if axis > 2 {
        return Err(Error::Parameter(format!("ray axis must be 0, 1 or 2, got {axis}")));
    }
    let report = validate(mesh);
    if !report.watertight || !report.bad_indices.is_empty() {
        return Err(Error::Validity(format!(
            "rasterize needs a watertight mesh ({} boundary, {} non-manifold edges)",
            report.boundary_edges, report.nonmanifold_edges
        )));
    }
    let dims = spec.dims;
    let (b, c) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let nb = dims.axis_len(b);
    let nc = dims.axis_len(c);
    let na = dims.axis_len(axis);

    let verts: Vec<Point3> = mesh.vertices.iter().map(|v| spec.to_voxel_coords(v)).collect();
    // bin faces by the ray lines their projection can touch
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); nb * nc];
    for (f, tri) in mesh.faces.iter().enumerate() {
        let p = tri.map(|i| verts[i as usize]);
        let (blo, bhi) = line_range(p.iter().map(|v| v[b]), RAY_JITTER[b], nb);
        let (clo, chi) = line_range(p.iter().map(|v| v[c]), RAY_JITTER[c], nc);
        for ib in blo..bhi {
            for ic in clo..chi {
                bins[ib * nc + ic].push(f as u32);
            }
        }
    }

    let lines: Vec<Vec<bool>> = (0..nb * nc)
        .into_par_iter()
        .map(|line| {
            let (ib, ic) = (line / nc, line % nc);
            let qb = ib as f64 + 0.5 + RAY_JITTER[b];
            let qc = ic as f64 + 0.5 + RAY_JITTER[c];
            let mut hits: Vec<f64> = bins[line]
                .iter()
                .filter_map(|&f| crossing(mesh.faces[f as usize], &verts, axis, b, c, qb, qc))
                .collect();
            hits.sort_by(f64::total_cmp);
            let mut inside = vec![false; na];
            let mut h = 0usize;
            for (ia, slot) in inside.iter_mut().enumerate() {
                let qa = ia as f64 + 0.5 + RAY_JITTER[axis];
                while h < hits.len() && hits[h] <= qa {
                    h += 1;
                }
                // crossings strictly ahead of the query point along +axis
                *slot = (hits.len() - h) % 2 == 1;
            }
            inside
        })
        .collect();

    let mut out = VoxelGrid::from_spec(*spec, 0u8);
    for (line, inside) in lines.into_iter().enumerate() {
        let (ib, ic) = (line / nc, line % nc);
        for (ia, v) in inside.into_iter().enumerate() {
            if v {
                let mut idx = [0usize; 3];
                idx[axis] = ia;
                idx[b] = ib;
                idx[c] = ic;
                out.set(idx[0], idx[1], idx[2], 1);
            }
        }
    }
    Ok(out)
}

/// Index range of ray lines whose jittered centres fall within `[min, max]`.
fn line_range(vals: impl Iterator<Item = f64>, jitter: f64, n: usize) -> (usize, usize) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let first = (lo - 0.5 - jitter).ceil().max(0.0);
    let last = (hi - 0.5 - jitter).floor().min(n as f64 - 1.0);
    if !(first.is_finite() && last.is_finite()) || last < first {
        return (0, 0);
    }
    (first as usize, last as usize + 1)
}

#[inline]
fn orient(pb: f64, pc: f64, qb: f64, qc: f64, xb: f64, xc: f64) -> f64 {
    (qb - pb) * (xc - pc) - (qc - pc) * (xb - pb)
}

/// Ray parameter (axis coordinate) where the line through `(qb, qc)` crosses the face.
fn crossing(face: [u32; 3], verts: &[Point3], axis: usize, b: usize, c: usize, qb: f64, qc: f64) -> Option<f64> {
    let p = face.map(|i| verts[i as usize]);
    let area = orient(p[0][b], p[0][c], p[1][b], p[1][c], p[2][b], p[2][c]);
    if area == 0.0 {
        return None;
    }
    let sigma = area.signum();
    let mut w = [0.0f64; 3];
    for e in 0..3 {
        let (u, v) = (e, (e + 1) % 3);
        let (iu, iv) = (face[u], face[v]);
        // canonical direction so a shared edge yields exactly negated values
        let (lo, hi, dir) = if iu < iv { (u, v, 1.0) } else { (v, u, -1.0) };
        let val = dir * orient(p[lo][b], p[lo][c], p[hi][b], p[hi][c], qb, qc);
        let s = sigma * val;
        if s < 0.0 || (s == 0.0 && sigma * dir < 0.0) {
            return None;
        }
        // edge u->v weights the opposite vertex
        w[(e + 2) % 3] = val;
    }
    let sum = w[0] + w[1] + w[2];
    if sum == 0.0 {
        return None;
    }
    Some((w[0] * p[0][axis] + w[1] * p[1][axis] + w[2] * p[2][axis]) / sum)
}

/// Centres of the boundary voxels of a mask.
///
/// With `spacing_aware` the points are physical (origin + spacing); otherwise
/// they are in voxel units with unit spacing and zero origin.
pub fn surface_points(binary: &BinaryGrid, spacing_aware: bool) -> Result<Vec<Point3>> {
    if binary.count_foreground() == 0 {
        return Err(Error::Empty("surface_points on an empty mask".into()));
    }
    let surf = boundary_mask(binary);
    let dims = binary.dims();
    let unit = GridSpec::unit(dims);
    let spec = if spacing_aware { binary.spec() } else { &unit };
    Ok(surf
        .foreground_indices()
        .map(|idx| {
            let [i, j, k] = dims.coords(idx);
            spec.voxel_center(i, j, k)
        })
        .collect())
}
