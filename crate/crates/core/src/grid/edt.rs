//! Exact squared Euclidean distance transform.
//!
//! Separable lower-envelope-of-parabolas method applied once per axis.
//! All arithmetic is integer, including envelope breakpoints, which are
//! compared as exact rationals, so the output equals a brute-force search.

use rayon::prelude::*;

use super::{BinaryGrid, Dims, VoxelGrid};
use crate::error::{Error, Result};

const INF: u64 = u64::MAX;

/// Distance (voxel units) from every voxel centre to the nearest foreground voxel centre.
pub fn edt(binary: &BinaryGrid) -> Result<VoxelGrid<f32>> {
    let sq = edt_squared(binary)?;
    Ok(sq.map(|d| (d as f64).sqrt() as f32))
}

/// Squared integer distance to the nearest foreground voxel.
pub fn edt_squared(binary: &BinaryGrid) -> Result<VoxelGrid<u64>> {
    if binary.count_foreground() == 0 {
        return Err(Error::Empty("distance transform of an empty mask is undefined".into()));
    }
    let dims = binary.dims();
    let mut f: Vec<u64> = binary.data().iter().map(|&v| if v != 0 { 0 } else { INF }).collect();
    for axis in (0..3).rev() {
        transform_axis(&mut f, dims, axis);
    }
    VoxelGrid::new(*binary.spec(), f)
}

fn transform_axis(f: &mut [u64], dims: Dims, axis: usize) {
    let [d, h, w] = dims.as_array();
    let n = dims.axis_len(axis);
    let stride = match axis {
        0 => h * w,
        1 => w,
        _ => 1,
    };
    // line starts: every index whose coordinate along `axis` is zero
    let starts: Vec<usize> = match axis {
        0 => (0..h * w).collect(),
        1 => (0..d).flat_map(|i| (0..w).map(move |k| i * h * w + k)).collect(),
        _ => (0..d * h).map(|r| r * w).collect(),
    };
    let src: &[u64] = f;
    let lines: Vec<Vec<u64>> = starts
        .par_iter()
        .map_init(
            || (vec![0u64; n], vec![0usize; n], vec![(0i64, 1i64); n + 1]),
            |(line, v, z), &s| {
                for (q, slot) in line.iter_mut().enumerate() {
                    *slot = src[s + q * stride];
                }
                let mut out = vec![0u64; n];
                envelope_1d(line, &mut out, v, z);
                out
            },
        )
        .collect();
    for (s, out) in starts.iter().zip(lines) {
        for (q, val) in out.into_iter().enumerate() {
            f[s + q * stride] = val;
        }
    }
}

/// Breakpoint between parabolas rooted at `q` and `p` (`q > p`), as `num / den`.
#[inline]
fn intersection(f: &[u64], q: usize, p: usize) -> (i64, i64) {
    let (qi, pi) = (q as i64, p as i64);
    let num = (f[q] as i64 + qi * qi) - (f[p] as i64 + pi * pi);
    (num, 2 * (qi - pi))
}

/// `a <= b` for rationals with positive denominators.
#[inline]
fn le(a: (i64, i64), b: (i64, i64)) -> bool {
    (a.0 as i128) * (b.1 as i128) <= (b.0 as i128) * (a.1 as i128)
}

fn envelope_1d(f: &[u64], out: &mut [u64], v: &mut [usize], z: &mut [(i64, i64)]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if f[q] == INF {
            continue;
        }
        if k < 0 {
            k = 0;
            v[0] = q;
            continue;
        }
        loop {
            let s = intersection(f, q, v[k as usize]);
            if k > 0 && le(s, z[k as usize]) {
                k -= 1;
            } else {
                k += 1;
                v[k as usize] = q;
                z[k as usize] = s;
                break;
            }
        }
    }
    if k < 0 {
        out.fill(INF);
        return;
    }
    let last = k as usize;
    let mut j = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        // advance while breakpoint z[j+1] < q
        while j < last && !le((q as i64, 1), z[j + 1]) {
            j += 1;
        }
        let p = v[j];
        let dq = q as i64 - p as i64;
        *o = f[p] + (dq * dq) as u64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn single(d: Dims, at: [usize; 3]) -> BinaryGrid {
        let mut g = VoxelGrid::from_spec(GridSpec::unit(d), 0u8);
        g.set(at[0], at[1], at[2], 1);
        g
    }

    #[test]
    fn axis_and_diagonal_distance() {
        let g = single(Dims::cube(4), [0, 0, 0]);
        let e = edt(&g).unwrap();
        assert_eq!(e.get(0, 0, 3), 3.0);
        assert_eq!(e.get(1, 1, 1), 3f32.sqrt());
        assert_eq!(e.get(0, 0, 0), 0.0);
    }

    #[test]
    fn empty_mask_is_error() {
        let g = VoxelGrid::from_spec(GridSpec::unit(Dims::cube(3)), 0u8);
        assert!(matches!(edt(&g), Err(Error::Empty(_))));
    }

    #[test]
    fn one_dimensional_envelope() {
        let f = [INF, 0, INF, INF, INF, 4, INF];
        let mut out = [0u64; 7];
        let mut v = [0usize; 7];
        let mut z = [(0i64, 1i64); 8];
        envelope_1d(&f, &mut out, &mut v, &mut z);
        // brute force: min over sources (1, f=0) and (5, f=4)
        for q in 0..7i64 {
            let want = ((q - 1) * (q - 1)).min(4 + (q - 5) * (q - 5)) as u64;
            assert_eq!(out[q as usize], want, "q={q}");
        }
    }
}
