use super::{validate, TriMesh};
use crate::error::{Error, Result};

/// Square sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    pub symmetric: bool,
}

impl SparseOperator {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(u32, u32, f64)>, symmetric: bool) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r as usize + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseOperator { n, row_ptr, cols, vals, symmetric }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().zip(&self.vals[r]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply(x, &mut y);
        y
    }

    /// Diagonal of `A^T A` (equals `A^2` for symmetric `A`): squared column norms.
    pub fn gram_diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                d[c] += v * v;
            }
        }
        d
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (i, row) in m.iter_mut().enumerate() {
            for (c, v) in self.row(i) {
                row[c] = v;
            }
        }
        m
    }
}

/// Umbrella operator: `L[i][i] = degree(i)`, `L[i][j] = -1` per edge.
pub fn uniform_laplacian(mesh: &TriMesh) -> Result<SparseOperator> {
    let report = validate(mesh);
    if !report.watertight || !report.bad_indices.is_empty() {
        return Err(Error::Validity(format!(
            "laplacian needs a closed manifold: {} boundary, {} non-manifold edges",
            report.boundary_edges, report.nonmanifold_edges
        )));
    }
    let n = mesh.vertex_count();
    let edges = mesh.edges();
    let mut trip = Vec::with_capacity(edges.len() * 2 + n);
    let mut degree = vec![0u32; n];
    for &(a, b) in &edges {
        trip.push((a, b, -1.0));
        trip.push((b, a, -1.0));
        degree[a as usize] += 1;
        degree[b as usize] += 1;
    }
    trip.extend(degree.iter().enumerate().map(|(i, &d)| (i as u32, i as u32, d as f64)));
    Ok(SparseOperator::from_triplets(n, trip, true))
}
