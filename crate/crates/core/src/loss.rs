//! Template cross-entropy, boundary-weighted reconstruction error and
//! their combination `total = l_ce + lambda * l_mse`.
//!
//! Losses are sums over voxels, not means. Reductions use a fixed pairwise
//! tree over the row-major voxel order, so results do not depend on
//! thread count.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::grid::{BinaryGrid, Voxel, VoxelGrid, WeightMap};

/// Probability clamp applied before logarithms.
pub const CE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ce: f64,
    pub l_mse: f64,
    pub lambda: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(l_ce: f64, l_mse: f64, lambda: f64) -> Self {
        LossBreakdown { l_ce, l_mse, lambda, total: l_ce + lambda * l_mse }
    }
}

/// Sum with a fixed pairwise tree (blocks of 64 summed left to right).
/// Large halves are summed on separate threads; the tree shape, and so the
/// result, does not change.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    const PAR_MIN: usize = 1 << 15;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    if xs.len() >= PAR_MIN {
        let (a, b) = rayon::join(|| pairwise_sum(&xs[..mid]), || pairwise_sum(&xs[mid..]));
        return a + b;
    }
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(CE_EPS, 1.0 - CE_EPS)
}

/// Per-voxel two-class cross-entropy term.
#[inline]
pub fn ce_term(y: f64, p: f64) -> f64 {
    let p = clamp_prob(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `d ce_term / d p`; zero where the clamp is active.
#[inline]
pub fn ce_term_grad(y: f64, p: f64) -> f64 {
    if p < CE_EPS || p > 1.0 - CE_EPS {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

fn check_pair<T: Voxel>(y: &BinaryGrid, yhat: &VoxelGrid<T>) -> Result<()> {
    y.ensure_same_dims(yhat)?;
    y.ensure_binary("template Y")?;
    if !yhat.is_probability() {
        return Err(Error::Format("prediction holds values outside [0, 1]".into()));
    }
    Ok(())
}

/// `-sum[ y ln p + (1 - y) ln(1 - p) ]` with `p` clamped to `[eps, 1 - eps]`.
pub fn cross_entropy<T: Voxel>(y: &BinaryGrid, yhat: &VoxelGrid<T>) -> Result<f64> {
    check_pair(y, yhat)?;
    let terms: Vec<f64> =
        y.data().iter().zip(yhat.data()).map(|(&t, &p)| ce_term(t as f64, p.to_f64())).collect();
    Ok(pairwise_sum(&terms))
}

/// Foreground-only form `-sum y ln p`. Minimized by `p = 1` everywhere, so it
/// is kept for comparison only; the optimizer uses [`cross_entropy`].
pub fn literal_cross_entropy<T: Voxel>(y: &BinaryGrid, yhat: &VoxelGrid<T>) -> Result<f64> {
    check_pair(y, yhat)?;
    let terms: Vec<f64> = y
        .data()
        .iter()
        .zip(yhat.data())
        .map(|(&t, &p)| -(t as f64) * clamp_prob(p.to_f64()).ln())
        .collect();
    Ok(pairwise_sum(&terms))
}

/// `sum W (X - Xhat)^2`.
pub fn weighted_mse<A: Voxel, B: Voxel>(x: &VoxelGrid<A>, xhat: &VoxelGrid<B>, w: &WeightMap) -> Result<f64> {
    x.ensure_same_dims(xhat)?;
    x.ensure_same_dims(&w.grid)?;
    let terms: Vec<f64> = x
        .data()
        .iter()
        .zip(xhat.data())
        .zip(w.grid.data())
        .map(|((&a, &b), &wv)| {
            let r = a.to_f64() - b.to_f64();
            wv as f64 * r * r
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

pub fn total_loss<P: Voxel, A: Voxel, B: Voxel>(
    y: &BinaryGrid,
    yhat: &VoxelGrid<P>,
    x: &VoxelGrid<A>,
    xhat: &VoxelGrid<B>,
    w: &WeightMap,
    lambda: f64,
) -> Result<LossBreakdown> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(param_err!("lambda must be a finite value >= 0, got {lambda}"));
    }
    y.ensure_same_dims(x)?;
    let l_ce = cross_entropy(y, yhat)?;
    let l_mse = weighted_mse(x, xhat, w)?;
    Ok(LossBreakdown::combine(l_ce, l_mse, lambda))
}

/// `d l_ce / d Yhat` per voxel.
pub fn grad_cross_entropy<T: Voxel>(y: &BinaryGrid, yhat: &VoxelGrid<T>) -> Result<VoxelGrid<f32>> {
    check_pair(y, yhat)?;
    let data = y.data().iter().zip(yhat.data()).map(|(&t, &p)| ce_term_grad(t as f64, p.to_f64()) as f32).collect();
    VoxelGrid::new(*y.spec(), data)
}

/// `d l_mse / d Xhat = 2 W (Xhat - X)` per voxel.
pub fn grad_weighted_mse<A: Voxel, B: Voxel>(
    x: &VoxelGrid<A>,
    xhat: &VoxelGrid<B>,
    w: &WeightMap,
) -> Result<VoxelGrid<f64>> {
    x.ensure_same_dims(xhat)?;
    x.ensure_same_dims(&w.grid)?;
    let data = x
        .data()
        .iter()
        .zip(xhat.data())
        .zip(w.grid.data())
        .map(|((&a, &b), &wv)| 2.0 * wv as f64 * (b.to_f64() - a.to_f64()))
        .collect();
    VoxelGrid::new(*x.spec(), data)
}
