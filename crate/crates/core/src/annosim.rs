//! Annotator simulation: point sets drawn from a ground-truth surface under
//! the (N, P, K) protocol, full-slice contour annotation as the baseline,
//! and effort accounting for both.
//!
//! * N points per sample.
//! * P spread trials: the N-subset with the largest intra-point variance wins.
//! * K skill trials: each trial's best-spread set deforms the template, and
//!   the set whose rasterized result has the highest IoU with the ground
//!   truth wins.

use std::collections::HashSet;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asm::{AsmSolver, DeformParams, DeformReport};
use crate::error::{param_err, Error, Result};
use crate::grid::{iou, BinaryGrid, Dims, VoxelGrid};
use crate::mesh::TriMesh;
use crate::voxelize::rasterize;
use crate::{rng, Point3};

const SPREAD_STREAM: u64 = 0x5350_5244;
const SKILL_STREAM: u64 = 0x534b_494c;
const SLICE_STREAM: u64 = 0x534c_4943;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Interactive,
    Simulated,
    SliceDerived,
}

/// A set of distinct 3D points (mm) on one sample's target surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnnotationJson", into = "AnnotationJson")]
pub struct AnnotationSet {
    pub sample_id: String,
    pub source: Source,
    pub seed: Option<u64>,
    points: Vec<Point3>,
}

#[derive(Serialize, Deserialize)]
struct AnnotationJson {
    sample_id: String,
    source: Source,
    seed: Option<u64>,
    points: Vec<[f64; 3]>,
}

impl TryFrom<AnnotationJson> for AnnotationSet {
    type Error = Error;
    fn try_from(j: AnnotationJson) -> Result<Self> {
        AnnotationSet::new(j.sample_id, j.source, j.seed, j.points.into_iter().map(Point3::from).collect())
    }
}

impl From<AnnotationSet> for AnnotationJson {
    fn from(a: AnnotationSet) -> Self {
        AnnotationJson {
            sample_id: a.sample_id,
            source: a.source,
            seed: a.seed,
            points: a.points.iter().map(|p| [p[0], p[1], p[2]]).collect(),
        }
    }
}

/// Bit pattern used for exact-duplicate detection; `-0.0` and `0.0` coincide.
fn point_key(p: &Point3) -> [u64; 3] {
    std::array::from_fn(|a| if p[a] == 0.0 { 0 } else { p[a].to_bits() })
}

impl AnnotationSet {
    pub fn new(sample_id: impl Into<String>, source: Source, seed: Option<u64>, points: Vec<Point3>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(param_err!("annotation point {:?} is not finite", [p[0], p[1], p[2]]));
            }
            if !seen.insert(point_key(p)) {
                return Err(param_err!("duplicate annotation point {:?}", [p[0], p[1], p[2]]));
            }
        }
        Ok(AnnotationSet { sample_id: sample_id.into(), source, seed, points })
    }

    pub fn empty(sample_id: impl Into<String>, source: Source) -> Self {
        AnnotationSet { sample_id: sample_id.into(), source, seed: None, points: Vec::new() }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let k = point_key(p);
        self.points.iter().any(|q| point_key(q) == k)
    }

    pub fn push(&mut self, p: Point3) -> Result<()> {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(param_err!("annotation point {:?} is not finite", [p[0], p[1], p[2]]));
        }
        if self.contains(&p) {
            return Err(param_err!("duplicate annotation point {:?}", [p[0], p[1], p[2]]));
        }
        self.points.push(p);
        Ok(())
    }

    pub fn remove(&mut self, index: usize) -> Option<Point3> {
        (index < self.points.len()).then(|| self.points.remove(index))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Simulation knobs: `n` points per sample, `p` spread trials, `k` skill trials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimParams {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub seed: u64,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(param_err!("N must be at least 4, got {}", self.n));
        }
        if self.p == 0 || self.k == 0 {
            return Err(param_err!("P and K must be at least 1, got P={} K={}", self.p, self.k));
        }
        Ok(())
    }
}

/// Trace of the sample covariance (sum of per-axis variances, `n - 1` denominator).
pub fn intra_point_variance(points: &[Point3]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mean = points.iter().fold(Point3::zeros(), |a, p| a + p) / n as f64;
    points.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / (n - 1) as f64
}

/// Seed of spread trial `t` under `seed`.
pub fn spread_trial_seed(seed: u64, t: usize) -> u64 {
    rng::derive(seed, &[SPREAD_STREAM, t as u64])
}

/// Seed handed to `sample_spread` by skill trial `k` under `seed`.
pub fn skill_trial_seed(seed: u64, k: usize) -> u64 {
    rng::derive(seed, &[SKILL_STREAM, k as u64])
}

/// Indices of `p` uniform `n`-subsets of `0..len` (each sorted), one per trial.
fn spread_candidates(len: usize, n: usize, p: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..p)
        .map(|t| {
            let mut r = rng::stream(spread_trial_seed(seed, t), &[]);
            let mut idx = index::sample(&mut r, len, n).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Best of `p` uniform `n`-subsets of `surface` by intra-point variance.
/// Ties go to the earliest trial. Points keep the surface order.
pub fn sample_spread(surface: &[Point3], n: usize, p: usize, seed: u64) -> Result<AnnotationSet> {
    if n == 0 || n > surface.len() {
        return Err(param_err!("cannot draw N={n} points from a surface of {}", surface.len()));
    }
    if p == 0 {
        return Err(param_err!("P must be at least 1"));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for idx in spread_candidates(surface.len(), n, p, seed) {
        let pts: Vec<Point3> = idx.iter().map(|&i| surface[i]).collect();
        let v = intra_point_variance(&pts);
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, idx));
        }
    }
    let (_, idx) = best.expect("p >= 1");
    AnnotationSet::new("spread", Source::Simulated, Some(seed), idx.iter().map(|&i| surface[i]).collect())
}

/// One skill trial as logged by [`sample_skilled`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillCandidate {
    pub trial: usize,
    pub variance: f64,
    pub iou: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkilledSample {
    pub annotation: AnnotationSet,
    pub mesh: TriMesh,
    pub raster: BinaryGrid,
    pub report: DeformReport,
    pub iou: f64,
    pub candidates: Vec<SkillCandidate>,
}

/// Run `k` spread draws, deform `template` with each, rasterize onto the
/// ground-truth grid and keep the highest-IoU result (lowest trial on ties).
/// Trials run in parallel; trial `t` uses [`skill_trial_seed`]`(seed, t)`.
pub fn sample_skilled(
    gt_surface: &[Point3],
    template: &TriMesh,
    gt_grid: &BinaryGrid,
    params: &SimParams,
    deform_params: &DeformParams,
) -> Result<SkilledSample> {
    params.validate()?;
    let solver = AsmSolver::new(template, *deform_params)?;
    let trials: Vec<Result<(AnnotationSet, TriMesh, DeformReport, BinaryGrid, f64)>> = (0..params.k)
        .into_par_iter()
        .map(|t| {
            let ann = sample_spread(gt_surface, params.n, params.p, skill_trial_seed(params.seed, t))?;
            let (mesh, report) = solver.deform(ann.points())?;
            let raster = rasterize(&mesh, gt_grid.spec())?;
            let score = iou(&raster, gt_grid)?;
            Ok((ann, mesh, report, raster, score))
        })
        .collect();
    let mut candidates = Vec::with_capacity(params.k);
    let mut best: Option<(AnnotationSet, TriMesh, DeformReport, BinaryGrid, f64)> = None;
    for (t, r) in trials.into_iter().enumerate() {
        let (ann, mesh, report, raster, score) = r?;
        candidates.push(SkillCandidate {
            trial: t,
            variance: intra_point_variance(ann.points()),
            iou: score,
            iterations: report.iterations_used,
        });
        if best.as_ref().is_none_or(|b| score > b.4) {
            best = Some((ann, mesh, report, raster, score));
        }
    }
    let (mut annotation, mesh, report, raster, score) = best.expect("k >= 1");
    annotation.seed = Some(params.seed);
    Ok(SkilledSample { annotation, mesh, raster, report, iou: score, candidates })
}

/// Chosen slices of one sample and the contour length they cost.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceAnnotation {
    pub sample_id: String,
    pub source: Source,
    pub seed: Option<u64>,
    /// `(axis, index)` pairs, sorted.
    pub slices: Vec<(usize, usize)>,
    pub contour_point_count: usize,
}

impl SliceAnnotation {
    /// Voxels lying on any chosen slice.
    pub fn coverage(&self, dims: Dims) -> BinaryGrid {
        let spec = crate::grid::GridSpec::unit(dims);
        VoxelGrid::from_fn(spec, |i, j, k| {
            let c = [i, j, k];
            self.slices.iter().any(|&(a, idx)| c[a] == idx) as u8
        })
    }
}

/// `(row, col)` extents of a slice taken perpendicular to `axis`.
fn slice_shape(d: Dims, axis: usize) -> (usize, usize) {
    match axis {
        0 => (d.height, d.width),
        1 => (d.depth, d.width),
        _ => (d.depth, d.height),
    }
}

fn slice_index(d: Dims, axis: usize, index: usize, r: usize, c: usize) -> usize {
    match axis {
        0 => d.index(index, r, c),
        1 => d.index(r, index, c),
        _ => d.index(r, c, index),
    }
}

/// 2D slice of a grid as a row-major `(rows, cols, values)` triple.
pub fn extract_slice<T: crate::grid::Voxel>(g: &VoxelGrid<T>, axis: usize, index: usize) -> Result<(usize, usize, Vec<T>)> {
    let d = g.dims();
    if axis > 2 {
        return Err(param_err!("axis must be 0, 1 or 2, got {axis}"));
    }
    if index >= d.axis_len(axis) {
        return Err(param_err!("slice index {index} out of range for axis {axis} (len {})", d.axis_len(axis)));
    }
    let (rows, cols) = slice_shape(d, axis);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(g.data()[slice_index(d, axis, index, r, c)]);
        }
    }
    Ok((rows, cols, out))
}

/// Foreground pixels of a 2D mask with a 4-connected background or out-of-slice neighbour.
pub fn boundary_2d(rows: usize, cols: usize, mask: &[u8]) -> Vec<u8> {
    let at = |r: isize, c: isize| -> bool {
        r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols && mask[r as usize * cols + c as usize] != 0
    };
    let mut out = vec![0u8; mask.len()];
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            if at(r, c) && !(at(r - 1, c) && at(r + 1, c) && at(r, c - 1) && at(r, c + 1)) {
                out[r as usize * cols + c as usize] = 1;
            }
        }
    }
    out
}

pub fn slice_contour_count(g: &BinaryGrid, axis: usize, index: usize) -> Result<usize> {
    let (rows, cols, m) = extract_slice(g, axis, index)?;
    Ok(boundary_2d(rows, cols, &m).iter().filter(|&&v| v != 0).count())
}

/// Every `(axis, index)` whose slice holds foreground, sorted.
pub fn qualifying_slices(g: &BinaryGrid) -> Vec<(usize, usize)> {
    let d = g.dims();
    let mut hit = [vec![false; d.depth], vec![false; d.height], vec![false; d.width]];
    for idx in g.foreground_indices() {
        let c = d.coords(idx);
        for a in 0..3 {
            hit[a][c[a]] = true;
        }
    }
    (0..3).flat_map(|a| hit[a].iter().enumerate().filter(|(_, &h)| h).map(move |(i, _)| (a, i)).collect::<Vec<_>>()).collect()
}

/// Uniform draw without replacement of `num_slices` foreground-intersecting
/// slices pooled over all three axes.
pub fn baseline_slices(gt_grid: &BinaryGrid, num_slices: usize, seed: u64) -> Result<SliceAnnotation> {
    gt_grid.ensure_binary("baseline_slices ground truth")?;
    if num_slices == 0 {
        return Err(param_err!("num_slices must be at least 1"));
    }
    let pool = qualifying_slices(gt_grid);
    if pool.len() < num_slices {
        return Err(param_err!("requested {num_slices} slices but only {} intersect the foreground", pool.len()));
    }
    let mut r = rng::stream(seed, &[SLICE_STREAM]);
    let mut slices: Vec<(usize, usize)> = index::sample(&mut r, pool.len(), num_slices).into_iter().map(|i| pool[i]).collect();
    slices.sort_unstable();
    let mut count = 0;
    for &(a, i) in &slices {
        count += slice_contour_count(gt_grid, a, i)?;
    }
    Ok(SliceAnnotation {
        sample_id: "slices".into(),
        source: Source::SliceDerived,
        seed: Some(seed),
        slices,
        contour_point_count: count,
    })
}

/// Annotation effort: points supplied, or contour pixels traced.
pub trait Effort {
    fn effort(&self) -> usize;
}

impl Effort for AnnotationSet {
    fn effort(&self) -> usize {
        self.len()
    }
}

impl Effort for SliceAnnotation {
    fn effort(&self) -> usize {
        self.contour_point_count
    }
}

pub fn effort(a: &impl Effort) -> usize {
    a.effort()
}
