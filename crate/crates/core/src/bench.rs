//! Quality-versus-effort benchmark over synthetic phantom families.
//!
//! A grid cell is `(level, samples)`: `level` is N points per sample for the
//! points method and the number of traced slices for the slices method.
//! For every cell, phantom and seed, `samples` phantom instances are
//! annotated, turned into supervision, segmented with [`varseg`] and scored
//! against their truth; the row reports the mean IoU over those instances.
//! Each instance is segmented on its own, so `samples` sets the size of the
//! averaging pool, not a training set.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annosim::{baseline_slices, effort, sample_skilled, SimParams};
use crate::asm::{initial_template, DeformParams};
use crate::error::{param_err, Error, Result};
use crate::grid::{iou, weight_map, BinaryGrid, Dims, GridSpec, VoxelGrid, WeightParams};
use crate::rng;
use crate::varseg::{make_phantom, optimize, optimize_masked, PhantomSpec, TemplateOffset, VarSegConfig};
use crate::voxelize::surface_points;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Points,
    Slices,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Points => "points",
            Method::Slices => "slices",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "points" => Ok(Method::Points),
            "slices" => Ok(Method::Slices),
            _ => Err(param_err!("unknown method {s:?}; expected points or slices")),
        }
    }
}

/// Number of phantom families: 5 shapes times 3 noise levels.
pub const FAMILY_COUNT: usize = 15;
const FAMILY_AXES: [[f64; 3]; 5] =
    [[20.0, 16.0, 12.0], [22.0, 15.0, 11.0], [17.0, 17.0, 13.0], [19.0, 14.0, 14.0], [21.0, 18.0, 12.0]];
const FAMILY_SIGMA: [f64; 3] = [0.02, 0.05, 0.1];

/// Phantom family `id` on a `size`-voxel cube; geometry scales with `size / 64`.
pub fn phantom_family(id: usize, size: usize) -> Result<PhantomSpec> {
    if id >= FAMILY_COUNT {
        return Err(param_err!("phantom id {id} out of range 0..{FAMILY_COUNT}"));
    }
    if size < 16 {
        return Err(param_err!("phantom grid must be at least 16 voxels, got {size}"));
    }
    let s = size as f64 / 64.0;
    let spec = PhantomSpec {
        grid: GridSpec::unit(Dims::cube(size)),
        center: [size as f64 / 2.0; 3],
        semi_axes: FAMILY_AXES[id / 3].map(|a| a * s),
        template: TemplateOffset { axis: 0, amount: 2.0 * s, one_sided: true },
        sigma: FAMILY_SIGMA[id % 3],
        ..PhantomSpec::default()
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub level: usize,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub method: Method,
    pub phantom_ids: Vec<usize>,
    pub grid_size: usize,
    pub cells: Vec<Cell>,
    pub seeds: Vec<u64>,
    /// Spread and skill trials for the points method.
    pub p: usize,
    pub k: usize,
    pub subdivisions: u32,
    pub deform: DeformParams,
    pub varseg: VarSegConfig,
    pub weights: WeightParams,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// Fill `wall_ms` with measured time. Off by default so that reruns
    /// produce identical output.
    pub record_timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            method: Method::Points,
            phantom_ids: vec![1],
            grid_size: 64,
            cells: [10, 25, 50, 100].iter().map(|&n| Cell { level: n, samples: 1 }).collect(),
            seeds: vec![0, 1, 2],
            p: 10,
            k: 1,
            subdivisions: 4,
            deform: DeformParams::default(),
            varseg: VarSegConfig::default(),
            weights: WeightParams::default(),
            workers: 0,
            record_timing: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.len() < 3 {
            return Err(param_err!("a benchmark needs at least 3 seeds, got {}", self.seeds.len()));
        }
        if self.phantom_ids.is_empty() || self.cells.is_empty() {
            return Err(param_err!("phantom_ids and cells must be nonempty"));
        }
        if self.cells.iter().any(|c| c.level == 0 || c.samples == 0) {
            return Err(param_err!("cell level and samples must be positive"));
        }
        for &id in &self.phantom_ids {
            phantom_family(id, self.grid_size)?;
        }
        self.deform.validate()?;
        self.varseg.validate()?;
        self.weights.validate()
    }
}

/// One `(cell, phantom, seed)` measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub effort_per_sample: usize,
    pub samples: usize,
    pub level: usize,
    pub seed: u64,
    pub phantom_id: usize,
    pub iou: f64,
    pub final_loss: f64,
    pub wall_ms: u64,
    /// Set when the cell failed; `iou` and `final_loss` are then NaN.
    pub error: Option<String>,
}

/// Aggregate over seeds and phantoms for one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: Method,
    pub level: usize,
    pub effort_per_sample: usize,
    pub samples: usize,
    pub mean_iou: f64,
    pub std_iou: f64,
    pub min_iou: f64,
    pub max_iou: f64,
    pub seeds_used: usize,
    pub failures: usize,
}

struct Outcome {
    iou: f64,
    final_loss: f64,
    effort: usize,
}

fn run_sample(cfg: &BenchConfig, level: usize, phantom_id: usize, seed: u64, sample: usize) -> Result<Outcome> {
    let spec = phantom_family(phantom_id, cfg.grid_size)?;
    let ph = make_phantom(&spec, rng::derive(seed, &[phantom_id as u64, sample as u64]))?;
    let ann_seed = rng::derive(seed, &[phantom_id as u64, sample as u64, 1]);
    let (supervision, ce_mask, effort_spent): (BinaryGrid, Option<BinaryGrid>, usize) = match cfg.method {
        Method::Points => {
            let surface = surface_points(&ph.truth, true)?;
            let template = initial_template(&surface, cfg.subdivisions)?;
            let sim = SimParams { n: level, p: cfg.p, k: cfg.k, seed: ann_seed };
            let best = sample_skilled(&surface, &template, &ph.truth, &sim, &cfg.deform)?;
            (best.raster, None, effort(&best.annotation))
        }
        Method::Slices => {
            let ann = baseline_slices(&ph.truth, level, ann_seed)?;
            let cover = ann.coverage(ph.truth.dims());
            let y = VoxelGrid::new(
                *ph.truth.spec(),
                ph.truth.data().iter().zip(cover.data()).map(|(t, c)| t & c).collect(),
            )?;
            let cover = VoxelGrid::new(*ph.truth.spec(), cover.into_data())?;
            (y, Some(cover), effort(&ann))
        }
    };
    if supervision.count_foreground() == 0 {
        return Err(Error::Empty("supervision mask is empty".into()));
    }
    let w = weight_map(&supervision, cfg.weights)?;
    let seg = match &ce_mask {
        Some(m) => optimize_masked(&ph.image, &supervision, &w, Some(m), &cfg.varseg)?,
        None => optimize(&ph.image, &supervision, &w, &cfg.varseg)?,
    };
    let mask = seg.mask(cfg.varseg.gamma)?;
    Ok(Outcome { iou: iou(&mask, &ph.truth)?, final_loss: seg.final_loss.total, effort: effort_spent })
}

fn run_job(cfg: &BenchConfig, cell: Cell, phantom_id: usize, seed: u64) -> BenchRow {
    let start = Instant::now();
    let outcomes: Result<Vec<Outcome>> =
        (0..cell.samples).map(|s| run_sample(cfg, cell.level, phantom_id, seed, s)).collect();
    let wall_ms = if cfg.record_timing { start.elapsed().as_millis() as u64 } else { 0 };
    let mut row = BenchRow {
        method: cfg.method,
        effort_per_sample: 0,
        samples: cell.samples,
        level: cell.level,
        seed,
        phantom_id,
        iou: f64::NAN,
        final_loss: f64::NAN,
        wall_ms,
        error: None,
    };
    match outcomes {
        Ok(o) => {
            let n = o.len() as f64;
            row.iou = o.iter().map(|x| x.iou).sum::<f64>() / n;
            row.final_loss = o.iter().map(|x| x.final_loss).sum::<f64>() / n;
            row.effort_per_sample = (o.iter().map(|x| x.effort).sum::<usize>() as f64 / n).round() as usize;
        }
        Err(e) => {
            tracing::warn!(level = cell.level, phantom_id, seed, "bench cell failed: {e}");
            row.error = Some(e.to_string());
        }
    }
    row
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRun {
    pub rows: Vec<BenchRow>,
    pub records: Vec<BenchRecord>,
}

/// Run every `(cell, phantom, seed)` job. Rows come back sorted by
/// `(level, samples, phantom, seed)` whatever order the workers finish in.
pub fn run_grid(cfg: &BenchConfig) -> Result<BenchRun> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &cell in &cfg.cells {
        for &pid in &cfg.phantom_ids {
            for &seed in &cfg.seeds {
                jobs.push((cell, pid, seed));
            }
        }
    }
    let work = || -> Vec<BenchRow> { jobs.par_iter().map(|&(c, p, s)| run_job(cfg, c, p, s)).collect() };
    let mut rows = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| param_err!("cannot start {} workers: {e}", cfg.workers))?
            .install(work)
    } else {
        work()
    };
    rows.sort_by(|a, b| {
        (a.method, a.level, a.samples, a.phantom_id, a.seed).cmp(&(b.method, b.level, b.samples, b.phantom_id, b.seed))
    });
    let records = aggregate(&rows);
    Ok(BenchRun { rows, records })
}

/// Per-cell mean and sample standard deviation of IoU over successful rows.
pub fn aggregate(rows: &[BenchRow]) -> Vec<BenchRecord> {
    let mut keys: Vec<(Method, usize, usize)> = rows.iter().map(|r| (r.method, r.level, r.samples)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(method, level, samples)| {
            let group: Vec<&BenchRow> =
                rows.iter().filter(|r| r.method == method && r.level == level && r.samples == samples).collect();
            let ok: Vec<&BenchRow> = group.iter().copied().filter(|r| r.error.is_none()).collect();
            let ious: Vec<f64> = ok.iter().map(|r| r.iou).collect();
            let n = ious.len();
            let mean = if n > 0 { ious.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let std = if n > 1 {
                (ious.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let mut seeds: Vec<u64> = ok.iter().map(|r| r.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let effort = if n > 0 {
                (ok.iter().map(|r| r.effort_per_sample).sum::<usize>() as f64 / n as f64).round() as usize
            } else {
                0
            };
            BenchRecord {
                method,
                level,
                effort_per_sample: effort,
                samples,
                mean_iou: mean,
                std_iou: std,
                min_iou: ious.iter().copied().fold(f64::NAN, f64::min),
                max_iou: ious.iter().copied().fold(f64::NAN, f64::max),
                seeds_used: seeds.len(),
                failures: group.len() - n,
            }
        })
        .collect()
}

pub const CSV_HEADER: &str = "method,effort_per_sample,samples,seed,phantom_id,iou,final_loss,wall_ms";

/// Rows as CSV. Failed rows carry `NaN` in `iou` and `final_loss`.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method.as_str(),
            r.effort_per_sample,
            r.samples,
            r.seed,
            r.phantom_id,
            r.iou,
            r.final_loss,
            r.wall_ms
        );
    }
    out
}

/// Parse CSV written by [`to_csv`]. `level` is not in the schema, so it is
/// taken to equal `effort_per_sample`.
pub fn from_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::Format(format!("bench CSV must start with {CSV_HEADER:?}")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Format(format!("row {}: expected 8 fields, got {}", i + 1, f.len())));
            }
            let bad = |what: &str| Error::Format(format!("row {}: bad {what}", i + 1));
            let iou: f64 = f[5].parse().map_err(|_| bad("iou"))?;
            let effort: usize = f[1].parse().map_err(|_| bad("effort_per_sample"))?;
            Ok(BenchRow {
                method: f[0].parse()?,
                effort_per_sample: effort,
                samples: f[2].parse().map_err(|_| bad("samples"))?,
                level: effort,
                seed: f[3].parse().map_err(|_| bad("seed"))?,
                phantom_id: f[4].parse().map_err(|_| bad("phantom_id"))?,
                iou,
                final_loss: f[6].parse().map_err(|_| bad("final_loss"))?,
                wall_ms: f[7].parse().map_err(|_| bad("wall_ms"))?,
                error: iou.is_nan().then(|| "failed".to_string()),
            })
        })
        .collect()
}

/// Effort/samples pairs reaching a target IoU for one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoCurve {
    pub target_iou: f64,
    pub method: Method,
    /// `(effort_per_sample, samples)`, effort ascending, samples strictly descending.
    pub points: Vec<(f64, usize)>,
}

impl IsoCurve {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Smallest effort reaching `target` along one samples-column, interpolating
/// linearly in log-effort between the last cell below and the first at or above.
fn crossing(column: &[(usize, f64)], target: f64) -> Option<f64> {
    let first = column.iter().position(|&(_, m)| m >= target)?;
    if first == 0 {
        return Some(column[0].0 as f64);
    }
    let (e0, m0) = column[first - 1];
    let (e1, m1) = column[first];
    let (l0, l1) = ((e0.max(1) as f64).ln(), (e1.max(1) as f64).ln());
    Some((l0 + (target - m0) / (m1 - m0) * (l1 - l0)).exp())
}

/// Drop pairs dominated in both coordinates (less is better in each).
pub fn pareto_front(mut pts: Vec<(f64, usize)>) -> Vec<(f64, usize)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<(f64, usize)> = Vec::new();
    for p in pts {
        if out.last().is_none_or(|last| p.1 < last.1) {
            out.push(p);
        }
    }
    out
}

/// One iso-IoU curve per method present in `records`. A method with no
/// qualifying cell gets an empty curve.
pub fn iso_curves(records: &[BenchRecord], target_iou: f64) -> Result<Vec<IsoCurve>> {
    if records.is_empty() {
        return Err(Error::Empty("iso_curves needs at least one record".into()));
    }
    let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    Ok(methods
        .into_iter()
        .map(|method| {
            let mut samples: Vec<usize> = records.iter().filter(|r| r.method == method).map(|r| r.samples).collect();
            samples.sort_unstable();
            samples.dedup();
            let pts = samples
                .into_iter()
                .filter_map(|s| {
                    let mut col: Vec<(usize, f64)> = records
                        .iter()
                        .filter(|r| r.method == method && r.samples == s && r.mean_iou.is_finite())
                        .map(|r| (r.effort_per_sample, r.mean_iou))
                        .collect();
                    col.sort_by_key(|c| c.0);
                    crossing(&col, target_iou).map(|e| (e, s))
                })
                .collect();
            let points = pareto_front(pts);
            if points.is_empty() {
                tracing::info!(method = method.as_str(), target_iou, "no cell reaches the target");
            }
            IsoCurve { target_iou, method, points }
        })
        .collect())
}
