//! Direct per-voxel minimization of `l_ce(Y, Yhat) + lambda * l_mse(X, Xhat)`.
//!
//! `Yhat = sigmoid(z)` over free logits `z`. The reconstruction is the
//! two-region piecewise-constant image
//! `Xhat = mu_fg * Yhat + mu_bg * (1 - Yhat)` with soft region means, so the
//! reconstruction error near the template boundary pulls `Yhat` toward the
//! intensity edges of `X` while the cross-entropy holds it to the template.

mod phantom;

pub use phantom::{make_phantom, Phantom, PhantomSpec, TemplateOffset};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::grid::{iou, threshold, BinaryGrid, Voxel, VoxelGrid, WeightMap};
use crate::loss::{ce_term, ce_term_grad, pairwise_sum, LossBreakdown};

/// Starting point of the logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    /// `Yhat = 0.99` inside the template, `0.01` outside.
    #[serde(rename = "from-template")]
    FromTemplate,
    #[serde(rename = "uniform-0.5")]
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarSegConfig {
    pub lambda: f64,
    /// Threshold applied to `Yhat` when a binary mask is needed.
    pub gamma: f64,
    pub steps: usize,
    /// Initial and maximum step along the preconditioned descent direction.
    pub step_size: f64,
    pub init: Init,
    /// Halve the step on a loss increase, double on success up to `step_size`.
    pub backtracking: bool,
}

impl Default for VarSegConfig {
    fn default() -> Self {
        VarSegConfig { lambda: 1e-4, gamma: 0.95, steps: 200, step_size: 1.0, init: Init::FromTemplate, backtracking: true }
    }
}

impl VarSegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(param_err!("lambda must be a finite value >= 0, got {}", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(param_err!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.steps == 0 {
            return Err(param_err!("steps must be positive"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(param_err!("step_size must be positive, got {}", self.step_size));
        }
        Ok(())
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

const INIT_P: f64 = 0.99;
const MIN_STEP: f64 = 1e-12;

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Voxels per partial sum. Partials are combined with [`pairwise_sum`], so
/// results do not depend on how chunks are scheduled.
const CHUNK: usize = 4096;

/// Fixed-order sums of `N` per-voxel quantities.
fn chunked_sums<const N: usize>(n: usize, f: impl Fn(usize) -> [f64; N] + Sync) -> [f64; N] {
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let partials: Vec<[f64; N]> = starts
        .par_iter()
        .map(|&s| {
            let mut acc = [0.0; N];
            for i in s..(s + CHUNK).min(n) {
                let v = f(i);
                for k in 0..N {
                    acc[k] += v[k];
                }
            }
            acc
        })
        .collect();
    std::array::from_fn(|k| pairwise_sum(&partials.iter().map(|p| p[k]).collect::<Vec<_>>()))
}

/// Soft means `(mu_fg, mu_bg, sum u, sum 1 - u)`; an empty region takes the global mean.
fn soft_means(u: &[f64], x: &[f64]) -> (f64, f64, f64, f64) {
    let [su, sux, sx] = chunked_sums(u.len(), |i| [u[i], u[i] * x[i], x[i]]);
    let n = u.len() as f64;
    let sb = n - su;
    let global = sx / n;
    let mf = if su > 0.0 { sux / su } else { global };
    let mb = if sb > 0.0 { (sx - sux) / sb } else { global };
    (mf, mb, su, sb)
}

/// Piecewise-constant reconstruction of `x` from the soft labelling `yhat`.
pub fn reconstruct<P: Voxel, A: Voxel>(yhat: &VoxelGrid<P>, x: &VoxelGrid<A>) -> Result<VoxelGrid<f64>> {
    yhat.ensure_same_dims(x)?;
    if !yhat.is_probability() {
        return Err(Error::Format("reconstruct: Yhat holds values outside [0, 1]".into()));
    }
    let u: Vec<f64> = yhat.data().iter().map(|v| v.to_f64()).collect();
    let xs: Vec<f64> = x.data().iter().map(|v| v.to_f64()).collect();
    let (mf, mb, _, _) = soft_means(&u, &xs);
    Ok(yhat.map(|p| mf * p.to_f64() + mb * (1.0 - p.to_f64())))
}

/// The objective over logits, bound to one image, template and weight map.
pub struct Objective<'a> {
    x: Vec<f64>,
    y: &'a BinaryGrid,
    w: &'a WeightMap,
    ce_mask: Option<&'a BinaryGrid>,
    lambda: f64,
}

struct Eval {
    loss: LossBreakdown,
    u: Vec<f64>,
    mf: f64,
    mb: f64,
    su: f64,
    sb: f64,
    /// `sum W r u` and `sum W r (1 - u)` with `r = X - Xhat`.
    a: f64,
    b: f64,
}

impl<'a> Objective<'a> {
    /// `ce_mask`, when given, restricts the cross-entropy to voxels where it is nonzero.
    pub fn new<A: Voxel>(
        x: &VoxelGrid<A>,
        template: &'a BinaryGrid,
        w: &'a WeightMap,
        ce_mask: Option<&'a BinaryGrid>,
        lambda: f64,
    ) -> Result<Self> {
        template.ensure_same_dims(x)?;
        template.ensure_same_dims(&w.grid)?;
        template.ensure_binary("template Y")?;
        if let Some(m) = ce_mask {
            template.ensure_same_dims(m)?;
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(param_err!("lambda must be a finite value >= 0, got {lambda}"));
        }
        let x: Vec<f64> = x.data().iter().map(|v| v.to_f64()).collect();
        Ok(Objective { x, y: template, w, ce_mask, lambda })
    }

    #[inline]
    fn ce_on(&self, i: usize) -> bool {
        self.ce_mask.is_none_or(|m| m.data()[i] != 0)
    }

    fn eval(&self, z: &[f64]) -> Eval {
        let u: Vec<f64> = z.par_iter().map(|&v| sigmoid(v)).collect();
        let (mf, mb, su, sb) = soft_means(&u, &self.x);
        let (y, w, x) = (self.y.data(), self.w.grid.data(), &self.x);
        let [ce, mse, a, wr] = chunked_sums(u.len(), |i| {
            let p = u[i];
            let ce = if self.ce_on(i) { ce_term(y[i] as f64, p) } else { 0.0 };
            let wr = w[i] as f64 * (x[i] - (mf * p + mb * (1.0 - p)));
            [ce, wr * (x[i] - (mf * p + mb * (1.0 - p))), wr * p, wr]
        });
        let loss = LossBreakdown::combine(ce, mse, self.lambda);
        Eval { loss, u, mf, mb, su, sb, a, b: wr - a }
    }

    #[inline]
    fn grad_at(&self, e: &Eval, i: usize) -> f64 {
        let u = e.u[i];
        let x = self.x[i];
        let w = self.w.grid.data()[i] as f64;
        let g_ce = if self.ce_on(i) { ce_term_grad(self.y.data()[i] as f64, u) } else { 0.0 };
        let r = x - (e.mf * u + e.mb * (1.0 - u));
        let mut g_mse = w * r * (e.mf - e.mb);
        if e.su > 0.0 {
            g_mse += e.a * (x - e.mf) / e.su;
        }
        if e.sb > 0.0 {
            g_mse -= e.b * (x - e.mb) / e.sb;
        }
        (g_ce - 2.0 * self.lambda * g_mse) * u * (1.0 - u)
    }

    pub fn value(&self, z: &[f64]) -> LossBreakdown {
        self.eval(z).loss
    }

    /// Exact gradient w.r.t. the logits, including the dependence of the
    /// region means on `Yhat`.
    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let e = self.eval(z);
        (0..z.len()).into_par_iter().map(|i| self.grad_at(&e, i)).collect()
    }

    /// Preconditioned descent direction. The scaling bounds each voxel's
    /// curvature in logit space: 1/4 from the cross-entropy plus the
    /// reconstruction term's `2 lambda W (mu_fg - mu_bg)^2 / 16`.
    fn direction(&self, e: &Eval) -> Vec<f64> {
        let dm2 = (e.mf - e.mb) * (e.mf - e.mb);
        let w = self.w.grid.data();
        (0..e.u.len())
            .into_par_iter()
            .map(|i| -self.grad_at(e, i) / (0.25 + self.lambda * w[i] as f64 * dm2 / 8.0))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub prob: VoxelGrid<f32>,
    /// Total loss; entry 0 is the starting point, one entry per step after.
    pub trace: Vec<f64>,
    pub final_loss: LossBreakdown,
    /// Fewer than `steps` when the line search stalls.
    pub steps_taken: usize,
}

impl Segmentation {
    pub fn mask(&self, gamma: f64) -> Result<BinaryGrid> {
        threshold(&self.prob, gamma)
    }
}

pub fn initial_logits(template: &BinaryGrid, init: Init) -> Vec<f64> {
    let l = (INIT_P / (1.0 - INIT_P)).ln();
    match init {
        Init::FromTemplate => template.data().iter().map(|&t| if t != 0 { l } else { -l }).collect(),
        Init::Uniform => vec![0.0; template.len()],
    }
}

pub fn optimize<A: Voxel>(x: &VoxelGrid<A>, template: &BinaryGrid, w: &WeightMap, cfg: &VarSegConfig) -> Result<Segmentation> {
    optimize_masked(x, template, w, None, cfg)
}

/// [`optimize`] with the cross-entropy restricted to `ce_mask`.
pub fn optimize_masked<A: Voxel>(
    x: &VoxelGrid<A>,
    template: &BinaryGrid,
    w: &WeightMap,
    ce_mask: Option<&BinaryGrid>,
    cfg: &VarSegConfig,
) -> Result<Segmentation> {
    cfg.validate()?;
    let obj = Objective::new(x, template, w, ce_mask, cfg.lambda)?;
    let finite = |e: &Eval, step: usize| -> Result<()> {
        if e.loss.total.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("loss is {} at step {step}", e.loss.total)))
        }
    };
    let mut z = initial_logits(template, cfg.init);
    let mut cur = obj.eval(&z);
    finite(&cur, 0)?;
    let mut trace = vec![cur.loss.total];
    let mut step = cfg.step_size;
    let mut steps_taken = 0;
    for s in 1..=cfg.steps {
        let dir = obj.direction(&cur);
        let next = loop {
            let zn: Vec<f64> = z.par_iter().zip(dir.par_iter()).map(|(z, d)| z + step * d).collect();
            let e = obj.eval(&zn);
            finite(&e, s)?;
            if !cfg.backtracking || e.loss.total <= cur.loss.total {
                if cfg.backtracking {
                    step = (step * 2.0).min(cfg.step_size);
                }
                break Some((zn, e));
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((zn, e)) = next else { break };
        z = zn;
        cur = e;
        trace.push(cur.loss.total);
        steps_taken = s;
    }
    let prob = VoxelGrid::new(*template.spec(), cur.u.iter().map(|&u| u as f32).collect())?;
    Ok(Segmentation { prob, trace, final_loss: cur.loss, steps_taken })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub gamma: f64,
    pub iou_vs_truth: f64,
    pub iou_vs_template: f64,
    pub final_loss: f64,
}

/// One optimization per lambda (run in parallel), thresholded at every gamma.
pub fn sweep<A: Voxel>(
    x: &VoxelGrid<A>,
    truth: &BinaryGrid,
    template: &BinaryGrid,
    w: &WeightMap,
    lambdas: &[f64],
    gammas: &[f64],
    cfg: &VarSegConfig,
) -> Result<Vec<SweepRow>> {
    truth.ensure_same_dims(template)?;
    let per_lambda: Vec<Result<Vec<SweepRow>>> = lambdas
        .par_iter()
        .map(|&lambda| {
            let seg = optimize(x, template, w, &cfg.with_lambda(lambda))?;
            gammas
                .iter()
                .map(|&gamma| {
                    let m = seg.mask(gamma)?;
                    Ok(SweepRow {
                        lambda,
                        gamma,
                        iou_vs_truth: iou(&m, truth)?,
                        iou_vs_template: iou(&m, template)?,
                        final_loss: seg.final_loss.total,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_lambda {
        rows.extend(r?);
    }
    Ok(rows)
}
