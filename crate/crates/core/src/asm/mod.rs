//! Active surface model: deform a closed template toward sparse surface points.
//!
//! Each iteration finds, for every annotation point, its closest point on
//! the current surface and applies a spring `kappa * (point - closest)` to
//! that face's vertices by barycentric weight. The displacement `U` from
//! the rest template is then advanced semi-implicitly,
//!
//! ```text
//! (I + tau * (alpha * L + beta * L^2)) U_next = U + tau * F
//! ```
//!
//! with `L` the uniform Laplacian. The system matrix depends only on the
//! template and `(alpha, beta, tau)`, so an [`AsmSolver`] builds it once and
//! serves any number of deform calls.

mod cg;

pub use cg::{solve_pcg, CgOutcome, LinearOperator};

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::mesh::{uniform_laplacian, validate, SparseOperator, SurfaceIndex, TriMesh};
use crate::Point3;

const CG_REL_TOL: f64 = 1e-8;
const CG_MAX_ITERS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeformParams {
    /// Membrane weight.
    pub alpha: f64,
    /// Thin-plate weight.
    pub beta: f64,
    /// Step size.
    pub tau: f64,
    /// Spring strength of the point attraction.
    pub kappa: f64,
    pub max_iters: usize,
    /// Convergence threshold on mean vertex displacement per iteration (mm).
    pub tol: f64,
}

impl Default for DeformParams {
    fn default() -> Self {
        DeformParams { alpha: 0.03, beta: 0.01, tau: 1.0, kappa: 1.0, max_iters: 200, tol: 1e-4 }
    }
}

impl DeformParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.tau, self.kappa, self.tol].iter().all(|v| v.is_finite());
        if !finite {
            return Err(param_err!("deform parameters must be finite"));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta <= 0.0 {
            return Err(param_err!("need alpha, beta >= 0 with alpha + beta > 0"));
        }
        if self.tau <= 0.0 || self.tol <= 0.0 || self.kappa <= 0.0 {
            return Err(param_err!("tau, tol and kappa must be positive"));
        }
        if self.max_iters == 0 {
            return Err(param_err!("max_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformReport {
    pub iterations_used: usize,
    /// Mean vertex displacement of the last iteration (mm).
    pub final_displacement: f64,
    /// Mean point-to-surface distance; entry 0 is the starting surface.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl DeformReport {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }
}

/// Per-vertex spring forces pulling the surface toward `points`.
pub fn attraction_forces(mesh: &TriMesh, points: &[Point3], kappa: f64) -> Result<Vec<Point3>> {
    if points.is_empty() {
        return Err(Error::Empty("attraction forces need at least one point".into()));
    }
    let index = SurfaceIndex::build(mesh);
    Ok(forces_with_index(mesh, &index, points, kappa).0)
}

fn forces_with_index(mesh: &TriMesh, index: &SurfaceIndex<'_>, points: &[Point3], kappa: f64) -> (Vec<Point3>, f64) {
    let mut forces = vec![Point3::zeros(); mesh.vertex_count()];
    let mut weight = vec![0.0f64; mesh.vertex_count()];
    let mut residual = 0.0;
    for p in points {
        let hit = index.closest(p);
        residual += hit.distance;
        let pull = (p - Point3::from(hit.point)) * kappa;
        for (&v, &w) in mesh.faces[hit.face].iter().zip(&hit.bary) {
            if w != 0.0 {
                forces[v as usize] += pull * w;
                weight[v as usize] += w;
            }
        }
    }
    // a vertex shared by several springs takes their weighted mean pull,
    // otherwise the explicit step overshoots and oscillates
    for (f, &w) in forces.iter_mut().zip(&weight) {
        if w > 1.0 {
            *f /= w;
        }
    }
    (forces, residual / points.len() as f64)
}

/// Mean distance from `points` to the surface.
pub fn mean_residual(mesh: &TriMesh, points: &[Point3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let index = SurfaceIndex::build(mesh);
    points.iter().map(|p| index.closest(p).distance).sum::<f64>() / points.len() as f64
}

/// Sphere placement from a point cloud: centroid and mean distance to it.
pub fn center_template(points: &[Point3]) -> Result<(Point3, f64)> {
    if points.len() < 4 {
        return Err(param_err!("template centering needs at least 4 points, got {}", points.len()));
    }
    let n = points.len() as f64;
    let center = points.iter().fold(Point3::zeros(), |a, p| a + p) / n;
    let radius = points.iter().map(|p| (p - center).norm()).sum::<f64>() / n;
    if !(radius > 0.0) {
        return Err(param_err!("points coincide; cannot size a template"));
    }
    Ok((center, radius))
}

/// Icosphere placed and sized by [`center_template`].
pub fn initial_template(points: &[Point3], subdivisions: u32) -> Result<TriMesh> {
    let (c, r) = center_template(points)?;
    crate::mesh::icosphere(subdivisions, r, c)
}

/// `I + tau * (alpha * L + beta * L^2)`
struct SystemMatrix<'a> {
    lap: &'a SparseOperator,
    params: DeformParams,
}

impl LinearOperator for SystemMatrix<'_> {
    fn size(&self) -> usize {
        self.lap.size()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let DeformParams { alpha, beta, tau, .. } = self.params;
        let lx = self.lap.mul(x);
        let llx = if beta != 0.0 { self.lap.mul(&lx) } else { vec![0.0; x.len()] };
        for i in 0..x.len() {
            y[i] = x[i] + tau * (alpha * lx[i] + beta * llx[i]);
        }
    }
}

/// Deformation solver bound to one rest template and parameter set.
pub struct AsmSolver {
    rest: TriMesh,
    lap: SparseOperator,
    inv_diag: Vec<f64>,
    params: DeformParams,
}

impl AsmSolver {
    pub fn new(template: &TriMesh, params: DeformParams) -> Result<Self> {
        params.validate()?;
        let report = validate(template);
        if !report.valid {
            return Err(Error::Validity(format!(
                "template fails mesh checks (watertight={}, oriented={}, euler={}, degenerate={})",
                report.watertight,
                report.orientation_consistent,
                report.euler_characteristic,
                report.degenerate_faces.len()
            )));
        }
        let lap = uniform_laplacian(template)?;
        let l_diag = lap.diagonal();
        let l2_diag = lap.gram_diagonal();
        let inv_diag = l_diag
            .iter()
            .zip(&l2_diag)
            .map(|(d1, d2)| 1.0 / (1.0 + params.tau * (params.alpha * d1 + params.beta * d2)))
            .collect();
        Ok(AsmSolver { rest: template.clone(), lap, inv_diag, params })
    }

    pub fn params(&self) -> &DeformParams {
        &self.params
    }

    pub fn template(&self) -> &TriMesh {
        &self.rest
    }

    pub fn deform(&self, points: &[Point3]) -> Result<(TriMesh, DeformReport)> {
        if points.is_empty() {
            return Err(Error::Empty("deform needs at least one annotation point".into()));
        }
        let p = self.params;
        let n = self.rest.vertex_count();
        let sys = SystemMatrix { lap: &self.lap, params: p };
        let mut mesh = self.rest.clone();
        // displacement from the rest shape, one array per coordinate
        let mut disp = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut residuals = Vec::with_capacity(p.max_iters + 1);
        let mut iterations_used = 0;
        let mut final_displacement = f64::INFINITY;
        let mut converged = false;

        let (mut forces, r0) = {
            let index = SurfaceIndex::build(&mesh);
            forces_with_index(&mesh, &index, points, p.kappa)
        };
        residuals.push(r0);
        for _ in 0..p.max_iters {
            let rhs: Vec<Vec<f64>> =
                (0..3).map(|a| (0..n).map(|i| disp[a][i] + p.tau * forces[i][a]).collect()).collect();
            let solve = |a: usize| -> Result<Vec<f64>> {
                let mut x = disp[a].clone();
                solve_pcg(&sys, &self.inv_diag, &rhs[a], &mut x, CG_REL_TOL, CG_MAX_ITERS)?;
                Ok(x)
            };
            let (u0, (u1, u2)) = rayon::join(|| solve(0), || rayon::join(|| solve(1), || solve(2)));
            let next = [u0?, u1?, u2?];

            let mut moved = 0.0;
            for i in 0..n {
                let old = mesh.vertices[i];
                let new = self.rest.vertices[i] + Point3::new(next[0][i], next[1][i], next[2][i]);
                if !new.iter().all(|c| c.is_finite()) {
                    return Err(Error::Numeric("non-finite vertex position".into()));
                }
                moved += (new - old).norm();
                mesh.vertices[i] = new;
            }
            disp = next;
            iterations_used += 1;
            final_displacement = moved / n as f64;

            let index = SurfaceIndex::build(&mesh);
            let (f, r) = forces_with_index(&mesh, &index, points, p.kappa);
            forces = f;
            residuals.push(r);
            if final_displacement < p.tol {
                converged = true;
                break;
            }
        }
        Ok((mesh, DeformReport { iterations_used, final_displacement, residuals, converged }))
    }
}

/// One-shot deformation; see [`AsmSolver`] for repeated calls on one template.
pub fn deform(template: &TriMesh, points: &[Point3], params: &DeformParams) -> Result<(TriMesh, DeformReport)> {
    AsmSolver::new(template, *params)?.deform(points)
}

/// Membrane energy `|L V|^2` summed over coordinates.
pub fn membrane_energy(mesh: &TriMesh) -> Result<f64> {
    let lap = uniform_laplacian(mesh)?;
    let mut e = 0.0;
    for a in 0..3 {
        let x: Vec<f64> = mesh.vertices.iter().map(|v| v[a]).collect();
        e += lap.mul(&x).iter().map(|v| v * v).sum::<f64>();
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    #[test]
    fn on_surface_point_gives_zero_force() {
        let m = icosphere(2, 1.0, Point3::zeros()).unwrap();
        let f = attraction_forces(&m, &[m.vertices[5]], 1.0).unwrap();
        assert!(f.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn normal_offset_pulls_single_vertex() {
        let m = icosphere(2, 1.0, Point3::zeros()).unwrap();
        let v = m.vertices[9];
        let delta = 0.3;
        let f = attraction_forces(&m, &[v * (1.0 + delta)], 1.0).unwrap();
        assert!((f[9].norm() - delta).abs() < 1e-12);
        assert_eq!(f.iter().filter(|x| x.norm() > 0.0).count(), 1);
    }

    #[test]
    fn empty_points_rejected() {
        let m = icosphere(1, 1.0, Point3::zeros()).unwrap();
        assert!(matches!(attraction_forces(&m, &[], 1.0), Err(Error::Empty(_))));
        assert!(deform(&m, &[], &DeformParams::default()).is_err());
    }

    #[test]
    fn center_template_cases() {
        let pts = [
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, -1.0, 0.0),
        ];
        let (c, r) = center_template(&pts).unwrap();
        assert!(c.norm() < 1e-15);
        assert!((r - 1.0).abs() < 1e-15);
        assert!(center_template(&pts[..3]).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(DeformParams::default().validate().is_ok());
        assert!(DeformParams { alpha: 0.0, beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(DeformParams { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(DeformParams { max_iters: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn fixed_point_when_points_on_template() {
        let m = icosphere(3, 5.0, Point3::new(1.0, 2.0, 3.0)).unwrap();
        let pts: Vec<Point3> = m.vertices.iter().step_by(7).copied().collect();
        let (out, rep) = deform(&m, &pts, &DeformParams::default()).unwrap();
        assert_eq!(rep.iterations_used, 1);
        assert!(rep.converged);
        assert!(rep.final_displacement < 1e-4);
        assert_eq!(out.faces, m.faces);
    }

    #[test]
    fn invalid_template_rejected() {
        let mut m = icosphere(1, 1.0, Point3::zeros()).unwrap();
        m.faces.pop();
        assert!(matches!(AsmSolver::new(&m, DeformParams::default()), Err(Error::Validity(_))));
    }
}
