//! Points to mesh to label: the path shared by the CLI and the service, so
//! both produce bit-identical meshes and rasters.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::asm::{initial_template, AsmSolver, DeformParams, DeformReport};
use crate::error::{param_err, Result};
use crate::grid::{BinaryGrid, GridSpec};
use crate::mesh::TriMesh;
use crate::voxelize::rasterize;
use crate::Point3;

/// Default icosphere subdivision for templates placed from points.
pub const DEFAULT_SUBDIVISIONS: u32 = 4;

/// Rejects fewer than 4 points or point sets whose spread has no extent
/// along some direction (all on one plane or line).
pub fn check_non_coplanar(points: &[Point3]) -> Result<()> {
    if points.len() < 4 {
        return Err(param_err!("need at least 4 points to place a template, got {}", points.len()));
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Point3::zeros(), |a, p| a + p) / n;
    let cov = points.iter().fold(Matrix3::zeros(), |a, p| {
        let d = p - mean;
        a + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(param_err!("points are coplanar; add a point off their common plane"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    /// Rest shape the deformation started from.
    pub template: TriMesh,
    pub mesh: TriMesh,
    pub report: DeformReport,
    pub raster: BinaryGrid,
}

/// Deform `template` (or a sphere placed from the points when `None`) and
/// rasterize the result on `spec`.
pub fn fit_points(
    points: &[Point3],
    spec: &GridSpec,
    template: Option<&TriMesh>,
    subdivisions: u32,
    params: &DeformParams,
) -> Result<Fit> {
    let template = match template {
        Some(t) => t.clone(),
        None => {
            check_non_coplanar(points)?;
            initial_template(points, subdivisions)?
        }
    };
    let (mesh, report) = AsmSolver::new(&template, *params)?.deform(points)?;
    let raster = rasterize(&mesh, spec)?;
    Ok(Fit { template, mesh, report, raster })
}
