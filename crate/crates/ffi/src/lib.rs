//! C ABI over `weakseg`.
//!
//! Grids and meshes cross the boundary as opaque handles owned by the
//! caller and released with the matching `*_free`. Every fallible call
//! returns a [`WsStatus`]; on failure `ws_last_error()` describes it until
//! the next call on the same thread. Output pointers are written only on
//! success.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use weakseg::asm::{self, DeformParams};
use weakseg::grid::{iou, rvol, weight_map, BinaryGrid, Dims, GridSpec, VoxelGrid, WeightParams};
use weakseg::loss::total_loss;
use weakseg::mesh::{icosphere, obj, TriMesh};
use weakseg::pipeline::fit_points;
use weakseg::varseg::reconstruct;
use weakseg::voxelize::rasterize;
use weakseg::{Error, Point3};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    InvalidMesh = 4,
    Numeric = 5,
    Empty = 6,
    Format = 7,
    Io = 8,
    Panic = 9,
}

impl From<&Error> for WsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Shape(_) => WsStatus::ShapeMismatch,
            Error::Parameter(_) => WsStatus::InvalidArgument,
            Error::Validity(_) => WsStatus::InvalidMesh,
            Error::Numeric(_) => WsStatus::Numeric,
            Error::Empty(_) => WsStatus::Empty,
            Error::Format(_) | Error::Json(_) => WsStatus::Format,
            Error::Io(_) => WsStatus::Io,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WsDtype {
    U8 = 0,
    F32 = 1,
}

/// Opaque volume: a binary (u8) mask or an f32 image.
pub struct WsGrid(GridData);

enum GridData {
    U8(BinaryGrid),
    F32(VoxelGrid<f32>),
}

impl WsGrid {
    fn spec(&self) -> &GridSpec {
        match &self.0 {
            GridData::U8(g) => g.spec(),
            GridData::F32(g) => g.spec(),
        }
    }

    fn binary(&self) -> Result<BinaryGrid, Error> {
        match &self.0 {
            GridData::U8(g) => Ok(g.clone()),
            GridData::F32(g) => rvol::AnyGrid::F32(g.clone()).into_binary(),
        }
    }

    fn image(&self) -> VoxelGrid<f32> {
        match &self.0 {
            GridData::U8(g) => g.map(|v| v as f32),
            GridData::F32(g) => g.clone(),
        }
    }
}

/// Opaque triangle mesh.
pub struct WsMesh(TriMesh);

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct WsDeformParams {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub kappa: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl From<WsDeformParams> for DeformParams {
    fn from(p: WsDeformParams) -> Self {
        DeformParams { alpha: p.alpha, beta: p.beta, tau: p.tau, kappa: p.kappa, max_iters: p.max_iters, tol: p.tol }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct WsDeformSummary {
    pub iterations_used: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub converged: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct WsLoss {
    pub l_ce: f64,
    pub l_mse: f64,
    pub lambda: f64,
    pub total: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(WsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(WsStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(WsStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, translating errors and panics into a status and the last-error slot.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> WsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            WsStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(WsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<T>(p: *mut T, what: &str) -> Result<&mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn points(xyz: *const f64, n: usize) -> Result<Vec<Point3>, Fail> {
    let flat = slice(xyz, n.checked_mul(3).ok_or_else(|| Fail(WsStatus::InvalidArgument, "n too large".into()))?, "points")?;
    Ok(flat.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Description of the last failure on this thread, or NULL. The pointer is
/// valid until the next `ws_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ws_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn ws_deform_params_default() -> WsDeformParams {
    let d = DeformParams::default();
    WsDeformParams { alpha: d.alpha, beta: d.beta, tau: d.tau, kappa: d.kappa, max_iters: d.max_iters, tol: d.tol }
}

/// Load an RVOL file.
#[no_mangle]
pub unsafe extern "C" fn ws_grid_load(path: *const c_char, out_grid: *mut *mut WsGrid) -> WsStatus {
    guard(|| {
        let path = cstr(path, "path")?;
        let slot = out(out_grid, "out_grid")?;
        let g = match rvol::read_file(path)? {
            rvol::AnyGrid::U8(g) => GridData::U8(g),
            rvol::AnyGrid::F32(g) => GridData::F32(g),
        };
        *slot = boxed(WsGrid(g));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ws_grid_save(grid: *const WsGrid, path: *const c_char) -> WsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let path = cstr(path, "path")?;
        match &g.0 {
            GridData::U8(g) => rvol::write_file(path, g)?,
            GridData::F32(g) => rvol::write_file(path, g)?,
        }
        Ok(())
    })
}

/// New grid copied from `len` row-major values. `dtype` selects how `data`
/// is read: `U8` expects `uint8_t*`, `F32` expects `float*`.
#[no_mangle]
pub unsafe extern "C" fn ws_grid_new(
    dims: *const usize,
    spacing: *const f64,
    origin: *const f64,
    dtype: WsDtype,
    data: *const std::ffi::c_void,
    len: usize,
    out_grid: *mut *mut WsGrid,
) -> WsStatus {
    guard(|| {
        let d = slice(dims, 3, "dims")?;
        let s = slice(spacing, 3, "spacing")?;
        let o = slice(origin, 3, "origin")?;
        let slot = out(out_grid, "out_grid")?;
        let spec = GridSpec::new(Dims::new(d[0], d[1], d[2]), [s[0], s[1], s[2]], [o[0], o[1], o[2]])?;
        let g = match dtype {
            WsDtype::U8 => GridData::U8(VoxelGrid::new(spec, slice(data as *const u8, len, "data")?.to_vec())?),
            WsDtype::F32 => GridData::F32(VoxelGrid::new(spec, slice(data as *const f32, len, "data")?.to_vec())?),
        };
        *slot = boxed(WsGrid(g));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ws_grid_free(grid: *mut WsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Dims as (depth, height, width) into `out_dims[3]`.
#[no_mangle]
pub unsafe extern "C" fn ws_grid_dims(grid: *const WsGrid, out_dims: *mut usize) -> WsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        if out_dims.is_null() {
            return Err(null("out_dims"));
        }
        let d = g.spec().dims.as_array();
        ptr::copy_nonoverlapping(d.as_ptr(), out_dims, 3);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ws_grid_dtype(grid: *const WsGrid) -> WsDtype {
    match grid.as_ref().map(|g| &g.0) {
        Some(GridData::F32(_)) => WsDtype::F32,
        _ => WsDtype::U8,
    }
}

/// Copy the voxels as f32 into `buf`, which must hold exactly the voxel count.
#[no_mangle]
pub unsafe extern "C" fn ws_grid_copy_f32(grid: *const WsGrid, buf: *mut f32, len: usize) -> WsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let n = g.spec().dims.len();
        if len != n {
            return Err(Fail(WsStatus::ShapeMismatch, format!("buffer holds {len} values, grid has {n}")));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let dst = std::slice::from_raw_parts_mut(buf, n);
        match &g.0 {
            GridData::U8(g) => dst.iter_mut().zip(g.data()).for_each(|(d, &v)| *d = v as f32),
            GridData::F32(g) => dst.copy_from_slice(g.data()),
        }
        Ok(())
    })
}

/// Number of nonzero voxels.
#[no_mangle]
pub unsafe extern "C" fn ws_grid_count_nonzero(grid: *const WsGrid, out_count: *mut usize) -> WsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let slot = out(out_count, "out_count")?;
        *slot = match &g.0 {
            GridData::U8(g) => g.count_foreground(),
            GridData::F32(g) => g.data().iter().filter(|&&v| v != 0.0).count(),
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ws_mesh_icosphere(
    subdivisions: u32,
    radius: f64,
    center: *const f64,
    out_mesh: *mut *mut WsMesh,
) -> WsStatus {
    guard(|| {
        let c = slice(center, 3, "center")?;
        let slot = out(out_mesh, "out_mesh")?;
        *slot = boxed(WsMesh(icosphere(subdivisions, radius, Point3::new(c[0], c[1], c[2]))?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ws_mesh_load_obj(path: *const c_char, out_mesh: *mut *mut WsMesh) -> WsStatus {
    guard(|| {
        let path = cstr(path, "path")?;
        let slot = out(out_mesh, "out_mesh")?;
        *slot = boxed(WsMesh(obj::read_file(path)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ws_mesh_save_obj(mesh: *const WsMesh, path: *const c_char) -> WsStatus {
    guard(|| {
        let m = deref(mesh, "mesh")?;
        obj::write_file(cstr(path, "path")?, &m.0)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ws_mesh_free(mesh: *mut WsMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ws_mesh_vertex_count(mesh: *const WsMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.vertex_count())
}

#[no_mangle]
pub unsafe extern "C" fn ws_mesh_face_count(mesh: *const WsMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.face_count())
}

/// Copy vertices as packed (z, y, x) triples; `len` must be 3 * vertex count.
#[no_mangle]
pub unsafe extern "C" fn ws_mesh_copy_vertices(mesh: *const WsMesh, buf: *mut f64, len: usize) -> WsStatus {
    guard(|| {
        let m = deref(mesh, "mesh")?;
        let n = 3 * m.0.vertex_count();
        if len != n || buf.is_null() {
            return Err(Fail(WsStatus::ShapeMismatch, format!("buffer must hold {n} values")));
        }
        let dst = std::slice::from_raw_parts_mut(buf, n);
        for (d, v) in dst.chunks_exact_mut(3).zip(&m.0.vertices) {
            d.copy_from_slice(v.as_slice());
        }
        Ok(())
    })
}

/// Deform `template` toward `n_points` packed (z, y, x) points.
/// `params` may be NULL for defaults; `out_summary` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ws_deform(
    template: *const WsMesh,
    points_zyx: *const f64,
    n_points: usize,
    params: *const WsDeformParams,
    out_mesh: *mut *mut WsMesh,
    out_summary: *mut WsDeformSummary,
) -> WsStatus {
    guard(|| {
        let t = deref(template, "template")?;
        let pts = points(points_zyx, n_points)?;
        let params: DeformParams = params.as_ref().map_or_else(DeformParams::default, |p| (*p).into());
        let slot = out(out_mesh, "out_mesh")?;
        params.validate()?;
        let (mesh, report) = asm::deform(&t.0, &pts, &params)?;
        *slot = boxed(WsMesh(mesh));
        if let Some(s) = out_summary.as_mut() {
            *s = summary(&report);
        }
        Ok(())
    })
}

fn summary(r: &asm::DeformReport) -> WsDeformSummary {
    WsDeformSummary {
        iterations_used: r.iterations_used,
        initial_residual: r.residuals.first().copied().unwrap_or(f64::NAN),
        final_residual: r.final_residual(),
        converged: r.converged,
    }
}

/// Place a sphere from the points, deform it and rasterize on the grid of
/// `like`: the same pipeline as the CLI `deform --volume` and the service.
/// `template` may be NULL to place a sphere; `params` and `out_summary` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ws_fit_points(
    points_zyx: *const f64,
    n_points: usize,
    like: *const WsGrid,
    template: *const WsMesh,
    subdivisions: u32,
    params: *const WsDeformParams,
    out_mesh: *mut *mut WsMesh,
    out_raster: *mut *mut WsGrid,
    out_summary: *mut WsDeformSummary,
) -> WsStatus {
    guard(|| {
        let pts = points(points_zyx, n_points)?;
        let like = deref(like, "like")?;
        let params: DeformParams = params.as_ref().map_or_else(DeformParams::default, |p| (*p).into());
        let mesh_slot = out(out_mesh, "out_mesh")?;
        let raster_slot = out(out_raster, "out_raster")?;
        params.validate()?;
        let fit = fit_points(&pts, like.spec(), template.as_ref().map(|t| &t.0), subdivisions, &params)?;
        if let Some(s) = out_summary.as_mut() {
            *s = summary(&fit.report);
        }
        *mesh_slot = boxed(WsMesh(fit.mesh));
        *raster_slot = boxed(WsGrid(GridData::U8(fit.raster)));
        Ok(())
    })
}

/// Binary label of the mesh interior on the grid of `like`.
#[no_mangle]
pub unsafe extern "C" fn ws_rasterize(mesh: *const WsMesh, like: *const WsGrid, out_grid: *mut *mut WsGrid) -> WsStatus {
    guard(|| {
        let m = deref(mesh, "mesh")?;
        let like = deref(like, "like")?;
        let slot = out(out_grid, "out_grid")?;
        *slot = boxed(WsGrid(GridData::U8(rasterize(&m.0, like.spec())?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ws_iou(a: *const WsGrid, b: *const WsGrid, out_iou: *mut f64) -> WsStatus {
    guard(|| {
        let a = deref(a, "a")?.binary()?;
        let b = deref(b, "b")?.binary()?;
        let slot = out(out_iou, "out_iou")?;
        *slot = iou(&a, &b)?;
        Ok(())
    })
}

/// Loss of prediction `yhat` against supervision `y` on image `x`, with the
/// reconstruction taken from `yhat` and weights from the boundary band of
/// `template` (radius `band` voxels, weights `w_hi` / `w_lo`).
#[no_mangle]
pub unsafe extern "C" fn ws_loss(
    y: *const WsGrid,
    yhat: *const WsGrid,
    x: *const WsGrid,
    template: *const WsGrid,
    lambda: f64,
    band: f64,
    w_hi: f32,
    w_lo: f32,
    out_loss: *mut WsLoss,
) -> WsStatus {
    guard(|| {
        let y = deref(y, "y")?.binary()?;
        let yhat = deref(yhat, "yhat")?.image();
        let x = deref(x, "x")?.image();
        let t = deref(template, "template")?.binary()?;
        let slot = out(out_loss, "out_loss")?;
        let w = weight_map(&t, WeightParams { d: band, w_hi, w_lo })?;
        let xhat = reconstruct(&yhat, &x)?;
        let l = total_loss(&y, &yhat, &x, &xhat, &w, lambda)?;
        *slot = WsLoss { l_ce: l.l_ce, l_mse: l.l_mse, lambda: l.lambda, total: l.total };
        Ok(())
    })
}
