use std::ffi::{CStr, CString};
use std::ptr;

use weakseg::grid::{rvol, GridSpec, VoxelGrid};
use weakseg::Dims;
use weakseg_ffi::*;

fn last_error() -> String {
    let p = ws_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn icosphere(sub: u32, r: f64, c: [f64; 3]) -> *mut WsMesh {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ws_mesh_icosphere(sub, r, c.as_ptr(), &mut m) }, WsStatus::Ok);
    m
}

fn empty_grid(n: usize) -> *mut WsGrid {
    let dims = [n; 3];
    let data = vec![0u8; n * n * n];
    let mut g = ptr::null_mut();
    let st = unsafe {
        ws_grid_new(dims.as_ptr(), [1.0; 3].as_ptr(), [0.0; 3].as_ptr(), WsDtype::U8, data.as_ptr().cast(), data.len(), &mut g)
    };
    assert_eq!(st, WsStatus::Ok);
    g
}

#[test]
fn rasterize_matches_core() {
    let m = icosphere(3, 6.0, [10.0; 3]);
    let like = empty_grid(20);
    let mut r = ptr::null_mut();
    unsafe {
        assert_eq!(ws_rasterize(m, like, &mut r), WsStatus::Ok);
        let mut n = 0;
        assert_eq!(ws_grid_count_nonzero(r, &mut n), WsStatus::Ok);
        let core_mesh = weakseg::mesh::icosphere(3, 6.0, weakseg::Point3::new(10.0, 10.0, 10.0)).unwrap();
        let expect = weakseg::voxelize::rasterize(&core_mesh, &GridSpec::unit(Dims::cube(20))).unwrap();
        assert_eq!(n, expect.count_foreground());
        let mut iou = 0.0;
        assert_eq!(ws_iou(r, r, &mut iou), WsStatus::Ok);
        assert_eq!(iou, 1.0);
        ws_grid_free(r);
        ws_grid_free(like);
        ws_mesh_free(m);
    }
}

#[test]
fn null_and_invalid_arguments_report_status() {
    unsafe {
        assert_eq!(ws_mesh_icosphere(2, 1.0, [0.0; 3].as_ptr(), ptr::null_mut()), WsStatus::NullPointer);
        assert!(last_error().contains("out_mesh"));
        let mut m = ptr::null_mut();
        assert_eq!(ws_mesh_icosphere(2, -1.0, [0.0; 3].as_ptr(), &mut m), WsStatus::InvalidArgument);
        assert!(m.is_null());
        assert!(!last_error().is_empty());
        // a successful call clears the slot
        let ok = icosphere(1, 1.0, [0.0; 3]);
        assert!(ws_last_error().is_null());
        ws_mesh_free(ok);
        ws_mesh_free(ptr::null_mut());
        ws_grid_free(ptr::null_mut());

        let mut g = ptr::null_mut();
        let data = [0u8; 7];
        let st = ws_grid_new([2usize; 3].as_ptr(), [1.0; 3].as_ptr(), [0.0; 3].as_ptr(), WsDtype::U8, data.as_ptr().cast(), 7, &mut g);
        assert_eq!(st, WsStatus::ShapeMismatch);
    }
}

#[test]
fn deform_pulls_sphere_to_points() {
    let template = icosphere(3, 5.0, [0.0; 3]);
    let target = weakseg::mesh::icosphere(2, 8.0, weakseg::Point3::zeros()).unwrap();
    let pts: Vec<f64> = target.vertices.iter().flat_map(|v| [v[0], v[1], v[2]]).collect();
    let mut out = ptr::null_mut();
    let mut s = WsDeformSummary::default();
    unsafe {
        let params = ws_deform_params_default();
        assert_eq!(ws_deform(template, pts.as_ptr(), pts.len() / 3, &params, &mut out, &mut s), WsStatus::Ok);
        assert!(s.final_residual < s.initial_residual);
        assert_eq!(ws_mesh_vertex_count(out), ws_mesh_vertex_count(template));
        let mut v = vec![0.0; 3 * ws_mesh_vertex_count(out)];
        assert_eq!(ws_mesh_copy_vertices(out, v.as_mut_ptr(), v.len()), WsStatus::Ok);
        let r = v.chunks(3).map(|c| (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()).sum::<f64>() / (v.len() / 3) as f64;
        assert!((r - 8.0).abs() < 0.5, "mean radius {r}");

        assert_eq!(ws_deform(template, pts.as_ptr(), 0, ptr::null(), &mut out, ptr::null_mut()), WsStatus::Empty);
        ws_mesh_free(out);
        ws_mesh_free(template);
    }
}

#[test]
fn rvol_roundtrip_and_loss() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GridSpec::unit(Dims::cube(12));
    let mask = VoxelGrid::from_fn(spec, |i, j, k| (i.abs_diff(6) + j.abs_diff(6) + k.abs_diff(6) < 4) as u8);
    let image = mask.map(|v| v as f32 * 10.0);
    let (mp, ip) = (dir.path().join("m.rvol"), dir.path().join("x.rvol"));
    rvol::write_file(&mp, &mask).unwrap();
    rvol::write_file(&ip, &image).unwrap();
    let cm = CString::new(mp.to_str().unwrap()).unwrap();
    let ci = CString::new(ip.to_str().unwrap()).unwrap();
    unsafe {
        let (mut m, mut x) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ws_grid_load(cm.as_ptr(), &mut m), WsStatus::Ok);
        assert_eq!(ws_grid_load(ci.as_ptr(), &mut x), WsStatus::Ok);
        assert_eq!(ws_grid_dtype(x), WsDtype::F32);
        let mut dims = [0usize; 3];
        assert_eq!(ws_grid_dims(x, dims.as_mut_ptr()), WsStatus::Ok);
        assert_eq!(dims, [12; 3]);
        let mut buf = vec![0f32; 12 * 12 * 12];
        assert_eq!(ws_grid_copy_f32(x, buf.as_mut_ptr(), buf.len()), WsStatus::Ok);
        assert_eq!(buf, image.data());

        let mut l = WsLoss::default();
        assert_eq!(ws_loss(m, m, x, m, 0.5, 3.0, 1.0, 0.1, &mut l), WsStatus::Ok);
        // a perfect prediction still pays the clamp on every voxel
        let floor = -(1.0 - weakseg::loss::CE_EPS).ln() * 1728.0;
        assert!((l.l_ce - floor).abs() < 1e-9 && l.l_mse < 1e-9, "{l:?}");
        assert_eq!(l.total, l.l_ce + 0.5 * l.l_mse);

        let out = dir.path().join("copy.rvol");
        let co = CString::new(out.to_str().unwrap()).unwrap();
        assert_eq!(ws_grid_save(m, co.as_ptr()), WsStatus::Ok);
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&mp).unwrap());

        let missing = CString::new(dir.path().join("nope.rvol").to_str().unwrap()).unwrap();
        let mut g = ptr::null_mut();
        assert_eq!(ws_grid_load(missing.as_ptr(), &mut g), WsStatus::Io);
        ws_grid_free(m);
        ws_grid_free(x);
    }
}

#[test]
fn fit_points_matches_core_pipeline() {
    let target = weakseg::mesh::icosphere(2, 6.0, weakseg::Point3::new(10.0, 10.0, 10.0)).unwrap();
    let pts: Vec<weakseg::Point3> = target.vertices.iter().step_by(3).copied().collect();
    let flat: Vec<f64> = pts.iter().flat_map(|v| [v[0], v[1], v[2]]).collect();
    let like = empty_grid(20);
    let (mut m, mut r) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        let st = ws_fit_points(flat.as_ptr(), pts.len(), like, ptr::null(), 3, ptr::null(), &mut m, &mut r, ptr::null_mut());
        assert_eq!(st, WsStatus::Ok, "{}", last_error());
        let fit = weakseg::pipeline::fit_points(&pts, &GridSpec::unit(Dims::cube(20)), None, 3, &Default::default()).unwrap();
        let mut v = vec![0.0; 3 * ws_mesh_vertex_count(m)];
        ws_mesh_copy_vertices(m, v.as_mut_ptr(), v.len());
        let expect: Vec<f64> = fit.mesh.vertices.iter().flat_map(|p| [p[0], p[1], p[2]]).collect();
        assert_eq!(v, expect);
        let mut n = 0;
        ws_grid_count_nonzero(r, &mut n);
        assert_eq!(n, fit.raster.count_foreground());
        ws_mesh_free(m);
        ws_grid_free(r);
        ws_grid_free(like);
    }
}

/// Compile a C caller against the generated header and link the static library.
#[test]
fn c_caller_links_against_header() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header_dir = root.join("include");
    assert!(header_dir.join("weakseg.h").exists());
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = root.join("tests/c/smoke.c");
    let syntax = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&header_dir)
        .arg(&src)
        .status()
        .unwrap();
    assert!(syntax.success(), "header does not compile as C99");

    // target/<profile>/deps/<test-bin> -> target/<profile>/libweakseg_ffi.a
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(|d| d.parent()).map(|d| d.join("libweakseg_ffi.a"));
    let Some(lib) = lib.filter(|l| l.exists()) else {
        eprintln!("static library not built; link step skipped");
        return;
    };
    let bin = dir.path().join("smoke");
    let link = std::process::Command::new(cc)
        .arg("-I")
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(link.success(), "linking the C caller failed");
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C caller exited with {:?}", out.status);
    let n: usize = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(n > 400 && n < 600, "sphere of radius 5 has {n} voxels");
}
