use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use weakseg::grid::{iou, rvol, Dims, GridSpec, VoxelGrid};
use weakseg::mesh::{icosphere, obj};
use weakseg::pipeline::{fit_points, DEFAULT_SUBDIVISIONS};
use weakseg::service::{read_bundle, rle_decode, router, AppState, ServiceConfig, SlicePayload};
use weakseg::Point3;

const N: usize = 32;

fn volume() -> VoxelGrid<f32> {
    let spec = GridSpec::new(Dims::cube(N), [1.0, 1.0, 1.0], [0.0; 3]).unwrap();
    VoxelGrid::from_fn(spec, |i, j, k| {
        let d = [i, j, k].map(|c| c as f64 + 0.5 - 16.0);
        (d.iter().map(|v| v * v).sum::<f64>().sqrt() < 8.0) as u8 as f32 * 100.0
    })
}

/// Vertices of a small icosphere stretched into an ellipsoid.
fn sphere_points() -> Vec<[f64; 3]> {
    icosphere(1, 1.0, Point3::zeros())
        .unwrap()
        .vertices
        .iter()
        .map(|v| [16.0 + 9.0 * v.x, 16.0 + 7.0 * v.y, 16.0 + 6.0 * v.z])
        .collect()
}

struct Client {
    app: axum::Router,
}

impl Client {
    fn new() -> Self {
        Client { app: router(AppState::new(ServiceConfig::default())) }
    }

    async fn send(&self, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn json(&self, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Value) {
        let (s, b) = self.send(method, uri, body).await;
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    async fn create(&self) -> String {
        let (s, v) = self.json("POST", "/v1/sessions", rvol::encode(&volume())).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    async fn add(&self, id: &str, pts: &[[f64; 3]]) -> (StatusCode, Value) {
        self.json("POST", &format!("/v1/sessions/{id}/points"), json!({ "points": pts }).to_string().into_bytes()).await
    }

    async fn slice(&self, id: &str, q: &str) -> (StatusCode, Value) {
        self.json("GET", &format!("/v1/sessions/{id}/slice?{q}"), vec![]).await
    }
}

#[tokio::test]
async fn create_and_fetch_metadata() {
    let c = Client::new();
    let a = c.create().await;
    let b = c.create().await;
    assert_ne!(a, b);
    let (s, v) = c.json("GET", &format!("/v1/sessions/{a}"), vec![]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["dims"], json!([N, N, N]));
    assert_eq!(v["revision"], json!(0));
    assert_eq!(v["intensity_range"], json!([0.0, 100.0]));
    assert_eq!(v["stale"], json!(true));

    let (s, _) = c.json("GET", "/v1/sessions/nope", vec![]).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn truncated_volume_is_rejected_with_byte_counts() {
    let c = Client::new();
    let mut bytes = rvol::encode(&volume());
    bytes.truncate(bytes.len() - 7);
    let (s, v) = c.json("POST", "/v1/sessions", bytes).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "bad_volume");
    let detail = v["detail"].as_str().unwrap();
    assert!(detail.contains(&(N * N * N * 4).to_string()), "{detail}");
    assert!(detail.contains(&(N * N * N * 4 - 7).to_string()), "{detail}");
}

#[tokio::test]
async fn point_edits() {
    let c = Client::new();
    let id = c.create().await;
    let (s, v) = c.add(&id, &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["count"], 2);
    assert_eq!(v["revision"], 1);
    let first = v["ids"][0].as_u64().unwrap();

    let (s, v) = c.add(&id, &[[7.0, 7.0, 7.0], [1.0, 2.0, 3.0]]).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "duplicate_point");

    let (s, v) = c.add(&id, &[[7.0, 7.0, 7.0], [1.0, 2.0, 40.0]]).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "point_out_of_bounds");
    assert!(v["detail"].as_str().unwrap().contains("40"));

    // rejected batches leave nothing behind
    let (_, meta) = c.json("GET", &format!("/v1/sessions/{id}"), vec![]).await;
    assert_eq!(meta["points"].as_array().unwrap().len(), 2);
    assert_eq!(meta["revision"], 1);

    let (s, v) = c.json("DELETE", &format!("/v1/sessions/{id}/points/{first}"), vec![]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["removed"], true);
    assert_eq!(v["revision"], 2);

    let (s, v) = c.json("DELETE", &format!("/v1/sessions/{id}/points/{first}"), vec![]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["removed"], false);
    assert_eq!(v["revision"], 2);
    assert!(v["warning"].is_string());

    let (s, v) = c.json("POST", &format!("/v1/sessions/{id}/points"), b"{\"pts\":1}".to_vec()).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
}

#[tokio::test]
async fn deform_flow() {
    let c = Client::new();
    let id = c.create().await;
    let pts = sphere_points();
    let (s, v) = c.json("POST", &format!("/v1/sessions/{id}/mesh"), vec![]).await;
    assert!(s == StatusCode::METHOD_NOT_ALLOWED || s == StatusCode::NOT_FOUND, "{v}");

    c.add(&id, &pts[..3]).await;
    let (s, v) = c.json("POST", &format!("/v1/sessions/{id}/deform"), vec![]).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "too_few_points");

    let (s, v) = c.slice(&id, "axis=0&index=16&overlay=true").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["stale"], true);
    assert!(v["overlay"].is_null());

    c.add(&id, &pts[3..]).await;
    let (s, first) = c.json("POST", &format!("/v1/sessions/{id}/deform"), vec![]).await;
    assert_eq!(s, StatusCode::OK, "{first}");
    let rev = first["revision"].as_u64().unwrap();
    assert_eq!(first["mesh_revision"].as_u64(), Some(rev));
    assert!(first["report"]["final_displacement"].is_number());
    assert!(first["raster_voxels"].as_u64().unwrap() > 1000);

    let (s, v) = c.slice(&id, "axis=0&index=16&overlay=true").await;
    assert_eq!(s, StatusCode::OK);
    let sl: SlicePayload = serde_json::from_value(v).unwrap();
    assert!(!sl.stale);
    assert_eq!((sl.rows, sl.cols), (N, N));
    let ov = sl.overlay.unwrap();
    assert_eq!(ov.raster_revision, rev);
    let contour = rle_decode(&ov.rle);
    assert_eq!(contour.len(), N * N);
    assert!(contour.iter().filter(|&&b| b != 0).count() > 20);

    let (s, mesh_text) = c.send("GET", &format!("/v1/sessions/{id}/mesh"), vec![]).await;
    assert_eq!(s, StatusCode::OK);
    let mesh = obj::parse_obj(std::str::from_utf8(&mesh_text).unwrap()).unwrap();
    assert_eq!(mesh.face_count(), 20 * 4usize.pow(DEFAULT_SUBDIVISIONS));

    // the refit starts from the previous result
    let (_, second) = c.json("POST", &format!("/v1/sessions/{id}/deform"), b"  ".to_vec()).await;
    assert!(second["revision"].as_u64().unwrap() > rev);
    assert!(
        second["report"]["iterations_used"].as_u64() < first["report"]["iterations_used"].as_u64(),
        "{first} then {second}"
    );

    c.add(&id, &[[16.0, 16.0, 25.0]]).await;
    let (_, v) = c.slice(&id, "axis=0&index=16&overlay=true").await;
    assert_eq!(v["stale"], true);
    assert!(v["overlay"].is_null());
    let (_, meta) = c.json("GET", &format!("/v1/sessions/{id}"), vec![]).await;
    assert_eq!(meta["stale"], true);
}

#[tokio::test]
async fn coplanar_first_deform_conflicts() {
    let c = Client::new();
    let id = c.create().await;
    c.add(&id, &[[10.0, 10.0, 10.0], [10.0, 20.0, 10.0], [10.0, 10.0, 20.0], [10.0, 20.0, 20.0], [10.0, 15.0, 15.0]])
        .await;
    let (s, v) = c.json("POST", &format!("/v1/sessions/{id}/deform"), vec![]).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "coplanar_points");
}

#[tokio::test]
async fn slice_query_validation() {
    let c = Client::new();
    let id = c.create().await;
    for (q, code) in [("axis=3&index=0", "bad_axis"), ("axis=0&index=32", "bad_index"), ("axis=0", "bad_query"), ("axis=x&index=0", "bad_query")] {
        let (s, v) = c.slice(&id, q).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{q}");
        assert_eq!(v["error"], code, "{q}");
    }
    let (s, v) = c.slice(&id, "axis=2&index=5").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["revision"], 0);
}

#[tokio::test]
async fn export_matches_direct_fit() {
    let c = Client::new();
    let id = c.create().await;
    let pts = sphere_points();
    c.add(&id, &pts).await;
    c.json("POST", &format!("/v1/sessions/{id}/deform"), vec![]).await;
    let (s, bytes) = c.send("GET", &format!("/v1/sessions/{id}/export"), vec![]).await;
    assert_eq!(s, StatusCode::OK);
    let b = read_bundle(&bytes).unwrap();
    assert_eq!(b.manifest.session_id, id);
    assert_eq!(b.manifest.revision, 2);
    assert_eq!(b.annotation.len(), pts.len());
    for f in ["annotation.json", "template.obj", "deformed.obj", "raster.rvol", "report.json", "manifest.json"] {
        assert!(b.manifest.files.iter().any(|x| x == f) || f == "manifest.json", "{f} missing");
    }

    let points: Vec<Point3> = pts.iter().map(|p| Point3::from(*p)).collect();
    let spec = *volume().spec();
    let fit = fit_points(&points, &spec, None, DEFAULT_SUBDIVISIONS, &Default::default()).unwrap();
    assert_eq!(b.mesh.as_ref().unwrap().vertices, fit.mesh.vertices);
    assert_eq!(b.raster.as_ref().unwrap(), &fit.raster);
    assert_eq!(b.template.unwrap(), fit.template);

    let truth = VoxelGrid::from_fn(spec, |i, j, k| (volume().get(i, j, k) > 0.0) as u8);
    let (s, _) = c.send("POST", &format!("/v1/sessions/{id}/truth"), rvol::encode(&truth)).await;
    assert_eq!(s, StatusCode::OK);
    let (_, v) = c.json("GET", &format!("/v1/sessions/{id}/debug/iou"), vec![]).await;
    assert_eq!(v["iou"].as_f64().unwrap(), iou(&fit.raster, &truth).unwrap());
}

#[tokio::test]
async fn revisions_only_grow() {
    let c = Arc::new(Client::new());
    let id = c.create().await;
    let pts = sphere_points();
    let mut last = 0;
    for chunk in pts.chunks(7) {
        let (_, v) = c.add(&id, chunk).await;
        let r = v["revision"].as_u64().unwrap();
        assert!(r > last);
        last = r;
        if v["count"].as_u64().unwrap() >= 8 {
            let (_, d) = c.json("POST", &format!("/v1/sessions/{id}/deform"), vec![]).await;
            let r = d["revision"].as_u64().unwrap();
            assert!(r > last);
            last = r;
        }
    }
}
