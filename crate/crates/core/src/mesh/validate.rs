use std::collections::HashMap;

use serde::Serialize;

use super::TriMesh;

/// Outcome of the mesh checks. `valid` holds iff every invariant passes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidityReport {
    pub vertex_count: usize,
    pub face_count: usize,
    pub edge_count: usize,
    pub euler_characteristic: i64,
    /// Every edge borders exactly two faces.
    pub watertight: bool,
    /// Adjacent faces traverse their shared edge in opposite directions.
    pub orientation_consistent: bool,
    /// Enclosed signed volume is positive.
    pub outward: bool,
    pub boundary_edges: usize,
    pub nonmanifold_edges: usize,
    pub degenerate_faces: Vec<usize>,
    pub bad_indices: Vec<usize>,
    pub valid: bool,
}

pub fn validate(mesh: &TriMesh) -> ValidityReport {
    let nv = mesh.vertex_count();
    let mut bad_indices = Vec::new();
    let mut degenerate_faces = Vec::new();
    // directed edge -> use count
    let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(mesh.faces.len() * 3);
    for (f, &[a, b, c]) in mesh.faces.iter().enumerate() {
        if [a, b, c].iter().any(|&i| i as usize >= nv) {
            bad_indices.push(f);
            continue;
        }
        if a == b || b == c || c == a || mesh.face_area(f) <= 0.0 {
            degenerate_faces.push(f);
        }
        for e in [(a, b), (b, c), (c, a)] {
            *directed.entry(e).or_default() += 1;
        }
    }

    let mut undirected: HashMap<(u32, u32), (u32, u32)> = HashMap::with_capacity(directed.len());
    for (&(u, v), &n) in &directed {
        let (key, fwd) = if u < v { ((u, v), true) } else { ((v, u), false) };
        let slot = undirected.entry(key).or_default();
        if fwd {
            slot.0 += n;
        } else {
            slot.1 += n;
        }
    }
    let mut boundary_edges = 0;
    let mut nonmanifold_edges = 0;
    let mut orientation_consistent = true;
    for &(fwd, bwd) in undirected.values() {
        match fwd + bwd {
            1 => boundary_edges += 1,
            2 => {}
            _ => nonmanifold_edges += 1,
        }
        if fwd > 1 || bwd > 1 {
            orientation_consistent = false;
        }
    }
    let edge_count = undirected.len();
    let watertight = boundary_edges == 0 && nonmanifold_edges == 0 && !mesh.faces.is_empty();
    let euler_characteristic = nv as i64 - edge_count as i64 + mesh.face_count() as i64;
    let outward = bad_indices.is_empty() && mesh.signed_volume() > 0.0;
    let valid = watertight
        && orientation_consistent
        && outward
        && euler_characteristic == 2
        && degenerate_faces.is_empty()
        && bad_indices.is_empty();
    ValidityReport {
        vertex_count: nv,
        face_count: mesh.face_count(),
        edge_count,
        euler_characteristic,
        watertight,
        orientation_consistent,
        outward,
        boundary_edges,
        nonmanifold_edges,
        degenerate_faces,
        bad_indices,
        valid,
    }
}
