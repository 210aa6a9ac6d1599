//! Triangle meshes: the spherical template and its deformed copies.

mod closest;
mod icosphere;
mod laplacian;
pub mod obj;
mod validate;

pub use closest::{closest_point_on_triangle, point_to_surface_distance, SurfaceHit, SurfaceIndex};
pub use icosphere::{icosphere, MAX_SUBDIVISIONS};
pub use laplacian::{uniform_laplacian, SparseOperator};
pub use validate::{validate, ValidityReport};

use crate::Point3;

/// Closed triangle surface. Faces wind counter-clockwise seen from outside,
/// using the right-handed cross product on `(z, y, x)` coordinate tuples.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[u32; 3]>) -> Self {
        TriMesh { vertices, faces }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn triangle(&self, f: usize) -> [Point3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Unnormalized face normal `(b - a) x (c - a)`.
    pub fn face_normal(&self, f: usize) -> Point3 {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_normal(f).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume; positive for outward-oriented closed meshes.
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn centroid(&self) -> Point3 {
        let sum = self.vertices.iter().fold(Point3::zeros(), |acc, v| acc + v);
        sum / self.vertices.len().max(1) as f64
    }

    pub fn translated(&self, offset: Point3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Point3, Point3) {
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Undirected edges `(lo, hi)`, sorted and deduplicated.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut e: Vec<(u32, u32)> = self
            .faces
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(u, v)| if u < v { (u, v) } else { (v, u) })
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Axis-aligned box `[lo, hi]` as 8 vertices and 12 outward faces.
    pub fn cuboid(lo: Point3, hi: Point3) -> TriMesh {
        let v = |i: usize| {
            Point3::new(
                if i & 4 != 0 { hi[0] } else { lo[0] },
                if i & 2 != 0 { hi[1] } else { lo[1] },
                if i & 1 != 0 { hi[2] } else { lo[2] },
            )
        };
        let vertices = (0..8).map(v).collect();
        // quads listed outward-facing for the (z, y, x) right-handed frame
        let quads: [[u32; 4]; 6] = [
            [0, 1, 3, 2], // z = lo
            [4, 6, 7, 5], // z = hi
            [0, 4, 5, 1], // y = lo
            [2, 3, 7, 6], // y = hi
            [0, 2, 6, 4], // x = lo
            [1, 5, 7, 3], // x = hi
        ];
        let faces = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        TriMesh { vertices, faces }
    }
}
