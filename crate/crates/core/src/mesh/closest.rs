//! Exact point-to-surface queries.
//!
//! [`point_to_surface_distance`] scans every face; [`SurfaceIndex`] answers
//! the same query through a bounding-volume hierarchy. Both resolve ties
//! on distance by the lowest face id, so their answers are identical.

use serde::Serialize;

use super::TriMesh;
use crate::Point3;

/// Closest surface point of a query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SurfaceHit {
    pub distance: f64,
    pub face: usize,
    /// Weights of the face's three vertices; they sum to 1.
    pub bary: [f64; 3],
    pub point: [f64; 3],
}

/// Closest point of triangle `abc` to `p`, returned as barycentric weights.
pub fn closest_point_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> [f64; 3] {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [1.0 - v - w, v, w]
}

#[inline]
fn face_query(mesh: &TriMesh, f: usize, p: &Point3) -> (f64, [f64; 3], Point3) {
    let [a, b, c] = mesh.triangle(f);
    let bary = closest_point_on_triangle(p, &a, &b, &c);
    let q = a * bary[0] + b * bary[1] + c * bary[2];
    ((p - q).norm_squared(), bary, q)
}

fn hit(d2: f64, face: usize, bary: [f64; 3], q: Point3) -> SurfaceHit {
    SurfaceHit { distance: d2.sqrt(), face, bary, point: [q[0], q[1], q[2]] }
}

/// Minimum distance from `p` to any face, by exhaustive scan.
pub fn point_to_surface_distance(mesh: &TriMesh, p: &Point3) -> SurfaceHit {
    let mut best = (f64::INFINITY, 0usize, [1.0, 0.0, 0.0], Point3::zeros());
    for f in 0..mesh.face_count() {
        let (d2, bary, q) = face_query(mesh, f, p);
        if d2 < best.0 {
            best = (d2, f, bary, q);
        }
    }
    hit(best.0, best.1, best.2, best.3)
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Point3,
    hi: Point3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb { lo: Point3::repeat(f64::INFINITY), hi: Point3::repeat(f64::NEG_INFINITY) }
    }
    fn grow(&mut self, p: &Point3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }
    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb { lo: self.lo.inf(&o.lo), hi: self.hi.sup(&o.hi) }
    }
    fn dist2(&self, p: &Point3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.lo[a] {
                self.lo[a] - p[a]
            } else if p[a] > self.hi[a] {
                p[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Debug)]
enum Node {
    Leaf { bbox: Aabb, start: usize, end: usize },
    Inner { bbox: Aabb, left: usize, right: usize },
}

impl Node {
    fn bbox(&self) -> &Aabb {
        match self {
            Node::Leaf { bbox, .. } | Node::Inner { bbox, .. } => bbox,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Bounding-volume hierarchy over a mesh's faces for repeated closest-point queries.
pub struct SurfaceIndex<'m> {
    mesh: &'m TriMesh,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'m> SurfaceIndex<'m> {
    pub fn build(mesh: &'m TriMesh) -> Self {
        let boxes: Vec<Aabb> = (0..mesh.face_count())
            .map(|f| {
                let mut b = Aabb::empty();
                for v in mesh.triangle(f) {
                    b.grow(&v);
                }
                b
            })
            .collect();
        let centers: Vec<Point3> = boxes.iter().map(|b| (b.lo + b.hi) * 0.5).collect();
        let mut order: Vec<usize> = (0..mesh.face_count()).collect();
        let mut nodes = Vec::with_capacity(2 * mesh.face_count() / LEAF_SIZE + 1);
        if !order.is_empty() {
            let n = order.len();
            build_node(&mut nodes, &mut order, 0, n, &boxes, &centers);
        }
        SurfaceIndex { mesh, order, nodes }
    }

    pub fn closest(&self, p: &Point3) -> SurfaceHit {
        let mut best = (f64::INFINITY, usize::MAX, [1.0, 0.0, 0.0], Point3::zeros());
        if self.nodes.is_empty() {
            return hit(best.0, 0, best.2, best.3);
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            // equal distance still visited so the lowest face id wins ties
            if node.bbox().dist2(p) > best.0 {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &f in &self.order[start..end] {
                        let (d2, bary, q) = face_query(self.mesh, f, p);
                        if d2 < best.0 || (d2 == best.0 && f < best.1) {
                            best = (d2, f, bary, q);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let (dl, dr) = (self.nodes[left].bbox().dist2(p), self.nodes[right].bbox().dist2(p));
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        hit(best.0, best.1, best.2, best.3)
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    end: usize,
    boxes: &[Aabb],
    centers: &[Point3],
) -> usize {
    let bbox = order[start..end].iter().fold(Aabb::empty(), |acc, &f| acc.merge(&boxes[f]));
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bbox, start, end });
        return id;
    }
    let ext = bbox.hi - bbox.lo;
    let axis = if ext[0] >= ext[1] && ext[0] >= ext[2] {
        0
    } else if ext[1] >= ext[2] {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centers[a][axis].total_cmp(&centers[b][axis]).then(a.cmp(&b))
    });
    nodes.push(Node::Leaf { bbox, start, end }); // placeholder
    let left = build_node(nodes, order, start, mid, boxes, centers);
    let right = build_node(nodes, order, mid, end, boxes, centers);
    nodes[id] = Node::Inner { bbox, left, right };
    id
}
