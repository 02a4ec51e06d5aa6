use nalgebra::{Point3, Vector3};

use super::Aabb;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    // children for internal nodes, face range into `order` for leaves
    left: usize,
    right: usize,
    start: usize,
    end: usize,
    leaf: bool,
}

/// Bounding-volume hierarchy over mesh triangles.
#[derive(Debug, Clone)]
pub(crate) struct TriangleBvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl TriangleBvh {
    pub(crate) fn build(vertices: &[Point3<f64>], faces: &[[usize; 3]]) -> Self {
        let boxes: Vec<Aabb> = faces
            .iter()
            .map(|f| Aabb::from_points(f.iter().map(|&i| &vertices[i])))
            .collect();
        let centers: Vec<Point3<f64>> = boxes.iter().map(Aabb::center).collect();
        let mut bvh = Self {
            nodes: Vec::with_capacity(2 * faces.len() / LEAF_SIZE + 1),
            order: (0..faces.len()).collect(),
        };
        bvh.build_node(0, faces.len(), &boxes, &centers);
        bvh
    }

    fn build_node(&mut self, start: usize, end: usize, boxes: &[Aabb], centers: &[Point3<f64>]) -> usize {
        let bounds = self.order[start..end]
            .iter()
            .fold(Aabb::empty(), |acc, &f| acc.merge(&boxes[f]));
        let id = self.nodes.len();
        self.nodes.push(Node { bounds, left: 0, right: 0, start, end, leaf: true });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let cb = Aabb::from_points(self.order[start..end].iter().map(|&f| &centers[f]));
        let extent = cb.max - cb.min;
        let axis = extent.imax();
        if extent[axis] <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centers[a][axis].total_cmp(&centers[b][axis]).then(a.cmp(&b))
        });
        let left = self.build_node(start, mid, boxes, centers);
        let right = self.build_node(mid, end, boxes, centers);
        let node = &mut self.nodes[id];
        node.left = left;
        node.right = right;
        node.leaf = false;
        id
    }

    pub(crate) fn bounds(&self) -> Aabb {
        self.nodes.first().map(|n| n.bounds).unwrap_or_else(Aabb::empty)
    }

    /// Returns (face, point, barycentric, squared distance) of the nearest surface point.
    pub(crate) fn closest(
        &self,
        vertices: &[Point3<f64>],
        faces: &[[usize; 3]],
        q: &Point3<f64>,
    ) -> (usize, Point3<f64>, [f64; 3], f64) {
        let mut best = (usize::MAX, Point3::origin(), [1.0, 0.0, 0.0], f64::INFINITY);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bounds.distance_squared(q) > best.3 {
                continue;
            }
            if node.leaf {
                for &f in &self.order[node.start..node.end] {
                    let [a, b, c] = faces[f].map(|i| vertices[i]);
                    let (p, bary) = closest_point_on_triangle(q, &a, &b, &c);
                    let d2 = (p - q).norm_squared();
                    if d2 < best.3 || (d2 == best.3 && f < best.0) {
                        best = (f, p, bary, d2);
                    }
                }
            } else {
                let (l, r) = (node.left, node.right);
                let dl = self.nodes[l].bounds.distance_squared(q);
                let dr = self.nodes[r].bounds.distance_squared(q);
                // nearer child popped first
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best
    }

    pub(crate) fn query_aabb(&self, region: &Aabb, out: &mut Vec<usize>) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if !node.bounds.intersects(region) {
                continue;
            }
            if node.leaf {
                out.extend_from_slice(&self.order[node.start..node.end]);
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
    }
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk), with barycentric weights.
pub(crate) fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> (Point3<f64>, [f64; 3]) {
    let ab: Vector3<f64> = b - a;
    let ac: Vector3<f64> = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}
