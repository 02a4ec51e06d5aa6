use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Point3, Vector3};

use super::{Aabb, MeshError};

const LEAF_SIZE: usize = 8;

/// One k-NN result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    left: usize,
    right: usize,
    start: usize,
    end: usize,
    leaf: bool,
}

/// Exact k-d tree over an oriented point set.
///
/// Results are ordered by `(squared distance, point index)`, so they agree exactly with a
/// linear scan that uses the same ordering.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3<f64>>,
    normals: Vec<Vector3<f64>>,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn new(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Self {
        assert_eq!(points.len(), normals.len(), "one normal per point");
        let mut index = Self {
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
            order: (0..points.len()).collect(),
            points,
            normals,
        };
        if !index.points.is_empty() {
            index.build_node(0, index.points.len());
        }
        index
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let bounds = Aabb::from_points(self.order[start..end].iter().map(|&i| &self.points[i]));
        let id = self.nodes.len();
        self.nodes.push(Node { bounds, left: 0, right: 0, start, end, leaf: true });
        let extent = bounds.max - bounds.min;
        let axis = extent.imax();
        if end - start <= LEAF_SIZE || extent[axis] <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        let node = &mut self.nodes[id];
        node.left = left;
        node.right = right;
        node.leaf = false;
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    /// The `k` nearest points to `query`, ascending by distance then index.
    pub fn knn(&self, query: &Point3<f64>, k: usize) -> Result<Vec<Neighbor>, MeshError> {
        if k == 0 || k > self.points.len() {
            return Err(MeshError::KTooLarge { k, available: self.points.len() });
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            // equal distances are still visited: a lower index may win the tie
            if heap.len() == k && node.bounds.distance_squared(query) > heap.peek().unwrap().d2 {
                continue;
            }
            if node.leaf {
                for &i in &self.order[node.start..node.end] {
                    let c = Candidate { d2: (self.points[i] - query).norm_squared(), index: i };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            } else {
                let dl = self.nodes[node.left].bounds.distance_squared(query);
                let dr = self.nodes[node.right].bounds.distance_squared(query);
                if dl <= dr {
                    stack.push(node.right);
                    stack.push(node.left);
                } else {
                    stack.push(node.left);
                    stack.push(node.right);
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                point: self.points[c.index],
                normal: self.normals[c.index],
                distance: c.d2.sqrt(),
            })
            .collect())
    }

    /// Indices of all points within `radius` of `query` (inclusive), ascending.
    pub fn within_radius(&self, query: &Point3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.points.is_empty() {
            return out;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bounds.distance_squared(query) > r2 {
                continue;
            }
            if node.leaf {
                out.extend(
                    self.order[node.start..node.end]
                        .iter()
                        .copied()
                        .filter(|&i| (self.points[i] - query).norm_squared() <= r2),
                );
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        out.sort_unstable();
        out
    }

    /// True when some point inside the box `[min, max]` satisfies `pred`. Stops at the first hit.
    pub fn any_in_box(&self, min: &Point3<f64>, max: &Point3<f64>, mut pred: impl FnMut(usize) -> bool) -> bool {
        if self.points.is_empty() {
            return false;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let b = &node.bounds;
            if (0..3).any(|i| b.min[i] > max[i] || b.max[i] < min[i]) {
                continue;
            }
            if node.leaf {
                for &i in &self.order[node.start..node.end] {
                    let p = &self.points[i];
                    if (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]) && pred(i) {
                        return true;
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        false
    }
}
