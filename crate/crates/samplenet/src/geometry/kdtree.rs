//! Exact k-nearest-neighbor queries over a fixed point cloud.
//!
//! A balanced kd-tree with small leaf buckets. Queries return exactly what
//! a brute-force sort by `(distance, index)` would: pruning only discards a
//! subtree when its slab is strictly farther than the current k-th best
//! candidate, so equal-distance points are still visited and the
//! lowest-index tie rule holds exactly.

use super::{GeometryError, Point, PointCloud, Result};

const LEAF_SIZE: usize = 8;

enum Node {
    Leaf {
        start: usize,
        len: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

pub struct SpatialIndex {
    points: Vec<Point>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    root: usize,
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        let points = cloud.points().to_vec();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        let root = build_node(&points, &mut order, 0, points.len(), &mut nodes);
        SpatialIndex {
            points,
            order,
            nodes,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `q`, sorted by ascending distance with
    /// ties by ascending index. Distances are unsquared Euclidean norms.
    pub fn knn(&self, q: Point, k: usize) -> Result<Vec<(usize, f64)>> {
        let n = self.points.len();
        if k == 0 || k > n {
            return Err(GeometryError::NeighborCount { k, n });
        }
        // Max-heap of the current best k candidates, worst on top.
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.search(self.root, q, k, &mut heap);
        heap.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(heap.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect())
    }

    fn search(&self, node: usize, q: Point, k: usize, heap: &mut Vec<(f64, usize)>) {
        match &self.nodes[node] {
            Node::Leaf { start, len } => {
                for &idx in &self.order[*start..*start + *len] {
                    let d2 = super::sq_dist(q, self.points[idx]);
                    push_candidate(heap, k, (d2, idx));
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[*axis] - value;
                let (near, far) = if delta <= 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, q, k, heap);
                // Visit the far side unless the splitting slab is strictly
                // farther than the current worst candidate; on equality we
                // must still descend to honor the index tie rule.
                if heap.len() < k || delta * delta <= heap[0].0 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

fn worse(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
}

fn push_candidate(heap: &mut Vec<(f64, usize)>, k: usize, cand: (f64, usize)) {
    if heap.len() < k {
        heap.push(cand);
        let last = heap.len() - 1;
        heap_up(heap, last);
    } else if worse(heap[0], cand) {
        heap[0] = cand;
        heap_down(heap, 0);
    }
}

fn heap_up(heap: &mut [(f64, usize)], mut i: usize) {
    while i > 0 {
        let parent = (i - 1) / 2;
        if worse(heap[i], heap[parent]) {
            heap.swap(i, parent);
            i = parent;
        } else {
            break;
        }
    }
}

fn heap_down(heap: &mut [(f64, usize)], mut i: usize) {
    loop {
        let (l, r) = (2 * i + 1, 2 * i + 2);
        let mut largest = i;
        if l < heap.len() && worse(heap[l], heap[largest]) {
            largest = l;
        }
        if r < heap.len() && worse(heap[r], heap[largest]) {
            largest = r;
        }
        if largest == i {
            return;
        }
        heap.swap(i, largest);
        i = largest;
    }
}

fn build_node(
    points: &[Point],
    order: &mut [usize],
    start: usize,
    len: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    if len <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, len });
        return nodes.len() - 1;
    }
    // Split on the widest axis at the median.
    let slice = &mut order[start..start + len];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in slice.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let mid = len / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let value = points[slice[mid]][axis];
    let placeholder = nodes.len();
    nodes.push(Node::Leaf { start: 0, len: 0 });
    let left = build_node(points, order, start, mid, nodes);
    let right = build_node(points, order, start + mid, len - mid, nodes);
    nodes[placeholder] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    placeholder
}
