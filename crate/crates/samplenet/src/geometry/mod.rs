//! Non-learned geometric kernels: point clouds, exact k-nearest-neighbor
//! search, farthest point sampling, and the nearest-neighbor losses.
//!
//! All distances are Euclidean; losses use squared distances. Ties in both
//! FPS and k-NN break to the lowest point index, which makes every routine
//! here deterministic given its inputs.

mod kdtree;
mod losses;

pub use kdtree::SpatialIndex;
pub use losses::{
    chamfer, chamfer_graph, nn_loss_avg, nn_loss_avg_graph, nn_loss_max, nn_loss_max_graph,
    pairwise_sq_dist_graph, sampling_consistency, sampling_consistency_graph,
};

use crate::autodiff::{Graph, TensorId};

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("point cloud must contain at least one point")]
    EmptyCloud,
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("sample size {m} out of range for cloud of {n} points")]
    SampleSize { m: usize, n: usize },
    #[error("k = {k} out of range for cloud of {n} points")]
    NeighborCount { k: usize, n: usize },
    #[error("index {index} out of range for cloud of {n} points")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("expected {expected} coordinates, got {actual}")]
    FlatLength { expected: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

pub type Point = [f64; 3];

pub fn sq_dist(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// An ordered list of 3D points. Order is meaningful: indices are stable
/// identities for sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(GeometryError::NonFinite { index: i });
            }
        }
        Ok(PointCloud { points })
    }

    /// Rebuild from a row-major `[n * 3]` buffer.
    pub fn from_flat(data: &[f64]) -> Result<Self> {
        if data.len() % 3 != 0 {
            return Err(GeometryError::FlatLength {
                expected: data.len() / 3 * 3,
                actual: data.len(),
            });
        }
        Self::new(data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: at least one point
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut pts = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.points.len() {
                return Err(GeometryError::IndexOutOfRange {
                    index: i,
                    n: self.points.len(),
                });
            }
            pts.push(self.points[i]);
        }
        Self::new(pts)
    }

    pub fn centroid(&self) -> Point {
        let mut c = [0.0; 3];
        for p in &self.points {
            for (axis, v) in p.iter().enumerate() {
                c[axis] += v;
            }
        }
        let n = self.points.len() as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    pub fn max_radius(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Register as a non-differentiable `[n, 3]` graph constant.
    pub fn constant(&self, g: &mut Graph) -> TensorId {
        g.constant(vec![self.len(), 3], self.to_flat())
            .expect("cloud buffer matches its shape")
    }
}

/// Farthest point sampling: greedy max-min selection of `m` indices
/// starting from `start`. Distance ties break to the lowest index.
pub fn fps(cloud: &PointCloud, m: usize, start: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if m == 0 || m > n {
        return Err(GeometryError::SampleSize { m, n });
    }
    if start >= n {
        return Err(GeometryError::IndexOutOfRange { index: start, n });
    }
    fps_extend(cloud, vec![start], m)
}

/// Grow an existing distinct seed set to `m` indices with the same greedy
/// max-min rule, measuring distance to the whole seed set. Already-selected
/// indices are never re-chosen.
pub fn fps_complete(cloud: &PointCloud, seed: &[usize], m: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if m == 0 || m > n {
        return Err(GeometryError::SampleSize { m, n });
    }
    let mut selected = Vec::with_capacity(m);
    for &i in seed {
        if i >= n {
            return Err(GeometryError::IndexOutOfRange { index: i, n });
        }
        if !selected.contains(&i) {
            selected.push(i);
        }
        if selected.len() == m {
            return Ok(selected);
        }
    }
    if selected.is_empty() {
        return Err(GeometryError::SampleSize { m: 0, n });
    }
    fps_extend(cloud, selected, m)
}

fn fps_extend(cloud: &PointCloud, mut selected: Vec<usize>, m: usize) -> Result<Vec<usize>> {
    let pts = cloud.points();
    // min squared distance to the selected set; -1 marks selected points so
    // they can never win the argmax, even among duplicate coordinates.
    let mut min_d2 = vec![f64::INFINITY; pts.len()];
    for &s in &selected {
        for (i, d) in min_d2.iter_mut().enumerate() {
            let dd = sq_dist(pts[i], pts[s]);
            if dd < *d {
                *d = dd;
            }
        }
    }
    for &s in &selected {
        min_d2[s] = -1.0;
    }
    while selected.len() < m {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d2.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        selected.push(best);
        min_d2[best] = -1.0;
        for (i, d) in min_d2.iter_mut().enumerate() {
            if *d >= 0.0 {
                let dd = sq_dist(pts[i], pts[best]);
                if dd < *d {
                    *d = dd;
                }
            }
        }
    }
    Ok(selected)
}

#[cfg(test)]
mod tests;
