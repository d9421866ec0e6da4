//! Geometric kernels over point sets and axis-aligned boxes.
//!
//! Everything here is a linear scan; the callers work at desk scale. Ties are
//! always broken toward the lowest index.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dist_sq(self, other: Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(self, other: Point3) -> f64 {
        math::sqrt(self.dist_sq(other))
    }

    pub fn offset(self, d: [f64; 3]) -> Self {
        Point3::new(self.x + d[0], self.y + d[1], self.z + d[2])
    }
}

/// Axis-aligned box. `extent` holds the full widths along x, y, z (w, h, l).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub center: Point3,
    pub extent: [f64; 3],
}

impl Box3 {
    pub fn new(center: Point3, extent: [f64; 3]) -> Result<Self> {
        let b = Box3 { center, extent };
        b.validate()?;
        Ok(b)
    }

    pub fn from_min_max(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let center = Point3::new(
            0.5 * (min[0] + max[0]),
            0.5 * (min[1] + max[1]),
            0.5 * (min[2] + max[2]),
        );
        Box3::new(center, [max[0] - min[0], max[1] - min[1], max[2] - min[2]])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.is_finite() {
            return Err(Error::invalid("box center must be finite"));
        }
        if self.extent.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::invalid(format!(
                "box extents must be finite and non-negative, got {:?}",
                self.extent
            )));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.extent[0] * self.extent[1] * self.extent[2]
    }

    pub fn min(&self) -> [f64; 3] {
        let c = self.center.to_array();
        [
            c[0] - 0.5 * self.extent[0],
            c[1] - 0.5 * self.extent[1],
            c[2] - 0.5 * self.extent[2],
        ]
    }

    pub fn max(&self) -> [f64; 3] {
        let c = self.center.to_array();
        [
            c[0] + 0.5 * self.extent[0],
            c[1] + 0.5 * self.extent[1],
            c[2] + 0.5 * self.extent[2],
        ]
    }

    pub fn contains(&self, p: Point3) -> bool {
        let (lo, hi) = (self.min(), self.max());
        let p = p.to_array();
        (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
    }
}

/// Non-empty ordered point set. Index identity is meaningful to every caller.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    attributes: Option<Vec<Vec<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud must not be empty"));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("point {i} is not finite")));
        }
        Ok(PointCloud {
            points,
            attributes: None,
        })
    }

    pub fn with_attributes(mut self, attributes: Vec<Vec<f64>>) -> Result<Self> {
        if attributes.len() != self.points.len() {
            return Err(Error::invalid(format!(
                "{} attribute rows for {} points",
                attributes.len(),
                self.points.len()
            )));
        }
        self.attributes = Some(attributes);
        Ok(self)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn attributes(&self) -> Option<&[Vec<f64>]> {
        self.attributes.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn centroid(points: &[Point3]) -> Option<Point3> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy, sz) = points
        .iter()
        .fold((0.0, 0.0, 0.0), |(x, y, z), p| (x + p.x, y + p.y, z + p.z));
    Some(Point3::new(sx / n, sy / n, sz / n))
}

/// How farthest point sampling picks its first point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FpsSeed {
    /// The point farthest from the cloud centroid.
    #[default]
    FarthestFromCentroid,
    Index(usize),
}

/// Greedy max-min farthest point sampling. Returns `m` distinct indices in selection order.
pub fn fps(points: &[Point3], m: usize, seed: FpsSeed) -> Result<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("fps on an empty cloud"));
    }
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "fps needs 1 <= m <= {n}, got m = {m}"
        )));
    }
    let first = match seed {
        FpsSeed::Index(i) if i < n => i,
        FpsSeed::Index(i) => {
            return Err(Error::invalid(format!(
                "fps seed index {i} out of range {n}"
            )))
        }
        FpsSeed::FarthestFromCentroid => {
            let c = centroid(points).expect("non-empty");
            argmax_lowest(points.iter().map(|p| p.dist_sq(c)))
        }
    };

    let mut selected = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut min_d: Vec<f64> = points.iter().map(|p| p.dist_sq(points[first])).collect();
    selected.push(first);
    taken[first] = true;
    while selected.len() < m {
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d.iter().enumerate() {
            if !taken[i] && d > best_d {
                best = i;
                best_d = d;
            }
        }
        selected.push(best);
        taken[best] = true;
        let p = points[best];
        for (d, q) in min_d.iter_mut().zip(points) {
            let nd = q.dist_sq(p);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(selected)
}

fn argmax_lowest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Member indices for each query center. Every group is non-empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborGroups {
    groups: Vec<Vec<usize>>,
}

impl NeighborGroups {
    pub fn new(groups: Vec<Vec<usize>>, n_points: usize) -> Result<Self> {
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::invalid(format!("group {g} is empty")));
            }
            if let Some(&bad) = members.iter().find(|&&i| i >= n_points) {
                return Err(Error::invalid(format!(
                    "group {g} references point {bad} of {n_points}"
                )));
            }
        }
        Ok(NeighborGroups { groups })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

pub const DEFAULT_BALL_RADIUS: f64 = 0.3;
pub const DEFAULT_BALL_MAX_K: usize = 16;

/// Groups up to `max_k` cloud points within `radius` of each center, nearest first.
///
/// A center with no point inside the radius gets the single globally nearest point.
pub fn ball_query(
    centers: &[Point3],
    cloud: &[Point3],
    radius: f64,
    max_k: usize,
) -> Result<NeighborGroups> {
    if cloud.is_empty() {
        return Err(Error::invalid("ball query over an empty cloud"));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!(
            "ball query radius must be > 0, got {radius}"
        )));
    }
    if max_k == 0 {
        return Err(Error::invalid("ball query max_k must be >= 1"));
    }
    let r2 = radius * radius;
    let mut groups = Vec::with_capacity(centers.len());
    for c in centers {
        let mut inside: Vec<(f64, usize)> = cloud
            .iter()
            .enumerate()
            .map(|(i, p)| (p.dist_sq(*c), i))
            .filter(|(d, _)| *d <= r2)
            .collect();
        if inside.is_empty() {
            let nearest = argmin_lowest(cloud.iter().map(|p| p.dist_sq(*c)));
            groups.push(vec![nearest]);
            continue;
        }
        inside.sort_by(|a, b| cmp_dist_index(*a, *b));
        inside.truncate(max_k);
        groups.push(inside.into_iter().map(|(_, i)| i).collect());
    }
    Ok(NeighborGroups { groups })
}

fn cmp_dist_index(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

fn argmin_lowest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Symmetric proximity graph with self-loops, normalized as `D^-1/2 (A + I) D^-1/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialAdjacency {
    size: usize,
    edges: Vec<(usize, usize)>,
    normalized: Vec<f64>,
}

impl SpatialAdjacency {
    /// Builds the normalized matrix from an undirected edge list (self-loops are implicit).
    pub fn from_edges(size: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("adjacency over zero nodes"));
        }
        let mut binary = vec![0.0; size * size];
        for &(i, j) in edges {
            if i >= size || j >= size {
                return Err(Error::invalid(format!(
                    "edge ({i}, {j}) outside {size} nodes"
                )));
            }
            if i != j {
                binary[i * size + j] = 1.0;
                binary[j * size + i] = 1.0;
            }
        }
        for i in 0..size {
            binary[i * size + i] = 1.0;
        }
        let mut canonical = Vec::new();
        for i in 0..size {
            for j in (i + 1)..size {
                if binary[i * size + j] != 0.0 {
                    canonical.push((i, j));
                }
            }
        }
        let inv_sqrt_deg: Vec<f64> = (0..size)
            .map(|i| {
                let deg: f64 = binary[i * size..(i + 1) * size].iter().sum();
                1.0 / math::sqrt(deg)
            })
            .collect();
        let normalized = (0..size * size)
            .map(|k| binary[k] * inv_sqrt_deg[k / size] * inv_sqrt_deg[k % size])
            .collect();
        Ok(SpatialAdjacency {
            size,
            edges: canonical,
            normalized,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Undirected edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Row-major `size x size` normalized matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.normalized
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.normalized[i * self.size + j]
    }
}

/// k-nearest-neighbour graph over `positions`, symmetrized by union.
pub fn knn_spatial_adjacency(positions: &[Point3], k: usize) -> Result<SpatialAdjacency> {
    let m = positions.len();
    if m < 2 {
        return Err(Error::invalid(format!(
            "adjacency needs at least 2 nodes, got {m}"
        )));
    }
    if k == 0 || k >= m {
        return Err(Error::invalid(format!(
            "adjacency needs 1 <= k < {m}, got {k}"
        )));
    }
    let mut edges = Vec::with_capacity(m * k);
    for (i, p) in positions.iter().enumerate() {
        let mut others: Vec<(f64, usize)> = positions
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, q)| (p.dist_sq(*q), j))
            .collect();
        others.sort_by(|a, b| cmp_dist_index(*a, *b));
        edges.extend(others.iter().take(k).map(|&(_, j)| (i, j)));
    }
    SpatialAdjacency::from_edges(m, &edges)
}

/// Axis-aligned intersection over union.
///
/// Two zero-volume boxes score 1 when their centers coincide and 0 otherwise.
pub fn iou_aabb(a: &Box3, b: &Box3) -> f64 {
    let (amin, amax, bmin, bmax) = (a.min(), a.max(), b.min(), b.max());
    let mut inter = 1.0;
    for axis in 0..3 {
        let lo = if amin[axis] > bmin[axis] {
            amin[axis]
        } else {
            bmin[axis]
        };
        let hi = if amax[axis] < bmax[axis] {
            amax[axis]
        } else {
            bmax[axis]
        };
        let overlap = hi - lo;
        if overlap <= 0.0 {
            inter = 0.0;
            break;
        }
        inter *= overlap;
    }
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return if a.volume() == 0.0 && b.volume() == 0.0 && a.center == b.center {
            1.0
        } else {
            0.0
        };
    }
    let iou = inter / union;
    iou.clamp(0.0, 1.0)
}

/// Per-axis absolute center differences.
pub fn axis_center_gaps(a: &Box3, b: &Box3) -> [f64; 3] {
    let (ca, cb) = (a.center.to_array(), b.center.to_array());
    [
        math::abs(ca[0] - cb[0]),
        math::abs(ca[1] - cb[1]),
        math::abs(ca[2] - cb[2]),
    ]
}

/// Index and center of the object whose center is closest to `p`.
pub fn nearest_object_centroid(p: Point3, objects: &[Box3]) -> Result<(usize, Point3)> {
    if objects.is_empty() {
        return Err(Error::invalid(
            "nearest object lookup over an empty object list",
        ));
    }
    let i = argmin_lowest(objects.iter().map(|o| o.center.dist_sq(p)));
    Ok((i, objects[i].center))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    fn unit_cube(c: Point3) -> Box3 {
        Box3::new(c, [1.0, 1.0, 1.0]).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                p(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn fps_picks_extremes() {
        let cloud = [p(0.0, 0.0, 0.0), p(10.0, 0.0, 0.0), p(5.0, 0.0, 0.0)];
        assert_eq!(fps(&cloud, 2, FpsSeed::Index(0)).unwrap(), vec![0, 1]);
    }

    #[test]
    fn fps_exhaustion_is_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = random_points(&mut rng, 9);
        let mut idx = fps(&cloud, 9, FpsSeed::default()).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn fps_errors() {
        assert!(fps(&[], 1, FpsSeed::default()).is_err());
        assert!(fps(&[p(0.0, 0.0, 0.0)], 2, FpsSeed::default()).is_err());
        assert!(fps(&[p(0.0, 0.0, 0.0)], 0, FpsSeed::default()).is_err());
        assert!(fps(&[p(0.0, 0.0, 0.0)], 1, FpsSeed::Index(1)).is_err());
    }

    #[test]
    fn fps_default_seed_is_farthest_from_centroid() {
        let cloud = [
            p(0.0, 0.0, 0.0),
            p(1.0, 0.0, 0.0),
            p(-5.0, 0.0, 0.0),
            p(1.5, 0.0, 0.0),
        ];
        assert_eq!(fps(&cloud, 1, FpsSeed::default()).unwrap(), vec![2]);
    }

    #[test]
    fn fps_ties_take_lowest_index() {
        let cloud = [p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(-1.0, 0.0, 0.0)];
        assert_eq!(fps(&cloud, 2, FpsSeed::Index(0)).unwrap(), vec![0, 1]);
    }

    #[test]
    fn ball_query_filters_by_radius() {
        let cloud = [p(0.1, 0.0, 0.0), p(0.0, 0.2, 0.0), p(5.0, 0.0, 0.0)];
        let g = ball_query(&[p(0.0, 0.0, 0.0)], &cloud, 0.3, 8).unwrap();
        assert_eq!(g.groups(), &[vec![0, 1]]);
    }

    #[test]
    fn ball_query_falls_back_to_nearest() {
        let cloud = [p(3.0, 0.0, 0.0), p(2.0, 0.0, 0.0), p(5.0, 0.0, 0.0)];
        let g = ball_query(&[p(0.0, 0.0, 0.0)], &cloud, 0.3, 8).unwrap();
        assert_eq!(g.groups(), &[vec![1]]);
    }

    #[test]
    fn ball_query_truncates_nearest_first() {
        let cloud = [p(0.2, 0.0, 0.0), p(0.1, 0.0, 0.0), p(0.0, 0.05, 0.0)];
        let g = ball_query(&[p(0.0, 0.0, 0.0)], &cloud, 0.3, 2).unwrap();
        assert_eq!(g.groups(), &[vec![2, 1]]);
    }

    #[test]
    fn ball_query_errors() {
        assert!(ball_query(&[p(0.0, 0.0, 0.0)], &[], 0.3, 4).is_err());
        assert!(ball_query(&[p(0.0, 0.0, 0.0)], &[p(0.0, 0.0, 0.0)], 0.0, 4).is_err());
        assert!(ball_query(&[p(0.0, 0.0, 0.0)], &[p(0.0, 0.0, 0.0)], 0.3, 0).is_err());
    }

    #[test]
    fn ball_query_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let cloud = random_points(&mut rng, 40);
            let centers = random_points(&mut rng, 6);
            let (radius, max_k) = (0.5, 5);
            let got = ball_query(&centers, &cloud, radius, max_k).unwrap();
            for (c, group) in centers.iter().zip(got.groups()) {
                // Oracle: repeatedly take the closest not-yet-taken point inside the radius.
                let mut expect = Vec::new();
                let mut used = vec![false; cloud.len()];
                for _ in 0..max_k {
                    let mut best: Option<usize> = None;
                    for (i, q) in cloud.iter().enumerate() {
                        if used[i] || q.dist(*c) > radius {
                            continue;
                        }
                        if best.is_none_or(|b| q.dist(*c) < cloud[b].dist(*c)) {
                            best = Some(i);
                        }
                    }
                    match best {
                        Some(b) => {
                            used[b] = true;
                            expect.push(b);
                        }
                        None => break,
                    }
                }
                if expect.is_empty() {
                    let mut nearest = 0;
                    for i in 1..cloud.len() {
                        if cloud[i].dist(*c) < cloud[nearest].dist(*c) {
                            nearest = i;
                        }
                    }
                    expect.push(nearest);
                }
                assert_eq!(group, &expect);
            }
        }
    }

    #[test]
    fn adjacency_collinear_middle_joins_both_ends() {
        let pts = [p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(2.5, 0.0, 0.0)];
        let adj = knn_spatial_adjacency(&pts, 1).unwrap();
        assert_eq!(adj.edges(), &[(0, 1), (1, 2)]);
        // Degrees with self-loops: 2, 3, 2.
        let expect_01 = 1.0 / (2.0f64.sqrt() * 3.0f64.sqrt());
        assert!((adj.get(0, 1) - expect_01).abs() < 1e-15);
        assert!((adj.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(adj.get(0, 2), 0.0);
    }

    #[test]
    fn adjacency_errors() {
        assert!(knn_spatial_adjacency(&[p(0.0, 0.0, 0.0)], 1).is_err());
        assert!(knn_spatial_adjacency(&[p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0)], 2).is_err());
        assert!(knn_spatial_adjacency(&[p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0)], 0).is_err());
    }

    #[test]
    fn adjacency_edges_match_pairwise_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts = random_points(&mut rng, 12);
        let k = 3;
        let adj = knn_spatial_adjacency(&pts, k).unwrap();
        let mut expect = alloc::collections::BTreeSet::new();
        for i in 0..pts.len() {
            // j is a neighbour of i iff fewer than k other points are strictly closer to i.
            for j in 0..pts.len() {
                if i == j {
                    continue;
                }
                let dij = pts[i].dist(pts[j]);
                let closer = (0..pts.len())
                    .filter(|&l| l != i && l != j)
                    .filter(|&l| {
                        let dil = pts[i].dist(pts[l]);
                        dil < dij || (dil == dij && l < j)
                    })
                    .count();
                if closer < k {
                    expect.insert((i.min(j), i.max(j)));
                }
            }
        }
        assert_eq!(
            adj.edges(),
            expect.into_iter().collect::<Vec<_>>().as_slice()
        );
    }

    #[test]
    fn iou_basic_cases() {
        let a = unit_cube(p(0.0, 0.0, 0.0));
        assert_eq!(iou_aabb(&a, &a), 1.0);
        assert_eq!(iou_aabb(&a, &unit_cube(p(3.0, 0.0, 0.0))), 0.0);
        let shifted = unit_cube(p(0.5, 0.0, 0.0));
        assert!((iou_aabb(&a, &shifted) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_zero_volume_rules() {
        let z = Box3::new(p(1.0, 1.0, 1.0), [0.0, 2.0, 2.0]).unwrap();
        let z2 = Box3::new(p(1.0, 1.0, 1.0), [0.0, 0.0, 0.0]).unwrap();
        let z3 = Box3::new(p(1.0, 1.0, 1.5), [0.0, 0.0, 0.0]).unwrap();
        assert_eq!(iou_aabb(&z, &z2), 1.0);
        assert_eq!(iou_aabb(&z2, &z3), 0.0);
        assert_eq!(iou_aabb(&z2, &unit_cube(p(1.0, 1.0, 1.0))), 0.0);
    }

    #[test]
    fn box_rejects_negative_extent() {
        assert!(Box3::new(p(0.0, 0.0, 0.0), [1.0, -1.0, 1.0]).is_err());
        assert!(Box3::new(p(f64::NAN, 0.0, 0.0), [1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn gaps_match_worked_example() {
        let a = Box3::new(p(198.0, 171.0, 47.0), [7.0, 96.0, 81.0]).unwrap();
        let b = Box3::new(p(141.0, 110.0, 58.0), [21.0, 16.0, 96.0]).unwrap();
        assert_eq!(axis_center_gaps(&a, &b), [57.0, 61.0, 11.0]);
        assert_eq!(axis_center_gaps(&b, &a), [57.0, 61.0, 11.0]);
        assert_eq!(axis_center_gaps(&a, &a), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn nearest_centroid_rules() {
        let objs = [unit_cube(p(1.0, 0.0, 0.0)), unit_cube(p(-1.0, 0.0, 0.0))];
        assert_eq!(
            nearest_object_centroid(p(1.0, 0.0, 0.0), &objs).unwrap().0,
            0
        );
        assert_eq!(
            nearest_object_centroid(p(0.0, 0.0, 0.0), &objs).unwrap().0,
            0
        );
        assert_eq!(
            nearest_object_centroid(p(-0.9, 0.0, 0.0), &objs).unwrap().0,
            1
        );
        assert!(nearest_object_centroid(p(0.0, 0.0, 0.0), &[]).is_err());
    }

    #[test]
    fn nearest_centroid_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centers = random_points(&mut rng, 6);
        let objs: Vec<Box3> = centers.iter().map(|c| unit_cube(*c)).collect();
        for q in random_points(&mut rng, 50) {
            let dists: Vec<f64> = centers.iter().map(|c| c.dist(q)).collect();
            let best = dists
                .iter()
                .enumerate()
                .fold(0, |b, (i, d)| if *d < dists[b] { i } else { b });
            let (i, c) = nearest_object_centroid(q, &objs).unwrap();
            assert_eq!(i, best);
            assert_eq!(c, centers[best]);
        }
    }

    fn arb_box() -> impl Strategy<Value = Box3> {
        (
            prop::array::uniform3(-5.0f64..5.0),
            prop::array::uniform3(0.0f64..4.0),
        )
            .prop_map(|(c, e)| Box3::new(Point3::from_array(c), e).unwrap())
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou_aabb(&a, &b);
            prop_assert_eq!(ab, iou_aabb(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn iou_never_grows_when_moving_apart(a in arb_box(), b in arb_box(), axis in 0usize..3, step in 0.01f64..2.0) {
            let mut moved = b;
            let dir = if b.center.to_array()[axis] >= a.center.to_array()[axis] { 1.0 } else { -1.0 };
            let mut d = [0.0; 3];
            d[axis] = dir * step;
            moved.center = b.center.offset(d);
            prop_assert!(iou_aabb(&a, &moved) <= iou_aabb(&a, &b) + 1e-12);
        }

        #[test]
        fn adjacency_symmetric_positive_diagonal(
            pts in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 2..14),
            k in 1usize..6,
        ) {
            let pts: Vec<Point3> = pts.into_iter().map(Point3::from_array).collect();
            let k = k.min(pts.len() - 1);
            let adj = knn_spatial_adjacency(&pts, k).unwrap();
            for i in 0..pts.len() {
                prop_assert!(adj.get(i, i) > 0.0);
                for j in 0..pts.len() {
                    prop_assert_eq!(adj.get(i, j), adj.get(j, i));
                }
            }
        }

        #[test]
        fn fps_is_deterministic(pts in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 1..20), m in 1usize..20) {
            let pts: Vec<Point3> = pts.into_iter().map(Point3::from_array).collect();
            let m = m.min(pts.len());
            prop_assert_eq!(fps(&pts, m, FpsSeed::default()).unwrap(), fps(&pts, m, FpsSeed::default()).unwrap());
        }
    }
}
