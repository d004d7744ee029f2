//! Median-split bounding volume hierarchy over world-space triangles.

use crate::math::Vec3;
use crate::scenegen::{SceneGraph, WorldTriangle};

pub const MAX_LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
        max: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    pub fn grow(&self, p: Vec3) -> Aabb {
        Aabb {
            min: self.min.min(p),
            max: self.max.max(p),
        }
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= o.min[k] && self.max[k] >= o.max[k])
    }

    /// Slab test; entry distance when the box is hit within `[0, t_max]`.
    fn hit(&self, origin: Vec3, inv_dir: Vec3, t_max: f64) -> Option<f64> {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for k in 0..3 {
            let a = (self.min[k] - origin[k]) * inv_dir[k];
            let b = (self.max[k] - origin[k]) * inv_dir[k];
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            // NaN from 0·∞ leaves the bound untouched
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeKind {
    Leaf { start: usize, count: usize },
    Interior { left: usize, right: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub bounds: Aabb,
    pub kind: NodeKind,
}

#[derive(Clone, Debug)]
pub struct Bvh {
    pub nodes: Vec<Node>,
    /// Leaf slots → index into [`Bvh::triangles`].
    pub order: Vec<usize>,
    pub triangles: Vec<WorldTriangle>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: usize,
    /// Barycentric weights of vertices 1 and 2.
    pub u: f64,
    pub v: f64,
}

impl Hit {
    fn closer_than(&self, other: &Option<Hit>) -> bool {
        match other {
            None => true,
            Some(o) => self.t < o.t || (self.t == o.t && self.triangle < o.triangle),
        }
    }
}

/// Möller–Trumbore, two-sided. Returns `(t, u, v)` for `t ∈ (0, t_max]`.
pub fn intersect_triangle(tri: &WorldTriangle, origin: Vec3, dir: Vec3, t_max: f64) -> Option<(f64, f64, f64)> {
    let e1 = tri.v[1] - tri.v[0];
    let e2 = tri.v[2] - tri.v[0];
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri.v[0];
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > 0.0 && t <= t_max).then_some((t, u, v))
}

/// Nearest hit by testing every triangle; reference for [`Bvh::intersect`].
pub fn intersect_exhaustive(triangles: &[WorldTriangle], origin: Vec3, dir: Vec3, t_max: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, tri) in triangles.iter().enumerate() {
        if let Some((t, u, v)) = intersect_triangle(tri, origin, dir, t_max) {
            let h = Hit { t, triangle: i, u, v };
            if h.closer_than(&best) {
                best = Some(h);
            }
        }
    }
    best
}

pub fn build_bvh(scene: &SceneGraph) -> Bvh {
    Bvh::build(scene.world_triangles())
}

impl Bvh {
    pub fn build(triangles: Vec<WorldTriangle>) -> Bvh {
        let centroids: Vec<Vec3> = triangles.iter().map(|t| (t.v[0] + t.v[1] + t.v[2]) / 3.0).collect();
        let bounds: Vec<Aabb> = triangles.iter().map(|t| t.v.iter().fold(Aabb::EMPTY, |b, &p| b.grow(p))).collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / MAX_LEAF_SIZE + 1);
        if !triangles.is_empty() {
            build_recursive(&mut nodes, &mut order, 0, triangles.len(), &centroids, &bounds);
        }
        Bvh { nodes, order, triangles }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_max: f64) -> Option<Hit> {
        self.traverse(origin, dir, t_max, false)
    }

    /// True when anything lies on the segment `(0, t_max]`.
    pub fn occluded(&self, origin: Vec3, dir: Vec3, t_max: f64) -> bool {
        self.traverse(origin, dir, t_max, true).is_some()
    }

    fn traverse(&self, origin: Vec3, dir: Vec3, t_max: f64, any_hit: bool) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = [0usize; 64];
        let mut sp = 0;
        self.nodes[0].bounds.hit(origin, inv_dir, limit)?;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp]];
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &tri_index in &self.order[start..start + count] {
                        if let Some((t, u, v)) = intersect_triangle(&self.triangles[tri_index], origin, dir, limit) {
                            let h = Hit {
                                t,
                                triangle: tri_index,
                                u,
                                v,
                            };
                            if any_hit {
                                return Some(h);
                            }
                            if h.closer_than(&best) {
                                limit = t;
                                best = Some(h);
                            }
                        }
                    }
                }
                NodeKind::Interior { left, right } => {
                    let hl = self.nodes[left].bounds.hit(origin, inv_dir, limit);
                    let hr = self.nodes[right].bounds.hit(origin, inv_dir, limit);
                    // push the farther child first so the nearer one is popped next
                    match (hl, hr) {
                        (Some(a), Some(b)) => {
                            let (near, far) = if a <= b { (left, right) } else { (right, left) };
                            stack[sp] = far;
                            stack[sp + 1] = near;
                            sp += 2;
                        }
                        (Some(_), None) => {
                            stack[sp] = left;
                            sp += 1;
                        }
                        (None, Some(_)) => {
                            stack[sp] = right;
                            sp += 1;
                        }
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }

    /// Checks the structural invariants: every triangle appears in exactly
    /// one leaf and parents contain their children.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = vec![0usize; self.triangles.len()];
        for node in &self.nodes {
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    if count == 0 || count > MAX_LEAF_SIZE {
                        return Err(format!("leaf with {count} triangles"));
                    }
                    for &t in &self.order[start..start + count] {
                        seen[t] += 1;
                        let b = self.triangles[t].v.iter().fold(Aabb::EMPTY, |b, &p| b.grow(p));
                        if !node.bounds.contains(&b) {
                            return Err(format!("leaf does not contain triangle {t}"));
                        }
                    }
                }
                NodeKind::Interior { left, right } => {
                    for c in [left, right] {
                        if !node.bounds.contains(&self.nodes[c].bounds) {
                            return Err(format!("node does not contain child {c}"));
                        }
                    }
                }
            }
        }
        if let Some(t) = seen.iter().position(|&c| c != 1) {
            return Err(format!("triangle {t} referenced {} times", seen[t]));
        }
        Ok(())
    }

    pub fn leaf_triangle_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n.kind {
                NodeKind::Leaf { count, .. } => count,
                NodeKind::Interior { .. } => 0,
            })
            .sum()
    }
}

fn build_recursive(nodes: &mut Vec<Node>, order: &mut [usize], start: usize, end: usize, centroids: &[Vec3], bounds: &[Aabb]) -> usize {
    let slice = &mut order[start..end];
    let node_bounds = slice.iter().fold(Aabb::EMPTY, |b, &i| b.union(&bounds[i]));
    let index = nodes.len();
    let count = end - start;
    if count <= MAX_LEAF_SIZE {
        nodes.push(Node {
            bounds: node_bounds,
            kind: NodeKind::Leaf { start, count },
        });
        return index;
    }
    let cb = slice.iter().fold(Aabb::EMPTY, |b, &i| b.grow(centroids[i]));
    let extent = cb.max - cb.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = count / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
    nodes.push(Node {
        bounds: node_bounds,
        kind: NodeKind::Leaf { start, count: 0 },
    });
    let left = build_recursive(nodes, order, start, start + mid, centroids, bounds);
    let right = build_recursive(nodes, order, start + mid, end, centroids, bounds);
    nodes[index].kind = NodeKind::Interior { left, right };
    index
}
