//! R*-tree over the bounding boxes of the boundary faces, used to find the
//! element where a ray first enters the mesh.
//!
//! The tree is built by one-at-a-time R* insertion (choose-subtree by
//! overlap/volume enlargement, margin-driven split axis, forced reinsertion
//! of 30% of an overflowing node once per level and insertion). After
//! construction it is flattened breadth-first so every node's children sit in
//! one contiguous range, and queries walk it depth-first with a fixed-size
//! stack.
//!
//! Boundary faces of box-like meshes have zero extent along one axis, so the
//! volume used by the heuristics adds a small padding to every extent; the
//! stored boxes themselves are exact.

use arrayvec::ArrayVec;

use crate::error::{Error, Result};
use crate::geom::{aabb_ray_intersect, triangle_hit, Precision, Ray};
use crate::mesh::MeshGraph;
use crate::Vec3;

pub const MIN_FAN: usize = 4;
pub const MAX_FAN: usize = 10;
/// Safety margin used by the leaf triangle tests.
pub const EPS0: f64 = 1e-9;
/// Deepest tree the fixed query stack supports.
pub const MAX_DEPTH: usize = 16;
const STACK_CAPACITY: usize = MAX_FAN * MAX_DEPTH;
const REINSERT_COUNT: usize = (MAX_FAN + 1) * 3 / 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn of_points(points: &[Vec3]) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.lo = b.lo.inf(p);
            b.hi = b.hi.sup(p);
        }
        b
    }

    fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            lo: self.lo.inf(&other.lo),
            hi: self.hi.sup(&other.hi),
        }
    }

    fn center(&self) -> Vec3 {
        (self.lo + self.hi) * 0.5
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.lo[a] <= other.lo[a] && self.hi[a] >= other.hi[a])
    }

    fn margin(&self) -> f64 {
        (self.hi - self.lo).sum()
    }

    fn volume(&self, pad: f64) -> f64 {
        (0..3).map(|a| self.hi[a] - self.lo[a] + pad).product()
    }

    fn overlap(&self, other: &Aabb, pad: f64) -> f64 {
        (0..3)
            .map(|a| (self.hi[a].min(other.hi[a]) - self.lo[a].max(other.lo[a]) + pad).max(0.0))
            .product()
    }
}

/// One boundary face stored in a leaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafEntry {
    pub element: u32,
    pub face: u8,
    pub bbox: Aabb,
}

#[derive(Debug, Clone, Copy)]
struct FlatNode {
    bbox: Aabb,
    /// Range into `nodes` (internal) or `entries` (leaf).
    start: u32,
    count: u32,
    leaf: bool,
}

/// Result of a successful entry search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstHit {
    pub element: u32,
    pub face: u8,
    pub t: f64,
}

/// Shape summary of one node, for structural checks.
#[derive(Debug, Clone, Copy)]
pub struct NodeInfo {
    pub depth: usize,
    pub fanout: usize,
    pub leaf: bool,
    pub bbox: Aabb,
}

#[derive(Debug, Clone)]
pub struct RStarTree {
    nodes: Vec<FlatNode>,
    entries: Vec<LeafEntry>,
    depth: usize,
    tol: f64,
}

impl RStarTree {
    pub fn build(graph: &MeshGraph) -> Result<Self> {
        if graph.boundary().is_empty() {
            return Err(Error::EmptyBoundary);
        }
        let entries: Vec<LeafEntry> = graph
            .boundary()
            .iter()
            .map(|b| LeafEntry {
                element: b.element,
                face: b.face,
                bbox: Aabb::of_points(&graph.face_points(b.element as usize, b.face as usize)),
            })
            .collect();
        let mean_extent = entries
            .iter()
            .map(|e| e.bbox.margin() / 3.0)
            .sum::<f64>()
            / entries.len() as f64;
        let pad = (0.1 * mean_extent).max(1e-12 * graph.diagonal());

        let mut builder = Builder::new(&entries, pad);
        for i in 0..entries.len() {
            builder.insert_entry(i);
        }
        let tree = builder.flatten(1e-8 * graph.diagonal());
        assert!(tree.depth <= MAX_DEPTH, "R*-tree deeper than the query stack allows");
        Ok(tree)
    }

    /// Number of levels; a tree whose root is a leaf has depth 1.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn entries(&self) -> &[LeafEntry] {
        &self.entries
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Every node in breadth-first order with its depth (root = 0).
    pub fn node_infos(&self) -> Vec<NodeInfo> {
        let mut depths = vec![0usize; self.nodes.len()];
        let mut out = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.leaf {
                for c in n.start..n.start + n.count {
                    depths[c as usize] = depths[i] + 1;
                }
            }
            out.push(NodeInfo {
                depth: depths[i],
                fanout: n.count as usize,
                leaf: n.leaf,
                bbox: n.bbox,
            });
        }
        out
    }

    /// Children boxes of node `i` (nodes or entries), for containment checks.
    pub fn child_boxes(&self, i: usize) -> Vec<Aabb> {
        let n = &self.nodes[i];
        let range = n.start as usize..(n.start + n.count) as usize;
        if n.leaf {
            self.entries[range].iter().map(|e| e.bbox).collect()
        } else {
            self.nodes[range].iter().map(|c| c.bbox).collect()
        }
    }

    /// First boundary face hit by the ray (smallest `t >= 0`, ties to the
    /// lowest element index).
    pub fn first_hit(&self, graph: &MeshGraph, ray: &Ray) -> Option<FirstHit> {
        self.first_hit_with(graph, ray, Precision::Double, &mut 0)
    }

    /// As [`first_hit`](Self::first_hit), with the predicate precision
    /// selectable and the number of expanded nodes added to `visits`.
    pub fn first_hit_with(
        &self,
        graph: &MeshGraph,
        ray: &Ray,
        precision: Precision,
        visits: &mut usize,
    ) -> Option<FirstHit> {
        let tol = Vec3::repeat(self.tol);
        let box_hit = |b: &Aabb| aabb_ray_intersect(ray, &(b.lo - tol), &(b.hi + tol));

        let mut stack: ArrayVec<(u32, f64), STACK_CAPACITY> = ArrayVec::new();
        if let Some(t) = box_hit(&self.nodes[0].bbox) {
            stack.push((0, t));
        }
        let mut best: Option<FirstHit> = None;
        while let Some((idx, t_box)) = stack.pop() {
            if best.is_some_and(|b| t_box > b.t) {
                continue;
            }
            *visits += 1;
            let node = &self.nodes[idx as usize];
            let range = node.start as usize..(node.start + node.count) as usize;
            if node.leaf {
                for e in &self.entries[range] {
                    let tri = graph.face_points(e.element as usize, e.face as usize);
                    let Some(t) = triangle_hit(precision, ray, &tri, EPS0) else {
                        continue;
                    };
                    if t < 0.0 {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some(b) => t < b.t || (t == b.t && e.element < b.element),
                    };
                    if better {
                        best = Some(FirstHit {
                            element: e.element,
                            face: e.face,
                            t,
                        });
                    }
                }
            } else {
                let mut kids: ArrayVec<(u32, f64), MAX_FAN> = ArrayVec::new();
                for c in range {
                    if let Some(t) = box_hit(&self.nodes[c].bbox) {
                        if best.is_none_or(|b| t <= b.t) {
                            kids.push((c as u32, t));
                        }
                    }
                }
                // Nearest child on top of the stack.
                kids.sort_unstable_by(|a, b| b.1.total_cmp(&a.1));
                for k in kids {
                    stack
                        .try_push(k)
                        .expect("R*-tree descent stack overflow");
                }
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

struct BuildNode {
    /// 0 for leaves.
    level: usize,
    bbox: Aabb,
    /// Entry indices (leaf) or node indices.
    children: Vec<usize>,
}

struct Builder<'a> {
    entries: &'a [LeafEntry],
    nodes: Vec<BuildNode>,
    root: usize,
    pad: f64,
    reinserted: Vec<bool>,
}

impl<'a> Builder<'a> {
    fn new(entries: &'a [LeafEntry], pad: f64) -> Self {
        Builder {
            entries,
            nodes: vec![BuildNode {
                level: 0,
                bbox: Aabb::empty(),
                children: Vec::with_capacity(MAX_FAN + 1),
            }],
            root: 0,
            pad,
            reinserted: vec![false],
        }
    }

    fn item_box(&self, level: usize, item: usize) -> Aabb {
        if level == 0 {
            self.entries[item].bbox
        } else {
            self.nodes[item].bbox
        }
    }

    fn recompute_box(&mut self, n: usize) {
        let level = self.nodes[n].level;
        let bbox = self.nodes[n]
            .children
            .iter()
            .fold(Aabb::empty(), |acc, &c| acc.union(&self.item_box(level, c)));
        self.nodes[n].bbox = bbox;
    }

    fn insert_entry(&mut self, entry: usize) {
        self.reinserted.iter_mut().for_each(|f| *f = false);
        self.insert(entry, self.entries[entry].bbox, 0);
    }

    /// Inserts `item` (an entry for level 0, a node otherwise) into a node
    /// at `level`.
    fn insert(&mut self, item: usize, bbox: Aabb, level: usize) {
        let mut path = vec![self.root];
        let mut node = self.root;
        while self.nodes[node].level > level {
            node = self.choose_subtree(node, &bbox);
            path.push(node);
        }
        self.nodes[node].children.push(item);
        for &n in &path {
            self.nodes[n].bbox = self.nodes[n].bbox.union(&bbox);
        }

        let mut i = path.len() - 1;
        loop {
            let n = path[i];
            if self.nodes[n].children.len() <= MAX_FAN {
                return;
            }
            let lvl = self.nodes[n].level;
            if i > 0 && !self.reinserted[lvl] {
                self.reinserted[lvl] = true;
                let removed = self.take_reinsert_items(n);
                for j in (0..i).rev() {
                    self.recompute_box(path[j]);
                }
                for (child, child_box) in removed {
                    self.insert(child, child_box, lvl);
                }
                return;
            }
            let sibling = self.split(n);
            if i == 0 {
                let bbox = self.nodes[n].bbox.union(&self.nodes[sibling].bbox);
                self.nodes.push(BuildNode {
                    level: lvl + 1,
                    bbox,
                    children: vec![n, sibling],
                });
                self.root = self.nodes.len() - 1;
                self.reinserted.push(false);
                return;
            }
            self.nodes[path[i - 1]].children.push(sibling);
            i -= 1;
        }
    }

    fn choose_subtree(&self, node: usize, bbox: &Aabb) -> usize {
        let pad = self.pad;
        let n = &self.nodes[node];
        let kids = &n.children;
        let key = |c: usize| -> (f64, f64, f64) {
            let cb = self.nodes[c].bbox;
            let grown = cb.union(bbox);
            let vol_growth = grown.volume(pad) - cb.volume(pad);
            if n.level == 1 {
                let overlap_growth: f64 = kids
                    .iter()
                    .filter(|&&o| o != c)
                    .map(|&o| {
                        let ob = self.nodes[o].bbox;
                        grown.overlap(&ob, pad) - cb.overlap(&ob, pad)
                    })
                    .sum();
                (overlap_growth, vol_growth, cb.volume(pad))
            } else {
                (vol_growth, cb.volume(pad), 0.0)
            }
        };
        let mut best = kids[0];
        let mut best_key = key(best);
        for &c in &kids[1..] {
            let k = key(c);
            if k.partial_cmp(&best_key) == Some(std::cmp::Ordering::Less) {
                best = c;
                best_key = k;
            }
        }
        best
    }

    fn take_reinsert_items(&mut self, n: usize) -> Vec<(usize, Aabb)> {
        let level = self.nodes[n].level;
        let center = self.nodes[n].bbox.center();
        let mut items: Vec<(usize, Aabb, f64)> = self.nodes[n]
            .children
            .iter()
            .map(|&c| {
                let b = self.item_box(level, c);
                (c, b, (b.center() - center).norm_squared())
            })
            .collect();
        items.sort_by(|a, b| b.2.total_cmp(&a.2));
        let removed: Vec<(usize, Aabb, f64)> = items.drain(..REINSERT_COUNT).collect();
        self.nodes[n].children = items.iter().map(|x| x.0).collect();
        self.recompute_box(n);
        // Close reinsert: nearest of the removed items first.
        removed.into_iter().rev().map(|(c, b, _)| (c, b)).collect()
    }

    /// R* split of an overflowing node; returns the new sibling.
    fn split(&mut self, n: usize) -> usize {
        let level = self.nodes[n].level;
        let pad = self.pad;
        let items: Vec<(usize, Aabb)> = self.nodes[n]
            .children
            .iter()
            .map(|&c| (c, self.item_box(level, c)))
            .collect();
        let total = items.len();

        let sorted = |axis: usize, by_upper: bool| -> Vec<(usize, Aabb)> {
            let mut v = items.clone();
            v.sort_by(|a, b| {
                let (ka, kb) = if by_upper {
                    (a.1.hi[axis], b.1.hi[axis])
                } else {
                    (a.1.lo[axis], b.1.lo[axis])
                };
                ka.total_cmp(&kb)
            });
            v
        };
        let prefix_suffix = |v: &[(usize, Aabb)]| -> (Vec<Aabb>, Vec<Aabb>) {
            let mut pre = Vec::with_capacity(total);
            let mut acc = Aabb::empty();
            for it in v {
                acc = acc.union(&it.1);
                pre.push(acc);
            }
            let mut suf = vec![Aabb::empty(); total];
            let mut acc = Aabb::empty();
            for i in (0..total).rev() {
                acc = acc.union(&v[i].1);
                suf[i] = acc;
            }
            (pre, suf)
        };
        let splits = MIN_FAN..=total - MIN_FAN;

        let mut best_axis = 0;
        let mut best_margin = f64::INFINITY;
        for axis in 0..3 {
            let mut margin = 0.0;
            for by_upper in [false, true] {
                let (pre, suf) = prefix_suffix(&sorted(axis, by_upper));
                for k in splits.clone() {
                    margin += pre[k - 1].margin() + suf[k].margin();
                }
            }
            if margin < best_margin {
                best_margin = margin;
                best_axis = axis;
            }
        }

        let mut best: Option<(f64, f64, Vec<(usize, Aabb)>, usize)> = None;
        for by_upper in [false, true] {
            let v = sorted(best_axis, by_upper);
            let (pre, suf) = prefix_suffix(&v);
            for k in splits.clone() {
                let overlap = pre[k - 1].overlap(&suf[k], pad);
                let volume = pre[k - 1].volume(pad) + suf[k].volume(pad);
                let better = match &best {
                    None => true,
                    Some((o, vol, _, _)) => overlap < *o || (overlap == *o && volume < *vol),
                };
                if better {
                    best = Some((overlap, volume, v.clone(), k));
                }
            }
        }
        let (_, _, order, k) = best.expect("split candidates exist");
        self.nodes[n].children = order[..k].iter().map(|x| x.0).collect();
        self.recompute_box(n);
        self.nodes.push(BuildNode {
            level,
            bbox: Aabb::empty(),
            children: order[k..].iter().map(|x| x.0).collect(),
        });
        let sibling = self.nodes.len() - 1;
        self.recompute_box(sibling);
        sibling
    }

    fn flatten(self, tol: f64) -> RStarTree {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut entries = Vec::with_capacity(self.entries.len());
        let mut queue = std::collections::VecDeque::from([self.root]);
        // Children of a node are enqueued together, so in breadth-first
        // order they occupy one contiguous block starting at `next_slot`.
        let mut next_slot = 1u32;
        while let Some(b) = queue.pop_front() {
            let node = &self.nodes[b];
            if node.level == 0 {
                let start = entries.len() as u32;
                entries.extend(node.children.iter().map(|&c| self.entries[c]));
                nodes.push(FlatNode {
                    bbox: node.bbox,
                    start,
                    count: node.children.len() as u32,
                    leaf: true,
                });
            } else {
                nodes.push(FlatNode {
                    bbox: node.bbox,
                    start: next_slot,
                    count: node.children.len() as u32,
                    leaf: false,
                });
                next_slot += node.children.len() as u32;
                queue.extend(node.children.iter().copied());
            }
        }
        RStarTree {
            nodes,
            entries,
            depth: self.nodes[self.root].level + 1,
            tol,
        }
    }
}
