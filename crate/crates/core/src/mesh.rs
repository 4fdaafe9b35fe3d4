//! Graph representation of a tetrahedral mesh.
//!
//! Every element stores its four node indices and, for each node, the index
//! of the element across the opposite face (or [`BOUNDARY`]). The list of
//! boundary faces is kept alongside so ray initialization never has to scan
//! interior elements.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::Vec3;

/// Neighbour sentinel for faces on the outer surface.
pub const BOUNDARY: u32 = u32::MAX;

/// Local node triples of each face, ordered so that the face normal
/// `(b - a) x (c - a)` points out of a positively oriented element.
/// Face `k` is the face opposite node `k`.
pub const FACE_NODES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tetra {
    pub nodes: [u32; 4],
    /// `neighbours[k]` is the element across the face opposite `nodes[k]`.
    pub neighbours: [u32; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct BoundaryFace {
    pub element: u32,
    pub face: u8,
}

#[derive(Debug, Clone)]
pub struct MeshGraph {
    vertices: Vec<Vec3>,
    elements: Vec<Tetra>,
    boundary: Vec<BoundaryFace>,
    bbox: (Vec3, Vec3),
}

fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

fn signed_volume(p: &[Vec3; 4]) -> f64 {
    (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0]))) / 6.0
}

fn face_key(nodes: &[u32; 4], k: usize) -> [u32; 3] {
    let mut key = FACE_NODES[k].map(|i| nodes[i]);
    key.sort_unstable();
    key
}

impl MeshGraph {
    /// Builds the neighbour graph by matching shared faces.
    ///
    /// Elements with negative orientation get two nodes swapped so that every
    /// stored element has positive volume.
    pub fn build(vertices: Vec<Vec3>, node_quads: &[[u32; 4]]) -> Result<Self> {
        if node_quads.is_empty() {
            return Err(Error::ParamOutOfRange("mesh needs at least one element".into()));
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::ParamOutOfRange(format!("vertex {i} is not finite")));
        }
        let n_vert = vertices.len();
        if let Some((e, _)) = node_quads
            .iter()
            .enumerate()
            .find(|(_, q)| q.iter().any(|&n| n as usize >= n_vert))
        {
            return Err(Error::ParamOutOfRange(format!(
                "element {e} references a node outside 0..{n_vert}"
            )));
        }

        let bbox = bounding_box(&vertices);
        let diag = (bbox.1 - bbox.0).norm();
        let vol_eps = 1e-14 * diag.powi(3);

        let mut elements = Vec::with_capacity(node_quads.len());
        for (e, quad) in node_quads.iter().enumerate() {
            let mut nodes = *quad;
            let vol = signed_volume(&nodes.map(|n| vertices[n as usize]));
            if vol.abs() <= vol_eps {
                return Err(Error::DegenerateElement {
                    element: e,
                    volume: vol,
                    threshold: vol_eps,
                });
            }
            if vol < 0.0 {
                nodes.swap(2, 3);
            }
            elements.push(Tetra {
                nodes,
                neighbours: [BOUNDARY; 4],
            });
        }

        let mut faces: HashMap<[u32; 3], (u32, u8)> = HashMap::with_capacity(elements.len() * 2);
        for e in 0..elements.len() {
            for k in 0..4 {
                let key = face_key(&elements[e].nodes, k);
                match faces.entry(key) {
                    Entry::Vacant(slot) => {
                        slot.insert((e as u32, k as u8));
                    }
                    Entry::Occupied(mut slot) => {
                        let (other, other_k) = *slot.get();
                        if other == BOUNDARY {
                            return Err(Error::DuplicateFace { nodes: key });
                        }
                        elements[e].neighbours[k] = other;
                        elements[other as usize].neighbours[other_k as usize] = e as u32;
                        // Mark as fully matched; a third owner is non-manifold.
                        slot.insert((BOUNDARY, 0));
                    }
                }
            }
        }

        let boundary = elements
            .iter()
            .enumerate()
            .flat_map(|(e, t)| {
                (0..4)
                    .filter(move |&k| t.neighbours[k] == BOUNDARY)
                    .map(move |k| BoundaryFace {
                        element: e as u32,
                        face: k as u8,
                    })
            })
            .collect();

        Ok(MeshGraph {
            vertices,
            elements,
            boundary,
            bbox,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn elements(&self) -> &[Tetra] {
        &self.elements
    }

    pub fn boundary(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        self.bbox
    }

    pub fn diagonal(&self) -> f64 {
        (self.bbox.1 - self.bbox.0).norm()
    }

    /// Degeneracy threshold on element volume.
    pub fn vol_eps(&self) -> f64 {
        1e-14 * self.diagonal().powi(3)
    }

    /// Tolerance of the convexity half-space test.
    pub fn conv_eps(&self) -> f64 {
        1e-9 * self.diagonal()
    }

    #[inline]
    pub fn tet_points(&self, element: usize) -> [Vec3; 4] {
        self.elements[element].nodes.map(|n| self.vertices[n as usize])
    }

    /// Global node indices of face `face` of `element`, outward oriented.
    #[inline]
    pub fn face_nodes(&self, element: usize, face: usize) -> [u32; 3] {
        let nodes = &self.elements[element].nodes;
        FACE_NODES[face].map(|i| nodes[i])
    }

    #[inline]
    pub fn face_points(&self, element: usize, face: usize) -> [Vec3; 3] {
        self.face_nodes(element, face)
            .map(|n| self.vertices[n as usize])
    }

    pub fn signed_volume(&self, element: usize) -> f64 {
        signed_volume(&self.tet_points(element))
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.len()).map(|e| self.signed_volume(e)).sum()
    }

    /// Volume enclosed by the boundary surface (divergence theorem).
    pub fn enclosed_volume(&self) -> f64 {
        self.boundary
            .iter()
            .map(|b| {
                let [a, p, q] = self.face_points(b.element as usize, b.face as usize);
                a.dot(&p.cross(&q)) / 6.0
            })
            .sum()
    }

    pub fn centroid(&self, element: usize) -> Vec3 {
        let p = self.tet_points(element);
        (p[0] + p[1] + p[2] + p[3]) / 4.0
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityViolation {
    pub element: u32,
    pub face: u8,
    /// First offending vertex found for this face.
    pub vertex: u32,
    /// Signed distance of that vertex outside the face plane.
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub degenerate_elements: Vec<u32>,
    /// (element, face) pairs whose neighbour does not point back.
    pub reciprocity_violations: Vec<(u32, u8)>,
    /// Boundary edges not shared by exactly two boundary faces.
    pub open_edges: Vec<[u32; 2]>,
    pub convexity_violations: Vec<ConvexityViolation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.degenerate_elements.is_empty()
            && self.reciprocity_violations.is_empty()
            && self.open_edges.is_empty()
            && self.convexity_violations.is_empty()
    }

    pub fn issue_count(&self) -> usize {
        self.degenerate_elements.len()
            + self.reciprocity_violations.len()
            + self.open_edges.len()
            + self.convexity_violations.len()
    }
}

/// Checks the invariants ray propagation relies on. Never fails; an empty
/// report means the mesh is usable.
pub fn validate(graph: &MeshGraph) -> ValidationReport {
    let mut report = ValidationReport::default();
    let vol_eps = graph.vol_eps();
    let n = graph.len();

    for (e, tet) in graph.elements().iter().enumerate() {
        if graph.signed_volume(e).abs() <= vol_eps {
            report.degenerate_elements.push(e as u32);
        }
        for k in 0..4 {
            let m = tet.neighbours[k];
            if m == BOUNDARY {
                continue;
            }
            let back = (m as usize) < n
                && graph.elements()[m as usize].neighbours.contains(&(e as u32));
            if !back {
                report.reciprocity_violations.push((e as u32, k as u8));
            }
        }
    }

    let mut edges: HashMap<[u32; 2], u32> = HashMap::new();
    for b in graph.boundary() {
        let f = graph.face_nodes(b.element as usize, b.face as usize);
        for i in 0..3 {
            let (a, c) = (f[i], f[(i + 1) % 3]);
            *edges.entry([a.min(c), a.max(c)]).or_default() += 1;
        }
    }
    let mut open: Vec<[u32; 2]> = edges
        .into_iter()
        .filter(|&(_, count)| count != 2)
        .map(|(edge, _)| edge)
        .collect();
    open.sort_unstable();
    report.open_edges = open;

    let conv_eps = graph.conv_eps();
    for b in graph.boundary() {
        let [a, p, q] = graph.face_points(b.element as usize, b.face as usize);
        let normal = (p - a).cross(&(q - a));
        let len = normal.norm();
        if len == 0.0 {
            continue;
        }
        let normal = normal / len;
        let outside = graph
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| (i, (v - a).dot(&normal)))
            .find(|&(_, dist)| dist > conv_eps);
        if let Some((vertex, distance)) = outside {
            report.convexity_violations.push(ConvexityViolation {
                element: b.element,
                face: b.face,
                vertex: vertex as u32,
                distance,
            });
        }
    }
    report
}

/// Unordered set of reciprocal element pairs, for comparing graphs.
pub fn neighbour_pairs(graph: &MeshGraph) -> HashSet<(u32, u32)> {
    graph
        .elements()
        .iter()
        .enumerate()
        .flat_map(|(e, t)| {
            t.neighbours
                .iter()
                .filter(|&&m| m != BOUNDARY)
                .map(move |&m| ((e as u32).min(m), (e as u32).max(m)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Attenuation field
// ---------------------------------------------------------------------------

/// One attenuation coefficient per element, per unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationField {
    values: Vec<f32>,
}

impl AttenuationField {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::ParamOutOfRange(format!(
                "attenuation value {i} is not finite"
            )));
        }
        Ok(AttenuationField { values })
    }

    pub fn zeros(len: usize) -> Self {
        AttenuationField {
            values: vec![0.0; len],
        }
    }

    pub fn uniform(len: usize, value: f32) -> Self {
        AttenuationField {
            values: vec![value; len],
        }
    }

    /// Rounds 64-bit values to storage precision.
    pub fn from_f64(values: &[f64]) -> Self {
        AttenuationField {
            values: values.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_matches(&self, graph: &MeshGraph) -> Result<()> {
        if self.len() != graph.len() {
            return Err(Error::DimensionMismatch(format!(
                "field has {} values, mesh has {} elements",
                self.len(),
                graph.len()
            )));
        }
        Ok(())
    }
}
