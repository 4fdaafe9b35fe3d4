//! Ray propagation through the element graph and the matrix-free
//! projection / backprojection operators built on it.
//!
//! A ray starts at the boundary element returned by the R*-tree and walks
//! from element to element through the face where it leaves. At every
//! element the safety margin starts at `eps0` and grows geometrically until
//! two faces accept the ray. A zero-length crossing (`t1 == t2`) whose exit
//! face would lead straight back to the previous element leaves through the
//! entry face instead, so rays pass through vertex and edge fans without
//! backtracking. If zero-length crossings still bring the walk back to an
//! element it crossed at the same parameter, the walk jumps to the element
//! of the surrounding fan that reaches furthest along the ray.
//!
//! Projection is parallel over pixels with no shared state. Backprojection
//! splits rays into a fixed set of chunks (independent of the worker count),
//! accumulates each chunk into its own buffer in ray order, and merges the
//! buffers pairwise in a fixed tree, so results are bitwise reproducible for
//! any number of threads.

use arrayvec::ArrayVec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{intersect_tet_points, triangle_hit, Precision, Ray, TetraHit};
use crate::mesh::{AttenuationField, MeshGraph, BOUNDARY};
use crate::rstar::RStarTree;
use crate::scanner::ScanGeometry;

/// Parameters of the propagation loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub eps0: f64,
    pub eps_growth: f64,
    /// Growth steps allowed per element before giving up on the ray.
    pub max_escalations: u32,
    pub max_elements_per_ray: usize,
    pub precision: Precision,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            eps0: 1e-9,
            eps_growth: 10.0,
            max_escalations: 12,
            max_elements_per_ray: 1_000_000,
            precision: Precision::Double,
        }
    }
}

impl TraceConfig {
    /// Defaults with the per-ray element cap sized for `graph`:
    /// `10 * ceil(cbrt(n)) + 100`.
    pub fn for_mesh(graph: &MeshGraph) -> Self {
        let n = graph.len() as f64;
        TraceConfig {
            max_elements_per_ray: 10 * n.cbrt().ceil() as usize + 100,
            ..Default::default()
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.eps_growth > 1.0 && self.max_elements_per_ray > 0) {
            return Err(Error::ParamOutOfRange(format!("invalid trace config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AbortReason {
    /// No two faces accepted the ray even at the largest margin.
    EpsilonExhausted,
    /// More elements visited than the per-ray cap allows.
    LoopSuspected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RayStatus {
    Completed,
    MissedMesh,
    Aborted(AbortReason),
}

/// One element crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub element: u32,
    pub hit: TetraHit,
    /// Intersection length in world units.
    pub chord: f64,
    /// Margin that produced the hit.
    pub eps: f64,
    /// Growth steps needed for this element.
    pub escalations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub status: RayStatus,
    pub elements_visited: usize,
    pub escalations_used: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayTraceOutcome {
    pub integral: f64,
    pub elements_visited: usize,
    pub escalations_used: u32,
    pub status: RayStatus,
}

/// Walks the element graph from `start`, calling `visit` for every crossing.
pub fn walk_from(
    graph: &MeshGraph,
    start: u32,
    ray: &Ray,
    cfg: &TraceConfig,
    mut visit: impl FnMut(&Segment),
) -> PathOutcome {
    let elements = graph.elements();
    let length = ray.length();
    let mut prev = BOUNDARY;
    let mut current = start;
    let mut visited = 0usize;
    let mut escalations_used = 0u32;
    // Furthest exit parameter so far, the elements crossed since it last
    // advanced and the lowest exit parameter among those crossings. Per-face
    // parameters at one vertex can disagree by many ulps, so a stall covers
    // the band `[stall_lo, front]` rather than a single point.
    let mut front = f64::NEG_INFINITY;
    let mut stall_lo = front;
    let mut stalled: ArrayVec<u32, STALL_CAPACITY> = ArrayVec::new();
    let outcome = |status, visited, escalations_used| PathOutcome {
        status,
        elements_visited: visited,
        escalations_used,
    };

    loop {
        if visited >= cfg.max_elements_per_ray {
            return outcome(
                RayStatus::Aborted(AbortReason::LoopSuspected),
                visited,
                escalations_used,
            );
        }

        let (mut hit, eps, escalations) = match hit_with_escalation(graph, current, ray, cfg) {
            Ok(h) => h,
            Err(escalations) => {
                return outcome(
                    RayStatus::Aborted(AbortReason::EpsilonExhausted),
                    visited + 1,
                    escalations_used + escalations,
                );
            }
        };

        // Only the part of the crossing beyond ground already covered counts,
        // so re-entering an element from its fan adds nothing.
        let covered = front;
        if hit.t2 > front {
            front = hit.t2;
            stall_lo = front;
            stalled.clear();
        } else if stalled.contains(&current) {
            // Circling a vertex or edge with zero-length crossings: resume at
            // the element of the surrounding fan that reaches furthest.
            match escape_stall(graph, &stalled, ray, cfg, (stall_lo, front)) {
                Escape::Continue(next) => {
                    prev = BOUNDARY;
                    current = next;
                    stalled.clear();
                    continue;
                }
                Escape::Exit => return outcome(RayStatus::Completed, visited, escalations_used),
                Escape::Stuck => {
                    return outcome(
                        RayStatus::Aborted(AbortReason::LoopSuspected),
                        visited,
                        escalations_used,
                    );
                }
            }
        } else if stalled.try_push(current).is_err() {
            return outcome(
                RayStatus::Aborted(AbortReason::LoopSuspected),
                visited,
                escalations_used,
            );
        } else {
            stall_lo = stall_lo.min(hit.t2);
        }
        visited += 1;
        escalations_used += escalations;
        hit.t1 = hit.t1.max(covered).min(hit.t2);

        visit(&Segment {
            element: current,
            hit,
            chord: length * (hit.t2 - hit.t1),
            eps,
            escalations,
        });

        let neighbours = &elements[current as usize].neighbours;
        // A (numerically) zero-length crossing can name the element we just
        // left as the exit; leave through the entry face instead.
        let mut exit = hit.face_out;
        if prev != BOUNDARY && neighbours[exit as usize] == prev {
            exit = hit.face_in;
        }
        let next = neighbours[exit as usize];
        if next == BOUNDARY {
            // Touching the hull at a vertex or edge does not end the ray if
            // an element of the fan around it carries it further.
            if hit.t2 - hit.t1 <= stall_tolerance(front, cfg) {
                let _ = stalled.try_push(current);
                if let Escape::Continue(e) = escape_stall(graph, &stalled, ray, cfg, (stall_lo, front)) {
                    prev = BOUNDARY;
                    current = e;
                    stalled.clear();
                    continue;
                }
            }
            return outcome(RayStatus::Completed, visited, escalations_used);
        }
        prev = current;
        current = next;
    }
}

/// Parameter difference below which two crossings count as the same point.
fn stall_slack(t: f64, precision: Precision) -> f64 {
    let unit = match precision {
        Precision::Double => f64::EPSILON,
        Precision::Single => f32::EPSILON as f64,
    };
    64.0 * unit * t.abs().max(1.0)
}

/// Looser bound for deciding which crossings may belong to a stall. Per-face
/// parameters of rays through a vertex can differ by far more than a few
/// ulps; a crossing within this distance only triggers the fan search.
fn stall_tolerance(t: f64, cfg: &TraceConfig) -> f64 {
    stall_slack(t, cfg.precision).max(cfg.eps0 * t.abs().max(1.0))
}

const STALL_CAPACITY: usize = 64;
/// Elements examined when searching a fan for a way out.
const FAN_LIMIT: usize = 256;

/// Intersects one element, growing the margin as needed. `Err` carries the
/// number of growth steps spent before giving up.
fn hit_with_escalation(
    graph: &MeshGraph,
    element: u32,
    ray: &Ray,
    cfg: &TraceConfig,
) -> std::result::Result<(TetraHit, f64, u32), u32> {
    let points = graph.tet_points(element as usize);
    let mut eps = cfg.eps0;
    let mut escalations = 0u32;
    loop {
        if let Some(h) = intersect_tet_points(&points, ray, eps, cfg.precision) {
            return Ok((h, eps, escalations));
        }
        if escalations == cfg.max_escalations {
            return Err(escalations);
        }
        escalations += 1;
        eps *= cfg.eps_growth;
    }
}

enum Escape {
    /// Resume the walk at this element.
    Continue(u32),
    /// The fan touches the hull where the ray stalled: the ray leaves here.
    Exit,
    Stuck,
}

/// Breadth-first search through face neighbours of the stalled elements,
/// restricted to elements the ray touches at the base margin. Prefers the
/// element whose exit parameter is largest, if it lies clearly beyond
/// `front`; otherwise reports whether a boundary face of the fan is hit
/// inside the stall band `(lo, front)`.
fn escape_stall(
    graph: &MeshGraph,
    stalled: &[u32],
    ray: &Ray,
    cfg: &TraceConfig,
    (lo, front): (f64, f64),
) -> Escape {
    let elements = graph.elements();
    let mut seen: Vec<u32> = stalled.to_vec();
    let mut queue: std::collections::VecDeque<u32> = stalled.iter().copied().collect();
    let mut best: Option<(f64, u32)> = None;
    let mut on_hull = false;
    let slack = stall_slack(front, cfg.precision);
    let tol = stall_tolerance(front, cfg);
    while let Some(e) = queue.pop_front() {
        for (k, &n) in elements[e as usize].neighbours.iter().enumerate() {
            if n == BOUNDARY {
                if !on_hull {
                    let face = graph.face_points(e as usize, k);
                    on_hull = triangle_hit(cfg.precision, ray, &face, cfg.eps0)
                        .is_some_and(|t| t >= lo - tol && t <= front + tol);
                }
                continue;
            }
            if seen.contains(&n) || seen.len() >= FAN_LIMIT {
                continue;
            }
            seen.push(n);
            let points = graph.tet_points(n as usize);
            let Some(hit) = intersect_tet_points(&points, ray, cfg.eps0, cfg.precision) else {
                continue;
            };
            // Only elements that reach the stall point belong to the fan.
            if hit.t1 > front + tol || hit.t2 < lo - tol {
                continue;
            }
            if hit.t2 > front + slack && best.is_none_or(|(t, _)| hit.t2 > t) {
                best = Some((hit.t2, n));
            }
            queue.push_back(n);
        }
    }
    match best {
        Some((_, e)) => Escape::Continue(e),
        None if on_hull => Escape::Exit,
        None => Escape::Stuck,
    }
}

/// Finds the entry element and walks the ray through the mesh.
pub fn trace_path(
    graph: &MeshGraph,
    tree: &RStarTree,
    ray: &Ray,
    cfg: &TraceConfig,
    visit: impl FnMut(&Segment),
) -> PathOutcome {
    match tree.first_hit_with(graph, ray, cfg.precision, &mut 0) {
        None => PathOutcome {
            status: RayStatus::MissedMesh,
            elements_visited: 0,
            escalations_used: 0,
        },
        Some(entry) => walk_from(graph, entry.element, ray, cfg, visit),
    }
}

/// Line integral of `field` along `ray`.
pub fn trace_ray(
    graph: &MeshGraph,
    tree: &RStarTree,
    field: &AttenuationField,
    ray: &Ray,
    cfg: &TraceConfig,
) -> RayTraceOutcome {
    let values = field.values();
    let mut integral = 0.0f64;
    let path = trace_path(graph, tree, ray, cfg, |s| {
        integral += s.chord * values[s.element as usize] as f64;
    });
    RayTraceOutcome {
        integral,
        elements_visited: path.elements_visited,
        escalations_used: path.escalations_used,
        status: path.status,
    }
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Per-run tally of ray outcomes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rays: u64,
    pub completed: u64,
    pub missed: u64,
    pub aborted_epsilon: u64,
    pub aborted_loop: u64,
    pub elements_visited: u64,
    /// `escalation_histogram[k]` counts rays that needed `k` growth steps in
    /// total (the last bucket collects everything above).
    pub escalation_histogram: Vec<u64>,
    /// Flat ray indices of aborted rays, sorted.
    pub aborted_rays: Vec<u64>,
}

const HISTOGRAM_BUCKETS: usize = 16;

impl Diagnostics {
    pub fn aborted(&self) -> u64 {
        self.aborted_epsilon + self.aborted_loop
    }

    fn record(&mut self, index: usize, path: &PathOutcome) {
        if self.escalation_histogram.is_empty() {
            self.escalation_histogram = vec![0; HISTOGRAM_BUCKETS];
        }
        self.rays += 1;
        self.elements_visited += path.elements_visited as u64;
        let bucket = (path.escalations_used as usize).min(HISTOGRAM_BUCKETS - 1);
        self.escalation_histogram[bucket] += 1;
        match path.status {
            RayStatus::Completed => self.completed += 1,
            RayStatus::MissedMesh => self.missed += 1,
            RayStatus::Aborted(reason) => {
                match reason {
                    AbortReason::EpsilonExhausted => self.aborted_epsilon += 1,
                    AbortReason::LoopSuspected => self.aborted_loop += 1,
                }
                self.aborted_rays.push(index as u64);
            }
        }
    }

    pub fn merge(mut self, other: Diagnostics) -> Diagnostics {
        self.rays += other.rays;
        self.completed += other.completed;
        self.missed += other.missed;
        self.aborted_epsilon += other.aborted_epsilon;
        self.aborted_loop += other.aborted_loop;
        self.elements_visited += other.elements_visited;
        if self.escalation_histogram.len() < other.escalation_histogram.len() {
            self.escalation_histogram
                .resize(other.escalation_histogram.len(), 0);
        }
        for (a, b) in self
            .escalation_histogram
            .iter_mut()
            .zip(&other.escalation_histogram)
        {
            *a += b;
        }
        self.aborted_rays.extend(other.aborted_rays);
        self.aborted_rays.sort_unstable();
        self
    }
}

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

/// Detector data, `[angle][row v][column u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionStack {
    pub data: Vec<f32>,
    pub n_angles: usize,
    pub n_v: usize,
    pub n_u: usize,
}

impl ProjectionStack {
    pub fn zeros(scan: &ScanGeometry) -> Self {
        ProjectionStack {
            data: vec![0.0; scan.ray_count()],
            n_angles: scan.n_angles(),
            n_v: scan.n_v,
            n_u: scan.n_u,
        }
    }

    pub fn new(data: Vec<f32>, n_angles: usize, n_v: usize, n_u: usize) -> Result<Self> {
        if data.len() != n_angles * n_v * n_u {
            return Err(Error::DimensionMismatch(format!(
                "{} values for dims ({n_angles}, {n_v}, {n_u})",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ParamOutOfRange("projection data must be finite".into()));
        }
        Ok(ProjectionStack {
            data,
            n_angles,
            n_v,
            n_u,
        })
    }

    pub fn from_f64(values: &[f64], scan: &ScanGeometry) -> Self {
        ProjectionStack {
            data: values.iter().map(|&v| v as f32).collect(),
            n_angles: scan.n_angles(),
            n_v: scan.n_v,
            n_u: scan.n_u,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_angles, self.n_v, self.n_u)
    }

    /// Pixels of one angle as a `n_v x n_u` row-major slice.
    pub fn image(&self, angle: usize) -> &[f32] {
        let per = self.n_v * self.n_u;
        &self.data[angle * per..(angle + 1) * per]
    }

    pub fn check_matches(&self, scan: &ScanGeometry) -> Result<()> {
        if self.dims() != (scan.n_angles(), scan.n_v, scan.n_u) {
            return Err(Error::DimensionMismatch(format!(
                "projection dims {:?} vs geometry ({}, {}, {})",
                self.dims(),
                scan.n_angles(),
                scan.n_v,
                scan.n_u
            )));
        }
        Ok(())
    }
}

/// Doubles per backprojection chunk buffer set; bounds memory for big meshes.
const CHUNK_BUFFER_BUDGET: usize = 1 << 22;
const MAX_CHUNKS: usize = 64;

/// The system matrix `A` (rows = rays, columns = elements), applied on the
/// fly. All inputs and outputs here are 64-bit; the storage-precision
/// wrappers round at the end.
pub struct Projector<'a> {
    pub graph: &'a MeshGraph,
    pub tree: &'a RStarTree,
    pub scan: &'a ScanGeometry,
    pub cfg: TraceConfig,
}

impl<'a> Projector<'a> {
    pub fn new(
        graph: &'a MeshGraph,
        tree: &'a RStarTree,
        scan: &'a ScanGeometry,
        cfg: TraceConfig,
    ) -> Self {
        Projector {
            graph,
            tree,
            scan,
            cfg,
        }
    }

    pub fn all_angles(&self) -> Vec<usize> {
        (0..self.scan.n_angles()).collect()
    }

    fn ray_index(&self, angles: &[usize], local: usize) -> usize {
        let per = self.scan.pixels_per_angle();
        angles[local / per] * per + local % per
    }

    /// `A_S x` for the rays of the listed angles, ordered as listed.
    pub fn forward(&self, x: &[f64], angles: &[usize]) -> (Vec<f64>, Diagnostics) {
        assert_eq!(x.len(), self.graph.len(), "field length");
        let per = self.scan.pixels_per_angle();
        let mut out = vec![0.0f64; angles.len() * per];
        let row = self.scan.n_u.max(1);
        let diag = out
            .par_chunks_mut(row)
            .enumerate()
            .fold(Diagnostics::default, |mut diag, (chunk, values)| {
                for (i, value) in values.iter_mut().enumerate() {
                    let local = chunk * row + i;
                    let index = self.ray_index(angles, local);
                    let ray = self.scan.ray_at(index);
                    let mut sum = 0.0;
                    let path = trace_path(self.graph, self.tree, &ray, &self.cfg, |s| {
                        sum += s.chord * x[s.element as usize];
                    });
                    *value = if path.status == RayStatus::Completed {
                        sum
                    } else {
                        0.0
                    };
                    diag.record(index, &path);
                }
                diag
            })
            .reduce(Diagnostics::default, Diagnostics::merge);
        (out, diag)
    }

    /// `A_Sᵀ b` where `b` holds the rays of the listed angles.
    pub fn adjoint(&self, b: &[f64], angles: &[usize]) -> (Vec<f64>, Diagnostics) {
        let per = self.scan.pixels_per_angle();
        let n_rays = angles.len() * per;
        assert_eq!(b.len(), n_rays, "data length");
        let n_elem = self.graph.len();
        let n_chunks = (CHUNK_BUFFER_BUDGET / n_elem.max(1)).clamp(1, MAX_CHUNKS).min(n_rays.max(1));
        let chunk_len = n_rays.div_ceil(n_chunks).max(1);

        let partials: Vec<(Vec<f64>, Diagnostics)> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0f64; n_elem];
                let mut diag = Diagnostics::default();
                let mut scratch: Vec<(u32, f64)> = Vec::new();
                let end = ((c + 1) * chunk_len).min(n_rays);
                for local in c * chunk_len..end {
                    let index = self.ray_index(angles, local);
                    let weight = b[local];
                    let ray = self.scan.ray_at(index);
                    scratch.clear();
                    let path = trace_path(self.graph, self.tree, &ray, &self.cfg, |s| {
                        scratch.push((s.element, s.chord));
                    });
                    diag.record(index, &path);
                    if path.status == RayStatus::Completed && weight != 0.0 {
                        for &(e, chord) in &scratch {
                            acc[e as usize] += chord * weight;
                        }
                    }
                }
                (acc, diag)
            })
            .collect();

        let diag = partials
            .iter()
            .map(|p| p.1.clone())
            .fold(Diagnostics::default(), Diagnostics::merge);
        let mut buffers: Vec<Vec<f64>> = partials.into_iter().map(|p| p.0).collect();
        while buffers.len() > 1 {
            buffers = buffers
                .par_chunks_mut(2)
                .map(|pair| {
                    let mut left = std::mem::take(&mut pair[0]);
                    if let Some(right) = pair.get(1) {
                        left.iter_mut().zip(right).for_each(|(a, b)| *a += b);
                    }
                    left
                })
                .collect();
        }
        (buffers.pop().unwrap_or_else(|| vec![0.0; n_elem]), diag)
    }

    /// Total chord of each ray of the listed angles (`A_S 1`).
    pub fn row_sums(&self, angles: &[usize]) -> (Vec<f64>, Diagnostics) {
        self.forward(&vec![1.0; self.graph.len()], angles)
    }

    /// Total chord per element over the listed angles (`A_Sᵀ 1`).
    pub fn col_sums(&self, angles: &[usize]) -> (Vec<f64>, Diagnostics) {
        let n = angles.len() * self.scan.pixels_per_angle();
        self.adjoint(&vec![1.0; n], angles)
    }
}

/// Forward projection of a stored field (rounded to storage precision).
pub fn project(
    graph: &MeshGraph,
    tree: &RStarTree,
    field: &AttenuationField,
    scan: &ScanGeometry,
    cfg: &TraceConfig,
) -> Result<(ProjectionStack, Diagnostics)> {
    field.check_matches(graph)?;
    let op = Projector::new(graph, tree, scan, *cfg);
    let (b, diag) = op.forward(&field.to_f64(), &op.all_angles());
    Ok((ProjectionStack::from_f64(&b, scan), diag))
}

/// Backprojection of a stored stack (64-bit accumulation, rounded at the end).
pub fn backproject(
    graph: &MeshGraph,
    tree: &RStarTree,
    scan: &ScanGeometry,
    stack: &ProjectionStack,
    cfg: &TraceConfig,
) -> Result<(AttenuationField, Diagnostics)> {
    stack.check_matches(scan)?;
    let op = Projector::new(graph, tree, scan, *cfg);
    let (x, diag) = op.adjoint(&stack.to_f64(), &op.all_angles());
    Ok((AttenuationField::from_f64(&x), diag))
}

pub fn row_weights(
    graph: &MeshGraph,
    tree: &RStarTree,
    scan: &ScanGeometry,
    cfg: &TraceConfig,
) -> (ProjectionStack, Diagnostics) {
    let op = Projector::new(graph, tree, scan, *cfg);
    let (w, diag) = op.row_sums(&op.all_angles());
    (ProjectionStack::from_f64(&w, scan), diag)
}

pub fn col_weights(
    graph: &MeshGraph,
    tree: &RStarTree,
    scan: &ScanGeometry,
    cfg: &TraceConfig,
) -> (AttenuationField, Diagnostics) {
    let op = Projector::new(graph, tree, scan, *cfg);
    let (v, diag) = op.col_sums(&op.all_angles());
    (AttenuationField::from_f64(&v), diag)
}
