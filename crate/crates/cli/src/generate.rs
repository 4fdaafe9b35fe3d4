//! Synthetic meshes and phantoms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tetraproj::baseline::regular_tet_mesh;
use tetraproj::{AttenuationField, MeshGraph, Result, ScanGeometry, Vec3};

/// Regular Kuhn mesh of `[lo, hi]^3` whose interior vertices are moved by a
/// uniform random offset of up to `jitter` cells per axis. Boundary vertices
/// stay put so the hull is unchanged. Vertices of any element the offsets
/// would invert are moved back to the lattice until every element keeps its
/// orientation, so the result always tiles the cube.
pub fn jittered_mesh(n: usize, lo: f64, hi: f64, jitter: f64, seed: u64) -> Result<MeshGraph> {
    let base = regular_tet_mesh(n, Vec3::repeat(lo), Vec3::repeat(hi))?;
    let h = (hi - lo) / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let on_hull = |c: f64| (c - lo).abs() < 1e-9 * h || (c - hi).abs() < 1e-9 * h;
    let mut vertices: Vec<Vec3> = base
        .vertices()
        .iter()
        .map(|v| {
            let mut p = *v;
            if !v.iter().any(|&c| on_hull(c)) && jitter > 0.0 {
                for c in p.iter_mut() {
                    *c += rng.gen_range(-jitter..jitter) * h;
                }
            }
            p
        })
        .collect();
    // Base elements are positively oriented; the minimum volume keeps
    // slivers well clear of the degeneracy threshold.
    let min_volume = 1e-3 * h.powi(3);
    loop {
        let mut reset = false;
        for t in base.elements() {
            let [a, b, c, d] = t.nodes.map(|i| vertices[i as usize]);
            if (b - a).dot(&(c - a).cross(&(d - a))) / 6.0 < min_volume {
                for i in t.nodes {
                    let home = base.vertices()[i as usize];
                    if vertices[i as usize] != home {
                        vertices[i as usize] = home;
                        reset = true;
                    }
                }
            }
        }
        if !reset {
            break;
        }
    }
    let quads: Vec<[u32; 4]> = base.elements().iter().map(|t| t.nodes).collect();
    MeshGraph::build(vertices, &quads)
}

/// Parameters of the high-aspect-ratio stress mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressParams {
    /// Cells per axis.
    pub n: usize,
    /// Thickness of the slab relative to its width.
    pub aspect: f64,
    /// Rotation of the slab about the x axis, radians.
    pub tilt: f64,
    /// Half-width of the slab.
    pub scale: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for StressParams {
    fn default() -> Self {
        StressParams {
            n: 8,
            aspect: 0.01,
            tilt: 0.6,
            scale: 1.0,
            jitter: 0.3,
            seed: 1,
        }
    }
}

/// Jittered Kuhn slab of half-width `scale`, squashed along z and tilted
/// about x, so every element is a sliver crossed obliquely by the rays.
pub fn stress_mesh(p: &StressParams) -> Result<MeshGraph> {
    let base = jittered_mesh(p.n, -1.0, 1.0, p.jitter, p.seed)?;
    let (s, c) = p.tilt.sin_cos();
    let vertices: Vec<Vec3> = base
        .vertices()
        .iter()
        .map(|v| {
            let (y, z) = (v.y, v.z * p.aspect);
            Vec3::new(v.x, c * y - s * z, s * y + c * z) * p.scale
        })
        .collect();
    let quads: Vec<[u32; 4]> = base.elements().iter().map(|t| t.nodes).collect();
    MeshGraph::build(vertices, &quads)
}

/// Long-range geometry for [`stress_mesh`]: the source sits 1e5 slab
/// half-widths away, so one ulp of a 32-bit ray parameter spans more than
/// a slab element. Angles avoid the axes, where coordinates would round
/// exactly.
pub fn stress_geometry(p: &StressParams, n_angles: usize) -> Result<ScanGeometry> {
    let dso = 1e5 * p.scale;
    let n_u = 128;
    let n_v = 64;
    // Magnification 2 and a 20% margin around the slab.
    let du = 2.0 * 2.0 * 1.2 * p.scale / n_u as f64;
    let mut scan = ScanGeometry::circular(n_angles, dso, 2.0 * dso, n_u, n_v, du, du)?;
    for a in scan.angles.iter_mut() {
        *a += 0.1;
    }
    Ok(scan)
}

/// Three-value phantom on element centroids: 2 inside a small off-centre
/// ball, 1 inside a larger centred ball, 0 elsewhere. Radii are relative to
/// the half-width of the mesh bounding box.
pub fn phantom(graph: &MeshGraph) -> AttenuationField {
    let (lo, hi) = graph.bbox();
    let centre = (lo + hi) * 0.5;
    let half = (hi - lo) * 0.5;
    let values = (0..graph.len())
        .map(|e| {
            let c = (graph.centroid(e) - centre).component_div(&half);
            if (c - Vec3::new(0.3, 0.1, 0.0)).norm() < 0.35 {
                2.0
            } else if c.norm() < 0.8 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    AttenuationField::new(values).expect("finite phantom values")
}
