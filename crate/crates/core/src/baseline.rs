//! Voxel comparison path: Siddon-style exact radiological paths through a
//! regular grid, the triangulated regular meshes used for benchmarking, and
//! rasterization of element fields onto voxels.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Ray;
use crate::mesh::{AttenuationField, MeshGraph};
use crate::rstar::RStarTree;
use crate::scanner::ScanGeometry;
use crate::trace::{trace_path, ProjectionStack, TraceConfig};
use crate::Vec3;

/// Regular voxel grid. Voxel `(i, j, k)` covers
/// `origin + [i, i+1) * spacing.x` etc; values are x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub spacing: Vec3,
    pub origin: Vec3,
    pub values: Vec<f32>,
}

/// JSON sidecar of a raw voxel file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoxelHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], spacing: Vec3, origin: Vec3, values: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) || spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::ParamOutOfRange(
                "voxel dims and spacing must be positive".into(),
            ));
        }
        if values.len() != dims.iter().product::<usize>() {
            return Err(Error::DimensionMismatch(format!(
                "{} voxel values for dims {dims:?}",
                values.len()
            )));
        }
        Ok(VoxelGrid {
            dims,
            spacing,
            origin,
            values,
        })
    }

    pub fn zeros(dims: [usize; 3], spacing: Vec3, origin: Vec3) -> Result<Self> {
        Self::new(dims, spacing, origin, vec![0.0; dims.iter().product()])
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin
            + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5).component_mul(&self.spacing)
    }

    fn upper(&self) -> Vec3 {
        self.origin
            + Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64)
                .component_mul(&self.spacing)
    }

    pub fn header(&self) -> VoxelHeader {
        VoxelHeader {
            dims: self.dims,
            spacing: self.spacing.into(),
            origin: self.origin.into(),
        }
    }

    /// Writes `<prefix>.raw` (little-endian f32) and `<prefix>.json`.
    pub fn save(&self, prefix: &Path) -> Result<()> {
        let raw = prefix.with_extension("raw");
        crate::io::write_f32_raw(&raw, &self.values)?;
        let json = prefix.with_extension("json");
        let text = serde_json::to_string_pretty(&self.header()).expect("header serializes");
        std::fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }

    pub fn load(prefix: &Path) -> Result<Self> {
        let json = prefix.with_extension("json");
        let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let h: VoxelHeader = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: json.clone(),
            source,
        })?;
        let values = crate::io::read_f32_raw(&prefix.with_extension("raw"), None)?;
        Self::new(h.dims, h.spacing.into(), h.origin.into(), values)
    }

    /// Radiological path of the segment `r1 -> r2` through the grid.
    pub fn ray_integral(&self, ray: &Ray) -> f64 {
        let o = ray.origin();
        let d = ray.direction();
        let lo = self.origin;
        let hi = self.upper();

        let mut t_in = 0.0f64;
        let mut t_out = 1.0f64;
        for a in 0..3 {
            if d[a] == 0.0 {
                if o[a] < lo[a] || o[a] >= hi[a] {
                    return 0.0;
                }
                continue;
            }
            let (mut t0, mut t1) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_in = t_in.max(t0);
            t_out = t_out.min(t1);
        }
        if t_in >= t_out {
            return 0.0;
        }

        let start = o + d * t_in;
        let mut idx = [0isize; 3];
        for a in 0..3 {
            let f = (start[a] - lo[a]) / self.spacing[a];
            let mut i = f.floor() as isize;
            if d[a] < 0.0 && f == f.floor() {
                i -= 1;
            }
            idx[a] = i.clamp(0, self.dims[a] as isize - 1);
        }

        let next_plane = |a: usize, i: isize| -> f64 {
            if d[a] == 0.0 {
                return f64::INFINITY;
            }
            let step = if d[a] > 0.0 { i + 1 } else { i };
            (lo[a] + step as f64 * self.spacing[a] - o[a]) / d[a]
        };

        let length = ray.length();
        let mut t = t_in;
        let mut sum = 0.0f64;
        loop {
            let t_next = [0, 1, 2].map(|a| next_plane(a, idx[a]));
            let axis = (0..3)
                .min_by(|&a, &b| t_next[a].total_cmp(&t_next[b]))
                .unwrap();
            let t_end = t_next[axis].min(t_out);
            let v = self.values[self.index(idx[0] as usize, idx[1] as usize, idx[2] as usize)];
            sum += (t_end - t).max(0.0) * length * v as f64;
            if t_next[axis] >= t_out {
                break;
            }
            t = t_end;
            idx[axis] += if d[axis] > 0.0 { 1 } else { -1 };
            if idx[axis] < 0 || idx[axis] >= self.dims[axis] as isize {
                break;
            }
        }
        sum
    }
}

/// Projects a voxel grid with the same pixel rays as the mesh projector.
pub fn siddon_project(grid: &VoxelGrid, scan: &ScanGeometry) -> ProjectionStack {
    let values: Vec<f64> = (0..scan.ray_count())
        .into_par_iter()
        .map(|i| grid.ray_integral(&scan.ray_at(i)))
        .collect();
    ProjectionStack::from_f64(&values, scan)
}

/// `n³` cubes over the box `[lo, hi]`, each split into six tetrahedra around
/// its `(0,0,0)-(1,1,1)` diagonal. Element `6 * cell + p` is the `p`-th
/// tetrahedron of cell `i + n (j + n k)`.
pub fn regular_tet_mesh(n: usize, lo: Vec3, hi: Vec3) -> Result<MeshGraph> {
    if n == 0 {
        return Err(Error::ParamOutOfRange("cells per edge must be >= 1".into()));
    }
    if (0..3).any(|a| !(hi[a] > lo[a])) {
        return Err(Error::ParamOutOfRange("mesh extent must be positive".into()));
    }
    let m = n + 1;
    let step = (hi - lo) / n as f64;
    let mut vertices = Vec::with_capacity(m * m * m);
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                // Snap the last layer to `hi` exactly.
                let coord = |c: usize, a: usize| {
                    if c == n {
                        hi[a]
                    } else {
                        lo[a] + c as f64 * step[a]
                    }
                };
                vertices.push(Vec3::new(coord(i, 0), coord(j, 1), coord(k, 2)));
            }
        }
    }
    let vid = |i: usize, j: usize, k: usize| (i + m * (j + m * k)) as u32;
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut quads = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for p in &perms {
                    let mut c = [i, j, k];
                    let mut q = [vid(i, j, k); 4];
                    for (s, &axis) in p.iter().enumerate() {
                        c[axis] += 1;
                        q[s + 1] = vid(c[0], c[1], c[2]);
                    }
                    quads.push(q);
                }
            }
        }
    }
    MeshGraph::build(vertices, &quads)
}

/// Samples an element field at voxel centres (zero outside the mesh).
///
/// Each centre is located by tracing a probe ray that ends at it and
/// picking the first crossed element whose interval contains the end point.
pub fn rasterize_field(
    graph: &MeshGraph,
    tree: &RStarTree,
    field: &AttenuationField,
    dims: [usize; 3],
    spacing: Vec3,
    origin: Vec3,
    cfg: &TraceConfig,
) -> Result<VoxelGrid> {
    field.check_matches(graph)?;
    let mut grid = VoxelGrid::zeros(dims, spacing, origin)?;
    let (blo, bhi) = graph.bbox();
    let mid = (blo + bhi) * 0.5;
    let reach = 2.0 * graph.diagonal();
    // Skewed so probes rarely run along mesh faces.
    let dir = Vec3::new(1.0, 0.331_473_209, 0.257_912_661).normalize();
    let values = field.values();

    grid.values
        .par_iter_mut()
        .enumerate()
        .for_each(|(flat, out)| {
            let i = flat % dims[0];
            let j = (flat / dims[0]) % dims[1];
            let k = flat / (dims[0] * dims[1]);
            let c = origin
                + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5).component_mul(&spacing);
            let back = reach + (c - mid).norm();
            let Ok(ray) = Ray::new(c - dir * back, c) else {
                return;
            };
            let mut found: Option<u32> = None;
            trace_path(graph, tree, &ray, cfg, |s| {
                if found.is_none() && s.hit.t1 <= 1.0 && 1.0 <= s.hit.t2 {
                    found = Some(s.element);
                }
            });
            if let Some(e) = found {
                *out = values[e as usize];
            }
        });
    Ok(grid)
}
