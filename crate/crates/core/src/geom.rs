//! Intersection predicates: ε-guarded Möller-Trumbore, tetrahedron/ray and
//! box/ray tests.
//!
//! All production arithmetic is 64-bit. [`Precision::Single`] reruns the
//! triangle test on inputs rounded to `f32` and is only meant for studying
//! how single precision breaks propagation on badly shaped meshes.

use nalgebra::{RealField, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{MeshGraph, FACE_NODES};
use crate::Vec3;

/// Determinant magnitude below which a ray counts as parallel to a face.
pub const DET_CUTOFF: f64 = 1e-8;

/// Segment `r1 -> r2`. Intersection parameters are in units of the segment,
/// `point(t) = r1 + t (r2 - r1)`, and may fall outside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    r1: Vec3,
    r2: Vec3,
    d: Vec3,
    inv_d: Vec3,
}

impl Ray {
    pub fn new(r1: Vec3, r2: Vec3) -> Result<Self> {
        let d = r2 - r1;
        if !(d.norm() > 0.0) || !d.iter().all(|c| c.is_finite()) {
            return Err(Error::ParamOutOfRange(format!(
                "ray endpoints must differ and be finite: {r1:?} -> {r2:?}"
            )));
        }
        Ok(Ray {
            r1,
            r2,
            d,
            inv_d: d.map(|c| 1.0 / c),
        })
    }

    #[inline]
    pub fn origin(&self) -> Vec3 {
        self.r1
    }

    #[inline]
    pub fn target(&self) -> Vec3 {
        self.r2
    }

    #[inline]
    pub fn direction(&self) -> Vec3 {
        self.d
    }

    pub fn length(&self) -> f64 {
        self.d.norm()
    }

    pub fn point(&self, t: f64) -> Vec3 {
        self.r1 + self.d * t
    }
}

/// Arithmetic used by the triangle predicate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
    Single,
}

#[inline(always)]
fn mt_kernel<T: RealField + Copy>(
    r1: Vector3<T>,
    r2: Vector3<T>,
    p1: Vector3<T>,
    p2: Vector3<T>,
    p3: Vector3<T>,
    eps: T,
    cutoff: T,
) -> Option<T> {
    let d = r2 - r1;
    let e1 = p2 - p1;
    let e2 = p3 - p1;
    let q = d.cross(&e2);
    let a = e1.dot(&q);
    if a > -cutoff && a < cutoff {
        return None;
    }
    let f = T::one() / a;
    let s = r1 - p1;
    let u = f * s.dot(&q);
    if u < -eps {
        return None;
    }
    let r = s.cross(&e1);
    let v = f * d.dot(&r);
    if v < -eps || u + v > T::one() + eps {
        return None;
    }
    Some(f * e2.dot(&r))
}

/// Möller-Trumbore with a safety margin `eps` on the barycentric bounds.
///
/// Growing `eps` enlarges the accepted triangle but never changes the
/// returned `t`. Returns `None` on a miss or when `|det| < 1e-8`.
#[inline]
pub fn moller_trumbore(ray: &Ray, p1: &Vec3, p2: &Vec3, p3: &Vec3, eps: f64) -> Option<f64> {
    mt_kernel(ray.r1, ray.r2, *p1, *p2, *p3, eps, DET_CUTOFF)
}

/// The same predicate evaluated entirely in `f32` on rounded inputs.
pub fn moller_trumbore_f32(ray: &Ray, p1: &Vec3, p2: &Vec3, p3: &Vec3, eps: f64) -> Option<f64> {
    let c = |v: &Vec3| v.map(|x| x as f32);
    mt_kernel(
        c(&ray.r1),
        c(&ray.r2),
        c(p1),
        c(p2),
        c(p3),
        eps as f32,
        DET_CUTOFF as f32,
    )
    .map(f64::from)
}

#[inline]
pub fn triangle_hit(
    precision: Precision,
    ray: &Ray,
    p: &[Vec3; 3],
    eps: f64,
) -> Option<f64> {
    match precision {
        Precision::Double => moller_trumbore(ray, &p[0], &p[1], &p[2], eps),
        Precision::Single => moller_trumbore_f32(ray, &p[0], &p[1], &p[2], eps),
    }
}

/// Entry and exit of a ray through one tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetraHit {
    pub t1: f64,
    pub t2: f64,
    pub face_in: u8,
    pub face_out: u8,
}

impl TetraHit {
    pub fn chord(&self, ray: &Ray) -> f64 {
        (self.t2 - self.t1) * ray.length()
    }
}

/// Runs the triangle test on all four faces of `element`.
///
/// With at least two accepted faces, returns the smallest `t` as the entry
/// and the largest as the exit. Equal parameters keep encounter order: the
/// first face seen is the entry, the last the exit. Fewer than two hits
/// returns `None` so the caller can retry with a larger `eps`.
pub fn tetra_ray_intersect(
    graph: &MeshGraph,
    element: usize,
    ray: &Ray,
    eps: f64,
    precision: Precision,
) -> Option<TetraHit> {
    intersect_tet_points(&graph.tet_points(element), ray, eps, precision)
}

/// [`tetra_ray_intersect`] on explicit corner positions, faces numbered by
/// [`FACE_NODES`].
#[inline]
pub fn intersect_tet_points(
    points: &[Vec3; 4],
    ray: &Ray,
    eps: f64,
    precision: Precision,
) -> Option<TetraHit> {
    let mut hits = 0;
    let mut best = TetraHit {
        t1: f64::INFINITY,
        t2: f64::NEG_INFINITY,
        face_in: 0,
        face_out: 0,
    };
    for (face, local) in FACE_NODES.iter().enumerate() {
        let p = local.map(|i| points[i]);
        if let Some(t) = triangle_hit(precision, ray, &p, eps) {
            hits += 1;
            if t < best.t1 {
                best.t1 = t;
                best.face_in = face as u8;
            }
            if t >= best.t2 {
                best.t2 = t;
                best.face_out = face as u8;
            }
        }
    }
    (hits >= 2).then_some(best)
}

/// Inclusive slab test over `t >= 0`. Returns the entry parameter, clamped
/// to zero when the origin is inside the box.
#[inline]
pub fn aabb_ray_intersect(ray: &Ray, lo: &Vec3, hi: &Vec3) -> Option<f64> {
    let mut tmin = 0.0f64;
    let mut tmax = f64::INFINITY;
    for a in 0..3 {
        let o = ray.r1[a];
        if ray.d[a] == 0.0 {
            if o < lo[a] || o > hi[a] {
                return None;
            }
            continue;
        }
        let inv = ray.inv_d[a];
        let (mut t0, mut t1) = ((lo[a] - o) * inv, (hi[a] - o) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        tmin = tmin.max(t0);
        tmax = tmax.min(t1);
        if tmin > tmax {
            return None;
        }
    }
    Some(tmin)
}
