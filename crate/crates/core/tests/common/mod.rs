#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tetraproj::baseline::regular_tet_mesh;
use tetraproj::{MeshGraph, Ray, Vec3};

/// Kuhn mesh of `[-1, 1]^3` with interior vertices moved by up to `jitter`
/// cells, or `None` when the offsets would invert an element.
pub fn jittered_cube(n: usize, jitter: f64, seed: u64) -> Option<MeshGraph> {
    let base = regular_tet_mesh(n, Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
    let h = 2.0 / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices: Vec<Vec3> = base
        .vertices()
        .iter()
        .map(|v| {
            if v.iter().all(|c| (c.abs() - 1.0).abs() > 1e-12) && jitter > 0.0 {
                v + Vec3::from_fn(|_, _| rng.gen_range(-jitter..jitter) * h)
            } else {
                *v
            }
        })
        .collect();
    for t in base.elements() {
        let [a, b, c, d] = t.nodes.map(|i| vertices[i as usize]);
        if (b - a).dot(&(c - a).cross(&(d - a))) <= 0.0 {
            return None;
        }
    }
    let quads: Vec<[u32; 4]> = base.elements().iter().map(|t| t.nodes).collect();
    Some(MeshGraph::build(vertices, &quads).unwrap())
}

/// Ray between two random points of the box `[-r, r]^3`.
pub fn random_ray(rng: &mut ChaCha8Rng, r: f64) -> Ray {
    loop {
        let a = Vec3::from_fn(|_, _| rng.gen_range(-r..r));
        let b = Vec3::from_fn(|_, _| rng.gen_range(-r..r));
        if let Ok(ray) = Ray::new(a, b) {
            return ray;
        }
    }
}

/// Random point at distance `r` from the origin.
pub fn point_on_sphere(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    loop {
        let p = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let n = p.norm();
        if n > 1e-3 && n <= 1.0 {
            return p * (r / n);
        }
    }
}
