mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tetraproj::mesh::{neighbour_pairs, BOUNDARY, FACE_NODES};
use tetraproj::{validate, MeshGraph};

fn face_key(g: &MeshGraph, e: usize, k: usize) -> [u32; 3] {
    let nodes = g.elements()[e].nodes;
    let mut key = FACE_NODES[k].map(|i| nodes[i]);
    key.sort_unstable();
    key
}

fn boundary_faces(g: &MeshGraph) -> HashSet<[u32; 3]> {
    g.boundary()
        .iter()
        .map(|b| face_key(g, b.element as usize, b.face as usize))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn graph_is_reciprocal_and_tiles_its_hull(n in 1usize..5, jitter in 0.0f64..0.25, seed in any::<u64>()) {
        let g = common::jittered_cube(n, jitter, seed);
        prop_assume!(g.is_some());
        let g = g.unwrap();
        prop_assert!(validate(&g).is_clean());

        let mut open = HashSet::new();
        for (e, t) in g.elements().iter().enumerate() {
            prop_assert!(g.signed_volume(e) > 0.0);
            for k in 0..4 {
                let m = t.neighbours[k];
                if m == BOUNDARY {
                    open.insert((e as u32, k as u8));
                    continue;
                }
                let back = g.elements()[m as usize].neighbours.iter().position(|&x| x == e as u32);
                prop_assert!(back.is_some());
                prop_assert_eq!(face_key(&g, e, k), face_key(&g, m as usize, back.unwrap()));
            }
        }
        let listed: HashSet<(u32, u8)> = g.boundary().iter().map(|b| (b.element, b.face)).collect();
        prop_assert_eq!(listed.len(), g.boundary().len());
        prop_assert_eq!(listed, open);

        let (total, enclosed) = (g.total_volume(), g.enclosed_volume());
        prop_assert!((total - enclosed).abs() <= 1e-9 * enclosed);
        prop_assert!((enclosed - 8.0).abs() <= 1e-9 * 8.0);
    }

    #[test]
    fn build_is_permutation_invariant(n in 1usize..4, jitter in 0.0f64..0.2, seed in any::<u64>()) {
        let g = common::jittered_cube(n, jitter, seed);
        prop_assume!(g.is_some());
        let g = g.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.shuffle(&mut rng);
        // Rotating the node order flips the orientation of half the input,
        // which build has to repair.
        let quads: Vec<[u32; 4]> = order
            .iter()
            .map(|&e| {
                let mut q = g.elements()[e].nodes;
                q.rotate_left(seed as usize % 4);
                q
            })
            .collect();
        let h = MeshGraph::build(g.vertices().to_vec(), &quads).unwrap();

        prop_assert_eq!(boundary_faces(&g), boundary_faces(&h));
        let mapped: HashSet<(u32, u32)> = neighbour_pairs(&h)
            .into_iter()
            .map(|(a, b)| {
                let (a, b) = (order[a as usize] as u32, order[b as usize] as u32);
                (a.min(b), a.max(b))
            })
            .collect();
        prop_assert_eq!(neighbour_pairs(&g), mapped);
        prop_assert!((g.total_volume() - h.total_volume()).abs() <= 1e-12 * g.total_volume());
    }
}
