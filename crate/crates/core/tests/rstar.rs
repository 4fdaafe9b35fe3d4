mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tetraproj::baseline::regular_tet_mesh;
use tetraproj::geom::triangle_hit;
use tetraproj::rstar::{EPS0, MAX_FAN, MIN_FAN};
use tetraproj::{MeshGraph, Precision, RStarTree, Ray, Vec3};

/// Nearest boundary face with `t >= 0`, ties to the lowest element index.
fn exhaustive(g: &MeshGraph, ray: &Ray) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for b in g.boundary() {
        let tri = g.face_points(b.element as usize, b.face as usize);
        let Some(t) = triangle_hit(Precision::Double, ray, &tri, EPS0) else {
            continue;
        };
        if t < 0.0 {
            continue;
        }
        if best.is_none_or(|(e, bt)| t < bt || (t == bt && b.element < e)) {
            best = Some((b.element, t));
        }
    }
    best
}

fn check_shape(tree: &RStarTree) -> Result<(), TestCaseError> {
    let infos = tree.node_infos();
    let leaf_depth = infos.iter().find(|n| n.leaf).unwrap().depth;
    for (i, n) in infos.iter().enumerate() {
        let lo = if i == 0 { 1 } else { MIN_FAN };
        prop_assert!((lo..=MAX_FAN).contains(&n.fanout), "node {i}: fan-out {}", n.fanout);
        if n.leaf {
            prop_assert_eq!(n.depth, leaf_depth);
        }
        for b in tree.child_boxes(i) {
            prop_assert!(n.bbox.contains(&b));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn first_hit_matches_exhaustive_scan(n in 1usize..6, jitter in 0.0f64..0.25, seed in any::<u64>()) {
        let g = common::jittered_cube(n, jitter, seed);
        prop_assume!(g.is_some());
        let g = g.unwrap();
        let tree = RStarTree::build(&g).unwrap();
        check_shape(&tree)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let ray = common::random_ray(&mut rng, 2.0);
            let hit = tree.first_hit(&g, &ray).map(|h| (h.element, h.t));
            prop_assert_eq!(hit, exhaustive(&g, &ray));
        }
    }

    /// On a 1200-face grid each query expands well under half the boundary
    /// size worth of nodes.
    #[test]
    fn queries_expand_few_nodes(seed in any::<u64>()) {
        let g = regular_tet_mesh(10, Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        let tree = RStarTree::build(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let ray = common::random_ray(&mut rng, 3.0);
            let mut visits = 0;
            tree.first_hit_with(&g, &ray, Precision::Double, &mut visits);
            prop_assert!(2 * visits < g.boundary().len(), "{visits} visits");
        }
    }
}
