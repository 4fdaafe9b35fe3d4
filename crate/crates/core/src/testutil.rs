use crate::mesh::MeshGraph;
use crate::Vec3;

pub fn unit_tet() -> MeshGraph {
    MeshGraph::build(
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ],
        &[[0, 1, 2, 3]],
    )
    .unwrap()
}
