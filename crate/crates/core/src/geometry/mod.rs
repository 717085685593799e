//! Container and solid description, meshing, and rigid-body moments.

mod config;
mod mesh;
mod mesher;
mod moments;

pub use config::{build_geometry, GeometryConfig, SolidShape};
pub use mesh::{BoundaryEdge, BoundaryTag, Mesh, NormalConvention, Region, Triangle, DEFAULT_MIN_ANGLE_DEG};
pub use mesher::{generate_mesh, generate_mesh_with_floor};
pub use moments::{solid_moments, RigidBodyData};

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn disk_mesh(h: f64) -> Mesh {
        generate_mesh(&GeometryConfig::concentric_disks(0.3, 1.0, h)).unwrap()
    }

    #[test]
    fn coarse_mesh_is_valid() {
        let m = disk_mesh(0.1);
        m.validate(DEFAULT_MIN_ANGLE_DEG).unwrap();
        assert!(m.edges_tagged(BoundaryTag::Interface).count() > 0);
        assert!(m.edges_tagged(BoundaryTag::Outer).count() > 0);
    }

    #[test]
    fn fine_mesh_meets_quality_floor() {
        let m = disk_mesh(0.05);
        assert!(m.min_angle_deg() >= DEFAULT_MIN_ANGLE_DEG);
    }

    #[test]
    fn boundary_vertices_lie_on_circles() {
        let m = disk_mesh(0.1);
        for e in &m.boundary_edges {
            let r = match e.tag {
                BoundaryTag::Outer => 1.0,
                BoundaryTag::Interface => 0.3,
            };
            for &v in &e.vertices {
                let p = m.vertices[v];
                assert!((p[0].hypot(p[1]) - r).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn interface_normals_point_into_the_solid() {
        let m = disk_mesh(0.1);
        for e in m.edges_tagged(BoundaryTag::Interface) {
            let n = m.edge_normal(e);
            let p = m.vertices[e.vertices[0]];
            assert!(n[0] * p[0] + n[1] * p[1] < 0.0);
        }
        for e in m.edges_tagged(BoundaryTag::Outer) {
            let n = m.edge_normal(e);
            let p = m.vertices[e.vertices[0]];
            assert!(n[0] * p[0] + n[1] * p[1] > 0.0);
        }
    }

    #[test]
    fn interface_length_converges_quadratically() {
        let err = |h: f64| (disk_mesh(h).boundary_length(BoundaryTag::Interface) - 0.6 * PI).abs();
        let ratio = err(0.1) / err(0.05);
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn areas_add_up() {
        for h in [0.1, 0.05] {
            let m = disk_mesh(h);
            let total = m.region_area(Region::Fluid) + m.region_area(Region::Solid);
            assert!((total - PI).abs() < 2.0 * h * h, "h={h}");
        }
    }

    #[test]
    fn disk_moments_match_closed_form() {
        let m = disk_mesh(0.05);
        let rb = solid_moments(&m, 1.0).unwrap();
        // polygonal disk: exact moments of the inscribed regular polygon
        let n = m.edges_tagged(BoundaryTag::Interface).count() as f64;
        let a = 0.3f64;
        let poly_area = 0.5 * n * a * a * (2.0 * PI / n).sin();
        assert!((rb.mass - poly_area).abs() < 1e-13);
        assert!((rb.mass - PI * a * a).abs() < 2e-3);
        assert!((rb.inertia - PI * a.powi(4) / 2.0).abs() < 2e-4);
        assert!(rb.centroid[0].hypot(rb.centroid[1]) < 1e-14);
    }

    #[test]
    fn translated_mesh_has_centroid_error() {
        let m = disk_mesh(0.1).translated([0.3, 0.0]);
        assert!(matches!(
            solid_moments(&m, 1.0).unwrap_err(),
            crate::Error::CentroidError { .. }
        ));
    }

    #[test]
    fn zero_density_is_rejected() {
        assert!(solid_moments(&disk_mesh(0.1), 0.0).is_err());
    }

    #[test]
    fn ellipse_mesh_is_valid() {
        let mut cfg = GeometryConfig::default_with_mesh_size(0.05);
        cfg.solid = SolidShape::Ellipse {
            semi_x: 0.3,
            semi_y: 0.15,
        };
        let m = generate_mesh(&cfg).unwrap();
        let rb = solid_moments(&m, 1.0).unwrap();
        assert!((rb.area - PI * 0.045).abs() < 5e-3);
    }

    #[test]
    fn text_roundtrip_is_lossless() {
        let m = disk_mesh(0.1);
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(Mesh::from_text("mesh3d v1\n").is_err());
    }

    #[test]
    fn flipped_triangle_is_caught() {
        let mut m = disk_mesh(0.1);
        m.triangles[3].vertices.swap(1, 2);
        assert!(m.validate(0.0).is_err());
    }
}
