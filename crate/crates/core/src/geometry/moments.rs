use serde::Serialize;

use super::config::tol_geom;
use super::mesh::{Mesh, Region};
use crate::error::{Error, Result};
use crate::quadrature::TRI_DEG4;

/// Rigid-body data of the solid at rest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RigidBodyData {
    pub mass: f64,
    /// Moment of inertia about the origin.
    pub inertia: f64,
    pub centroid: [f64; 2],
    pub area: f64,
    pub density: f64,
}

/// Integrates area, first and second moments of the solid region.
pub fn solid_moments(mesh: &Mesh, density: f64) -> Result<RigidBodyData> {
    if !(density.is_finite() && density > 0.0) {
        return Err(Error::InvalidInput(format!(
            "solid density must be positive, got {density}"
        )));
    }
    let (mut area, mut first, mut second) = (0.0, [0.0; 2], 0.0);
    for t in 0..mesh.triangles.len() {
        if mesh.triangles[t].region != Region::Solid {
            continue;
        }
        let p = mesh.triangle_points(t);
        let a = mesh.signed_area(t);
        area += a;
        for q in TRI_DEG4.iter() {
            let x = q.bary[0] * p[0][0] + q.bary[1] * p[1][0] + q.bary[2] * p[2][0];
            let y = q.bary[0] * p[0][1] + q.bary[1] * p[1][1] + q.bary[2] * p[2][1];
            let w = q.weight * a;
            first[0] += w * x;
            first[1] += w * y;
            second += w * (x * x + y * y);
        }
    }
    if area <= 0.0 {
        return Err(Error::MeshingFailure("solid region is empty".into()));
    }
    let centroid = [first[0] / area, first[1] / area];
    let radius = mesh.vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
    let tol = tol_geom(mesh.max_edge_length(), 2.0 * radius);
    let offset = centroid[0].hypot(centroid[1]);
    if offset > tol {
        return Err(Error::CentroidError { offset, tol });
    }
    Ok(RigidBodyData {
        mass: density * area,
        inertia: density * second,
        centroid,
        area,
        density,
    })
}
