use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Shape of the immersed solid, centered at `GeometryConfig::solid_center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum SolidShape {
    Disk {
        radius: f64,
    },
    /// Axis-aligned ellipse with semi-axes along x and y.
    Ellipse {
        semi_x: f64,
        semi_y: f64,
    },
}

impl SolidShape {
    /// Distance from the center to the boundary in direction `theta`.
    pub fn polar_radius(&self, theta: f64) -> f64 {
        match *self {
            SolidShape::Disk { radius } => radius,
            SolidShape::Ellipse { semi_x, semi_y } => {
                let (s, c) = theta.sin_cos();
                semi_x * semi_y / ((semi_y * c).powi(2) + (semi_x * s).powi(2)).sqrt()
            }
        }
    }

    pub fn max_radius(&self) -> f64 {
        match *self {
            SolidShape::Disk { radius } => radius,
            SolidShape::Ellipse { semi_x, semi_y } => semi_x.max(semi_y),
        }
    }

    pub fn min_radius(&self) -> f64 {
        match *self {
            SolidShape::Disk { radius } => radius,
            SolidShape::Ellipse { semi_x, semi_y } => semi_x.min(semi_y),
        }
    }

    pub fn is_circle(&self) -> bool {
        match *self {
            SolidShape::Disk { .. } => true,
            SolidShape::Ellipse { semi_x, semi_y } => semi_x == semi_y,
        }
    }

    /// Exact area of the solid.
    pub fn area(&self) -> f64 {
        match *self {
            SolidShape::Disk { radius } => PI * radius * radius,
            SolidShape::Ellipse { semi_x, semi_y } => PI * semi_x * semi_y,
        }
    }
}

/// Physical and discretization parameters of the container/solid pair.
///
/// The container is the disk of radius `container_radius` centered at the
/// origin. Lengths, densities and viscosity are in consistent units with the
/// fluid density normalized to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub container_radius: f64,
    pub solid: SolidShape,
    #[serde(default)]
    pub solid_center: [f64; 2],
    pub solid_density: f64,
    pub viscosity: f64,
    pub mesh_size: f64,
}

impl GeometryConfig {
    /// Concentric disks with unit density and viscosity.
    pub fn concentric_disks(solid_radius: f64, container_radius: f64, mesh_size: f64) -> Self {
        GeometryConfig {
            container_radius,
            solid: SolidShape::Disk { radius: solid_radius },
            solid_center: [0.0, 0.0],
            solid_density: 1.0,
            viscosity: 1.0,
            mesh_size,
        }
    }

    /// The default laboratory geometry: a = 0.3, b = 1.0.
    pub fn default_with_mesh_size(mesh_size: f64) -> Self {
        Self::concentric_disks(0.3, 1.0, mesh_size)
    }

    /// Lower bound on dist(outer boundary, solid).
    pub fn gap(&self) -> f64 {
        let offset = self.solid_center[0].hypot(self.solid_center[1]);
        self.container_radius - offset - self.solid.max_radius()
    }

    /// Geometric tolerance matching the O(h^2) boundary approximation.
    pub fn tol_geom(&self) -> f64 {
        tol_geom(self.mesh_size, 2.0 * self.container_radius)
    }
}

pub(crate) fn tol_geom(mesh_size: f64, diameter: f64) -> f64 {
    10.0 * mesh_size * mesh_size / diameter
}

/// Checks every invariant of a raw configuration and hands it back.
pub fn build_geometry(config: GeometryConfig) -> Result<GeometryConfig> {
    let positive = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
        }
    };
    positive("container_radius", config.container_radius)?;
    positive("solid_density", config.solid_density)?;
    positive("viscosity", config.viscosity)?;
    positive("mesh_size", config.mesh_size)?;
    positive("solid size", config.solid.min_radius())?;

    let gap = config.gap();
    if gap <= 0.0 {
        return Err(Error::GapViolation { gap });
    }
    if config.mesh_size > 0.5 * gap {
        return Err(Error::InvalidInput(format!(
            "mesh_size {} too coarse for the gap {gap}",
            config.mesh_size
        )));
    }
    let offset = config.solid_center[0].hypot(config.solid_center[1]);
    let tol = config.tol_geom();
    if offset > tol {
        return Err(Error::CentroidError { offset, tol });
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concentric_disks_are_valid() {
        let cfg = build_geometry(GeometryConfig::concentric_disks(0.3, 1.0, 0.1)).unwrap();
        assert!((cfg.gap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn oversized_solid_is_rejected() {
        let err = build_geometry(GeometryConfig::concentric_disks(1.1, 1.0, 0.1)).unwrap_err();
        assert!(matches!(err, Error::GapViolation { .. }));
    }

    #[test]
    fn centered_ellipse_is_valid() {
        let mut cfg = GeometryConfig::default_with_mesh_size(0.1);
        cfg.solid = SolidShape::Ellipse {
            semi_x: 0.3,
            semi_y: 0.15,
        };
        assert!(build_geometry(cfg).is_ok());
    }

    #[test]
    fn off_center_solid_is_rejected() {
        let mut cfg = GeometryConfig::default_with_mesh_size(0.1);
        cfg.solid_center = [0.1, 0.0];
        assert!(matches!(build_geometry(cfg).unwrap_err(), Error::CentroidError { .. }));
    }

    #[test]
    fn nonpositive_density_is_rejected() {
        let mut cfg = GeometryConfig::default_with_mesh_size(0.1);
        cfg.solid_density = 0.0;
        assert!(matches!(build_geometry(cfg).unwrap_err(), Error::InvalidInput(_)));
    }

    #[test]
    fn ellipse_polar_radius_hits_the_axes() {
        let e = SolidShape::Ellipse {
            semi_x: 0.3,
            semi_y: 0.15,
        };
        assert!((e.polar_radius(0.0) - 0.3).abs() < 1e-15);
        assert!((e.polar_radius(std::f64::consts::FRAC_PI_2) - 0.15).abs() < 1e-15);
    }
}
