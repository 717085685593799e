//! Ring-layered mesher for star-shaped solids inside a circular container.
//!
//! Both regions are filled with closed rings of nodes. Neighbouring rings are
//! stitched by a zipper that always advances along the ring whose next node
//! has the smaller polar angle. The interface ring is shared, so the mesh is
//! conforming across the solid boundary.

use std::f64::consts::TAU;

use super::config::GeometryConfig;
use super::mesh::{BoundaryEdge, BoundaryTag, Mesh, NormalConvention, Region, Triangle, DEFAULT_MIN_ANGLE_DEG};
use crate::error::{Error, Result};

struct Ring {
    /// Global vertex ids in counter-clockwise order.
    ids: Vec<usize>,
    /// Polar angles of the nodes, increasing, within one turn of `angles[0]`.
    angles: Vec<f64>,
}

const ARC_SAMPLES: usize = 4096;

type Curve<'a> = &'a dyn Fn(f64) -> [f64; 2];

/// Places `n` nodes on the closed curve `point(theta)`, equally spaced in
/// arc length, the first one `offset` spacings past theta = 0.
fn ring_angles(point: Curve, n: usize, offset: f64, circle: bool) -> Vec<f64> {
    if circle {
        return (0..n).map(|i| TAU * (i as f64 + offset) / n as f64).collect();
    }
    let mut cum = Vec::with_capacity(ARC_SAMPLES + 1);
    cum.push(0.0);
    let mut prev = point(0.0);
    for k in 1..=ARC_SAMPLES {
        let p = point(TAU * k as f64 / ARC_SAMPLES as f64);
        let last = *cum.last().unwrap();
        cum.push(last + (p[0] - prev[0]).hypot(p[1] - prev[1]));
        prev = p;
    }
    let total = cum[ARC_SAMPLES];
    (0..n)
        .map(|i| {
            let s = total * (i as f64 + offset) / n as f64;
            let k = cum.partition_point(|&c| c <= s).clamp(1, ARC_SAMPLES);
            let frac = (s - cum[k - 1]) / (cum[k] - cum[k - 1]);
            TAU * (k as f64 - 1.0 + frac) / ARC_SAMPLES as f64
        })
        .collect()
}

fn perimeter(point: Curve) -> f64 {
    let mut len = 0.0;
    let mut prev = point(0.0);
    for k in 1..=ARC_SAMPLES {
        let p = point(TAU * k as f64 / ARC_SAMPLES as f64);
        len += (p[0] - prev[0]).hypot(p[1] - prev[1]);
        prev = p;
    }
    len
}

fn push_triangle(mesh: &mut Mesh, mut v: [usize; 3], region: Region) {
    let p = |i: usize| mesh.vertices[v[i]];
    let area = (p(1)[0] - p(0)[0]) * (p(2)[1] - p(0)[1]) - (p(1)[1] - p(0)[1]) * (p(2)[0] - p(0)[0]);
    if area < 0.0 {
        v.swap(1, 2);
    }
    mesh.triangles.push(Triangle { vertices: v, region });
}

/// Triangulates the strip between an inner and an outer ring.
fn zip(mesh: &mut Mesh, inner: &Ring, outer: &Ring, region: Region) {
    let (na, nb) = (inner.ids.len(), outer.ids.len());
    let a0 = inner.angles[0];
    let rel = |t: f64| (t - a0).rem_euclid(TAU);
    let alpha = |i: usize| if i == na { TAU } else { inner.angles[i] - a0 };
    // outer node closest in angle to the first inner node
    let k0 = (0..nb)
        .min_by(|&x, &y| {
            let dx = rel(outer.angles[x]).min(TAU - rel(outer.angles[x]));
            let dy = rel(outer.angles[y]).min(TAU - rel(outer.angles[y]));
            dx.total_cmp(&dy)
        })
        .unwrap();
    let start = {
        let r = rel(outer.angles[k0]);
        if r > std::f64::consts::PI {
            r - TAU
        } else {
            r
        }
    };
    let beta = |k: usize| {
        if k == nb {
            start + TAU
        } else {
            start + (outer.angles[(k0 + k) % nb] - outer.angles[k0]).rem_euclid(TAU)
        }
    };
    let (mut i, mut k) = (0, 0);
    while i < na || k < nb {
        let a = inner.ids[i % na];
        let b = outer.ids[(k0 + k) % nb];
        let advance_inner = k == nb || (i < na && alpha(i + 1) <= beta(k + 1));
        if advance_inner {
            push_triangle(mesh, [a, inner.ids[(i + 1) % na], b], region);
            i += 1;
        } else {
            push_triangle(mesh, [a, outer.ids[(k0 + k + 1) % nb], b], region);
            k += 1;
        }
    }
}

fn add_ring(mesh: &mut Mesh, point: Curve, n: usize, offset: f64, circle: bool) -> Ring {
    let angles = ring_angles(point, n, offset, circle);
    let first = mesh.vertices.len();
    mesh.vertices.extend(angles.iter().map(|&t| point(t)));
    Ring {
        ids: (first..first + n).collect(),
        angles,
    }
}

/// Meshes the fluid annulus and the solid for a validated configuration.
pub fn generate_mesh(config: &GeometryConfig) -> Result<Mesh> {
    generate_mesh_with_floor(config, DEFAULT_MIN_ANGLE_DEG)
}

pub fn generate_mesh_with_floor(config: &GeometryConfig, min_angle_deg: f64) -> Result<Mesh> {
    let h = config.mesh_size;
    let b = config.container_radius;
    let shape = config.solid;
    let circle = shape.is_circle();
    let layer = 0.5 * 3f64.sqrt() * h;
    let gap = config.gap();
    if !(h > 0.0) || gap <= 0.0 {
        return Err(Error::MeshingFailure("invalid mesh size or gap".into()));
    }
    let mean_radius = 0.5 * (shape.min_radius() + shape.max_radius());
    let n_fluid_layers = ((gap / layer).round() as usize).max(2);
    let n_solid_layers = ((mean_radius / layer).round() as usize).max(2);

    let mut mesh = Mesh {
        vertices: Vec::new(),
        triangles: Vec::new(),
        boundary_edges: Vec::new(),
        normal_orientation: NormalConvention::OutOfFluid,
    };
    let center = config.solid_center;
    let count = |c: Curve, floor: usize| ((perimeter(c) / h).round() as usize).max(floor);
    let solid_point = move |t: f64, th: f64| {
        let r = t * shape.polar_radius(th);
        [center[0] + r * th.cos(), center[1] + r * th.sin()]
    };

    // solid: centre vertex, then rings out to the interface
    mesh.vertices.push(center);
    let mut rings: Vec<Ring> = Vec::new();
    for j in 1..=n_solid_layers {
        let t = j as f64 / n_solid_layers as f64;
        let r = move |th: f64| solid_point(t, th);
        let n = count(&r, 6);
        let offset = if j % 2 == 0 { 0.5 } else { 0.0 };
        let offset = if j == n_solid_layers { 0.0 } else { offset };
        rings.push(add_ring(&mut mesh, &r, n, offset, circle));
    }
    let n0 = rings[0].ids.len();
    for i in 0..n0 {
        push_triangle(
            &mut mesh,
            [0, rings[0].ids[i], rings[0].ids[(i + 1) % n0]],
            Region::Solid,
        );
    }
    for j in 1..rings.len() {
        zip(&mut mesh, &rings[j - 1], &rings[j], Region::Solid);
    }
    let interface = rings.pop().unwrap();

    let mut inner = interface;
    let interface_ids = inner.ids.clone();
    for j in 1..=n_fluid_layers {
        let s = j as f64 / n_fluid_layers as f64;
        let r = move |th: f64| {
            let p = solid_point(1.0, th);
            [(1.0 - s) * p[0] + s * b * th.cos(), (1.0 - s) * p[1] + s * b * th.sin()]
        };
        let n = count(&r, 6);
        let offset = if j % 2 == 1 { 0.5 } else { 0.0 };
        let ring = add_ring(&mut mesh, &r, n, offset, circle);
        zip(&mut mesh, &inner, &ring, Region::Fluid);
        inner = ring;
    }
    let outer = inner;

    let no = outer.ids.len();
    for i in 0..no {
        mesh.boundary_edges.push(BoundaryEdge {
            vertices: [outer.ids[i], outer.ids[(i + 1) % no]],
            tag: BoundaryTag::Outer,
        });
    }
    let ni = interface_ids.len();
    for i in 0..ni {
        mesh.boundary_edges.push(BoundaryEdge {
            vertices: [interface_ids[(i + 1) % ni], interface_ids[i]],
            tag: BoundaryTag::Interface,
        });
    }

    mesh.validate(min_angle_deg)?;
    Ok(mesh)
}
