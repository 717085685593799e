//! Galerkin assembly of the elementary bilinear forms on a `P2Space`.
//! Vector fields are interleaved: dof `2 * node + component`.

use super::element::{edge_values, p2_values, ElementGeom};
use super::space::P2Space;
use crate::geometry::BoundaryTag;
use crate::linalg::{Csr, Triplets};
use crate::quadrature::{EDGE_GAUSS3, TRI_DEG4};

fn assemble_scalar(space: &P2Space, local: impl Fn(&ElementGeom) -> [[f64; 6]; 6]) -> Csr {
    let n = space.n_nodes();
    let mut t = Triplets::new(n, n);
    for (e, el) in space.elements.iter().enumerate() {
        let k = local(&space.geom(e));
        for i in 0..6 {
            for j in 0..6 {
                t.push(el[i], el[j], k[i][j]);
            }
        }
    }
    t.to_csr()
}

pub fn scalar_mass(space: &P2Space) -> Csr {
    assemble_scalar(space, |g| {
        let mut k = [[0.0; 6]; 6];
        for q in TRI_DEG4.iter() {
            let v = p2_values(q.bary);
            let w = q.weight * g.area;
            for i in 0..6 {
                for j in 0..6 {
                    k[i][j] += w * v[i] * v[j];
                }
            }
        }
        k
    })
}

pub fn scalar_stiffness(space: &P2Space) -> Csr {
    assemble_scalar(space, |g| {
        let mut k = [[0.0; 6]; 6];
        for q in TRI_DEG4.iter() {
            let d = g.p2_grads(q.bary);
            let w = q.weight * g.area;
            for i in 0..6 {
                for j in 0..6 {
                    k[i][j] += w * (d[i][0] * d[j][0] + d[i][1] * d[j][1]);
                }
            }
        }
        k
    })
}

/// Integrals of the P2 basis functions.
pub fn scalar_integrals(space: &P2Space) -> Vec<f64> {
    let mut out = vec![0.0; space.n_nodes()];
    for (e, el) in space.elements.iter().enumerate() {
        let g = space.geom(e);
        for q in TRI_DEG4.iter() {
            let v = p2_values(q.bary);
            for i in 0..6 {
                out[el[i]] += q.weight * g.area * v[i];
            }
        }
    }
    out
}

fn assemble_vector(space: &P2Space, local: impl Fn(&ElementGeom) -> [[[[f64; 2]; 2]; 6]; 6]) -> Csr {
    let n = 2 * space.n_nodes();
    let mut t = Triplets::new(n, n);
    for (e, el) in space.elements.iter().enumerate() {
        let k = local(&space.geom(e));
        for a in 0..6 {
            for b in 0..6 {
                for c in 0..2 {
                    for d in 0..2 {
                        let v = k[a][b][c][d];
                        if v != 0.0 {
                            t.push(2 * el[a] + c, 2 * el[b] + d, v);
                        }
                    }
                }
            }
        }
    }
    t.to_csr()
}

/// L2 inner product of vector fields.
pub fn vector_mass(space: &P2Space) -> Csr {
    assemble_vector(space, |g| {
        let mut k = [[[[0.0; 2]; 2]; 6]; 6];
        for q in TRI_DEG4.iter() {
            let v = p2_values(q.bary);
            let w = q.weight * g.area;
            for a in 0..6 {
                for b in 0..6 {
                    let m = w * v[a] * v[b];
                    k[a][b][0][0] += m;
                    k[a][b][1][1] += m;
                }
            }
        }
        k
    })
}

/// 2 nu (D(u), D(v)).
pub fn viscous(space: &P2Space, nu: f64) -> Csr {
    assemble_vector(space, |g| {
        let mut k = [[[[0.0; 2]; 2]; 6]; 6];
        for q in TRI_DEG4.iter() {
            let d = g.p2_grads(q.bary);
            let w = nu * q.weight * g.area;
            for a in 0..6 {
                for b in 0..6 {
                    let lap = d[a][0] * d[b][0] + d[a][1] * d[b][1];
                    for c in 0..2 {
                        for e in 0..2 {
                            let delta = if c == e { lap } else { 0.0 };
                            k[a][b][c][e] += w * (delta + d[a][e] * d[b][c]);
                        }
                    }
                }
            }
        }
        k
    })
}

/// (grad u, grad v) for vector fields.
pub fn vector_laplacian(space: &P2Space) -> Csr {
    assemble_vector(space, |g| {
        let mut k = [[[[0.0; 2]; 2]; 6]; 6];
        for q in TRI_DEG4.iter() {
            let d = g.p2_grads(q.bary);
            let w = q.weight * g.area;
            for a in 0..6 {
                for b in 0..6 {
                    let lap = w * (d[a][0] * d[b][0] + d[a][1] * d[b][1]);
                    k[a][b][0][0] += lap;
                    k[a][b][1][1] += lap;
                }
            }
        }
        k
    })
}

/// (div u, div v).
pub fn grad_div(space: &P2Space) -> Csr {
    assemble_vector(space, |g| {
        let mut k = [[[[0.0; 2]; 2]; 6]; 6];
        for q in TRI_DEG4.iter() {
            let d = g.p2_grads(q.bary);
            let w = q.weight * g.area;
            for a in 0..6 {
                for b in 0..6 {
                    for c in 0..2 {
                        for e in 0..2 {
                            k[a][b][c][e] += w * d[a][c] * d[b][e];
                        }
                    }
                }
            }
        }
        k
    })
}

/// B[p, (a, c)] = -(psi_p, d_c phi_a) with P1 pressures on the vertex nodes.
pub fn divergence(space: &P2Space) -> Csr {
    let mut t = Triplets::new(space.n_vertices, 2 * space.n_nodes());
    for (e, el) in space.elements.iter().enumerate() {
        let g = space.geom(e);
        let mut k = [[[0.0; 2]; 6]; 3];
        for q in TRI_DEG4.iter() {
            let d = g.p2_grads(q.bary);
            let w = q.weight * g.area;
            for p in 0..3 {
                for a in 0..6 {
                    for c in 0..2 {
                        k[p][a][c] -= w * q.bary[p] * d[a][c];
                    }
                }
            }
        }
        for p in 0..3 {
            for a in 0..6 {
                for c in 0..2 {
                    t.push(el[p], 2 * el[a] + c, k[p][a][c]);
                }
            }
        }
    }
    t.to_csr()
}

/// P1 mass matrix on the vertex nodes.
pub fn pressure_mass(space: &P2Space) -> Csr {
    let mut t = Triplets::new(space.n_vertices, space.n_vertices);
    for (e, el) in space.elements.iter().enumerate() {
        let area = space.geom(e).area;
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                t.push(el[i], el[j], m);
            }
        }
    }
    t.to_csr()
}

/// G[(a, c), b] = (phi_a, d_c phi_b): pairs a vector field with the gradient
/// of a P2 scalar.
pub fn vector_gradient(space: &P2Space) -> Csr {
    let n = space.n_nodes();
    let mut t = Triplets::new(2 * n, n);
    for (e, el) in space.elements.iter().enumerate() {
        let g = space.geom(e);
        let mut k = [[[0.0; 2]; 6]; 6];
        for q in TRI_DEG4.iter() {
            let v = p2_values(q.bary);
            let d = g.p2_grads(q.bary);
            let w = q.weight * g.area;
            for a in 0..6 {
                for b in 0..6 {
                    for c in 0..2 {
                        k[a][b][c] += w * v[a] * d[b][c];
                    }
                }
            }
        }
        for a in 0..6 {
            for b in 0..6 {
                for c in 0..2 {
                    t.push(2 * el[a] + c, el[b], k[a][b][c]);
                }
            }
        }
    }
    t.to_csr()
}

/// f[(a, c)] = int_{tag} phi_a n_c ds, so that f . v is the outward flux.
pub fn boundary_flux(space: &P2Space, tag: BoundaryTag) -> Vec<f64> {
    let mut f = vec![0.0; 2 * space.n_nodes()];
    for e in space.edges_tagged(tag) {
        for &(t, w) in EDGE_GAUSS3.iter() {
            let v = edge_values(t);
            for k in 0..3 {
                for c in 0..2 {
                    f[2 * e.nodes[k] + c] += w * e.length * v[k] * e.normal[c];
                }
            }
        }
    }
    f
}

/// L2(boundary) inner product of vector traces.
pub fn boundary_vector_mass(space: &P2Space, tag: BoundaryTag) -> Csr {
    let n = 2 * space.n_nodes();
    let mut trip = Triplets::new(n, n);
    for e in space.edges_tagged(tag) {
        for &(t, w) in EDGE_GAUSS3.iter() {
            let v = edge_values(t);
            for i in 0..3 {
                for j in 0..3 {
                    let m = w * e.length * v[i] * v[j];
                    for c in 0..2 {
                        trip.push(2 * e.nodes[i] + c, 2 * e.nodes[j] + c, m);
                    }
                }
            }
        }
    }
    trip.to_csr()
}

/// l[a] = int_{tag} g(x, n) phi_a ds for a scalar boundary datum.
pub fn boundary_load(space: &P2Space, tag: BoundaryTag, g: impl Fn([f64; 2], [f64; 2]) -> f64) -> Vec<f64> {
    let mut l = vec![0.0; space.n_nodes()];
    for e in space.edges_tagged(tag) {
        for &(t, w) in EDGE_GAUSS3.iter() {
            let v = edge_values(t);
            let gv = g(e.point(t), e.normal);
            for k in 0..3 {
                l[e.nodes[k]] += w * e.length * v[k] * gv;
            }
        }
    }
    l
}
