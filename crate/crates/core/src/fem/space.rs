use std::collections::HashMap;

use super::element::{ElementGeom, EDGE_LOCAL};
use crate::geometry::{BoundaryTag, Mesh, Region};

/// A tagged boundary edge expressed in local P2 node numbers.
#[derive(Clone, Copy, Debug)]
pub struct EdgeDofs {
    /// start, end, midpoint
    pub nodes: [usize; 3],
    pub tag: BoundaryTag,
    /// Unit normal pointing out of the fluid.
    pub normal: [f64; 2],
    pub length: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl EdgeDofs {
    pub fn point(&self, t: f64) -> [f64; 2] {
        [
            (1.0 - t) * self.start[0] + t * self.end[0],
            (1.0 - t) * self.start[1] + t * self.end[1],
        ]
    }
}

/// Continuous piecewise-quadratic scalar space on one region of the mesh.
///
/// Nodes are numbered vertices first (so the first `n_vertices` nodes carry
/// the P1 space), then edge midpoints.
#[derive(Clone, Debug)]
pub struct P2Space {
    pub region: Region,
    pub nodes: Vec<[f64; 2]>,
    pub n_vertices: usize,
    pub elements: Vec<[usize; 6]>,
    pub boundary: Vec<EdgeDofs>,
    /// mesh vertex id -> local node
    pub vertex_node: HashMap<usize, usize>,
}

impl P2Space {
    pub fn new(mesh: &Mesh, region: Region) -> P2Space {
        let tris: Vec<_> = mesh.triangles.iter().filter(|t| t.region == region).collect();
        let mut used: Vec<usize> = tris.iter().flat_map(|t| t.vertices).collect();
        used.sort_unstable();
        used.dedup();
        let vertex_node: HashMap<usize, usize> = used.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut nodes: Vec<[f64; 2]> = used.iter().map(|&v| mesh.vertices[v]).collect();
        let n_vertices = nodes.len();
        let mut edge_node: HashMap<(usize, usize), usize> = HashMap::new();
        let mut elements = Vec::with_capacity(tris.len());
        for t in &tris {
            let v = t.vertices;
            let mut el = [0usize; 6];
            for i in 0..3 {
                el[i] = vertex_node[&v[i]];
            }
            for (e, &[i, j]) in EDGE_LOCAL.iter().enumerate() {
                let key = (v[i].min(v[j]), v[i].max(v[j]));
                let id = *edge_node.entry(key).or_insert_with(|| {
                    let a = mesh.vertices[v[i]];
                    let b = mesh.vertices[v[j]];
                    nodes.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                    nodes.len() - 1
                });
                el[3 + e] = id;
            }
            elements.push(el);
        }
        let mut boundary = Vec::new();
        for e in &mesh.boundary_edges {
            let [p, q] = e.vertices;
            let (Some(&np), Some(&nq)) = (vertex_node.get(&p), vertex_node.get(&q)) else {
                continue;
            };
            let Some(&nm) = edge_node.get(&(p.min(q), p.max(q))) else {
                continue;
            };
            boundary.push(EdgeDofs {
                nodes: [np, nq, nm],
                tag: e.tag,
                normal: mesh.edge_normal(e),
                length: mesh.edge_length(e),
                start: mesh.vertices[p],
                end: mesh.vertices[q],
            });
        }
        P2Space {
            region,
            nodes,
            n_vertices,
            elements,
            boundary,
            vertex_node,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn geom(&self, el: usize) -> ElementGeom {
        let e = &self.elements[el];
        ElementGeom::new([self.nodes[e[0]], self.nodes[e[1]], self.nodes[e[2]]])
    }

    pub fn edges_tagged(&self, tag: BoundaryTag) -> impl Iterator<Item = &EdgeDofs> {
        self.boundary.iter().filter(move |e| e.tag == tag)
    }

    /// Distinct nodes on boundary edges with the given tag, in order of
    /// first appearance along the edge list.
    pub fn boundary_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut seen = vec![false; self.n_nodes()];
        let mut out = Vec::new();
        for e in self.edges_tagged(tag) {
            for n in [e.nodes[0], e.nodes[2], e.nodes[1]] {
                if !seen[n] {
                    seen[n] = true;
                    out.push(n);
                }
            }
        }
        out
    }

    /// Nodal interpolant of a scalar function.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&p| f(p)).collect()
    }

    /// Nodal interpolant of a vector function, interleaved (2 node + c).
    pub fn interpolate_vec(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        self.nodes.iter().flat_map(|&p| f(p)).collect()
    }
}
