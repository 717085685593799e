use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    Fluid,
    Solid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Outer,
    Interface,
}

/// How boundary edges are oriented. The only convention in use: every tagged
/// edge `[p, q]` has the fluid on its left, so the right-hand normal of
/// `q - p` points out of the fluid (outward on the container wall, into the
/// solid on the interface).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalConvention {
    OutOfFluid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub region: Region,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub normal_orientation: NormalConvention,
}

pub const DEFAULT_MIN_ANGLE_DEG: f64 = 20.0;

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// A `KEY <count>` block: the header line number and (line number, tokens)
/// for each row.
type Section = (usize, Vec<(usize, Vec<String>)>);

impl Mesh {
    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t].vertices;
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area (positive for counter-clockwise vertices).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * cross(sub(b, a), sub(c, a))
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.triangles[t].region == region)
            .map(|t| self.signed_area(t))
            .sum()
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        let d = sub(self.vertices[e.vertices[1]], self.vertices[e.vertices[0]]);
        d[0].hypot(d[1])
    }

    /// Unit normal of a boundary edge, pointing out of the fluid.
    pub fn edge_normal(&self, e: &BoundaryEdge) -> [f64; 2] {
        let d = sub(self.vertices[e.vertices[1]], self.vertices[e.vertices[0]]);
        let l = d[0].hypot(d[1]);
        [d[1] / l, -d[0] / l]
    }

    pub fn edges_tagged(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary_edges.iter().filter(move |e| e.tag == tag)
    }

    pub fn boundary_length(&self, tag: BoundaryTag) -> f64 {
        self.edges_tagged(tag).map(|e| self.edge_length(e)).sum()
    }

    /// Longest triangle edge.
    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            for i in 0..3 {
                let d = sub(p[(i + 1) % 3], p[i]);
                h = h.max(d[0].hypot(d[1]));
            }
        }
        h
    }

    pub fn min_angle_deg(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            for i in 0..3 {
                let u = sub(p[(i + 1) % 3], p[i]);
                let v = sub(p[(i + 2) % 3], p[i]);
                let ang = cross(u, v).abs().atan2(u[0] * v[0] + u[1] * v[1]);
                worst = worst.min(ang.to_degrees());
            }
        }
        worst
    }

    /// Mesh with every vertex shifted by `offset`.
    pub fn translated(&self, offset: [f64; 2]) -> Mesh {
        let mut m = self.clone();
        for v in &mut m.vertices {
            v[0] += offset[0];
            v[1] += offset[1];
        }
        m
    }

    /// Checks all structural invariants: index ranges, orientation, quality,
    /// tagging of every boundary/interface edge, and the normal convention.
    pub fn validate(&self, min_angle_deg: f64) -> Result<()> {
        let fail = |msg: String| Err(Error::MeshingFailure(msg));
        let nv = self.vertices.len();
        if self.triangles.is_empty() {
            return fail("mesh has no triangles".into());
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.vertices.iter().any(|&v| v >= nv) {
                return fail(format!("triangle {t} references a missing vertex"));
            }
            let area = self.signed_area(t);
            let p = self.triangle_points(t);
            let scale = (0..3)
                .map(|i| {
                    let d = sub(p[(i + 1) % 3], p[i]);
                    d[0] * d[0] + d[1] * d[1]
                })
                .fold(0.0, f64::max);
            if !(area > 1e-12 * scale) {
                return fail(format!("triangle {t} is degenerate or clockwise"));
            }
        }
        let angle = self.min_angle_deg();
        if angle < min_angle_deg {
            return fail(format!(
                "minimum angle {angle:.2} deg below the quality floor {min_angle_deg} deg"
            ));
        }
        if !self.triangles.iter().any(|t| t.region == Region::Fluid)
            || !self.triangles.iter().any(|t| t.region == Region::Solid)
        {
            return fail("both fluid and solid regions must be nonempty".into());
        }

        // directed edge -> owning triangle
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                let key = (tri.vertices[i], tri.vertices[(i + 1) % 3]);
                if owner.insert(key, t).is_some() {
                    return fail(format!("edge {key:?} used twice with the same orientation"));
                }
            }
        }
        let mut tagged: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for e in &self.boundary_edges {
            let [p, q] = e.vertices;
            if p >= nv || q >= nv {
                return fail("boundary edge references a missing vertex".into());
            }
            let key = (p.min(q), p.max(q));
            if tagged.insert(key, e.tag).is_some() {
                return fail(format!("boundary edge {key:?} listed twice"));
            }
            // fluid on the left means the fluid triangle owns (p, q)
            match owner.get(&(p, q)) {
                Some(&t) if self.triangles[t].region == Region::Fluid => {}
                _ => return fail(format!("boundary edge ({p}, {q}) does not have the fluid on its left")),
            }
            let across = owner.get(&(q, p)).map(|&t| self.triangles[t].region);
            match (e.tag, across) {
                (BoundaryTag::Outer, None) => {}
                (BoundaryTag::Interface, Some(Region::Solid)) => {}
                _ => return fail(format!("edge ({p}, {q}) tagged {:?} has neighbour {across:?}", e.tag)),
            }
        }
        for (&(p, q), &t) in &owner {
            let here = self.triangles[t].region;
            let there = owner.get(&(q, p)).map(|&s| self.triangles[s].region);
            let needs_tag = match there {
                None => true,
                Some(r) => r != here,
            };
            if needs_tag && !tagged.contains_key(&(p.min(q), p.max(q))) {
                return fail(format!("untagged boundary or interface edge ({p}, {q})"));
            }
            if there.is_none() && here == Region::Solid {
                return fail(format!("solid edge ({p}, {q}) lies on the mesh boundary"));
            }
        }
        Ok(())
    }

    /// Serializes to the `mesh2d v1` text format.
    pub fn to_text(&self) -> String {
        let mut s = String::from("mesh2d v1\n");
        let _ = writeln!(s, "V {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e}", v[0], v[1]);
        }
        let _ = writeln!(s, "T {}", self.triangles.len());
        for t in &self.triangles {
            let tag = match t.region {
                Region::Fluid => 0,
                Region::Solid => 1,
            };
            let [a, b, c] = t.vertices;
            let _ = writeln!(s, "{a} {b} {c} {tag}");
        }
        let _ = writeln!(s, "E {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let tag = match e.tag {
                BoundaryTag::Outer => 10,
                BoundaryTag::Interface => 11,
            };
            let _ = writeln!(s, "{} {} {tag}", e.vertices[0], e.vertices[1]);
        }
        s
    }

    /// Parses the `mesh2d v1` text format. The result is not validated.
    pub fn from_text(text: &str) -> Result<Mesh> {
        let bad = |line: usize, msg: &str| Error::MeshingFailure(format!("line {line}: {msg}"));
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, "mesh2d v1")) => {}
            Some((n, _)) => return Err(bad(n, "expected header `mesh2d v1`")),
            None => return Err(bad(0, "empty mesh file")),
        }
        let mut section = |key: &str| -> Result<Section> {
            let (n, head) = lines.next().ok_or_else(|| bad(0, "unexpected end of file"))?;
            let mut it = head.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(n, &format!("expected `{key} <count>`")));
            }
            let count: usize = it
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| bad(n, "bad count"))?;
            let mut rows = Vec::with_capacity(count);
            for _ in 0..count {
                let (n, l) = lines.next().ok_or_else(|| bad(0, "unexpected end of file"))?;
                rows.push((n, l.split_whitespace().map(String::from).collect()));
            }
            Ok((n, rows))
        };
        let parse_usize = |n: usize, s: &str| s.parse::<usize>().map_err(|_| bad(n, "bad index"));

        let (_, vrows) = section("V")?;
        let mut vertices = Vec::with_capacity(vrows.len());
        for (n, r) in vrows {
            if r.len() != 2 {
                return Err(bad(n, "vertex needs 2 coordinates"));
            }
            let x: f64 = r[0].parse().map_err(|_| bad(n, "bad coordinate"))?;
            let y: f64 = r[1].parse().map_err(|_| bad(n, "bad coordinate"))?;
            vertices.push([x, y]);
        }
        let (_, trows) = section("T")?;
        let mut triangles = Vec::with_capacity(trows.len());
        for (n, r) in trows {
            if r.len() != 4 {
                return Err(bad(n, "triangle needs 3 indices and a tag"));
            }
            let region = match r[3].as_str() {
                "0" => Region::Fluid,
                "1" => Region::Solid,
                _ => return Err(bad(n, "triangle tag must be 0 or 1")),
            };
            triangles.push(Triangle {
                vertices: [parse_usize(n, &r[0])?, parse_usize(n, &r[1])?, parse_usize(n, &r[2])?],
                region,
            });
        }
        let (_, erows) = section("E")?;
        let mut boundary_edges = Vec::with_capacity(erows.len());
        for (n, r) in erows {
            if r.len() != 3 {
                return Err(bad(n, "edge needs 2 indices and a tag"));
            }
            let tag = match r[2].as_str() {
                "10" => BoundaryTag::Outer,
                "11" => BoundaryTag::Interface,
                _ => return Err(bad(n, "edge tag must be 10 or 11")),
            };
            boundary_edges.push(BoundaryEdge {
                vertices: [parse_usize(n, &r[0])?, parse_usize(n, &r[1])?],
                tag,
            });
        }
        Ok(Mesh {
            vertices,
            triangles,
            boundary_edges,
            normal_orientation: NormalConvention::OutOfFluid,
        })
    }
}
