//! Local P2/P1 shape functions on a straight triangle.
//!
//! Local node order: the three vertices, then the midpoints of edges
//! (0,1), (1,2), (2,0).

pub const EDGE_LOCAL: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

#[derive(Clone, Copy, Debug)]
pub struct ElementGeom {
    pub points: [[f64; 2]; 3],
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeom {
    pub fn new(points: [[f64; 2]; 3]) -> ElementGeom {
        let [p0, p1, p2] = points;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]);
        let grad_lambda = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        ElementGeom {
            points,
            area: 0.5 * det,
            grad_lambda,
        }
    }

    pub fn point(&self, l: [f64; 3]) -> [f64; 2] {
        let p = &self.points;
        [
            l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
            l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
        ]
    }

    pub fn p2_grads(&self, l: [f64; 3]) -> [[f64; 2]; 6] {
        let g = &self.grad_lambda;
        let mut out = [[0.0; 2]; 6];
        for i in 0..3 {
            let s = 4.0 * l[i] - 1.0;
            out[i] = [s * g[i][0], s * g[i][1]];
        }
        for (e, &[i, j]) in EDGE_LOCAL.iter().enumerate() {
            out[3 + e] = [
                4.0 * (l[j] * g[i][0] + l[i] * g[j][0]),
                4.0 * (l[j] * g[i][1] + l[i] * g[j][1]),
            ];
        }
        out
    }
}

pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// P2 trace on an edge parametrized by t in [0, 1]: (start, end, midpoint).
pub fn edge_values(t: f64) -> [f64; 3] {
    [(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)]
}
