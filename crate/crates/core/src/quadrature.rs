//! Reference-element quadrature rules.

/// Point on the reference triangle in barycentric coordinates, with a weight
/// normalized so that the weights sum to one.
#[derive(Clone, Copy, Debug)]
pub struct TriPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

const A1: f64 = 0.445_948_490_915_965;
const B1: f64 = 0.108_103_018_168_070;
const W1: f64 = 0.223_381_589_678_011;
const A2: f64 = 0.091_576_213_509_771;
const B2: f64 = 0.816_847_572_980_459;
const W2: f64 = 0.109_951_743_655_322;

/// Six-point symmetric rule, exact for polynomials of degree 4.
pub const TRI_DEG4: [TriPoint; 6] = [
    TriPoint {
        bary: [A1, A1, B1],
        weight: W1,
    },
    TriPoint {
        bary: [A1, B1, A1],
        weight: W1,
    },
    TriPoint {
        bary: [B1, A1, A1],
        weight: W1,
    },
    TriPoint {
        bary: [A2, A2, B2],
        weight: W2,
    },
    TriPoint {
        bary: [A2, B2, A2],
        weight: W2,
    },
    TriPoint {
        bary: [B2, A2, A2],
        weight: W2,
    },
];

/// Gauss-Legendre points on [0, 1] (3 points, exact to degree 5), as
/// `(t, weight)` with weights summing to one.
pub const EDGE_GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];
