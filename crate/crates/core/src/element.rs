//! Bilinear (Q1) reference element on the unit square with a 2×2 Gauss rule.
//!
//! Local vertex order is counter-clockwise from the lower left:
//! `(0,0), (1,0), (1,1), (0,1)`.

use crate::scalar::Real;

const VERTS: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

/// Gauss points on `[0,1]²` and their weights (summing to 1).
pub fn gauss_points() -> [((f64, f64), f64); 4] {
    let a = 0.5 - 0.5 / 3f64.sqrt();
    let b = 0.5 + 0.5 / 3f64.sqrt();
    [((a, a), 0.25), ((b, a), 0.25), ((b, b), 0.25), ((a, b), 0.25)]
}

/// Two-point Gauss rule on `[0,1]`.
pub fn gauss_points_1d() -> [(f64, f64); 2] {
    [(0.5 - 0.5 / 3f64.sqrt(), 0.5), (0.5 + 0.5 / 3f64.sqrt(), 0.5)]
}

pub fn shape(xi: f64, eta: f64) -> [f64; 4] {
    VERTS.map(|(a, b)| {
        let sx = if a == 0.0 { 1.0 - xi } else { xi };
        let sy = if b == 0.0 { 1.0 - eta } else { eta };
        sx * sy
    })
}

/// Reference gradients `(dN/dxi, dN/deta)`.
pub fn shape_grad(xi: f64, eta: f64) -> [(f64, f64); 4] {
    VERTS.map(|(a, b)| {
        let (sx, dx) = if a == 0.0 { (1.0 - xi, -1.0) } else { (xi, 1.0) };
        let (sy, dy) = if b == 0.0 { (1.0 - eta, -1.0) } else { (eta, 1.0) };
        (dx * sy, sx * dy)
    })
}

/// Per-cell quadrature tables for a cell of size `hx × hy`, converted to `T`.
#[derive(Clone, Debug)]
pub struct CellQuadrature<T> {
    /// Shape values at each Gauss point.
    pub n: [[T; 4]; 4],
    /// Physical shape gradients at each Gauss point.
    pub dn: [[(T, T); 4]; 4],
    /// Weights times the cell area.
    pub w: [T; 4],
}

impl<T: Real> CellQuadrature<T> {
    pub fn new(hx: f64, hy: f64) -> Self {
        let mut n = [[T::zero(); 4]; 4];
        let mut dn = [[(T::zero(), T::zero()); 4]; 4];
        let mut w = [T::zero(); 4];
        for (q, ((xi, eta), wq)) in gauss_points().into_iter().enumerate() {
            n[q] = shape(xi, eta).map(T::lit);
            dn[q] = shape_grad(xi, eta).map(|(gx, gy)| (T::lit(gx / hx), T::lit(gy / hy)));
            w[q] = T::lit(wq * hx * hy);
        }
        Self { n, dn, w }
    }

    /// Interpolated value at Gauss point `q`.
    #[inline]
    pub fn value(&self, q: usize, v: &[T; 4]) -> T {
        (0..4).fold(T::zero(), |acc, a| acc + self.n[q][a] * v[a])
    }

    #[inline]
    pub fn gradient(&self, q: usize, v: &[T; 4]) -> (T, T) {
        (0..4).fold((T::zero(), T::zero()), |(gx, gy), a| {
            (gx + self.dn[q][a].0 * v[a], gy + self.dn[q][a].1 * v[a])
        })
    }
}
