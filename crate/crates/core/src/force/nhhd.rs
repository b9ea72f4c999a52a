use super::poisson::FreeSpacePoisson;
use crate::raster::{Plane, VecField};

/// Curl-free, divergence-free and harmonic parts of a displacement field.
#[derive(Clone, Debug, PartialEq)]
pub struct NHHDComponents {
    /// The decomposed field itself.
    pub v: VecField,
    /// Curl-free part `∇φ`.
    pub d: VecField,
    /// Divergence-free part `(∂ψ/∂y, −∂ψ/∂x)`.
    pub r: VecField,
    /// Remainder `v − d − r`.
    pub h: VecField,
}

impl NHHDComponents {
    pub fn dims(&self) -> (usize, usize) {
        self.v.dims()
    }
}

/// Derivative along one axis: central in the interior, one-sided at borders.
#[inline]
fn diff(at: impl Fn(usize) -> f64, i: usize, n: usize) -> f64 {
    if n < 2 {
        0.0
    } else if i == 0 {
        at(1) - at(0)
    } else if i == n - 1 {
        at(n - 1) - at(n - 2)
    } else {
        0.5 * (at(i + 1) - at(i - 1))
    }
}

pub fn d_dx(p: &Plane) -> Plane {
    let w = p.width();
    Plane::from_fn(w, p.height(), |x, y| diff(|i| p.get(i, y), x, w))
}

pub fn d_dy(p: &Plane) -> Plane {
    let h = p.height();
    Plane::from_fn(p.width(), h, |x, y| diff(|j| p.get(x, j), y, h))
}

pub fn divergence(v: &VecField) -> Plane {
    let (w, h) = v.dims();
    Plane::from_fn(w, h, |x, y| {
        diff(|i| v.get(i, y)[0], x, w) + diff(|j| v.get(x, j)[1], y, h)
    })
}

/// Scalar curl `∂v/∂x − ∂u/∂y`.
pub fn curl(v: &VecField) -> Plane {
    let (w, h) = v.dims();
    Plane::from_fn(w, h, |x, y| {
        diff(|i| v.get(i, y)[1], x, w) - diff(|j| v.get(x, j)[0], y, h)
    })
}

pub fn gradient(p: &Plane) -> VecField {
    let (gx, gy) = (d_dx(p), d_dy(p));
    VecField::from_fn(p.width(), p.height(), |x, y| [gx.get(x, y), gy.get(x, y)])
}

/// Natural Helmholtz–Hodge decomposition with free-space potentials.
pub fn nhhd(v: &VecField) -> NHHDComponents {
    let (w, h) = v.dims();
    nhhd_with(&FreeSpacePoisson::new(w, h), v)
}

/// As [`nhhd`], reusing a solver built for the field's raster.
pub fn nhhd_with(solver: &FreeSpacePoisson, v: &VecField) -> NHHDComponents {
    assert_eq!(solver.dims(), v.dims(), "solver raster must match the field");
    let (w, hgt) = v.dims();
    let div = divergence(v);
    let neg_curl = curl(v).map(|c| -c);
    let (phi, psi) = solver.solve_pair(&div, &neg_curl);
    let d = gradient(&phi);
    let (psi_x, psi_y) = (d_dx(&psi), d_dy(&psi));
    let r = VecField::from_fn(w, hgt, |x, y| [psi_y.get(x, y), -psi_x.get(x, y)]);
    let h = VecField::from_fn(w, hgt, |x, y| {
        let (a, b, c) = (v.get(x, y), d.get(x, y), r.get(x, y));
        [a[0] - b[0] - c[0], a[1] - b[1] - c[1]]
    });
    NHHDComponents { v: v.clone(), d, r, h }
}

/// Pre-calibration totals: `Σ‖d‖` as the normal proxy and `Σ v` as the shear proxy.
pub fn quick_total_force(c: &NHHDComponents) -> (f64, [f64; 2]) {
    let normal = c.d.data().iter().map(|e| e[0].hypot(e[1])).sum();
    let shear = c
        .v
        .data()
        .iter()
        .fold([0.0, 0.0], |acc, e| [acc[0] + e[0], acc[1] + e[1]]);
    (normal, shear)
}
