//! Two-frame motion estimation from local quadratic polynomial expansion.
//!
//! Each image is approximated around every pixel by
//! `f(p) ≈ pᵀ A p + bᵀ p + c` using a Gaussian-weighted least-squares fit.
//! A displacement `d` between the two frames shows up as
//! `b₂ = b₁ − 2 A d`, which is solved over a box window and refined
//! coarse-to-fine.

use nalgebra::{Matrix6, Vector6};
use rayon::prelude::*;

use super::{FlowField, FlowParams};
use crate::error::{Error, Result};
use crate::raster::{box_mean, gaussian_blur, resize_bilinear, Grid, Image, Plane, VecField};

/// Expansion coefficients `[b_x, b_y, a_xx, a_yy, a_xy]` with
/// `f ≈ a_xx x² + a_yy y² + a_xy xy + b_x x + b_y y + c`.
pub type PolyCoeffs = [f64; 5];

/// Per-pixel quantities accumulated over the window:
/// `[AᵀA₁₁, AᵀA₁₂, AᵀA₂₂, (AᵀΔb)₁, (AᵀΔb)₂]`.
type NormalEq = [f64; 5];

/// Intensities are scaled to 8-bit range internally so the regularizer below
/// has the same meaning as in common implementations.
const INTENSITY_SCALE: f64 = 255.0;
const DET_EPS: f64 = 1e-3;
/// Blurred normal-equation determinant below which a pixel is untextured.
const MIN_TEXTURE_DET: f64 = 1e-2;
const MIN_LEVEL_SIDE: usize = 16;
const BORDER_WEIGHTS: [f64; 5] = [0.14, 0.14, 0.4472, 0.8, 1.0];

/// Polynomial expansion of `img` over a `(2·radius+1)²` Gaussian neighborhood.
pub fn poly_expansion(img: &Plane, neighborhood: usize, sigma: f64) -> Grid<PolyCoeffs> {
    let n = (neighborhood / 2) as isize;
    let g: Vec<f64> = {
        let k: Vec<f64> = (-n..=n)
            .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    };

    // Gram matrix of the basis [1, x, y, x², y², xy] under the applicability
    let mut gram = Matrix6::<f64>::zeros();
    for (j, gy) in (-n..=n).zip(&g) {
        for (i, gx) in (-n..=n).zip(&g) {
            let (x, y) = (i as f64, j as f64);
            let b = Vector6::new(1.0, x, y, x * x, y * y, x * y);
            gram += b * b.transpose() * (gx * gy);
        }
    }
    let inv = gram
        .try_inverse()
        .expect("polynomial basis Gram matrix is positive definite");

    let (w, h) = img.dims();
    // row pass: Σ g f, Σ i g f, Σ i² g f
    let mut rows = Grid::<[f64; 3]>::zeros(w, h);
    rows.data_mut()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, out)| {
            for (x, o) in out.iter_mut().enumerate() {
                let mut acc = [0.0; 3];
                for (k, &gk) in g.iter().enumerate() {
                    let i = k as isize - n;
                    let v = img.get_clamped(x as isize + i, y as isize) * gk;
                    let fi = i as f64;
                    acc[0] += v;
                    acc[1] += v * fi;
                    acc[2] += v * fi * fi;
                }
                *o = acc;
            }
        });
    let mut out = Grid::<PolyCoeffs>::zeros(w, h);
    out.data_mut()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, line)| {
            for (x, o) in line.iter_mut().enumerate() {
                let mut m = Vector6::<f64>::zeros();
                for (k, &gk) in g.iter().enumerate() {
                    let j = k as isize - n;
                    let r = rows.get_clamped(x as isize, y as isize + j);
                    let fj = j as f64;
                    m[0] += gk * r[0];
                    m[1] += gk * r[1];
                    m[2] += gk * fj * r[0];
                    m[3] += gk * r[2];
                    m[4] += gk * fj * fj * r[0];
                    m[5] += gk * fj * r[1];
                }
                let c = inv * m;
                *o = [c[1], c[2], c[3], c[4], c[5]];
            }
        });
    out
}

fn border_weight(i: usize, len: usize) -> f64 {
    let nb = BORDER_WEIGHTS.len();
    let lo = if i < nb { BORDER_WEIGHTS[i] } else { 1.0 };
    let hi = if len - 1 - i < nb {
        BORDER_WEIGHTS[len - 1 - i]
    } else {
        1.0
    };
    lo * hi
}

fn update_matrices(r0: &Grid<PolyCoeffs>, r1: &Grid<PolyCoeffs>, flow: &VecField) -> Grid<NormalEq> {
    let (w, h) = r0.dims();
    let mut m = Grid::<NormalEq>::zeros(w, h);
    m.data_mut()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, line)| {
            let wy = border_weight(y, h);
            for (x, o) in line.iter_mut().enumerate() {
                let d = flow.get(x, y);
                let Some(q) = r1.sample(x as f64 + d[0], y as f64 + d[1]) else {
                    *o = [0.0; 5];
                    continue;
                };
                let p = r0.get(x, y);
                let s = wy * border_weight(x, w);
                let a11 = 0.5 * (p[2] + q[2]) * s;
                let a22 = 0.5 * (p[3] + q[3]) * s;
                let a12 = 0.25 * (p[4] + q[4]) * s;
                let db1 = 0.5 * (p[0] - q[0]) * s + a11 * d[0] + a12 * d[1];
                let db2 = 0.5 * (p[1] - q[1]) * s + a12 * d[0] + a22 * d[1];
                *o = [
                    a11 * a11 + a12 * a12,
                    a12 * (a11 + a22),
                    a22 * a22 + a12 * a12,
                    a11 * db1 + a12 * db2,
                    a12 * db1 + a22 * db2,
                ];
            }
        });
    m
}

fn solve_flow(blurred: &Grid<NormalEq>) -> (VecField, Plane) {
    let (w, h) = blurred.dims();
    let mut flow = VecField::zeros(w, h);
    let mut det = Plane::zeros(w, h);
    flow.data_mut()
        .par_iter_mut()
        .zip(det.data_mut().par_iter_mut())
        .zip(blurred.data().par_iter())
        .for_each(|((f, dt), g)| {
            let dd = g[0] * g[2] - g[1] * g[1];
            let idet = 1.0 / (dd + DET_EPS);
            *f = [(g[2] * g[3] - g[1] * g[4]) * idet, (g[0] * g[4] - g[1] * g[3]) * idet];
            *dt = dd;
        });
    (flow, det)
}

fn luma_scaled(img: &Image) -> Plane {
    img.luma().map(|v| v * INTENSITY_SCALE)
}

/// Dense flow from `reference` to `query`.
pub fn dense_flow(reference: &Image, query: &Image, params: &FlowParams) -> Result<FlowField> {
    dense_flow_with_initial(reference, query, params, None)
}

/// Dense flow seeded with an initial estimate at full resolution.
pub fn dense_flow_with_initial(
    reference: &Image,
    query: &Image,
    params: &FlowParams,
    initial: Option<&VecField>,
) -> Result<FlowField> {
    params.validate()?;
    if reference.dims() != query.dims() {
        return Err(Error::Dimension(format!(
            "reference is {:?}, query is {:?}",
            reference.dims(),
            query.dims()
        )));
    }
    let (w, h) = reference.dims();
    if let Some(init) = initial {
        if init.dims() != (w, h) {
            return Err(Error::Dimension("initial flow size differs from frames".into()));
        }
    }
    let i0 = luma_scaled(reference);
    let i1 = luma_scaled(query);
    let (lo0, hi0) = i0.min_max();
    let (lo1, hi1) = i1.min_max();
    if hi0 - lo0 < 1e-9 || hi1 - lo1 < 1e-9 {
        return Ok(FlowField {
            u: VecField::zeros(w, h),
            valid: Grid::new(w, h, false),
        });
    }

    // level sizes, finest first
    let mut levels = Vec::new();
    let mut scale = 1.0;
    for _ in 0..params.pyramid_levels {
        let lw = (w as f64 * scale).round() as usize;
        let lh = (h as f64 * scale).round() as usize;
        if !levels.is_empty() && (lw < MIN_LEVEL_SIDE || lh < MIN_LEVEL_SIDE) {
            break;
        }
        levels.push((scale, lw, lh));
        scale *= params.pyramid_scale;
    }

    let mut flow: Option<VecField> = None;
    let mut last_det = Plane::zeros(w, h);
    for (k, &(scale, lw, lh)) in levels.iter().enumerate().rev() {
        let (a, b) = if k == 0 {
            (i0.clone(), i1.clone())
        } else {
            let sigma = (1.0 / scale - 1.0) * 0.5;
            (
                resize_bilinear(&gaussian_blur(&i0, sigma), lw, lh),
                resize_bilinear(&gaussian_blur(&i1, sigma), lw, lh),
            )
        };
        let mut f = match flow.take() {
            Some(prev) => {
                let (pw, ph) = prev.dims();
                let (sx, sy) = (lw as f64 / pw as f64, lh as f64 / ph as f64);
                resize_bilinear(&prev, lw, lh).map(|v| [v[0] * sx, v[1] * sy])
            }
            None => match initial {
                Some(init) => resize_bilinear(init, lw, lh).map(|v| [v[0] * scale, v[1] * scale]),
                None => VecField::zeros(lw, lh),
            },
        };
        let r0 = poly_expansion(&a, params.poly_neighborhood, params.poly_sigma);
        let r1 = poly_expansion(&b, params.poly_neighborhood, params.poly_sigma);
        let mut m = update_matrices(&r0, &r1, &f);
        for it in 0..params.iterations_per_level {
            let blurred = box_mean(&m, params.window_size / 2);
            let (nf, det) = solve_flow(&blurred);
            f = nf;
            last_det = det;
            if it + 1 < params.iterations_per_level {
                m = update_matrices(&r0, &r1, &f);
            }
        }
        flow = Some(f);
    }

    let u = flow.expect("at least one pyramid level");
    let valid = Grid::from_fn(w, h, |x, y| {
        let d = u.get(x, y);
        let (tx, ty) = (x as f64 + d[0], y as f64 + d[1]);
        d[0].is_finite()
            && d[1].is_finite()
            && tx >= 0.0
            && ty >= 0.0
            && tx <= (w - 1) as f64
            && ty <= (h - 1) as f64
            && last_det.get(x, y) > MIN_TEXTURE_DET
    });
    Ok(FlowField { u, valid })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize) -> Plane {
        Plane::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (0.31 * x + 0.17 * y).sin() + 0.2 * (0.23 * x - 0.41 * y).cos()
        })
    }

    #[test]
    fn expansion_recovers_quadratic_exactly() {
        // f = 2x² − y² + 0.5xy + 3x − 4y + 1 in global coordinates
        let f = Plane::from_fn(20, 20, |x, y| {
            let (x, y) = (x as f64, y as f64);
            2.0 * x * x - y * y + 0.5 * x * y + 3.0 * x - 4.0 * y + 1.0
        });
        let e = poly_expansion(&f, 7, 1.5);
        let (x, y) = (10.0, 9.0);
        let c = e.get(10, 9);
        // local gradient at (x, y)
        assert!((c[0] - (4.0 * x + 0.5 * y + 3.0)).abs() < 1e-9);
        assert!((c[1] - (-2.0 * y + 0.5 * x - 4.0)).abs() < 1e-9);
        assert!((c[2] - 2.0).abs() < 1e-9);
        assert!((c[3] + 1.0).abs() < 1e-9);
        assert!((c[4] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn identical_frames_give_exact_zero() {
        let t = Image::Gray(texture(64, 48));
        let f = dense_flow(&t, &t, &FlowParams::default()).unwrap();
        assert!(f.u.data().iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn constant_frames_are_degenerate() {
        let c = Image::Gray(Plane::new(40, 30, 0.4));
        let f = dense_flow(&c, &c, &FlowParams::default()).unwrap();
        assert_eq!(f.valid_count(), 0);
        assert!(f.u.data().iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn rejects_mismatched_frames_and_bad_params() {
        let a = Image::Gray(texture(32, 32));
        let b = Image::Gray(texture(32, 31));
        assert!(matches!(
            dense_flow(&a, &b, &FlowParams::default()),
            Err(Error::Dimension(_))
        ));
        let p = FlowParams {
            window_size: 20,
            ..FlowParams::default()
        };
        assert!(dense_flow(&a, &a, &p).is_err());
    }

    #[test]
    fn smooth_subpixel_shift_is_recovered() {
        let (w, h) = (96, 80);
        let f = |x: f64, y: f64| 0.5 + 0.2 * (0.31 * x + 0.17 * y).sin() + 0.2 * (0.23 * x - 0.41 * y).cos();
        let a = Plane::from_fn(w, h, |x, y| f(x as f64, y as f64));
        // query(x + s) = reference(x)
        let b = Plane::from_fn(w, h, |x, y| f(x as f64 - 1.5, y as f64 + 0.75));
        let flow = dense_flow(&Image::Gray(a), &Image::Gray(b), &FlowParams::default()).unwrap();
        let mut err = 0.0;
        let mut n = 0.0;
        for y in 15..h - 15 {
            for x in 15..w - 15 {
                let d = flow.u.get(x, y);
                err += (d[0] - 1.5).hypot(d[1] + 0.75);
                n += 1.0;
            }
        }
        assert!(err / n < 0.05, "mean error {}", err / n);
    }
}
