use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{CameraModel, GroundTruthFlow};
use crate::error::{Error, Result};
use crate::pattern::PatternImage;
use crate::raster::{gaussian_blur, Grid, Image, RgbPlane, VecField};

/// Sub-samples per axis when integrating the printed pattern over a camera pixel.
const SUPERSAMPLE: usize = 4;
const INVERSION_ITERATIONS: usize = 30;
const INVERSION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    pub image: Image,
    /// False where the back-mapped source position fell outside the raster.
    pub valid: Grid<bool>,
}

/// Images the printed pattern, centered on the sensor, onto the camera raster
/// with box integration over each camera pixel. Outside the print is black.
pub fn project_pattern(pattern: &PatternImage, camera: &CameraModel) -> Result<RgbPlane> {
    camera.validate()?;
    let params = &pattern.params;
    let pat_ppm = params.resolution_px as f64 / params.print_area_mm;
    let half = params.print_area_mm / 2.0;
    let c = camera.center_px();
    let (pw, ph) = pattern.pixels.dims();
    let mut out = RgbPlane::zeros(camera.width, camera.height);
    out.data_mut()
        .par_chunks_mut(camera.width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                let mut acc = [0.0; 3];
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let cx = x as f64 - 0.5 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                        let cy = y as f64 - 0.5 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                        let mx = (cx - c[0]) / camera.px_per_mm + half;
                        let my = (cy - c[1]) / camera.px_per_mm + half;
                        let (px, py) = ((mx * pat_ppm).floor(), (my * pat_ppm).floor());
                        if px >= 0.0 && py >= 0.0 && (px as usize) < pw && (py as usize) < ph {
                            let v = pattern.pixels.get(px as usize, py as usize);
                            for k in 0..3 {
                                acc[k] += v[k];
                            }
                        }
                    }
                }
                let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
                *o = [acc[0] / n, acc[1] / n, acc[2] / n];
            }
        });
    Ok(out)
}

/// Field value and its Jacobian at `(x, y)` under bilinear interpolation with
/// replicated borders.
fn sample_with_jacobian(f: &VecField, x: f64, y: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let (w, h) = f.dims();
    let (xc, yc) = (x.clamp(0.0, w as f64 - 1.0), y.clamp(0.0, h as f64 - 1.0));
    let x0 = (xc.floor() as usize).min(w.saturating_sub(2));
    let y0 = (yc.floor() as usize).min(h.saturating_sub(2));
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (tx, ty) = (xc - x0 as f64, yc - y0 as f64);
    let (a, b, c, d) = (f.get(x0, y0), f.get(x1, y0), f.get(x0, y1), f.get(x1, y1));
    // clamped coordinates do not move the sample
    let kx = if x == xc && x1 != x0 { 1.0 } else { 0.0 };
    let ky = if y == yc && y1 != y0 { 1.0 } else { 0.0 };
    let mut u = [0.0; 2];
    let mut jac = [[0.0; 2]; 2];
    for k in 0..2 {
        let top = a[k] + (b[k] - a[k]) * tx;
        let bottom = c[k] + (d[k] - c[k]) * tx;
        u[k] = top + (bottom - top) * ty;
        jac[k][0] = kx * ((b[k] - a[k]) * (1.0 - ty) + (d[k] - c[k]) * ty);
        jac[k][1] = ky * (bottom - top);
    }
    (u, jac)
}

/// Solves `y = x + u(x)` for the reference position `x` of deformed pixel `y`.
///
/// Newton steps on the bilinear field; plain fixed-point iteration diverges
/// wherever the displacement slope exceeds one, which happens under deep
/// presses. A step that fails to shrink the residual is halved.
pub(crate) fn back_map(gt: &GroundTruthFlow, y: [f64; 2]) -> [f64; 2] {
    let f = &gt.field;
    let residual = |x: [f64; 2]| {
        let (u, jac) = sample_with_jacobian(f, x[0], x[1]);
        ([x[0] + u[0] - y[0], x[1] + u[1] - y[1]], jac)
    };
    let mut x = y;
    let (mut r, mut jac) = residual(x);
    for _ in 0..INVERSION_ITERATIONS {
        let norm = r[0].abs().max(r[1].abs());
        if norm < INVERSION_TOL {
            break;
        }
        let (j00, j01, j10, j11) = (1.0 + jac[0][0], jac[0][1], jac[1][0], 1.0 + jac[1][1]);
        let det = j00 * j11 - j01 * j10;
        let mut step = if det.abs() > 1e-12 {
            [(j11 * r[0] - j01 * r[1]) / det, (j00 * r[1] - j10 * r[0]) / det]
        } else {
            r
        };
        let mut accepted = false;
        for _ in 0..20 {
            let cand = [x[0] - step[0], x[1] - step[1]];
            let (rc, jc) = residual(cand);
            if rc[0].abs().max(rc[1].abs()) < norm {
                x = cand;
                r = rc;
                jac = jc;
                accepted = true;
                break;
            }
            step = [0.5 * step[0], 0.5 * step[1]];
        }
        if !accepted {
            break;
        }
    }
    x
}

/// Renders the deformed surface seen through `camera`.
///
/// Every output pixel is back-mapped through the ground truth and the
/// source is sampled bilinearly; blur, gain and Gaussian noise follow.
pub fn render_deformed(
    source: &RgbPlane,
    gt: &GroundTruthFlow,
    camera: &CameraModel,
    noise_seed: u64,
) -> Result<RenderedFrame> {
    camera.validate()?;
    if source.dims() != gt.field.dims() || source.dims() != (camera.width, camera.height) {
        return Err(Error::Dimension(format!(
            "source {:?}, ground truth {:?}, camera {}x{}",
            source.dims(),
            gt.field.dims(),
            camera.width,
            camera.height
        )));
    }
    let det = gt.min_jacobian_det();
    if det <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "deformation folds the surface (min det(I + grad u) = {det:.3}); use a wider contact or a shallower press"
        )));
    }
    let (w, h) = source.dims();
    let mut img = RgbPlane::zeros(w, h);
    let mut valid = Grid::new(w, h, true);
    img.data_mut()
        .par_chunks_mut(w)
        .zip(valid.data_mut().par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, vrow))| {
            for x in 0..w {
                let p = back_map(gt, [x as f64, y as f64]);
                match source.sample(p[0], p[1]) {
                    Some(v) => row[x] = v,
                    None => {
                        row[x] = source.sample_clamped(p[0], p[1]);
                        vrow[x] = false;
                    }
                }
            }
        });
    if camera.blur_sigma > 0.0 {
        img = gaussian_blur(&img, camera.blur_sigma);
    }
    if camera.gain != 1.0 {
        img = img.map(|v| [v[0] * camera.gain, v[1] * camera.gain, v[2] * camera.gain]);
    }
    if camera.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, camera.noise_sigma)
            .map_err(|e| Error::InvalidParameter(format!("noise: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        for v in img.data_mut() {
            for c in v.iter_mut() {
                *c = (*c + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
    }
    Ok(RenderedFrame {
        image: Image::Rgb(img),
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{generate_pattern, PatternParams};
    use crate::simulator::{displacement_field, translation_field, IndenterScenario};
    use rand::Rng;

    fn source(n: usize) -> (RgbPlane, CameraModel) {
        let camera = CameraModel::ideal(n, n, 10.0);
        let p = PatternParams {
            resolution_px: 4 * n,
            patch_size_mm: 0.3,
            randomness: 0.05,
            print_area_mm: n as f64 / 10.0 + 1.0,
            seed: 11,
        };
        let pat = generate_pattern(&p).unwrap();
        (project_pattern(&pat, &camera).unwrap(), camera)
    }

    #[test]
    fn zero_field_is_identity() {
        let (src, camera) = source(48);
        let gt = translation_field(48, 48, [0.0, 0.0]);
        let out = render_deformed(&src, &gt, &camera, 0).unwrap();
        assert_eq!(out.image, Image::Rgb(src));
        assert!(out.valid.data().iter().all(|&v| v));
    }

    #[test]
    fn constant_field_translates_and_flags_band() {
        let (src, camera) = source(48);
        let gt = translation_field(48, 48, [5.0, 0.0]);
        let out = render_deformed(&src, &gt, &camera, 0).unwrap();
        let Image::Rgb(img) = &out.image else { unreachable!() };
        for y in 0..48 {
            for x in 0..48 {
                if x >= 5 {
                    assert_eq!(img.get(x, y), src.get(x - 5, y));
                    assert!(out.valid.get(x, y));
                } else {
                    assert!(!out.valid.get(x, y));
                }
            }
        }
    }

    #[test]
    fn bump_pixels_match_scalar_backmap_oracle() {
        let (src, camera) = source(64);
        // centre slope above one, so plain fixed-point inversion would diverge
        let sc = IndenterScenario::sphere(4.0, [0.0, 0.0], 1.0, [0.5, 0.0]).with_peak_px(6.0, &camera);
        let gt = displacement_field(&sc, &camera).unwrap();
        let out = render_deformed(&src, &gt, &camera, 0).unwrap();
        let Image::Rgb(img) = &out.image else { unreachable!() };
        let c = camera.center_px();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = vec![(c[0].round() as usize, c[1].round() as usize)];
        pts.extend((0..10).map(|_| (rng.random_range(16..48), rng.random_range(16..48))));
        for (x, y) in pts {
            // oracle: damped fixed-point iteration run far past convergence
            let mut p = [x as f64, y as f64];
            for _ in 0..5000 {
                let u = gt.field.sample_clamped(p[0], p[1]);
                p = [
                    p[0] - 0.25 * (p[0] + u[0] - x as f64),
                    p[1] - 0.25 * (p[1] + u[1] - y as f64),
                ];
            }
            let u = gt.field.sample_clamped(p[0], p[1]);
            assert!((p[0] + u[0] - x as f64).abs() < 1e-9);
            assert!((p[1] + u[1] - y as f64).abs() < 1e-9);
            let want = src.sample(p[0], p[1]).unwrap();
            let got = img.get(x, y);
            for k in 0..3 {
                assert!((want[k] - got[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn folding_fields_are_rejected() {
        let (src, camera) = source(64);
        let sc = IndenterScenario::sphere(2.0, [0.0, 0.0], 1.0, [0.0, 0.0]).with_peak_px(5.0, &camera);
        let gt = displacement_field(&sc, &camera).unwrap();
        assert!(gt.min_jacobian_det() < 0.0);
        assert!(render_deformed(&src, &gt, &camera, 0).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let (src, mut camera) = source(32);
        camera.noise_sigma = 0.02;
        let gt = translation_field(32, 32, [0.0, 0.0]);
        let a = render_deformed(&src, &gt, &camera, 5).unwrap();
        let b = render_deformed(&src, &gt, &camera, 5).unwrap();
        let c = render_deformed(&src, &gt, &camera, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (src, camera) = source(32);
        let gt = translation_field(31, 32, [0.0, 0.0]);
        assert!(render_deformed(&src, &gt, &camera, 0).is_err());
    }
}
