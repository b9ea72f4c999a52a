//! Free-space Poisson solves by zero-padded spectral convolution with the
//! 2D Green's function `G(r) = ln(r) / 2π`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::raster::Plane;

/// Mean of `ln|x|` over the unit cell centered at the origin:
/// `π/4 − 3/2 − ln(2)/2`.
const LOG_CELL_MEAN: f64 = -1.061_175_426_882_524_3;

/// Solver for `∇²φ = f` on an unbounded domain where `f` vanishes outside
/// a fixed `width × height` raster (unit grid spacing).
pub struct FreeSpacePoisson {
    width: usize,
    height: usize,
    pw: usize,
    ph: usize,
    kernel_hat: Vec<Complex<f64>>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl FreeSpacePoisson {
    pub fn new(width: usize, height: usize) -> Self {
        let (pw, ph) = (2 * width, 2 * height);
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(pw);
        let row_inv = planner.plan_fft_inverse(pw);
        let col_fwd = planner.plan_fft_forward(ph);
        let col_inv = planner.plan_fft_inverse(ph);
        let mut kernel: Vec<Complex<f64>> = (0..pw * ph)
            .map(|i| {
                let (x, y) = (i % pw, i / pw);
                let dx = if x < width { x as f64 } else { x as f64 - pw as f64 };
                let dy = if y < height { y as f64 } else { y as f64 - ph as f64 };
                let g = if x == 0 && y == 0 {
                    LOG_CELL_MEAN
                } else {
                    dx.hypot(dy).ln()
                };
                Complex::new(g / (2.0 * PI), 0.0)
            })
            .collect();
        let mut solver = Self {
            width,
            height,
            pw,
            ph,
            kernel_hat: Vec::new(),
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
        };
        solver.fft2(&mut kernel, false);
        solver.kernel_hat = kernel;
        solver
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn fft2(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let (pw, ph) = (self.pw, self.ph);
        let (rf, cf) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        buf.par_chunks_mut(pw).for_each(|row| rf.process(row));
        // columns through a transposed copy
        let mut t = vec![Complex::new(0.0, 0.0); pw * ph];
        t.par_chunks_mut(ph).enumerate().for_each(|(x, col)| {
            for (y, c) in col.iter_mut().enumerate() {
                *c = buf[y * pw + x];
            }
            cf.process(col);
        });
        buf.par_chunks_mut(pw).enumerate().for_each(|(y, row)| {
            for (x, v) in row.iter_mut().enumerate() {
                *v = t[x * ph + y];
            }
        });
    }

    /// Solves two right-hand sides in one complex transform: the kernel is
    /// real and even, so real and imaginary parts do not mix.
    pub fn solve_pair(&self, a: &Plane, b: &Plane) -> (Plane, Plane) {
        assert_eq!(a.dims(), (self.width, self.height));
        assert_eq!(b.dims(), (self.width, self.height));
        let (pw, ph) = (self.pw, self.ph);
        let mut buf = vec![Complex::new(0.0, 0.0); pw * ph];
        for y in 0..self.height {
            for x in 0..self.width {
                buf[y * pw + x] = Complex::new(a.get(x, y), b.get(x, y));
            }
        }
        self.fft2(&mut buf, false);
        buf.par_iter_mut()
            .zip(self.kernel_hat.par_iter())
            .for_each(|(v, k)| *v *= k);
        self.fft2(&mut buf, true);
        let norm = 1.0 / (pw * ph) as f64;
        let pa = Plane::from_fn(self.width, self.height, |x, y| buf[y * pw + x].re * norm);
        let pb = Plane::from_fn(self.width, self.height, |x, y| buf[y * pw + x].im * norm);
        (pa, pb)
    }

    pub fn solve(&self, f: &Plane) -> Plane {
        self.solve_pair(f, &Plane::zeros(self.width, self.height)).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_mean_constant() {
        let v = PI / 4.0 - 1.5 - 2f64.ln() / 2.0;
        assert!((v - LOG_CELL_MEAN).abs() < 1e-15);
    }

    #[test]
    fn spectral_convolution_matches_direct_sum() {
        let (w, h) = (7, 5);
        let f = Plane::from_fn(w, h, |x, y| ((x * 3 + y * 5) % 7) as f64 - 3.0);
        let phi = FreeSpacePoisson::new(w, h).solve(&f);
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for yy in 0..h {
                    for xx in 0..w {
                        let r = (x as f64 - xx as f64).hypot(y as f64 - yy as f64);
                        let g = if r == 0.0 { LOG_CELL_MEAN } else { r.ln() };
                        s += g / (2.0 * PI) * f.get(xx, yy);
                    }
                }
                assert!((phi.get(x, y) - s).abs() < 1e-10, "{} vs {}", phi.get(x, y), s);
            }
        }
    }

    #[test]
    fn point_source_laplacian_is_local() {
        let (w, h) = (33, 33);
        let mut f = Plane::zeros(w, h);
        f.set(16, 16, 1.0);
        let phi = FreeSpacePoisson::new(w, h).solve(&f);
        let lap = |x: usize, y: usize| {
            phi.get(x + 1, y) + phi.get(x - 1, y) + phi.get(x, y + 1) + phi.get(x, y - 1) - 4.0 * phi.get(x, y)
        };
        // away from the source the discrete Laplacian of ln r nearly vanishes
        assert!(lap(24, 10).abs() < 1e-3);
        // and the enclosed flux is one
        let total: f64 = (1..32).flat_map(|y| (1..32).map(move |x| (x, y))).map(|(x, y)| lap(x, y)).sum();
        assert!((total - 1.0).abs() < 1e-2, "{total}");
    }
}
